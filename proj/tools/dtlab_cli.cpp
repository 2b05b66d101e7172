// dtlab: one subcommand per experiment kind, plus `report` to summarize
// previously written reports.

#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dtlab/dtlab.h"

namespace {

struct RunOptions {
    std::string config;
    std::vector<std::string> overrides;
    std::string out;
    bool print_config = false;
};

std::string quoted(const std::string& s) {
    std::string q = "\"";
    for (char c : s) {
        if (c == '"' || c == '\\') q += '\\';
        q += c;
    }
    return q + "\"";
}

int fail(dtlab_status st, const std::string& context) {
    std::fprintf(stderr, "dtlab: %s: %s: %s\n", context.c_str(), dtlab_status_name(st), dtlab_last_error());
    return st == DTLAB_ERR_CONFIG ? 2 : 1;
}

int run_kind(const std::string& kind, const RunOptions& opt) {
    dtlab_config* cfg = nullptr;
    dtlab_status st = opt.config.empty() ? dtlab_config_parse("{\"schema_version\": 1}", &cfg)
                                         : dtlab_config_load(opt.config.c_str(), &cfg);
    if (st != DTLAB_OK) return fail(st, "loading config");

    std::vector<std::string> sets;
    sets.push_back("experiment=" + quoted(kind));
    for (const auto& o : opt.overrides) sets.push_back(o);
    if (!opt.out.empty()) sets.push_back("output.dir=" + quoted(opt.out));
    for (const auto& s : sets) {
        st = dtlab_config_set(cfg, s.c_str());
        if (st != DTLAB_OK) {
            dtlab_config_free(cfg);
            return fail(st, "applying '" + s + "'");
        }
    }
    if (opt.print_config) {
        const char* text = nullptr;
        dtlab_config_json(cfg, &text);
        std::printf("%s\n", text);
        dtlab_config_free(cfg);
        return 0;
    }

    const char* hash = nullptr;
    dtlab_config_hash(cfg, &hash);
    std::fprintf(stderr, "dtlab: running %s (config %s)\n", kind.c_str(), hash);
    dtlab_report* rep = nullptr;
    st = dtlab_run(cfg, &rep);
    dtlab_config_free(cfg);
    if (st != DTLAB_OK) return fail(st, kind);
    const char* summary = nullptr;
    dtlab_report_summary(rep, &summary);
    std::printf("%s", summary);
    dtlab_report_free(rep);
    return 0;
}

int summarize(const std::vector<std::string>& paths) {
    int rc = 0;
    for (const auto& p : paths) {
        std::filesystem::path file = p;
        if (std::filesystem::is_directory(file)) file /= "report.json";
        dtlab_report* rep = nullptr;
        const dtlab_status st = dtlab_report_load(file.string().c_str(), &rep);
        if (st != DTLAB_OK) {
            rc = fail(st, file.string());
            continue;
        }
        const char* summary = nullptr;
        dtlab_report_summary(rep, &summary);
        std::printf("== %s\n%s", file.string().c_str(), summary);
        dtlab_report_free(rep);
    }
    return rc;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Defense-transformer lab: desk-scale attack, defense and vulnerability experiments"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(dtlab_version()));

    const std::vector<std::pair<std::string, std::string>> kinds = {
        {"train-classifier", "train the classifier and save classifier.ckpt"},
        {"gen-attacks", "generate train/test adversarial sets"},
        {"train-defense", "train the defense transformer against the frozen classifier"},
        {"eval", "natural and defended accuracy on the test attack set"},
        {"affine-search", "random affine search at several budgets"},
        {"magnitude-sweep", "rotation / translation / scale sweeps on fooled samples"},
        {"bound-check", "randomized single-layer bound checks"},
        {"eps-sweep", "defended vs natural accuracy across PGD budgets"},
        {"transfer-eval", "defense trained on classifier A, attacks crafted on classifier B"},
        {"lambda-sweep", "defense weight-decay sweep"},
        {"whitebox-eval", "PGD through classifier and defense together"},
    };

    RunOptions opt;
    std::string chosen;
    for (const auto& [name, help] : kinds) {
        CLI::App* sub = app.add_subcommand(name, help);
        sub->add_option("--config", opt.config, "JSON experiment config")->check(CLI::ExistingFile);
        sub->add_option("--set", opt.overrides, "override, e.g. train.epochs=3 (repeatable)");
        sub->add_option("--out", opt.out, "output directory (output.dir)");
        sub->add_flag("--print-config", opt.print_config, "print the effective config and exit");
        sub->callback([&chosen, n = name] { chosen = n; });
    }
    std::vector<std::string> report_paths;
    CLI::App* rep = app.add_subcommand("report", "summarize report.json files or output directories");
    rep->add_option("paths", report_paths, "report files or directories")->required();
    rep->callback([&chosen] { chosen = "report"; });

    CLI11_PARSE(app, argc, argv);
    if (chosen == "report") return summarize(report_paths);
    return run_kind(chosen, opt);
}
