#include "dtlab/experiment.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <optional>
#include <sstream>

#include "dtlab/errors.hpp"
#include "dtlab/rng.hpp"

namespace dtlab {

using nlohmann::json;
namespace fs = std::filesystem;

std::string format_number(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

json Report::to_json() const {
    json phases = json::array();
    for (const auto& t : timing) phases.push_back(t.first);
    return {
        {"schema_version", kConfigSchemaVersion},
        {"experiment", experiment},
        {"config_hash", config_hash},
        {"seeds", seeds},
        {"accuracy", accuracy},
        {"metrics", metrics},
        {"artifacts", artifacts},
        {"timing", {{"file", "timing.json"}, {"phases", phases}}},
    };
}

std::string Report::csv() const {
    std::string out = "series,x,y\n";
    for (const auto& r : curves) out += r.series + "," + format_number(r.x) + "," + format_number(r.y) + "\n";
    return out;
}

std::string Report::timing_json() const {
    json t = json::object();
    for (const auto& [phase, secs] : timing) t[phase] = secs;
    return json{{"config_hash", config_hash}, {"seconds", t}}.dump(2) + "\n";
}

EmittedFiles emit_report(const Report& report, const fs::path& dir) {
    EmittedFiles f{dir / "report.json", dir / "curves.csv", dir / "timing.json"};
    write_file(f.report, report.to_json().dump(2) + "\n");
    write_file(f.curves, report.csv());
    write_file(f.timing, report.timing_json());
    return f;
}

// ---- model persistence ----

namespace {

json shape_json(const Shape& s) { return json(std::vector<std::size_t>(s.begin(), s.end())); }

json parse_meta(const Checkpoint& ckpt) {
    json meta = json::parse(ckpt.metadata, nullptr, false);
    if (meta.is_discarded() || !meta.is_object()) throw FormatError("checkpoint: metadata is not a JSON object");
    return meta;
}

void expect_model(const json& meta, const std::string& model) {
    if (!meta.contains("model") || meta.at("model") != model) {
        throw FormatError("checkpoint: expected a '" + model + "' checkpoint, found '" +
                          (meta.contains("model") ? meta.at("model").dump() : std::string("none")) + "'");
    }
}

void copy_params(ParamSet& dst, const Checkpoint& ckpt) {
    for (std::size_t i = 0; i < dst.size(); ++i) {
        const std::string& name = dst.name(i);
        if (!ckpt.contains(name)) throw FormatError("checkpoint: missing entry '" + name + "'");
        const Tensor& src = ckpt.at(name);
        if (src.shape() != dst[i].shape()) {
            throw FormatError("checkpoint: entry '" + name + "' has shape " + shape_string(src.shape()) + ", expected " +
                              shape_string(dst[i].shape()));
        }
        std::copy(src.data().begin(), src.data().end(), dst[i].data().begin());
    }
    std::size_t expected = dst.size();
    if (ckpt.entries.size() != expected) throw FormatError("checkpoint: unexpected extra entries");
}

json with_fields(const json& meta, const json& fields) {
    json out = meta.is_object() ? meta : json::object();
    for (auto it = fields.begin(); it != fields.end(); ++it) out[it.key()] = it.value();
    return out;
}

}  // namespace

Checkpoint classifier_to_checkpoint(const ClassifierModel& h, const json& meta) {
    Checkpoint c;
    for (std::size_t i = 0; i < h.params.size(); ++i) c.add(h.params.name(i), h.params[i]);
    c.metadata = with_fields(meta, {{"model", "classifier"},
                                    {"arch", h.arch},
                                    {"input_shape", shape_json(h.input_shape)},
                                    {"num_classes", h.num_classes}})
                     .dump();
    return c;
}

ClassifierModel classifier_from_checkpoint(const Checkpoint& ckpt) {
    const json meta = parse_meta(ckpt);
    expect_model(meta, "classifier");
    const std::string arch = meta.at("arch").get<std::string>();
    const Shape input = meta.at("input_shape").get<std::vector<std::size_t>>();
    const std::size_t classes = meta.at("num_classes").get<std::size_t>();
    auto widths = [&](const std::string& prefix) {
        std::vector<std::size_t> w;
        while (ckpt.contains(prefix + std::to_string(w.size()) + ".w")) {
            w.push_back(ckpt.at(prefix + std::to_string(w.size()) + ".w").dim(0));
        }
        return w;
    };
    ClassifierModel h;
    if (arch == "cnn") {
        h = build_cnn_classifier(input, widths("conv"), classes, 0);
    } else if (arch == "mlp") {
        if (input.size() != 1) throw FormatError("checkpoint: mlp input shape must be 1-D");
        h = build_mlp_classifier(input[0], widths("fc"), classes, 0);
    } else if (arch == "linear") {
        h = build_linear_classifier(ckpt.at("head.w"), ckpt.at("head.b"));
    } else {
        throw FormatError("checkpoint: unknown classifier arch '" + arch + "'");
    }
    copy_params(h.params, ckpt);
    return h;
}

Checkpoint defense_to_checkpoint(const DefenseModel& d, const json& meta) {
    Checkpoint c;
    for (std::size_t i = 0; i < d.unet.size(); ++i) c.add(d.unet.name(i), d.unet[i]);
    for (std::size_t i = 0; i < d.locnet.size(); ++i) c.add(d.locnet.name(i), d.locnet[i]);
    c.metadata = with_fields(meta, {{"model", "defense"},
                                    {"input_shape", shape_json(d.input_shape)},
                                    {"use_unet", d.opts.use_unet},
                                    {"residual_unet", d.opts.residual_unet},
                                    {"base_width", d.opts.base_width},
                                    {"depth", d.opts.depth},
                                    {"point_hidden", d.opts.point_hidden}})
                     .dump();
    return c;
}

DefenseModel defense_from_checkpoint(const Checkpoint& ckpt) {
    const json meta = parse_meta(ckpt);
    expect_model(meta, "defense");
    DefenseOptions o;
    o.use_unet = meta.at("use_unet").get<bool>();
    o.residual_unet = meta.at("residual_unet").get<bool>();
    o.base_width = meta.at("base_width").get<std::size_t>();
    o.depth = meta.at("depth").get<std::size_t>();
    o.point_hidden = meta.at("point_hidden").get<std::size_t>();
    DefenseModel d = build_defense(meta.at("input_shape").get<std::vector<std::size_t>>(), o, 0);
    ParamSet all;
    for (std::size_t i = 0; i < d.unet.size(); ++i) all.add(d.unet.name(i), d.unet[i]);
    for (std::size_t i = 0; i < d.locnet.size(); ++i) all.add(d.locnet.name(i), d.locnet[i]);
    copy_params(all, ckpt);
    for (std::size_t i = 0; i < d.unet.size(); ++i) d.unet[i] = all[i];
    for (std::size_t i = 0; i < d.locnet.size(); ++i) d.locnet[i] = all[d.unet.size() + i];
    return d;
}

Checkpoint attack_set_to_checkpoint(const AttackSet& set, const json& meta) {
    Checkpoint c;
    const std::size_t kinds = std::max<std::size_t>(set.kinds.size(), 1);
    const std::size_t n = set.records.size() / kinds;
    if (n * kinds != set.records.size()) throw ContractError("attack set: records are not one per (sample, kind)");
    json specs = json::array(), records = json::array();
    for (std::size_t k = 0; k < set.records.size(); ++k) {
        const AdvRecord& r = set.records[k];
        const std::size_t kind = k / std::max<std::size_t>(n, 1), sample = k % std::max<std::size_t>(n, 1);
        if (r.spec.id() != set.kinds[kind]) throw ContractError("attack set: records are not grouped by kind");
        if (sample == 0) specs.push_back(attack_spec_to_json(r.spec));
        if (kind == 0) {
            c.add("clean." + std::to_string(sample), r.x);
        } else if (!(r.x == set.records[sample].x)) {
            throw ContractError("attack set: record " + std::to_string(k) + " refers to a different clean sample");
        }
        c.add("adv." + std::to_string(kind) + "." + std::to_string(sample), r.x_adv);
        records.push_back({{"y", r.y},
                           {"fooled", r.fooled},
                           {"iterations", r.iterations},
                           {"split", r.split == Split::Train ? "train" : "test"}});
    }
    json fooling = json::object();
    for (const auto& [k, v] : set.fooling_rate) fooling[k] = v;
    c.metadata = with_fields(meta, {{"model", "attack_set"},
                                    {"source", set.source_classifier_id},
                                    {"kinds", set.kinds},
                                    {"specs", specs},
                                    {"fooling_rate", fooling},
                                    {"samples", n},
                                    {"records", records}})
                     .dump();
    return c;
}

AttackSet attack_set_from_checkpoint(const Checkpoint& ckpt) {
    const json meta = parse_meta(ckpt);
    expect_model(meta, "attack_set");
    AttackSet set;
    set.source_classifier_id = meta.at("source").get<std::string>();
    set.kinds = meta.at("kinds").get<std::vector<std::string>>();
    for (auto it = meta.at("fooling_rate").begin(); it != meta.at("fooling_rate").end(); ++it) {
        set.fooling_rate[it.key()] = it.value().get<double>();
    }
    const std::size_t n = meta.at("samples").get<std::size_t>();
    const json& specs = meta.at("specs");
    const json& records = meta.at("records");
    if (records.size() != n * specs.size()) throw FormatError("checkpoint: attack record count mismatch");
    for (std::size_t k = 0; k < records.size(); ++k) {
        const std::size_t kind = k / n, sample = k % n;
        AdvRecord r;
        r.spec = attack_spec_from_json(specs.at(kind));
        r.x = ckpt.at("clean." + std::to_string(sample));
        r.x_adv = ckpt.at("adv." + std::to_string(kind) + "." + std::to_string(sample));
        r.y = records[k].at("y").get<int>();
        r.fooled = records[k].at("fooled").get<bool>();
        r.iterations = records[k].at("iterations").get<int>();
        r.split = records[k].at("split") == "train" ? Split::Train : Split::Test;
        set.records.push_back(std::move(r));
    }
    set.validate();
    return set;
}

// ---- experiments ----

namespace {

json table_json(const AccuracyTable& t) {
    json j = json::object();
    for (const auto& [k, v] : t.rows) j[k] = v;
    return j;
}

class Runner {
public:
    Runner(const ExperimentConfig& cfg, Report& rep) : cfg_(cfg), rep_(rep), out_(cfg.out_dir) {}

    std::uint64_t seed_for(std::uint64_t component) const { return mix_seed(cfg_.seed, component); }

    template <typename F>
    auto timed(const std::string& phase, F&& f) {
        const auto t0 = std::chrono::steady_clock::now();
        if constexpr (std::is_void_v<decltype(f())>) {
            f();
            rep_.timing.emplace_back(phase, seconds_since(t0));
        } else {
            auto r = f();
            rep_.timing.emplace_back(phase, seconds_since(t0));
            return r;
        }
    }

    const Dataset& train_data() {
        load_data();
        return *train_;
    }
    const Dataset& test_data() {
        load_data();
        return *test_;
    }

    const ClassifierModel& classifier() {
        if (!h_) h_ = obtain_classifier(cfg_.classifier, "classifier");
        return *h_;
    }
    const ClassifierModel& classifier_b() {
        if (!hb_) hb_ = obtain_classifier(cfg_.classifier_b, "classifier_b");
        return *hb_;
    }

    std::vector<AttackSpec> resolve(std::vector<AttackSpec> specs, std::uint64_t salt) const {
        for (auto& s : specs) s.seed = mix_seed(seed_for(salt), s.seed);
        return specs;
    }

    Dataset attack_subset(const Dataset& d) const {
        return cfg_.dataset.attack_label >= 0 ? d.with_label(cfg_.dataset.attack_label) : d;
    }

    const AttackSet& train_attacks() {
        if (!atk_train_) {
            atk_train_ = timed("attacks_train", [&] {
                return generate_attack_set(classifier(), attack_subset(train_data()), resolve(cfg_.attacks, 201),
                                           "classifier");
            });
            save("attacks_train.ckpt", attack_set_to_checkpoint(*atk_train_, base_meta()));
        }
        return *atk_train_;
    }

    const AttackSet& test_attacks() {
        if (!atk_test_) {
            atk_test_ = timed("attacks_test", [&] {
                return generate_attack_set(classifier(), attack_subset(test_data()), resolve(cfg_.eval_attacks, 202),
                                           "classifier");
            });
            save("attacks_test.ckpt", attack_set_to_checkpoint(*atk_test_, base_meta()));
        }
        return *atk_test_;
    }

    TrainConfig train_config(double lambda) const {
        TrainConfig t = cfg_.train;
        t.lambda = lambda;
        t.seed = seed_for(cfg_.train.seed);
        return t;
    }

    TrainResult fit_defense(double lambda) {
        const ClassifierModel& h = classifier();
        const AttackSet& atk = train_attacks();
        const std::uint64_t before = h.params.fingerprint();
        const Dataset* pool = cfg_.train.include_clean ? &train_data() : nullptr;
        TrainResult r = timed("train_defense", [&] {
            return train_defense(h, atk, train_config(lambda), cfg_.defense.options, seed_for(cfg_.defense.seed), pool);
        });
        if (h.params.fingerprint() != before) throw ContractError("classifier changed during defense training");
        return r;
    }

    // Loaded from the configured checkpoint, or trained and saved as defense.ckpt.
    const DefenseModel& defense() {
        if (d_) return *d_;
        if (!cfg_.defense.checkpoint.empty()) {
            d_ = defense_from_checkpoint(load_checkpoint(cfg_.defense.checkpoint));
            return *d_;
        }
        TrainResult r = fit_defense(cfg_.train.lambda);
        for (std::size_t e = 0; e < r.epoch_loss.size(); ++e) {
            rep_.curves.push_back({"defense_loss", static_cast<double>(e + 1), r.epoch_loss[e]});
        }
        rep_.metrics["defense_classifier_frozen"] = true;
        if (!r.step_loss.empty()) {
            rep_.metrics["defense_step0_loss"] = r.step_loss.front();
            rep_.metrics["defense_final_epoch_loss"] = r.epoch_loss.back();
        }
        d_ = std::move(r.model);
        save("defense.ckpt", defense_to_checkpoint(*d_, base_meta()));
        return *d_;
    }

    void save(const std::string& name, const Checkpoint& ckpt) {
        save_checkpoint(out_ / name, ckpt);
        rep_.artifacts.push_back(name);
    }

    json base_meta() const { return {{"config_hash", cfg_.hash()}, {"seed", cfg_.seed}}; }

    const ExperimentConfig& cfg() const { return cfg_; }
    Report& report() { return rep_; }

private:
    static double seconds_since(std::chrono::steady_clock::time_point t0) {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }

    void load_data() {
        if (train_) return;
        timed("dataset", [&] {
            const DatasetConfig& d = cfg_.dataset;
            switch (d.kind) {
                case DatasetKind::Shapes:
                    train_ = gen_shapes_dataset(d.n_train, d.size, seed_for(101), Split::Train);
                    test_ = gen_shapes_dataset(d.n_test, d.size, seed_for(102), Split::Test);
                    break;
                case DatasetKind::Toy2D:
                    train_ = gen_toy_dataset(d.n_per_class, seed_for(101), d.layout);
                    test_ = gen_toy_dataset(d.n_per_class, seed_for(102), d.layout);
                    test_->split = Split::Test;
                    break;
                case DatasetKind::IdxImages:
                    train_ = load_idx_dataset(d.train_images, d.train_labels, d.n_train, Split::Train);
                    test_ = load_idx_dataset(d.test_images, d.test_labels, d.n_test, Split::Test);
                    break;
            }
        });
        const std::size_t classes = std::max(train_->num_classes, test_->num_classes);
        train_->num_classes = test_->num_classes = classes;
        if (cfg_.dataset.attack_label >= static_cast<int>(classes)) {
            throw ConfigError("dataset.attack_label: " + std::to_string(cfg_.dataset.attack_label) +
                              " is not a class of this dataset");
        }
    }

    ClassifierModel obtain_classifier(const ClassifierConfig& c, const std::string& name) {
        if (!c.checkpoint.empty()) return classifier_from_checkpoint(load_checkpoint(c.checkpoint));
        const Dataset& tr = train_data();
        const Shape& shape = tr.sample_shape();
        ClassifierModel h;
        if (c.arch == "cnn") {
            if (shape.size() != 3) throw ConfigError(name + ".arch: cnn needs image data");
            h = build_cnn_classifier(shape, c.channels, tr.num_classes, seed_for(c.seed));
        } else {
            if (shape.size() != 1) throw ConfigError(name + ".arch: mlp needs point data");
            h = build_mlp_classifier(shape[0], c.hidden, tr.num_classes, seed_for(c.seed));
        }
        ClassifierTrainConfig tc = c.train;
        tc.seed = mix_seed(seed_for(c.seed), 1);
        const auto losses = timed("train_" + name, [&] { return train_classifier(h, tr, tc); });
        for (std::size_t e = 0; e < losses.size(); ++e) {
            rep_.curves.push_back({name + "_loss", static_cast<double>(e + 1), losses[e]});
        }
        rep_.accuracy[name] = {{"clean_train", evaluate_accuracy(h, nullptr, tr)},
                               {"clean_test", evaluate_accuracy(h, nullptr, test_data())}};
        save(name + ".ckpt", classifier_to_checkpoint(h, base_meta()));
        return h;
    }

    const ExperimentConfig& cfg_;
    Report& rep_;
    fs::path out_;
    std::optional<Dataset> train_, test_;
    std::optional<ClassifierModel> h_, hb_;
    std::optional<AttackSet> atk_train_, atk_test_;
    std::optional<DefenseModel> d_;
};

AccuracyTable with_test_clean(AccuracyTable t, const ClassifierModel& h, const DefenseModel* d, const Dataset& test) {
    t.rows.emplace_back("clean_test", evaluate_accuracy(h, d, test));
    return t;
}

template <typename T>
std::vector<T> limited(const std::vector<T>& v, std::size_t max) {
    if (max == 0 || v.size() <= max) return v;
    return std::vector<T>(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(max));
}

std::vector<AdvRecord> first_kind_records(const AttackSet& set) {
    std::vector<AdvRecord> out;
    if (set.kinds.empty()) return out;
    for (const AdvRecord* r : set.of_kind(set.kinds.front())) out.push_back(*r);
    return out;
}

void run_train_classifier(Runner& run) { run.classifier(); }

void run_gen_attacks(Runner& run) {
    const AttackSet& tr = run.train_attacks();
    const AttackSet& te = run.test_attacks();
    json fr = json::object();
    for (const auto& [k, v] : tr.fooling_rate) fr["train"][k] = v;
    for (const auto& [k, v] : te.fooling_rate) fr["test"][k] = v;
    run.report().metrics["fooling_rate"] = fr;
    run.report().metrics["records"] = {{"train", tr.records.size()}, {"test", te.records.size()}};
}

void run_train_defense(Runner& run) {
    if (!run.cfg().defense.checkpoint.empty()) throw ConfigError("train_defense: defense.checkpoint must be empty");
    run.defense();
}

void run_eval(Runner& run) {
    const ClassifierModel& h = run.classifier();
    const AttackSet& te = run.test_attacks();
    Report& rep = run.report();
    rep.accuracy["natural"] = table_json(with_test_clean(evaluate_defense(h, nullptr, te), h, nullptr, run.test_data()));
    if (run.cfg().defense.enabled) {
        const DefenseModel& d = run.defense();
        rep.accuracy["defended"] = table_json(with_test_clean(evaluate_defense(h, &d, te), h, &d, run.test_data()));
    }
}

void run_affine_search(Runner& run) {
    const ExperimentConfig& cfg = run.cfg();
    const ClassifierModel& h = run.classifier();
    const auto records = limited(first_kind_records(run.test_attacks()), cfg.search.max_samples);
    const auto curve = run.timed("affine_search", [&] {
        return random_affine_search_curve(h, records, cfg.search.budgets, cfg.search.ranges,
                                          run.seed_for(cfg.search.seed));
    });
    Report& rep = run.report();
    std::vector<const Tensor*> xs, advs;
    std::vector<int> ys;
    for (const auto& r : records) {
        xs.push_back(&r.x);
        advs.push_back(&r.x_adv);
        ys.push_back(r.y);
    }
    json per_budget = json::array();
    for (const auto& r : curve) {
        rep.curves.push_back({"adv", static_cast<double>(r.budget), r.recovered_fraction_adv});
        rep.curves.push_back({"clean", static_cast<double>(r.budget), r.accuracy_clean_after});
        double mean_attempts = 0.0;
        for (int a : r.per_sample_attempts) mean_attempts += a;
        if (!r.per_sample_attempts.empty()) mean_attempts /= static_cast<double>(r.per_sample_attempts.size());
        per_budget.push_back({{"budget", r.budget},
                              {"recovered_fraction_adv", r.recovered_fraction_adv},
                              {"accuracy_clean_after", r.accuracy_clean_after},
                              {"mean_attempts", mean_attempts}});
    }
    rep.metrics["search"] = per_budget;
    rep.metrics["samples"] = records.size();
    rep.accuracy["untransformed"] = {{"clean", batch_accuracy(h, nullptr, xs, ys)},
                                     {records.empty() ? "adv" : records.front().spec.id(),
                                      batch_accuracy(h, nullptr, advs, ys)}};
}

void run_magnitude_sweep(Runner& run) {
    const ExperimentConfig& cfg = run.cfg();
    const ClassifierModel& h = run.classifier();
    std::vector<AdvRecord> fooled;
    for (auto& r : first_kind_records(run.test_attacks())) {
        if (r.fooled) fooled.push_back(r);
    }
    fooled = limited(fooled, cfg.sweep.max_samples);
    Report& rep = run.report();
    std::vector<bool> restored(fooled.size(), false);
    json per_axis = json::object();
    run.timed("magnitude_sweep", [&] {
        for (SweepAxis axis : cfg.sweep.axes) {
            const auto grid = default_sweep_grid(axis);
            std::vector<double> adv_ok(grid.size(), 0.0), clean_ok(grid.size(), 0.0);
            std::size_t axis_restored = 0;
            for (std::size_t i = 0; i < fooled.size(); ++i) {
                const auto adv = magnitude_sweep(h, fooled[i].x_adv, fooled[i].y, axis, grid);
                const auto clean = magnitude_sweep(h, fooled[i].x, fooled[i].y, axis, grid);
                bool any = false;
                for (std::size_t g = 0; g < grid.size(); ++g) {
                    adv_ok[g] += adv[g].correct ? 1.0 : 0.0;
                    clean_ok[g] += clean[g].correct ? 1.0 : 0.0;
                    any = any || adv[g].correct;
                }
                axis_restored += any ? 1 : 0;
                restored[i] = restored[i] || any;
            }
            const double n = static_cast<double>(std::max<std::size_t>(fooled.size(), 1));
            for (std::size_t g = 0; g < grid.size(); ++g) {
                rep.curves.push_back({to_string(axis) + ".adv", grid[g], adv_ok[g] / n});
                rep.curves.push_back({to_string(axis) + ".clean", grid[g], clean_ok[g] / n});
            }
            per_axis[to_string(axis)] = static_cast<double>(axis_restored) / n;
        }
    });
    const auto any = static_cast<double>(std::count(restored.begin(), restored.end(), true));
    rep.metrics["fooled_samples"] = fooled.size();
    rep.metrics["restored_fraction_by_axis"] = per_axis;
    rep.metrics["restored_fraction_any_axis"] = fooled.empty() ? 0.0 : any / static_cast<double>(fooled.size());
}

void run_bound_check(Runner& run) {
    const ExperimentConfig& cfg = run.cfg();
    const BoundConfig& b = cfg.bound;
    Rng rng(run.seed_for(b.seed));
    std::vector<Tensor> images;
    if (cfg.dataset.kind != DatasetKind::Toy2D) {
        images = run.test_data().samples;
    } else {
        for (int i = 0; i < 16; ++i) {
            Tensor t({1, 16, 16});
            for (auto& v : t.data()) v = rng.uniform(0.0, 1.0);
            images.push_back(std::move(t));
        }
    }
    Report& rep = run.report();
    std::size_t holds = 0;
    double worst_ratio = 0.0;
    run.timed("bound_check", [&] {
        for (std::size_t t = 0; t < b.trials; ++t) {
            const Tensor& x = images[t % images.size()];
            Tensor x_adv = x;
            for (auto& v : x_adv.data()) v = std::clamp(v + rng.uniform(-b.epsilon, b.epsilon), 0.0, 1.0);
            const AffineParams f = random_affine(rng, cfg.search.ranges);
            Tensor kernel({b.out_channels, x.dim(0), b.kernel_size, b.kernel_size});
            for (auto& v : kernel.data()) v = rng.normal(0.0, 0.2);
            const BoundReport r = theorem1_bound_check(kernel, x, x_adv, f, b.pool_window);
            holds += r.holds ? 1 : 0;
            if (r.rhs > 0.0) worst_ratio = std::max(worst_ratio, r.lhs / r.rhs);
            rep.curves.push_back({"lhs", static_cast<double>(t), r.lhs});
            rep.curves.push_back({"rhs", static_cast<double>(t), r.rhs});
        }
    });
    const Tensor& x0 = images.front();
    Tensor k0({b.out_channels, x0.dim(0), b.kernel_size, b.kernel_size}, 0.5);
    const BoundReport same = theorem1_bound_check(k0, x0, x0, AffineParams::identity(), b.pool_window);
    Tensor zero_kernel({b.out_channels, x0.dim(0), b.kernel_size, b.kernel_size});
    const BoundReport zero = theorem1_bound_check(zero_kernel, x0, images[images.size() > 1 ? 1 : 0],
                                                  AffineParams::identity(), b.pool_window);
    rep.metrics["trials"] = b.trials;
    rep.metrics["holds"] = holds;
    rep.metrics["all_hold"] = holds == b.trials;
    rep.metrics["max_lhs_over_rhs"] = worst_ratio;
    rep.metrics["identity_case"] = {{"lhs", same.lhs}, {"rhs", same.rhs}, {"holds", same.holds}};
    rep.metrics["zero_kernel_case"] = {{"lhs", zero.lhs}, {"rhs", zero.rhs}, {"holds", zero.holds}};
}

void run_eps_sweep(Runner& run) {
    const ExperimentConfig& cfg = run.cfg();
    const ClassifierModel& h = run.classifier();
    const DefenseModel& d = run.defense();
    const Dataset test = run.attack_subset(run.test_data());
    Report& rep = run.report();
    bool always_better = true;
    json rows = json::array();
    run.timed("eps_sweep", [&] {
        for (std::size_t i = 0; i < cfg.eps_sweep.epsilons.size(); ++i) {
            const double eps = cfg.eps_sweep.epsilons[i];
            AttackSpec spec = AttackSpec::pgd(eps, cfg.eps_sweep.steps, true, mix_seed(run.seed_for(203), i));
            const AttackSet set = generate_attack_set(h, test, {spec}, "classifier");
            const double nat = evaluate_defense(h, nullptr, set).at(spec.id());
            const double def = evaluate_defense(h, &d, set).at(spec.id());
            always_better = always_better && def > nat;
            rep.curves.push_back({"natural", eps, nat});
            rep.curves.push_back({"defended", eps, def});
            rows.push_back({{"epsilon", eps}, {"natural", nat}, {"defended", def}});
        }
    });
    rep.metrics["eps_sweep"] = rows;
    rep.metrics["defended_above_natural_everywhere"] = always_better;
}

void run_transfer_eval(Runner& run) {
    const ClassifierModel& ha = run.classifier();
    const DefenseModel& d = run.defense();
    const ClassifierModel& hb = run.classifier_b();
    const AttackSet& a_test = run.test_attacks();
    const AttackSet b_test = run.timed("attacks_test_b", [&] {
        return generate_attack_set(hb, run.attack_subset(run.test_data()), run.resolve(run.cfg().eval_attacks, 204),
                                   "classifier_b");
    });
    run.save("attacks_test_b.ckpt", attack_set_to_checkpoint(b_test, run.base_meta()));
    Report& rep = run.report();
    const AccuracyTable nat_b = evaluate_defense(hb, nullptr, b_test);
    const AccuracyTable def_b = evaluate_defense(hb, &d, b_test);
    rep.accuracy["natural_a"] = table_json(evaluate_defense(ha, nullptr, a_test));
    rep.accuracy["defended_a"] = table_json(evaluate_defense(ha, &d, a_test));
    rep.accuracy["natural_b"] = table_json(nat_b);
    rep.accuracy["defended_b"] = table_json(def_b);
    json gain = json::object();
    for (const auto& [k, v] : def_b.rows) gain[k] = v - nat_b.at(k);
    rep.metrics["transfer_gain_b"] = gain;
}

void run_lambda_sweep(Runner& run) {
    const ExperimentConfig& cfg = run.cfg();
    const ClassifierModel& h = run.classifier();
    const AttackSet& te = run.test_attacks();
    Report& rep = run.report();
    double best = -1.0;
    json rows = json::array();
    std::vector<double> adv_acc;
    for (double lambda : cfg.lambdas) {
        const TrainResult r = run.fit_defense(lambda);
        const AccuracyTable t = evaluate_defense(h, &r.model, te);
        double adv = 0.0;
        for (const auto& [k, v] : t.rows) {
            rep.curves.push_back({k, lambda, v});
            if (k != "clean") adv += v;
        }
        adv /= static_cast<double>(std::max<std::size_t>(t.rows.size() - 1, 1));
        adv_acc.push_back(adv);
        best = std::max(best, adv);
        rep.accuracy["lambda=" + format_number(lambda)] = table_json(t);
        rows.push_back({{"lambda", lambda}, {"mean_adv_accuracy", adv}, {"final_loss", r.epoch_loss.empty() ? 0.0 : r.epoch_loss.back()}});
    }
    json best_lambdas = json::array();
    for (std::size_t i = 0; i < cfg.lambdas.size(); ++i) {
        if (adv_acc[i] == best) best_lambdas.push_back(cfg.lambdas[i]);
    }
    rep.metrics["lambda_sweep"] = rows;
    rep.metrics["best_lambdas"] = best_lambdas;
}

void run_whitebox_eval(Runner& run) {
    const ExperimentConfig& cfg = run.cfg();
    const ClassifierModel& h = run.classifier();
    const DefenseModel& d = run.defense();
    const Dataset subset = run.attack_subset(run.test_data()).head(cfg.whitebox.max_samples == 0
                                                                       ? run.test_data().size()
                                                                       : cfg.whitebox.max_samples);
    const AttackSpec spec = AttackSpec::composed_pgd(cfg.whitebox.epsilon, cfg.whitebox.steps, true, run.seed_for(205));
    const AttackSet set = run.timed("whitebox", [&] { return generate_attack_set(h, subset, {spec}, "classifier", &d); });
    Report& rep = run.report();
    rep.accuracy["defended"] = table_json(evaluate_defense(h, &d, set));
    rep.accuracy["natural"] = table_json(evaluate_defense(h, nullptr, set));
    rep.metrics["samples"] = subset.size();
}

}  // namespace

Report run_experiment(const ExperimentConfig& cfg) {
    Report rep;
    rep.experiment = to_string(cfg.kind);
    rep.config_hash = cfg.hash();
    Runner run(cfg, rep);
    rep.seeds = {{"global", cfg.seed},
                 {"classifier", run.seed_for(cfg.classifier.seed)},
                 {"classifier_b", run.seed_for(cfg.classifier_b.seed)},
                 {"defense", run.seed_for(cfg.defense.seed)},
                 {"train", run.seed_for(cfg.train.seed)},
                 {"search", run.seed_for(cfg.search.seed)},
                 {"bound", run.seed_for(cfg.bound.seed)}};
    fs::create_directories(cfg.out_dir);
    switch (cfg.kind) {
        case ExperimentKind::TrainClassifier: run_train_classifier(run); break;
        case ExperimentKind::GenAttacks: run_gen_attacks(run); break;
        case ExperimentKind::TrainDefense: run_train_defense(run); break;
        case ExperimentKind::Eval: run_eval(run); break;
        case ExperimentKind::AffineSearch: run_affine_search(run); break;
        case ExperimentKind::MagnitudeSweep: run_magnitude_sweep(run); break;
        case ExperimentKind::BoundCheck: run_bound_check(run); break;
        case ExperimentKind::EpsSweep: run_eps_sweep(run); break;
        case ExperimentKind::TransferEval: run_transfer_eval(run); break;
        case ExperimentKind::LambdaSweep: run_lambda_sweep(run); break;
        case ExperimentKind::WhiteboxEval: run_whitebox_eval(run); break;
    }
    emit_report(rep, cfg.out_dir);
    return rep;
}

std::string summarize_report(const json& report) {
    std::ostringstream out;
    out << "experiment  " << report.value("experiment", "?") << "\n";
    out << "config hash " << report.value("config_hash", "?") << "\n";
    if (report.contains("accuracy")) {
        for (auto t = report.at("accuracy").begin(); t != report.at("accuracy").end(); ++t) {
            out << "[" << t.key() << "]\n";
            for (auto r = t.value().begin(); r != t.value().end(); ++r) {
                char line[128];
                std::snprintf(line, sizeof line, "  %-22s %7.2f%%\n", r.key().c_str(), 100.0 * r.value().get<double>());
                out << line;
            }
        }
    }
    if (report.contains("metrics") && !report.at("metrics").empty()) {
        out << "metrics\n";
        for (auto m = report.at("metrics").begin(); m != report.at("metrics").end(); ++m) {
            out << "  " << m.key() << ": " << m.value().dump() << "\n";
        }
    }
    return out.str();
}

}  // namespace dtlab
