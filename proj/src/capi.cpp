#include "dtlab/dtlab.h"

#include <string>
#include <vector>

#include "dtlab/errors.hpp"
#include "dtlab/experiment.hpp"

using nlohmann::json;

struct dtlab_config {
    json user;
    dtlab::ExperimentConfig parsed;
    std::string hash;
    std::string text;
    std::string experiment;

    void refresh() {
        parsed = dtlab::parse_config(user);
        hash = parsed.hash();
        text = parsed.document.dump(2);
        experiment = dtlab::to_string(parsed.kind);
    }
};

struct dtlab_report {
    json doc;
    std::string text;
    std::string csv;
    std::string summary;
};

struct dtlab_checkpoint {
    dtlab::Checkpoint ckpt;
    std::vector<std::vector<size_t>> shapes;

    void sync_shapes() {
        shapes.clear();
        for (const auto& e : ckpt.entries) shapes.emplace_back(e.second.shape().begin(), e.second.shape().end());
    }
};

struct dtlab_classifier {
    dtlab::ClassifierModel model;
};

struct dtlab_defense {
    dtlab::DefenseModel model;
};

namespace {

thread_local std::string g_last_error;

dtlab_status status_of(dtlab::ErrorKind kind) {
    switch (kind) {
        case dtlab::ErrorKind::Dimension: return DTLAB_ERR_DIMENSION;
        case dtlab::ErrorKind::Domain: return DTLAB_ERR_DOMAIN;
        case dtlab::ErrorKind::Contract: return DTLAB_ERR_CONTRACT;
        case dtlab::ErrorKind::Index: return DTLAB_ERR_INDEX;
        case dtlab::ErrorKind::Format: return DTLAB_ERR_FORMAT;
        case dtlab::ErrorKind::Config: return DTLAB_ERR_CONFIG;
        case dtlab::ErrorKind::Io: return DTLAB_ERR_IO;
    }
    return DTLAB_ERR_INTERNAL;
}

template <typename F>
dtlab_status guarded(F&& f) {
    g_last_error.clear();
    try {
        f();
        return DTLAB_OK;
    } catch (const dtlab::Error& e) {
        g_last_error = e.what();
        return status_of(e.kind());
    } catch (const json::exception& e) {
        g_last_error = e.what();
        return DTLAB_ERR_FORMAT;
    } catch (const std::filesystem::filesystem_error& e) {
        g_last_error = e.what();
        return DTLAB_ERR_IO;
    } catch (const std::exception& e) {
        g_last_error = e.what();
        return DTLAB_ERR_INTERNAL;
    } catch (...) {
        g_last_error = "unknown failure";
        return DTLAB_ERR_INTERNAL;
    }
}

dtlab_status null_arg(const char* what) {
    g_last_error = std::string(what) + " is null";
    return DTLAB_ERR_NULL_ARGUMENT;
}

dtlab_report* make_report(json doc, std::string csv) {
    auto* r = new dtlab_report;
    r->doc = std::move(doc);
    r->text = r->doc.dump(2);
    r->csv = std::move(csv);
    r->summary = dtlab::summarize_report(r->doc);
    return r;
}

}  // namespace

extern "C" {

const char* dtlab_version(void) { return "1.0.0"; }

const char* dtlab_status_name(dtlab_status status) {
    switch (status) {
        case DTLAB_OK: return "ok";
        case DTLAB_ERR_DIMENSION: return "dimension error";
        case DTLAB_ERR_DOMAIN: return "domain error";
        case DTLAB_ERR_CONTRACT: return "contract error";
        case DTLAB_ERR_INDEX: return "index error";
        case DTLAB_ERR_FORMAT: return "format error";
        case DTLAB_ERR_CONFIG: return "config error";
        case DTLAB_ERR_IO: return "io error";
        case DTLAB_ERR_NULL_ARGUMENT: return "null argument";
        case DTLAB_ERR_INTERNAL: return "internal error";
    }
    return "unknown status";
}

const char* dtlab_last_error(void) { return g_last_error.c_str(); }

dtlab_status dtlab_config_parse(const char* json_text, dtlab_config** out) {
    if (!json_text) return null_arg("json_text");
    if (!out) return null_arg("out");
    return guarded([&] {
        auto cfg = std::make_unique<dtlab_config>();
        cfg->user = json::parse(json_text, nullptr, false);
        if (cfg->user.is_discarded()) throw dtlab::ConfigError("config: not valid JSON");
        cfg->refresh();
        *out = cfg.release();
    });
}

dtlab_status dtlab_config_load(const char* path, dtlab_config** out) {
    if (!path) return null_arg("path");
    if (!out) return null_arg("out");
    return guarded([&] {
        const std::string text = dtlab::read_file(path);
        auto cfg = std::make_unique<dtlab_config>();
        cfg->user = json::parse(text, nullptr, false);
        if (cfg->user.is_discarded()) throw dtlab::ConfigError("config '" + std::string(path) + "': not valid JSON");
        cfg->refresh();
        *out = cfg.release();
    });
}

dtlab_status dtlab_config_set(dtlab_config* cfg, const char* assignment) {
    if (!cfg) return null_arg("cfg");
    if (!assignment) return null_arg("assignment");
    return guarded([&] {
        json candidate = dtlab::parse_config(cfg->user).document;
        dtlab::apply_override(candidate, assignment);
        dtlab::parse_config(candidate);
        cfg->user = std::move(candidate);
        cfg->refresh();
    });
}

dtlab_status dtlab_config_hash(const dtlab_config* cfg, const char** out) {
    if (!cfg) return null_arg("cfg");
    if (!out) return null_arg("out");
    *out = cfg->hash.c_str();
    return DTLAB_OK;
}

dtlab_status dtlab_config_json(const dtlab_config* cfg, const char** out) {
    if (!cfg) return null_arg("cfg");
    if (!out) return null_arg("out");
    *out = cfg->text.c_str();
    return DTLAB_OK;
}

dtlab_status dtlab_config_experiment(const dtlab_config* cfg, const char** out) {
    if (!cfg) return null_arg("cfg");
    if (!out) return null_arg("out");
    *out = cfg->experiment.c_str();
    return DTLAB_OK;
}

void dtlab_config_free(dtlab_config* cfg) { delete cfg; }

dtlab_status dtlab_run(const dtlab_config* cfg, dtlab_report** out) {
    if (!cfg) return null_arg("cfg");
    if (!out) return null_arg("out");
    return guarded([&] {
        const dtlab::Report rep = dtlab::run_experiment(cfg->parsed);
        *out = make_report(rep.to_json(), rep.csv());
    });
}

dtlab_status dtlab_report_load(const char* path, dtlab_report** out) {
    if (!path) return null_arg("path");
    if (!out) return null_arg("out");
    return guarded([&] {
        json doc = json::parse(dtlab::read_file(path), nullptr, false);
        if (doc.is_discarded() || !doc.is_object()) {
            throw dtlab::FormatError("report '" + std::string(path) + "': not a JSON object");
        }
        if (!doc.contains("config_hash") || !doc.contains("accuracy")) {
            throw dtlab::FormatError("report '" + std::string(path) + "': missing config_hash or accuracy");
        }
        *out = make_report(std::move(doc), "");
    });
}

dtlab_status dtlab_report_json(const dtlab_report* report, const char** out) {
    if (!report) return null_arg("report");
    if (!out) return null_arg("out");
    *out = report->text.c_str();
    return DTLAB_OK;
}

dtlab_status dtlab_report_csv(const dtlab_report* report, const char** out) {
    if (!report) return null_arg("report");
    if (!out) return null_arg("out");
    *out = report->csv.c_str();
    return DTLAB_OK;
}

dtlab_status dtlab_report_summary(const dtlab_report* report, const char** out) {
    if (!report) return null_arg("report");
    if (!out) return null_arg("out");
    *out = report->summary.c_str();
    return DTLAB_OK;
}

dtlab_status dtlab_report_number(const dtlab_report* report, const char* pointer, double* out) {
    if (!report) return null_arg("report");
    if (!pointer) return null_arg("pointer");
    if (!out) return null_arg("out");
    return guarded([&] {
        const json::json_pointer ptr(pointer);
        if (!report->doc.contains(ptr)) throw dtlab::IndexError("report has no field '" + std::string(pointer) + "'");
        const json& v = report->doc.at(ptr);
        if (!v.is_number()) throw dtlab::ContractError("report field '" + std::string(pointer) + "' is not a number");
        *out = v.get<double>();
    });
}

void dtlab_report_free(dtlab_report* report) { delete report; }

dtlab_status dtlab_checkpoint_create(const char* metadata, dtlab_checkpoint** out) {
    if (!out) return null_arg("out");
    return guarded([&] {
        auto c = std::make_unique<dtlab_checkpoint>();
        c->ckpt.metadata = metadata ? metadata : "";
        *out = c.release();
    });
}

dtlab_status dtlab_checkpoint_load(const char* path, dtlab_checkpoint** out) {
    if (!path) return null_arg("path");
    if (!out) return null_arg("out");
    return guarded([&] {
        auto c = std::make_unique<dtlab_checkpoint>();
        c->ckpt = dtlab::load_checkpoint(path);
        c->sync_shapes();
        *out = c.release();
    });
}

dtlab_status dtlab_checkpoint_save(const dtlab_checkpoint* ckpt, const char* path) {
    if (!ckpt) return null_arg("ckpt");
    if (!path) return null_arg("path");
    return guarded([&] { dtlab::save_checkpoint(path, ckpt->ckpt); });
}

dtlab_status dtlab_checkpoint_add(dtlab_checkpoint* ckpt, const char* name, const size_t* shape, size_t ndim,
                                  const double* data) {
    if (!ckpt) return null_arg("ckpt");
    if (!name) return null_arg("name");
    if (ndim > 0 && !shape) return null_arg("shape");
    if (!data) return null_arg("data");
    return guarded([&] {
        dtlab::Shape s(shape, shape + ndim);
        const std::size_t n = dtlab::shape_numel(s);
        ckpt->ckpt.add(name, dtlab::Tensor(s, std::vector<double>(data, data + n)));
        ckpt->sync_shapes();
    });
}

dtlab_status dtlab_checkpoint_count(const dtlab_checkpoint* ckpt, size_t* out) {
    if (!ckpt) return null_arg("ckpt");
    if (!out) return null_arg("out");
    *out = ckpt->ckpt.entries.size();
    return DTLAB_OK;
}

dtlab_status dtlab_checkpoint_entry(const dtlab_checkpoint* ckpt, size_t index, const char** name,
                                    const size_t** shape, size_t* ndim, const double** data, size_t* numel) {
    if (!ckpt) return null_arg("ckpt");
    if (index >= ckpt->ckpt.entries.size()) {
        g_last_error = "checkpoint entry " + std::to_string(index) + " out of range (" +
                       std::to_string(ckpt->ckpt.entries.size()) + " entries)";
        return DTLAB_ERR_INDEX;
    }
    const auto& e = ckpt->ckpt.entries[index];
    if (name) *name = e.first.c_str();
    if (shape) *shape = ckpt->shapes[index].data();
    if (ndim) *ndim = ckpt->shapes[index].size();
    if (data) *data = e.second.data().data();
    if (numel) *numel = e.second.numel();
    return DTLAB_OK;
}

dtlab_status dtlab_checkpoint_metadata(const dtlab_checkpoint* ckpt, const char** out) {
    if (!ckpt) return null_arg("ckpt");
    if (!out) return null_arg("out");
    *out = ckpt->ckpt.metadata.c_str();
    return DTLAB_OK;
}

void dtlab_checkpoint_free(dtlab_checkpoint* ckpt) { delete ckpt; }

dtlab_status dtlab_classifier_load(const char* path, dtlab_classifier** out) {
    if (!path) return null_arg("path");
    if (!out) return null_arg("out");
    return guarded([&] {
        auto h = std::make_unique<dtlab_classifier>();
        h->model = dtlab::classifier_from_checkpoint(dtlab::load_checkpoint(path));
        *out = h.release();
    });
}

dtlab_status dtlab_classifier_input_size(const dtlab_classifier* h, size_t* out) {
    if (!h) return null_arg("h");
    if (!out) return null_arg("out");
    *out = dtlab::shape_numel(h->model.input_shape);
    return DTLAB_OK;
}

dtlab_status dtlab_classifier_predict(const dtlab_classifier* h, const double* x, size_t n, int* label) {
    if (!h) return null_arg("h");
    if (!x) return null_arg("x");
    if (!label) return null_arg("label");
    return guarded([&] {
        const std::size_t want = dtlab::shape_numel(h->model.input_shape);
        if (n != want) {
            throw dtlab::DimensionError("classifier expects " + std::to_string(want) + " values, got " +
                                        std::to_string(n));
        }
        *label = h->model.predict(dtlab::Tensor(h->model.input_shape, std::vector<double>(x, x + n)));
    });
}

void dtlab_classifier_free(dtlab_classifier* h) { delete h; }

dtlab_status dtlab_defense_load(const char* path, dtlab_defense** out) {
    if (!path) return null_arg("path");
    if (!out) return null_arg("out");
    return guarded([&] {
        auto d = std::make_unique<dtlab_defense>();
        d->model = dtlab::defense_from_checkpoint(dtlab::load_checkpoint(path));
        *out = d.release();
    });
}

dtlab_status dtlab_defense_apply(const dtlab_defense* d, const double* x, size_t n, double* out) {
    if (!d) return null_arg("d");
    if (!x) return null_arg("x");
    if (!out) return null_arg("out");
    return guarded([&] {
        const std::size_t want = dtlab::shape_numel(d->model.input_shape);
        if (n != want) {
            throw dtlab::DimensionError("defense expects " + std::to_string(want) + " values, got " +
                                        std::to_string(n));
        }
        const dtlab::Tensor y = d->model.apply(dtlab::Tensor(d->model.input_shape, std::vector<double>(x, x + n)));
        std::copy(y.data().begin(), y.data().end(), out);
    });
}

void dtlab_defense_free(dtlab_defense* d) { delete d; }

}  // extern "C"
