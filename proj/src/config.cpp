#include "dtlab/config.hpp"

#include <cstdio>
#include <fstream>
#include <numbers>

#include "dtlab/errors.hpp"

namespace dtlab {

using nlohmann::json;

namespace {

struct KindName {
    ExperimentKind kind;
    const char* name;
};

constexpr KindName kKindNames[] = {
    {ExperimentKind::TrainClassifier, "train_classifier"},
    {ExperimentKind::GenAttacks, "gen_attacks"},
    {ExperimentKind::TrainDefense, "train_defense"},
    {ExperimentKind::Eval, "eval"},
    {ExperimentKind::AffineSearch, "affine_search"},
    {ExperimentKind::MagnitudeSweep, "magnitude_sweep"},
    {ExperimentKind::BoundCheck, "bound_check"},
    {ExperimentKind::EpsSweep, "eps_sweep"},
    {ExperimentKind::TransferEval, "transfer_eval"},
    {ExperimentKind::LambdaSweep, "lambda_sweep"},
    {ExperimentKind::WhiteboxEval, "whitebox_eval"},
};

constexpr double kEps8 = 8.0 / 255.0;

json attack_template() {
    return {{"kind", "pgd"},          {"epsilon", kEps8}, {"steps", 10},       {"step_size", 0.0},
            {"random_start", true},   {"tv_weight", 0.0}, {"overshoot", 0.02}, {"max_iter", 50},
            {"seed", 0}};
}

json classifier_template(std::vector<int> channels, int seed) {
    return {{"arch", "cnn"},         {"channels", channels}, {"hidden", {32, 32}},
            {"epochs", 8},           {"batch_size", 16},     {"learning_rate", 5e-3},
            {"beta1", 0.9},          {"beta2", 0.999},       {"seed", seed},
            {"checkpoint", ""}};
}

std::string join(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }

const char* type_label(const json& j) {
    if (j.is_boolean()) return "boolean";
    if (j.is_number_integer()) return "integer";
    if (j.is_number()) return "number";
    if (j.is_string()) return "string";
    if (j.is_array()) return "array";
    if (j.is_object()) return "object";
    return "null";
}

json merge_strict(const json& def, const json& user, const std::string& path) {
    const std::string where = path.empty() ? "config" : path;
    if (def.is_object()) {
        if (!user.is_object()) throw ConfigError(where + ": expected an object, got " + type_label(user));
        json out = def;
        for (auto it = user.begin(); it != user.end(); ++it) {
            if (!def.contains(it.key())) throw ConfigError(join(path, it.key()) + ": unknown key");
            out[it.key()] = merge_strict(def[it.key()], it.value(), join(path, it.key()));
        }
        return out;
    }
    if (def.is_array()) {
        if (!user.is_array()) throw ConfigError(where + ": expected an array, got " + type_label(user));
        if (def.empty()) return user;
        json out = json::array();
        const bool objects = def.front().is_object();
        for (std::size_t i = 0; i < user.size(); ++i) {
            const json& proto = objects ? attack_template() : def.front();
            out.push_back(merge_strict(proto, user[i], path + "." + std::to_string(i)));
        }
        return out;
    }
    if (def.is_boolean() && !user.is_boolean()) throw ConfigError(where + ": expected boolean, got " + type_label(user));
    if (def.is_string() && !user.is_string()) throw ConfigError(where + ": expected string, got " + type_label(user));
    if (def.is_number_integer() && !user.is_number_integer()) {
        throw ConfigError(where + ": expected integer, got " + type_label(user));
    }
    const bool signed_ok = path.size() >= 12 && path.compare(path.size() - 12, 12, "attack_label") == 0;
    if (def.is_number_integer() && !signed_ok && !user.is_number_unsigned() && user.get<std::int64_t>() < 0) {
        throw ConfigError(where + ": must be non-negative");
    }
    if (def.is_number_float() && !user.is_number()) throw ConfigError(where + ": expected number, got " + type_label(user));
    if (def.is_number_float()) return json(user.get<double>());
    return user;
}

void require(bool ok, const std::string& msg) {
    if (!ok) throw ConfigError(msg);
}

ClassifierConfig read_classifier(const json& c, const std::string& section) {
    ClassifierConfig out;
    out.arch = c.at("arch").get<std::string>();
    require(out.arch == "cnn" || out.arch == "mlp", section + ".arch: expected 'cnn' or 'mlp', got '" + out.arch + "'");
    out.channels = c.at("channels").get<std::vector<std::size_t>>();
    out.hidden = c.at("hidden").get<std::vector<std::size_t>>();
    out.train.epochs = c.at("epochs").get<int>();
    out.train.batch_size = c.at("batch_size").get<std::size_t>();
    out.train.learning_rate = c.at("learning_rate").get<double>();
    out.train.beta1 = c.at("beta1").get<double>();
    out.train.beta2 = c.at("beta2").get<double>();
    out.seed = c.at("seed").get<std::uint64_t>();
    out.checkpoint = c.at("checkpoint").get<std::string>();
    require(out.train.epochs >= 0, section + ".epochs: must be >= 0");
    require(out.train.batch_size >= 1, section + ".batch_size: must be >= 1");
    require(out.train.learning_rate > 0.0, section + ".learning_rate: must be > 0");
    require(out.arch != "cnn" || !out.channels.empty(), section + ".channels: a cnn needs at least one stage");
    for (std::size_t v : out.channels) require(v >= 1, section + ".channels: widths must be >= 1");
    for (std::size_t v : out.hidden) require(v >= 1, section + ".hidden: widths must be >= 1");
    return out;
}

std::vector<AttackSpec> read_attacks(const json& list, const std::string& section) {
    std::vector<AttackSpec> out;
    for (std::size_t i = 0; i < list.size(); ++i) {
        try {
            out.push_back(attack_spec_from_json(list[i]));
        } catch (const Error& e) {
            throw ConfigError(section + "." + std::to_string(i) + ": " + e.what());
        }
    }
    return out;
}

}  // namespace

std::string to_string(ExperimentKind kind) {
    for (const auto& k : kKindNames) {
        if (k.kind == kind) return k.name;
    }
    return "?";
}

ExperimentKind experiment_kind_from_string(const std::string& name) {
    std::string norm = name;
    for (char& c : norm) {
        if (c == '-') c = '_';
    }
    for (const auto& k : kKindNames) {
        if (norm == k.name) return k.kind;
    }
    throw ConfigError("unknown experiment kind '" + name + "'");
}

const std::vector<ExperimentKind>& all_experiment_kinds() {
    static const std::vector<ExperimentKind> kinds = [] {
        std::vector<ExperimentKind> v;
        for (const auto& k : kKindNames) v.push_back(k.kind);
        return v;
    }();
    return kinds;
}

json attack_spec_to_json(const AttackSpec& s) {
    return {{"kind", to_string(s.kind)},         {"epsilon", s.epsilon},     {"steps", s.steps},
            {"step_size", s.step_size},          {"random_start", s.random_start},
            {"tv_weight", s.flow_tv_weight},     {"overshoot", s.overshoot}, {"max_iter", s.max_iter},
            {"seed", s.seed}};
}

AttackSpec attack_spec_from_json(const json& j) {
    const json m = merge_strict(attack_template(), j, "attack");
    AttackSpec s;
    s.kind = attack_kind_from_string(m.at("kind").get<std::string>());
    s.epsilon = m.at("epsilon").get<double>();
    s.steps = m.at("steps").get<int>();
    s.step_size = m.at("step_size").get<double>();
    s.random_start = m.at("random_start").get<bool>();
    s.flow_tv_weight = m.at("tv_weight").get<double>();
    s.overshoot = m.at("overshoot").get<double>();
    s.max_iter = m.at("max_iter").get<int>();
    s.seed = m.at("seed").get<std::uint64_t>();
    switch (s.kind) {
        case AttackKind::Fgsm:
        case AttackKind::DeepFool:
            s.steps = 0;
            s.step_size = 0.0;
            s.random_start = false;
            break;
        case AttackKind::Ifgsm:
            s.random_start = false;
            [[fallthrough]];
        case AttackKind::Pgd:
        case AttackKind::ComposedPgd:
            if (s.step_size == 0.0) s.step_size = s.epsilon / 4.0;
            break;
        case AttackKind::Flow:
            if (s.step_size == 0.0) s.step_size = s.epsilon / 10.0;
            s.random_start = false;
            break;
    }
    if (s.kind == AttackKind::DeepFool) s.epsilon = 0.0;
    s.validate();
    return s;
}

json default_config_json() {
    json eps = json::array();
    for (int k : {2, 4, 6, 8, 10, 12}) eps.push_back(k / 255.0);
    json attacks = json::array({json{{"kind", "fgsm"}}, json{{"kind", "pgd"}, {"steps", 10}}});
    return {
        {"schema_version", kConfigSchemaVersion},
        {"experiment", "eval"},
        {"seed", 0},
        {"dataset",
         {{"kind", "shapes"},
          {"size", 28},
          {"n_train", 1500},
          {"n_test", 500},
          {"n_per_class", 200},
          {"toy_layout", "ring"},
          {"train_images", ""},
          {"train_labels", ""},
          {"test_images", ""},
          {"test_labels", ""},
          {"attack_label", -1}}},
        {"classifier", classifier_template({8, 16}, 1)},
        {"classifier_b", classifier_template({6, 12}, 2)},
        {"attacks", merge_strict(json::array({attack_template()}), attacks, "attacks")},
        {"eval_attacks", merge_strict(json::array({attack_template()}), json::array({json{{"kind", "pgd"}}}),
                                      "eval_attacks")},
        {"train",
         {{"epochs", 5},
          {"batch_size", 32},
          {"learning_rate", 1e-3},
          {"lambda", 0.0},
          {"beta1", 0.5},
          {"beta2", 0.999},
          {"optimizer", "adam"},
          {"include_clean", false},
          {"seed", 4}}},
        {"defense",
         {{"enabled", true},
          {"use_unet", true},
          {"residual_unet", true},
          {"base_width", 8},
          {"depth", 2},
          {"point_hidden", 32},
          {"seed", 3},
          {"checkpoint", ""}}},
        {"search",
         {{"budgets", {1, 10, 100, 1000}},
          {"max_angle_deg", 30.0},
          {"scale_lo", 0.8},
          {"scale_hi", 1.2},
          {"max_shift", 0.1},
          {"max_samples", 200},
          {"seed", 5}}},
        {"sweep", {{"axes", {"rotation", "translation", "scale"}}, {"max_samples", 100}}},
        {"bound",
         {{"trials", 100}, {"kernel_size", 3}, {"out_channels", 4}, {"pool_window", 2}, {"epsilon", kEps8}, {"seed", 6}}},
        {"eps_sweep", {{"epsilons", eps}, {"steps", 10}}},
        {"lambda_sweep", {{"lambdas", {1.0, 0.1, 0.01, 0.001, 0.0}}}},
        {"whitebox", {{"epsilon", kEps8}, {"steps", 100}, {"max_samples", 200}}},
        {"output", {{"dir", "out"}}},
    };
}

ExperimentConfig parse_config(const json& user) {
    if (!user.is_object()) throw ConfigError("config: top level must be an object");
    if (!user.contains("schema_version")) throw ConfigError("schema_version: missing");
    const json& ver = user.at("schema_version");
    if (!ver.is_number_integer() || ver.get<int>() != kConfigSchemaVersion) {
        throw ConfigError("schema_version: expected " + std::to_string(kConfigSchemaVersion) + ", got " + ver.dump());
    }
    const json doc = merge_strict(default_config_json(), user, "");

    ExperimentConfig c;
    c.document = doc;
    c.kind = experiment_kind_from_string(doc.at("experiment").get<std::string>());
    c.seed = doc.at("seed").get<std::uint64_t>();

    const json& d = doc.at("dataset");
    const std::string kind = d.at("kind").get<std::string>();
    if (kind == "shapes") {
        c.dataset.kind = DatasetKind::Shapes;
    } else if (kind == "toy2d") {
        c.dataset.kind = DatasetKind::Toy2D;
    } else if (kind == "idx") {
        c.dataset.kind = DatasetKind::IdxImages;
    } else {
        throw ConfigError("dataset.kind: expected shapes, toy2d or idx, got '" + kind + "'");
    }
    c.dataset.size = d.at("size").get<std::size_t>();
    c.dataset.n_train = d.at("n_train").get<std::size_t>();
    c.dataset.n_test = d.at("n_test").get<std::size_t>();
    c.dataset.n_per_class = d.at("n_per_class").get<std::size_t>();
    const std::string layout = d.at("toy_layout").get<std::string>();
    require(layout == "ring" || layout == "gaussians", "dataset.toy_layout: expected ring or gaussians");
    c.dataset.layout = layout == "ring" ? ToyLayout::Ring : ToyLayout::Gaussians;
    c.dataset.train_images = d.at("train_images").get<std::string>();
    c.dataset.train_labels = d.at("train_labels").get<std::string>();
    c.dataset.test_images = d.at("test_images").get<std::string>();
    c.dataset.test_labels = d.at("test_labels").get<std::string>();
    c.dataset.attack_label = d.at("attack_label").get<int>();
    require(c.dataset.n_train >= 1 && c.dataset.n_test >= 1, "dataset: n_train and n_test must be >= 1");
    require(c.dataset.n_per_class >= 1, "dataset.n_per_class: must be >= 1");
    require(c.dataset.kind != DatasetKind::Shapes || c.dataset.size >= 16, "dataset.size: must be >= 16");
    if (c.dataset.kind == DatasetKind::IdxImages) {
        require(!c.dataset.train_images.empty() && !c.dataset.train_labels.empty() && !c.dataset.test_images.empty() &&
                    !c.dataset.test_labels.empty(),
                "dataset: idx needs train_images, train_labels, test_images and test_labels");
    }

    c.classifier = read_classifier(doc.at("classifier"), "classifier");
    c.classifier_b = read_classifier(doc.at("classifier_b"), "classifier_b");
    if (c.dataset.kind == DatasetKind::Toy2D) {
        require(c.classifier.arch == "mlp" && c.classifier_b.arch == "mlp", "classifier.arch: toy2d data needs 'mlp'");
    }
    c.attacks = read_attacks(doc.at("attacks"), "attacks");
    c.eval_attacks = read_attacks(doc.at("eval_attacks"), "eval_attacks");

    const json& t = doc.at("train");
    c.train.epochs = t.at("epochs").get<int>();
    c.train.batch_size = t.at("batch_size").get<std::size_t>();
    c.train.learning_rate = t.at("learning_rate").get<double>();
    c.train.lambda = t.at("lambda").get<double>();
    c.train.beta1 = t.at("beta1").get<double>();
    c.train.beta2 = t.at("beta2").get<double>();
    const std::string opt = t.at("optimizer").get<std::string>();
    require(opt == "adam" || opt == "sgd", "train.optimizer: expected adam or sgd, got '" + opt + "'");
    c.train.optimizer = opt == "adam" ? OptimizerKind::Adam : OptimizerKind::Sgd;
    c.train.include_clean = t.at("include_clean").get<bool>();
    c.train.seed = t.at("seed").get<std::uint64_t>();
    try {
        c.train.validate();
    } catch (const Error& e) {
        throw ConfigError(std::string("train: ") + e.what());
    }

    const json& df = doc.at("defense");
    c.defense.enabled = df.at("enabled").get<bool>();
    c.defense.options.use_unet = df.at("use_unet").get<bool>();
    c.defense.options.residual_unet = df.at("residual_unet").get<bool>();
    c.defense.options.base_width = df.at("base_width").get<std::size_t>();
    c.defense.options.depth = df.at("depth").get<std::size_t>();
    c.defense.options.point_hidden = df.at("point_hidden").get<std::size_t>();
    c.defense.seed = df.at("seed").get<std::uint64_t>();
    c.defense.checkpoint = df.at("checkpoint").get<std::string>();
    require(c.defense.options.base_width >= 1 && c.defense.options.point_hidden >= 1,
            "defense: widths must be >= 1");

    const json& s = doc.at("search");
    c.search.budgets = s.at("budgets").get<std::vector<int>>();
    require(!c.search.budgets.empty(), "search.budgets: must not be empty");
    for (int b : c.search.budgets) require(b >= 1, "search.budgets: every budget must be >= 1");
    c.search.ranges.max_angle = s.at("max_angle_deg").get<double>() * std::numbers::pi / 180.0;
    c.search.ranges.scale_lo = s.at("scale_lo").get<double>();
    c.search.ranges.scale_hi = s.at("scale_hi").get<double>();
    c.search.ranges.max_shift = s.at("max_shift").get<double>();
    c.search.max_samples = s.at("max_samples").get<std::size_t>();
    c.search.seed = s.at("seed").get<std::uint64_t>();
    try {
        c.search.ranges.validate();
    } catch (const Error& e) {
        throw ConfigError(std::string("search: ") + e.what());
    }

    const json& sw = doc.at("sweep");
    for (const auto& a : sw.at("axes")) {
        try {
            c.sweep.axes.push_back(sweep_axis_from_string(a.get<std::string>()));
        } catch (const Error& e) {
            throw ConfigError(std::string("sweep.axes: ") + e.what());
        }
    }
    c.sweep.max_samples = sw.at("max_samples").get<std::size_t>();

    const json& b = doc.at("bound");
    c.bound.trials = b.at("trials").get<std::size_t>();
    c.bound.kernel_size = b.at("kernel_size").get<std::size_t>();
    c.bound.out_channels = b.at("out_channels").get<std::size_t>();
    c.bound.pool_window = b.at("pool_window").get<int>();
    c.bound.epsilon = b.at("epsilon").get<double>();
    c.bound.seed = b.at("seed").get<std::uint64_t>();
    require(c.bound.kernel_size >= 1 && c.bound.out_channels >= 1 && c.bound.pool_window >= 1,
            "bound: kernel_size, out_channels and pool_window must be >= 1");
    require(c.bound.epsilon >= 0.0, "bound.epsilon: must be >= 0");

    const json& e = doc.at("eps_sweep");
    c.eps_sweep.epsilons = e.at("epsilons").get<std::vector<double>>();
    c.eps_sweep.steps = e.at("steps").get<int>();
    require(!c.eps_sweep.epsilons.empty(), "eps_sweep.epsilons: must not be empty");
    for (double v : c.eps_sweep.epsilons) require(v >= 0.0, "eps_sweep.epsilons: values must be >= 0");
    require(c.eps_sweep.steps >= 1, "eps_sweep.steps: must be >= 1");

    c.lambdas = doc.at("lambda_sweep").at("lambdas").get<std::vector<double>>();
    require(!c.lambdas.empty(), "lambda_sweep.lambdas: must not be empty");
    for (double v : c.lambdas) require(v >= 0.0, "lambda_sweep.lambdas: values must be >= 0");

    const json& w = doc.at("whitebox");
    c.whitebox.epsilon = w.at("epsilon").get<double>();
    c.whitebox.steps = w.at("steps").get<int>();
    c.whitebox.max_samples = w.at("max_samples").get<std::size_t>();
    require(c.whitebox.epsilon >= 0.0 && c.whitebox.steps >= 1, "whitebox: need epsilon >= 0 and steps >= 1");

    c.out_dir = doc.at("output").at("dir").get<std::string>();
    return c;
}

void apply_override(json& doc, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "': expected key=value");
    const std::string key = assignment.substr(0, eq);
    const std::string text = assignment.substr(eq + 1);
    json value = json::parse(text, nullptr, false);
    if (value.is_discarded()) value = text;

    json* cur = &doc;
    std::size_t start = 0;
    while (true) {
        const std::size_t dot = key.find('.', start);
        const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (part.empty()) throw ConfigError("override '" + assignment + "': empty path segment");
        json* next = nullptr;
        if (cur->is_array()) {
            std::size_t idx = 0;
            try {
                idx = std::stoul(part);
            } catch (const std::exception&) {
                throw ConfigError("override '" + assignment + "': '" + part + "' is not an array index");
            }
            if (idx > cur->size()) throw ConfigError("override '" + assignment + "': index " + part + " out of range");
            if (idx == cur->size()) cur->push_back(json::object());
            next = &(*cur)[idx];
        } else {
            if (cur->is_null()) *cur = json::object();
            if (!cur->is_object()) throw ConfigError("override '" + assignment + "': '" + part + "' is not a section");
            next = &(*cur)[part];
        }
        if (dot == std::string::npos) {
            *next = value;
            return;
        }
        cur = next;
        start = dot + 1;
    }
}

ExperimentConfig config_from_text(const std::string& json_text, const std::vector<std::string>& overrides) {
    json user = json::parse(json_text, nullptr, false);
    if (user.is_discarded()) throw ConfigError("config: not valid JSON");
    if (overrides.empty()) return parse_config(user);
    // Overrides address the defaulted document, so paths into default arrays resolve.
    json doc = parse_config(user).document;
    for (const auto& o : overrides) apply_override(doc, o);
    return parse_config(doc);
}

ExperimentConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open config '" + path.string() + "'");
    const std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return config_from_text(text, overrides);
}

std::uint64_t fnv1a64(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

std::string ExperimentConfig::hash() const {
    json canonical = document;
    canonical.erase("output");
    return hex64(fnv1a64(canonical.dump()));
}

}  // namespace dtlab
