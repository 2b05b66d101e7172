#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "dtlab/dataset.hpp"
#include "dtlab/defense.hpp"
#include "dtlab/vulnlab.hpp"

namespace dtlab {

enum class ExperimentKind {
    TrainClassifier,
    GenAttacks,
    TrainDefense,
    Eval,
    AffineSearch,
    MagnitudeSweep,
    BoundCheck,
    EpsSweep,
    TransferEval,
    LambdaSweep,
    WhiteboxEval,
};

// Canonical names use underscores; hyphenated spellings are accepted too.
std::string to_string(ExperimentKind kind);
ExperimentKind experiment_kind_from_string(const std::string& name);
const std::vector<ExperimentKind>& all_experiment_kinds();

inline constexpr int kConfigSchemaVersion = 1;

struct DatasetConfig {
    DatasetKind kind = DatasetKind::Shapes;
    std::size_t size = 28;
    std::size_t n_train = 1500;
    std::size_t n_test = 500;
    std::size_t n_per_class = 200;  // toy only
    ToyLayout layout = ToyLayout::Ring;
    std::string train_images, train_labels, test_images, test_labels;
    // Attack only samples of this label; -1 attacks everything.
    int attack_label = -1;
};

struct ClassifierConfig {
    std::string arch = "cnn";
    std::vector<std::size_t> channels;
    std::vector<std::size_t> hidden;
    ClassifierTrainConfig train;
    std::uint64_t seed = 0;
    std::string checkpoint;
};

struct DefenseConfig {
    bool enabled = true;
    DefenseOptions options;
    std::uint64_t seed = 0;
    std::string checkpoint;
};

struct SearchConfig {
    std::vector<int> budgets;
    AffineRanges ranges;
    std::size_t max_samples = 0;
    std::uint64_t seed = 0;
};

struct SweepConfig {
    std::vector<SweepAxis> axes;
    std::size_t max_samples = 0;
};

struct BoundConfig {
    std::size_t trials = 100;
    std::size_t kernel_size = 3;
    std::size_t out_channels = 4;
    int pool_window = 2;
    double epsilon = 8.0 / 255.0;
    std::uint64_t seed = 0;
};

struct EpsSweepConfig {
    std::vector<double> epsilons;
    int steps = 10;
};

struct WhiteboxConfig {
    double epsilon = 8.0 / 255.0;
    int steps = 100;
    std::size_t max_samples = 0;
};

// Seeds inside sections are combined with the global seed before use.
struct ExperimentConfig {
    ExperimentKind kind = ExperimentKind::Eval;
    std::uint64_t seed = 0;
    DatasetConfig dataset;
    ClassifierConfig classifier;
    ClassifierConfig classifier_b;
    std::vector<AttackSpec> attacks;
    std::vector<AttackSpec> eval_attacks;
    TrainConfig train;
    DefenseConfig defense;
    SearchConfig search;
    SweepConfig sweep;
    BoundConfig bound;
    EpsSweepConfig eps_sweep;
    std::vector<double> lambdas;
    WhiteboxConfig whitebox;
    std::string out_dir;

    // The fully defaulted document the fields above were read from.
    nlohmann::json document;

    // FNV-1a of the canonical document without the output section.
    std::string hash() const;
};

nlohmann::json default_config_json();

// Every key must exist in the default document with a compatible type.
ExperimentConfig parse_config(const nlohmann::json& user);
// "a.b.0.c=value"; the value is parsed as JSON, falling back to a string.
void apply_override(nlohmann::json& doc, const std::string& assignment);
ExperimentConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {});
ExperimentConfig config_from_text(const std::string& json_text, const std::vector<std::string>& overrides = {});

std::uint64_t fnv1a64(std::string_view bytes);
std::string hex64(std::uint64_t v);

nlohmann::json attack_spec_to_json(const AttackSpec& spec);
AttackSpec attack_spec_from_json(const nlohmann::json& j);

}  // namespace dtlab
