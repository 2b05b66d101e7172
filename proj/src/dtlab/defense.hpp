#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "dtlab/adam.hpp"
#include "dtlab/attacks.hpp"
#include "dtlab/dataset.hpp"
#include "dtlab/zoo.hpp"

namespace dtlab {

// Adversarial records grouped by attack id, in the order the specs were given.
struct AttackSet {
    std::vector<AdvRecord> records;
    std::vector<std::string> kinds;
    std::string source_classifier_id;
    // Per attack id: fraction of records whose attack flipped the prediction.
    std::map<std::string, double> fooling_rate;

    std::size_t m() const noexcept { return kinds.size(); }
    std::vector<const AdvRecord*> of_kind(const std::string& id) const;
    void validate() const;
};

// One record per (sample, spec). Record i of each kind refers to sample i.
AttackSet generate_attack_set(const ClassifierModel& h, const Dataset& data, const std::vector<AttackSpec>& specs,
                              std::string source_classifier_id = "h", const DefenseModel* defense = nullptr);

enum class OptimizerKind { Adam, Sgd };

struct TrainConfig {
    int epochs = 100;
    std::size_t batch_size = 128;
    double learning_rate = 1e-3;
    double lambda = 0.0;
    double beta1 = 0.5;
    double beta2 = 0.999;
    OptimizerKind optimizer = OptimizerKind::Adam;
    bool include_clean = false;
    std::uint64_t seed = 0;

    void validate() const;
};

struct TrainResult {
    DefenseModel model;
    // Mean objective per epoch, and per optimizer step (evaluated before the update).
    std::vector<double> epoch_loss;
    std::vector<double> step_loss;
};

// Minimizes mean cross-entropy of h(T_w(x_adv)) plus (lambda/2)|w|^2 over w,
// with h frozen. Refuses records tagged as test split. With include_clean,
// clean pairs come from clean_pool when given, else from the records.
TrainResult train_defense(const ClassifierModel& h, const AttackSet& attacks, const TrainConfig& cfg,
                          DefenseModel init, const Dataset* clean_pool = nullptr);
TrainResult train_defense(const ClassifierModel& h, const AttackSet& attacks, const TrainConfig& cfg,
                          const DefenseOptions& arch, std::uint64_t seed, const Dataset* clean_pool = nullptr);

// Top-1 accuracy rows: "clean" first, then one row per attack id.
struct AccuracyTable {
    std::vector<std::pair<std::string, double>> rows;

    double at(const std::string& key) const;
    bool contains(const std::string& key) const;
};

AccuracyTable evaluate_defense(const ClassifierModel& h, const DefenseModel* d, const AttackSet& attacks);
double evaluate_accuracy(const ClassifierModel& h, const DefenseModel* d, const Dataset& data);
// Fraction of inputs classified as their label, evaluated in fixed-size batches.
double batch_accuracy(const ClassifierModel& h, const DefenseModel* d, const std::vector<const Tensor*>& inputs,
                      const std::vector<int>& labels);

struct ClassifierTrainConfig {
    int epochs = 5;
    std::size_t batch_size = 32;
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    std::uint64_t seed = 0;
};

// Plain cross-entropy training of h on data; returns per-epoch mean loss.
std::vector<double> train_classifier(ClassifierModel& h, const Dataset& data, const ClassifierTrainConfig& cfg);

}  // namespace dtlab
