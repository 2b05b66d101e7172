#include "dtlab/defense.hpp"

#include <algorithm>
#include <numeric>
#include <set>

#include "dtlab/errors.hpp"
#include "dtlab/ops.hpp"
#include "dtlab/rng.hpp"

namespace dtlab {

std::vector<const AdvRecord*> AttackSet::of_kind(const std::string& id) const {
    std::vector<const AdvRecord*> out;
    for (const auto& r : records) {
        if (r.spec.id() == id) out.push_back(&r);
    }
    return out;
}

void AttackSet::validate() const {
    std::set<std::string> seen;
    for (const auto& r : records) seen.insert(r.spec.id());
    if (seen.size() != kinds.size()) throw ContractError("attack set: kind list does not match records");
    for (const auto& k : kinds) {
        if (!seen.count(k)) throw ContractError("attack set: kind '" + k + "' has no records");
    }
}

AttackSet generate_attack_set(const ClassifierModel& h, const Dataset& data, const std::vector<AttackSpec>& specs,
                              std::string source_classifier_id, const DefenseModel* defense) {
    if (data.size() == 0) throw ContractError("generate_attack_set: dataset is empty");
    if (specs.empty()) throw ContractError("generate_attack_set: no attack specs");
    const bool images = data.sample_shape().size() == 3;
    for (const auto& s : specs) {
        s.validate();
        if (s.kind == AttackKind::Flow && !images) {
            throw ContractError("generate_attack_set: FLOW needs image data, dataset holds points");
        }
        if (s.kind == AttackKind::ComposedPgd && defense == nullptr) {
            throw ContractError("generate_attack_set: composed PGD needs a defense model");
        }
    }
    AttackSet set;
    set.source_classifier_id = std::move(source_classifier_id);
    set.records.reserve(data.size() * specs.size());
    for (const auto& spec : specs) {
        const std::string id = spec.id();
        if (std::find(set.kinds.begin(), set.kinds.end(), id) == set.kinds.end()) set.kinds.push_back(id);
        std::size_t fooled = 0;
        for (std::size_t i = 0; i < data.size(); ++i) {
            AdvRecord r = run_attack(h, defense, data.samples[i], data.labels[i], spec, i);
            r.split = data.split;
            fooled += r.fooled ? 1 : 0;
            set.records.push_back(std::move(r));
        }
        set.fooling_rate[id] = static_cast<double>(fooled) / static_cast<double>(data.size());
    }
    return set;
}

void TrainConfig::validate() const {
    if (epochs < 0) throw DomainError("train config: epochs must be >= 0");
    if (batch_size < 1) throw DomainError("train config: batch size must be >= 1");
    if (!(learning_rate > 0.0)) throw DomainError("train config: learning rate must be > 0");
    if (!(lambda >= 0.0)) throw DomainError("train config: lambda must be >= 0, got " + std::to_string(lambda));
}

namespace {

struct Example {
    const Tensor* x;
    int y;
};

double squared_norm(const std::vector<Tensor*>& params) {
    double s = 0.0;
    for (const Tensor* p : params) {
        for (double v : p->data()) s += v * v;
    }
    return s;
}

}  // namespace

TrainResult train_defense(const ClassifierModel& h, const AttackSet& attacks, const TrainConfig& cfg,
                          DefenseModel init, const Dataset* clean_pool) {
    cfg.validate();
    if (attacks.records.empty()) throw ContractError("train_defense: attack set is empty");
    for (const auto& r : attacks.records) {
        if (r.split != Split::Train) throw ContractError("train_defense: attack set contains test-split records");
    }
    std::vector<Example> examples;
    for (const auto& r : attacks.records) examples.push_back({&r.x_adv, r.y});
    if (cfg.include_clean && clean_pool != nullptr) {
        if (clean_pool->split != Split::Train) throw ContractError("train_defense: clean pool is a test split");
        for (std::size_t i = 0; i < clean_pool->size(); ++i) {
            examples.push_back({&clean_pool->samples[i], clean_pool->labels[i]});
        }
    } else if (cfg.include_clean) {
        const std::string first = attacks.records.front().spec.id();
        for (const auto& r : attacks.records) {
            if (r.spec.id() == first) examples.push_back({&r.x, r.y});
        }
    }

    TrainResult result{std::move(init), {}, {}};
    DefenseModel& d = result.model;
    std::vector<Tensor*> params = d.trainable();
    for (Tensor* p : params) p->zero_grad();
    AdamOptimizer adam(params, AdamOptions{cfg.learning_rate, cfg.beta1, cfg.beta2, 1e-8});

    std::vector<std::size_t> order(examples.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng rng(mix_seed(cfg.seed, static_cast<std::uint64_t>(epoch)));
        std::shuffle(order.begin(), order.end(), rng.engine());
        double epoch_total = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), start + cfg.batch_size);
            std::vector<Tensor> xs;
            std::vector<int> ys;
            for (std::size_t k = start; k < end; ++k) {
                xs.push_back(*examples[order[k]].x);
                ys.push_back(examples[order[k]].y);
            }
            Tape tape;
            Var in = tape.constant(stack(xs));
            Var z = h.forward(tape, d.forward_trainable(tape, in));
            Var loss = ops::softmax_cross_entropy(z, ys);
            tape.backward(loss);
            double objective = loss.value().item();
            if (cfg.lambda > 0.0) {
                objective += 0.5 * cfg.lambda * squared_norm(params);
                for (Tensor* p : params) {
                    auto& g = p->grad();
                    for (std::size_t i = 0; i < g.size(); ++i) g[i] += cfg.lambda * (*p)[i];
                }
            }
            if (cfg.optimizer == OptimizerKind::Adam) {
                adam.step();
            } else {
                for (Tensor* p : params) {
                    const auto& g = p->grad();
                    for (std::size_t i = 0; i < g.size(); ++i) (*p)[i] -= cfg.learning_rate * g[i];
                }
            }
            adam.zero_grad();
            result.step_loss.push_back(objective);
            epoch_total += objective;
            ++batches;
        }
        result.epoch_loss.push_back(epoch_total / static_cast<double>(batches));
    }
    for (Tensor* p : params) p->drop_grad();
    return result;
}

TrainResult train_defense(const ClassifierModel& h, const AttackSet& attacks, const TrainConfig& cfg,
                          const DefenseOptions& arch, std::uint64_t seed, const Dataset* clean_pool) {
    if (attacks.records.empty()) throw ContractError("train_defense: attack set is empty");
    return train_defense(h, attacks, cfg, build_defense(attacks.records.front().x.shape(), arch, seed), clean_pool);
}

double AccuracyTable::at(const std::string& key) const {
    for (const auto& [k, v] : rows) {
        if (k == key) return v;
    }
    throw IndexError("accuracy table has no row '" + key + "'");
}

bool AccuracyTable::contains(const std::string& key) const {
    return std::any_of(rows.begin(), rows.end(), [&](const auto& r) { return r.first == key; });
}

namespace {
constexpr std::size_t kEvalBatch = 64;
}

double batch_accuracy(const ClassifierModel& h, const DefenseModel* d, const std::vector<const Tensor*>& inputs,
                      const std::vector<int>& labels) {
    if (inputs.size() != labels.size()) throw ContractError("batch_accuracy: input and label counts differ");
    if (inputs.empty()) return 0.0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < inputs.size(); start += kEvalBatch) {
        const std::size_t end = std::min(inputs.size(), start + kEvalBatch);
        std::vector<Tensor> xs;
        for (std::size_t i = start; i < end; ++i) xs.push_back(*inputs[i]);
        Tape tape;
        Var in = tape.constant(stack(xs));
        Var z = h.forward(tape, d ? d->forward(tape, in) : in);
        const auto logits = z.value().data();
        for (std::size_t i = start; i < end; ++i) {
            const auto row = logits.subspan((i - start) * h.num_classes, h.num_classes);
            correct += static_cast<int>(argmax(row)) == labels[i] ? 1 : 0;
        }
    }
    return static_cast<double>(correct) / static_cast<double>(inputs.size());
}

AccuracyTable evaluate_defense(const ClassifierModel& h, const DefenseModel* d, const AttackSet& attacks) {
    AccuracyTable table;
    if (attacks.records.empty()) return table;
    const std::string first = attacks.records.front().spec.id();
    std::vector<const Tensor*> clean;
    std::vector<int> clean_y;
    for (const auto& r : attacks.records) {
        if (r.spec.id() == first) {
            clean.push_back(&r.x);
            clean_y.push_back(r.y);
        }
    }
    table.rows.emplace_back("clean", batch_accuracy(h, d, clean, clean_y));
    for (const auto& kind : attacks.kinds) {
        std::vector<const Tensor*> xs;
        std::vector<int> ys;
        for (const AdvRecord* r : attacks.of_kind(kind)) {
            xs.push_back(&r->x_adv);
            ys.push_back(r->y);
        }
        table.rows.emplace_back(kind, batch_accuracy(h, d, xs, ys));
    }
    return table;
}

double evaluate_accuracy(const ClassifierModel& h, const DefenseModel* d, const Dataset& data) {
    std::vector<const Tensor*> xs;
    for (const auto& s : data.samples) xs.push_back(&s);
    return batch_accuracy(h, d, xs, data.labels);
}

std::vector<double> train_classifier(ClassifierModel& h, const Dataset& data, const ClassifierTrainConfig& cfg) {
    if (data.size() == 0) throw ContractError("train_classifier: dataset is empty");
    if (cfg.batch_size < 1 || !(cfg.learning_rate > 0.0)) throw DomainError("train_classifier: bad config");
    h.params.set_trainable(true);
    AdamOptimizer adam(h.params.pointers(), AdamOptions{cfg.learning_rate, cfg.beta1, cfg.beta2, 1e-8});
    adam.zero_grad();
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::vector<double> losses;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng rng(mix_seed(cfg.seed, static_cast<std::uint64_t>(epoch)));
        std::shuffle(order.begin(), order.end(), rng.engine());
        double total = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), start + cfg.batch_size);
            std::span<const std::size_t> idx(order.data() + start, end - start);
            Tape tape;
            Var z = h.forward_trainable(tape, tape.constant(data.batch(idx)));
            Var loss = ops::softmax_cross_entropy(z, data.batch_labels(idx));
            tape.backward(loss);
            adam.step();
            adam.zero_grad();
            total += loss.value().item();
            ++batches;
        }
        losses.push_back(total / static_cast<double>(batches));
    }
    for (Tensor* p : h.params.pointers()) p->drop_grad();
    return losses;
}

}  // namespace dtlab
