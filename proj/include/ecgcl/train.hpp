#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include "ecgcl/augment.hpp"
#include "ecgcl/contrastive.hpp"
#include "ecgcl/data.hpp"
#include "ecgcl/models.hpp"
#include "ecgcl/optim.hpp"

namespace ecgcl {

struct TrainConfig {
    int pretrain_epochs = 50;
    int pretrain_batch = 128;
    int finetune_epochs = 200;
    int finetune_batch = 128;
    AdamConfig adam{};
    SgdConfig sgd{};
    double temperature = 0.1;  // not a published value; see docs

    void validate() const {
        if (pretrain_epochs < 1 || finetune_epochs < 1) throw Error("epochs must be >= 1");
        if (pretrain_batch < 2) throw Error("contrastive stage needs batch >= 2");
        if (finetune_batch < 1) throw Error("finetune batch must be >= 1");
        if (!(temperature > 0.0)) throw Error("temperature must be > 0");
    }
};

// Plain-text per-epoch metrics: "stage epoch loss [accuracy]".
class MetricsLog {
public:
    struct Entry {
        std::string stage;
        int epoch = 0;
        double loss = 0.0;
        double accuracy = -1.0;  // <0 means not applicable
    };

    MetricsLog() = default;
    explicit MetricsLog(const std::string& path) {
        if (!path.empty()) {
            file_.open(path, std::ios::app);
            if (!file_) throw Error("cannot open metrics log '" + path + "'");
        }
    }

    void log(const std::string& stage, int epoch, double loss, double accuracy = -1.0) {
        entries_.push_back({stage, epoch, loss, accuracy});
        if (file_.is_open()) {
            file_ << "stage=" << stage << " epoch=" << epoch << " loss=" << loss;
            if (accuracy >= 0.0) file_ << " accuracy=" << accuracy;
            file_ << "\n";
            file_.flush();
        }
    }

    const std::vector<Entry>& entries() const { return entries_; }

private:
    std::vector<Entry> entries_;
    std::ofstream file_;
};

namespace detail {

inline std::vector<size_t> shuffled_indices(size_t n, Rng& rng) {
    std::vector<size_t> idx(n);
    std::iota(idx.begin(), idx.end(), size_t{0});
    rng.shuffle(idx);
    return idx;
}

}  // namespace detail

// Contrastive pretraining of encoder + projection head: shuffled minibatches
// through assemble_pairs + nt_xent, Adam on both components jointly. Returns
// the per-epoch mean losses (also pushed into `log`).
inline std::vector<double> pretrain(ModelState& state, const std::vector<const EcgRecord*>& pool,
                                    const AugmentationSpec& spec, const TrainConfig& cfg,
                                    uint64_t seed, MetricsLog* log = nullptr) {
    cfg.validate();
    if (pool.empty()) throw Error("pretrain: empty pretraining pool");
    spec.validate();

    Adam optimizer(cfg.adam);
    Rng root(splitmix64(seed ^ 0x70726574ULL));
    std::vector<double> epoch_losses;

    for (int epoch = 0; epoch < cfg.pretrain_epochs; ++epoch) {
        Rng erng = root.fork();
        const std::vector<size_t> order = detail::shuffled_indices(pool.size(), erng);
        double loss_sum = 0.0;
        int batches = 0;

        for (size_t start = 0; start < order.size(); start += static_cast<size_t>(cfg.pretrain_batch)) {
            const size_t stop = std::min(order.size(), start + static_cast<size_t>(cfg.pretrain_batch));
            if (stop - start < 2) break;  // contrastive loss needs >= 2 records
            std::vector<const EcgRecord*> batch;
            batch.reserve(stop - start);
            for (size_t i = start; i < stop; ++i) batch.push_back(pool[order[i]]);

            ad::Tape tape;
            BoundModel bm(tape, state);
            ContrastiveBatch views = assemble_pairs(bm, batch, spec, erng, /*training=*/true);
            ad::Var loss = nt_xent(views.z, views.z_tilde, cfg.temperature);
            const double value = loss.value()[0];
            if (!std::isfinite(value))
                throw Error("pretrain: non-finite loss at epoch " + std::to_string(epoch) +
                            " batch " + std::to_string(batches));
            tape.backward(loss);
            optimizer.step(state.params, bm.grads());
            loss_sum += value;
            ++batches;
        }
        if (batches == 0) throw Error("pretrain: pool too small for one contrastive batch");
        const double mean_loss = loss_sum / batches;
        epoch_losses.push_back(mean_loss);
        if (log) log->log("pretrain", epoch, mean_loss);
    }
    return epoch_losses;
}

// Frozen-encoder features for a record list, eval-mode batchnorm. The
// encoder never tracks gradients here.
inline Tensor encode_features(ModelState& state, const std::vector<const EcgRecord*>& records,
                              int batch = 64) {
    if (records.empty()) throw Error("encode_features: no records");
    const int flat = state.encoder_cfg.flatten_size();
    Tensor features({static_cast<int>(records.size()), flat});
    for (size_t start = 0; start < records.size(); start += static_cast<size_t>(batch)) {
        const size_t stop = std::min(records.size(), start + static_cast<size_t>(batch));
        std::vector<const EcgRecord*> chunk(records.begin() + static_cast<long>(start),
                                            records.begin() + static_cast<long>(stop));
        ad::Tape tape(false);
        BoundModel bm(tape, state);
        ad::Var x = tape.constant(stack_signals(chunk));
        ad::Var h = encoder_forward(bm, x, /*training=*/false);
        const Tensor& hv = h.value();
        std::copy(hv.data(), hv.data() + hv.size(),
                  features.data() + static_cast<size_t>(start) * flat);
    }
    return features;
}

inline Tensor labels_tensor(const std::vector<const EcgRecord*>& records) {
    Tensor y({static_cast<int>(records.size()), kNumSuperclasses});
    for (size_t i = 0; i < records.size(); ++i) {
        if (!records[i]->labels)
            throw Error("record " + records[i]->record_id + " has no labels");
        const Tensor lv = records[i]->labels->to_tensor();
        std::copy(lv.data(), lv.data() + lv.size(), y.data() + i * kNumSuperclasses);
    }
    return y;
}

// Classifier training on a frozen encoder. Batchnorm runs in eval mode, so
// features are constant per record and are computed once up front; the
// frozen-encoder checksum is asserted bit-identical before/after.
inline void finetune(ModelState& state, const std::vector<const EcgRecord*>& labelled,
                     const TrainConfig& cfg, uint64_t seed, MetricsLog* log = nullptr) {
    cfg.validate();
    if (labelled.empty()) throw Error("finetune: empty labelled subset");

    freeze(state, "encoder");
    const uint64_t checksum_before = component_checksum(state, "encoder");

    const Tensor features = encode_features(state, labelled);
    const Tensor labels = labels_tensor(labelled);
    const int flat = state.encoder_cfg.flatten_size();

    Sgd optimizer(cfg.sgd);
    Rng root(splitmix64(seed ^ 0x66696e65ULL));

    for (int epoch = 0; epoch < cfg.finetune_epochs; ++epoch) {
        Rng erng = root.fork();
        const std::vector<size_t> order = detail::shuffled_indices(labelled.size(), erng);
        double loss_sum = 0.0;
        int batches = 0;
        for (size_t start = 0; start < order.size(); start += static_cast<size_t>(cfg.finetune_batch)) {
            const size_t stop = std::min(order.size(), start + static_cast<size_t>(cfg.finetune_batch));
            const int nb = static_cast<int>(stop - start);
            Tensor xb({nb, flat});
            Tensor yb({nb, kNumSuperclasses});
            for (size_t i = start; i < stop; ++i) {
                const size_t r = order[i];
                std::copy(features.data() + r * flat, features.data() + (r + 1) * flat,
                          xb.data() + (i - start) * flat);
                std::copy(labels.data() + r * kNumSuperclasses,
                          labels.data() + (r + 1) * kNumSuperclasses,
                          yb.data() + (i - start) * kNumSuperclasses);
            }
            ad::Tape tape;
            BoundModel bm(tape, state);
            ad::Var c = classifier_forward(bm, tape.constant(std::move(xb)));
            ad::Var loss = ad::bce(c, yb);
            const double value = loss.value()[0];
            if (!std::isfinite(value))
                throw Error("finetune: non-finite loss at epoch " + std::to_string(epoch));
            tape.backward(loss);
            optimizer.step(state.params, bm.grads());
            loss_sum += value;
            ++batches;
        }
        if (log) log->log("finetune", epoch, loss_sum / std::max(batches, 1));
    }

    if (component_checksum(state, "encoder") != checksum_before)
        throw Error("finetune: frozen encoder parameters changed");
}

struct EvalResult {
    double weighted_accuracy = 0.0;
    double macro_accuracy = 0.0;
    std::array<double, kNumSuperclasses> per_class{};
    std::array<int, kNumSuperclasses> support{};
};

// Per-class binary accuracy at `threshold`; weighted accuracy weights each
// class by its positive-label support over total positive labels. Classes
// with zero support get zero weight. Macro accuracy is the plain mean.
inline EvalResult evaluate(ModelState& state, const std::vector<const EcgRecord*>& test,
                           double threshold = 0.5) {
    if (test.empty()) throw Error("evaluate: empty test set");
    const Tensor features = encode_features(state, test);
    const Tensor labels = labels_tensor(test);

    ad::Tape tape(false);
    BoundModel bm(tape, state);
    ad::Var c = classifier_forward(bm, tape.constant(features));
    const Tensor& cv = c.value();

    EvalResult res;
    std::array<int, kNumSuperclasses> correct{};
    const int n = cv.dim(0);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < kNumSuperclasses; ++j) {
            const bool pred = cv.at(i, j) >= threshold;
            const bool truth = labels.at(i, j) != 0.0;
            if (pred == truth) correct[static_cast<size_t>(j)] += 1;
            if (truth) res.support[static_cast<size_t>(j)] += 1;
        }
    }
    int total_support = 0;
    double macro = 0.0;
    for (int j = 0; j < kNumSuperclasses; ++j) {
        res.per_class[static_cast<size_t>(j)] = static_cast<double>(correct[static_cast<size_t>(j)]) / n;
        macro += res.per_class[static_cast<size_t>(j)];
        total_support += res.support[static_cast<size_t>(j)];
    }
    res.macro_accuracy = macro / kNumSuperclasses;
    if (total_support == 0) {
        res.weighted_accuracy = res.macro_accuracy;
    } else {
        double acc = 0.0;
        for (int j = 0; j < kNumSuperclasses; ++j)
            acc += res.per_class[static_cast<size_t>(j)] * res.support[static_cast<size_t>(j)];
        res.weighted_accuracy = acc / total_support;
    }
    return res;
}

// Reference accuracies reported for the fully supervised models at corpus
// scale; kept for documentation output only, never asserted at desk scale.
constexpr double kReferenceSupervisedEncoderA = 82.428;
constexpr double kReferenceSupervisedEncoderB = 84.876;

// Joint supervised training of encoder + classifier, no contrastive stage
// and no freezing, with the finetune optimizer settings.
inline EvalResult supervised_baseline(ModelState& state,
                                      const std::vector<const EcgRecord*>& train,
                                      const std::vector<const EcgRecord*>& test,
                                      const TrainConfig& cfg, uint64_t seed,
                                      MetricsLog* log = nullptr) {
    cfg.validate();
    if (train.empty()) throw Error("supervised_baseline: empty training set");
    const Tensor labels = labels_tensor(train);

    Sgd optimizer(cfg.sgd);
    Rng root(splitmix64(seed ^ 0x7375706cULL));

    for (int epoch = 0; epoch < cfg.finetune_epochs; ++epoch) {
        Rng erng = root.fork();
        const std::vector<size_t> order = detail::shuffled_indices(train.size(), erng);
        double loss_sum = 0.0;
        int batches = 0;
        for (size_t start = 0; start < order.size(); start += static_cast<size_t>(cfg.finetune_batch)) {
            const size_t stop = std::min(order.size(), start + static_cast<size_t>(cfg.finetune_batch));
            const int nb = static_cast<int>(stop - start);
            if (nb < 2) break;  // batchnorm training mode needs N*L >= 2
            std::vector<const EcgRecord*> batch;
            Tensor yb({nb, kNumSuperclasses});
            for (size_t i = start; i < stop; ++i) {
                batch.push_back(train[order[i]]);
                std::copy(labels.data() + order[i] * kNumSuperclasses,
                          labels.data() + (order[i] + 1) * kNumSuperclasses,
                          yb.data() + (i - start) * kNumSuperclasses);
            }
            ad::Tape tape;
            BoundModel bm(tape, state);
            ad::Var x = tape.constant(stack_signals(batch));
            ad::Var h = encoder_forward(bm, x, /*training=*/true);
            ad::Var c = classifier_forward(bm, h);
            ad::Var loss = ad::bce(c, yb);
            const double value = loss.value()[0];
            if (!std::isfinite(value))
                throw Error("supervised_baseline: non-finite loss at epoch " +
                            std::to_string(epoch));
            tape.backward(loss);
            optimizer.step(state.params, bm.grads());
            loss_sum += value;
            ++batches;
        }
        if (log) log->log("supervised", epoch, loss_sum / std::max(batches, 1));
    }
    return evaluate(state, test);
}

}  // namespace ecgcl
