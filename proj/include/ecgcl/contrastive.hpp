#pragma once

#include <cmath>
#include <vector>

#include "ecgcl/augment.hpp"
#include "ecgcl/autodiff.hpp"
#include "ecgcl/data.hpp"
#include "ecgcl/models.hpp"

namespace ecgcl {

// Plain-value cosine similarity for evaluation paths; the differentiable
// version lives in ad::cosine_sim.
inline double cosine_similarity(const Tensor& u, const Tensor& v) {
    if (u.size() != v.size()) throw Error("cosine_similarity: operand sizes differ");
    double dot = 0.0, nu = 0.0, nv = 0.0;
    for (size_t i = 0; i < u.size(); ++i) {
        dot += u[i] * v[i];
        nu += u[i] * u[i];
        nv += v[i] * v[i];
    }
    if (std::sqrt(nu) < 1e-12) throw Error("cosine_similarity: left operand has zero norm");
    if (std::sqrt(nv) < 1e-12) throw Error("cosine_similarity: right operand has zero norm");
    return dot / (std::sqrt(nu) * std::sqrt(nv));
}

// Normalized-temperature cross entropy over a batch of N (original,
// augmented) embedding pairs. Both views are pooled into 2N anchors; each
// anchor's denominator runs over the other 2N-1 embeddings and the loss is
// the mean of the per-anchor terms. Cosine similarities are symmetric, so
// each unordered pair is computed once and its node shared between anchors.
inline ad::Var nt_xent(ad::Var z, ad::Var z_tilde, double temperature) {
    if (!(temperature > 0.0)) throw Error("nt_xent: temperature must be > 0");
    const Tensor& zv = z.value();
    const Tensor& ztv = z_tilde.value();
    if (zv.ndim() != 2 || ztv.ndim() != 2 || zv.dim(0) != ztv.dim(0) || zv.dim(1) != ztv.dim(1))
        throw Error("nt_xent: views must both be (N,K)");
    const int n = zv.dim(0);
    if (n < 1) throw Error("nt_xent: empty batch");
    const int total = 2 * n;

    std::vector<ad::Var> pool(static_cast<size_t>(total));
    for (int i = 0; i < n; ++i) {
        pool[static_cast<size_t>(i)] = ad::row(z, i);
        pool[static_cast<size_t>(n + i)] = ad::row(z_tilde, i);
    }

    // scaled similarity nodes for all unordered pairs
    std::vector<ad::Var> sim(static_cast<size_t>(total) * total);
    for (int i = 0; i < total; ++i) {
        for (int j = i + 1; j < total; ++j) {
            ad::Var s = ad::scale(
                ad::cosine_sim(pool[static_cast<size_t>(i)], pool[static_cast<size_t>(j)]),
                1.0 / temperature);
            sim[static_cast<size_t>(i) * total + j] = s;
            sim[static_cast<size_t>(j) * total + i] = s;
        }
    }

    std::vector<ad::Var> anchor_losses;
    anchor_losses.reserve(static_cast<size_t>(total));
    for (int i = 0; i < total; ++i) {
        const int positive = (i + n) % total;
        std::vector<ad::Var> denom;
        denom.reserve(static_cast<size_t>(total - 1));
        for (int k = 0; k < total; ++k)
            if (k != i) denom.push_back(sim[static_cast<size_t>(i) * total + k]);
        ad::Var lse = ad::logsumexp(denom);
        anchor_losses.push_back(ad::sub(lse, sim[static_cast<size_t>(i) * total + positive]));
    }
    return ad::mean_list(anchor_losses);
}

// Convenience for tests and analytics: loss value from raw embedding
// matrices (N,K).
inline double nt_xent_value(const Tensor& z, const Tensor& z_tilde, double temperature) {
    ad::Tape tape(false);
    return nt_xent(tape.constant(z), tape.constant(z_tilde), temperature).value()[0];
}

// Embedding pair produced by the two branches of the contrastive pipeline.
struct ContrastiveBatch {
    ad::Var z;        // originals, (N,K)
    ad::Var z_tilde;  // augmented views, (N,K)
};

inline Tensor stack_signals(const std::vector<const EcgRecord*>& batch) {
    if (batch.empty()) throw Error("stack_signals: empty batch");
    const int d = batch.front()->leads(), len = batch.front()->length();
    Tensor x({static_cast<int>(batch.size()), d, len});
    for (size_t i = 0; i < batch.size(); ++i) {
        const Tensor& s = batch[i]->signal;
        if (s.dim(0) != d || s.dim(1) != len) throw Error("stack_signals: ragged batch");
        std::copy(s.data(), s.data() + s.size(), x.data() + i * s.size());
    }
    return x;
}

// One branch embeds the originals, the other embeds freshly augmented
// copies; index i of each output is the positive pair (z_i, z~_i).
inline ContrastiveBatch assemble_pairs(BoundModel& bm, const std::vector<const EcgRecord*>& batch,
                                       const AugmentationSpec& spec, Rng& rng, bool training) {
    if (batch.size() < 2) throw Error("assemble_pairs: contrastive batch needs at least 2 records");
    spec.validate();

    Tensor x = stack_signals(batch);
    const int d = batch.front()->leads(), len = batch.front()->length();
    Tensor x_aug({static_cast<int>(batch.size()), d, len});
    for (size_t i = 0; i < batch.size(); ++i) {
        Tensor view = augment::apply(spec, batch[i]->signal, rng);
        std::copy(view.data(), view.data() + view.size(), x_aug.data() + i * view.size());
    }

    ad::Tape& tape = bm.tape();
    ad::Var xo = tape.constant(std::move(x));
    ad::Var xa = tape.constant(std::move(x_aug));
    ad::Var h = encoder_forward(bm, xo, training);
    ad::Var ht = encoder_forward(bm, xa, training);
    return ContrastiveBatch{projection_forward(bm, h), projection_forward(bm, ht)};
}

}  // namespace ecgcl
