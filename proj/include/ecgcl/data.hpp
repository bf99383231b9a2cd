#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "ecgcl/rng.hpp"
#include "ecgcl/tensor.hpp"

namespace ecgcl {

constexpr int kNumSuperclasses = 5;
inline const std::array<const char*, kNumSuperclasses> kSuperclassNames = {
    "NORM", "MI", "STTC", "CD", "HYP"};

// Multi-label indicator over the five diagnostic superclasses.
struct LabelVector {
    std::array<uint8_t, kNumSuperclasses> bits{};

    bool any() const {
        for (uint8_t b : bits)
            if (b) return true;
        return false;
    }
    void set(int i) { bits[static_cast<size_t>(i)] = 1; }
    bool test(int i) const { return bits[static_cast<size_t>(i)] != 0; }

    Tensor to_tensor() const {
        Tensor t({kNumSuperclasses});
        for (int i = 0; i < kNumSuperclasses; ++i) t[static_cast<size_t>(i)] = bits[static_cast<size_t>(i)];
        return t;
    }

    bool operator==(const LabelVector&) const = default;
};

inline int superclass_index(const std::string& name) {
    for (int i = 0; i < kNumSuperclasses; ++i)
        if (name == kSuperclassNames[static_cast<size_t>(i)]) return i;
    return -1;
}

// A D x L multi-lead signal with sampling rate and optional annotation.
struct EcgRecord {
    Tensor signal;  // (D, L)
    double sampling_rate = 100.0;
    std::string record_id;
    std::optional<LabelVector> labels;
    int fold = 0;  // 1..10 when assigned, 0 otherwise

    int leads() const { return signal.dim(0); }
    int length() const { return signal.dim(1); }

    void check() const {
        if (signal.ndim() != 2 || signal.dim(0) < 1 || signal.dim(1) < 2)
            throw Error("record " + record_id + ": signal must be (D>=1, L>=2)");
        if (!signal.all_finite())
            throw Error("record " + record_id + ": signal contains non-finite samples");
    }
};

// Fold-based partition of record ids. Fold 10 is always the test fold; the
// pretraining and finetuning pools both draw from folds 1-9 (pretraining is
// label-free, finetuning later filters to labelled records).
struct DatasetSplit {
    std::vector<std::string> pretrain_ids;
    std::vector<std::string> finetune_ids;
    std::vector<std::string> test_ids;
    std::map<std::string, int> fold_assignment;
};

constexpr int kTestFold = 10;
constexpr int kTrainFolds = 9;

inline DatasetSplit split_folds(const std::vector<std::string>& ids,
                                const std::map<std::string, int>& fold_assignment) {
    DatasetSplit split;
    split.fold_assignment = fold_assignment;
    for (const std::string& id : ids) {
        auto it = fold_assignment.find(id);
        if (it == fold_assignment.end())
            throw Error("split_folds: no fold assignment for id '" + id + "'");
        if (it->second < 1 || it->second > 10)
            throw Error("split_folds: id '" + id + "' has fold " + std::to_string(it->second) +
                        " outside 1..10");
        if (it->second == kTestFold) {
            split.test_ids.push_back(id);
        } else {
            split.pretrain_ids.push_back(id);
            split.finetune_ids.push_back(id);
        }
    }
    return split;
}

// Whole-fold label fraction: numerator folds out of the nine training folds.
struct LabelFraction {
    int numerator = 9;  // 1, 4 or 9

    static LabelFraction of(int numerator) {
        if (numerator != 1 && numerator != 4 && numerator != 9)
            throw Error("label fraction numerator must be 1, 4 or 9");
        return LabelFraction{numerator};
    }
    // 10% / 40% / 100% in the result tables
    std::string percent_label() const {
        switch (numerator) {
            case 1: return "10%";
            case 4: return "40%";
            default: return "100%";
        }
    }
};

// Ids of the selected whole folds, deterministic in the seed. Fold choice is
// a seeded shuffle prefix, so smaller fractions are subsets of larger ones
// under the same seed.
inline std::vector<std::string> select_label_fraction(const DatasetSplit& split, LabelFraction f,
                                                      uint64_t seed) {
    std::vector<int> folds(kTrainFolds);
    for (int i = 0; i < kTrainFolds; ++i) folds[static_cast<size_t>(i)] = i + 1;
    Rng rng(splitmix64(seed ^ 0x6c6162656cULL));
    rng.shuffle(folds);
    std::set<int> chosen(folds.begin(), folds.begin() + f.numerator);

    std::vector<std::string> out;
    for (const std::string& id : split.finetune_ids)
        if (chosen.count(split.fold_assignment.at(id))) out.push_back(id);
    return out;
}

// ---------------------------------------------------------------------------
// normalization
// ---------------------------------------------------------------------------

// Per-lead standardization to zero mean, unit variance. Leads whose variance
// falls under the floor come back as all zeros and are reported through
// `constant_leads` so callers can warn.
inline EcgRecord normalize(const EcgRecord& record, std::vector<int>* constant_leads = nullptr,
                           double variance_floor = 1e-8) {
    record.check();
    EcgRecord out = record;
    const int d = record.leads(), len = record.length();
    for (int lead = 0; lead < d; ++lead) {
        double* rowv = out.signal.data() + static_cast<size_t>(lead) * len;
        double mu = 0.0;
        for (int i = 0; i < len; ++i) mu += rowv[i];
        mu /= len;
        double var = 0.0;
        for (int i = 0; i < len; ++i) var += (rowv[i] - mu) * (rowv[i] - mu);
        var /= len;
        if (var < variance_floor) {
            for (int i = 0; i < len; ++i) rowv[i] = 0.0;
            if (constant_leads) constant_leads->push_back(lead);
        } else {
            const double inv = 1.0 / std::sqrt(var);
            for (int i = 0; i < len; ++i) rowv[i] = (rowv[i] - mu) * inv;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// synthetic generator
// ---------------------------------------------------------------------------

// Desk-scale stand-in for a real corpus: quasi-periodic multi-lead signals
// built from per-beat Gaussian bumps (P/QRS/T surrogates). Classes differ by
// beat period and T-wave polarity; not a physiological claim.
struct SyntheticConfig {
    int count = 64;
    int classes = 2;
    int leads = 12;
    int length = 1000;
    double sampling_rate = 100.0;
    uint64_t seed = 1;

    double base_period_s = 1.0;    // class 0 beat period
    double period_step_s = 0.25;   // class c period = base - c*step
    double period_jitter_s = 0.04; // per-record sampled jitter
    double noise_sigma = 0.05;     // fixed per-record noise pattern
    double t_amp = 0.35;           // T-wave amplitude, sign alternates by class

    // optional per-record baseline wander (slow sinusoid with random
    // amplitude in [0, max], frequency and phase); 0 disables
    double wander_amplitude_max = 0.0;
    double wander_freq_min_hz = 0.15;
    double wander_freq_max_hz = 0.45;
};

namespace detail {
inline void add_bump(double* row, int len, double fs, double center_s, double amp, double width_s) {
    const int lo = std::max(0, static_cast<int>((center_s - 4.0 * width_s) * fs));
    const int hi = std::min(len - 1, static_cast<int>((center_s + 4.0 * width_s) * fs));
    for (int i = lo; i <= hi; ++i) {
        const double dt = i / fs - center_s;
        row[i] += amp * std::exp(-dt * dt / (2.0 * width_s * width_s));
    }
}
}  // namespace detail

inline std::vector<EcgRecord> generate_synthetic(const SyntheticConfig& cfg) {
    if (cfg.count < 1) throw Error("generate_synthetic: need count >= 1");
    if (cfg.classes < 2 || cfg.classes > kNumSuperclasses)
        throw Error("generate_synthetic: classes must be in 2..5");

    Rng rng(splitmix64(cfg.seed ^ 0x73796e7468ULL));
    std::vector<EcgRecord> records;
    records.reserve(static_cast<size_t>(cfg.count));

    // fixed per-lead projection of the base waveform, sign-alternating like a
    // crude lead system
    std::vector<double> lead_gain(static_cast<size_t>(cfg.leads));
    for (int lead = 0; lead < cfg.leads; ++lead)
        lead_gain[static_cast<size_t>(lead)] = (lead % 3 == 2 ? -1.0 : 1.0) * (0.5 + 0.08 * lead);

    for (int idx = 0; idx < cfg.count; ++idx) {
        const int cls = idx % cfg.classes;
        const double period =
            cfg.base_period_s - cls * cfg.period_step_s + rng.normal(0.0, cfg.period_jitter_s);
        const double phase = rng.uniform(0.0, period);
        const double t_amp = (cls % 2 == 0 ? cfg.t_amp : -cfg.t_amp) * (1.0 + 0.1 * rng.normal());
        const double qrs_width = 0.012 + 0.002 * cls;
        const double r_amp = 1.0 + 0.1 * rng.normal();

        // base single-lead morphology for this record
        std::vector<double> base(static_cast<size_t>(cfg.length), 0.0);
        const double duration = cfg.length / cfg.sampling_rate;
        for (double beat = -period + phase; beat < duration + period; beat += period) {
            detail::add_bump(base.data(), cfg.length, cfg.sampling_rate, beat - 0.16, 0.12, 0.03);   // P
            detail::add_bump(base.data(), cfg.length, cfg.sampling_rate, beat - 0.03, -0.15, 0.01);  // Q
            detail::add_bump(base.data(), cfg.length, cfg.sampling_rate, beat, r_amp, qrs_width);    // R
            detail::add_bump(base.data(), cfg.length, cfg.sampling_rate, beat + 0.03, -0.2, 0.01);   // S
            detail::add_bump(base.data(), cfg.length, cfg.sampling_rate, beat + 0.22, t_amp, 0.06);  // T
        }

        if (cfg.wander_amplitude_max > 0.0) {
            const double amp = rng.uniform(0.0, cfg.wander_amplitude_max);
            const double freq = rng.uniform(cfg.wander_freq_min_hz, cfg.wander_freq_max_hz);
            const double wphase = rng.uniform(0.0, 6.283185307179586);
            for (int i = 0; i < cfg.length; ++i)
                base[static_cast<size_t>(i)] +=
                    amp * std::sin(6.283185307179586 * freq * i / cfg.sampling_rate + wphase);
        }

        EcgRecord rec;
        rec.signal = Tensor({cfg.leads, cfg.length});
        rec.sampling_rate = cfg.sampling_rate;
        rec.record_id = "synth-" + std::to_string(idx);
        // class-balanced round-robin folds so fold splits stay stratified
        rec.fold = (idx / cfg.classes) % 10 + 1;
        LabelVector lv;
        lv.set(cls);
        rec.labels = lv;
        for (int lead = 0; lead < cfg.leads; ++lead) {
            double* rowv = rec.signal.data() + static_cast<size_t>(lead) * cfg.length;
            const double gain = lead_gain[static_cast<size_t>(lead)];
            for (int i = 0; i < cfg.length; ++i)
                rowv[i] = gain * base[static_cast<size_t>(i)] + rng.normal(0.0, cfg.noise_sigma);
        }
        records.push_back(std::move(rec));
    }
    return records;
}

}  // namespace ecgcl
