#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <string>
#include <vector>

#include "ecgcl/rng.hpp"
#include "ecgcl/tensor.hpp"

namespace ecgcl {

enum class AugmentationKind {
    GaussianNoise,
    Scale,
    Permutation,
    VerticalFlip,
    HorizontalFlip,
    ZeroMask,
    TimeWarp,
};

inline const char* to_string(AugmentationKind k) {
    switch (k) {
        case AugmentationKind::GaussianNoise: return "gaussian_noise";
        case AugmentationKind::Scale: return "scale";
        case AugmentationKind::Permutation: return "permutation";
        case AugmentationKind::VerticalFlip: return "vertical_flip";
        case AugmentationKind::HorizontalFlip: return "horizontal_flip";
        case AugmentationKind::ZeroMask: return "zero_mask";
        case AugmentationKind::TimeWarp: return "time_warp";
    }
    return "?";
}

inline AugmentationKind augmentation_kind_from(const std::string& s) {
    if (s == "gaussian_noise") return AugmentationKind::GaussianNoise;
    if (s == "scale") return AugmentationKind::Scale;
    if (s == "permutation") return AugmentationKind::Permutation;
    if (s == "vertical_flip") return AugmentationKind::VerticalFlip;
    if (s == "horizontal_flip") return AugmentationKind::HorizontalFlip;
    if (s == "zero_mask") return AugmentationKind::ZeroMask;
    if (s == "time_warp") return AugmentationKind::TimeWarp;
    throw Error("unknown augmentation kind '" + s + "'");
}

// One augmentation choice plus its intensity. Only the fields relevant to
// `kind` are meaningful.
struct AugmentationSpec {
    AugmentationKind kind = AugmentationKind::GaussianNoise;
    double sigma = 0.1;          // GaussianNoise
    double scale_factor = 1.0;   // Scale
    int segments = 4;            // Permutation, TimeWarp
    double mask_fraction = 0.1;  // ZeroMask
    double warp_factor = 0.25;   // TimeWarp

    void validate() const {
        switch (kind) {
            case AugmentationKind::GaussianNoise:
                if (!(sigma > 0.0) || !std::isfinite(sigma)) throw Error("sigma must be finite and > 0");
                break;
            case AugmentationKind::Scale:
                if (!(scale_factor > 0.0)) throw Error("scale factor must be > 0");
                break;
            case AugmentationKind::Permutation:
                if (segments < 2) throw Error("permutation needs at least 2 segments");
                break;
            case AugmentationKind::ZeroMask:
                if (!(mask_fraction > 0.0 && mask_fraction < 1.0))
                    throw Error("mask fraction must be in (0,1)");
                break;
            case AugmentationKind::TimeWarp:
                if (segments < 2 || segments % 2 != 0)
                    throw Error("time warp needs an even segment count >= 2");
                if (!(warp_factor > 0.0 && warp_factor < 1.0))
                    throw Error("warp factor must be in (0,1)");
                break;
            default:
                break;
        }
    }

    // Textual parameter value as reported in sweep results.
    std::string param_label() const {
        char buf[48];
        switch (kind) {
            case AugmentationKind::GaussianNoise:
                std::snprintf(buf, sizeof buf, "%g", sigma);
                return buf;
            case AugmentationKind::Scale:
                std::snprintf(buf, sizeof buf, "%g", scale_factor);
                return buf;
            case AugmentationKind::Permutation:
                return std::to_string(segments);
            case AugmentationKind::ZeroMask:
                std::snprintf(buf, sizeof buf, "%g%%", mask_fraction * 100.0);
                return buf;
            case AugmentationKind::TimeWarp:
                std::snprintf(buf, sizeof buf, "%d-%g", segments, warp_factor);
                return buf;
            default:
                return "--";
        }
    }
};

namespace augment {

namespace detail {
inline void check_signal(const Tensor& x) {
    if (x.ndim() != 2) throw Error("augmentation input must be a (D,L) signal");
    if (x.dim(0) < 1 || x.dim(1) < 2) throw Error("signal needs D >= 1, L >= 2");
}
}  // namespace detail

// x~ = x + N with N(0, sigma) i.i.d. per lead and per sample.
inline Tensor gaussian_noise(const Tensor& x, double sigma, Rng& rng) {
    detail::check_signal(x);
    if (!std::isfinite(sigma) || sigma <= 0.0) throw Error("gaussian_noise: bad sigma");
    Tensor out = x;
    for (size_t i = 0; i < out.size(); ++i) out[i] += rng.normal(0.0, sigma);
    return out;
}

// x~ = S * x
inline Tensor scale(const Tensor& x, double factor) {
    detail::check_signal(x);
    if (!(factor > 0.0)) throw Error("scale: factor must be > 0");
    Tensor out = x;
    for (size_t i = 0; i < out.size(); ++i) out[i] *= factor;
    return out;
}

// Split the time axis into m contiguous segments (remainder joins the last
// one), shuffle the segment order once, apply the same order to every lead.
inline Tensor permutation(const Tensor& x, int m, Rng& rng) {
    detail::check_signal(x);
    const int d = x.dim(0), len = x.dim(1);
    if (m < 2) throw Error("permutation: need m >= 2");
    if (m > len) throw Error("permutation: m exceeds signal length");
    const int base = len / m;

    std::vector<int> order(static_cast<size_t>(m));
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);

    Tensor out({d, len});
    for (int lead = 0; lead < d; ++lead) {
        int pos = 0;
        for (int seg : order) {
            const int start = seg * base;
            const int stop = (seg == m - 1) ? len : start + base;
            for (int i = start; i < stop; ++i) out.at(lead, pos++) = x.at(lead, i);
        }
    }
    return out;
}

// x~ = -x
inline Tensor vertical_flip(const Tensor& x) {
    detail::check_signal(x);
    Tensor out = x;
    for (size_t i = 0; i < out.size(); ++i) out[i] = -out[i];
    return out;
}

// Time reversal per lead: x~[t] = x[L-1-t].
inline Tensor horizontal_flip(const Tensor& x) {
    detail::check_signal(x);
    const int d = x.dim(0), len = x.dim(1);
    Tensor out({d, len});
    for (int lead = 0; lead < d; ++lead)
        for (int i = 0; i < len; ++i) out.at(lead, i) = x.at(lead, len - 1 - i);
    return out;
}

// Zero out floor(r*L) consecutive samples at a random offset, the same
// window on every lead.
inline Tensor zero_mask(const Tensor& x, double r, Rng& rng) {
    detail::check_signal(x);
    if (!(r > 0.0 && r < 1.0)) throw Error("zero_mask: r must be in (0,1)");
    const int d = x.dim(0), len = x.dim(1);
    const int k = static_cast<int>(std::floor(r * len));
    const int offset = static_cast<int>(rng.below(static_cast<uint64_t>(len - k + 1)));
    Tensor out = x;
    for (int lead = 0; lead < d; ++lead)
        for (int i = offset; i < offset + k; ++i) out.at(lead, i) = 0.0;
    return out;
}

namespace detail {

// Endpoint-anchored linear resampling of src[0..n) to m points.
inline void resample_linear(const double* src, int n, double* dst, int m) {
    if (m == 1) {
        dst[0] = src[0];
        return;
    }
    const double step = static_cast<double>(n - 1) / static_cast<double>(m - 1);
    for (int j = 0; j < m; ++j) {
        const double pos = j * step;
        const int i0 = std::min(static_cast<int>(pos), n - 2);
        const double frac = pos - i0;
        dst[j] = src[i0] * (1.0 - frac) + src[i0 + 1] * frac;
    }
}

// Largest-remainder rounding of the raw lengths so they sum to total.
inline std::vector<int> apportion_lengths(const std::vector<double>& raw, int total) {
    const int m = static_cast<int>(raw.size());
    std::vector<int> out(static_cast<size_t>(m));
    std::vector<std::pair<double, int>> rema(static_cast<size_t>(m));
    int assigned = 0;
    for (int i = 0; i < m; ++i) {
        out[static_cast<size_t>(i)] = static_cast<int>(std::floor(raw[static_cast<size_t>(i)]));
        assigned += out[static_cast<size_t>(i)];
        rema[static_cast<size_t>(i)] = {raw[static_cast<size_t>(i)] - out[static_cast<size_t>(i)], i};
    }
    std::sort(rema.begin(), rema.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    for (int j = 0; j < total - assigned; ++j) out[static_cast<size_t>(rema[static_cast<size_t>(j)].second)] += 1;
    return out;
}

}  // namespace detail

// Split into m near-equal segments, stretch a random half of them by factor
// (1+w) and squeeze the rest by (1-w) via linear resampling; target lengths
// are corrected by largest remainder so the output length is exactly L. The
// same segment selection applies to every lead.
inline Tensor time_warp(const Tensor& x, int m, double w, Rng& rng) {
    detail::check_signal(x);
    if (m < 2 || m % 2 != 0) throw Error("time_warp: m must be even and >= 2");
    if (!(w > 0.0 && w < 1.0)) throw Error("time_warp: w must be in (0,1)");
    const int d = x.dim(0), len = x.dim(1);
    if (len / m < 2) throw Error("time_warp: segments shorter than 2 samples");

    // near-equal source segmentation; first (len mod m) segments get the
    // extra sample
    std::vector<int> src_len(static_cast<size_t>(m), len / m);
    for (int i = 0; i < len % m; ++i) src_len[static_cast<size_t>(i)] += 1;

    std::vector<int> pick(static_cast<size_t>(m));
    std::iota(pick.begin(), pick.end(), 0);
    rng.shuffle(pick);
    std::vector<bool> stretched(static_cast<size_t>(m), false);
    for (int i = 0; i < m / 2; ++i) stretched[static_cast<size_t>(pick[static_cast<size_t>(i)])] = true;

    const double seg = static_cast<double>(len) / m;
    std::vector<double> raw(static_cast<size_t>(m));
    for (int i = 0; i < m; ++i)
        raw[static_cast<size_t>(i)] = seg * (stretched[static_cast<size_t>(i)] ? (1.0 + w) : (1.0 - w));
    const std::vector<int> dst_len = detail::apportion_lengths(raw, len);
    for (int i = 0; i < m; ++i)
        if (dst_len[static_cast<size_t>(i)] < 2)
            throw Error("time_warp: squeezed segment would drop below 2 samples");

    Tensor out({d, len});
    for (int lead = 0; lead < d; ++lead) {
        const double* src = x.data() + static_cast<size_t>(lead) * len;
        double* dst = out.data() + static_cast<size_t>(lead) * len;
        int spos = 0, dpos = 0;
        for (int i = 0; i < m; ++i) {
            detail::resample_linear(src + spos, src_len[static_cast<size_t>(i)], dst + dpos,
                                    dst_len[static_cast<size_t>(i)]);
            spos += src_len[static_cast<size_t>(i)];
            dpos += dst_len[static_cast<size_t>(i)];
        }
    }
    return out;
}

// Dispatch on the spec; fresh randomness is drawn from rng per call.
inline Tensor apply(const AugmentationSpec& spec, const Tensor& x, Rng& rng) {
    spec.validate();
    switch (spec.kind) {
        case AugmentationKind::GaussianNoise: return gaussian_noise(x, spec.sigma, rng);
        case AugmentationKind::Scale: return scale(x, spec.scale_factor);
        case AugmentationKind::Permutation: return permutation(x, spec.segments, rng);
        case AugmentationKind::VerticalFlip: return vertical_flip(x);
        case AugmentationKind::HorizontalFlip: return horizontal_flip(x);
        case AugmentationKind::ZeroMask: return zero_mask(x, spec.mask_fraction, rng);
        case AugmentationKind::TimeWarp: return time_warp(x, spec.segments, spec.warp_factor, rng);
    }
    throw Error("apply: unreachable");
}

// The published intensity grid for each augmentation; flips contribute a
// single parameterless entry.
inline std::vector<AugmentationSpec> table1_grid(AugmentationKind kind) {
    std::vector<AugmentationSpec> grid;
    auto push = [&](AugmentationSpec s) {
        s.kind = kind;
        grid.push_back(s);
    };
    switch (kind) {
        case AugmentationKind::GaussianNoise:
            for (double s : {0.01, 0.03, 0.05, 0.07, 0.1, 0.15, 0.2, 0.25, 0.4, 0.6, 0.9})
                push({.sigma = s});
            break;
        case AugmentationKind::Scale:
            for (double s : {0.1, 0.3, 0.5, 0.8, 1.2, 1.7, 2.0, 2.5, 3.0})
                push({.scale_factor = s});
            break;
        case AugmentationKind::Permutation:
            for (int m : {2, 4, 5, 8, 10, 20}) push({.segments = m});
            break;
        case AugmentationKind::VerticalFlip:
        case AugmentationKind::HorizontalFlip:
            push({});
            break;
        case AugmentationKind::ZeroMask:
            for (double r : {0.1, 0.2, 0.3, 0.4, 0.5, 0.6}) push({.mask_fraction = r});
            break;
        case AugmentationKind::TimeWarp:
            for (int m : {2, 4})
                for (double w : {0.25, 0.5, 0.75}) push({.segments = m, .warp_factor = w});
            break;
    }
    return grid;
}

inline const std::vector<AugmentationKind>& all_augmentation_kinds() {
    static const std::vector<AugmentationKind> kinds = {
        AugmentationKind::GaussianNoise, AugmentationKind::Scale,
        AugmentationKind::Permutation,   AugmentationKind::VerticalFlip,
        AugmentationKind::HorizontalFlip, AugmentationKind::ZeroMask,
        AugmentationKind::TimeWarp,
    };
    return kinds;
}

}  // namespace augment
}  // namespace ecgcl
