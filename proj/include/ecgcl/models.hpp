#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "ecgcl/autodiff.hpp"
#include "ecgcl/data.hpp"
#include "ecgcl/rng.hpp"
#include "ecgcl/tensor.hpp"

namespace ecgcl {

// Named parameter map. std::map keeps iteration (and therefore serialization,
// checksums and optimizer order) deterministic.
using ParamStore = std::map<std::string, Tensor>;

struct ConvSpec {
    int out_channels = 32;
    int kernel = 7;
};

struct PoolSpec {
    int kernel = 2;
    int stride = 2;
};

// Encoder layout is fixed as stem -> block1 -> pool1 -> block2 -> pool2 ->
// block3 -> pool3 -> block4 -> flatten; variant A blocks carry a residual
// skip (1x1 conv when channel counts differ), variant B drops the skip.
struct EncoderConfig {
    char variant = 'A';
    int in_channels = 12;
    int input_length = 1000;
    ConvSpec stem{32, 7};
    std::array<ConvSpec, 4> blocks{ConvSpec{64, 7}, ConvSpec{128, 7}, ConvSpec{256, 7},
                                   ConvSpec{384, 7}};
    std::array<PoolSpec, 3> pools{PoolSpec{2, 2}, PoolSpec{5, 5}, PoolSpec{5, 5}};
    int expected_flatten = 7680;

    int flatten_length() const {
        int len = input_length;  // stem and block convs use same padding
        for (const PoolSpec& p : pools) len = (len - p.kernel) / p.stride + 1;
        return len;
    }
    int flatten_size() const { return blocks[3].out_channels * flatten_length(); }
};

// Four linear layers each for the projection head and the classifier; ReLU
// between layers, none after the last projection layer, sigmoid after the
// last classifier layer.
struct HeadConfig {
    std::array<int, 4> projection_sizes{2048, 512, 128, 64};
    std::array<int, 4> classifier_sizes{512, 128, 32, 5};
};

struct ModelState {
    EncoderConfig encoder_cfg;
    HeadConfig head_cfg;
    ParamStore params;
    ParamStore buffers;  // batchnorm running statistics
    std::set<std::string> frozen;

    bool is_frozen(const std::string& component) const { return frozen.count(component) != 0; }
};

inline std::string component_of(const std::string& param_name) {
    return param_name.substr(0, param_name.find('.'));
}

namespace detail {

inline void he_uniform(Tensor& w, int fan_in, Rng& rng) {
    const double bound = std::sqrt(6.0 / fan_in);
    for (size_t i = 0; i < w.size(); ++i) w[i] = rng.uniform(-bound, bound);
}

inline void bias_uniform(Tensor& b, int fan_in, Rng& rng) {
    // nonzero bias keeps dead-relu samples away from exactly-zero embeddings
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (size_t i = 0; i < b.size(); ++i) b[i] = rng.uniform(-bound, bound);
}

inline void init_conv(ModelState& s, const std::string& name, int cin, int cout, int k, Rng& rng) {
    Tensor w({cout, cin, k});
    he_uniform(w, cin * k, rng);
    Tensor b({cout});
    bias_uniform(b, cin * k, rng);
    s.params[name + ".w"] = std::move(w);
    s.params[name + ".b"] = std::move(b);
}

inline void init_linear(ModelState& s, const std::string& name, int fin, int fout, Rng& rng) {
    Tensor w({fout, fin});
    he_uniform(w, fin, rng);
    Tensor b({fout});
    bias_uniform(b, fin, rng);
    s.params[name + ".w"] = std::move(w);
    s.params[name + ".b"] = std::move(b);
}

inline void init_batchnorm(ModelState& s, const std::string& name, int channels) {
    s.params[name + ".gamma"] = Tensor({channels}, 1.0);
    s.params[name + ".beta"] = Tensor({channels});
    s.buffers[name + ".running_mean"] = Tensor({channels});
    s.buffers[name + ".running_var"] = Tensor({channels}, 1.0);
}

}  // namespace detail

// Deterministic initialization of encoder + projection + classifier for one
// seed: He-uniform conv/linear weights, zero biases, gamma=1, beta=0.
inline ModelState build_model(const EncoderConfig& enc, const HeadConfig& head, uint64_t seed) {
    if (enc.variant != 'A' && enc.variant != 'B')
        throw Error("encoder variant must be 'A' or 'B'");
    const int flat = enc.flatten_size();
    if (enc.expected_flatten > 0 && flat != enc.expected_flatten)
        throw Error("encoder config yields flatten size " + std::to_string(flat) +
                    ", expected " + std::to_string(enc.expected_flatten));
    if (head.classifier_sizes.back() != kNumSuperclasses)
        throw Error("classifier output width must be " + std::to_string(kNumSuperclasses));

    if (enc.stem.kernel % 2 == 0) throw Error("stem kernel must be odd for same padding");
    for (const ConvSpec& b : enc.blocks)
        if (b.kernel % 2 == 0) throw Error("block kernels must be odd for same padding");

    ModelState s;
    s.encoder_cfg = enc;
    s.head_cfg = head;
    Rng rng(splitmix64(seed ^ 0x6d6f64656cULL));

    detail::init_conv(s, "encoder.stem", enc.in_channels, enc.stem.out_channels, enc.stem.kernel,
                      rng);
    int cin = enc.stem.out_channels;
    for (int b = 0; b < 4; ++b) {
        const std::string base = "encoder.block" + std::to_string(b + 1);
        const int cout = enc.blocks[static_cast<size_t>(b)].out_channels;
        const int k = enc.blocks[static_cast<size_t>(b)].kernel;
        detail::init_conv(s, base + ".conv1", cin, cout, k, rng);
        detail::init_batchnorm(s, base + ".bn1", cout);
        detail::init_conv(s, base + ".conv2", cout, cout, k, rng);
        detail::init_batchnorm(s, base + ".bn2", cout);
        if (enc.variant == 'A' && cin != cout) detail::init_conv(s, base + ".skip", cin, cout, 1, rng);
        cin = cout;
    }

    int fin = flat;
    for (int i = 0; i < 4; ++i) {
        const int fout = head.projection_sizes[static_cast<size_t>(i)];
        detail::init_linear(s, "projection.fc" + std::to_string(i + 1), fin, fout, rng);
        fin = fout;
    }
    fin = flat;
    for (int i = 0; i < 4; ++i) {
        const int fout = head.classifier_sizes[static_cast<size_t>(i)];
        detail::init_linear(s, "classifier.fc" + std::to_string(i + 1), fin, fout, rng);
        fin = fout;
    }
    return s;
}

inline ModelState build_encoder(const EncoderConfig& enc, uint64_t seed) {
    return build_model(enc, HeadConfig{}, seed);
}

// Binds model parameters to tape leaves once per tape so repeated forward
// passes (the two contrastive branches) share leaves and accumulate into the
// same gradients.
class BoundModel {
public:
    BoundModel(ad::Tape& tape, ModelState& state) : tape_(tape), state_(state) {}

    ad::Var param(const std::string& name) {
        auto it = leaves_.find(name);
        if (it != leaves_.end()) return it->second;
        auto pit = state_.params.find(name);
        if (pit == state_.params.end()) throw Error("unknown parameter '" + name + "'");
        const bool track = !state_.is_frozen(component_of(name));
        ad::Var v = tape_.leaf(pit->second, track);
        leaves_.emplace(name, v);
        return v;
    }

    ad::BatchNormBuffers buffers(const std::string& name) {
        return ad::BatchNormBuffers{state_.buffers.at(name + ".running_mean"),
                                    state_.buffers.at(name + ".running_var")};
    }

    void store_buffers(const std::string& name, const ad::BatchNormBuffers& buf) {
        state_.buffers[name + ".running_mean"] = buf.running_mean;
        state_.buffers[name + ".running_var"] = buf.running_var;
    }

    // Gradients of all tracked parameters after tape.backward().
    std::map<std::string, Tensor> grads() {
        std::map<std::string, Tensor> out;
        for (const auto& [name, var] : leaves_) {
            if (!state_.is_frozen(component_of(name))) out[name] = tape_.grad(var);
        }
        return out;
    }

    ad::Tape& tape() { return tape_; }
    ModelState& state() { return state_; }

private:
    ad::Tape& tape_;
    ModelState& state_;
    std::map<std::string, ad::Var> leaves_;
};

namespace detail {

inline ad::Var conv_same(BoundModel& bm, const std::string& name, ad::Var x, int kernel) {
    // "same" padding keeps the residual add shape-compatible; kernels are odd
    return ad::conv1d(x, bm.param(name + ".w"), bm.param(name + ".b"), 1, kernel / 2);
}

inline ad::Var block_forward(BoundModel& bm, const std::string& base, ad::Var x, int kernel,
                             bool residual, bool channels_change, bool training) {
    ad::Var y = conv_same(bm, base + ".conv1", x, kernel);
    {
        ad::BatchNormBuffers buf = bm.buffers(base + ".bn1");
        y = ad::batchnorm1d(y, bm.param(base + ".bn1.gamma"), bm.param(base + ".bn1.beta"), buf,
                            training);
        if (training) bm.store_buffers(base + ".bn1", buf);
    }
    y = ad::elu(y);
    y = conv_same(bm, base + ".conv2", y, kernel);
    {
        ad::BatchNormBuffers buf = bm.buffers(base + ".bn2");
        y = ad::batchnorm1d(y, bm.param(base + ".bn2.gamma"), bm.param(base + ".bn2.beta"), buf,
                            training);
        if (training) bm.store_buffers(base + ".bn2", buf);
    }
    if (residual) {
        ad::Var skip = channels_change ? ad::conv1d(x, bm.param(base + ".skip.w"),
                                                    bm.param(base + ".skip.b"), 1, 0)
                                       : x;
        y = ad::add(y, skip);
    }
    return ad::elu(y);
}

}  // namespace detail

// h = E(x), x: (N, D, L) -> (N, flatten)
inline ad::Var encoder_forward(BoundModel& bm, ad::Var x, bool training) {
    const EncoderConfig& cfg = bm.state().encoder_cfg;
    const Tensor& xv = x.value();
    if (xv.ndim() != 3 || xv.dim(1) != cfg.in_channels || xv.dim(2) != cfg.input_length)
        throw Error("encoder input must be (N," + std::to_string(cfg.in_channels) + "," +
                    std::to_string(cfg.input_length) + "), got " + shape_str(xv.shape()));

    ad::Var y = detail::conv_same(bm, "encoder.stem", x, cfg.stem.kernel);
    int cin = cfg.stem.out_channels;
    for (int b = 0; b < 4; ++b) {
        const std::string base = "encoder.block" + std::to_string(b + 1);
        const int cout = cfg.blocks[static_cast<size_t>(b)].out_channels;
        y = detail::block_forward(bm, base, y, cfg.blocks[static_cast<size_t>(b)].kernel,
                                  cfg.variant == 'A', cin != cout, training);
        if (b < 3) {
            const PoolSpec& p = cfg.pools[static_cast<size_t>(b)];
            y = ad::maxpool1d(y, p.kernel, p.stride);
        }
        cin = cout;
    }
    return ad::flatten(y);
}

// z = G(h): four linear layers, ReLU between, no activation after the last.
inline ad::Var projection_forward(BoundModel& bm, ad::Var h) {
    ad::Var y = h;
    for (int i = 0; i < 4; ++i) {
        y = ad::linear(y, bm.param("projection.fc" + std::to_string(i + 1) + ".w"),
                       bm.param("projection.fc" + std::to_string(i + 1) + ".b"));
        if (i < 3) y = ad::relu(y);
    }
    return y;
}

// c = C(h): four linear layers, ReLU between, sigmoid output in (0,1)^5.
inline ad::Var classifier_forward(BoundModel& bm, ad::Var h) {
    ad::Var y = h;
    for (int i = 0; i < 4; ++i) {
        y = ad::linear(y, bm.param("classifier.fc" + std::to_string(i + 1) + ".w"),
                       bm.param("classifier.fc" + std::to_string(i + 1) + ".b"));
        if (i < 3) y = ad::relu(y);
    }
    return ad::sigmoid(y);
}

inline void freeze(ModelState& state, const std::string& component) {
    bool known = false;
    for (const auto& [name, _] : state.params)
        if (component_of(name) == component) known = true;
    if (!known) throw Error("freeze: unknown component '" + component + "'");
    state.frozen.insert(component);
}

inline void unfreeze(ModelState& state, const std::string& component) {
    state.frozen.erase(component);
}

// FNV-1a over the raw bytes of a component's parameters and buffers, in map
// order. Used to assert the freeze contract bit-exactly.
inline uint64_t component_checksum(const ModelState& state, const std::string& component) {
    uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&h](const Tensor& t) {
        const unsigned char* p = reinterpret_cast<const unsigned char*>(t.data());
        for (size_t i = 0; i < t.size() * sizeof(double); ++i) {
            h ^= p[i];
            h *= 0x100000001b3ULL;
        }
    };
    for (const auto& [name, tensor] : state.params)
        if (component_of(name) == component) mix(tensor);
    for (const auto& [name, tensor] : state.buffers)
        if (component_of(name) == component) mix(tensor);
    return h;
}

inline size_t component_param_count(const ModelState& state, const std::string& component) {
    size_t n = 0;
    for (const auto& [name, tensor] : state.params)
        if (component_of(name) == component) n += tensor.size();
    return n;
}

}  // namespace ecgcl
