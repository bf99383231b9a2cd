#pragma once

#include <algorithm>
#include <cmath>
#include <deque>
#include <functional>
#include <utility>
#include <vector>

#include "ecgcl/tensor.hpp"

namespace ecgcl::ad {

class Tape;

// Lightweight handle into a tape. Copying a Var never copies data.
struct Var {
    Tape* tape = nullptr;
    int id = -1;

    const Tensor& value() const;
    bool valid() const { return tape != nullptr && id >= 0; }
};

// Reverse-mode differentiation tape. Nodes are appended in evaluation order,
// so the reverse sweep is a plain backwards iteration; each backward closure
// receives the node's output gradient and scatters into its parents. One tape
// per training step, single-threaded by contract.
class Tape {
public:
    using BackFn = std::function<void(Tape&, const Tensor& gout)>;

    explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}

    bool grad_enabled() const { return grad_enabled_; }

    Var leaf(Tensor v, bool requires_grad = false) {
        nodes_.push_back(Node{std::move(v), Tensor{}, nullptr,
                              grad_enabled_ && requires_grad, false});
        return Var{this, static_cast<int>(nodes_.size()) - 1};
    }

    Var constant(Tensor v) { return leaf(std::move(v), false); }

    const Tensor& value(Var v) const { return nodes_[static_cast<size_t>(v.id)].value; }

    bool has_grad(Var v) const { return nodes_[static_cast<size_t>(v.id)].grad_alloc; }

    // Gradient accumulated by the last backward(); zeros if v was not reached.
    const Tensor& grad(Var v) { return grad_buf(v.id); }

    // Seeds d(loss)/d(loss) = 1 and accumulates gradients for every tracked
    // node reachable from loss.
    void backward(Var loss) {
        const Node& ln = nodes_[static_cast<size_t>(loss.id)];
        if (ln.value.size() != 1)
            throw Error("backward: loss must be scalar, got shape " + shape_str(ln.value.shape()));
        grad_buf(loss.id)[0] += 1.0;
        for (int i = loss.id; i >= 0; --i) {
            Node& n = nodes_[static_cast<size_t>(i)];
            if (n.grad_alloc && n.backward) n.backward(*this, n.grad);
        }
    }

    void clear() { nodes_.clear(); }
    size_t size() const { return nodes_.size(); }

    // -- op builder interface -----------------------------------------------

    Var emit(Tensor value, const std::vector<int>& parents, BackFn back) {
        bool req = false;
        for (int p : parents) req = req || nodes_[static_cast<size_t>(p)].requires_grad;
        Node n{std::move(value), Tensor{}, nullptr, grad_enabled_ && req, false};
        if (n.requires_grad) n.backward = std::move(back);
        nodes_.push_back(std::move(n));
        return Var{this, static_cast<int>(nodes_.size()) - 1};
    }

    Tensor& grad_buf(int id) {
        Node& n = nodes_[static_cast<size_t>(id)];
        if (!n.grad_alloc) {
            n.grad = Tensor(n.value.shape());
            n.grad_alloc = true;
        }
        return n.grad;
    }

private:
    struct Node {
        Tensor value;
        Tensor grad;
        BackFn backward;
        bool requires_grad = false;
        bool grad_alloc = false;
    };

    // deque keeps value()/grad() references stable while ops append nodes
    std::deque<Node> nodes_;
    bool grad_enabled_;
};

inline const Tensor& Var::value() const { return tape->value(*this); }

namespace detail {

inline Tape& same_tape(Var a, Var b) {
    if (a.tape != b.tape) throw Error("operands live on different tapes");
    return *a.tape;
}

inline void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (!a.same_shape(b))
        throw Error(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                    shape_str(b.shape()));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// elementwise and scalar ops
// ---------------------------------------------------------------------------

inline Var add(Var a, Var b) {
    Tape& t = detail::same_tape(a, b);
    const Tensor& av = t.value(a);
    const Tensor& bv = t.value(b);
    detail::check_same_shape(av, bv, "add");
    Tensor out = av;
    for (size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
    const int ai = a.id, bi = b.id;
    return t.emit(std::move(out), {ai, bi}, [ai, bi](Tape& tp, const Tensor& g) {
        Tensor& ga = tp.grad_buf(ai);
        Tensor& gb = tp.grad_buf(bi);
        for (size_t i = 0; i < g.size(); ++i) {
            ga[i] += g[i];
            gb[i] += g[i];
        }
    });
}

inline Var sub(Var a, Var b) {
    Tape& t = detail::same_tape(a, b);
    const Tensor& av = t.value(a);
    const Tensor& bv = t.value(b);
    detail::check_same_shape(av, bv, "sub");
    Tensor out = av;
    for (size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
    const int ai = a.id, bi = b.id;
    return t.emit(std::move(out), {ai, bi}, [ai, bi](Tape& tp, const Tensor& g) {
        Tensor& ga = tp.grad_buf(ai);
        Tensor& gb = tp.grad_buf(bi);
        for (size_t i = 0; i < g.size(); ++i) {
            ga[i] += g[i];
            gb[i] -= g[i];
        }
    });
}

inline Var mul(Var a, Var b) {
    Tape& t = detail::same_tape(a, b);
    const Tensor av = t.value(a);
    const Tensor bv = t.value(b);
    detail::check_same_shape(av, bv, "mul");
    Tensor out = av;
    for (size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
    const int ai = a.id, bi = b.id;
    return t.emit(std::move(out), {ai, bi}, [ai, bi, av, bv](Tape& tp, const Tensor& g) {
        Tensor& ga = tp.grad_buf(ai);
        Tensor& gb = tp.grad_buf(bi);
        for (size_t i = 0; i < g.size(); ++i) {
            ga[i] += g[i] * bv[i];
            gb[i] += g[i] * av[i];
        }
    });
}

inline Var scale(Var a, double c) {
    Tape& t = *a.tape;
    Tensor out = t.value(a);
    for (size_t i = 0; i < out.size(); ++i) out[i] *= c;
    const int ai = a.id;
    return t.emit(std::move(out), {ai}, [ai, c](Tape& tp, const Tensor& g) {
        Tensor& ga = tp.grad_buf(ai);
        for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * c;
    });
}

inline Var sum(Var a) {
    Tape& t = *a.tape;
    const Tensor& av = t.value(a);
    const int ai = a.id;
    return t.emit(Tensor::scalar(av.sum()), {ai}, [ai](Tape& tp, const Tensor& g) {
        Tensor& ga = tp.grad_buf(ai);
        for (size_t i = 0; i < ga.size(); ++i) ga[i] += g[0];
    });
}

inline Var mean(Var a) { return scale(sum(a), 1.0 / static_cast<double>(a.value().size())); }

inline Var reshape(Var a, Shape s) {
    Tape& t = *a.tape;
    Tensor out = t.value(a).reshaped(std::move(s));
    const int ai = a.id;
    return t.emit(std::move(out), {ai}, [ai](Tape& tp, const Tensor& g) {
        Tensor& ga = tp.grad_buf(ai);
        for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    });
}

// (N, C, L) -> (N, C*L)
inline Var flatten(Var a) {
    const Tensor& av = a.value();
    if (av.ndim() < 2) throw Error("flatten: need at least 2 dims, got " + shape_str(av.shape()));
    int rest = 1;
    for (int i = 1; i < av.ndim(); ++i) rest *= av.dim(i);
    return reshape(a, {av.dim(0), rest});
}

// Extract row i of a 2-d tensor as a 1-d vector.
inline Var row(Var a, int i) {
    Tape& t = *a.tape;
    const Tensor& av = t.value(a);
    if (av.ndim() != 2) throw Error("row: need 2-d tensor, got " + shape_str(av.shape()));
    const int k = av.dim(1);
    Tensor out({k});
    for (int j = 0; j < k; ++j) out[static_cast<size_t>(j)] = av.at(i, j);
    const int ai = a.id;
    return t.emit(std::move(out), {ai}, [ai, i, k](Tape& tp, const Tensor& g) {
        Tensor& ga = tp.grad_buf(ai);
        for (int j = 0; j < k; ++j) ga[static_cast<size_t>(i) * k + j] += g[static_cast<size_t>(j)];
    });
}

// ---------------------------------------------------------------------------
// activations
// ---------------------------------------------------------------------------

inline Var relu(Var a) {
    Tape& t = *a.tape;
    const Tensor av = t.value(a);
    Tensor out = av;
    for (size_t i = 0; i < out.size(); ++i) out[i] = out[i] > 0.0 ? out[i] : 0.0;
    const int ai = a.id;
    return t.emit(std::move(out), {ai}, [ai, av](Tape& tp, const Tensor& g) {
        Tensor& ga = tp.grad_buf(ai);
        // subgradient 0 at the kink
        for (size_t i = 0; i < g.size(); ++i) ga[i] += av[i] > 0.0 ? g[i] : 0.0;
    });
}

inline Var elu(Var a) {
    Tape& t = *a.tape;
    const Tensor av = t.value(a);
    Tensor out = av;
    for (size_t i = 0; i < out.size(); ++i)
        out[i] = out[i] > 0.0 ? out[i] : std::expm1(out[i]);
    const int ai = a.id;
    return t.emit(std::move(out), {ai}, [ai, av](Tape& tp, const Tensor& g) {
        Tensor& ga = tp.grad_buf(ai);
        for (size_t i = 0; i < g.size(); ++i)
            ga[i] += g[i] * (av[i] > 0.0 ? 1.0 : std::exp(av[i]));
    });
}

inline Var sigmoid(Var a) {
    Tape& t = *a.tape;
    Tensor out = t.value(a);
    for (size_t i = 0; i < out.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-out[i]));
    const Tensor ov = out;
    const int ai = a.id;
    return t.emit(std::move(out), {ai}, [ai, ov](Tape& tp, const Tensor& g) {
        Tensor& ga = tp.grad_buf(ai);
        for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * ov[i] * (1.0 - ov[i]);
    });
}

// ---------------------------------------------------------------------------
// neural blocks
// ---------------------------------------------------------------------------

inline int conv1d_out_len(int length, int kernel, int stride, int padding) {
    return (length + 2 * padding - kernel) / stride + 1;
}

// Cross-correlation over the time axis. x: (N, Cin, L), w: (Cout, Cin, K),
// b: (Cout). Output (N, Cout, L') with L' = floor((L + 2p - K)/s) + 1.
inline Var conv1d(Var x, Var w, Var b, int stride = 1, int padding = 0) {
    Tape& t = *x.tape;
    const Tensor xv = t.value(x);
    const Tensor wv = t.value(w);
    const Tensor bv = t.value(b);
    if (xv.ndim() != 3 || wv.ndim() != 3)
        throw Error("conv1d: x must be (N,C,L) and w (Cout,Cin,K)");
    const int n = xv.dim(0), cin = xv.dim(1), len = xv.dim(2);
    const int cout = wv.dim(0), kin = wv.dim(1), k = wv.dim(2);
    if (cin != kin)
        throw Error("conv1d: input has " + std::to_string(cin) + " channels but kernel expects " +
                    std::to_string(kin));
    if (bv.ndim() != 1 || bv.dim(0) != cout) throw Error("conv1d: bias shape mismatch");
    if (stride < 1) throw Error("conv1d: stride must be >= 1");
    if (len + 2 * padding < k) throw Error("conv1d: kernel longer than padded input");
    const int lout = conv1d_out_len(len, k, stride, padding);

    Tensor out({n, cout, lout});
    for (int in = 0; in < n; ++in) {
        for (int co = 0; co < cout; ++co) {
            double* orow = out.data() + (static_cast<size_t>(in) * cout + co) * lout;
            for (int tpos = 0; tpos < lout; ++tpos) orow[tpos] = bv[static_cast<size_t>(co)];
            for (int ci = 0; ci < cin; ++ci) {
                const double* xrow = xv.data() + (static_cast<size_t>(in) * cin + ci) * len;
                const double* wrow = wv.data() + (static_cast<size_t>(co) * cin + ci) * k;
                for (int kk = 0; kk < k; ++kk) {
                    const double wval = wrow[kk];
                    if (wval == 0.0) continue;
                    for (int tpos = 0; tpos < lout; ++tpos) {
                        const int i = tpos * stride - padding + kk;
                        if (i >= 0 && i < len) orow[tpos] += wval * xrow[i];
                    }
                }
            }
        }
    }

    const int xi = x.id, wi = w.id, bi = b.id;
    return t.emit(std::move(out), {xi, wi, bi},
                  [=](Tape& tp, const Tensor& g) {
        Tensor& gx = tp.grad_buf(xi);
        Tensor& gw = tp.grad_buf(wi);
        Tensor& gb = tp.grad_buf(bi);
        for (int in = 0; in < n; ++in) {
            for (int co = 0; co < cout; ++co) {
                const double* grow = g.data() + (static_cast<size_t>(in) * cout + co) * lout;
                for (int tpos = 0; tpos < lout; ++tpos) gb[static_cast<size_t>(co)] += grow[tpos];
                for (int ci = 0; ci < cin; ++ci) {
                    const double* xrow = xv.data() + (static_cast<size_t>(in) * cin + ci) * len;
                    double* gxrow = gx.data() + (static_cast<size_t>(in) * cin + ci) * len;
                    const double* wrow = wv.data() + (static_cast<size_t>(co) * cin + ci) * k;
                    double* gwrow = gw.data() + (static_cast<size_t>(co) * cin + ci) * k;
                    for (int kk = 0; kk < k; ++kk) {
                        const double wval = wrow[kk];
                        double wacc = 0.0;
                        for (int tpos = 0; tpos < lout; ++tpos) {
                            const int i = tpos * stride - padding + kk;
                            if (i < 0 || i >= len) continue;
                            gxrow[i] += grow[tpos] * wval;
                            wacc += grow[tpos] * xrow[i];
                        }
                        gwrow[kk] += wacc;
                    }
                }
            }
        }
    });
}

// Max pooling over time, (N, C, L) -> (N, C, L'). Gradient routes to the
// first maximal index of each window.
inline Var maxpool1d(Var x, int kernel, int stride) {
    Tape& t = *x.tape;
    const Tensor& xv = t.value(x);
    if (xv.ndim() != 3) throw Error("maxpool1d: x must be (N,C,L)");
    const int n = xv.dim(0), c = xv.dim(1), len = xv.dim(2);
    if (len < kernel) throw Error("maxpool1d: input shorter than window");
    if (stride < 1) throw Error("maxpool1d: stride must be >= 1");
    const int lout = (len - kernel) / stride + 1;

    Tensor out({n, c, lout});
    std::vector<int> argmax(static_cast<size_t>(n) * c * lout);
    size_t oi = 0;
    for (int in = 0; in < n; ++in) {
        for (int ch = 0; ch < c; ++ch) {
            const double* xrow = xv.data() + (static_cast<size_t>(in) * c + ch) * len;
            for (int tpos = 0; tpos < lout; ++tpos, ++oi) {
                const int start = tpos * stride;
                int best = start;
                double bv = xrow[start];
                for (int j = start + 1; j < start + kernel; ++j) {
                    if (xrow[j] > bv) {
                        bv = xrow[j];
                        best = j;
                    }
                }
                out[oi] = bv;
                argmax[oi] = best;
            }
        }
    }

    const int xi = x.id;
    return t.emit(std::move(out), {xi},
                  [xi, n, c, len, lout, argmax = std::move(argmax)](Tape& tp, const Tensor& g) {
        Tensor& gx = tp.grad_buf(xi);
        size_t oi = 0;
        for (int in = 0; in < n; ++in) {
            for (int ch = 0; ch < c; ++ch) {
                double* gxrow = gx.data() + (static_cast<size_t>(in) * c + ch) * len;
                for (int tpos = 0; tpos < lout; ++tpos, ++oi) gxrow[argmax[oi]] += g[oi];
            }
        }
    });
}

// Affine map: x (N, Fin), w (Fout, Fin), b (Fout) -> (N, Fout).
inline Var linear(Var x, Var w, Var b) {
    Tape& t = *x.tape;
    const Tensor xv = t.value(x);
    const Tensor wv = t.value(w);
    const Tensor& bv = t.value(b);
    if (xv.ndim() != 2 || wv.ndim() != 2) throw Error("linear: x must be (N,F) and w (Fout,Fin)");
    const int n = xv.dim(0), fin = xv.dim(1), fout = wv.dim(0);
    if (wv.dim(1) != fin)
        throw Error("linear: input width " + std::to_string(fin) + " vs weight expecting " +
                    std::to_string(wv.dim(1)));
    if (bv.ndim() != 1 || bv.dim(0) != fout) throw Error("linear: bias shape mismatch");

    Tensor out({n, fout});
    for (int in = 0; in < n; ++in) {
        const double* xrow = xv.data() + static_cast<size_t>(in) * fin;
        double* orow = out.data() + static_cast<size_t>(in) * fout;
        for (int o = 0; o < fout; ++o) {
            const double* wrow = wv.data() + static_cast<size_t>(o) * fin;
            double acc = bv[static_cast<size_t>(o)];
            for (int i = 0; i < fin; ++i) acc += xrow[i] * wrow[i];
            orow[o] = acc;
        }
    }

    const int xi = x.id, wi = w.id, bi = b.id;
    return t.emit(std::move(out), {xi, wi, bi}, [=](Tape& tp, const Tensor& g) {
        Tensor& gx = tp.grad_buf(xi);
        Tensor& gw = tp.grad_buf(wi);
        Tensor& gb = tp.grad_buf(bi);
        for (int in = 0; in < n; ++in) {
            const double* grow = g.data() + static_cast<size_t>(in) * fout;
            const double* xrow = xv.data() + static_cast<size_t>(in) * fin;
            double* gxrow = gx.data() + static_cast<size_t>(in) * fin;
            for (int o = 0; o < fout; ++o) {
                const double go = grow[o];
                if (go == 0.0) continue;
                gb[static_cast<size_t>(o)] += go;
                const double* wrow = wv.data() + static_cast<size_t>(o) * fin;
                double* gwrow = gw.data() + static_cast<size_t>(o) * fin;
                for (int i = 0; i < fin; ++i) {
                    gxrow[i] += go * wrow[i];
                    gwrow[i] += go * xrow[i];
                }
            }
        }
    });
}

// Running statistics owned by the enclosing layer, updated only in training
// mode.
struct BatchNormBuffers {
    Tensor running_mean;
    Tensor running_var;
};

// Per-channel batch normalization over (N, L). Training mode normalizes with
// batch statistics (biased variance) and updates the running buffers with an
// unbiased variance estimate; eval mode is a fixed affine map of the buffers.
inline Var batchnorm1d(Var x, Var gamma, Var beta, BatchNormBuffers& buffers, bool training,
                       double momentum = 0.1, double eps = 1e-5) {
    Tape& t = *x.tape;
    const Tensor xv = t.value(x);
    const Tensor gv = t.value(gamma);
    const Tensor& bv = t.value(beta);
    if (xv.ndim() != 3) throw Error("batchnorm1d: x must be (N,C,L)");
    const int n = xv.dim(0), c = xv.dim(1), len = xv.dim(2);
    if (gv.dim(0) != c || bv.dim(0) != c) throw Error("batchnorm1d: gamma/beta width mismatch");
    const size_t m = static_cast<size_t>(n) * len;
    if (training && m < 2) throw Error("batchnorm1d: training mode needs N*L >= 2");

    Tensor mean_c({c}), invstd_c({c});
    if (training) {
        for (int ch = 0; ch < c; ++ch) {
            double s = 0.0;
            for (int in = 0; in < n; ++in) {
                const double* xrow = xv.data() + (static_cast<size_t>(in) * c + ch) * len;
                for (int i = 0; i < len; ++i) s += xrow[i];
            }
            const double mu = s / static_cast<double>(m);
            double sq = 0.0;
            for (int in = 0; in < n; ++in) {
                const double* xrow = xv.data() + (static_cast<size_t>(in) * c + ch) * len;
                for (int i = 0; i < len; ++i) sq += (xrow[i] - mu) * (xrow[i] - mu);
            }
            const double var = sq / static_cast<double>(m);
            mean_c[static_cast<size_t>(ch)] = mu;
            invstd_c[static_cast<size_t>(ch)] = 1.0 / std::sqrt(var + eps);
            const double var_unbiased = sq / static_cast<double>(m - 1);
            buffers.running_mean[static_cast<size_t>(ch)] =
                (1.0 - momentum) * buffers.running_mean[static_cast<size_t>(ch)] + momentum * mu;
            buffers.running_var[static_cast<size_t>(ch)] =
                (1.0 - momentum) * buffers.running_var[static_cast<size_t>(ch)] +
                momentum * var_unbiased;
        }
    } else {
        for (int ch = 0; ch < c; ++ch) {
            mean_c[static_cast<size_t>(ch)] = buffers.running_mean[static_cast<size_t>(ch)];
            invstd_c[static_cast<size_t>(ch)] =
                1.0 / std::sqrt(buffers.running_var[static_cast<size_t>(ch)] + eps);
        }
    }

    Tensor xhat({n, c, len});
    Tensor out({n, c, len});
    for (int in = 0; in < n; ++in) {
        for (int ch = 0; ch < c; ++ch) {
            const double mu = mean_c[static_cast<size_t>(ch)];
            const double is = invstd_c[static_cast<size_t>(ch)];
            const double ga = gv[static_cast<size_t>(ch)];
            const double be = bv[static_cast<size_t>(ch)];
            const double* xrow = xv.data() + (static_cast<size_t>(in) * c + ch) * len;
            double* hrow = xhat.data() + (static_cast<size_t>(in) * c + ch) * len;
            double* orow = out.data() + (static_cast<size_t>(in) * c + ch) * len;
            for (int i = 0; i < len; ++i) {
                hrow[i] = (xrow[i] - mu) * is;
                orow[i] = ga * hrow[i] + be;
            }
        }
    }

    const int xi = x.id, gi = gamma.id, bi = beta.id;
    return t.emit(std::move(out), {xi, gi, bi},
                  [=, xhat = std::move(xhat), invstd = std::move(invstd_c)](
                      Tape& tp, const Tensor& g) {
        Tensor& gx = tp.grad_buf(xi);
        Tensor& gg = tp.grad_buf(gi);
        Tensor& gb = tp.grad_buf(bi);
        const double md = static_cast<double>(m);
        for (int ch = 0; ch < c; ++ch) {
            double sum_dy = 0.0, sum_dy_xhat = 0.0;
            for (int in = 0; in < n; ++in) {
                const size_t base = (static_cast<size_t>(in) * c + ch) * len;
                for (int i = 0; i < len; ++i) {
                    sum_dy += g[base + i];
                    sum_dy_xhat += g[base + i] * xhat[base + i];
                }
            }
            gb[static_cast<size_t>(ch)] += sum_dy;
            gg[static_cast<size_t>(ch)] += sum_dy_xhat;
            const double ga = gv[static_cast<size_t>(ch)];
            const double is = invstd[static_cast<size_t>(ch)];
            if (training) {
                const double mean_dy = sum_dy / md;
                const double mean_dy_xhat = sum_dy_xhat / md;
                for (int in = 0; in < n; ++in) {
                    const size_t base = (static_cast<size_t>(in) * c + ch) * len;
                    for (int i = 0; i < len; ++i)
                        gx[base + i] +=
                            ga * is * (g[base + i] - mean_dy - xhat[base + i] * mean_dy_xhat);
                }
            } else {
                for (int in = 0; in < n; ++in) {
                    const size_t base = (static_cast<size_t>(in) * c + ch) * len;
                    for (int i = 0; i < len; ++i) gx[base + i] += ga * is * g[base + i];
                }
            }
        }
    });
}

// ---------------------------------------------------------------------------
// similarity and reductions used by the contrastive loss
// ---------------------------------------------------------------------------

// dot(u, v) / (|u| |v|) on flat vectors; errors name the offending operand.
inline Var cosine_sim(Var u, Var v, double norm_floor = 1e-12) {
    Tape& t = detail::same_tape(u, v);
    const Tensor uv = t.value(u);
    const Tensor vv = t.value(v);
    if (uv.size() != vv.size()) throw Error("cosine_sim: operand sizes differ");
    double dot = 0.0, nu2 = 0.0, nv2 = 0.0;
    for (size_t i = 0; i < uv.size(); ++i) {
        dot += uv[i] * vv[i];
        nu2 += uv[i] * uv[i];
        nv2 += vv[i] * vv[i];
    }
    const double nu = std::sqrt(nu2), nv = std::sqrt(nv2);
    if (nu < norm_floor) throw Error("cosine_sim: left operand has zero norm");
    if (nv < norm_floor) throw Error("cosine_sim: right operand has zero norm");
    const double sim = dot / (nu * nv);

    const int ui = u.id, vi = v.id;
    return t.emit(Tensor::scalar(sim), {ui, vi},
                  [ui, vi, uv, vv, nu, nv, sim](Tape& tp, const Tensor& g) {
        Tensor& gu = tp.grad_buf(ui);
        Tensor& gv = tp.grad_buf(vi);
        const double go = g[0];
        const double inv = 1.0 / (nu * nv);
        for (size_t i = 0; i < uv.size(); ++i) {
            gu[i] += go * (vv[i] * inv - sim * uv[i] / (nu * nu));
            gv[i] += go * (uv[i] * inv - sim * vv[i] / (nv * nv));
        }
    });
}

// log sum exp over a list of scalar nodes, max-shifted for stability.
inline Var logsumexp(const std::vector<Var>& xs) {
    if (xs.empty()) throw Error("logsumexp: empty input");
    Tape& t = *xs.front().tape;
    double mx = -HUGE_VAL;
    for (Var v : xs) {
        if (v.value().size() != 1) throw Error("logsumexp: operands must be scalar");
        mx = std::max(mx, v.value()[0]);
    }
    double s = 0.0;
    for (Var v : xs) s += std::exp(v.value()[0] - mx);
    const double lse = mx + std::log(s);

    std::vector<int> ids(xs.size());
    std::vector<double> vals(xs.size());
    std::vector<int> parents(xs.size());
    for (size_t i = 0; i < xs.size(); ++i) {
        ids[i] = xs[i].id;
        vals[i] = xs[i].value()[0];
        parents[i] = xs[i].id;
    }
    return t.emit(Tensor::scalar(lse), parents,
                  [ids = std::move(ids), vals = std::move(vals), lse](Tape& tp, const Tensor& g) {
        for (size_t i = 0; i < ids.size(); ++i)
            tp.grad_buf(ids[i])[0] += g[0] * std::exp(vals[i] - lse);
    });
}

inline Var sum_list(const std::vector<Var>& xs) {
    if (xs.empty()) throw Error("sum_list: empty input");
    Tape& t = *xs.front().tape;
    double s = 0.0;
    std::vector<int> ids(xs.size());
    for (size_t i = 0; i < xs.size(); ++i) {
        if (xs[i].value().size() != 1) throw Error("sum_list: operands must be scalar");
        s += xs[i].value()[0];
        ids[i] = xs[i].id;
    }
    std::vector<int> parents = ids;
    return t.emit(Tensor::scalar(s), parents, [ids = std::move(ids)](Tape& tp, const Tensor& g) {
        for (int id : ids) tp.grad_buf(id)[0] += g[0];
    });
}

inline Var mean_list(const std::vector<Var>& xs) {
    return scale(sum_list(xs), 1.0 / static_cast<double>(xs.size()));
}

// ---------------------------------------------------------------------------
// losses
// ---------------------------------------------------------------------------

// Mean over rows of the summed per-class binary cross-entropy. Predictions
// are clamped to [1e-12, 1-1e-12] before the logs; the gradient is zero in
// the clamped region.
inline Var bce(Var predictions, const Tensor& labels) {
    Tape& t = *predictions.tape;
    const Tensor cv = t.value(predictions);
    detail::check_same_shape(cv, labels, "bce");
    if (cv.ndim() != 2) throw Error("bce: predictions must be (N,C)");
    for (size_t i = 0; i < labels.size(); ++i)
        if (labels[i] != 0.0 && labels[i] != 1.0)
            throw Error("bce: label outside {0,1} at index " + std::to_string(i));
    const double lo = 1e-12, hi = 1.0 - 1e-12;
    const int n = cv.dim(0);
    double loss = 0.0;
    for (size_t i = 0; i < cv.size(); ++i) {
        const double c = std::clamp(cv[i], lo, hi);
        loss -= labels[i] * std::log(c) + (1.0 - labels[i]) * std::log(1.0 - c);
    }
    loss /= static_cast<double>(n);

    const int ci = predictions.id;
    return t.emit(Tensor::scalar(loss), {ci},
                  [ci, cv, labels, lo, hi, n](Tape& tp, const Tensor& g) {
        Tensor& gc = tp.grad_buf(ci);
        const double inv_n = 1.0 / static_cast<double>(n);
        for (size_t i = 0; i < cv.size(); ++i) {
            if (cv[i] <= lo || cv[i] >= hi) continue;
            gc[i] += g[0] * inv_n * (-labels[i] / cv[i] + (1.0 - labels[i]) / (1.0 - cv[i]));
        }
    });
}

}  // namespace ecgcl::ad
