#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "gridlang/common.hpp"
#include "gridlang/nn/tensor.hpp"

namespace gridlang::nn {

// ---------------------------------------------------------------------------
// Configuration

enum class Fusion : int { GatedAttention = 0, Concatenation = 1 };

inline const char* fusion_name(Fusion f) {
    return f == Fusion::GatedAttention ? "gated" : "concat";
}

inline Fusion parse_fusion(const std::string& name) {
    if (name == "gated" || name == "ga" || name == "gated-attention")
        return Fusion::GatedAttention;
    if (name == "concat" || name == "cat" || name == "concatenation")
        return Fusion::Concatenation;
    throw ConfigError("unknown fusion mode: " + name);
}

struct NetworkConfig {
    size_t in_channels = 16; // 4 stacked observations x 4 planes
    size_t grid_h = 10;
    size_t grid_w = 10;
    size_t conv1_filters = 16;
    size_t conv1_kernel = 3;
    size_t conv1_stride = 1;
    size_t conv2_filters = 32;
    size_t conv2_kernel = 3;
    size_t conv2_stride = 2;
    size_t vocab_size = 10;
    size_t embed_dim = 32;
    size_t instr_dim = 64;
    size_t trunk_hidden = 128;
    size_t n_actions = 4;
    Fusion fusion = Fusion::Concatenation;

    static size_t conv_out(size_t in, size_t kernel, size_t stride) {
        if (in < kernel) throw ShapeMismatchError("conv input smaller than kernel");
        return (in - kernel) / stride + 1;
    }

    size_t conv1_out_h() const { return conv_out(grid_h, conv1_kernel, conv1_stride); }
    size_t conv1_out_w() const { return conv_out(grid_w, conv1_kernel, conv1_stride); }
    size_t conv2_out_h() const { return conv_out(conv1_out_h(), conv2_kernel, conv2_stride); }
    size_t conv2_out_w() const { return conv_out(conv1_out_w(), conv2_kernel, conv2_stride); }
    size_t feature_len() const { return conv2_filters * conv2_out_h() * conv2_out_w(); }
    size_t input_len() const { return in_channels * grid_h * grid_w; }
    size_t trunk_in() const {
        return fusion == Fusion::Concatenation ? feature_len() + instr_dim : feature_len();
    }

    friend bool operator==(const NetworkConfig&, const NetworkConfig&) = default;
};

// ---------------------------------------------------------------------------
// Parameters

struct ParameterSet {
    NetworkConfig cfg;
    Tensor conv1_w, conv1_b;
    Tensor conv2_w, conv2_b;
    Tensor embed;
    Tensor gru_wz, gru_bz, gru_wr, gru_br, gru_wh, gru_bh;
    Tensor gate_w, gate_b; // gated attention only
    Tensor trunk_w, trunk_b;
    Tensor value_w, value_b;
    Tensor adv_w, adv_b;

    static ParameterSet create(const NetworkConfig& cfg) {
        ParameterSet p;
        p.cfg = cfg;
        const size_t xh = cfg.embed_dim + cfg.instr_dim;
        p.conv1_w = Tensor({cfg.conv1_filters, cfg.in_channels, cfg.conv1_kernel, cfg.conv1_kernel});
        p.conv1_b = Tensor({cfg.conv1_filters});
        p.conv2_w = Tensor({cfg.conv2_filters, cfg.conv1_filters, cfg.conv2_kernel, cfg.conv2_kernel});
        p.conv2_b = Tensor({cfg.conv2_filters});
        p.embed = Tensor({cfg.vocab_size, cfg.embed_dim});
        p.gru_wz = Tensor({cfg.instr_dim, xh});
        p.gru_bz = Tensor({cfg.instr_dim});
        p.gru_wr = Tensor({cfg.instr_dim, xh});
        p.gru_br = Tensor({cfg.instr_dim});
        p.gru_wh = Tensor({cfg.instr_dim, xh});
        p.gru_bh = Tensor({cfg.instr_dim});
        if (cfg.fusion == Fusion::GatedAttention) {
            p.gate_w = Tensor({cfg.conv2_filters, cfg.instr_dim});
            p.gate_b = Tensor({cfg.conv2_filters});
        }
        p.trunk_w = Tensor({cfg.trunk_hidden, cfg.trunk_in()});
        p.trunk_b = Tensor({cfg.trunk_hidden});
        p.value_w = Tensor({1, cfg.trunk_hidden});
        p.value_b = Tensor({1});
        p.adv_w = Tensor({cfg.n_actions, cfg.trunk_hidden});
        p.adv_b = Tensor({cfg.n_actions});
        return p;
    }

    // Seeded Gaussian fan-in init for weights, zeros for biases.
    static ParameterSet init(const NetworkConfig& cfg, Rng& rng) {
        ParameterSet p = create(cfg);
        auto fill = [&rng](Tensor& t, size_t fan_in) {
            const double std = 1.0 / std::sqrt(static_cast<double>(fan_in));
            for (double& v : t.data) v = std * rng.normal();
        };
        fill(p.conv1_w, cfg.in_channels * cfg.conv1_kernel * cfg.conv1_kernel);
        fill(p.conv2_w, cfg.conv1_filters * cfg.conv2_kernel * cfg.conv2_kernel);
        fill(p.embed, cfg.embed_dim);
        const size_t xh = cfg.embed_dim + cfg.instr_dim;
        fill(p.gru_wz, xh);
        fill(p.gru_wr, xh);
        fill(p.gru_wh, xh);
        if (cfg.fusion == Fusion::GatedAttention) fill(p.gate_w, cfg.instr_dim);
        fill(p.trunk_w, cfg.trunk_in());
        fill(p.value_w, cfg.trunk_hidden);
        fill(p.adv_w, cfg.trunk_hidden);
        return p;
    }

    template <typename F>
    void for_each(F&& f) {
        f("conv1_w", conv1_w);
        f("conv1_b", conv1_b);
        f("conv2_w", conv2_w);
        f("conv2_b", conv2_b);
        f("embed", embed);
        f("gru_wz", gru_wz);
        f("gru_bz", gru_bz);
        f("gru_wr", gru_wr);
        f("gru_br", gru_br);
        f("gru_wh", gru_wh);
        f("gru_bh", gru_bh);
        if (cfg.fusion == Fusion::GatedAttention) {
            f("gate_w", gate_w);
            f("gate_b", gate_b);
        }
        f("trunk_w", trunk_w);
        f("trunk_b", trunk_b);
        f("value_w", value_w);
        f("value_b", value_b);
        f("adv_w", adv_w);
        f("adv_b", adv_b);
    }

    template <typename F>
    void for_each(F&& f) const {
        const_cast<ParameterSet*>(this)->for_each(
            [&](const char* name, Tensor& t) { f(name, static_cast<const Tensor&>(t)); });
    }

    void zero() {
        for_each([](const char*, Tensor& t) { t.zero(); });
    }

    bool same_values(const ParameterSet& other) const {
        if (!(cfg == other.cfg)) return false;
        std::vector<const Tensor*> mine, theirs;
        for_each([&](const char*, const Tensor& t) { mine.push_back(&t); });
        other.for_each([&](const char*, const Tensor& t) { theirs.push_back(&t); });
        for (size_t i = 0; i < mine.size(); ++i)
            if (mine[i]->data != theirs[i]->data) return false;
        return true;
    }
};

using QValues = std::vector<double>;

inline size_t argmax_lowest(const std::vector<double>& values) {
    size_t best = 0;
    for (size_t i = 1; i < values.size(); ++i)
        if (values[i] > values[best]) best = i;
    return best;
}

// ---------------------------------------------------------------------------
// Primitive layers

inline double elu(double x) { return x > 0.0 ? x : std::expm1(x); }
// Derivative recovered from the activation value: exp(x) = act + 1 for x <= 0.
inline double elu_grad_from_act(double act) { return act > 0.0 ? 1.0 : act + 1.0; }

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

namespace detail {

// Valid-padding conv, input-driven: zero input cells contribute nothing, so
// the one-hot occupancy planes cost a fraction of a dense loop.
inline void conv2d_forward(const double* in, size_t ic, size_t ih, size_t iw,
                           const Tensor& w, const Tensor& b, size_t k, size_t s,
                           double* out, size_t oc, size_t oh, size_t ow) {
    for (size_t o = 0; o < oc; ++o)
        std::fill(out + o * oh * ow, out + (o + 1) * oh * ow, b[o]);
    for (size_t c = 0; c < ic; ++c) {
        for (size_t iy = 0; iy < ih; ++iy) {
            for (size_t ix = 0; ix < iw; ++ix) {
                const double v = in[(c * ih + iy) * iw + ix];
                if (v == 0.0) continue;
                for (size_t ky = 0; ky <= std::min(k - 1, iy); ++ky) {
                    const size_t ty = iy - ky;
                    if (ty % s != 0) continue;
                    const size_t oy = ty / s;
                    if (oy >= oh) continue;
                    for (size_t kx = 0; kx <= std::min(k - 1, ix); ++kx) {
                        const size_t tx = ix - kx;
                        if (tx % s != 0) continue;
                        const size_t ox = tx / s;
                        if (ox >= ow) continue;
                        const size_t wbase = ((c * k) + ky) * k + kx;
                        for (size_t o = 0; o < oc; ++o)
                            out[(o * oh + oy) * ow + ox] +=
                                v * w.data[(o * ic * k * k) + wbase];
                    }
                }
            }
        }
    }
}

inline void conv2d_backward(const double* in, size_t ic, size_t ih, size_t iw,
                            const Tensor& w, size_t k, size_t s, const double* dout,
                            size_t oc, size_t oh, size_t ow, Tensor& dw, Tensor& db,
                            double* din /* nullable */) {
    for (size_t o = 0; o < oc; ++o)
        for (size_t i = 0; i < oh * ow; ++i) db[o] += dout[o * oh * ow + i];

    for (size_t c = 0; c < ic; ++c) {
        for (size_t iy = 0; iy < ih; ++iy) {
            for (size_t ix = 0; ix < iw; ++ix) {
                const double v = in[(c * ih + iy) * iw + ix];
                if (v == 0.0) continue;
                for (size_t ky = 0; ky <= std::min(k - 1, iy); ++ky) {
                    const size_t ty = iy - ky;
                    if (ty % s != 0) continue;
                    const size_t oy = ty / s;
                    if (oy >= oh) continue;
                    for (size_t kx = 0; kx <= std::min(k - 1, ix); ++kx) {
                        const size_t tx = ix - kx;
                        if (tx % s != 0) continue;
                        const size_t ox = tx / s;
                        if (ox >= ow) continue;
                        const size_t wbase = ((c * k) + ky) * k + kx;
                        for (size_t o = 0; o < oc; ++o)
                            dw.data[(o * ic * k * k) + wbase] +=
                                v * dout[(o * oh + oy) * ow + ox];
                    }
                }
            }
        }
    }

    if (din != nullptr) {
        for (size_t o = 0; o < oc; ++o) {
            for (size_t oy = 0; oy < oh; ++oy) {
                for (size_t ox = 0; ox < ow; ++ox) {
                    const double g = dout[(o * oh + oy) * ow + ox];
                    if (g == 0.0) continue;
                    for (size_t c = 0; c < ic; ++c) {
                        for (size_t ky = 0; ky < k; ++ky) {
                            for (size_t kx = 0; kx < k; ++kx) {
                                din[(c * ih + oy * s + ky) * iw + (ox * s + kx)] +=
                                    g * w.data[((o * ic + c) * k + ky) * k + kx];
                            }
                        }
                    }
                }
            }
        }
    }
}

// y = W x + b, W is (rows, cols)
inline void affine_forward(const Tensor& w, const Tensor& b, const double* x, double* y) {
    const size_t rows = w.shape[0];
    const size_t cols = w.shape[1];
    for (size_t r = 0; r < rows; ++r) {
        double acc = b[r];
        const double* wr = w.data.data() + r * cols;
        for (size_t c = 0; c < cols; ++c) acc += wr[c] * x[c];
        y[r] = acc;
    }
}

inline void affine_backward(const Tensor& w, const double* x, const double* dy, Tensor& dw,
                            Tensor& db, double* dx /* nullable, accumulated into */) {
    const size_t rows = w.shape[0];
    const size_t cols = w.shape[1];
    for (size_t r = 0; r < rows; ++r) {
        const double g = dy[r];
        db[r] += g;
        double* dwr = dw.data.data() + r * cols;
        for (size_t c = 0; c < cols; ++c) dwr[c] += g * x[c];
        if (dx != nullptr && g != 0.0) {
            const double* wr = w.data.data() + r * cols;
            for (size_t c = 0; c < cols; ++c) dx[c] += g * wr[c];
        }
    }
}

} // namespace detail

// ---------------------------------------------------------------------------
// Forward trace

struct Trace {
    // image path
    std::vector<double> frames;    // copy of the network input
    std::vector<double> conv1_act; // post-ELU (f1, h1, w1)
    std::vector<double> conv2_act; // post-ELU feature map (f2, h2, w2)
    // instruction path
    std::vector<int> tokens;
    std::vector<double> xh; // per step: [x_t ; h_{t-1}], length L*(E+H)
    std::vector<double> z, r, hc; // per step, length L*H
    std::vector<double> instr;    // final hidden state (H)
    // fusion
    std::vector<double> gate_sig; // gated attention
    std::vector<double> trunk_in;
    std::vector<double> trunk_act;
    double value = 0.0;
    std::vector<double> adv;
    QValues q;
};

// ---------------------------------------------------------------------------
// Forward pieces

// Stacked frames -> feature map (conv2_filters, h2, w2), flattened.
inline std::vector<double> encode_image(const ParameterSet& p, const std::vector<double>& frames,
                                        Trace* trace = nullptr) {
    const NetworkConfig& cfg = p.cfg;
    if (frames.size() != cfg.input_len())
        throw ShapeMismatchError("encode_image: bad input length");

    const size_t h1 = cfg.conv1_out_h(), w1 = cfg.conv1_out_w();
    const size_t h2 = cfg.conv2_out_h(), w2 = cfg.conv2_out_w();
    std::vector<double> act1(cfg.conv1_filters * h1 * w1);
    detail::conv2d_forward(frames.data(), cfg.in_channels, cfg.grid_h, cfg.grid_w, p.conv1_w,
                           p.conv1_b, cfg.conv1_kernel, cfg.conv1_stride, act1.data(),
                           cfg.conv1_filters, h1, w1);
    for (double& v : act1) v = elu(v);

    std::vector<double> act2(cfg.conv2_filters * h2 * w2);
    detail::conv2d_forward(act1.data(), cfg.conv1_filters, h1, w1, p.conv2_w, p.conv2_b,
                           cfg.conv2_kernel, cfg.conv2_stride, act2.data(), cfg.conv2_filters,
                           h2, w2);
    for (double& v : act2) v = elu(v);

    if (trace != nullptr) {
        trace->frames = frames;
        trace->conv1_act = act1;
        trace->conv2_act = act2;
    }
    return act2;
}

inline void encode_image_backward(const ParameterSet& p, const Trace& trace,
                                  const std::vector<double>& dfeat, ParameterSet& grads) {
    const NetworkConfig& cfg = p.cfg;
    const size_t h1 = cfg.conv1_out_h(), w1 = cfg.conv1_out_w();
    const size_t h2 = cfg.conv2_out_h(), w2 = cfg.conv2_out_w();

    std::vector<double> dpre2(dfeat.size());
    for (size_t i = 0; i < dfeat.size(); ++i)
        dpre2[i] = dfeat[i] * elu_grad_from_act(trace.conv2_act[i]);

    std::vector<double> dact1(trace.conv1_act.size(), 0.0);
    detail::conv2d_backward(trace.conv1_act.data(), cfg.conv1_filters, h1, w1, p.conv2_w,
                            cfg.conv2_kernel, cfg.conv2_stride, dpre2.data(), cfg.conv2_filters,
                            h2, w2, grads.conv2_w, grads.conv2_b, dact1.data());

    std::vector<double> dpre1(dact1.size());
    for (size_t i = 0; i < dact1.size(); ++i)
        dpre1[i] = dact1[i] * elu_grad_from_act(trace.conv1_act[i]);
    detail::conv2d_backward(trace.frames.data(), cfg.in_channels, cfg.grid_h, cfg.grid_w,
                            p.conv1_w, cfg.conv1_kernel, cfg.conv1_stride, dpre1.data(),
                            cfg.conv1_filters, h1, w1, grads.conv1_w, grads.conv1_b, nullptr);
}

// Token ids -> sentence vector: embeddings fed through a single GRU cell,
// final hidden state returned.
inline std::vector<double> encode_instruction(const ParameterSet& p,
                                              const std::vector<int>& tokens,
                                              Trace* trace = nullptr) {
    const NetworkConfig& cfg = p.cfg;
    if (tokens.empty()) throw Error("encode_instruction: empty token sequence");
    for (int t : tokens)
        if (t < 0 || static_cast<size_t>(t) >= cfg.vocab_size)
            throw TokenOutOfRangeError("token id outside vocabulary");

    const size_t E = cfg.embed_dim, H = cfg.instr_dim, L = tokens.size();
    const size_t XH = E + H;
    std::vector<double> h(H, 0.0);
    std::vector<double> xh(XH), zg(H), rg(H), hcg(H), xrh(XH), pre(H);

    if (trace != nullptr) {
        trace->tokens = tokens;
        trace->xh.resize(L * XH);
        trace->z.resize(L * H);
        trace->r.resize(L * H);
        trace->hc.resize(L * H);
    }

    for (size_t t = 0; t < L; ++t) {
        const double* x = p.embed.data.data() + static_cast<size_t>(tokens[t]) * E;
        std::copy(x, x + E, xh.begin());
        std::copy(h.begin(), h.end(), xh.begin() + static_cast<long>(E));

        detail::affine_forward(p.gru_wz, p.gru_bz, xh.data(), pre.data());
        for (size_t i = 0; i < H; ++i) zg[i] = sigmoid(pre[i]);
        detail::affine_forward(p.gru_wr, p.gru_br, xh.data(), pre.data());
        for (size_t i = 0; i < H; ++i) rg[i] = sigmoid(pre[i]);

        std::copy(x, x + E, xrh.begin());
        for (size_t i = 0; i < H; ++i) xrh[E + i] = rg[i] * h[i];
        detail::affine_forward(p.gru_wh, p.gru_bh, xrh.data(), pre.data());
        for (size_t i = 0; i < H; ++i) hcg[i] = std::tanh(pre[i]);

        if (trace != nullptr) {
            std::copy(xh.begin(), xh.end(), trace->xh.begin() + static_cast<long>(t * XH));
            std::copy(zg.begin(), zg.end(), trace->z.begin() + static_cast<long>(t * H));
            std::copy(rg.begin(), rg.end(), trace->r.begin() + static_cast<long>(t * H));
            std::copy(hcg.begin(), hcg.end(), trace->hc.begin() + static_cast<long>(t * H));
        }
        for (size_t i = 0; i < H; ++i) h[i] = (1.0 - zg[i]) * h[i] + zg[i] * hcg[i];
    }
    if (trace != nullptr) trace->instr = h;
    return h;
}

inline void encode_instruction_backward(const ParameterSet& p, const Trace& trace,
                                        const std::vector<double>& dinstr,
                                        ParameterSet& grads) {
    const NetworkConfig& cfg = p.cfg;
    const size_t E = cfg.embed_dim, H = cfg.instr_dim, XH = E + H;
    const size_t L = trace.tokens.size();

    std::vector<double> dh = dinstr; // gradient w.r.t. h_t, walked backwards
    std::vector<double> dxh(XH), dxrh(XH), dgate(H), dpre(H);

    for (size_t t = L; t-- > 0;) {
        const double* xh = trace.xh.data() + t * XH;
        const double* zg = trace.z.data() + t * H;
        const double* rg = trace.r.data() + t * H;
        const double* hcg = trace.hc.data() + t * H;
        const double* hprev = xh + E;

        std::fill(dxh.begin(), dxh.end(), 0.0);
        std::fill(dxrh.begin(), dxrh.end(), 0.0);
        std::vector<double> dhprev(H, 0.0);

        // h_t = (1-z) h_{t-1} + z hc
        for (size_t i = 0; i < H; ++i) {
            dhprev[i] += dh[i] * (1.0 - zg[i]);
            dgate[i] = dh[i] * (hcg[i] - hprev[i]); // dz
        }
        // z pre-activation
        for (size_t i = 0; i < H; ++i) dpre[i] = dgate[i] * zg[i] * (1.0 - zg[i]);
        detail::affine_backward(p.gru_wz, xh, dpre.data(), grads.gru_wz, grads.gru_bz,
                                dxh.data());

        // hc = tanh(Wh [x ; r*h_{t-1}] + bh)
        for (size_t i = 0; i < H; ++i) dpre[i] = dh[i] * zg[i] * (1.0 - hcg[i] * hcg[i]);
        {
            // reconstruct xrh = [x ; r * h_{t-1}]
            std::vector<double> xrh(XH);
            std::copy(xh, xh + E, xrh.begin());
            for (size_t i = 0; i < H; ++i) xrh[E + i] = rg[i] * hprev[i];
            detail::affine_backward(p.gru_wh, xrh.data(), dpre.data(), grads.gru_wh,
                                    grads.gru_bh, dxrh.data());
        }
        for (size_t i = 0; i < H; ++i) {
            dhprev[i] += dxrh[E + i] * rg[i];
            dgate[i] = dxrh[E + i] * hprev[i]; // dr
        }
        for (size_t i = 0; i < H; ++i) dpre[i] = dgate[i] * rg[i] * (1.0 - rg[i]);
        detail::affine_backward(p.gru_wr, xh, dpre.data(), grads.gru_wr, grads.gru_br,
                                dxh.data());

        // split dxh into embedding row and previous hidden state
        double* dembed =
            grads.embed.data.data() + static_cast<size_t>(trace.tokens[t]) * E;
        for (size_t i = 0; i < E; ++i) dembed[i] += dxh[i] + dxrh[i];
        for (size_t i = 0; i < H; ++i) dh[i] = dhprev[i] + dxh[E + i];
    }
}

// Per-channel multiplicative gate: out[c,h,w] = sigmoid(gate_c) * feat[c,h,w].
inline std::vector<double> fuse_gated_attention(const ParameterSet& p,
                                                const std::vector<double>& feat,
                                                const std::vector<double>& instr,
                                                Trace* trace = nullptr) {
    const NetworkConfig& cfg = p.cfg;
    if (cfg.fusion != Fusion::GatedAttention)
        throw ShapeMismatchError("network not configured for gated attention");
    if (instr.size() != cfg.instr_dim || feat.size() != cfg.feature_len())
        throw ShapeMismatchError("fuse_gated_attention: bad input sizes");

    const size_t C = cfg.conv2_filters;
    const size_t hw = cfg.conv2_out_h() * cfg.conv2_out_w();
    std::vector<double> logits(C);
    detail::affine_forward(p.gate_w, p.gate_b, instr.data(), logits.data());
    std::vector<double> gate(C);
    for (size_t c = 0; c < C; ++c) gate[c] = sigmoid(logits[c]);

    std::vector<double> fused(feat.size());
    for (size_t c = 0; c < C; ++c)
        for (size_t i = 0; i < hw; ++i) fused[c * hw + i] = gate[c] * feat[c * hw + i];

    if (trace != nullptr) trace->gate_sig = gate;
    return fused;
}

// dfused -> (dfeat, dinstr, gate parameter grads)
inline void fuse_gated_attention_backward(const ParameterSet& p, const Trace& trace,
                                          const std::vector<double>& dfused,
                                          std::vector<double>& dfeat,
                                          std::vector<double>& dinstr, ParameterSet& grads) {
    const NetworkConfig& cfg = p.cfg;
    const size_t C = cfg.conv2_filters;
    const size_t hw = cfg.conv2_out_h() * cfg.conv2_out_w();

    std::vector<double> dlogit(C);
    dfeat.assign(dfused.size(), 0.0);
    for (size_t c = 0; c < C; ++c) {
        const double g = trace.gate_sig[c];
        double dgate = 0.0;
        for (size_t i = 0; i < hw; ++i) {
            dfeat[c * hw + i] = g * dfused[c * hw + i];
            dgate += dfused[c * hw + i] * trace.conv2_act[c * hw + i];
        }
        dlogit[c] = dgate * g * (1.0 - g);
    }
    dinstr.assign(cfg.instr_dim, 0.0);
    detail::affine_backward(p.gate_w, trace.instr.data(), dlogit.data(), grads.gate_w,
                            grads.gate_b, dinstr.data());
}

// Flattened features with the instruction vector appended.
inline std::vector<double> fuse_concat(const std::vector<double>& feat,
                                       const std::vector<double>& instr) {
    std::vector<double> out;
    out.reserve(feat.size() + instr.size());
    out.insert(out.end(), feat.begin(), feat.end());
    out.insert(out.end(), instr.begin(), instr.end());
    return out;
}

// Q_a = V + A_a - mean(A)
inline QValues dueling_combine(double value, const std::vector<double>& adv) {
    double mean = 0.0;
    for (double a : adv) mean += a;
    mean /= static_cast<double>(adv.size());
    QValues q(adv.size());
    for (size_t a = 0; a < adv.size(); ++a) q[a] = value + adv[a] - mean;
    return q;
}

// Trunk affine + ELU, then dueling value/advantage heads.
inline QValues head_forward(const ParameterSet& p, const std::vector<double>& trunk_in,
                            Trace* trace = nullptr) {
    const NetworkConfig& cfg = p.cfg;
    if (trunk_in.size() != cfg.trunk_in())
        throw ShapeMismatchError("head_forward: bad trunk input size");

    std::vector<double> act(cfg.trunk_hidden);
    detail::affine_forward(p.trunk_w, p.trunk_b, trunk_in.data(), act.data());
    for (double& v : act) v = elu(v);

    double value = 0.0;
    detail::affine_forward(p.value_w, p.value_b, act.data(), &value);
    std::vector<double> adv(cfg.n_actions);
    detail::affine_forward(p.adv_w, p.adv_b, act.data(), adv.data());
    QValues q = dueling_combine(value, adv);

    if (trace != nullptr) {
        trace->trunk_in = trunk_in;
        trace->trunk_act = act;
        trace->value = value;
        trace->adv = adv;
        trace->q = q;
    }
    return q;
}

inline void head_backward(const ParameterSet& p, const Trace& trace, const QValues& dq,
                          ParameterSet& grads, std::vector<double>& dtrunk_in) {
    const NetworkConfig& cfg = p.cfg;
    const size_t n = cfg.n_actions;

    double dq_sum = 0.0;
    for (double g : dq) dq_sum += g;
    const double dvalue = dq_sum;
    std::vector<double> dadv(n);
    for (size_t a = 0; a < n; ++a) dadv[a] = dq[a] - dq_sum / static_cast<double>(n);

    std::vector<double> dact(cfg.trunk_hidden, 0.0);
    detail::affine_backward(p.value_w, trace.trunk_act.data(), &dvalue, grads.value_w,
                            grads.value_b, dact.data());
    detail::affine_backward(p.adv_w, trace.trunk_act.data(), dadv.data(), grads.adv_w,
                            grads.adv_b, dact.data());

    std::vector<double> dpre(cfg.trunk_hidden);
    for (size_t i = 0; i < dpre.size(); ++i)
        dpre[i] = dact[i] * elu_grad_from_act(trace.trunk_act[i]);
    dtrunk_in.assign(cfg.trunk_in(), 0.0);
    detail::affine_backward(p.trunk_w, trace.trunk_in.data(), dpre.data(), grads.trunk_w,
                            grads.trunk_b, dtrunk_in.data());
}

// ---------------------------------------------------------------------------
// Full forward / backward

inline QValues forward(const ParameterSet& p, const std::vector<double>& frames,
                       const std::vector<int>& tokens, Trace* trace = nullptr) {
    std::vector<double> feat = encode_image(p, frames, trace);
    std::vector<double> instr = encode_instruction(p, tokens, trace);
    std::vector<double> fused = p.cfg.fusion == Fusion::GatedAttention
                                    ? fuse_gated_attention(p, feat, instr, trace)
                                    : fuse_concat(feat, instr);
    return head_forward(p, fused, trace);
}

// Forward with a precomputed instruction vector; used on the greedy/acting
// path where the episode's instruction never changes.
inline QValues forward_with_instr(const ParameterSet& p, const std::vector<double>& frames,
                                  const std::vector<double>& instr) {
    std::vector<double> feat = encode_image(p, frames, nullptr);
    std::vector<double> fused = p.cfg.fusion == Fusion::GatedAttention
                                    ? fuse_gated_attention(p, feat, instr, nullptr)
                                    : fuse_concat(feat, instr);
    return head_forward(p, fused, nullptr);
}

inline void backward(const ParameterSet& p, const Trace& trace, const QValues& dq,
                     ParameterSet& grads) {
    std::vector<double> dtrunk_in;
    head_backward(p, trace, dq, grads, dtrunk_in);

    std::vector<double> dfeat, dinstr;
    if (p.cfg.fusion == Fusion::GatedAttention) {
        fuse_gated_attention_backward(p, trace, dtrunk_in, dfeat, dinstr, grads);
    } else {
        const size_t flen = p.cfg.feature_len();
        dfeat.assign(dtrunk_in.begin(), dtrunk_in.begin() + static_cast<long>(flen));
        dinstr.assign(dtrunk_in.begin() + static_cast<long>(flen), dtrunk_in.end());
    }
    encode_image_backward(p, trace, dfeat, grads);
    encode_instruction_backward(p, trace, dinstr, grads);
}

// ---------------------------------------------------------------------------
// TD loss

struct BatchSample {
    std::vector<double> frames;
    std::vector<double> next_frames;
    std::vector<int> tokens;
    int action = 0;
    double reward = 0.0;
    bool done = false;
};

inline double huber(double e) {
    const double a = std::abs(e);
    return a <= 1.0 ? 0.5 * e * e : a - 0.5;
}

inline double huber_grad(double e) { return std::clamp(e, -1.0, 1.0); }

struct TdLossResult {
    double loss = 0.0;
    std::vector<double> td_errors;
};

// y_i = r_i + gamma * (1-done_i) * Q_target(s", a*) with a* chosen by the
// online network when double_q is set, else by the target network.
// Per-sample Huber(delta=1) on Q_online(s,a) - y, importance-weighted and
// mean-reduced. When `grads` is non-null it is overwritten with dLoss/dParams.
inline TdLossResult td_loss(const ParameterSet& online, const ParameterSet& target,
                            const std::vector<BatchSample>& batch, double gamma,
                            bool double_q, const std::vector<double>& is_weights,
                            ParameterSet* grads = nullptr) {
    if (batch.empty()) throw EmptyBatchError("td_loss: empty batch");
    if (is_weights.size() != batch.size())
        throw ShapeMismatchError("td_loss: weight/batch size mismatch");
    if (!(online.cfg == target.cfg))
        throw ShapeMismatchError("td_loss: online/target config mismatch");

    if (grads != nullptr) *grads = ParameterSet::create(online.cfg);

    TdLossResult result;
    result.td_errors.resize(batch.size());
    const double inv_n = 1.0 / static_cast<double>(batch.size());

    for (size_t i = 0; i < batch.size(); ++i) {
        const BatchSample& s = batch[i];
        double y = s.reward;
        if (!s.done) {
            const QValues q_target_next = forward(target, s.next_frames, s.tokens);
            size_t a_star;
            if (double_q) {
                const QValues q_online_next = forward(online, s.next_frames, s.tokens);
                a_star = argmax_lowest(q_online_next);
            } else {
                a_star = argmax_lowest(q_target_next);
            }
            y += gamma * q_target_next[a_star];
        }

        Trace trace;
        const QValues q = forward(online, s.frames, s.tokens, grads ? &trace : nullptr);
        const double delta = q[static_cast<size_t>(s.action)] - y;
        result.td_errors[i] = delta;
        result.loss += is_weights[i] * huber(delta) * inv_n;

        if (grads != nullptr) {
            QValues dq(online.cfg.n_actions, 0.0);
            dq[static_cast<size_t>(s.action)] = is_weights[i] * huber_grad(delta) * inv_n;
            backward(online, trace, dq, *grads);
        }
    }
    return result;
}

} // namespace gridlang::nn
