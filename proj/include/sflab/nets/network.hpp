#pragma once

// Shared convolutional encoder -> latent h; phi = h / |h|; an MLP head over
// concat(h, w) producing one successor-feature row per action; Q = psi . w.
// A q_values head (scalar per action, no task input) serves the DQN baseline.

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "sflab/numkit/kernels.hpp"
#include "sflab/numkit/tensor.hpp"
#include "sflab/rng.hpp"

namespace sflab::nets {

using numkit::Activation;

enum class HeadKind { successor, q_values };

struct ConvSpec {
    std::size_t channels = 8;
    std::size_t kernel = 3;
    std::size_t stride = 1;
    friend bool operator==(const ConvSpec&, const ConvSpec&) = default;
};

struct NetConfig {
    std::size_t obs_channels = 3;
    std::size_t obs_height = 28;
    std::size_t obs_width = 28;
    std::size_t n_actions = 3;
    std::size_t sf_dim = 32;  // latent h, phi, psi and w share this size
    std::vector<ConvSpec> conv{{8, 3, 2}, {8, 3, 1}};
    std::vector<std::size_t> head_hidden{64, 64};
    HeadKind head = HeadKind::successor;
    // Optional features-task pathway: tanh([layer_norm](A concat(h,w) + b)).
    bool task_projection = false;
    std::size_t task_hidden = 64;
    bool layer_norm = false;

    friend bool operator==(const NetConfig&, const NetConfig&) = default;

    // Full-size encoder: four 32-channel 3x3 layers, strides {2,1,1,1}.
    static std::vector<ConvSpec> large_encoder() { return {{32, 3, 2}, {32, 3, 1}, {32, 3, 1}, {32, 3, 1}}; }

    std::size_t out_per_action() const { return head == HeadKind::successor ? sf_dim : 1; }
    std::size_t head_input() const { return head == HeadKind::successor ? 2 * sf_dim : sf_dim; }
};

struct ConvLayer {
    ParamBlock kernel;  // [out_c, in_c, k, k]
    std::size_t stride = 1;
};

struct DenseLayer {
    ParamBlock w;  // [out, in]
    ParamBlock b;  // [out]
};

struct EncoderParams {
    std::vector<ConvLayer> conv;
    DenseLayer projection;
};

struct SFHeadParams {
    std::optional<DenseLayer> task_proj;
    bool layer_norm = false;
    std::vector<DenseLayer> layers;  // hidden layers (relu) followed by the output layer
    std::size_t n_actions = 0;
    std::size_t out_per_action = 0;
    HeadKind kind = HeadKind::successor;
};

struct Network {
    EncoderParams encoder;
    SFHeadParams head;
};

struct NetworkParams {
    NetConfig config;
    Network online;
    Network target;
    ParamBlock task;  // w
    long steps_since_sync = 0;
    bool encoder_frozen = false;
};

// ---------------------------------------------------------------- parameter lists

inline std::vector<ParamBlock*> encoder_blocks(EncoderParams& e) {
    std::vector<ParamBlock*> out;
    for (auto& c : e.conv) out.push_back(&c.kernel);
    out.push_back(&e.projection.w);
    out.push_back(&e.projection.b);
    return out;
}

inline std::vector<ParamBlock*> head_blocks(SFHeadParams& h) {
    std::vector<ParamBlock*> out;
    if (h.task_proj) {
        out.push_back(&h.task_proj->w);
        out.push_back(&h.task_proj->b);
    }
    for (auto& l : h.layers) {
        out.push_back(&l.w);
        out.push_back(&l.b);
    }
    return out;
}

inline std::vector<ParamBlock*> network_blocks(Network& n) {
    auto out = encoder_blocks(n.encoder);
    for (ParamBlock* p : head_blocks(n.head)) out.push_back(p);
    return out;
}

inline std::vector<const ParamBlock*> network_blocks(const Network& n) {
    std::vector<const ParamBlock*> out;
    for (ParamBlock* p : network_blocks(const_cast<Network&>(n))) out.push_back(p);
    return out;
}

// ---------------------------------------------------------------- construction

inline std::vector<std::size_t> conv_output_shape(const NetConfig& cfg) {
    std::size_t c = cfg.obs_channels, h = cfg.obs_height, w = cfg.obs_width;
    for (std::size_t i = 0; i < cfg.conv.size(); ++i) {
        const auto& s = cfg.conv[i];
        if (s.kernel == 0 || s.stride == 0 || s.channels == 0)
            throw ConfigError("conv layer " + std::to_string(i) + ": zero-sized kernel, stride or channels");
        if (s.kernel > h || s.kernel > w)
            throw ConfigError("observation " + std::to_string(cfg.obs_height) + "x" +
                              std::to_string(cfg.obs_width) + " too small for conv layer " + std::to_string(i));
        h = (h - s.kernel) / s.stride + 1;
        w = (w - s.kernel) / s.stride + 1;
        c = s.channels;
    }
    return {c, h, w};
}

namespace detail {

inline Tensor uniform_tensor(Shape shape, double bound, Rng& rng) {
    Tensor t(std::move(shape));
    for (double& v : t) v = rng.uniform(-bound, bound);
    return t;
}

inline DenseLayer make_dense(const std::string& name, std::size_t in, std::size_t out, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    DenseLayer l;
    l.w = ParamBlock(name + ".w", uniform_tensor({out, in}, bound, rng));
    l.b = ParamBlock(name + ".b", uniform_tensor({out}, bound, rng));
    return l;
}

} // namespace detail

inline Network init_network(const NetConfig& cfg, Rng& rng) {
    if (cfg.sf_dim < 1) throw ConfigError("sf_dim must be >= 1");
    if (cfg.n_actions < 1) throw ConfigError("n_actions must be >= 1");
    const auto flat = conv_output_shape(cfg);
    Network net;
    std::size_t in_c = cfg.obs_channels;
    for (std::size_t i = 0; i < cfg.conv.size(); ++i) {
        const auto& s = cfg.conv[i];
        const double bound = 1.0 / std::sqrt(static_cast<double>(in_c * s.kernel * s.kernel));
        ConvLayer layer;
        layer.kernel = ParamBlock("encoder.conv" + std::to_string(i),
                                  detail::uniform_tensor({s.channels, in_c, s.kernel, s.kernel}, bound, rng));
        layer.stride = s.stride;
        net.encoder.conv.push_back(std::move(layer));
        in_c = s.channels;
    }
    net.encoder.projection = detail::make_dense("encoder.proj", shape_size(flat), cfg.sf_dim, rng);

    auto& head = net.head;
    head.kind = cfg.head;
    head.n_actions = cfg.n_actions;
    head.out_per_action = cfg.out_per_action();
    head.layer_norm = cfg.layer_norm;
    std::size_t in = cfg.head_input();
    if (cfg.task_projection && cfg.head == HeadKind::successor) {
        head.task_proj = detail::make_dense("head.task", in, cfg.task_hidden, rng);
        in = cfg.task_hidden;
    }
    for (std::size_t i = 0; i < cfg.head_hidden.size(); ++i) {
        head.layers.push_back(detail::make_dense("head.fc" + std::to_string(i), in, cfg.head_hidden[i], rng));
        in = cfg.head_hidden[i];
    }
    head.layers.push_back(detail::make_dense("head.out", in, cfg.n_actions * head.out_per_action, rng));
    return net;
}

inline NetworkParams init_params(std::uint64_t seed, const NetConfig& cfg) {
    Rng rng(seed, "nets.init");
    NetworkParams p;
    p.config = cfg;
    p.online = init_network(cfg, rng);
    p.target = p.online;
    p.task = ParamBlock("task.w", Tensor(Shape{cfg.sf_dim}));
    return p;
}

// ---------------------------------------------------------------- encoder

struct EncoderTrace {
    std::vector<Tensor> conv_in;   // input of each conv layer
    std::vector<Tensor> conv_pre;  // pre-activation output of each conv layer
    Tensor flat;                   // relu output of the last conv, flattened
    Shape flat_shape;
};

inline Tensor encode(const EncoderParams& enc, const Tensor& obs, EncoderTrace* trace = nullptr) {
    Tensor x = obs;
    if (trace) {
        trace->conv_in.clear();
        trace->conv_pre.clear();
    }
    for (const auto& layer : enc.conv) {
        Tensor pre = numkit::conv2d(x, layer.kernel, layer.stride);
        Tensor post = numkit::activation(pre, Activation::relu);
        if (trace) {
            trace->conv_in.push_back(std::move(x));
            trace->conv_pre.push_back(std::move(pre));
        }
        x = std::move(post);
    }
    const Shape fshape = x.shape();
    Tensor flat = std::move(x).reshaped(Shape{shape_size(fshape)});
    Tensor h = numkit::affine(flat, enc.projection.w, enc.projection.b);
    if (trace) {
        trace->flat = std::move(flat);
        trace->flat_shape = fshape;
    }
    return h;
}

inline void encode_backward(EncoderParams& enc, const EncoderTrace& trace, const Tensor& grad_h) {
    Tensor g = numkit::affine_backward(trace.flat, enc.projection.w, enc.projection.b, grad_h);
    g = std::move(g).reshaped(trace.flat_shape);
    for (std::size_t i = enc.conv.size(); i-- > 0;) {
        Tensor gpre = numkit::activation_backward(trace.conv_pre[i], Activation::relu, g);
        g = numkit::conv2d_backward(trace.conv_in[i], enc.conv[i].kernel, enc.conv[i].stride, gpre, i > 0);
    }
}

inline Tensor encode(const NetworkParams& p, const Tensor& obs) {
    const auto& c = p.config;
    if (obs.shape() != Shape{c.obs_channels, c.obs_height, c.obs_width})
        throw DimensionError("encode: observation " + shape_str(obs.shape()) + " but network expects " +
                             shape_str({c.obs_channels, c.obs_height, c.obs_width}));
    return encode(p.online.encoder, obs);
}

inline Tensor basis_features(const Tensor& h) { return numkit::l2_normalize(h); }

// ---------------------------------------------------------------- head

struct HeadTrace {
    Tensor input;      // concat(h, w) or h
    Tensor task_pre;   // task projection pre-normalisation
    Tensor task_norm;  // after optional layer norm (tanh input)
    std::vector<Tensor> layer_in;
    std::vector<Tensor> pre;
};

inline Tensor head_input(const SFHeadParams& head, const Tensor& h, const Tensor& w) {
    if (head.kind == HeadKind::q_values) return h;
    if (h.size() != w.size())
        throw DimensionError("sf_forward: h has " + std::to_string(h.size()) + " entries, w has " +
                             std::to_string(w.size()));
    Tensor in(Shape{h.size() + w.size()});
    std::copy(h.begin(), h.end(), in.begin());
    std::copy(w.begin(), w.end(), in.begin() + static_cast<std::ptrdiff_t>(h.size()));
    return in;
}

// -> [n_actions, out_per_action]
inline Tensor head_forward(const SFHeadParams& head, const Tensor& h, const Tensor& w, HeadTrace* trace = nullptr) {
    Tensor in = head_input(head, h, w);
    Tensor x;
    Tensor task_pre, task_norm;
    if (head.task_proj) {
        task_pre = numkit::affine(in, head.task_proj->w, head.task_proj->b);
        task_norm = head.layer_norm ? numkit::layer_norm(task_pre) : task_pre;
        x = numkit::activation(task_norm, Activation::tanh);
    } else {
        x = in;
    }
    if (trace) {
        trace->layer_in.clear();
        trace->pre.clear();
    }
    for (std::size_t i = 0; i < head.layers.size(); ++i) {
        Tensor pre = numkit::affine(x, head.layers[i].w, head.layers[i].b);
        const bool last = i + 1 == head.layers.size();
        Tensor next = last ? pre : numkit::activation(pre, Activation::relu);
        if (trace) {
            trace->layer_in.push_back(std::move(x));
            trace->pre.push_back(std::move(pre));
        }
        x = std::move(next);
    }
    if (trace) {
        trace->input = std::move(in);
        trace->task_pre = std::move(task_pre);
        trace->task_norm = std::move(task_norm);
    }
    return std::move(x).reshaped(Shape{head.n_actions, head.out_per_action});
}

// Returns the gradient with respect to the head input (concat(h, w) or h).
inline Tensor head_backward(SFHeadParams& head, const HeadTrace& trace, const Tensor& grad_out) {
    if (grad_out.size() != head.n_actions * head.out_per_action)
        throw DimensionError("head_backward: grad_out " + shape_str(grad_out.shape()));
    Tensor g = grad_out.reshaped(Shape{grad_out.size()});
    for (std::size_t i = head.layers.size(); i-- > 0;) {
        const bool last = i + 1 == head.layers.size();
        if (!last) g = numkit::activation_backward(trace.pre[i], Activation::relu, g);
        g = numkit::affine_backward(trace.layer_in[i], head.layers[i].w, head.layers[i].b, g);
    }
    if (head.task_proj) {
        g = numkit::activation_backward(trace.task_norm, Activation::tanh, g);
        if (head.layer_norm) g = numkit::layer_norm_backward(trace.task_pre, g);
        g = numkit::affine_backward(trace.input, head.task_proj->w, head.task_proj->b, g);
    }
    return g;
}

// Online-network successor features for all actions: [n_actions, sf_dim].
inline Tensor sf_forward(const NetworkParams& p, const Tensor& h, const Tensor& w) {
    if (h.size() != p.config.sf_dim)
        throw DimensionError("sf_forward: h has " + std::to_string(h.size()) + " entries, expected " +
                             std::to_string(p.config.sf_dim));
    return head_forward(p.online.head, h, w);
}

// Q[a] = psi_all[a] . w
inline Tensor q_values(const Tensor& psi_all, const Tensor& w) {
    if (psi_all.rank() != 2 || psi_all.dim(1) != w.size())
        throw DimensionError("q_values: psi " + shape_str(psi_all.shape()) + " vs w " + shape_str(w.shape()));
    const std::size_t n = psi_all.dim(0), d = psi_all.dim(1);
    Tensor q(Shape{n});
    for (std::size_t a = 0; a < n; ++a) {
        double s = 0.0;
        for (std::size_t k = 0; k < d; ++k) s += psi_all[a * d + k] * w[k];
        q[a] = s;
    }
    return q;
}

// Q-values from any head: psi . w for successor heads, the raw output otherwise.
inline Tensor head_q(const SFHeadParams& head, const Tensor& out, const Tensor& w) {
    if (head.kind == HeadKind::q_values) return out.reshaped(Shape{head.n_actions});
    return q_values(out, w);
}

inline Tensor online_q(const NetworkParams& p, const Tensor& obs) {
    const Tensor h = encode(p, obs);
    return head_q(p.online.head, head_forward(p.online.head, h, p.task.value), p.task.value);
}

// ---------------------------------------------------------------- target maintenance

enum class TargetMode { periodic_copy, polyak };

inline void copy_target(NetworkParams& p) {
    auto dst = network_blocks(p.target);
    auto src = network_blocks(p.online);
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i]->value = src[i]->value;
    p.steps_since_sync = 0;
}

// periodic_copy: count a step and copy once `period` steps have accumulated.
// polyak: target <- (1 - tau) target + tau online on every call.
inline void sync_target(NetworkParams& p, TargetMode mode, double tau, long period = 1) {
    if (mode == TargetMode::polyak) {
        if (!(tau > 0.0 && tau <= 1.0)) throw ConfigError("sync_target: tau must lie in (0, 1]");
        auto dst = network_blocks(p.target);
        auto src = network_blocks(p.online);
        for (std::size_t i = 0; i < dst.size(); ++i) {
            Tensor& t = dst[i]->value;
            const Tensor& o = src[i]->value;
            if (tau == 1.0) {
                t = o;
            } else {
                for (std::size_t k = 0; k < t.size(); ++k) t[k] = (1.0 - tau) * t[k] + tau * o[k];
            }
        }
        p.steps_since_sync = 0;
        return;
    }
    if (period < 1) throw ConfigError("sync_target: period must be >= 1");
    if (++p.steps_since_sync >= period) copy_target(p);
}

} // namespace sflab::nets
