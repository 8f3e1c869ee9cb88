#pragma once

// The loss family. Every loss accumulates its analytic gradient straight into
// the ParamBlock grad fields and returns a LossBreakdown.
//
//   simple     L_psi + L_w
//   canonical  L_SF + L_w
//   dqn        double-Q TD error on a scalar-per-action head
//   recon      simple + |S' - decoder(phi(S), a)|^2
//   ortho      simple + slowness/orthogonality regulariser on phi
//   random     simple with a frozen encoder
//   triplet    L_SF + L_psi + L_w
//
// with, per batch item (averaged over the batch),
//   L_psi = 1/2 (y - psi(S,A,w).w)^2,  y = R + g^m max_a psibar(S_m,a,w).w
//   L_w   = 1/2 (r - phi(S').w)^2
//   L_SF  = 1/2 |phi(S') + g psibar(S',a',w) - psi(S,A,w)|^2
//
// Stop-gradient paths are evaluated through a Detached view. During training
// it aliases the live parameters; gradient checks pass a frozen snapshot so
// that finite differences see detached terms as constants.

#include <cmath>
#include <deque>
#include <optional>
#include <unordered_map>
#include <vector>

#include "sflab/agents/config.hpp"
#include "sflab/agents/policy.hpp"
#include "sflab/agents/replay.hpp"
#include "sflab/nets/network.hpp"
#include "sflab/numkit/kernels.hpp"

namespace sflab::agents {

// ---------------------------------------------------------------- decoder

// phi(S) ++ one_hot(A) -> relu hidden -> flattened next frame.
struct Decoder {
    nets::DenseLayer hidden;
    nets::DenseLayer out;
    std::size_t sf_dim = 0;
    std::size_t n_actions = 0;
    Shape frame_shape;
};

inline Decoder init_decoder(std::uint64_t seed, std::size_t sf_dim, std::size_t n_actions, std::size_t hidden,
                            const Shape& frame_shape) {
    Rng rng(seed, "agents.decoder");
    Decoder d;
    d.sf_dim = sf_dim;
    d.n_actions = n_actions;
    d.frame_shape = frame_shape;
    d.hidden = nets::detail::make_dense("decoder.fc0", sf_dim + n_actions, hidden, rng);
    d.out = nets::detail::make_dense("decoder.out", hidden, shape_size(frame_shape), rng);
    return d;
}

inline std::vector<ParamBlock*> decoder_blocks(Decoder& d) { return {&d.hidden.w, &d.hidden.b, &d.out.w, &d.out.b}; }

struct DecoderTrace {
    Tensor in, pre, hid;
};

inline Tensor decoder_input(const Decoder& d, const Tensor& phi, int a) {
    Tensor in(Shape{d.sf_dim + d.n_actions});
    std::copy(phi.begin(), phi.end(), in.begin());
    in[d.sf_dim + static_cast<std::size_t>(a)] = 1.0;
    return in;
}

inline Tensor decoder_forward(const Decoder& d, const Tensor& phi, int a, DecoderTrace* tr = nullptr) {
    Tensor in = decoder_input(d, phi, a);
    Tensor pre = numkit::affine(in, d.hidden.w, d.hidden.b);
    Tensor hid = numkit::activation(pre, numkit::Activation::relu);
    Tensor y = numkit::affine(hid, d.out.w, d.out.b);
    if (tr) *tr = {std::move(in), std::move(pre), std::move(hid)};
    return y;
}

// Returns d loss / d phi.
inline Tensor decoder_backward(Decoder& d, const DecoderTrace& tr, const Tensor& grad_y) {
    Tensor g = numkit::affine_backward(tr.hid, d.out.w, d.out.b, grad_y);
    g = numkit::activation_backward(tr.pre, numkit::Activation::relu, g);
    g = numkit::affine_backward(tr.in, d.hidden.w, d.hidden.b, g);
    Tensor gphi(Shape{d.sf_dim});
    std::copy(g.begin(), g.begin() + static_cast<std::ptrdiff_t>(d.sf_dim), gphi.begin());
    return gphi;
}

// ---------------------------------------------------------------- batched passes

// Frozen copy of the online network and w used for stop-gradient terms.
struct Detached {
    nets::Network net;
    Tensor w;
};

inline Detached snapshot(const nets::NetworkParams& p) { return {p.online, p.task.value}; }

namespace detail {

inline void axpy(Tensor& y, double a, std::span<const double> x) {
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += a * x[i];
}

inline double dot_row(const Tensor& m, std::size_t row, const Tensor& w) {
    const std::size_t d = w.size();
    double s = 0.0;
    for (std::size_t k = 0; k < d; ++k) s += m[row * d + k] * w[k];
    return s;
}

inline std::span<const double> row_span(const Tensor& m, std::size_t row) {
    const std::size_t d = m.dim(1);
    return m.span().subspan(row * d, d);
}

// One network evaluated over the distinct frames of a batch. Encoder and head
// run once per frame; gradients are summed per frame before a single backward.
class NetPass {
public:
    NetPass(const nets::Network& net, Tensor w, bool keep_trace) : net_(&net), w_(std::move(w)), trace_(keep_trace) {}

    std::size_t frame(const Frame& f) {
        auto it = index_.find(f.get());
        if (it != index_.end()) return it->second;
        Slot s;
        s.h = nets::encode(net_->encoder, *f, trace_ ? &s.et : nullptr);
        slots_.push_back(std::move(s));
        index_.emplace(f.get(), slots_.size() - 1);
        return slots_.size() - 1;
    }

    const Tensor& h(std::size_t i) const { return slots_[i].h; }

    const Tensor& phi(std::size_t i) {
        Slot& s = slots_[i];
        if (s.phi.empty()) s.phi = numkit::l2_normalize(s.h);
        return s.phi;
    }

    // [n_actions, out_per_action]
    const Tensor& out(std::size_t i) {
        Slot& s = slots_[i];
        if (s.out.empty()) s.out = nets::head_forward(net_->head, s.h, w_, trace_ ? &s.ht : nullptr);
        return s.out;
    }

    Tensor q(std::size_t i) { return nets::head_q(net_->head, out(i), w_); }

    const Tensor& w() const { return w_; }

    // d loss / d out[i][a, :] += scale * v
    void grad_out(std::size_t i, int a, double scale, std::span<const double> v) {
        Slot& s = slots_[i];
        if (s.g_out.empty()) s.g_out = Tensor(out(i).shape());
        const std::size_t d = s.g_out.dim(1);
        for (std::size_t k = 0; k < d; ++k) s.g_out[static_cast<std::size_t>(a) * d + k] += scale * v[k];
    }

    void grad_phi(std::size_t i, double scale, std::span<const double> v) {
        Slot& s = slots_[i];
        if (s.g_phi.empty()) s.g_phi = Tensor(s.h.shape());
        axpy(s.g_phi, scale, v);
    }

    // Backpropagates everything accumulated. Returns the summed gradient with
    // respect to the w input of the head (zeros for q-value heads).
    Tensor backward(nets::Network& net, bool encoder_frozen) {
        Tensor gw(w_.shape());
        for (Slot& s : slots_) {
            Tensor gh;
            if (!s.g_out.empty()) {
                Tensor gin = nets::head_backward(net.head, s.ht, s.g_out);
                gh = Tensor(s.h.shape());
                std::copy(gin.begin(), gin.begin() + static_cast<std::ptrdiff_t>(gh.size()), gh.begin());
                if (gin.size() > gh.size())
                    for (std::size_t k = 0; k < gw.size(); ++k) gw[k] += gin[gh.size() + k];
            }
            if (!s.g_phi.empty()) {
                Tensor g = numkit::l2_normalize_backward(s.h, s.g_phi);
                if (gh.empty()) gh = std::move(g);
                else axpy(gh, 1.0, g.span());
            }
            if (!gh.empty() && !encoder_frozen) nets::encode_backward(net.encoder, s.et, gh);
        }
        return gw;
    }

private:
    struct Slot {
        nets::EncoderTrace et;
        nets::HeadTrace ht;
        Tensor h, phi, out, g_out, g_phi;
    };
    const nets::Network* net_;
    Tensor w_;
    bool trace_;
    std::deque<Slot> slots_;  // stable references across frame() calls
    std::unordered_map<const Tensor*, std::size_t> index_;
};

struct Components {
    bool psi_td = false;   // L_psi
    bool reward = false;   // L_w
    bool sf_td = false;    // L_SF
    bool dqn = false;
    bool recon = false;
    bool ortho = false;
};

inline Components components_for(LossKind k) {
    Components c;
    switch (k) {
    case LossKind::simple:
    case LossKind::random: c.psi_td = c.reward = true; break;
    case LossKind::canonical: c.sf_td = c.reward = true; break;
    case LossKind::dqn: c.dqn = true; break;
    case LossKind::recon: c.psi_td = c.reward = c.recon = true; break;
    case LossKind::ortho: c.psi_td = c.reward = c.ortho = true; break;
    case LossKind::triplet: c.psi_td = c.reward = c.sf_td = true; break;
    }
    return c;
}

inline LossBreakdown evaluate(nets::NetworkParams& p, Decoder* dec, const Batch& batch, const AgentConfig& cfg,
                              const Components& c, bool with_grad, const Detached* det) {
    if (batch.size() == 0) throw DegenerateInputError("loss: empty batch");
    if ((c.recon) && dec == nullptr) throw ConfigError("reconstruction loss needs a decoder");
    if (c.ortho && batch.size() < 2) throw DegenerateInputError("orthogonality loss needs a batch of at least 2");
    const double B = static_cast<double>(batch.size());
    const double gamma = cfg.gamma;
    const Tensor& w_live = p.task.value;
    const Tensor& w_fixed = det ? det->w : w_live;
    // The head sees w as an input; it is a constant unless L_psi may move w.
    const Tensor& w_head = cfg.psi_grad_to_w ? w_live : w_fixed;
    const bool frozen = p.encoder_frozen;

    NetPass on(p.online, w_head, with_grad);
    NetPass tg(p.target, w_fixed, false);
    std::optional<NetPass> fixed;
    if (det) fixed.emplace(det->net, w_fixed, false);
    // Values behind a stop-gradient: identical numbers, no gradient.
    auto phi_const = [&](const Frame& f) -> const Tensor& {
        return det ? fixed->phi(fixed->frame(f)) : on.phi(on.frame(f));
    };
    auto q_select = [&](const Frame& f) { return det ? fixed->q(fixed->frame(f)) : on.q(on.frame(f)); };

    LossBreakdown lb;
    double l_sf = 0.0, l_recon = 0.0, l_ort = 0.0;
    const double wp = cfg.weight_psi, ww = cfg.weight_w, wa = cfg.weight_aux;

    for (const Sample& s : batch.items) {
        if (c.psi_td || c.dqn) {
            const std::size_t i = on.frame(s.s);
            const Tensor& out = on.out(i);
            const Tensor q_all = nets::head_q(p.online.head, out, w_head);
            const double q = q_all[static_cast<std::size_t>(s.a)];
            double y = s.ret;
            if (s.discount > 0.0) {
                const std::size_t j = tg.frame(s.s_boot);
                const Tensor qt = tg.q(j);
                const bool use_online_argmax = c.dqn || cfg.double_q_sf;
                const int a_star = use_online_argmax ? greedy_action(q_select(s.s_boot)) : greedy_action(qt);
                y += s.discount * qt[static_cast<std::size_t>(a_star)];
            }
            const double e = y - q;
            lb.l_psi += 0.5 * e * e / B;
            if (with_grad) {
                const double scale = -e / B * wp;
                if (c.dqn) {
                    const double one = 1.0;
                    on.grad_out(i, s.a, scale, std::span<const double>(&one, 1));
                } else {
                    on.grad_out(i, s.a, scale, w_head.span());
                    if (cfg.psi_grad_to_w) axpy(p.task.grad, scale, row_span(out, static_cast<std::size_t>(s.a)));
                }
            }
        }
        if (c.reward) {
            const bool grad_to_phi = !cfg.stop_gradient_on_phi;
            std::size_t k = 0;
            const Tensor* phi = nullptr;
            if (grad_to_phi) {
                k = on.frame(s.s1);
                phi = &on.phi(k);
            } else {
                phi = &phi_const(s.s1);
            }
            const double e = s.r1 - dot(phi->span(), w_live.span());
            lb.l_w += 0.5 * e * e / B;
            if (with_grad) {
                axpy(p.task.grad, -e / B * ww, phi->span());
                if (grad_to_phi) on.grad_phi(k, -e / B * ww, w_live.span());
            }
        }
        if (c.sf_td) {
            const std::size_t i = on.frame(s.s);
            const Tensor& out = on.out(i);
            const std::size_t d = out.dim(1);
            std::size_t k = 0;
            Tensor target(Shape{d});
            if (cfg.canonical_phi_grad) {
                k = on.frame(s.s1);
                target = on.phi(k);
            } else {
                target = phi_const(s.s1);
            }
            if (!s.terminal1) {
                const std::size_t j = tg.frame(s.s1);
                const Tensor& psibar = tg.out(j);
                const int a_next = cfg.double_q_sf ? greedy_action(q_select(s.s1)) : greedy_action(tg.q(j));
                axpy(target, gamma, row_span(psibar, static_cast<std::size_t>(a_next)));
            }
            Tensor diff = target;
            axpy(diff, -1.0, row_span(out, static_cast<std::size_t>(s.a)));
            l_sf += 0.5 * dot(diff.span(), diff.span()) / B;
            if (with_grad) {
                on.grad_out(i, s.a, -wa / B, diff.span());
                if (cfg.canonical_phi_grad) on.grad_phi(k, wa / B, diff.span());
            }
        }
        if (c.recon) {
            const std::size_t i = on.frame(s.s);
            DecoderTrace tr;
            const Tensor pred = decoder_forward(*dec, on.phi(i), s.a, with_grad ? &tr : nullptr);
            const Tensor& truth = *s.s1;
            if (truth.size() != pred.size()) throw DimensionError("decoder output does not match frame size");
            Tensor g(pred.shape());
            double l = 0.0;
            for (std::size_t k = 0; k < pred.size(); ++k) {
                const double e = pred[k] - truth[k];
                l += e * e;
                g[k] = 2.0 * e * wa / B;
            }
            l_recon += l / B;
            if (with_grad) {
                const Tensor gphi = decoder_backward(*dec, tr, g);
                on.grad_phi(i, 1.0, gphi.span());
            }
        }
    }

    if (c.ortho) {
        // slowness: mean |phi(S) - phi(S')|^2
        for (const Sample& s : batch.items) {
            const std::size_t i = on.frame(s.s), k = on.frame(s.s1);
            Tensor diff = on.phi(i);
            axpy(diff, -1.0, on.phi(k).span());
            l_ort += dot(diff.span(), diff.span()) / B;
            if (with_grad) {
                on.grad_phi(i, 2.0 * wa / B, diff.span());
                on.grad_phi(k, -2.0 * wa / B, diff.span());
            }
        }
        // orthogonality over disjoint pairs of batch states
        const std::size_t P = batch.size() / 2;
        const double lam = cfg.lambda_ortho;
        for (std::size_t n = 0; n < P; ++n) {
            const Sample& s1 = batch.items[batch.pairing[n]];
            const Sample& s2 = batch.items[batch.pairing[n + P]];
            const std::size_t i = on.frame(s1.s), j = on.frame(s2.s);
            const Tensor u = on.phi(i), v = on.phi(j);
            const double uv = dot(u.span(), v.span());
            l_ort += lam * (uv * uv - dot(u.span(), u.span()) - dot(v.span(), v.span())) / static_cast<double>(P);
            if (with_grad) {
                const double sc = lam * wa / static_cast<double>(P);
                Tensor gu(u.shape()), gv(v.shape());
                axpy(gu, 2.0 * uv, v.span());
                axpy(gu, -2.0, u.span());
                axpy(gv, 2.0 * uv, u.span());
                axpy(gv, -2.0, v.span());
                on.grad_phi(i, sc, gu.span());
                on.grad_phi(j, sc, gv.span());
            }
        }
    }

    lb.l_aux = l_sf + l_recon + l_ort;
    lb.total = wp * lb.l_psi + ww * lb.l_w + wa * lb.l_aux;
    if (with_grad) {
        const Tensor gw = on.backward(p.online, frozen);
        if (cfg.psi_grad_to_w) axpy(p.task.grad, 1.0, gw.span());
    }
    return lb;
}

} // namespace detail

// ---------------------------------------------------------------- public losses

inline LossBreakdown loss_simple_sf(nets::NetworkParams& p, const Batch& b, const AgentConfig& cfg, bool with_grad = true,
                                    const Detached* det = nullptr) {
    return detail::evaluate(p, nullptr, b, cfg, detail::components_for(LossKind::simple), with_grad, det);
}

inline LossBreakdown loss_canonical_sf(nets::NetworkParams& p, const Batch& b, const AgentConfig& cfg,
                                       bool with_grad = true, const Detached* det = nullptr) {
    return detail::evaluate(p, nullptr, b, cfg, detail::components_for(LossKind::canonical), with_grad, det);
}

inline LossBreakdown loss_dqn(nets::NetworkParams& p, const Batch& b, const AgentConfig& cfg, bool with_grad = true,
                              const Detached* det = nullptr) {
    if (p.online.head.kind != nets::HeadKind::q_values) throw ConfigError("dqn loss needs a q_values head");
    return detail::evaluate(p, nullptr, b, cfg, detail::components_for(LossKind::dqn), with_grad, det);
}

inline LossBreakdown loss_reconstruction(nets::NetworkParams& p, Decoder& dec, const Batch& b, const AgentConfig& cfg,
                                         bool with_grad = true, const Detached* det = nullptr) {
    return detail::evaluate(p, &dec, b, cfg, detail::components_for(LossKind::recon), with_grad, det);
}

inline LossBreakdown loss_orthogonality(nets::NetworkParams& p, const Batch& b, const AgentConfig& cfg,
                                        bool with_grad = true, const Detached* det = nullptr) {
    return detail::evaluate(p, nullptr, b, cfg, detail::components_for(LossKind::ortho), with_grad, det);
}

inline LossBreakdown loss_triplet(nets::NetworkParams& p, const Batch& b, const AgentConfig& cfg, bool with_grad = true,
                                  const Detached* det = nullptr) {
    return detail::evaluate(p, nullptr, b, cfg, detail::components_for(LossKind::triplet), with_grad, det);
}

inline nets::NetworkParams make_random_features_agent(nets::NetworkParams p) {
    p.encoder_frozen = true;
    return p;
}

inline LossBreakdown compute_loss(nets::NetworkParams& p, Decoder* dec, const Batch& b, const AgentConfig& cfg,
                                  bool with_grad = true, const Detached* det = nullptr) {
    if (cfg.loss_kind == LossKind::dqn && p.online.head.kind != nets::HeadKind::q_values)
        throw ConfigError("dqn loss needs a q_values head");
    return detail::evaluate(p, dec, b, cfg, detail::components_for(cfg.loss_kind), with_grad, det);
}

} // namespace sflab::agents
