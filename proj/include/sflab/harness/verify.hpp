#pragma once

// Property suites behind `sflab verify <suite>`. Each returns a JSON-ready
// report; fixed seeds make every run identical.

#include <chrono>
#include <functional>
#include <string>
#include <vector>

#include "json.hpp"
#include "sflab/agents/losses.hpp"
#include "sflab/analysis/checks.hpp"
#include "sflab/analysis/sr.hpp"
#include "sflab/envs/gridworld.hpp"
#include "sflab/numkit/optim.hpp"

namespace sflab::harness {

struct SuiteReport {
    std::string name;
    bool passed = true;
    double seconds = 0.0;
    nlohmann::json details = nlohmann::json::object();
};

// ---------------------------------------------------------------- random loss instances

struct LossVariant {
    std::string name;
    agents::AgentConfig cfg;
};

inline std::vector<LossVariant> loss_variants() {
    using agents::LossKind;
    std::vector<LossVariant> v;
    auto add = [&](const std::string& name, LossKind k, auto&& tweak) {
        agents::AgentConfig c;
        c.loss_kind = k;
        c.gamma = 0.9;
        tweak(c);
        v.push_back({name, c});
    };
    auto none = [](agents::AgentConfig&) {};
    add("simple", LossKind::simple, none);
    add("simple_no_stop_gradient", LossKind::simple, [](auto& c) { c.stop_gradient_on_phi = false; });
    add("simple_psi_grad_to_w", LossKind::simple, [](auto& c) { c.psi_grad_to_w = true; });
    add("simple_double_q", LossKind::simple, [](auto& c) { c.double_q_sf = true; });
    add("canonical", LossKind::canonical, none);
    add("canonical_phi_grad", LossKind::canonical, [](auto& c) { c.canonical_phi_grad = true; });
    add("dqn", LossKind::dqn, none);
    add("recon", LossKind::recon, [](auto& c) { c.decoder_hidden = 6; });
    add("ortho", LossKind::ortho, none);
    add("random", LossKind::random, none);
    add("triplet", LossKind::triplet, none);
    return v;
}

struct LossInstance {
    nets::NetworkParams params;
    std::optional<agents::Decoder> decoder;
    agents::Batch batch;
};

// Tiny network over 3x6x6 frames with a random batch of 6 items. The target
// network is a perturbed copy so that bootstrap terms are non-trivial.
inline LossInstance random_loss_instance(const agents::AgentConfig& cfg, std::uint64_t seed) {
    nets::NetConfig nc;
    nc.obs_channels = 3;
    nc.obs_height = 6;
    nc.obs_width = 6;
    nc.sf_dim = 4;
    nc.conv = {{2, 3, 2}};
    nc.head_hidden = {5};
    nc.n_actions = 3;
    nc.head = cfg.loss_kind == agents::LossKind::dqn ? nets::HeadKind::q_values : nets::HeadKind::successor;
    LossInstance inst;
    inst.params = nets::init_params(seed, nc);
    if (cfg.loss_kind == agents::LossKind::random) inst.params = agents::make_random_features_agent(inst.params);
    Rng rng(seed, "verify.instance");
    for (ParamBlock* b : nets::network_blocks(inst.params.target))
        for (double& x : b->value) x += 0.1 * rng.normal();
    for (double& x : inst.params.task.value) x = rng.normal();
    if (cfg.loss_kind == agents::LossKind::recon)
        inst.decoder = agents::init_decoder(seed, nc.sf_dim, nc.n_actions, cfg.decoder_hidden, {3, 6, 6});
    auto frame = [&] {
        Tensor t(Shape{3, 6, 6});
        for (double& x : t) x = rng.uniform();
        return std::make_shared<const Tensor>(std::move(t));
    };
    std::vector<agents::Frame> frames;
    for (int i = 0; i < 5; ++i) frames.push_back(frame());
    for (int i = 0; i < 6; ++i) {
        agents::Sample s;
        s.s = frames[rng.below(frames.size())];
        s.a = static_cast<int>(rng.below(3));
        s.s1 = frames[rng.below(frames.size())];
        s.r1 = rng.normal();
        s.terminal1 = rng.bernoulli(0.2);
        s.ret = s.r1;
        s.s_boot = s.s1;
        s.terminal = s.terminal1;
        s.discount = s.terminal ? 0.0 : cfg.gamma;
        inst.batch.items.push_back(s);
    }
    inst.batch.pairing = {0, 1, 2, 3, 4, 5};
    rng.shuffle(inst.batch.pairing);
    return inst;
}

// Blocks whose gradients the loss defines (a frozen encoder defines none).
inline std::vector<ParamBlock*> checked_blocks(LossInstance& inst, const agents::AgentConfig& cfg) {
    std::vector<ParamBlock*> out;
    if (!inst.params.encoder_frozen)
        for (ParamBlock* b : nets::encoder_blocks(inst.params.online.encoder)) out.push_back(b);
    for (ParamBlock* b : nets::head_blocks(inst.params.online.head)) out.push_back(b);
    if (cfg.uses_task_vector()) out.push_back(&inst.params.task);
    if (inst.decoder)
        for (ParamBlock* b : agents::decoder_blocks(*inst.decoder)) out.push_back(b);
    return out;
}

// Central differences at h carry roundoff near eps*|L|/h, so a coordinate whose
// true gradient sits below ~1e-5*|L| cannot be resolved to 1e-4 relative error.
// Draws containing such a coordinate (exact zeros aside) are skipped.
inline bool well_conditioned(LossInstance& inst, const agents::AgentConfig& cfg, double floor = 1e-5) {
    const agents::Detached det = agents::snapshot(inst.params);
    agents::Decoder* dec = inst.decoder ? &*inst.decoder : nullptr;
    const auto blocks = checked_blocks(inst, cfg);
    for (ParamBlock* b : blocks) b->grad.fill(0.0);
    const double l = agents::compute_loss(inst.params, dec, inst.batch, cfg, true, &det).total;
    const double limit = floor * std::max(1.0, std::abs(l));
    bool ok = true;
    for (ParamBlock* b : blocks) {
        for (double g : b->grad) ok = ok && (g == 0.0 || std::abs(g) >= limit);
        b->grad.fill(0.0);
    }
    return ok;
}

inline numkit::GradCheckResult loss_gradient_check(LossInstance& inst, const agents::AgentConfig& cfg) {
    const agents::Detached det = agents::snapshot(inst.params);
    agents::Decoder* dec = inst.decoder ? &*inst.decoder : nullptr;
    auto loss = [&](bool with_grad) {
        return agents::compute_loss(inst.params, dec, inst.batch, cfg, with_grad, &det).total;
    };
    const auto blocks = checked_blocks(inst, cfg);
    return numkit::finite_diff_check_detail(loss, blocks, 1e-6);
}

inline numkit::GradCheckResult loss_gradient_check(const agents::AgentConfig& cfg, std::uint64_t seed) {
    LossInstance inst = random_loss_instance(cfg, seed);
    return loss_gradient_check(inst, cfg);
}

// ---------------------------------------------------------------- suites

template <class F>
SuiteReport timed(const std::string& name, F&& body) {
    SuiteReport r;
    r.name = name;
    const auto t0 = std::chrono::steady_clock::now();
    body(r);
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    r.details["seconds"] = r.seconds;
    r.details["passed"] = r.passed;
    return r;
}

inline SuiteReport verify_gradients(int draws = 20, double tol = 1e-4) {
    return timed("gradients", [&](SuiteReport& r) {
        for (const auto& v : loss_variants()) {
            double worst = 0.0;
            std::string where;
            int used = 0, skipped = 0;
            for (std::uint64_t seed = 1000; used < draws && skipped < 50 * draws; ++seed) {
                LossInstance inst = random_loss_instance(v.cfg, seed);
                if (!well_conditioned(inst, v.cfg)) {
                    ++skipped;
                    continue;
                }
                ++used;
                const auto res = loss_gradient_check(inst, v.cfg);
                if (res.max_relative_error > worst) {
                    worst = res.max_relative_error;
                    where = res.worst_param + "[" + std::to_string(res.worst_index) + "]";
                }
            }
            if (used < draws) r.passed = false;
            r.details["losses"][v.name] = {{"max_relative_error", worst}, {"worst", where}, {"draws", used}, {"skipped_ill_conditioned", skipped}};
            if (!(worst < tol)) r.passed = false;
        }
        // stop-gradient contract on the reward-prediction loss alone
        for (bool sg : {true, false}) {
            agents::AgentConfig c;
            c.stop_gradient_on_phi = sg;
            c.weight_psi = 0.0;
            LossInstance inst = random_loss_instance(c, 7);
            agents::loss_simple_sf(inst.params, inst.batch, c, true);
            double enc = 0.0;
            for (ParamBlock* b : nets::encoder_blocks(inst.params.online.encoder))
                for (double g : b->grad) enc = std::max(enc, std::abs(g));
            r.details[sg ? "lw_encoder_grad_stop_gradient" : "lw_encoder_grad_no_stop_gradient"] = enc;
            if (sg ? enc != 0.0 : enc == 0.0) r.passed = false;
        }
        r.details["tolerance"] = tol;
    });
}

// phi = (1-gamma) c2 with |phi| = 1, psi = c2 for every state and action:
// zero conv kernels, projection bias phi, head output bias tiled c2.
inline nets::NetworkParams constant_network(const nets::NetConfig& cfg, double gamma, const std::vector<double>& unit_phi,
                                            const std::vector<double>& w) {
    nets::NetworkParams p = nets::init_params(0, cfg);
    for (auto& c : p.online.encoder.conv) c.kernel.value.fill(0.0);
    p.online.encoder.projection.w.value.fill(0.0);
    for (std::size_t k = 0; k < cfg.sf_dim; ++k) p.online.encoder.projection.b.value[k] = unit_phi[k];
    auto& out = p.online.head.layers.back();
    out.w.value.fill(0.0);
    for (std::size_t a = 0; a < cfg.n_actions; ++a)
        for (std::size_t k = 0; k < cfg.sf_dim; ++k) out.b.value[a * cfg.sf_dim + k] = unit_phi[k] / (1.0 - gamma);
    for (std::size_t k = 0; k < cfg.sf_dim; ++k) p.task.value[k] = w[k];
    nets::copy_target(p);
    return p;
}

inline SuiteReport verify_collapse(int draws = 50) {
    return timed("collapse", [&](SuiteReport& r) {
        Rng rng(11, "verify.collapse");
        double worst_sf = 0.0, min_psi = std::numeric_limits<double>::infinity();
        for (int d = 0; d < draws; ++d) {
            const double gamma = rng.uniform(0.0, 0.99);
            std::vector<double> c2(32), w(32);
            for (auto& x : c2) x = rng.normal();
            for (auto& x : w) x = rng.normal();
            const std::vector<double> rewards{0.0, 1.0, 0.0, 1.0};
            const auto cs = analysis::constant_solution_check(gamma, c2, w, rewards);
            worst_sf = std::max(worst_sf, cs.l_sf);
            min_psi = std::min(min_psi, cs.l_psi);
        }
        r.details["max_l_sf"] = worst_sf;
        r.details["min_l_psi_rewards_0_1"] = min_psi;
        if (!(worst_sf <= 1e-12) || !(min_psi >= 0.125 - 1e-12)) r.passed = false;

        // the same configuration realised by an actual network on a batch
        const auto layout = envs::center_wall(1, 5);
        envs::RenderConfig rc;
        rc.scale = 2;
        const Shape obs = envs::observation_shape(layout, rc);
        nets::NetConfig nc;
        nc.obs_channels = obs[0];
        nc.obs_height = obs[1];
        nc.obs_width = obs[2];
        nc.sf_dim = 8;
        const double gamma = 0.9;
        std::vector<double> u(8), w(8);
        for (auto& x : u) x = rng.normal();
        const double n = norm2(u);
        for (auto& x : u) x /= n;
        for (auto& x : w) x = rng.normal();
        auto p = constant_network(nc, gamma, u, w);
        agents::Batch batch;
        const auto states = envs::enumerate_states(layout);
        for (std::size_t i = 0; i < 8; ++i) {
            agents::Sample s;
            s.s = std::make_shared<const Tensor>(envs::render(layout, states[i * 7 % states.size()], rc));
            s.s1 = std::make_shared<const Tensor>(envs::render(layout, states[(i * 7 + 3) % states.size()], rc));
            s.s_boot = s.s1;
            s.a = static_cast<int>(i % 3);
            s.r1 = s.ret = static_cast<double>(i % 2);
            s.discount = gamma;
            batch.items.push_back(s);
        }
        batch.pairing = {0, 1, 2, 3, 4, 5, 6, 7};
        agents::AgentConfig cfg;
        cfg.gamma = gamma;
        const auto canon = agents::loss_canonical_sf(p, batch, cfg, false);
        const auto simple = agents::loss_simple_sf(p, batch, cfg, false);
        r.details["network_l_sf"] = canon.l_aux;
        r.details["network_simple_total"] = simple.total;
        if (!(std::abs(canon.l_aux) <= 1e-12) || !(simple.total > 0.0)) r.passed = false;
    });
}

inline SuiteReport verify_proposition1(int trials = 1000, std::size_t dim = 32) {
    return timed("proposition1", [&](SuiteReport& r) {
        Rng rng(5, "verify.proposition1");
        const auto rep = analysis::proposition1_check(dim, trials, rng);
        r.details["trials"] = rep.trials;
        r.details["max_residual_ratio"] = rep.max_ratio;
        r.details["violations"] = rep.violations;
        r.details["max_exact_case_residual"] = rep.max_exact_residual;
        if (rep.violations > 0 || !(rep.max_ratio <= 1.0) || !(rep.max_exact_residual <= 1e-12)) r.passed = false;
    });
}

inline SuiteReport verify_sr_oracle(int series_terms = 1000) {
    return timed("sr-oracle", [&](SuiteReport& r) {
        double worst_res = 0.0, worst_series = 0.0;
        for (const auto& name : envs::shipped_layout_names()) {
            const auto g = envs::make_layout(name, 5);
            const Matrix t = envs::transition_matrix(g, envs::uniform_policy(g));
            const auto sr = analysis::analytical_sr(t, 0.99);
            const double res = analysis::sr_residual(t, 0.99, sr.values);
            const auto sr9 = analysis::analytical_sr(t, 0.9);
            const double series = max_abs_diff(sr9.values, analysis::truncated_sr_series(t, 0.9, series_terms));
            r.details["layouts"][name] = {{"states", t.rows}, {"residual_inf", res}, {"series_max_abs_diff", series}};
            worst_res = std::max(worst_res, res);
            worst_series = std::max(worst_series, series);
        }
        r.details["max_residual_inf"] = worst_res;
        r.details["max_series_diff"] = worst_series;
        if (!(worst_res <= 1e-10) || !(worst_series <= 1e-8)) r.passed = false;
    });
}

inline const std::vector<std::string>& suite_names() {
    static const std::vector<std::string> names{"gradients", "collapse", "proposition1", "sr-oracle"};
    return names;
}

inline std::vector<SuiteReport> verify(const std::string& suite) {
    std::vector<SuiteReport> out;
    auto run = [&](const std::string& s) {
        if (s == "gradients") out.push_back(verify_gradients());
        else if (s == "collapse") out.push_back(verify_collapse());
        else if (s == "proposition1") out.push_back(verify_proposition1());
        else if (s == "sr-oracle") out.push_back(verify_sr_oracle());
        else throw ConfigError("unknown verify suite '" + s + "' (gradients, collapse, proposition1, sr-oracle, all)");
    };
    if (suite == "all")
        for (const auto& s : suite_names()) run(s);
    else
        run(suite);
    return out;
}

inline nlohmann::json to_json(const std::vector<SuiteReport>& reports) {
    nlohmann::json j;
    bool ok = true;
    for (const auto& r : reports) {
        j["suites"][r.name] = r.details;
        ok = ok && r.passed;
    }
    j["passed"] = ok;
    return j;
}

} // namespace sflab::harness
