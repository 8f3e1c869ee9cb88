#pragma once

#include <string>

#include "sflab/errors.hpp"
#include "sflab/nets/network.hpp"

namespace sflab::agents {

enum class LossKind { simple, canonical, dqn, recon, ortho, random, triplet };

inline std::string to_string(LossKind k) {
    switch (k) {
    case LossKind::simple: return "simple";
    case LossKind::canonical: return "canonical";
    case LossKind::dqn: return "dqn";
    case LossKind::recon: return "recon";
    case LossKind::ortho: return "ortho";
    case LossKind::random: return "random";
    case LossKind::triplet: return "triplet";
    }
    return "?";
}

inline LossKind loss_kind_from_string(const std::string& s) {
    for (LossKind k : {LossKind::simple, LossKind::canonical, LossKind::dqn, LossKind::recon, LossKind::ortho,
                       LossKind::random, LossKind::triplet})
        if (to_string(k) == s) return k;
    throw ConfigError("unknown loss_kind '" + s + "'");
}

struct AgentConfig {
    double gamma = 0.99;
    double lr_net = 1e-3;
    double lr_task = 1e-3;
    double eps_start = 1.0;
    double eps_end = 0.05;
    long eps_decay_steps = 20000;
    int batch_size = 64;
    long target_period = 200;  // gradient updates between target copies
    nets::TargetMode target_mode = nets::TargetMode::periodic_copy;
    double target_tau = 0.01;
    long min_replay = 1000;
    long replay_period = 4;
    int nstep = 1;
    long buffer_capacity = 100000;
    LossKind loss_kind = LossKind::simple;
    bool stop_gradient_on_phi = true;
    bool psi_grad_to_w = false;       // off-paper: let L_psi also move w
    bool canonical_phi_grad = false;  // let the SF-TD loss push on phi(S')
    bool double_q_sf = false;         // online argmax for the max in the SF target
    bool eps_reset_on_switch = false; // restart the epsilon schedule at every task segment
    double lambda_ortho = 1.0;
    double weight_psi = 1.0;
    double weight_w = 1.0;
    double weight_aux = 1.0;
    std::size_t decoder_hidden = 64;

    friend bool operator==(const AgentConfig&, const AgentConfig&) = default;

    bool uses_task_vector() const { return loss_kind != LossKind::dqn; }
};

inline void validate(const AgentConfig& c) {
    auto bad = [](const std::string& key, const std::string& why) { throw ConfigError("agent." + key + ": " + why); };
    if (!(c.gamma >= 0.0 && c.gamma < 1.0)) bad("gamma", "must lie in [0, 1)");
    if (!(c.lr_net > 0.0)) bad("lr_net", "must be > 0");
    if (!(c.lr_task > 0.0)) bad("lr_task", "must be > 0");
    if (!(c.eps_end >= 0.0 && c.eps_end <= c.eps_start && c.eps_start <= 1.0))
        bad("eps_start", "need 0 <= eps_end <= eps_start <= 1");
    if (c.eps_decay_steps < 0) bad("eps_decay_steps", "must be >= 0");
    if (c.batch_size < 1) bad("batch_size", "must be >= 1");
    if (c.target_period < 1) bad("target_period", "must be >= 1");
    if (!(c.target_tau > 0.0 && c.target_tau <= 1.0)) bad("target_tau", "must lie in (0, 1]");
    if (c.min_replay < 1) bad("min_replay", "must be >= 1");
    if (c.replay_period < 1) bad("replay_period", "must be >= 1");
    if (c.nstep < 1) bad("nstep", "must be >= 1");
    if (c.buffer_capacity < 1) bad("buffer_capacity", "must be >= 1");
    if (c.lambda_ortho < 0.0) bad("lambda_ortho", "must be >= 0");
    if (c.loss_kind == LossKind::ortho && c.batch_size < 2) bad("batch_size", "ortho loss needs at least 2");
}

// Diagnostic record of one loss evaluation. total is the weighted sum
// weight_psi * l_psi + weight_w * l_w + weight_aux * l_aux.
struct LossBreakdown {
    double total = 0.0;
    double l_psi = 0.0;
    double l_w = 0.0;
    double l_aux = 0.0;
};

} // namespace sflab::agents
