#pragma once

#include <algorithm>

#include "sflab/agents/config.hpp"
#include "sflab/numkit/tensor.hpp"
#include "sflab/rng.hpp"

namespace sflab::agents {

inline double epsilon_at(long step, const AgentConfig& cfg) {
    const double frac =
        cfg.eps_decay_steps <= 0 ? 1.0 : std::min(1.0, static_cast<double>(step) / static_cast<double>(cfg.eps_decay_steps));
    if (frac >= 1.0) return cfg.eps_end;
    return cfg.eps_start + (cfg.eps_end - cfg.eps_start) * frac;
}

// Lowest index wins ties.
inline int greedy_action(const Tensor& q) {
    if (q.empty()) throw DimensionError("greedy_action: empty Q");
    std::size_t best = 0;
    for (std::size_t a = 1; a < q.size(); ++a)
        if (q[a] > q[best]) best = a;
    return static_cast<int>(best);
}

inline int act_epsilon_greedy(const Tensor& q, long step, const AgentConfig& cfg, Rng& rng) {
    if (!q.all_finite()) throw NumericalError("act_epsilon_greedy: non-finite Q");
    const double eps = epsilon_at(step, cfg);
    // Always consume one draw so the stream does not depend on epsilon.
    const double u = rng.uniform();
    if (u < eps) return static_cast<int>(rng.below(q.size()));
    return greedy_action(q);
}

} // namespace sflab::agents
