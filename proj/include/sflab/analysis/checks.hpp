#pragma once

// Executable versions of two analytic claims about the SF losses.
//
// Constant solution: with phi = (1 - g) c and psi = c everywhere, the SF-TD
// residual phi + g psi - psi vanishes, so L_SF = 0 whatever the data. The
// reward-driven losses cannot be zeroed this way once rewards differ.
//
// Gradient projection: the L_psi gradient at psi, -(r + g psibar.w - psi.w) w,
// equals the projection of the L_SF gradient onto w, -(w.(phi + g psibar - psi)) w,
// up to -(r - phi.w) w. Its norm sqrt(2 L_w) |w| never exceeds 2 sqrt(L_w) |w|.

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "sflab/errors.hpp"
#include "sflab/numkit/tensor.hpp"
#include "sflab/rng.hpp"

namespace sflab::analysis {

struct ConstantSolution {
    double l_sf = 0.0;
    double l_psi = 0.0;
    double l_w = 0.0;
};

// Losses over the batch (rewards[i], terminal[i]) when every state has
// phi = (1 - gamma) c2 and every state-action has psi = c2.
inline ConstantSolution constant_solution_check(double gamma, std::span<const double> c2, std::span<const double> w,
                                                std::span<const double> rewards, std::span<const bool> terminal = {}) {
    if (!(gamma >= 0.0 && gamma < 1.0)) throw DegenerateInputError("constant_solution_check: gamma must lie in [0, 1)");
    if (w.size() != c2.size()) throw DimensionError("constant_solution_check: w and c2 differ in length");
    if (!terminal.empty() && terminal.size() != rewards.size())
        throw DimensionError("constant_solution_check: terminal flags do not match rewards");
    const std::size_t d = c2.size();
    std::vector<double> phi(d), psi(c2.begin(), c2.end());
    for (std::size_t k = 0; k < d; ++k) phi[k] = (1.0 - gamma) * c2[k];

    ConstantSolution out;
    double sf = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
        const double e = phi[k] + gamma * psi[k] - psi[k];
        sf += e * e;
    }
    out.l_sf = 0.5 * sf;
    const double q = dot(psi, w), phi_w = dot(phi, w);
    const double n = static_cast<double>(std::max<std::size_t>(rewards.size(), 1));
    for (std::size_t i = 0; i < rewards.size(); ++i) {
        const bool term = !terminal.empty() && terminal[i];
        const double y = rewards[i] + (term ? 0.0 : gamma * q);
        out.l_psi += 0.5 * (y - q) * (y - q) / n;
        out.l_w += 0.5 * (rewards[i] - phi_w) * (rewards[i] - phi_w) / n;
    }
    return out;
}

struct ProjectionTerms {
    Tensor g_psi;   // gradient of L_psi with respect to psi
    Tensor g_proj;  // (w . grad_psi L_SF) w
    double residual = 0.0;
    double bound = 0.0;  // 2 sqrt(L_w) |w|
    double l_w = 0.0;
};

inline ProjectionTerms projection_terms(std::span<const double> w, std::span<const double> psi,
                                        std::span<const double> psibar, std::span<const double> phi, double r,
                                        double gamma) {
    const std::size_t d = w.size();
    if (psi.size() != d || psibar.size() != d || phi.size() != d) throw DimensionError("projection_terms: length mismatch");
    ProjectionTerms t;
    t.g_psi = Tensor(Shape{d});
    t.g_proj = Tensor(Shape{d});
    const double td = r + gamma * dot(psibar, w) - dot(psi, w);
    double wsf = 0.0;  // w . (phi + gamma psibar - psi)
    for (std::size_t k = 0; k < d; ++k) wsf += w[k] * (phi[k] + gamma * psibar[k] - psi[k]);
    for (std::size_t k = 0; k < d; ++k) {
        t.g_psi[k] = -td * w[k];
        t.g_proj[k] = -wsf * w[k];
    }
    double res = 0.0;
    for (std::size_t k = 0; k < d; ++k) res += (t.g_psi[k] - t.g_proj[k]) * (t.g_psi[k] - t.g_proj[k]);
    t.residual = std::sqrt(res);
    const double e = r - dot(phi, w);
    t.l_w = 0.5 * e * e;
    t.bound = 2.0 * std::sqrt(t.l_w) * norm2(w);
    return t;
}

struct Proposition1Report {
    int trials = 0;
    double max_ratio = 0.0;          // residual / (bound + 1e-9)
    int violations = 0;              // residual > bound + 1e-9
    double max_exact_residual = 0.0; // trials with r = phi.w
};

// Random trials; every trial is evaluated twice, once with a free reward and
// once with r = phi.w where the two gradients must coincide.
inline Proposition1Report proposition1_check(std::size_t n_dim, int trials, Rng& rng) {
    if (trials < 1) throw DegenerateInputError("proposition1_check: trials must be >= 1");
    Proposition1Report rep;
    rep.trials = trials;
    std::vector<double> w(n_dim), psi(n_dim), psibar(n_dim), phi(n_dim);
    for (int t = 0; t < trials; ++t) {
        for (std::size_t k = 0; k < n_dim; ++k) {
            w[k] = rng.normal();
            psi[k] = rng.normal();
            psibar[k] = rng.normal();
            phi[k] = rng.normal();
        }
        const double gamma = rng.uniform(0.0, 0.99);
        const double r = rng.normal();
        const auto free = projection_terms(w, psi, psibar, phi, r, gamma);
        rep.max_ratio = std::max(rep.max_ratio, free.residual / (free.bound + 1e-9));
        if (free.residual > free.bound + 1e-9) ++rep.violations;
        const auto exact = projection_terms(w, psi, psibar, phi, dot(phi, w), gamma);
        rep.max_exact_residual = std::max(rep.max_exact_residual, exact.residual);
    }
    return rep;
}

} // namespace sflab::analysis
