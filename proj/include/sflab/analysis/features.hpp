#pragma once

// Feature dumps over the enumerated state space and the diagnostics built on
// them: SR rank correlation, collapse metrics, PCA projection, SR decoding probe.

#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "sflab/analysis/sr.hpp"
#include "sflab/analysis/stats.hpp"
#include "sflab/envs/gridworld.hpp"
#include "sflab/nets/network.hpp"
#include "sflab/numkit/optim.hpp"

namespace sflab::analysis {

struct FeatureRow {
    int state_id = 0;
    int x = 0;
    int y = 0;
    envs::Dir dir = envs::Dir::N;
    int action = -1;  // -1 for basis-feature rows
    std::vector<double> v;
};

struct FeatureDump {
    std::vector<FeatureRow> rows;
    std::size_t dim() const { return rows.empty() ? 0 : rows.front().v.size(); }
};

// phi for every enumerated state, in enumeration order.
inline FeatureDump dump_phi(const nets::NetworkParams& p, const envs::GridLayout& g, const envs::RenderConfig& rc) {
    FeatureDump d;
    const auto states = envs::enumerate_states(g);
    for (std::size_t s = 0; s < states.size(); ++s) {
        const Tensor h = nets::encode(p, envs::render(g, states[s], rc));
        const Tensor phi = nets::basis_features(h);
        d.rows.push_back({static_cast<int>(s), states[s].x, states[s].y, states[s].dir, -1, phi.values()});
    }
    return d;
}

// psi(s, a, w) for every state and every action (action < 0) or one action.
inline FeatureDump dump_sf(const nets::NetworkParams& p, const envs::GridLayout& g, const envs::RenderConfig& rc,
                           int action = -1) {
    if (p.online.head.kind != nets::HeadKind::successor) throw ConfigError("dump_sf: network has no successor head");
    FeatureDump d;
    const auto states = envs::enumerate_states(g);
    for (std::size_t s = 0; s < states.size(); ++s) {
        const Tensor h = nets::encode(p, envs::render(g, states[s], rc));
        const Tensor psi = nets::sf_forward(p, h, p.task.value);
        const std::size_t dim = psi.dim(1);
        for (std::size_t a = 0; a < psi.dim(0); ++a) {
            if (action >= 0 && static_cast<int>(a) != action) continue;
            std::vector<double> v(psi.begin() + static_cast<std::ptrdiff_t>(a * dim),
                                  psi.begin() + static_cast<std::ptrdiff_t>((a + 1) * dim));
            d.rows.push_back({static_cast<int>(s), states[s].x, states[s].y, states[s].dir, static_cast<int>(a), v});
        }
    }
    return d;
}

// Rows for one action (SF dumps) or all rows (basis-feature dumps), one per state.
inline FeatureDump per_state(const FeatureDump& d, int action = 0) {
    FeatureDump out;
    for (const auto& r : d.rows)
        if (r.action < 0 || r.action == action) out.rows.push_back(r);
    return out;
}

inline Points vectors(const FeatureDump& d) {
    Points p;
    p.reserve(d.rows.size());
    for (const auto& r : d.rows) p.push_back(r.v);
    return p;
}

// ---------------------------------------------------------------- CSV

inline void write_dump_csv(std::ostream& os, const FeatureDump& d) {
    os << "state_id,x,y,dir,action";
    for (std::size_t k = 0; k < d.dim(); ++k) os << ",v" << k;
    os << "\n";
    char buf[32];
    for (const auto& r : d.rows) {
        os << r.state_id << ',' << r.x << ',' << r.y << ',' << envs::dir_char(r.dir) << ',' << r.action;
        for (double v : r.v) {
            std::snprintf(buf, sizeof buf, "%.17g", v);
            os << ',' << buf;
        }
        os << "\n";
    }
}

inline FeatureDump read_dump_csv(std::istream& is) {
    std::string line;
    if (!std::getline(is, line) || line.rfind("state_id,x,y,dir,action", 0) != 0)
        throw ConfigError("feature dump: missing header state_id,x,y,dir,action,v0..");
    FeatureDump d;
    std::size_t lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        std::vector<std::string> cells;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (cells.size() < 6) throw ConfigError("feature dump line " + std::to_string(lineno) + ": too few columns");
        FeatureRow r;
        r.state_id = std::stoi(cells[0]);
        r.x = std::stoi(cells[1]);
        r.y = std::stoi(cells[2]);
        const std::string dirs = "NESW";
        const auto di = dirs.find(cells[3]);
        if (cells[3].size() != 1 || di == std::string::npos)
            throw ConfigError("feature dump line " + std::to_string(lineno) + ": bad dir '" + cells[3] + "'");
        r.dir = static_cast<envs::Dir>(di);
        r.action = std::stoi(cells[4]);
        for (std::size_t k = 5; k < cells.size(); ++k) r.v.push_back(std::strtod(cells[k].c_str(), nullptr));
        if (!d.rows.empty() && r.v.size() != d.dim())
            throw DimensionError("feature dump line " + std::to_string(lineno) + ": vector length differs");
        d.rows.push_back(std::move(r));
    }
    return d;
}

inline FeatureDump load_dump_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open feature dump " + path);
    return read_dump_csv(in);
}

// ---------------------------------------------------------------- SR correlation

struct CorrelationReport {
    std::vector<std::optional<double>> rho;  // per state; nullopt when undefined
    double mean = 0.0;
    double std = 0.0;
    double weighted_mean = 0.0;
    double weighted_std = 0.0;
    std::size_t undefined = 0;
};

// Discounted occupancy from `start`, normalised to sum to 1. LU roundoff can
// leave entries of order -1e-17 where the true occupancy is 0.
inline std::vector<double> visitation_weights(const SRMatrix& sr, std::size_t start) {
    std::vector<double> w = sr.values.row(start);
    double s = 0.0;
    for (double& v : w) s += v = std::max(v, 0.0);
    for (double& v : w) v /= s;
    return w;
}

// For each state s: Spearman between the cosine similarities of s's vector to
// every state's vector (itself included) and SR row s.
inline CorrelationReport sr_correlation(const FeatureDump& dump, const SRMatrix& sr,
                                        const std::vector<double>* weights = nullptr) {
    const std::size_t n = sr.n_states();
    if (dump.rows.size() != n)
        throw DimensionError("sr_correlation: dump has " + std::to_string(dump.rows.size()) + " rows, SR has " +
                             std::to_string(n) + " states");
    for (std::size_t s = 0; s < n; ++s)
        if (dump.rows[s].state_id != static_cast<int>(s))
            throw DimensionError("sr_correlation: dump row " + std::to_string(s) + " is state " +
                                 std::to_string(dump.rows[s].state_id));
    if (weights && weights->size() != n) throw DimensionError("sr_correlation: weights do not match states");

    CorrelationReport rep;
    rep.rho.resize(n);
    std::vector<double> vals, wts;
    std::vector<double> sim(n);
    for (std::size_t s = 0; s < n; ++s) {
        for (std::size_t j = 0; j < n; ++j) sim[j] = cosine(dump.rows[s].v, dump.rows[j].v);
        const auto row = sr.values.row(s);
        rep.rho[s] = spearman(sim, row);
        if (!rep.rho[s]) {
            ++rep.undefined;
            continue;
        }
        vals.push_back(*rep.rho[s]);
        wts.push_back(weights ? (*weights)[s] : 1.0);
    }
    if (vals.empty()) throw DegenerateInputError("sr_correlation: correlation undefined for every state");
    const std::vector<double> ones(vals.size(), 1.0);
    const auto plain = weighted_mean_std(vals, ones);
    rep.mean = plain.mean;
    rep.std = plain.std;
    double wsum = 0.0;
    for (double w : wts) wsum += w;
    if (wsum > 0.0) {
        const auto weighted = weighted_mean_std(vals, wts);
        rep.weighted_mean = weighted.mean;
        rep.weighted_std = weighted.std;
    } else {
        rep.weighted_mean = rep.mean;
        rep.weighted_std = rep.std;
    }
    return rep;
}

// ---------------------------------------------------------------- collapse

struct CollapseReport {
    double mean_pairwise_cosine = 0.0;
    double silhouette = 0.0;
    double davies_bouldin = 0.0;
};

// Room id where the layout has rooms, otherwise the grid quadrant.
inline std::vector<int> default_labels(const envs::GridLayout& g, const FeatureDump& d) {
    std::vector<int> out;
    for (const auto& r : d.rows) {
        const int room = g.room_of(r.x, r.y);
        if (room >= 0) {
            out.push_back(room);
        } else {
            const int qx = 2 * r.x < g.width ? 0 : 1;
            const int qy = 2 * r.y < g.height ? 0 : 1;
            out.push_back(2 * qy + qx);
        }
    }
    return out;
}

// sample_pairs <= 0 (or at least the number of pairs) averages over all pairs.
inline double mean_pairwise_cosine(const Points& x, long sample_pairs, Rng& rng) {
    const std::size_t n = x.size();
    if (n < 2) throw DegenerateInputError("mean_pairwise_cosine: need at least 2 vectors");
    const long all = static_cast<long>(n * (n - 1) / 2);
    double s = 0.0;
    if (sample_pairs <= 0 || sample_pairs >= all) {
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j) s += cosine(x[i], x[j]);
        return s / static_cast<double>(all);
    }
    for (long k = 0; k < sample_pairs; ++k) {
        const std::size_t i = rng.below(n);
        std::size_t j = rng.below(n - 1);
        if (j >= i) ++j;
        s += cosine(x[i], x[j]);
    }
    return s / static_cast<double>(sample_pairs);
}

inline CollapseReport collapse_metrics(const FeatureDump& dump, const std::vector<int>& labels, long sample_pairs,
                                       Rng& rng) {
    const Points x = vectors(dump);
    CollapseReport r;
    r.mean_pairwise_cosine = mean_pairwise_cosine(x, sample_pairs, rng);
    r.silhouette = silhouette(x, labels);
    r.davies_bouldin = davies_bouldin(x, labels);
    return r;
}

// ---------------------------------------------------------------- PCA

struct Projection2D {
    std::vector<std::array<double, 2>> coords;
    std::vector<double> mean;
    std::array<std::vector<double>, 2> components;
    std::array<double, 2> eigenvalues{};
};

// Top eigenpairs of a symmetric matrix by power iteration with deflation.
inline std::vector<std::pair<double, std::vector<double>>> top_eigenpairs(Matrix c, std::size_t k, int iters = 200,
                                                                          double tol = 1e-10) {
    const std::size_t n = c.rows;
    std::vector<std::pair<double, std::vector<double>>> out;
    Rng rng(0, "analysis.pca");
    for (std::size_t e = 0; e < k; ++e) {
        std::vector<double> v(n);
        for (double& x : v) x = rng.uniform(0.5, 1.5);
        double lambda = 0.0;
        for (int it = 0; it < iters; ++it) {
            std::vector<double> nv(n, 0.0);
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < n; ++j) nv[i] += c(i, j) * v[j];
            const double nn = norm2(nv);
            if (nn == 0.0) {
                lambda = 0.0;
                break;
            }
            for (double& x : nv) x /= nn;
            double diff = 0.0;
            for (std::size_t i = 0; i < n; ++i) diff = std::max(diff, std::abs(nv[i] - v[i]));
            v = std::move(nv);
            if (diff < tol) break;
        }
        std::vector<double> cv(n, 0.0);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) cv[i] += c(i, j) * v[j];
        lambda = dot(v, cv);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) c(i, j) -= lambda * v[i] * v[j];
        out.emplace_back(lambda, v);
    }
    return out;
}

inline Projection2D pca_project_2d(const FeatureDump& dump) {
    const Points x = vectors(dump);
    if (x.size() < 3) throw DegenerateInputError("pca_project_2d: need at least 3 states");
    const std::size_t n = x.size(), d = x.front().size();
    Projection2D p;
    p.mean.assign(d, 0.0);
    for (const auto& r : x)
        for (std::size_t k = 0; k < d; ++k) p.mean[k] += r[k] / static_cast<double>(n);
    Matrix cov(d, d);
    double total_var = 0.0;
    for (const auto& r : x)
        for (std::size_t i = 0; i < d; ++i) {
            const double di = r[i] - p.mean[i];
            total_var += di * di;
            for (std::size_t j = 0; j < d; ++j) cov(i, j) += di * (r[j] - p.mean[j]) / static_cast<double>(n);
        }
    if (total_var == 0.0) throw DegenerateInputError("pca_project_2d: dump has zero variance");
    const auto eig = top_eigenpairs(cov, 2);
    for (int c = 0; c < 2; ++c) {
        p.eigenvalues[c] = eig[c].first;
        p.components[c] = eig[c].second;
    }
    for (const auto& r : x) {
        std::array<double, 2> xy{};
        for (int c = 0; c < 2; ++c)
            for (std::size_t k = 0; k < d; ++k) xy[c] += (r[k] - p.mean[k]) * p.components[c][k];
        p.coords.push_back(xy);
    }
    return p;
}

// ---------------------------------------------------------------- SR decoding probe

struct ProbeConfig {
    std::size_t hidden = 64;
    int epochs = 3000;
    double lr = 3e-3;
    double train_fraction = 0.8;
};

struct ProbeResult {
    double test_mse = 0.0;
    double train_mse = 0.0;
    double constant_baseline = 0.0;  // variance of held-out SR rows around their mean
    std::vector<std::size_t> test_states;
};

// Full-batch Adam on a relu MLP mapping one feature vector per state to that
// state's SR row; reports mean squared error over held-out states.
inline ProbeResult sr_decoder_probe(const FeatureDump& dump, const SRMatrix& sr, std::uint64_t seed,
                                    const ProbeConfig& cfg = {}) {
    const std::size_t n = sr.n_states();
    if (n < 8) throw DegenerateInputError("sr_decoder_probe: need at least 8 states");
    if (dump.rows.size() != n) throw DimensionError("sr_decoder_probe: dump rows do not match SR states");
    const std::size_t d = dump.dim();
    Rng rng(seed, "analysis.probe");
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    rng.shuffle(order);
    const auto n_train = static_cast<std::size_t>(std::round(cfg.train_fraction * static_cast<double>(n)));
    const std::vector<std::size_t> train(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
    const std::vector<std::size_t> test(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());

    nets::DenseLayer l1 = nets::detail::make_dense("probe.fc0", d, cfg.hidden, rng);
    nets::DenseLayer l2 = nets::detail::make_dense("probe.out", cfg.hidden, n, rng);
    auto forward = [&](std::size_t s, Tensor* pre, Tensor* hid) {
        const Tensor x = Tensor::vector(dump.rows[s].v);
        Tensor a = numkit::affine(x, l1.w, l1.b);
        Tensor h = numkit::activation(a, numkit::Activation::relu);
        Tensor y = numkit::affine(h, l2.w, l2.b);
        if (pre) *pre = std::move(a);
        if (hid) *hid = std::move(h);
        return y;
    };
    auto mse = [&](const std::vector<std::size_t>& states) {
        double s = 0.0;
        for (std::size_t st : states) {
            const Tensor y = forward(st, nullptr, nullptr);
            for (std::size_t k = 0; k < n; ++k) s += (y[k] - sr.values(st, k)) * (y[k] - sr.values(st, k));
        }
        return s / static_cast<double>(states.size() * n);
    };
    const numkit::AdamConfig opt{cfg.lr};
    const double scale = 2.0 / static_cast<double>(train.size() * n);
    for (int ep = 0; ep < cfg.epochs; ++ep) {
        for (std::size_t st : train) {
            Tensor pre, hid;
            const Tensor y = forward(st, &pre, &hid);
            Tensor g(y.shape());
            for (std::size_t k = 0; k < n; ++k) g[k] = scale * (y[k] - sr.values(st, k));
            Tensor gh = numkit::affine_backward(hid, l2.w, l2.b, g);
            gh = numkit::activation_backward(pre, numkit::Activation::relu, gh);
            numkit::affine_backward(Tensor::vector(dump.rows[st].v), l1.w, l1.b, gh, true);
        }
        for (ParamBlock* b : {&l1.w, &l1.b, &l2.w, &l2.b}) numkit::adam_step(*b, opt);
    }
    ProbeResult r;
    r.test_states = test;
    r.test_mse = mse(test);
    r.train_mse = mse(train);
    std::vector<double> m(n, 0.0);
    for (std::size_t st : test)
        for (std::size_t k = 0; k < n; ++k) m[k] += sr.values(st, k) / static_cast<double>(test.size());
    double v = 0.0;
    for (std::size_t st : test)
        for (std::size_t k = 0; k < n; ++k) v += (sr.values(st, k) - m[k]) * (sr.values(st, k) - m[k]);
    r.constant_baseline = v / static_cast<double>(test.size() * n);
    return r;
}

} // namespace sflab::analysis
