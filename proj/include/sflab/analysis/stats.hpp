#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include "sflab/errors.hpp"

namespace sflab::analysis {

// 1-based ranks; ties share the average of their positions.
inline std::vector<double> average_ranks(std::span<const double> x) {
    const std::size_t n = x.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
    std::vector<double> r(n);
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j + 1 < n && x[order[j + 1]] == x[order[i]]) ++j;
        const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) r[order[k]] = avg;
        i = j + 1;
    }
    return r;
}

// nullopt when either input is constant (correlation undefined).
inline std::optional<double> pearson(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw DimensionError("pearson: length mismatch");
    if (x.size() < 2) throw DegenerateInputError("pearson: need at least 2 points");
    const double n = static_cast<double>(x.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = x[i] - mx, dy = y[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx == 0.0 || syy == 0.0) return std::nullopt;
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

inline std::optional<double> spearman(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw DimensionError("spearman: length mismatch");
    if (x.size() < 2) throw DegenerateInputError("spearman: need at least 2 points");
    const auto rx = average_ranks(x), ry = average_ranks(y);
    return pearson(rx, ry);
}

inline double cosine(std::span<const double> a, std::span<const double> b) {
    double ab = 0.0, aa = 0.0, bb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ab += a[i] * b[i];
        aa += a[i] * a[i];
        bb += b[i] * b[i];
    }
    if (aa == 0.0 || bb == 0.0) return aa == bb ? 1.0 : 0.0;
    return std::clamp(ab / std::sqrt(aa * bb), -1.0, 1.0);
}

inline double euclidean(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(s);
}

using Points = std::vector<std::vector<double>>;

inline std::vector<int> distinct_labels(const std::vector<int>& labels) {
    std::vector<int> u(labels);
    std::sort(u.begin(), u.end());
    u.erase(std::unique(u.begin(), u.end()), u.end());
    return u;
}

inline void require_clusters(const Points& x, const std::vector<int>& labels) {
    if (x.size() != labels.size()) throw DimensionError("cluster labels do not match point count");
    if (distinct_labels(labels).size() < 2) throw DegenerateInputError("need at least 2 clusters");
}

// Mean silhouette (Euclidean). A point alone in its cluster scores 0.
inline double silhouette(const Points& x, const std::vector<int>& labels) {
    require_clusters(x, labels);
    const auto ids = distinct_labels(labels);
    const std::size_t n = x.size();
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> sum(ids.size(), 0.0);
        std::vector<std::size_t> cnt(ids.size(), 0);
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            const auto c = static_cast<std::size_t>(std::lower_bound(ids.begin(), ids.end(), labels[j]) - ids.begin());
            sum[c] += euclidean(x[i], x[j]);
            ++cnt[c];
        }
        const auto own = static_cast<std::size_t>(std::lower_bound(ids.begin(), ids.end(), labels[i]) - ids.begin());
        if (cnt[own] == 0) continue;
        const double a = sum[own] / static_cast<double>(cnt[own]);
        double b = std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < ids.size(); ++c)
            if (c != own && cnt[c] > 0) b = std::min(b, sum[c] / static_cast<double>(cnt[c]));
        const double m = std::max(a, b);
        total += m > 0.0 ? (b - a) / m : 0.0;
    }
    return total / static_cast<double>(n);
}

// Davies-Bouldin with Euclidean centroid distances. Coincident centroids give +inf.
inline double davies_bouldin(const Points& x, const std::vector<int>& labels) {
    require_clusters(x, labels);
    const auto ids = distinct_labels(labels);
    const std::size_t k = ids.size(), d = x.front().size();
    std::vector<std::vector<double>> centroid(k, std::vector<double>(d, 0.0));
    std::vector<std::size_t> cnt(k, 0);
    auto cid = [&](int l) { return static_cast<std::size_t>(std::lower_bound(ids.begin(), ids.end(), l) - ids.begin()); };
    for (std::size_t i = 0; i < x.size(); ++i) {
        const auto c = cid(labels[i]);
        for (std::size_t j = 0; j < d; ++j) centroid[c][j] += x[i][j];
        ++cnt[c];
    }
    for (std::size_t c = 0; c < k; ++c)
        for (double& v : centroid[c]) v /= static_cast<double>(cnt[c]);
    std::vector<double> scatter(k, 0.0);
    for (std::size_t i = 0; i < x.size(); ++i) {
        const auto c = cid(labels[i]);
        scatter[c] += euclidean(x[i], centroid[c]);
    }
    for (std::size_t c = 0; c < k; ++c) scatter[c] /= static_cast<double>(cnt[c]);
    double total = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
        double worst = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
            if (i == j) continue;
            const double m = euclidean(centroid[i], centroid[j]);
            const double r = m > 0.0 ? (scatter[i] + scatter[j]) / m
                                     : (scatter[i] + scatter[j] > 0.0 ? std::numeric_limits<double>::infinity() : 0.0);
            worst = std::max(worst, r);
        }
        total += worst;
    }
    return total / static_cast<double>(k);
}

struct MeanStd {
    double mean = 0.0;
    double std = 0.0;
    std::size_t n = 0;
};

// Weighted mean and (population) standard deviation.
inline MeanStd weighted_mean_std(std::span<const double> v, std::span<const double> w) {
    if (v.size() != w.size()) throw DimensionError("weighted_mean_std: length mismatch");
    double sw = 0.0, s = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (w[i] < 0.0) throw DegenerateInputError("negative weight");
        sw += w[i];
        s += w[i] * v[i];
    }
    if (sw <= 0.0) throw DegenerateInputError("weights sum to zero");
    const double m = s / sw;
    double var = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) var += w[i] * (v[i] - m) * (v[i] - m);
    return {m, std::sqrt(var / sw), v.size()};
}

} // namespace sflab::analysis
