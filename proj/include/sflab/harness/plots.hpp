#pragma once

// Self-contained SVG panels drawn from run directories.
//
//   returns      moving_avg_return against global_step
//   cumulative   cumulative_return against global_step
//   cosine       phi_mean_cosine from analysis.csv
//   correlation  sr_corr_weighted from analysis.csv
//   scatter2d    PCA of the final phi dump, points coloured by position
//
// Line kinds draw one line per experiment (mean over seeds) with a +-1 std
// band and dashed markers at task switches.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "sflab/analysis/features.hpp"
#include "sflab/harness/config.hpp"
#include "sflab/harness/io.hpp"

namespace sflab::harness {

enum class PlotKind { returns, cumulative, cosine, correlation, scatter2d };

inline PlotKind plot_kind_from_string(const std::string& s) {
    if (s == "returns") return PlotKind::returns;
    if (s == "cumulative") return PlotKind::cumulative;
    if (s == "cosine") return PlotKind::cosine;
    if (s == "correlation") return PlotKind::correlation;
    if (s == "scatter2d") return PlotKind::scatter2d;
    throw ConfigError("unknown plot kind '" + s + "' (returns, cumulative, cosine, correlation, scatter2d)");
}

struct Series {
    std::vector<double> x, y;
};

struct Band {
    std::string label;
    std::vector<double> x, mean, lo, hi;
    std::vector<double> switches;
};

inline std::vector<fs::path> seed_dirs(const fs::path& run) {
    std::vector<fs::path> out;
    if (!fs::exists(run)) throw ConfigError("run directory " + run.string() + " does not exist");
    for (const auto& e : fs::directory_iterator(run))
        if (e.is_directory() && e.path().filename().string().rfind("seed_", 0) == 0) out.push_back(e.path());
    std::sort(out.begin(), out.end());
    if (out.empty() && fs::exists(run / "metrics.csv")) out.push_back(run);
    return out;
}

inline std::string run_label(const fs::path& run) {
    std::string label = run.filename().string();
    if (label.empty()) label = run.parent_path().filename().string();
    if (fs::exists(run / "config.ini")) {
        try {
            label += " (" + agents::to_string(parse_config(( run / "config.ini").string()).agent.loss_kind) + ")";
        } catch (const std::exception&) {
        }
    }
    return label;
}

inline Series load_series(const fs::path& seed_dir, PlotKind kind) {
    Series s;
    if (kind == PlotKind::returns || kind == PlotKind::cumulative) {
        const auto t = load_csv(seed_dir / "metrics.csv");
        const auto col = kind == PlotKind::returns ? "moving_avg_return" : "cumulative_return";
        for (std::size_t i = 0; i < t.rows.size(); ++i) {
            s.x.push_back(t.number(i, "global_step"));
            s.y.push_back(t.number(i, col));
        }
    } else {
        const auto t = load_csv(seed_dir / "analysis.csv");
        const auto col = kind == PlotKind::cosine ? "phi_mean_cosine" : "sr_corr_weighted";
        for (std::size_t i = 0; i < t.rows.size(); ++i) {
            const double v = t.number(i, col);
            if (!std::isfinite(v)) continue;
            s.x.push_back(t.number(i, "global_step"));
            s.y.push_back(v);
        }
    }
    return s;
}

// Last value at or before x (the first value before the series starts).
inline double step_value(const Series& s, double x) {
    if (s.x.empty()) return std::numeric_limits<double>::quiet_NaN();
    const auto it = std::upper_bound(s.x.begin(), s.x.end(), x);
    if (it == s.x.begin()) return s.y.front();
    return s.y[static_cast<std::size_t>(it - s.x.begin()) - 1];
}

inline Band make_band(const fs::path& run, PlotKind kind, int points = 200) {
    Band b;
    b.label = run_label(run);
    std::vector<Series> all;
    double xmax = 0.0;
    for (const auto& d : seed_dirs(run)) {
        all.push_back(load_series(d, kind));
        if (!all.back().x.empty()) xmax = std::max(xmax, all.back().x.back());
        if (all.size() == 1 && fs::exists(d / "events.jsonl")) {
            std::istringstream ev(read_file(d / "events.jsonl"));
            std::string line;
            while (std::getline(ev, line)) {
                if (line.empty()) continue;
                const auto j = nlohmann::json::parse(line);
                if (j.value("event", "") == "task_start" && j.value("global_step", 0L) > 0)
                    b.switches.push_back(j.value("global_step", 0.0));
            }
        }
    }
    all.erase(std::remove_if(all.begin(), all.end(), [](const Series& s) { return s.x.empty(); }), all.end());
    if (all.empty()) throw ConfigError("no metrics found under " + run.string());
    for (int i = 0; i <= points; ++i) {
        const double x = xmax * i / points;
        double m = 0.0, v = 0.0;
        for (const auto& s : all) m += step_value(s, x);
        m /= static_cast<double>(all.size());
        for (const auto& s : all) v += (step_value(s, x) - m) * (step_value(s, x) - m);
        const double sd = std::sqrt(v / static_cast<double>(all.size()));
        b.x.push_back(x);
        b.mean.push_back(m);
        b.lo.push_back(m - sd);
        b.hi.push_back(m + sd);
    }
    return b;
}

namespace svg {

inline constexpr double W = 720, H = 420, L = 70, R = 200, T = 30, B = 50;

inline std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

inline std::string color(std::size_t i) {
    static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf"};
    return palette[i % 7];
}

// hue from (x, y) position: x picks the hue, y the lightness
inline std::string geo_color(double fx, double fy) {
    const double h = 300.0 * std::clamp(fx, 0.0, 1.0);
    const double l = 35.0 + 30.0 * std::clamp(fy, 0.0, 1.0);
    return "hsl(" + num(h) + ",80%," + num(l) + "%)";
}

inline std::string escape(const std::string& s) {
    std::string o;
    for (char c : s) {
        if (c == '<') o += "&lt;";
        else if (c == '>') o += "&gt;";
        else if (c == '&') o += "&amp;";
        else o += c;
    }
    return o;
}

} // namespace svg

inline std::string line_plot_svg(const std::vector<Band>& bands, const std::string& title, const std::string& ylabel) {
    using namespace svg;
    double x0 = 0.0, x1 = 1.0, y0 = std::numeric_limits<double>::infinity(), y1 = -y0;
    for (const auto& b : bands) {
        x1 = std::max(x1, b.x.back());
        for (double v : b.lo) y0 = std::min(y0, v);
        for (double v : b.hi) y1 = std::max(y1, v);
    }
    if (!(y1 > y0)) {
        y0 -= 0.5;
        y1 += 0.5;
    }
    const double pw = W - L - R, ph = H - T - B;
    auto px = [&](double x) { return L + (x - x0) / (x1 - x0) * pw; };
    auto py = [&](double y) { return T + (1.0 - (y - y0) / (y1 - y0)) * ph; };
    std::ostringstream o;
    o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    o << "<text x=\"" << L << "\" y=\"18\" font-size=\"14\">" << escape(title) << "</text>\n";
    o << "<rect x=\"" << L << "\" y=\"" << T << "\" width=\"" << pw << "\" height=\"" << ph << "\" fill=\"none\" stroke=\"#444\"/>\n";
    for (int i = 0; i <= 4; ++i) {
        const double yv = y0 + (y1 - y0) * i / 4, xv = x0 + (x1 - x0) * i / 4;
        o << "<text x=\"" << L - 6 << "\" y=\"" << num(py(yv) + 4) << "\" text-anchor=\"end\">" << num(yv) << "</text>\n";
        o << "<text x=\"" << num(px(xv)) << "\" y=\"" << H - B + 16 << "\" text-anchor=\"middle\">" << static_cast<long>(xv) << "</text>\n";
    }
    o << "<text x=\"" << L + pw / 2 << "\" y=\"" << H - 12 << "\" text-anchor=\"middle\">global step</text>\n";
    o << "<text x=\"16\" y=\"" << T + ph / 2 << "\" transform=\"rotate(-90 16 " << T + ph / 2 << ")\" text-anchor=\"middle\">" << escape(ylabel) << "</text>\n";
    for (std::size_t k = 0; k < bands.size(); ++k) {
        const auto& b = bands[k];
        for (double s : b.switches)
            o << "<line x1=\"" << num(px(s)) << "\" x2=\"" << num(px(s)) << "\" y1=\"" << T << "\" y2=\"" << T + ph
              << "\" stroke=\"#888\" stroke-dasharray=\"4,3\"/>\n";
        o << "<path fill=\"" << color(k) << "\" fill-opacity=\"0.2\" stroke=\"none\" d=\"";
        for (std::size_t i = 0; i < b.x.size(); ++i) o << (i ? "L" : "M") << num(px(b.x[i])) << "," << num(py(b.hi[i]));
        for (std::size_t i = b.x.size(); i-- > 0;) o << "L" << num(px(b.x[i])) << "," << num(py(b.lo[i]));
        o << "Z\"/>\n";
        o << "<path fill=\"none\" stroke=\"" << color(k) << "\" stroke-width=\"1.5\" d=\"";
        for (std::size_t i = 0; i < b.x.size(); ++i) o << (i ? "L" : "M") << num(px(b.x[i])) << "," << num(py(b.mean[i]));
        o << "\"/>\n";
        o << "<rect x=\"" << W - R + 12 << "\" y=\"" << T + 18 * k << "\" width=\"12\" height=\"12\" fill=\"" << color(k) << "\"/>\n";
        o << "<text x=\"" << W - R + 30 << "\" y=\"" << T + 18 * k + 10 << "\">" << escape(b.label) << "</text>\n";
    }
    o << "</svg>\n";
    return o.str();
}

inline std::string scatter_svg(const analysis::FeatureDump& dump, const analysis::Projection2D& p, int grid_w, int grid_h,
                               const std::string& title) {
    using namespace svg;
    double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
    for (const auto& c : p.coords) {
        x0 = std::min(x0, c[0]);
        x1 = std::max(x1, c[0]);
        y0 = std::min(y0, c[1]);
        y1 = std::max(y1, c[1]);
    }
    if (!(x1 > x0)) x1 = x0 + 1.0;
    if (!(y1 > y0)) y1 = y0 + 1.0;
    const double pw = W - L - R, ph = H - T - B;
    std::ostringstream o;
    o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    o << "<text x=\"" << L << "\" y=\"18\" font-size=\"14\">" << escape(title) << "</text>\n";
    o << "<rect x=\"" << L << "\" y=\"" << T << "\" width=\"" << pw << "\" height=\"" << ph << "\" fill=\"none\" stroke=\"#444\"/>\n";
    for (std::size_t i = 0; i < p.coords.size(); ++i) {
        const auto& r = dump.rows[i];
        const double fx = grid_w > 1 ? static_cast<double>(r.x) / (grid_w - 1) : 0.0;
        const double fy = grid_h > 1 ? static_cast<double>(r.y) / (grid_h - 1) : 0.0;
        const double cx = L + (p.coords[i][0] - x0) / (x1 - x0) * pw;
        const double cy = T + (1.0 - (p.coords[i][1] - y0) / (y1 - y0)) * ph;
        o << "<circle cx=\"" << num(cx) << "\" cy=\"" << num(cy) << "\" r=\"4\" fill=\"" << geo_color(fx, fy)
          << "\" stroke=\"#222\" stroke-width=\"0.3\"><title>(" << r.x << "," << r.y << "," << envs::dir_char(r.dir)
          << ")</title></circle>\n";
    }
    // colour key: the grid itself
    const double cell = 12.0;
    for (int y = 0; y < grid_h; ++y)
        for (int x = 0; x < grid_w; ++x)
            o << "<rect x=\"" << num(W - R + 20 + x * cell) << "\" y=\"" << num(T + y * cell) << "\" width=\"" << cell
              << "\" height=\"" << cell << "\" fill=\""
              << geo_color(grid_w > 1 ? static_cast<double>(x) / (grid_w - 1) : 0.0,
                           grid_h > 1 ? static_cast<double>(y) / (grid_h - 1) : 0.0)
              << "\"/>\n";
    o << "<text x=\"" << W - R + 20 << "\" y=\"" << num(T + grid_h * cell + 16) << "\">position key</text>\n";
    o << "</svg>\n";
    return o.str();
}

// Writes <out_dir>/<kind>.svg and returns its path.
inline fs::path emit_plots(const std::vector<fs::path>& runs, PlotKind kind, const fs::path& out_dir) {
    if (runs.empty()) throw ConfigError("plot: no run directories given");
    fs::create_directories(out_dir);
    std::string svg_text, name;
    if (kind == PlotKind::scatter2d) {
        const fs::path seed = seed_dirs(runs.front()).at(0);
        const auto dump = analysis::load_dump_csv((seed / "phi_dump_final.csv").string());
        const auto proj = analysis::pca_project_2d(dump);
        int gw = 0, gh = 0;
        for (const auto& r : dump.rows) {
            gw = std::max(gw, r.x + 1);
            gh = std::max(gh, r.y + 1);
        }
        svg_text = scatter_svg(dump, proj, gw, gh, "PCA of phi: " + run_label(runs.front()));
        name = "scatter2d.svg";
    } else {
        std::vector<Band> bands;
        for (const auto& r : runs) bands.push_back(make_band(r, kind));
        static const std::map<PlotKind, std::pair<std::string, std::string>> titles{
            {PlotKind::returns, {"Moving average return (20 episodes)", "return"}},
            {PlotKind::cumulative, {"Cumulative return", "cumulative return"}},
            {PlotKind::cosine, {"Mean pairwise cosine of phi", "cosine"}},
            {PlotKind::correlation, {"Weighted Spearman correlation to the SR", "rho"}}};
        const auto& t = titles.at(kind);
        svg_text = line_plot_svg(bands, t.first, t.second);
        static const std::map<PlotKind, std::string> names{{PlotKind::returns, "returns.svg"},
                                                           {PlotKind::cumulative, "cumulative.svg"},
                                                           {PlotKind::cosine, "cosine.svg"},
                                                           {PlotKind::correlation, "correlation.svg"}};
        name = names.at(kind);
    }
    const fs::path path = out_dir / name;
    write_file_atomic(path, svg_text);
    return path;
}

} // namespace sflab::harness
