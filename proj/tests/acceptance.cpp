// Acceptance suite: twelve criteria, one PASS/FAIL line each.
//
//   sflab_acceptance [--configs DIR] [--out DIR] [--only 1,2,...]
//
// Learning criteria train from configs/acceptance_*.ini; run directories are
// left under --out for inspection. SFLAB_ACCEPT_REUSE=1 reuses seed
// directories that finished under an identical config (development only).

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "sflab/analysis/checks.hpp"
#include "sflab/analysis/stats.hpp"
#include "sflab/harness/plots.hpp"
#include "sflab/harness/run.hpp"
#include "sflab/harness/verify.hpp"

using namespace sflab;
using namespace sflab::harness;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt3(double v) {
    char b[64];
    std::snprintf(b, sizeof b, "%.4g", v);
    return b;
}

std::string join(const std::vector<std::string>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? " " : "") + v[i];
    return s;
}

// ---------------------------------------------------------------- runs

struct Lab {
    fs::path configs;
    fs::path out;
    bool reuse = false;

    ExperimentConfig load(const std::string& name) const {
        auto c = parse_config((configs / (name + ".ini")).string());
        c.run.out_dir = (out / name).string();
        return c;
    }

    // Trains every seed of `name` unless a finished copy can be reused.
    // hooks.should_stop (optional) ends a seed early once its goal is met.
    fs::path run(const std::string& name, const RunHooks& hooks = {}) const {
        const ExperimentConfig cfg = load(name);
        const fs::path dir(cfg.run.out_dir);
        const std::string cfg_text = emit_config(cfg);
        fs::create_directories(dir);
        write_file_atomic(dir / "config.ini", cfg_text);
        for (auto seed : cfg.run.seeds) {
            const fs::path sd = dir / ("seed_" + std::to_string(seed));
            const fs::path done = sd / "done.txt";
            if (reuse && fs::exists(done) && read_file(done) == cfg_text) continue;
            fs::remove_all(sd);
            const auto t0 = Clock::now();
            const auto res = run_seed(cfg, seed, sd, hooks);
            std::printf("  [%s seed %llu] %ld steps, %.0f s%s\n", name.c_str(), static_cast<unsigned long long>(seed),
                        res.global_steps, seconds_since(t0), res.completed ? "" : " (stopped early)");
            std::fflush(stdout);
            write_file_atomic(done, cfg_text);
        }
        return dir;
    }
};

// Stops a seed once the trailing 20-episode length is within factor * shortest path.
RunHooks stop_at_threshold(double factor) {
    RunHooks h;
    h.should_stop = [factor](const agents::Trainer& t) -> std::optional<std::string> {
        const auto& q = t.recent_lengths();
        if (q.size() < 20 || t.global_step() % 100 != 0) return std::nullopt;
        const auto& layout = t.schedule().tasks[static_cast<std::size_t>(t.task_index())].layout;
        double s = 0.0;
        for (double v : q) s += v;
        if (s / 20.0 <= factor * *envs::shortest_path_length(layout)) return "threshold reached";
        return std::nullopt;
    };
    return h;
}

std::vector<fs::path> seeds_of(const fs::path& run) { return seed_dirs(run); }

int shortest_path(const ExperimentConfig& c, const std::string& layout) {
    return *envs::shortest_path_length(resolve_layout(c, layout));
}

double analysis_first(const fs::path& seed_dir, const std::string& col) {
    return load_csv(seed_dir / "analysis.csv").number(0, col);
}

double analysis_last(const fs::path& seed_dir, const std::string& col) {
    const auto t = load_csv(seed_dir / "analysis.csv");
    return t.number(t.rows.size() - 1, col);
}

double final_return(const fs::path& seed_dir) {
    const auto t = load_csv(seed_dir / "metrics.csv");
    if (t.rows.empty()) return 0.0;
    return t.number(t.rows.size() - 1, "moving_avg_return");
}

// ---------------------------------------------------------------- criteria

Outcome suite_outcome(const std::string& name, double budget_s,
                      const std::function<std::string(const SuiteReport&)>& what) {
    const auto t0 = Clock::now();
    const auto r = verify(name).at(0);
    const double s = seconds_since(t0);
    return {r.passed && s < budget_s, what(r) + ", " + fmt3(s) + " s (budget " + fmt3(budget_s) + " s)"};
}

Outcome criterion1() {
    return suite_outcome("collapse", 1.0, [](const SuiteReport& r) {
        return "50 draws, max L_SF " + fmt3(r.details.value("max_l_sf", -1.0)) + ", network L_SF " +
               fmt3(r.details.value("network_l_sf", -1.0));
    });
}

Outcome criterion2() {
    return suite_outcome("proposition1", 1.0, [](const SuiteReport& r) {
        return "1000 instances, violations " + std::to_string(r.details.value("violations", -1)) + ", max ratio " +
               fmt3(r.details.value("max_residual_ratio", -1.0)) + ", exact residual " +
               fmt3(r.details.value("max_exact_case_residual", -1.0));
    });
}

Outcome criterion3() {
    return suite_outcome("gradients", 30.0, [](const SuiteReport& r) {
        double worst = 0.0;
        std::string where;
        for (const auto& [k, v] : r.details["losses"].items())
            if (v.value("max_relative_error", 0.0) >= worst) {
                worst = v.value("max_relative_error", 0.0);
                where = k;
            }
        return std::to_string(r.details["losses"].size()) + " variants x 20 draws, worst rel err " + fmt3(worst) +
               " (" + where + ")";
    });
}

Outcome criterion4() {
    return suite_outcome("sr-oracle", 10.0, [](const SuiteReport& r) {
        return "max residual " + fmt3(r.details.value("max_residual_inf", -1.0)) + ", max series diff " +
               fmt3(r.details.value("max_series_diff", -1.0));
    });
}

// Two rank implementations: counting versus sort with tie groups.
Outcome criterion12() {
    Rng rng(2024, "acceptance.stats");
    int exact = 0;
    double worst = 0.0;
    for (int t = 0; t < 100; ++t) {
        const std::size_t n = 3 + rng.below(40);
        std::vector<double> a(n), b(n);
        for (std::size_t i = 0; i < n; ++i) {
            a[i] = static_cast<double>(rng.below(5));
            b[i] = rng.below(4) == 0 ? 0.5 : std::round(rng.normal() * 4.0) / 4.0;
        }
        auto ranks = [](const std::vector<double>& x) {
            std::vector<double> r(x.size());
            for (std::size_t i = 0; i < x.size(); ++i) {
                double less = 0, eq = 0;
                for (double v : x) less += v < x[i], eq += v == x[i];
                r[i] = less + (eq + 1.0) / 2.0;
            }
            return r;
        };
        const auto ra = ranks(a), rb = ranks(b);
        const auto got = analysis::spearman(a, b);
        const auto want = analysis::pearson(ra, rb);
        if (got.has_value() == want.has_value() && (!got || *got == *want) && analysis::average_ranks(a) == ra &&
            analysis::average_ranks(b) == rb)
            ++exact;
        if (got && want) worst = std::max(worst, std::abs(*got - *want));
    }
    const analysis::Points x{{0, 0}, {0, 1}, {4, 0}, {4, 1}};
    const std::vector<int> lab{0, 0, 1, 1};
    const double sil = analysis::silhouette(x, lab), db = analysis::davies_bouldin(x, lab);
    const double sil_hand = 1.0 - 2.0 / (4.0 + std::sqrt(17.0)), db_hand = 0.25;
    const bool ok = exact == 100 && std::abs(sil - sil_hand) <= 1e-9 && std::abs(db - db_hand) <= 1e-9;
    return {ok, "spearman exact on " + std::to_string(exact) + "/100 tied vectors (max diff " + fmt3(worst) +
                    "); silhouette " + fmt3(sil) + " vs " +
                    fmt3(sil_hand) + ", DB " + fmt3(db) + " vs " + fmt3(db_hand)};
}

struct CollapseRuns {
    fs::path simple, canonical;
};

Outcome criterion5(const CollapseRuns& r) {
    const auto s = seeds_of(r.simple), c = seeds_of(r.canonical);
    int ok = 0;
    std::vector<std::string> per;
    for (std::size_t i = 0; i < std::min(s.size(), c.size()); ++i) {
        const double cc = analysis_last(c[i], "phi_mean_cosine");
        const double sc = analysis_last(s[i], "phi_mean_cosine");
        const bool pass = cc >= 0.99 && cc - sc >= 0.1;
        ok += pass;
        per.push_back(fmt3(cc) + "/" + fmt3(sc) + (pass ? "" : "x"));
    }
    return {ok >= 4, std::to_string(ok) + "/5 seeds with canonical cos >= 0.99 and Simple-SF lower by >= 0.1; "
                         "canonical/simple per seed: " + join(per)};
}

Outcome criterion6(const CollapseRuns& r) {
    const auto s = seeds_of(r.simple), c = seeds_of(r.canonical);
    int ok = 0;
    std::vector<std::string> per;
    for (std::size_t i = 0; i < std::min(s.size(), c.size()); ++i) {
        const double csil = analysis_last(c[i], "phi_silhouette"), ssil = analysis_last(s[i], "phi_silhouette");
        const double cdb = analysis_last(c[i], "phi_davies_bouldin"),
                     sdb = analysis_last(s[i], "phi_davies_bouldin");
        const bool pass = csil < ssil && cdb > sdb;
        ok += pass;
        per.push_back("sil " + fmt3(csil) + "<" + fmt3(ssil) + " db " + fmt3(cdb) + ">" + fmt3(sdb) +
                      (pass ? "" : " x"));
    }
    return {ok >= 4, std::to_string(ok) + "/5 seeds; canonical vs simple: " + join(per)};
}

// Steps at which each seed's trailing-20 length first reaches the bound, within max_steps.
std::pair<int, std::string> threshold_hits(const fs::path& run, double factor, int spl, long max_steps,
                                           int segment = -1) {
    int ok = 0;
    std::vector<std::string> per;
    for (const auto& sd : seeds_of(run)) {
        auto eps = episode_lengths(load_csv(sd / "metrics.csv"), segment);
        if (segment >= 0 && !eps.empty()) {
            // measure from the start of the segment
            const long start = eps.front().first - eps.front().second;
            for (auto& e : eps) e.first -= start;
        }
        const auto hit = steps_to_threshold(eps, 20, factor, spl);
        const bool pass = hit && *hit <= max_steps;
        ok += pass;
        per.push_back(hit ? std::to_string(*hit) : "never");
    }
    return {ok, join(per)};
}

Outcome criterion7(const Lab& lab, const fs::path& simple, const fs::path& dqn) {
    const int spl = shortest_path(lab.load("acceptance_simple"), "CenterWall.task1");
    const auto [s_ok, s_per] = threshold_hits(simple, 1.5, spl, 150000);
    const auto [d_ok, d_per] = threshold_hits(dqn, 1.5, spl, 150000);
    return {s_ok >= 4 && d_ok >= 4, "bound " + fmt3(1.5 * spl) + " steps; Simple-SF " + std::to_string(s_ok) +
                                        "/5 (steps " + s_per + "), DQN " + std::to_string(d_ok) + "/5 (steps " +
                                        d_per + ")"};
}

struct ContinualProbe {
    int switches = 0;
    int empty = 0;  // switches after which the buffer held only the new transition
};

Outcome criterion8(const Lab& lab, const fs::path& run, const ContinualProbe& probe) {
    const auto cfg = lab.load("acceptance_continual");
    const long seg = cfg.schedule.training_steps;
    const int spl = shortest_path(cfg, "CenterWall.task1");
    bool mech = probe.empty == probe.switches;
    const std::string note = probe.switches == 0 ? "live buffer probe skipped (reused runs)"
                                                 : "buffer held 1 transition after " + std::to_string(probe.empty) +
                                                       "/" + std::to_string(probe.switches) + " switches";
    for (const auto& sd : seeds_of(run)) {
        std::vector<long> starts, resets;
        std::istringstream ev(read_file(sd / "events.jsonl"));
        for (std::string line; std::getline(ev, line);) {
            const auto j = nlohmann::json::parse(line);
            if (j["event"] == "task_start") starts.push_back(j["global_step"]);
            if (j["event"] == "buffer_reset") {
                resets.push_back(j["global_step"]);
                if (j["buffer_size"] != 0) mech = false;
            }
        }
        if (starts != std::vector<long>{0, seg, 2 * seg, 3 * seg}) mech = false;
        if (resets != std::vector<long>{seg, 2 * seg, 3 * seg}) mech = false;
        // task_index in metrics.csv changes exactly at the configured steps
        const auto m = load_csv(sd / "metrics.csv");
        for (std::size_t i = 0; i < m.rows.size(); ++i) {
            const long step = static_cast<long>(m.number(i, "global_step"));
            const int want_seg = static_cast<int>((step - 1) / seg);
            const int want_task = want_seg % 2;
            if (static_cast<int>(m.number(i, "segment")) != want_seg ||
                static_cast<int>(m.number(i, "task_index")) != want_task)
                mech = false;
        }
    }
    const auto [ok, per] = threshold_hits(run, 1.5, spl, seg, 2);
    return {mech && ok >= 3, std::string("switch mechanics ") + (mech ? "ok" : "BROKEN") + " (" + note +
                                 "); re-exposed task 1 within bound in " + std::to_string(ok) +
                                 "/5 seeds (steps into segment: " + per + ")"};
}

Outcome criterion9(const fs::path& simple, const fs::path& no_sg) {
    // exact encoder-gradient check of L_w alone on a random instance
    bool exact_ok = true;
    std::string exact;
    for (bool sg : {true, false}) {
        agents::AgentConfig c;
        c.stop_gradient_on_phi = sg;
        c.weight_psi = 0.0;  // isolate L_w
        LossInstance inst = random_loss_instance(c, 11);
        agents::loss_simple_sf(inst.params, inst.batch, c, true);
        double enc = 0.0;
        for (ParamBlock* b : nets::encoder_blocks(inst.params.online.encoder))
            for (double g : b->grad) enc = std::max(enc, std::abs(g));
        exact += std::string(sg ? "stop-gradient" : "no stop-gradient") + " max|dLw/dtheta_enc| " + fmt3(enc) + "; ";
        if (sg ? enc != 0.0 : enc == 0.0) exact_ok = false;
    }
    double sum_d = 0.0, sum_n = 0.0;
    std::vector<std::string> per;
    const auto d = seeds_of(simple), n = seeds_of(no_sg);
    for (std::size_t i = 0; i < std::min(d.size(), n.size()); ++i) {
        const double rd = final_return(d[i]), rn = final_return(n[i]);
        sum_d += rd;
        sum_n += rn;
        per.push_back(fmt3(rn) + "/" + fmt3(rd));
    }
    const double md = sum_d / static_cast<double>(d.size()), mn = sum_n / static_cast<double>(n.size());
    return {exact_ok && mn <= md, exact + "mean final trailing return no-sg " + fmt3(mn) + " <= default " + fmt3(md) +
                                      " (per seed no-sg/default: " + join(per) + ")"};
}

Outcome criterion10(const fs::path& simple) {
    int ok = 0;
    std::vector<std::string> per;
    for (const auto& sd : seeds_of(simple)) {
        const double before = analysis_first(sd, "sr_corr_weighted"), after = analysis_last(sd, "sr_corr_weighted");
        const bool pass = std::isfinite(before) && std::isfinite(after) && after - before > 0.0;
        ok += pass;
        per.push_back(fmt3(before) + "->" + fmt3(after));
    }
    return {ok >= 4, std::to_string(ok) + "/5 seeds with delta > 0 (" + join(per) + ")"};
}

Outcome criterion11(const Lab& lab, const fs::path& run) {
    const auto cfg = lab.load("acceptance_slippery");
    const int spl = shortest_path(cfg, cfg.env.layout);
    const auto [ok, per] = threshold_hits(run, 2.0, spl, 300000);
    return {ok >= 3, "slip 0.3, bound " + fmt3(2.0 * spl) + " steps; " + std::to_string(ok) + "/5 seeds (steps " + per +
                         ")"};
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"sflab acceptance suite"};
    Lab lab;
    std::string configs = SFLAB_SOURCE_DIR "/configs", out = "acceptance_runs", only;
    app.add_option("--configs", configs, "directory holding acceptance_*.ini");
    app.add_option("--out", out, "where run directories are written");
    app.add_option("--only", only, "comma-separated criterion numbers");
    CLI11_PARSE(app, argc, argv);
    lab.configs = configs;
    lab.out = out;
    if (const char* r = std::getenv("SFLAB_ACCEPT_REUSE")) lab.reuse = std::string(r) == "1";

    std::set<int> want;
    for (const auto& s : detail::split_list(only)) want.insert(std::stoi(s));
    auto on = [&](std::initializer_list<int> ids) {
        if (want.empty()) return true;
        for (int i : ids)
            if (want.count(i)) return true;
        return false;
    };

    std::map<int, Outcome> results;
    auto record = [&](int id, const std::function<Outcome()>& f) {
        const auto t0 = Clock::now();
        Outcome o;
        try {
            o = f();
        } catch (const std::exception& e) {
            o = {false, std::string("error: ") + e.what()};
        }
        results[id] = o;
        std::printf("%s criterion %d: %s [%.0f s]\n", o.pass ? "PASS" : "FAIL", id, o.detail.c_str(), seconds_since(t0));
        std::fflush(stdout);
    };

    if (on({1})) record(1, criterion1);
    if (on({2})) record(2, criterion2);
    if (on({3})) record(3, criterion3);
    if (on({4})) record(4, criterion4);
    if (on({12})) record(12, criterion12);

    fs::path simple, canonical, dqn, no_sg, continual, slippery;
    if (on({5, 6})) {
        const CollapseRuns cr{lab.run("acceptance_collapse_simple"), lab.run("acceptance_canonical")};
        record(5, [&] { return criterion5(cr); });
        record(6, [&] { return criterion6(cr); });
    }
    if (on({7, 9, 10})) simple = lab.run("acceptance_simple");
    if (on({7})) {
        dqn = lab.run("acceptance_dqn", stop_at_threshold(1.5));
        record(7, [&] { return criterion7(lab, simple, dqn); });
    }
    if (on({8})) {
        ContinualProbe probe;
        RunHooks h;
        int last_segment = 0;
        h.should_stop = [&](const agents::Trainer& t) -> std::optional<std::string> {
            if (t.segment() > last_segment) {
                ++probe.switches;
                probe.empty += t.buffer().size() == 1;
            }
            last_segment = t.segment();
            return std::nullopt;
        };
        continual = lab.run("acceptance_continual", h);
        record(8, [&] { return criterion8(lab, continual, probe); });
    }
    if (on({9})) {
        no_sg = lab.run("acceptance_no_stop_gradient");
        record(9, [&] { return criterion9(simple, no_sg); });
    }
    if (on({10})) record(10, [&] { return criterion10(simple); });
    if (on({11})) {
        slippery = lab.run("acceptance_slippery", stop_at_threshold(2.0));
        record(11, [&] { return criterion11(lab, slippery); });
    }

    int failed = 0;
    for (const auto& [id, o] : results) failed += !o.pass;
    std::printf("acceptance: %zu criteria, %d failed\n", results.size(), failed);
    return failed == 0 ? 0 : 1;
}
