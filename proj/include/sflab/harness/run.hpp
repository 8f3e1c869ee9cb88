#pragma once

// Experiment orchestration. For every seed:
//
//   <out_dir>/config.ini             resolved configuration
//   <out_dir>/seed_<N>/metrics.csv   one row per episode (deterministic)
//   <out_dir>/seed_<N>/timing.csv    frames per second and wall clock per episode
//   <out_dir>/seed_<N>/updates.csv   loss components every run.log_every updates
//   <out_dir>/seed_<N>/analysis.csv  representation diagnostics at every dump
//   <out_dir>/seed_<N>/events.jsonl  task starts, buffer resets, early stops
//   <out_dir>/seed_<N>/phi_dump_<step>.csv, sf_dump_<step>.csv
//   <out_dir>/seed_<N>/checkpoint.txt
//
// Every file is written through a temp file and renamed into place.

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "sflab/agents/trainer.hpp"
#include "sflab/analysis/features.hpp"
#include "sflab/harness/config.hpp"
#include "sflab/harness/io.hpp"
#include "sflab/nets/checkpoint.hpp"

namespace sflab::harness {

inline const char* kMetricsHeader =
    "run_id,seed,task_index,exposure,segment,global_step,episode_index,episode_return,episode_length,"
    "moving_avg_return,moving_avg_length,cumulative_return,loss_total,loss_psi,loss_w,loss_aux,updates,eps";

inline std::string metrics_row(const std::string& run_id, std::uint64_t seed, const agents::EpisodeRecord& r) {
    using nets::format_double;
    std::ostringstream o;
    o << run_id << ',' << seed << ',' << r.task_index << ',' << r.exposure << ',' << r.segment << ',' << r.global_step
      << ',' << r.episode_index << ',' << format_double(r.episode_return) << ',' << r.episode_length << ','
      << format_double(r.moving_avg_return) << ',' << format_double(r.moving_avg_length) << ','
      << format_double(r.cumulative_return) << ',' << format_double(r.loss.total) << ','
      << format_double(r.loss.l_psi) << ',' << format_double(r.loss.l_w) << ',' << format_double(r.loss.l_aux) << ','
      << r.updates << ',' << format_double(r.eps);
    return o.str();
}

inline const char* kAnalysisHeader =
    "global_step,task_index,phi_mean_cosine,phi_silhouette,phi_davies_bouldin,sf_mean_cosine,sr_corr_weighted,"
    "sr_corr_mean,sr_corr_std";

struct Diagnostics {
    analysis::CollapseReport phi;
    std::optional<double> sf_cosine;
    std::optional<analysis::CorrelationReport> corr;
};

// Collapse metrics on phi and, for successor heads, SR correlation of the
// forward-action SFs weighted by discounted visitation from the start pose.
inline Diagnostics diagnose(const nets::NetworkParams& p, const envs::GridLayout& g, const envs::RenderConfig& rc,
                            double gamma, const analysis::FeatureDump* phi_dump = nullptr,
                            const analysis::FeatureDump* sf_dump = nullptr) {
    Diagnostics d;
    const analysis::FeatureDump phi = phi_dump ? *phi_dump : analysis::dump_phi(p, g, rc);
    Rng rng(0, "analysis.collapse");
    d.phi = analysis::collapse_metrics(phi, analysis::default_labels(g, phi), 0, rng);
    if (p.online.head.kind == nets::HeadKind::successor) {
        const analysis::FeatureDump sf = analysis::per_state(sf_dump ? *sf_dump : analysis::dump_sf(p, g, rc), 0);
        d.sf_cosine = analysis::mean_pairwise_cosine(analysis::vectors(sf), 0, rng);
        const auto sr = analysis::analytical_sr(envs::transition_matrix(g, envs::uniform_policy(g)), gamma);
        const auto weights = analysis::visitation_weights(sr, envs::StateIndex(g)(g.start));
        try {
            d.corr = analysis::sr_correlation(sf, sr, &weights);
        } catch (const DegenerateInputError&) {
            d.corr.reset();
        }
    }
    return d;
}

struct SeedResult {
    std::uint64_t seed = 0;
    bool completed = true;
    long global_steps = 0;
    std::string error;
};

namespace detail {

inline std::string csv_num(const std::optional<double>& v) { return v ? nets::format_double(*v) : "nan"; }

inline std::string dump_text(const analysis::FeatureDump& d) {
    std::ostringstream o;
    analysis::write_dump_csv(o, d);
    return o.str();
}

} // namespace detail

// Hooks for callers that want to watch a run (the acceptance suite does).
struct RunHooks {
    std::function<void(const agents::Trainer&, const agents::EpisodeRecord&)> on_episode;
    std::function<std::optional<std::string>(const agents::Trainer&)> should_stop;
};

inline SeedResult run_seed(const ExperimentConfig& cfg, std::uint64_t seed, const fs::path& dir,
                           const RunHooks& hooks = {}) {
    SeedResult res;
    res.seed = seed;
    fs::create_directories(dir);
    const envs::TaskSchedule schedule = build_schedule(cfg);
    agents::TrainOptions opt;
    opt.render = render_config(cfg);
    opt.net = net_config(cfg);
    opt.seed = seed;
    agents::Trainer trainer(schedule, cfg.agent, opt);
    const std::string run_id = fs::path(cfg.run.out_dir).filename().string() + "/seed_" + std::to_string(seed);
    const double gamma = analysis_gamma(cfg);

    std::ostringstream metrics, timing, updates, analysis_csv, events;
    metrics << kMetricsHeader << "\n";
    timing << "episode_index,global_step,frames_per_second,wallclock_ms\n";
    updates << "update,global_step,loss_total,loss_psi,loss_w,loss_aux\n";
    analysis_csv << kAnalysisHeader << "\n";

    auto current_layout = [&]() -> const envs::GridLayout& {
        return schedule.tasks[static_cast<std::size_t>(trainer.task_index())].layout;
    };
    auto dump = [&](const std::string& tag) {
        const auto& p = trainer.agent().params();
        const auto& g = current_layout();
        const auto phi = analysis::dump_phi(p, g, opt.render);
        write_file_atomic(dir / ("phi_dump_" + tag + ".csv"), detail::dump_text(phi));
        std::optional<analysis::FeatureDump> sf;
        if (p.online.head.kind == nets::HeadKind::successor) {
            sf = analysis::dump_sf(p, g, opt.render);
            write_file_atomic(dir / ("sf_dump_" + tag + ".csv"), detail::dump_text(*sf));
        }
        const Diagnostics d = diagnose(p, g, opt.render, gamma, &phi, sf ? &*sf : nullptr);
        analysis_csv << trainer.global_step() << ',' << trainer.task_index() << ','
                     << nets::format_double(d.phi.mean_pairwise_cosine) << ',' << nets::format_double(d.phi.silhouette)
                     << ',' << nets::format_double(d.phi.davies_bouldin) << ',' << detail::csv_num(d.sf_cosine) << ','
                     << detail::csv_num(d.corr ? std::optional<double>(d.corr->weighted_mean) : std::nullopt) << ','
                     << detail::csv_num(d.corr ? std::optional<double>(d.corr->mean) : std::nullopt) << ','
                     << detail::csv_num(d.corr ? std::optional<double>(d.corr->std) : std::nullopt) << "\n";
    };
    auto flush = [&] {
        write_file_atomic(dir / "metrics.csv", metrics.str());
        write_file_atomic(dir / "timing.csv", timing.str());
        write_file_atomic(dir / "updates.csv", updates.str());
        write_file_atomic(dir / "analysis.csv", analysis_csv.str());
        write_file_atomic(dir / "events.jsonl", events.str());
    };

    agents::TrainCallbacks cb;
    cb.on_episode = [&](const agents::EpisodeRecord& r) {
        metrics << metrics_row(run_id, seed, r) << "\n";
        timing << r.episode_index << ',' << r.global_step << ',' << nets::format_double(r.frames_per_second) << ','
               << nets::format_double(r.wallclock_ms) << "\n";
        if (hooks.on_episode) hooks.on_episode(trainer, r);
    };
    cb.on_update = [&](const agents::UpdateRecord& u) {
        if (u.update_index % cfg.run.log_every != 0) return;
        updates << u.update_index << ',' << u.global_step << ',' << nets::format_double(u.loss.total) << ','
                << nets::format_double(u.loss.l_psi) << ',' << nets::format_double(u.loss.l_w) << ','
                << nets::format_double(u.loss.l_aux) << "\n";
    };
    cb.on_event = [&](const agents::TrainEvent& e) {
        nlohmann::json j{{"event", e.kind},         {"segment", e.segment},         {"task_index", e.task_index},
                         {"exposure", e.exposure},  {"global_step", e.global_step}, {"buffer_size", e.buffer_size},
                         {"detail", e.detail}};
        events << j.dump() << "\n";
    };
    const auto t0 = std::chrono::steady_clock::now();
    cb.should_stop = [&](const agents::Trainer& t) -> std::optional<std::string> {
        if (cfg.run.dump_sf_every > 0 && t.global_step() % cfg.run.dump_sf_every == 0)
            dump("step" + std::to_string(t.global_step()));
        if (hooks.should_stop)
            if (auto why = hooks.should_stop(t)) return why;
        if (cfg.run.max_wallclock_seconds > 0.0 && (t.global_step() & 63) == 0) {
            const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            if (s > cfg.run.max_wallclock_seconds)
                return "max_wallclock_seconds " + nets::format_double(cfg.run.max_wallclock_seconds) + " exceeded";
        }
        return std::nullopt;
    };

    dump("step0");
    res.completed = trainer.run(cb);
    res.global_steps = trainer.global_step();
    dump("final");
    {
        std::ostringstream ck;
        nets::write_checkpoint(ck, trainer.agent().params());
        write_file_atomic(dir / "checkpoint.txt", ck.str());
    }
    flush();
    return res;
}

inline int thread_cap() {
    if (const char* s = std::getenv("SFLAB_THREADS")) {
        const int n = std::atoi(s);
        if (n >= 1) return n;
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

// Runs every seed (in parallel up to SFLAB_THREADS). Returns 0 when all seeds
// completed, 1 when any seed failed.
inline int run_experiment(const ExperimentConfig& cfg, std::vector<SeedResult>* results = nullptr) {
    const fs::path out(cfg.run.out_dir);
    fs::create_directories(out);
    write_file_atomic(out / "config.ini", emit_config(cfg));
    std::vector<SeedResult> all(cfg.run.seeds.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i; (i = next.fetch_add(1)) < cfg.run.seeds.size();) {
            const auto seed = cfg.run.seeds[i];
            try {
                all[i] = run_seed(cfg, seed, out / ("seed_" + std::to_string(seed)));
            } catch (const std::exception& e) {
                all[i].seed = seed;
                all[i].completed = false;
                all[i].error = e.what();
            }
        }
    };
    const int n = std::min<int>(thread_cap(), static_cast<int>(cfg.run.seeds.size()));
    std::vector<std::thread> pool;
    for (int t = 1; t < n; ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    if (results) *results = all;
    for (const auto& r : all)
        if (!r.error.empty()) return 1;
    return 0;
}

// ---------------------------------------------------------------- efficiency

// First global_step at which the trailing `window` episodes (a full window)
// average at most threshold_factor * shortest_path steps.
inline std::optional<long> steps_to_threshold(const std::vector<std::pair<long, int>>& episodes, int window,
                                              double threshold_factor, int shortest_path) {
    if (window < 1) throw ConfigError("steps_to_threshold: window must be >= 1");
    const double limit = threshold_factor * static_cast<double>(shortest_path);
    double sum = 0.0;
    for (std::size_t i = 0; i < episodes.size(); ++i) {
        sum += episodes[i].second;
        if (i >= static_cast<std::size_t>(window)) sum -= episodes[i - static_cast<std::size_t>(window)].second;
        if (i + 1 >= static_cast<std::size_t>(window) && sum / window <= limit) return episodes[i].first;
    }
    return std::nullopt;
}

// (global_step, episode_length) pairs from a metrics.csv, optionally one segment only.
inline std::vector<std::pair<long, int>> episode_lengths(const CsvTable& metrics, int segment = -1) {
    std::vector<std::pair<long, int>> out;
    const auto cs = metrics.column("global_step"), cl = metrics.column("episode_length"),
               cg = metrics.column("segment");
    for (const auto& row : metrics.rows) {
        if (segment >= 0 && std::stoi(row[cg]) != segment) continue;
        out.emplace_back(std::stol(row[cs]), std::stoi(row[cl]));
    }
    return out;
}

} // namespace sflab::harness
