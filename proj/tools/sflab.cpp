// sflab command line: train, verify, analyze, plot, dump-sf.
// Exit codes: 0 success, 1 suite or run failure, 2 usage or config error.

#include <filesystem>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "sflab/harness/config.hpp"
#include "sflab/harness/plots.hpp"
#include "sflab/harness/run.hpp"
#include "sflab/harness/verify.hpp"

namespace fs = std::filesystem;
using namespace sflab;

namespace {

// A run directory holds seed_* subdirectories; a seed directory is accepted too.
std::vector<fs::path> seeds_of(const fs::path& run) {
    auto dirs = harness::seed_dirs(run);
    if (dirs.empty() && fs::exists(run / "metrics.csv")) dirs.push_back(run);
    if (dirs.empty()) throw ConfigError("no seed directories under " + run.string());
    return dirs;
}

std::optional<harness::ExperimentConfig> run_config(const fs::path& run) {
    for (const fs::path& p : {run / "config.ini", run.parent_path() / "config.ini"})
        if (fs::exists(p)) return harness::parse_config(p.string());
    return std::nullopt;
}

// Finds the render settings whose observation shape matches the checkpoint.
envs::RenderConfig match_render(const envs::GridLayout& g, const nets::NetConfig& nc) {
    for (auto view : {envs::View::allocentric, envs::View::egocentric})
        for (int k = 1; k <= 8; ++k) {
            envs::RenderConfig rc;
            rc.view = view;
            rc.scale = k;
            if (envs::observation_shape(g, rc) == Shape{nc.obs_channels, nc.obs_height, nc.obs_width}) return rc;
        }
    throw ConfigError("layout " + g.name + " cannot produce the checkpoint's observation shape " +
                      shape_str({nc.obs_channels, nc.obs_height, nc.obs_width}));
}

nlohmann::json corr_json(const analysis::CorrelationReport& r) {
    return {{"mean", r.mean}, {"std", r.std}, {"weighted_mean", r.weighted_mean}, {"weighted_std", r.weighted_std},
            {"undefined_rows", r.undefined}};
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"sflab: successor-feature agents on pixel gridworlds"};
    app.require_subcommand(1);

    auto* train = app.add_subcommand("train", "run an experiment config");
    std::string config_path, out_dir;
    std::optional<std::uint64_t> seed;
    train->add_option("--config", config_path, "config file")->required();
    train->add_option("--seed", seed, "run only this seed");
    train->add_option("--out", out_dir, "output directory (overrides run.out_dir)");

    auto* verify = app.add_subcommand("verify", "run property suites");
    std::string suite;
    std::string report_path;
    verify->add_option("suite", suite, "gradients | collapse | proposition1 | sr-oracle | all")->required();
    verify->add_option("--report", report_path, "also write the JSON report here");

    auto* analyze = app.add_subcommand("analyze", "post-hoc analysis of a run directory");
    analyze->require_subcommand(1);
    auto* sr_corr = analyze->add_subcommand("sr-corr", "SF to SR rank correlation, before and after training");
    auto* collapse = analyze->add_subcommand("collapse", "collapse metrics of phi");
    std::string run_dir, layout_name;
    double gamma = -1.0;
    sr_corr->add_option("--run", run_dir)->required();
    sr_corr->add_option("--layout", layout_name)->required();
    sr_corr->add_option("--gamma", gamma, "SR discount (default: from the run config, else 0.99)");
    collapse->add_option("--run", run_dir)->required();
    collapse->add_option("--layout", layout_name, "layout for cluster labels (default: first task of the run)");

    auto* plot = app.add_subcommand("plot", "emit SVG plots");
    std::string kind;
    std::vector<std::string> runs;
    std::string plot_out = "plots";
    plot->add_option("kind", kind, "returns | cumulative | cosine | correlation | scatter2d")->required();
    plot->add_option("--runs", runs)->required();
    plot->add_option("--out", plot_out);

    auto* dump = app.add_subcommand("dump-sf", "dump SFs of a checkpoint over every state of a layout");
    std::string ckpt, dump_out;
    bool dump_phi = false;
    dump->add_option("--checkpoint", ckpt)->required();
    dump->add_option("--layout", layout_name)->required();
    dump->add_option("--out", dump_out, "CSV path (default stdout)");
    dump->add_flag("--phi", dump_phi, "dump basis features instead of SFs");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*train) {
            auto cfg = harness::parse_config(config_path);
            if (seed) cfg.run.seeds = {*seed};
            if (!out_dir.empty()) cfg.run.out_dir = out_dir;
            std::vector<harness::SeedResult> results;
            const int rc = harness::run_experiment(cfg, &results);
            for (const auto& r : results)
                std::cout << "seed " << r.seed << ": " << r.global_steps << " steps"
                          << (r.completed ? "" : " (stopped early)") << (r.error.empty() ? "" : " error: " + r.error)
                          << "\n";
            return rc;
        }
        if (*verify) {
            const auto reports = harness::verify(suite);
            const auto j = harness::to_json(reports);
            std::cout << j.dump(2) << "\n";
            if (!report_path.empty()) harness::write_file_atomic(report_path, j.dump(2) + "\n");
            return j["passed"].get<bool>() ? 0 : 1;
        }
        if (*sr_corr) {
            const auto cfg = run_config(run_dir);
            if (gamma < 0) gamma = cfg ? harness::analysis_gamma(*cfg) : 0.99;
            const int interior = cfg ? cfg->env.grid_size : 5;
            const auto g = envs::make_layout(layout_name, interior);
            const auto sr = analysis::analytical_sr(envs::transition_matrix(g, envs::uniform_policy(g)), gamma);
            const auto weights = analysis::visitation_weights(sr, envs::StateIndex(g)(g.start));
            nlohmann::json j;
            j["layout"] = layout_name;
            j["gamma"] = gamma;
            for (const auto& dir : seeds_of(run_dir)) {
                nlohmann::json s;
                for (const std::string when : {"step0", "final"}) {
                    const fs::path p = dir / ("sf_dump_" + when + ".csv");
                    if (!fs::exists(p)) continue;
                    const auto d = analysis::per_state(analysis::load_dump_csv(p.string()), 0);
                    s[when] = corr_json(analysis::sr_correlation(d, sr, &weights));
                }
                if (s.contains("step0") && s.contains("final"))
                    s["delta_weighted_mean"] =
                        s["final"]["weighted_mean"].get<double>() - s["step0"]["weighted_mean"].get<double>();
                j["seeds"][dir.filename().string()] = s;
            }
            std::cout << j.dump(2) << "\n";
            return 0;
        }
        if (*collapse) {
            const auto cfg = run_config(run_dir);
            std::optional<envs::GridLayout> g;
            if (!layout_name.empty()) g = envs::make_layout(layout_name, cfg ? cfg->env.grid_size : 5);
            else if (cfg) g = harness::resolve_layout(*cfg, harness::task_names(*cfg).front());
            else throw ConfigError("analyze collapse: no config.ini found; pass --layout");
            nlohmann::json j;
            for (const auto& dir : seeds_of(run_dir)) {
                nlohmann::json s;
                for (const std::string when : {"step0", "final"}) {
                    const fs::path p = dir / ("phi_dump_" + when + ".csv");
                    if (!fs::exists(p)) continue;
                    const auto d = analysis::load_dump_csv(p.string());
                    Rng rng(0, "analysis.collapse");
                    const auto r = analysis::collapse_metrics(d, analysis::default_labels(*g, d), 0, rng);
                    s[when] = {{"mean_cosine", r.mean_pairwise_cosine}, {"silhouette", r.silhouette},
                               {"davies_bouldin", r.davies_bouldin}};
                }
                j[dir.filename().string()] = s;
            }
            std::cout << j.dump(2) << "\n";
            return 0;
        }
        if (*plot) {
            std::vector<fs::path> paths(runs.begin(), runs.end());
            std::cout << harness::emit_plots(paths, harness::plot_kind_from_string(kind), plot_out).string() << "\n";
            return 0;
        }
        if (*dump) {
            const auto p = nets::load_checkpoint(ckpt);
            const auto g = envs::make_layout(layout_name, 5);
            const auto rc = match_render(g, p.config);
            const auto d = dump_phi ? analysis::dump_phi(p, g, rc) : analysis::dump_sf(p, g, rc);
            std::ostringstream os;
            analysis::write_dump_csv(os, d);
            if (dump_out.empty()) std::cout << os.str();
            else harness::write_file_atomic(dump_out, os.str());
            return 0;
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
