#include <gtest/gtest.h>

#include <unistd.h>

#include <cstdlib>
#include <string>

#include "json.hpp"
#include "sflab/harness/config.hpp"
#include "sflab/harness/io.hpp"
#include "sflab/harness/plots.hpp"
#include "sflab/harness/run.hpp"
#include "sflab/harness/verify.hpp"

using namespace sflab;
using namespace sflab::harness;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("sflab_test_" + name + "_" + std::to_string(::getpid()));
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

const char* kTiny = R"(
[env]
layout = CenterWall.task1
render_scale = 2
max_steps_per_episode = 50
[agent]
gamma = 0.9
batch_size = 8
min_replay = 100
eps_decay_steps = 300
[net]
sf_dim = 4
conv = 4x3x2
head_hidden = 8
[schedule]
training_steps = 400
[run]
log_every = 10
)";

ExperimentConfig tiny(const fs::path& out, const std::string& extra = "") {
    auto c = parse_config_text(std::string(kTiny) + extra);
    c.run.out_dir = out.string();
    return c;
}

std::string error_of(const std::string& text) {
    try {
        parse_config_text(text);
    } catch (const ConfigError& e) {
        return e.what();
    }
    return "";
}

} // namespace

TEST(Config, DefaultsAndRoundTrip) {
    const auto c = parse_config_text("");
    EXPECT_EQ(c, ExperimentConfig{});
    EXPECT_EQ(c.env.layout, "CenterWall.task1");
    const auto t = parse_config_text(kTiny);
    EXPECT_EQ(parse_config_text(emit_config(t)), t);
    EXPECT_EQ(t.net.conv.size(), 1u);
    EXPECT_DOUBLE_EQ(t.agent.gamma, 0.9);
}

TEST(Config, SeedRanges) {
    EXPECT_EQ(parse_config_text("[run]\nseeds = 1..3, 7").run.seeds, (std::vector<std::uint64_t>{1, 2, 3, 7}));
    EXPECT_NE(error_of("[run]\nseeds = 5..2").find("run.seeds"), std::string::npos);
}

TEST(Config, ErrorsNameKeyAndLine) {
    const std::string bad_gamma = error_of("[agent]\n\ngamma = 1.5\n");
    EXPECT_NE(bad_gamma.find("agent.gamma"), std::string::npos) << bad_gamma;
    EXPECT_NE(bad_gamma.find("line 3"), std::string::npos) << bad_gamma;
    EXPECT_NE(error_of("[agent]\nalpha = 1").find("agent.alpha: unknown key"), std::string::npos);
    EXPECT_NE(error_of("[nope]\n").find("unknown section"), std::string::npos);
    EXPECT_NE(error_of("gamma = 0.5").find("outside of a section"), std::string::npos);
    EXPECT_NE(error_of("[agent]\nbatch_size = many").find("agent.batch_size"), std::string::npos);
    EXPECT_NE(error_of("[env]\nview = sideways").find("env.view"), std::string::npos);
    EXPECT_THROW(parse_config("/nonexistent/file.ini"), ConfigError);
}

TEST(Io, AtomicWriteLeavesNoTemp) {
    const auto dir = scratch("io");
    write_file_atomic(dir / "a" / "x.txt", "one");
    write_file_atomic(dir / "a" / "x.txt", "two");
    EXPECT_EQ(read_file(dir / "a" / "x.txt"), "two");
    EXPECT_FALSE(fs::exists(dir / "a" / "x.txt.tmp"));
    const auto t = parse_csv("a,b\n1,2\n3,\n");
    EXPECT_EQ(t.rows.size(), 2u);
    EXPECT_EQ(t.number(0, "b"), 2.0);
    EXPECT_THROW(parse_csv("a,b\n1\n"), ConfigError);
    EXPECT_THROW(t.column("c"), ConfigError);
    fs::remove_all(dir);
}

TEST(Efficiency, StepsToThreshold) {
    const std::vector<std::pair<long, int>> eps{{50, 50}, {60, 10}, {66, 6}, {71, 5}, {76, 5}};
    EXPECT_EQ(steps_to_threshold(eps, 2, 1.5, 5), std::optional<long>(71));  // (10+6)/2 = 8 > 7.5
    EXPECT_EQ(steps_to_threshold(eps, 1, 1.3, 5), std::optional<long>(66));
    EXPECT_FALSE(steps_to_threshold(eps, 10, 1.5, 5).has_value());
    EXPECT_THROW(steps_to_threshold(eps, 0, 1.5, 5), ConfigError);
}

TEST(Run, SameSeedSameBytesAndFiveSeeds) {
    const auto dir = scratch("run");
    // Same leaf name so run_id columns agree.
    auto a = tiny(dir / "a" / "run", "seeds = 1..5\n");
    auto b = tiny(dir / "b" / "run", "seeds = 1\n");
    ::setenv("SFLAB_THREADS", "1", 1);
    std::vector<SeedResult> res;
    ASSERT_EQ(run_experiment(a, &res), 0);
    ASSERT_EQ(run_experiment(b), 0);
    EXPECT_EQ(res.size(), 5u);
    for (int s = 1; s <= 5; ++s) {
        const auto sd = dir / "a" / "run" / ("seed_" + std::to_string(s));
        for (const char* f : {"metrics.csv", "updates.csv", "analysis.csv", "events.jsonl", "checkpoint.txt",
                              "phi_dump_step0.csv", "phi_dump_final.csv", "sf_dump_final.csv", "timing.csv"})
            EXPECT_TRUE(fs::exists(sd / f)) << sd / f;
    }
    for (const char* f : {"metrics.csv", "updates.csv", "analysis.csv", "events.jsonl", "checkpoint.txt"})
        EXPECT_EQ(read_file(dir / "a" / "run" / "seed_1" / f), read_file(dir / "b" / "run" / "seed_1" / f)) << f;
    EXPECT_NE(read_file(dir / "a" / "run" / "seed_1" / "metrics.csv"), read_file(dir / "a" / "run" / "seed_2" / "metrics.csv"));
    EXPECT_EQ(parse_config((dir / "a" / "run" / "config.ini").string()), a);

    const auto m = load_csv(dir / "a" / "run" / "seed_1" / "metrics.csv");
    ASSERT_FALSE(m.rows.empty());
    EXPECT_EQ(m.header.size(), 18u);
    EXPECT_LE(m.number(m.rows.size() - 1, "global_step"), 400.0);

    // Plots over the five-seed run and a single-seed run.
    for (auto kind : {PlotKind::returns, PlotKind::cumulative, PlotKind::cosine, PlotKind::correlation}) {
        const auto band = make_band(dir / "a" / "run", kind);
        for (std::size_t i = 0; i < band.x.size(); ++i) EXPECT_LE(band.lo[i], band.hi[i]);
        const auto single = make_band(dir / "b" / "run", kind);
        for (std::size_t i = 0; i < single.x.size(); ++i) EXPECT_DOUBLE_EQ(single.lo[i], single.hi[i]);
        const auto svg = read_file(emit_plots({dir / "a" / "run", dir / "b" / "run"}, kind, dir / "plots"));
        EXPECT_EQ(svg.rfind("<svg", 0), 0u);
    }
    const auto scatter = read_file(emit_plots({dir / "a" / "run"}, PlotKind::scatter2d, dir / "plots"));
    EXPECT_NE(scatter.find("<circle"), std::string::npos);
    EXPECT_NE(scatter.find("hsl("), std::string::npos);
    EXPECT_THROW(plot_kind_from_string("pie"), ConfigError);
    fs::remove_all(dir);
}

TEST(Run, WallclockStopIsRecorded) {
    const auto dir = scratch("stop");
    auto c = tiny(dir, "max_wallclock_seconds = 1e-9\n");
    c.schedule.training_steps = 100000;
    const auto r = run_seed(c, 1, dir / "seed_1");
    EXPECT_FALSE(r.completed);
    EXPECT_LT(r.global_steps, 100000);
    bool seen = false;
    std::istringstream ev(read_file(dir / "seed_1" / "events.jsonl"));
    for (std::string line; std::getline(ev, line);)
        if (nlohmann::json::parse(line).value("event", "") == "early_stop") seen = true;
    EXPECT_TRUE(seen);
    fs::remove_all(dir);
}

TEST(Run, ContinualScheduleResetsBuffer) {
    const auto dir = scratch("continual");
    auto c = tiny(dir, "");
    c.schedule.tasks = {"CenterWall.task1", "CenterWall.task2"};
    c.schedule.exposures = 2;
    c.schedule.training_steps = 150;
    ASSERT_TRUE(run_seed(c, 3, dir / "seed_3").completed);
    std::vector<long> starts;
    std::istringstream ev(read_file(dir / "seed_3" / "events.jsonl"));
    for (std::string line; std::getline(ev, line);) {
        const auto j = nlohmann::json::parse(line);
        if (j["event"] == "buffer_reset") {
            EXPECT_EQ(j["buffer_size"], 0);
        }
        if (j["event"] == "task_start") starts.push_back(j["global_step"]);
    }
    EXPECT_EQ(starts, (std::vector<long>{0, 150, 300, 450}));
    fs::remove_all(dir);
}

TEST(Verify, CheapSuitesPass) {
    for (const char* s : {"collapse", "proposition1"}) {
        const auto r = verify(s).at(0);
        EXPECT_TRUE(r.passed) << s << " " << r.details.dump();
    }
    EXPECT_THROW(verify("nonsense"), ConfigError);
    EXPECT_FALSE(suite_names().empty());
}

TEST(Run, EpsilonRestartsPerSegment) {
    const auto dir = scratch("epsreset");
    double high[2] = {0.0, 0.0};
    for (int reset = 0; reset < 2; ++reset) {
        auto c = tiny(dir / std::to_string(reset), "");
        c.schedule.tasks = {"CenterWall.task1", "CenterWall.task2"};
        c.schedule.training_steps = 300;
        c.agent.eps_reset_on_switch = reset == 1;
        ASSERT_TRUE(run_seed(c, 2, dir / std::to_string(reset) / "seed_2").completed);
        const auto m = load_csv(dir / std::to_string(reset) / "seed_2" / "metrics.csv");
        for (std::size_t i = 0; i < m.rows.size(); ++i)
            if (m.number(i, "segment") == 1) high[reset] = std::max(high[reset], m.number(i, "eps"));
    }
    // Without the restart segment 1 sits at eps_end; with it, eps climbs back.
    EXPECT_DOUBLE_EQ(high[0], 0.05);
    EXPECT_GT(high[1], 0.8);
    EXPECT_EQ(parse_config_text("[agent]\neps_reset_on_switch = true").agent.eps_reset_on_switch, true);
    fs::remove_all(dir);
}
