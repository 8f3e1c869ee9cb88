#pragma once

// Experiment configuration: sectioned key=value text.
//
//   # comment
//   [env]
//   layout = CenterWall.task1
//   [agent]
//   gamma = 0.99
//
// Sections: env, agent, net, schedule, run. Unknown sections or keys, bad
// values and out-of-range values are rejected with "line N: section.key: why".

#include <charconv>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "sflab/agents/config.hpp"
#include "sflab/envs/gridworld.hpp"
#include "sflab/envs/schedule.hpp"
#include "sflab/nets/checkpoint.hpp"

namespace sflab::harness {

struct EnvSection {
    std::string layout = "CenterWall.task1";
    envs::View view = envs::View::allocentric;
    int render_scale = 4;
    int ego_size = 5;
    int grid_size = 5;  // walkable interior
    std::optional<double> slip_prob;  // overrides the layout's own value
    int max_steps_per_episode = 400;
    friend bool operator==(const EnvSection&, const EnvSection&) = default;
};

struct NetSection {
    std::size_t sf_dim = 32;
    std::vector<nets::ConvSpec> conv{{8, 3, 2}, {8, 3, 1}};
    std::vector<std::size_t> head_hidden{64, 64};
    bool task_projection = false;
    std::size_t task_hidden = 64;
    bool layer_norm = false;
    friend bool operator==(const NetSection&, const NetSection&) = default;
};

struct ScheduleSection {
    std::vector<std::string> tasks;  // empty: just env.layout
    long training_steps = 100000;     // per task and exposure
    int exposures = 1;
    bool reset_buffer_on_switch = true;
    friend bool operator==(const ScheduleSection&, const ScheduleSection&) = default;
};

struct RunSection {
    std::vector<std::uint64_t> seeds{1};
    std::string out_dir = "runs/default";
    long log_every = 100;      // gradient updates between updates.csv rows
    long dump_sf_every = 0;    // environment steps between feature dumps; 0 = final only
    double max_wallclock_seconds = 0.0;  // 0 = unlimited
    double analysis_gamma = -1.0;        // SR discount for analysis; < 0 = agent.gamma
    friend bool operator==(const RunSection&, const RunSection&) = default;
};

struct ExperimentConfig {
    EnvSection env;
    agents::AgentConfig agent;
    NetSection net;
    ScheduleSection schedule;
    RunSection run;
    friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

namespace detail {

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

inline std::string fmt(double v) { return nets::format_double(v); }

struct KeyError {
    std::string key;
    std::string why;
};

template <class T>
T parse_int(const std::string& key, const std::string& v) {
    T out{};
    auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size()) throw KeyError{key, "expected an integer, got '" + v + "'"};
    return out;
}

inline double parse_double(const std::string& key, const std::string& v) {
    char* end = nullptr;
    const double d = std::strtod(v.c_str(), &end);
    if (v.empty() || end != v.c_str() + v.size()) throw KeyError{key, "expected a number, got '" + v + "'"};
    return d;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw KeyError{key, "expected true or false, got '" + v + "'"};
}

// "1,2,3" or "1..5"
inline std::vector<std::uint64_t> parse_seeds(const std::string& key, const std::string& v) {
    std::vector<std::uint64_t> out;
    for (const auto& item : split_list(v)) {
        const auto dots = item.find("..");
        if (dots != std::string::npos) {
            const auto lo = parse_int<std::uint64_t>(key, trim(item.substr(0, dots)));
            const auto hi = parse_int<std::uint64_t>(key, trim(item.substr(dots + 2)));
            if (hi < lo) throw KeyError{key, "empty seed range '" + item + "'"};
            for (auto s = lo; s <= hi; ++s) out.push_back(s);
        } else {
            out.push_back(parse_int<std::uint64_t>(key, item));
        }
    }
    return out;
}

inline void set_key(ExperimentConfig& c, const std::string& section, const std::string& name, const std::string& v) {
    const std::string key = section + "." + name;
    auto& e = c.env;
    auto& a = c.agent;
    auto& n = c.net;
    auto& s = c.schedule;
    auto& r = c.run;
    if (section == "env") {
        if (name == "layout") e.layout = v;
        else if (name == "view") {
            if (v == "allocentric") e.view = envs::View::allocentric;
            else if (v == "egocentric") e.view = envs::View::egocentric;
            else throw KeyError{key, "expected allocentric or egocentric, got '" + v + "'"};
        } else if (name == "render_scale") e.render_scale = parse_int<int>(key, v);
        else if (name == "ego_size") e.ego_size = parse_int<int>(key, v);
        else if (name == "grid_size") e.grid_size = parse_int<int>(key, v);
        else if (name == "slip_prob") e.slip_prob = parse_double(key, v);
        else if (name == "max_steps_per_episode") e.max_steps_per_episode = parse_int<int>(key, v);
        else throw KeyError{key, "unknown key"};
    } else if (section == "agent") {
        if (name == "gamma") a.gamma = parse_double(key, v);
        else if (name == "lr_net") a.lr_net = parse_double(key, v);
        else if (name == "lr_task") a.lr_task = parse_double(key, v);
        else if (name == "eps_start") a.eps_start = parse_double(key, v);
        else if (name == "eps_end") a.eps_end = parse_double(key, v);
        else if (name == "eps_decay_steps") a.eps_decay_steps = parse_int<long>(key, v);
        else if (name == "batch_size") a.batch_size = parse_int<int>(key, v);
        else if (name == "target_period") a.target_period = parse_int<long>(key, v);
        else if (name == "target_mode") {
            if (v == "periodic_copy") a.target_mode = nets::TargetMode::periodic_copy;
            else if (v == "polyak") a.target_mode = nets::TargetMode::polyak;
            else throw KeyError{key, "expected periodic_copy or polyak, got '" + v + "'"};
        } else if (name == "target_tau") a.target_tau = parse_double(key, v);
        else if (name == "min_replay") a.min_replay = parse_int<long>(key, v);
        else if (name == "replay_period") a.replay_period = parse_int<long>(key, v);
        else if (name == "nstep") a.nstep = parse_int<int>(key, v);
        else if (name == "buffer_capacity") a.buffer_capacity = parse_int<long>(key, v);
        else if (name == "loss_kind") {
            try {
                a.loss_kind = agents::loss_kind_from_string(v);
            } catch (const ConfigError&) {
                throw KeyError{key, "unknown loss kind '" + v + "'"};
            }
        } else if (name == "stop_gradient_on_phi") a.stop_gradient_on_phi = parse_bool(key, v);
        else if (name == "psi_grad_to_w") a.psi_grad_to_w = parse_bool(key, v);
        else if (name == "canonical_phi_grad") a.canonical_phi_grad = parse_bool(key, v);
        else if (name == "double_q_sf") a.double_q_sf = parse_bool(key, v);
        else if (name == "eps_reset_on_switch") a.eps_reset_on_switch = parse_bool(key, v);
        else if (name == "lambda_ortho") a.lambda_ortho = parse_double(key, v);
        else if (name == "weight_psi") a.weight_psi = parse_double(key, v);
        else if (name == "weight_w") a.weight_w = parse_double(key, v);
        else if (name == "weight_aux") a.weight_aux = parse_double(key, v);
        else if (name == "decoder_hidden") a.decoder_hidden = parse_int<std::size_t>(key, v);
        else throw KeyError{key, "unknown key"};
    } else if (section == "net") {
        if (name == "sf_dim") n.sf_dim = parse_int<std::size_t>(key, v);
        else if (name == "conv") {
            try {
                n.conv = v == "large" ? nets::NetConfig::large_encoder() : nets::conv_specs_from_string(v);
            } catch (const ConfigError& ex) {
                throw KeyError{key, ex.what()};
            }
        } else if (name == "head_hidden") {
            n.head_hidden.clear();
            for (const auto& item : split_list(v)) n.head_hidden.push_back(parse_int<std::size_t>(key, item));
        } else if (name == "task_projection") n.task_projection = parse_bool(key, v);
        else if (name == "task_hidden") n.task_hidden = parse_int<std::size_t>(key, v);
        else if (name == "layer_norm") n.layer_norm = parse_bool(key, v);
        else throw KeyError{key, "unknown key"};
    } else if (section == "schedule") {
        if (name == "tasks") s.tasks = split_list(v);
        else if (name == "training_steps") s.training_steps = parse_int<long>(key, v);
        else if (name == "exposures") s.exposures = parse_int<int>(key, v);
        else if (name == "reset_buffer_on_switch") s.reset_buffer_on_switch = parse_bool(key, v);
        else throw KeyError{key, "unknown key"};
    } else if (section == "run") {
        if (name == "seeds") r.seeds = parse_seeds(key, v);
        else if (name == "out_dir") r.out_dir = v;
        else if (name == "log_every") r.log_every = parse_int<long>(key, v);
        else if (name == "dump_sf_every") r.dump_sf_every = parse_int<long>(key, v);
        else if (name == "max_wallclock_seconds") r.max_wallclock_seconds = parse_double(key, v);
        else if (name == "analysis_gamma") r.analysis_gamma = parse_double(key, v);
        else throw KeyError{key, "unknown key"};
    } else {
        throw KeyError{section, "unknown section"};
    }
}

inline void check(bool ok, const std::string& key, const std::string& why) {
    if (!ok) throw KeyError{key, why};
}

// Range checks. Raises KeyError naming the offending key.
inline void validate_config(const ExperimentConfig& c) {
    check(c.env.render_scale >= 2, "env.render_scale", "must be >= 2");
    check(c.env.ego_size >= 1 && c.env.ego_size % 2 == 1, "env.ego_size", "must be an odd number >= 1");
    check(c.env.grid_size >= 3, "env.grid_size", "must be >= 3");
    check(!c.env.slip_prob || (*c.env.slip_prob >= 0.0 && *c.env.slip_prob <= 1.0), "env.slip_prob",
          "must lie in [0, 1]");
    check(c.env.max_steps_per_episode >= 1, "env.max_steps_per_episode", "must be >= 1");
    try {
        agents::validate(c.agent);
    } catch (const ConfigError& e) {
        const std::string msg = e.what();
        const auto colon = msg.find(':');
        throw KeyError{msg.substr(0, colon), colon == std::string::npos ? msg : trim(msg.substr(colon + 1))};
    }
    check(c.net.sf_dim >= 1, "net.sf_dim", "must be >= 1");
    check(!c.net.conv.empty(), "net.conv", "needs at least one layer");
    check(c.schedule.training_steps >= 1, "schedule.training_steps", "must be >= 1");
    check(c.schedule.exposures >= 1, "schedule.exposures", "must be >= 1");
    check(!c.run.seeds.empty(), "run.seeds", "must not be empty");
    check(c.run.log_every >= 1, "run.log_every", "must be >= 1");
    check(c.run.dump_sf_every >= 0, "run.dump_sf_every", "must be >= 0");
    check(c.run.max_wallclock_seconds >= 0.0, "run.max_wallclock_seconds", "must be >= 0");
    check(c.run.analysis_gamma < 1.0, "run.analysis_gamma", "must be < 1");
}

} // namespace detail

inline ExperimentConfig parse_config_text(const std::string& text, const std::string& origin = "<config>") {
    ExperimentConfig c;
    std::map<std::string, int> key_line;
    std::istringstream is(text);
    std::string line, section;
    int lineno = 0;
    auto fail = [&](int ln, const std::string& key, const std::string& why) {
        throw ConfigError(origin + ": line " + std::to_string(ln) + ": " + key + ": " + why);
    };
    while (std::getline(is, line)) {
        ++lineno;
        std::string t = detail::trim(line);
        if (t.empty() || t[0] == '#' || t[0] == ';') continue;
        if (t.front() == '[') {
            if (t.back() != ']') fail(lineno, t, "unterminated section header");
            section = detail::trim(t.substr(1, t.size() - 2));
            if (section != "env" && section != "agent" && section != "net" && section != "schedule" && section != "run")
                fail(lineno, section, "unknown section");
            continue;
        }
        const auto eq = t.find('=');
        if (eq == std::string::npos) fail(lineno, t, "expected key = value");
        if (section.empty()) fail(lineno, detail::trim(t.substr(0, eq)), "key outside of a section");
        const std::string name = detail::trim(t.substr(0, eq));
        const std::string value = detail::trim(t.substr(eq + 1));
        try {
            detail::set_key(c, section, name, value);
        } catch (const detail::KeyError& e) {
            fail(lineno, e.key, e.why);
        }
        key_line[section + "." + name] = lineno;
    }
    try {
        detail::validate_config(c);
    } catch (const detail::KeyError& e) {
        const auto it = key_line.find(e.key);
        if (it != key_line.end()) fail(it->second, e.key, e.why);
        throw ConfigError(origin + ": " + e.key + ": " + e.why);
    }
    return c;
}

inline ExperimentConfig parse_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str(), path);
}

// Every key, fully resolved. parse_config_text(emit_config(c)) == c.
inline std::string emit_config(const ExperimentConfig& c) {
    using detail::fmt;
    std::ostringstream o;
    auto b = [](bool v) { return v ? "true" : "false"; };
    o << "[env]\n";
    o << "layout = " << c.env.layout << "\n";
    o << "view = " << (c.env.view == envs::View::allocentric ? "allocentric" : "egocentric") << "\n";
    o << "render_scale = " << c.env.render_scale << "\n";
    o << "ego_size = " << c.env.ego_size << "\n";
    o << "grid_size = " << c.env.grid_size << "\n";
    if (c.env.slip_prob) o << "slip_prob = " << fmt(*c.env.slip_prob) << "\n";
    o << "max_steps_per_episode = " << c.env.max_steps_per_episode << "\n";
    const auto& a = c.agent;
    o << "\n[agent]\n";
    o << "loss_kind = " << agents::to_string(a.loss_kind) << "\n";
    o << "gamma = " << fmt(a.gamma) << "\n";
    o << "lr_net = " << fmt(a.lr_net) << "\n";
    o << "lr_task = " << fmt(a.lr_task) << "\n";
    o << "eps_start = " << fmt(a.eps_start) << "\n";
    o << "eps_end = " << fmt(a.eps_end) << "\n";
    o << "eps_decay_steps = " << a.eps_decay_steps << "\n";
    o << "batch_size = " << a.batch_size << "\n";
    o << "target_mode = " << (a.target_mode == nets::TargetMode::polyak ? "polyak" : "periodic_copy") << "\n";
    o << "target_period = " << a.target_period << "\n";
    o << "target_tau = " << fmt(a.target_tau) << "\n";
    o << "min_replay = " << a.min_replay << "\n";
    o << "replay_period = " << a.replay_period << "\n";
    o << "nstep = " << a.nstep << "\n";
    o << "buffer_capacity = " << a.buffer_capacity << "\n";
    o << "stop_gradient_on_phi = " << b(a.stop_gradient_on_phi) << "\n";
    o << "psi_grad_to_w = " << b(a.psi_grad_to_w) << "\n";
    o << "canonical_phi_grad = " << b(a.canonical_phi_grad) << "\n";
    o << "double_q_sf = " << b(a.double_q_sf) << "\n";
    o << "eps_reset_on_switch = " << b(a.eps_reset_on_switch) << "\n";
    o << "lambda_ortho = " << fmt(a.lambda_ortho) << "\n";
    o << "weight_psi = " << fmt(a.weight_psi) << "\n";
    o << "weight_w = " << fmt(a.weight_w) << "\n";
    o << "weight_aux = " << fmt(a.weight_aux) << "\n";
    o << "decoder_hidden = " << a.decoder_hidden << "\n";
    o << "\n[net]\n";
    o << "sf_dim = " << c.net.sf_dim << "\n";
    o << "conv = " << nets::conv_specs_to_string(c.net.conv) << "\n";
    o << "head_hidden = " << nets::sizes_to_string(c.net.head_hidden) << "\n";
    o << "task_projection = " << b(c.net.task_projection) << "\n";
    o << "task_hidden = " << c.net.task_hidden << "\n";
    o << "layer_norm = " << b(c.net.layer_norm) << "\n";
    o << "\n[schedule]\n";
    o << "tasks = ";
    for (std::size_t i = 0; i < c.schedule.tasks.size(); ++i) o << (i ? ", " : "") << c.schedule.tasks[i];
    o << "\n";
    o << "training_steps = " << c.schedule.training_steps << "\n";
    o << "exposures = " << c.schedule.exposures << "\n";
    o << "reset_buffer_on_switch = " << b(c.schedule.reset_buffer_on_switch) << "\n";
    o << "\n[run]\n";
    o << "seeds = ";
    for (std::size_t i = 0; i < c.run.seeds.size(); ++i) o << (i ? ", " : "") << c.run.seeds[i];
    o << "\n";
    o << "out_dir = " << c.run.out_dir << "\n";
    o << "log_every = " << c.run.log_every << "\n";
    o << "dump_sf_every = " << c.run.dump_sf_every << "\n";
    o << "max_wallclock_seconds = " << fmt(c.run.max_wallclock_seconds) << "\n";
    o << "analysis_gamma = " << fmt(c.run.analysis_gamma) << "\n";
    return o.str();
}

// ---------------------------------------------------------------- derived objects

inline envs::RenderConfig render_config(const ExperimentConfig& c) {
    envs::RenderConfig rc;
    rc.view = c.env.view;
    rc.scale = c.env.render_scale;
    rc.ego_size = c.env.ego_size;
    return rc;
}

inline envs::GridLayout resolve_layout(const ExperimentConfig& c, const std::string& name) {
    return envs::make_layout(name, c.env.grid_size, c.env.slip_prob.value_or(-1.0));
}

inline std::vector<std::string> task_names(const ExperimentConfig& c) {
    return c.schedule.tasks.empty() ? std::vector<std::string>{c.env.layout} : c.schedule.tasks;
}

inline envs::TaskSchedule build_schedule(const ExperimentConfig& c) {
    envs::TaskSchedule s;
    for (const auto& name : task_names(c))
        s.tasks.push_back({resolve_layout(c, name), c.env.max_steps_per_episode, c.schedule.training_steps});
    s.exposures = c.schedule.exposures;
    s.reset_buffer_on_switch = c.schedule.reset_buffer_on_switch;
    return s;
}

inline nets::NetConfig net_config(const ExperimentConfig& c) {
    nets::NetConfig n;
    n.sf_dim = c.net.sf_dim;
    n.conv = c.net.conv;
    n.head_hidden = c.net.head_hidden;
    n.task_projection = c.net.task_projection;
    n.task_hidden = c.net.task_hidden;
    n.layer_norm = c.net.layer_norm;
    return n;
}

inline double analysis_gamma(const ExperimentConfig& c) {
    return c.run.analysis_gamma < 0.0 ? c.agent.gamma : c.run.analysis_gamma;
}

} // namespace sflab::harness
