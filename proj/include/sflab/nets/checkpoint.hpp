#pragma once

// Text checkpoint of a NetworkParams.
//
//   sflab-checkpoint 1
//   config <key>=<value> ...            (one line, NetConfig fields)
//   steps_since_sync <int>
//   encoder_frozen <0|1>
//   param <name> <rank> <d0> ... <dk-1>
//   <values, %.17g, space separated, one line>
//   ...                                  (online blocks, then target.*, then task.w)
//   end
//
// %.17g round-trips every f64 exactly. Adam moments are not stored.

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

#include "sflab/nets/network.hpp"

namespace sflab::nets {

inline std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::string conv_specs_to_string(const std::vector<ConvSpec>& specs) {
    std::string s;
    for (std::size_t i = 0; i < specs.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(specs[i].channels) + "x" + std::to_string(specs[i].kernel) + "x" +
             std::to_string(specs[i].stride);
    }
    return s;
}

inline std::vector<ConvSpec> conv_specs_from_string(const std::string& s) {
    std::vector<ConvSpec> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        ConvSpec c;
        if (std::sscanf(item.c_str(), "%zux%zux%zu", &c.channels, &c.kernel, &c.stride) != 3)
            throw ConfigError("bad conv spec '" + item + "' (expected CxKxS)");
        out.push_back(c);
    }
    return out;
}

inline std::string sizes_to_string(const std::vector<std::size_t>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(v[i]);
    }
    return s;
}

inline std::vector<std::size_t> sizes_from_string(const std::string& s) {
    std::vector<std::size_t> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        std::size_t v = 0;
        auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
        if (ec != std::errc() || ptr != item.data() + item.size()) throw ConfigError("bad integer list '" + s + "'");
        out.push_back(v);
    }
    return out;
}

inline std::string net_config_line(const NetConfig& c) {
    std::ostringstream os;
    os << "obs_channels=" << c.obs_channels << " obs_height=" << c.obs_height << " obs_width=" << c.obs_width
       << " n_actions=" << c.n_actions << " sf_dim=" << c.sf_dim << " conv=" << conv_specs_to_string(c.conv)
       << " head_hidden=" << sizes_to_string(c.head_hidden)
       << " head=" << (c.head == HeadKind::successor ? "successor" : "q_values")
       << " task_projection=" << c.task_projection << " task_hidden=" << c.task_hidden
       << " layer_norm=" << c.layer_norm;
    return os.str();
}

inline NetConfig net_config_from_line(const std::string& line) {
    NetConfig c;
    std::istringstream is(line);
    std::string tok;
    while (is >> tok) {
        const auto eq = tok.find('=');
        if (eq == std::string::npos) throw ConfigError("checkpoint config token '" + tok + "'");
        const std::string k = tok.substr(0, eq), v = tok.substr(eq + 1);
        auto num = [&] { return static_cast<std::size_t>(std::stoull(v)); };
        if (k == "obs_channels") c.obs_channels = num();
        else if (k == "obs_height") c.obs_height = num();
        else if (k == "obs_width") c.obs_width = num();
        else if (k == "n_actions") c.n_actions = num();
        else if (k == "sf_dim") c.sf_dim = num();
        else if (k == "conv") c.conv = conv_specs_from_string(v);
        else if (k == "head_hidden") c.head_hidden = sizes_from_string(v);
        else if (k == "head") c.head = v == "q_values" ? HeadKind::q_values : HeadKind::successor;
        else if (k == "task_projection") c.task_projection = v == "1";
        else if (k == "task_hidden") c.task_hidden = num();
        else if (k == "layer_norm") c.layer_norm = v == "1";
        else throw ConfigError("checkpoint: unknown config key '" + k + "'");
    }
    return c;
}

namespace detail {

inline std::vector<std::pair<std::string, ParamBlock*>> named_blocks(NetworkParams& p) {
    std::vector<std::pair<std::string, ParamBlock*>> out;
    for (ParamBlock* b : network_blocks(p.online)) out.emplace_back(b->name, b);
    for (ParamBlock* b : network_blocks(p.target)) out.emplace_back("target." + b->name, b);
    out.emplace_back(p.task.name, &p.task);
    return out;
}

} // namespace detail

inline void write_checkpoint(std::ostream& os, const NetworkParams& params) {
    auto& p = const_cast<NetworkParams&>(params);
    os << "sflab-checkpoint 1\n";
    os << "config " << net_config_line(p.config) << "\n";
    os << "steps_since_sync " << p.steps_since_sync << "\n";
    os << "encoder_frozen " << (p.encoder_frozen ? 1 : 0) << "\n";
    for (auto& [name, b] : detail::named_blocks(p)) {
        os << "param " << name << " " << b->shape().size();
        for (auto d : b->shape()) os << " " << d;
        os << "\n";
        for (std::size_t i = 0; i < b->size(); ++i) {
            if (i) os << ' ';
            os << format_double(b->value[i]);
        }
        os << "\n";
    }
    os << "end\n";
}

inline NetworkParams read_checkpoint(std::istream& is) {
    std::string magic;
    int version = 0;
    is >> magic >> version;
    if (magic != "sflab-checkpoint" || version != 1) throw ConfigError("not an sflab checkpoint (v1)");
    std::string tag;
    is >> tag;
    if (tag != "config") throw ConfigError("checkpoint: expected config line");
    std::string line;
    std::getline(is, line);
    NetworkParams p;
    p.config = net_config_from_line(line);
    {
        Rng rng(0, "checkpoint");
        p.online = init_network(p.config, rng);
        p.target = p.online;
        p.task = ParamBlock("task.w", Tensor(Shape{p.config.sf_dim}));
    }
    int frozen = 0;
    is >> tag >> p.steps_since_sync;
    if (tag != "steps_since_sync") throw ConfigError("checkpoint: expected steps_since_sync");
    is >> tag >> frozen;
    if (tag != "encoder_frozen") throw ConfigError("checkpoint: expected encoder_frozen");
    p.encoder_frozen = frozen != 0;
    auto blocks = detail::named_blocks(p);
    for (auto& [name, b] : blocks) {
        std::string pname;
        std::size_t rank = 0;
        is >> tag >> pname >> rank;
        if (tag != "param" || pname != name) throw ConfigError("checkpoint: expected param " + name + ", got " + pname);
        Shape shape(rank);
        for (auto& d : shape) is >> d;
        if (shape != b->shape())
            throw DimensionError("checkpoint: " + name + " shape " + shape_str(shape) + " vs " + shape_str(b->shape()));
        for (std::size_t i = 0; i < b->size(); ++i) {
            std::string v;
            is >> v;
            b->value[i] = std::strtod(v.c_str(), nullptr);
        }
    }
    is >> tag;
    if (!is || tag != "end") throw ConfigError("checkpoint: truncated file");
    return p;
}

inline NetworkParams load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open checkpoint " + path);
    return read_checkpoint(in);
}

} // namespace sflab::nets
