#pragma once

#include <array>
#include <deque>
#include <map>
#include <optional>
#include <vector>

#include "sflab/envs/layout.hpp"
#include "sflab/numkit/matrix.hpp"
#include "sflab/numkit/tensor.hpp"
#include "sflab/rng.hpp"

namespace sflab::envs {

enum class Action : int { forward = 0, turn_left = 1, turn_right = 2 };
inline constexpr int kNumActions = 3;

enum class View { allocentric, egocentric };

struct RenderConfig {
    View view = View::allocentric;
    int scale = 4;     // pixels per cell
    int ego_size = 5;  // egocentric window, cells per side

    friend bool operator==(const RenderConfig&, const RenderConfig&) = default;
};

// ---------------------------------------------------------------- dynamics

inline Cell forward_offset(Dir d) {
    switch (d) {
    case Dir::N: return {0, -1};
    case Dir::E: return {1, 0};
    case Dir::S: return {0, 1};
    case Dir::W: return {-1, 0};
    }
    return {0, 0};
}

inline Dir turn_left(Dir d) { return static_cast<Dir>((static_cast<int>(d) + 3) % 4); }
inline Dir turn_right(Dir d) { return static_cast<Dir>((static_cast<int>(d) + 1) % 4); }

// Deterministic effect of one action; blocked moves leave the pose unchanged.
inline AgentPose apply_action(const GridLayout& g, AgentPose p, Action a) {
    switch (a) {
    case Action::turn_left: p.dir = turn_left(p.dir); break;
    case Action::turn_right: p.dir = turn_right(p.dir); break;
    case Action::forward: {
        const Cell o = forward_offset(p.dir);
        if (!g.is_wall(p.x + o.x, p.y + o.y)) {
            p.x += o.x;
            p.y += o.y;
        }
        break;
    }
    }
    return p;
}

// Probability that `chosen` is executed as `executed` at pose p. In slippery
// cells the chosen action is replaced, with probability slip_prob, by one of
// the other two actions picked uniformly.
inline double executed_action_prob(const GridLayout& g, const AgentPose& p, Action chosen, Action executed) {
    const double slip = g.is_slippery(p.x, p.y) ? g.slip_prob : 0.0;
    return chosen == executed ? 1.0 - slip : slip / 2.0;
}

// ---------------------------------------------------------------- rendering

using Rgb = std::array<double, 3>;

namespace colors {
inline constexpr Rgb floor{1.0, 1.0, 1.0};
inline constexpr Rgb wall{0.0, 0.0, 0.0};
inline constexpr Rgb goal{0.0, 1.0, 0.0};
inline constexpr Rgb negative_goal{1.0, 1.0, 0.0};
inline constexpr Rgb agent{1.0, 0.0, 0.0};
inline constexpr Rgb marker{0.0, 0.0, 1.0};
inline constexpr std::array<Rgb, 4> room_tint{{{1.0, 0.85, 0.85}, {0.85, 1.0, 0.85}, {0.85, 0.85, 1.0}, {1.0, 1.0, 0.8}}};
inline constexpr double slippery_shade = 0.8;
} // namespace colors

inline Rgb cell_color(const GridLayout& g, int x, int y) {
    switch (g.at(x, y)) {
    case CellKind::wall: return colors::wall;
    case CellKind::goal: return colors::goal;
    case CellKind::negative_goal: return colors::negative_goal;
    case CellKind::floor: break;
    }
    Rgb c = colors::floor;
    const int r = g.room_of(x, y);
    if (r >= 0 && g.tint_rooms) c = colors::room_tint[static_cast<std::size_t>(r % 4)];
    if (g.is_slippery(x, y))
        for (double& v : c) v *= colors::slippery_shade;
    return c;
}

// Marker pixel inside a k x k agent cell on the edge the agent faces.
// Positions are pairwise distinct for every k >= 2.
inline std::pair<int, int> marker_pixel(Dir d, int k) {
    const int m = k / 2;
    const int m_lo = k % 2 == 0 ? m - 1 : m;
    switch (d) {
    case Dir::N: return {0, m};
    case Dir::E: return {m, k - 1};
    case Dir::S: return {k - 1, m_lo};
    case Dir::W: return {m_lo, 0};
    }
    return {0, 0};
}

namespace detail {

inline void fill_cell(Tensor& img, int W, int H, int cx, int cy, int k, const Rgb& c) {
    for (int dy = 0; dy < k; ++dy)
        for (int dx = 0; dx < k; ++dx) {
            const int py = cy * k + dy, px = cx * k + dx;
            for (int ch = 0; ch < 3; ++ch) img[static_cast<std::size_t>((ch * H + py) * W + px)] = c[ch];
        }
}

inline void draw_agent(Tensor& img, int W, int H, int cx, int cy, int k, Dir facing) {
    fill_cell(img, W, H, cx, cy, k, colors::agent);
    const auto [my, mx] = marker_pixel(facing, k);
    for (int ch = 0; ch < 3; ++ch)
        img[static_cast<std::size_t>((ch * H + cy * k + my) * W + cx * k + mx)] = colors::marker[ch];
}

} // namespace detail

inline void require_scale(int k) {
    if (k < 2) throw ConfigError("render scale must be >= 2 to encode the agent direction");
}

inline Tensor render_allocentric(const GridLayout& g, const AgentPose& pose, int scale = 4) {
    require_scale(scale);
    const int H = g.height * scale, W = g.width * scale;
    Tensor img(Shape{3, static_cast<std::size_t>(H), static_cast<std::size_t>(W)});
    for (int y = 0; y < g.height; ++y)
        for (int x = 0; x < g.width; ++x) detail::fill_cell(img, W, H, x, y, scale, cell_color(g, x, y));
    detail::draw_agent(img, W, H, pose.x, pose.y, scale, pose.dir);
    return img;
}

// v x v cells ahead of the agent, agent at the bottom-centre, facing up.
inline Tensor render_egocentric(const GridLayout& g, const AgentPose& pose, int scale = 4, int v = 5) {
    require_scale(scale);
    if (v < 1) throw ConfigError("egocentric view size must be >= 1");
    const int H = v * scale, W = v * scale;
    Tensor img(Shape{3, static_cast<std::size_t>(H), static_cast<std::size_t>(W)});
    const Cell fwd = forward_offset(pose.dir);
    const Cell right = forward_offset(turn_right(pose.dir));
    for (int r = 0; r < v; ++r)
        for (int c = 0; c < v; ++c) {
            const int f = v - 1 - r, l = c - v / 2;
            const int wx = pose.x + f * fwd.x + l * right.x;
            const int wy = pose.y + f * fwd.y + l * right.y;
            detail::fill_cell(img, W, H, c, r, scale, cell_color(g, wx, wy));
        }
    detail::draw_agent(img, W, H, v / 2, v - 1, scale, Dir::N);
    return img;
}

inline Tensor render(const GridLayout& g, const AgentPose& pose, const RenderConfig& rc) {
    return rc.view == View::allocentric ? render_allocentric(g, pose, rc.scale)
                                        : render_egocentric(g, pose, rc.scale, rc.ego_size);
}

inline Shape observation_shape(const GridLayout& g, const RenderConfig& rc) {
    if (rc.view == View::allocentric)
        return {3, static_cast<std::size_t>(g.height * rc.scale), static_cast<std::size_t>(g.width * rc.scale)};
    const auto s = static_cast<std::size_t>(rc.ego_size * rc.scale);
    return {3, s, s};
}

// ---------------------------------------------------------------- environment

struct StepResult {
    Tensor obs;
    double reward = 0.0;
    bool done = false;
    bool terminal = false;  // reached a goal box (no bootstrap); done && !terminal is a time-limit cut
    Action executed = Action::forward;
};

class GridWorld {
public:
    GridWorld(GridLayout layout, RenderConfig render, int max_steps_per_episode = 400)
        : layout_(std::move(layout)), render_(render), max_steps_(max_steps_per_episode) {
        validate(layout_);
        require_scale(render_.scale);
        if (max_steps_ < 1) throw ConfigError("max_steps_per_episode must be >= 1");
    }

    Tensor reset(Rng& /*rng*/) {
        pose_ = layout_.start;
        steps_ = 0;
        done_ = false;
        return observe();
    }

    StepResult step(Action a, Rng& rng) {
        if (done_) throw ProtocolError("step called on a finished episode; call reset first");
        Action executed = a;
        if (layout_.is_slippery(pose_.x, pose_.y) && layout_.slip_prob > 0.0 && rng.bernoulli(layout_.slip_prob)) {
            const int other = static_cast<int>(rng.below(2));
            int k = 0;
            for (int b = 0; b < kNumActions; ++b) {
                if (b == static_cast<int>(a)) continue;
                if (k++ == other) executed = static_cast<Action>(b);
            }
        }
        pose_ = apply_action(layout_, pose_, executed);
        ++steps_;
        StepResult r;
        r.executed = executed;
        r.terminal = layout_.is_terminal(pose_.x, pose_.y);
        r.reward = layout_.reward_at(pose_.x, pose_.y);
        r.done = r.terminal || steps_ >= max_steps_;
        done_ = r.done;
        r.obs = observe();
        return r;
    }

    Tensor observe() const { return render(layout_, pose_, render_); }
    Shape observation_shape() const { return envs::observation_shape(layout_, render_); }

    const GridLayout& layout() const { return layout_; }
    const RenderConfig& render_config() const { return render_; }
    const AgentPose& pose() const { return pose_; }
    void set_pose(const AgentPose& p) { pose_ = p; }
    int steps() const { return steps_; }
    bool done() const { return done_; }
    int max_steps() const { return max_steps_; }

private:
    GridLayout layout_;
    RenderConfig render_;
    int max_steps_;
    AgentPose pose_{};
    int steps_ = 0;
    bool done_ = true;
};

// ---------------------------------------------------------------- state space

// Walkable (x, y) in row-major order, then N, E, S, W.
inline std::vector<AgentPose> enumerate_states(const GridLayout& g) {
    std::vector<AgentPose> out;
    for (int y = 0; y < g.height; ++y)
        for (int x = 0; x < g.width; ++x)
            if (!g.is_wall(x, y))
                for (Dir d : kAllDirs) out.push_back({x, y, d});
    return out;
}

class StateIndex {
public:
    explicit StateIndex(const GridLayout& g) : width_(g.width), states_(enumerate_states(g)) {
        index_.assign(static_cast<std::size_t>(g.width * g.height * 4), -1);
        for (std::size_t i = 0; i < states_.size(); ++i) index_[key(states_[i])] = static_cast<int>(i);
    }
    std::size_t size() const { return states_.size(); }
    const std::vector<AgentPose>& states() const { return states_; }
    std::size_t operator()(const AgentPose& p) const {
        const int i = index_.at(key(p));
        if (i < 0) throw DimensionError("pose is not an enumerated state");
        return static_cast<std::size_t>(i);
    }

private:
    std::size_t key(const AgentPose& p) const {
        return static_cast<std::size_t>((p.y * width_ + p.x) * 4 + static_cast<int>(p.dir));
    }
    int width_;
    std::vector<AgentPose> states_;
    std::vector<int> index_;
};

// policy: one row of kNumActions probabilities per enumerated state.
// Terminal cells are absorbing: T[s, s] = 1.
inline Matrix transition_matrix(const GridLayout& g, const Matrix& policy) {
    const StateIndex idx(g);
    const std::size_t n = idx.size();
    if (policy.rows != n || policy.cols != static_cast<std::size_t>(kNumActions))
        throw DimensionError("transition_matrix: policy must be " + std::to_string(n) + "x3");
    Matrix T(n, n);
    for (std::size_t s = 0; s < n; ++s) {
        const AgentPose& p = idx.states()[s];
        double row_sum = 0.0;
        for (int a = 0; a < kNumActions; ++a) {
            const double pa = policy(s, static_cast<std::size_t>(a));
            if (pa < 0.0) throw DimensionError("transition_matrix: negative policy probability");
            row_sum += pa;
        }
        if (std::abs(row_sum - 1.0) > 1e-9)
            throw DimensionError("transition_matrix: policy row " + std::to_string(s) + " sums to " +
                                 std::to_string(row_sum));
        if (g.is_terminal(p.x, p.y)) {
            T(s, s) = 1.0;
            continue;
        }
        for (int a = 0; a < kNumActions; ++a) {
            const double pa = policy(s, static_cast<std::size_t>(a));
            if (pa == 0.0) continue;
            for (int e = 0; e < kNumActions; ++e) {
                const double pe = executed_action_prob(g, p, static_cast<Action>(a), static_cast<Action>(e));
                if (pe == 0.0) continue;
                T(s, idx(apply_action(g, p, static_cast<Action>(e)))) += pa * pe;
            }
        }
    }
    return T;
}

inline Matrix uniform_policy(const GridLayout& g) {
    return Matrix(enumerate_states(g).size(), kNumActions, 1.0 / kNumActions);
}

// Fewest actions from `from` to a +reward goal, ignoring slips.
inline std::optional<int> shortest_path_length(const GridLayout& g, const AgentPose& from) {
    const StateIndex idx(g);
    std::vector<int> dist(idx.size(), -1);
    std::deque<AgentPose> q;
    dist[idx(from)] = 0;
    q.push_back(from);
    while (!q.empty()) {
        const AgentPose p = q.front();
        q.pop_front();
        const int d = dist[idx(p)];
        if (g.at(p.x, p.y) == CellKind::goal) return d;
        if (g.is_terminal(p.x, p.y)) continue;
        for (int a = 0; a < kNumActions; ++a) {
            const AgentPose n = apply_action(g, p, static_cast<Action>(a));
            auto& dn = dist[idx(n)];
            if (dn < 0) {
                dn = d + 1;
                q.push_back(n);
            }
        }
    }
    return std::nullopt;
}

inline std::optional<int> shortest_path_length(const GridLayout& g) { return shortest_path_length(g, g.start); }

} // namespace sflab::envs
