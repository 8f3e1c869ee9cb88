#pragma once

// Grid layouts: the shipped task pairs and a plain-text map format.
//
// Map format: an optional header line `slip_prob=<float>`, then one row per
// line, one character per cell:
//   #  wall           .  floor          ~  slippery floor
//   G  goal (+1)      Y  negative goal (-1)
//   S  start (floor, agent faces east)  s  start on slippery floor
// Boundary cells must be walls. Without an `S` the start is the
// bottom-left-most walkable non-goal cell, facing east.

#include <array>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "sflab/errors.hpp"

namespace sflab::envs {

enum class CellKind : std::uint8_t { floor, wall, goal, negative_goal };

enum class Dir : int { N = 0, E = 1, S = 2, W = 3 };

inline constexpr std::array<Dir, 4> kAllDirs{Dir::N, Dir::E, Dir::S, Dir::W};

inline char dir_char(Dir d) { return "NESW"[static_cast<int>(d)]; }

struct Cell {
    int x = 0;
    int y = 0;
    friend auto operator<=>(const Cell&, const Cell&) = default;
};

struct AgentPose {
    int x = 0;
    int y = 0;
    Dir dir = Dir::E;
    friend bool operator==(const AgentPose&, const AgentPose&) = default;
};

struct GridLayout {
    std::string name;
    int width = 0;
    int height = 0;
    std::vector<CellKind> cells;      // row-major, y * width + x; y grows downward
    std::vector<std::uint8_t> slippery;
    std::vector<int> room;            // room id per cell for tinting and cluster labels, -1 if none
    bool tint_rooms = false;          // per-room floor tints (egocentric disambiguation)
    double slip_prob = 0.0;
    double reward_value = 1.0;
    double negative_reward = -1.0;
    AgentPose start;

    bool in_bounds(int x, int y) const { return x >= 0 && y >= 0 && x < width && y < height; }
    std::size_t index(int x, int y) const { return static_cast<std::size_t>(y * width + x); }
    CellKind at(int x, int y) const { return in_bounds(x, y) ? cells[index(x, y)] : CellKind::wall; }
    bool is_wall(int x, int y) const { return at(x, y) == CellKind::wall; }
    bool is_terminal(int x, int y) const {
        const auto k = at(x, y);
        return k == CellKind::goal || k == CellKind::negative_goal;
    }
    bool is_slippery(int x, int y) const { return in_bounds(x, y) && slippery[index(x, y)] != 0; }
    int room_of(int x, int y) const { return in_bounds(x, y) ? room[index(x, y)] : -1; }
    double reward_at(int x, int y) const {
        switch (at(x, y)) {
        case CellKind::goal: return reward_value;
        case CellKind::negative_goal: return negative_reward;
        default: return 0.0;
        }
    }
    std::size_t walkable_cells() const {
        std::size_t n = 0;
        for (auto k : cells) n += k != CellKind::wall;
        return n;
    }
    std::vector<Cell> goal_cells() const {
        std::vector<Cell> out;
        for (int y = 0; y < height; ++y)
            for (int x = 0; x < width; ++x)
                if (at(x, y) == CellKind::goal) out.push_back({x, y});
        return out;
    }
};

inline void validate(const GridLayout& g) {
    const std::string who = "layout '" + g.name + "': ";
    if (g.width < 3 || g.height < 3) throw ConfigError(who + "grid must be at least 3x3");
    const auto n = static_cast<std::size_t>(g.width * g.height);
    if (g.cells.size() != n || g.slippery.size() != n || g.room.size() != n)
        throw ConfigError(who + "cell arrays do not match grid size");
    for (int y = 0; y < g.height; ++y)
        for (int x = 0; x < g.width; ++x)
            if ((x == 0 || y == 0 || x == g.width - 1 || y == g.height - 1) && !g.is_wall(x, y))
                throw ConfigError(who + "boundary cell (" + std::to_string(x) + "," + std::to_string(y) +
                                  ") is not a wall");
    if (g.goal_cells().empty()) throw ConfigError(who + "no goal cell");
    if (!(g.slip_prob >= 0.0 && g.slip_prob <= 1.0)) throw ConfigError(who + "slip_prob outside [0,1]");
    if (g.is_wall(g.start.x, g.start.y) || g.is_terminal(g.start.x, g.start.y))
        throw ConfigError(who + "start pose is not a walkable non-goal cell");
}

inline AgentPose default_start(const GridLayout& g) {
    for (int y = g.height - 1; y >= 0; --y)
        for (int x = 0; x < g.width; ++x)
            if (!g.is_wall(x, y) && !g.is_terminal(x, y)) return {x, y, Dir::E};
    throw ConfigError("layout '" + g.name + "': no walkable cell for the start pose");
}

// ---------------------------------------------------------------- text maps

inline GridLayout parse_map(const std::string& text, const std::string& name = "map") {
    std::istringstream is(text);
    std::string line;
    std::vector<std::string> rows;
    double slip = 0.0;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (line.rfind("slip_prob=", 0) == 0) {
            try {
                slip = std::stod(line.substr(10));
            } catch (const std::exception&) {
                throw ConfigError("map '" + name + "' line " + std::to_string(lineno) + ": bad slip_prob");
            }
            continue;
        }
        rows.push_back(line);
    }
    if (rows.empty()) throw ConfigError("map '" + name + "': no rows");
    GridLayout g;
    g.name = name;
    g.height = static_cast<int>(rows.size());
    g.width = static_cast<int>(rows[0].size());
    const auto n = static_cast<std::size_t>(g.width * g.height);
    g.cells.assign(n, CellKind::floor);
    g.slippery.assign(n, 0);
    g.room.assign(n, -1);
    g.slip_prob = slip;
    bool has_start = false;
    for (int y = 0; y < g.height; ++y) {
        if (static_cast<int>(rows[y].size()) != g.width)
            throw ConfigError("map '" + name + "': row " + std::to_string(y) + " has a different width");
        for (int x = 0; x < g.width; ++x) {
            const std::size_t i = g.index(x, y);
            switch (rows[y][x]) {
            case '#': g.cells[i] = CellKind::wall; break;
            case '.': break;
            case '~': g.slippery[i] = 1; break;
            case 'G': g.cells[i] = CellKind::goal; break;
            case 'Y': g.cells[i] = CellKind::negative_goal; break;
            case 's': g.slippery[i] = 1; [[fallthrough]];
            case 'S':
                if (has_start) throw ConfigError("map '" + name + "': more than one start");
                g.start = {x, y, Dir::E};
                has_start = true;
                break;
            default:
                throw ConfigError("map '" + name + "': unknown character '" + std::string(1, rows[y][x]) +
                                  "' at row " + std::to_string(y) + ", column " + std::to_string(x));
            }
        }
    }
    if (!has_start) g.start = default_start(g);
    validate(g);
    return g;
}

inline GridLayout load_map(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open map file " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_map(ss.str(), path);
}

inline std::string to_map_text(const GridLayout& g) {
    std::string s = "slip_prob=" + std::to_string(g.slip_prob) + "\n";
    for (int y = 0; y < g.height; ++y) {
        for (int x = 0; x < g.width; ++x) {
            char c = '.';
            switch (g.at(x, y)) {
            case CellKind::wall: c = '#'; break;
            case CellKind::goal: c = 'G'; break;
            case CellKind::negative_goal: c = 'Y'; break;
            default: c = g.is_slippery(x, y) ? '~' : '.';
            }
            if (g.start.x == x && g.start.y == y) c = g.is_slippery(x, y) ? 's' : 'S';
            s += c;
        }
        s += '\n';
    }
    return s;
}

// ---------------------------------------------------------------- shipped layouts

namespace detail {

inline GridLayout empty_room(const std::string& name, int interior) {
    GridLayout g;
    g.name = name;
    g.width = g.height = interior + 2;
    const auto n = static_cast<std::size_t>(g.width * g.height);
    g.cells.assign(n, CellKind::floor);
    g.slippery.assign(n, 0);
    g.room.assign(n, -1);
    for (int y = 0; y < g.height; ++y)
        for (int x = 0; x < g.width; ++x)
            if (x == 0 || y == 0 || x == g.width - 1 || y == g.height - 1) g.cells[g.index(x, y)] = CellKind::wall;
    return g;
}

inline void set(GridLayout& g, int x, int y, CellKind k) { g.cells[g.index(x, y)] = k; }

inline void quadrant_rooms(GridLayout& g, int mid) {
    for (int y = 1; y < g.height - 1; ++y)
        for (int x = 1; x < g.width - 1; ++x)
            if (!g.is_wall(x, y)) g.room[g.index(x, y)] = (y > mid ? 2 : 0) + (x > mid ? 1 : 0);
}

} // namespace detail

// Vertical wall through the middle column. Task 1: passage at the bottom, goal
// top-left. Task 2: passage at the top, goal bottom-right.
inline GridLayout center_wall(int task, int interior = 5) {
    auto g = detail::empty_room("CenterWall.task" + std::to_string(task), interior);
    const int mid = (interior + 1) / 2;
    const int passage = task == 1 ? interior : 1;
    for (int y = 1; y <= interior; ++y)
        if (y != passage) detail::set(g, mid, y, CellKind::wall);
    if (task == 1) detail::set(g, 1, 1, CellKind::goal);
    else detail::set(g, interior, interior, CellKind::goal);
    detail::quadrant_rooms(g, mid);
    g.start = default_start(g);
    validate(g);
    return g;
}

// Two L-shaped walls hanging from a shared bar leave one central corridor
// between the lower area (start) and the top row. Task 1: goal top-left.
// Task 2: goal top-right.
inline GridLayout inverted_lwalls(int task, int interior = 5) {
    auto g = detail::empty_room("InvertedLWalls.task" + std::to_string(task), interior);
    const int mid = (interior + 1) / 2;
    const int bar = 2;
    const int leg = std::max(bar + 1, interior / 2 + 1);
    for (int x = 1; x <= interior; ++x)
        if (x != mid) detail::set(g, x, bar, CellKind::wall);
    for (int y = bar; y <= leg; ++y) {
        detail::set(g, mid - 1, y, CellKind::wall);
        detail::set(g, mid + 1, y, CellKind::wall);
    }
    if (task == 1) detail::set(g, 1, 1, CellKind::goal);
    else detail::set(g, interior, 1, CellKind::goal);
    detail::quadrant_rooms(g, mid);
    g.start = default_start(g);
    validate(g);
    return g;
}

// 2x2 rooms with one doorway in each wall segment. Task 1: +1 box top-right,
// -1 box bottom-right. Task 2 swaps them. Both boxes are terminal.
inline GridLayout four_rooms(int task, int interior = 5, bool slippery = false, double slip_prob = 0.3) {
    auto g = detail::empty_room(std::string(slippery ? "SlipperyFourRooms2D" : "FourRooms2D") + ".task" +
                                    std::to_string(task),
                                interior);
    const int mid = (interior + 1) / 2;
    for (int i = 1; i <= interior; ++i) {
        detail::set(g, mid, i, CellKind::wall);
        detail::set(g, i, mid, CellKind::wall);
    }
    const int lo = (1 + (mid - 1)) / 2;
    const int hi = (mid + 1 + interior) / 2;
    detail::set(g, mid, lo, CellKind::floor);  // top-left <-> top-right
    detail::set(g, mid, hi, CellKind::floor);  // bottom-left <-> bottom-right
    detail::set(g, lo, mid, CellKind::floor);  // top-left <-> bottom-left
    detail::set(g, hi, mid, CellKind::floor);  // top-right <-> bottom-right
    const Cell pos{interior, 1}, neg{interior, interior};
    const Cell g_cell = task == 1 ? pos : neg;
    const Cell y_cell = task == 1 ? neg : pos;
    detail::set(g, g_cell.x, g_cell.y, CellKind::goal);
    detail::set(g, y_cell.x, y_cell.y, CellKind::negative_goal);
    for (int y = 1; y <= interior; ++y)
        for (int x = 1; x <= interior; ++x) {
            if (g.is_wall(x, y)) continue;
            // doorways join the room above / to the left
            int r = (y > mid ? 2 : 0) + (x > mid ? 1 : 0);
            g.room[g.index(x, y)] = r;
        }
    g.tint_rooms = true;
    if (slippery) {
        g.slip_prob = slip_prob;
        for (int y = 1; y <= interior; ++y)
            for (int x = 1; x <= interior; ++x) {
                const int r = g.room[g.index(x, y)];
                if ((r == 1 || r == 2) && !g.is_terminal(x, y)) g.slippery[g.index(x, y)] = 1;
            }
    }
    g.start = default_start(g);
    validate(g);
    return g;
}

inline const std::vector<std::string>& shipped_layout_names() {
    static const std::vector<std::string> names{
        "CenterWall.task1",    "CenterWall.task2",         "InvertedLWalls.task1",    "InvertedLWalls.task2",
        "FourRooms2D.task1",   "FourRooms2D.task2",        "SlipperyFourRooms2D.task1", "SlipperyFourRooms2D.task2"};
    return names;
}

// Resolve a shipped layout name; anything else is read as a map file path.
inline GridLayout make_layout(const std::string& name, int interior = 5, double slip_prob = -1.0) {
    const auto dot = name.rfind(".task");
    if (dot != std::string::npos && dot + 5 < name.size()) {
        const std::string base = name.substr(0, dot);
        const std::string t = name.substr(dot + 5);
        if (t == "1" || t == "2") {
            const int task = t[0] - '0';
            GridLayout g;
            if (base == "CenterWall") g = center_wall(task, interior);
            else if (base == "InvertedLWalls") g = inverted_lwalls(task, interior);
            else if (base == "FourRooms2D") g = four_rooms(task, interior);
            else if (base == "SlipperyFourRooms2D") g = four_rooms(task, interior, true);
            else throw ConfigError("unknown layout '" + name + "'");
            if (slip_prob >= 0.0) {
                g.slip_prob = slip_prob;
                validate(g);
            }
            return g;
        }
    }
    auto g = load_map(name);
    if (slip_prob >= 0.0) {
        g.slip_prob = slip_prob;
        validate(g);
    }
    return g;
}

} // namespace sflab::envs
