#include "cpomdp/gridworld.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <deque>
#include <fstream>
#include <map>
#include <sstream>

#include "cpomdp/error.hpp"

namespace cpomdp::grid {
namespace {

constexpr std::string_view kDefaultMap =
    "G...\n"
    "CM..\n"
    ".#.#\n"
    "S..#\n";

int manhattan(Cell a, Cell b) { return std::abs(a.x - b.x) + std::abs(a.y - b.y); }

}  // namespace

std::string to_string(Cell c) { return "(" + std::to_string(c.x) + "," + std::to_string(c.y) + ")"; }

std::string_view action_name(Action a) noexcept {
    switch (a) {
        case Action::Right: return "RIGHT";
        case Action::Up: return "UP";
        case Action::Left: return "LEFT";
        case Action::Down: return "DOWN";
    }
    return "?";
}

std::string_view move_name(Move m) noexcept {
    switch (m) {
        case Move::North: return "north";
        case Move::East: return "east";
        case Move::South: return "south";
        case Move::West: return "west";
    }
    return "?";
}

std::string_view orientation_name(OrientationError u) noexcept {
    switch (u) {
        case OrientationError::Minus90: return "-90";
        case OrientationError::Zero: return "0";
        case OrientationError::Plus90: return "+90";
    }
    return "?";
}

Heading heading_of(Action a) noexcept { return static_cast<Heading>(static_cast<int>(a)); }

Move move_of(Heading h) noexcept {
    switch (h) {
        case Heading::East: return Move::East;
        case Heading::North: return Move::North;
        case Heading::West: return Move::West;
        case Heading::South: return Move::South;
    }
    return Move::North;
}

Cell offset_of(Move m) noexcept {
    switch (m) {
        case Move::North: return {0, 1};
        case Move::East: return {1, 0};
        case Move::South: return {0, -1};
        case Move::West: return {-1, 0};
    }
    return {0, 0};
}

const std::vector<double>& orientation_prior() {
    static const std::vector<double> prior{0.10, 0.80, 0.10};
    return prior;
}

const std::vector<std::vector<double>>& reactive_table() {
    // Columns RIGHT, UP, LEFT, DOWN.
    static const std::vector<std::vector<double>> table{
        {0.05, 0.85, 0.05, 0.05},
        {0.45, 0.05, 0.45, 0.05},
        {0.05, 0.85, 0.05, 0.05},
    };
    return table;
}

// ---------------------------------------------------------------------------
// GridMap

std::vector<Cell> GridMap::free_cells() const {
    std::vector<Cell> cells;
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            if (!occupied.contains({x, y})) {
                cells.push_back({x, y});
            }
        }
    }
    return cells;
}

void GridMap::validate() const {
    if (width < 1 || height < 1) {
        throw SpecificationError("map dimensions must be positive");
    }
    for (Cell c : occupied) {
        if (!in_bounds(c)) {
            throw SpecificationError("occupied cell " + to_string(c) + " lies outside the map");
        }
    }
    if (!is_free(start)) {
        throw SpecificationError("start cell " + to_string(start) + " is not free");
    }
    if (!is_free(goal)) {
        throw SpecificationError("goal cell " + to_string(goal) + " is not free");
    }
    if (start == goal) {
        throw SpecificationError("start and goal coincide");
    }
    for (Cell c : confounded) {
        if (!is_free(c)) {
            throw SpecificationError("confounded cell " + to_string(c) + " is not free");
        }
    }
    if (magnet && !in_bounds(*magnet)) {
        throw SpecificationError("magnet cell lies outside the map");
    }
}

GridMap parse_map(std::string_view text) {
    std::vector<std::string> rows;
    std::vector<int> line_numbers;
    int line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        std::size_t end = text.find('\n', pos);
        if (end == std::string_view::npos) {
            end = text.size();
        }
        std::string line(text.substr(pos, end - pos));
        ++line_no;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (!line.empty()) {
            rows.push_back(line);
            line_numbers.push_back(line_no);
        }
        pos = end + 1;
    }
    if (rows.empty()) {
        throw ParseError(1, 1, "map is empty");
    }

    GridMap map;
    map.height = static_cast<int>(rows.size());
    map.width = static_cast<int>(rows.front().size());
    std::optional<Cell> start;
    std::optional<Cell> goal;
    for (std::size_t r = 0; r < rows.size(); ++r) {
        const int line = line_numbers[r];
        if (static_cast<int>(rows[r].size()) != map.width) {
            throw ParseError(line, static_cast<int>(std::min(rows[r].size(), static_cast<std::size_t>(map.width))) + 1,
                             "row has " + std::to_string(rows[r].size()) + " cells, expected " +
                                 std::to_string(map.width));
        }
        const int y = map.height - 1 - static_cast<int>(r);
        for (int x = 0; x < map.width; ++x) {
            const Cell c{x, y};
            switch (rows[r][x]) {
                case '.': break;
                case '#': map.occupied.insert(c); break;
                case 'M':
                    if (map.magnet) {
                        throw ParseError(line, x + 1, "second magnet 'M'");
                    }
                    map.magnet = c;
                    map.occupied.insert(c);
                    break;
                case 'C': map.confounded.insert(c); break;
                case 'S':
                    if (start) {
                        throw ParseError(line, x + 1, "second start 'S'");
                    }
                    start = c;
                    break;
                case 'G':
                    if (goal) {
                        throw ParseError(line, x + 1, "second goal 'G'");
                    }
                    goal = c;
                    break;
                default:
                    throw ParseError(line, x + 1, std::string("unknown glyph '") + rows[r][x] + "'");
            }
        }
    }
    if (!start) {
        throw ParseError(line_numbers.back(), 1, "map has no start 'S'");
    }
    if (!goal) {
        throw ParseError(line_numbers.back(), 1, "map has no goal 'G'");
    }
    map.start = *start;
    map.goal = *goal;
    map.validate();
    return map;
}

std::string serialize_map(const GridMap& map) {
    map.validate();
    std::string out;
    for (int y = map.height - 1; y >= 0; --y) {
        for (int x = 0; x < map.width; ++x) {
            const Cell c{x, y};
            char glyph = '.';
            if (map.magnet && *map.magnet == c) {
                glyph = 'M';
            } else if (map.occupied.contains(c)) {
                glyph = '#';
            } else if (c == map.start) {
                glyph = 'S';
            } else if (c == map.goal) {
                glyph = 'G';
            } else if (map.confounded.contains(c)) {
                glyph = 'C';
            }
            out.push_back(glyph);
        }
        out.push_back('\n');
    }
    return out;
}

GridMap load_map(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open map file '" + path + "'");
    }
    std::ostringstream buffer;
    buffer << in.rdbuf();
    try {
        return parse_map(buffer.str());
    } catch (const ParseError& e) {
        throw ParseError(e.line(), e.column(), path + ": " + e.detail());
    }
}

std::string_view default_map_text() noexcept { return kDefaultMap; }

GridMap default_map() { return parse_map(kDefaultMap); }

GridMap unconfounded_map() {
    GridMap map = default_map();
    map.confounded.clear();
    return map;
}

// ---------------------------------------------------------------------------
// Dynamics

Heading effective_heading(Action a, OrientationError u) noexcept {
    const int offset = static_cast<int>(u) - 1;
    return static_cast<Heading>(((static_cast<int>(heading_of(a)) + offset) % 4 + 4) % 4);
}

scm::Dist relative_transition(Action a, OrientationError u, bool in_region) {
    const Heading h = in_region ? effective_heading(a, u) : heading_of(a);
    const int hi = static_cast<int>(h);
    std::vector<double> p(kNumMoves, 0.0);
    p[static_cast<int>(move_of(h))] += kForwardProbability;
    p[static_cast<int>(move_of(static_cast<Heading>((hi + 1) % 4)))] += kDriftProbability;
    p[static_cast<int>(move_of(static_cast<Heading>((hi + 3) % 4)))] += kDriftProbability;
    return {"dS", std::move(p)};
}

MoveResult apply_move(const GridMap& map, Cell from, Move m) {
    const Cell d = offset_of(m);
    const Cell to{from.x + d.x, from.y + d.y};
    if (to == map.goal) {
        return {MoveResult::Kind::Goal, to};
    }
    if (!map.is_free(to)) {
        return {MoveResult::Kind::Collision, to};
    }
    return {MoveResult::Kind::Cell, to};
}

pomdp::UcPomdpModel build_model(const GridMap& map, double discount) {
    map.validate();
    const std::vector<Cell> cells = map.free_cells();
    std::map<Cell, int> index;
    for (std::size_t i = 0; i < cells.size(); ++i) {
        index[cells[i]] = static_cast<int>(i);
    }

    pomdp::UcPomdpModel model;
    model.name = "gridworld-confounded";
    model.num_states = static_cast<int>(cells.size());
    model.num_actions = kNumActions;
    model.num_observations = model.num_states + 1;
    model.num_relative = kNumMoves;
    model.discount = discount;

    model.confounder_prior = scm::CategoricalTable::root(orientation_prior());
    model.reactive_policy = scm::CategoricalTable({kNumOrientationErrors}, reactive_table());

    std::vector<std::vector<double>> p_uc_rows;
    for (int a = 0; a < kNumActions; ++a) {
        for (int u = 0; u < kNumOrientationErrors; ++u) {
            p_uc_rows.push_back(
                relative_transition(static_cast<Action>(a), static_cast<OrientationError>(u), true).probabilities);
        }
    }
    model.p_uc = scm::CategoricalTable({kNumActions, kNumOrientationErrors}, p_uc_rows);
    std::vector<std::vector<double>> p_0_rows;
    for (int a = 0; a < kNumActions; ++a) {
        p_0_rows.push_back(
            relative_transition(static_cast<Action>(a), OrientationError::Zero, false).probabilities);
    }
    model.p_0 = scm::CategoricalTable({kNumActions}, p_0_rows);

    const int total = model.total_states();
    model.confounded.resize(cells.size());
    model.successor.resize(cells.size() * kNumMoves);
    for (std::size_t i = 0; i < cells.size(); ++i) {
        model.confounded[i] = map.confounded.contains(cells[i]);
        for (int m = 0; m < kNumMoves; ++m) {
            const MoveResult r = apply_move(map, cells[i], static_cast<Move>(m));
            int next = model.collided_state();
            if (r.kind == MoveResult::Kind::Goal) {
                next = model.goal_state();
            } else if (r.kind == MoveResult::Kind::Cell) {
                next = index.at(r.cell);
            }
            model.successor[i * kNumMoves + m] = next;
        }
    }

    std::vector<std::vector<double>> obs_rows(total, std::vector<double>(model.num_observations, 0.0));
    for (int s = 0; s < model.num_states; ++s) {
        obs_rows[s][s] = 1.0;
    }
    obs_rows[model.goal_state()][model.num_states] = 1.0;
    obs_rows[model.collided_state()][model.num_states] = 1.0;
    model.observation = scm::CategoricalTable({total}, obs_rows);

    model.rewards.assign(static_cast<std::size_t>(model.num_states) * kNumActions * total, kStepReward);
    for (int s = 0; s < model.num_states; ++s) {
        for (int a = 0; a < kNumActions; ++a) {
            const std::size_t base = (static_cast<std::size_t>(s) * kNumActions + a) * total;
            model.rewards[base + model.goal_state()] = kStepReward + kGoalBonus;
            model.rewards[base + model.collided_state()] = kStepReward + kCollisionPenalty;
        }
    }

    model.initial_belief.assign(total, 0.0);
    model.initial_belief[index.at(map.start)] = 1.0;

    for (std::size_t i = 0; i < cells.size(); ++i) {
        const Cell c = cells[i];
        model.hints.goal_distance.push_back(manhattan(c, map.goal));
        int best_action = 0;
        int best_distance = -1;
        for (int a = 0; a < kNumActions; ++a) {
            const MoveResult r = apply_move(map, c, move_of(heading_of(static_cast<Action>(a))));
            if (r.kind == MoveResult::Kind::Collision) {
                continue;
            }
            const int d = manhattan(r.cell, map.goal);
            if (best_distance < 0 || d < best_distance) {
                best_distance = d;
                best_action = a;
            }
        }
        model.hints.rollout_action.push_back(best_action);
    }
    // The sensor reports the cell, so the greedy move can be read off it.
    model.hints.observation_action = model.hints.rollout_action;
    model.hints.observation_action.push_back(0);

    for (Cell c : cells) {
        model.state_names.push_back(to_string(c));
        model.observation_names.push_back(to_string(c));
    }
    model.state_names.emplace_back("goal");
    model.state_names.emplace_back("collision");
    model.observation_names.emplace_back("terminal");
    for (int a = 0; a < kNumActions; ++a) {
        model.action_names.emplace_back(action_name(static_cast<Action>(a)));
    }
    for (int m = 0; m < kNumMoves; ++m) {
        model.relative_names.emplace_back(move_name(static_cast<Move>(m)));
    }

    model.validate();
    return model;
}

int shortest_path_length(const GridMap& map, bool avoid_confounded) {
    std::map<Cell, int> dist{{map.start, 0}};
    std::deque<Cell> frontier{map.start};
    while (!frontier.empty()) {
        const Cell c = frontier.front();
        frontier.pop_front();
        for (int m = 0; m < kNumMoves; ++m) {
            const MoveResult r = apply_move(map, c, static_cast<Move>(m));
            if (r.kind == MoveResult::Kind::Goal) {
                return dist[c] + 1;
            }
            if (r.kind == MoveResult::Kind::Collision || dist.contains(r.cell)) {
                continue;
            }
            if (avoid_confounded && map.confounded.contains(r.cell)) {
                continue;
            }
            dist[r.cell] = dist[c] + 1;
            frontier.push_back(r.cell);
        }
    }
    return -1;
}

}  // namespace cpomdp::grid
