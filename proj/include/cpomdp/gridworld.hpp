#pragma once

// GridWorldConfounded: a robot on a small grid whose heading sensor is
// disturbed by a magnet near the short route to the goal.

#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "cpomdp/causal_model.hpp"
#include "cpomdp/ucpomdp.hpp"

namespace cpomdp::grid {

struct Cell {
    int x = 0;
    int y = 0;

    auto operator<=>(const Cell&) const = default;
};

std::string to_string(Cell c);

enum class Action { Right = 0, Up = 1, Left = 2, Down = 3 };
inline constexpr int kNumActions = 4;

/// Grid-frame heading in counterclockwise quarter turns from east.
enum class Heading { East = 0, North = 1, West = 2, South = 3 };

/// Confounder categories in index order.
enum class OrientationError { Minus90 = 0, Zero = 1, Plus90 = 2 };
inline constexpr int kNumOrientationErrors = 3;

/// Relative change categories in index order.
enum class Move { North = 0, East = 1, South = 2, West = 3 };
inline constexpr int kNumMoves = 4;

inline constexpr double kForwardProbability = 0.90;
inline constexpr double kDriftProbability = 0.05;
inline constexpr double kStepReward = -1.0;
inline constexpr double kGoalBonus = 100.0;
inline constexpr double kCollisionPenalty = -50.0;

std::string_view action_name(Action a) noexcept;
std::string_view move_name(Move m) noexcept;
std::string_view orientation_name(OrientationError u) noexcept;

Heading heading_of(Action a) noexcept;
Move move_of(Heading h) noexcept;
Cell offset_of(Move m) noexcept;

/// P(U) over {-90, 0, +90}.
const std::vector<double>& orientation_prior();
/// Reactive action probabilities, rows U, columns actions.
const std::vector<std::vector<double>>& reactive_table();

struct GridMap {
    int width = 0;
    int height = 0;
    std::set<Cell> occupied;
    Cell start;
    Cell goal;
    std::set<Cell> confounded;
    std::optional<Cell> magnet;

    bool in_bounds(Cell c) const noexcept { return c.x >= 0 && c.y >= 0 && c.x < width && c.y < height; }
    bool is_free(Cell c) const { return in_bounds(c) && !occupied.contains(c); }

    /// Free cells ordered by y, then x. Index i is non-terminal state i.
    std::vector<Cell> free_cells() const;

    /// Throws SpecificationError when an invariant is violated.
    void validate() const;

    bool operator==(const GridMap&) const = default;
};

/// Throws ParseError with the offending line and column.
GridMap parse_map(std::string_view text);
std::string serialize_map(const GridMap& map);

/// Reads and parses a map file. Throws IoError or ParseError.
GridMap load_map(const std::string& path);

/// The shipped 4x4 benchmark layout.
std::string_view default_map_text() noexcept;
GridMap default_map();
/// Same layout with the confounded region removed.
GridMap unconfounded_map();

Heading effective_heading(Action a, OrientationError u) noexcept;

/// 0.90 forward along the (possibly rotated) heading, 0.05 to each side.
scm::Dist relative_transition(Action a, OrientationError u, bool in_region);

struct MoveResult {
    enum class Kind { Cell, Goal, Collision } kind = Kind::Cell;
    Cell cell;

    bool operator==(const MoveResult&) const = default;
};

MoveResult apply_move(const GridMap& map, Cell from, Move m);

/// Ground-truth model for the map.
pomdp::UcPomdpModel build_model(const GridMap& map, double discount = 0.95);

/// Shortest action-path length from start to goal, or -1 when unreachable.
/// When avoid_confounded is set, confounded cells are not entered.
int shortest_path_length(const GridMap& map, bool avoid_confounded);

}  // namespace cpomdp::grid
