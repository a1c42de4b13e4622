#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "espsim/types.hpp"

namespace espsim {

// Layout parameters. Defaults are the full-size configuration; desk() is a
// small preset for quick runs and tests.
struct GridConfig {
  int grid_size = 11;
  int view_size = 3;
  int n_items = 5;
  int n_walls = 10;
  int n_lava = 10;
  int max_len = 484;

  static GridConfig desk() { return {7, 3, 3, 4, 4, 196}; }

  int interior_size() const { return grid_size - 2; }
  int interior_cells() const { return interior_size() * interior_size(); }
  // Throws ConfigError.
  void validate() const;
};

enum class Cell : std::uint8_t { empty = 0, wall = 1, item = 2, lava = 3 };
enum class Direction : std::uint8_t { north = 0, east = 1, south = 2, west = 3 };
enum class GridAction : int { turn_left = 0, turn_right = 1, move_forward = 2 };

inline constexpr int kGridActions = 3;
// Retrospective-board entry for a tile that has never been in view.
inline constexpr std::uint8_t kUnseen = 0xff;

struct GridworldState {
  int size = 0;
  int view_size = 3;
  int n_items = 0;
  int max_len = 0;
  std::vector<Cell> cells;  // row-major, outer ring is wall
  int row = 0;
  int col = 0;
  Direction dir = Direction::north;
  int t = 0;
  int items_remaining = 0;
  int items_collected = 0;

  // Per-tile memory carried with the state so observation is a pure function.
  std::vector<int> last_visit;          // timestep of last visit, -1 if never
  std::vector<std::uint8_t> last_seen;  // Cell code or kUnseen

  Cell at(int r, int c) const { return cells[static_cast<std::size_t>(r * size + c)]; }
  bool terminated() const { return items_remaining == 0; }
  bool truncated() const { return !terminated() && t >= max_len; }
  bool finished() const { return terminated() || truncated(); }

  friend bool operator==(const GridworldState&, const GridworldState&) = default;
};

struct GridObservation {
  int grid_size = 0;
  int view_size = 0;
  // view_size x view_size cell codes in the agent frame. Rows run from the
  // farthest forward row to the agent's own row, columns left to right.
  std::vector<Cell> agent_view;
  std::vector<double> movement_history;  // grid_size^2, last-visit t / T
  std::vector<std::uint8_t> retrospective_board;  // grid_size^2, kUnseen if never seen
  int items_collected = 0;
  double time = 0.0;  // t / T
  // The board marks the agent; kept as explicit fields.
  int agent_row = 0;
  int agent_col = 0;
  Direction agent_dir = Direction::north;

  friend bool operator==(const GridObservation&, const GridObservation&) = default;
};

struct DetectorImageGrid {
  int grid_size = 0;
  std::vector<double> movement;  // channel 0: final heatmap
  std::vector<double> board;     // channel 1: initial board, code / 3

  // Channel-major flattening: all of channel 0, then channel 1.
  std::vector<double> flatten() const;
  friend bool operator==(const DetectorImageGrid&, const DetectorImageGrid&) = default;
};

GridworldState grid_reset(const GridConfig& config, std::uint64_t seed);
StepOutcome<GridworldState> grid_step(const GridworldState& state, GridAction action);
GridObservation grid_observe(const GridworldState& state, Observability mode);

// Channel 0 from the final state's visit record, channel 1 from the initial
// state's tiles.
DetectorImageGrid grid_encode_detector(const GridworldState& initial, const GridworldState& final_state);

// World coordinates of the view footprint, in agent_view order.
std::vector<std::pair<int, int>> grid_view_cells(const GridworldState& state);

// Side of the egocentric window, 2 * interior - 1, so that every interior
// tile stays inside it wherever the agent stands.
inline int grid_ego_size(int grid_size) { return 2 * (grid_size - 2) - 1; }

// World coordinates of egocentric window cell (i, j); row 0 is farthest
// ahead, column 0 farthest to the left.
std::pair<int, int> grid_ego_cell(const GridworldState& state, int i, int j);

// Flat policy input. Board-sized features use the egocentric window.
//   partial: view (3 bits/tile) | heatmap | board (seen, wall, item, lava)
//            | agent one-hot over the interior | direction one-hot
//            | items fraction | time
//   full:    true board (wall, item, lava) | partial layout
std::size_t grid_input_width(const GridConfig& config, Observability mode);
void grid_write_input(const GridworldState& state, Observability mode, std::span<double> out);

// W wall, I item, L lava, . empty, ^>v< agent; '?' for unseen tiles in
// partial mode.
std::string grid_render_ascii(const GridworldState& state, Observability mode = Observability::full);

}  // namespace espsim
