#include "espsim/gridworld.hpp"

#include <algorithm>
#include <numeric>

#include "espsim/errors.hpp"
#include "espsim/rng.hpp"

namespace espsim {

namespace {

constexpr int kRowDelta[4] = {-1, 0, 1, 0};
constexpr int kColDelta[4] = {0, 1, 0, -1};

std::size_t index_of(int size, int r, int c) { return static_cast<std::size_t>(r * size + c); }

bool in_bounds(int size, int r, int c) { return r >= 0 && c >= 0 && r < size && c < size; }

// Marks the current view footprint as seen with its current contents.
void refresh_view(GridworldState& s) {
  for (auto [r, c] : grid_view_cells(s)) {
    if (!in_bounds(s.size, r, c)) continue;
    s.last_seen[index_of(s.size, r, c)] = static_cast<std::uint8_t>(s.at(r, c));
  }
}

}  // namespace

void GridConfig::validate() const {
  if (grid_size < 3) throw ConfigError("grid_size must be at least 3");
  if (view_size < 1 || view_size % 2 == 0) throw ConfigError("view_size must be odd and positive");
  if (view_size >= grid_size) throw ConfigError("view_size must be smaller than grid_size");
  if (n_items < 0 || n_walls < 0 || n_lava < 0) throw ConfigError("object counts must be non-negative");
  if (n_items + n_walls + n_lava >= interior_cells())
    throw ConfigError("grid overfull: items + walls + lava must leave a free interior cell for the agent");
  if (max_len < 1) throw ConfigError("max_len must be positive");
}

GridworldState grid_reset(const GridConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(derive_seed(seed, 0x67726964));
  GridworldState s;
  s.size = config.grid_size;
  s.view_size = config.view_size;
  s.n_items = config.n_items;
  s.max_len = config.max_len;
  const auto n = static_cast<std::size_t>(s.size * s.size);
  s.cells.assign(n, Cell::empty);
  s.last_visit.assign(n, -1);
  s.last_seen.assign(n, kUnseen);
  for (int r = 0; r < s.size; ++r) {
    for (int c = 0; c < s.size; ++c) {
      if (r == 0 || c == 0 || r == s.size - 1 || c == s.size - 1) s.cells[index_of(s.size, r, c)] = Cell::wall;
    }
  }

  std::vector<int> interior;
  interior.reserve(static_cast<std::size_t>(config.interior_cells()));
  for (int r = 1; r < s.size - 1; ++r)
    for (int c = 1; c < s.size - 1; ++c) interior.push_back(r * s.size + c);
  rng.shuffle(interior.begin(), interior.end());

  std::size_t next = 0;
  const int agent = interior[next++];
  s.row = agent / s.size;
  s.col = agent % s.size;
  s.dir = static_cast<Direction>(rng.below(4));
  auto place = [&](int count, Cell kind) {
    for (int i = 0; i < count; ++i) s.cells[static_cast<std::size_t>(interior[next++])] = kind;
  };
  place(config.n_items, Cell::item);
  place(config.n_walls, Cell::wall);
  place(config.n_lava, Cell::lava);

  s.items_remaining = config.n_items;
  s.t = 0;
  s.last_visit[index_of(s.size, s.row, s.col)] = 0;
  refresh_view(s);
  return s;
}

StepOutcome<GridworldState> grid_step(const GridworldState& state, GridAction action) {
  if (state.finished()) throw ContractViolation("grid_step called on a finished episode");
  StepOutcome<GridworldState> out{state};
  GridworldState& s = out.next_state;
  const double decay = 1.0 - static_cast<double>(state.t) / static_cast<double>(state.max_len);

  switch (action) {
    case GridAction::turn_left:
      s.dir = static_cast<Direction>((static_cast<int>(s.dir) + 3) % 4);
      break;
    case GridAction::turn_right:
      s.dir = static_cast<Direction>((static_cast<int>(s.dir) + 1) % 4);
      break;
    case GridAction::move_forward: {
      const int d = static_cast<int>(s.dir);
      const int r = s.row + kRowDelta[d];
      const int c = s.col + kColDelta[d];
      const Cell target = s.at(r, c);
      if (target == Cell::wall) break;
      s.row = r;
      s.col = c;
      auto& tile = s.cells[index_of(s.size, r, c)];
      if (target == Cell::item) {
        tile = Cell::empty;
        --s.items_remaining;
        ++s.items_collected;
        out.reward = decay;
      } else if (target == Cell::lava) {
        tile = Cell::empty;
        out.reward = -0.1 * decay;
      }
      break;
    }
    default:
      throw ConfigError("unknown gridworld action");
  }

  ++s.t;
  s.last_visit[index_of(s.size, s.row, s.col)] = s.t;
  refresh_view(s);
  out.terminated = s.terminated();
  out.truncated = s.truncated();
  return out;
}

std::vector<std::pair<int, int>> grid_view_cells(const GridworldState& s) {
  const int v = s.view_size;
  const int half = v / 2;
  std::vector<std::pair<int, int>> cells;
  cells.reserve(static_cast<std::size_t>(v * v));
  const int d = static_cast<int>(s.dir);
  const int right = (d + 1) % 4;
  for (int fwd = v - 1; fwd >= 0; --fwd) {
    for (int lat = -half; lat <= half; ++lat) {
      cells.emplace_back(s.row + fwd * kRowDelta[d] + lat * kRowDelta[right],
                         s.col + fwd * kColDelta[d] + lat * kColDelta[right]);
    }
  }
  return cells;
}

GridObservation grid_observe(const GridworldState& s, Observability mode) {
  GridObservation obs;
  obs.grid_size = s.size;
  obs.view_size = s.view_size;
  for (auto [r, c] : grid_view_cells(s)) obs.agent_view.push_back(in_bounds(s.size, r, c) ? s.at(r, c) : Cell::wall);

  const auto n = s.cells.size();
  obs.movement_history.assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    if (s.last_visit[i] > 0) obs.movement_history[i] = static_cast<double>(s.last_visit[i]) / s.max_len;
  }
  if (mode == Observability::full) {
    obs.retrospective_board.resize(n);
    std::transform(s.cells.begin(), s.cells.end(), obs.retrospective_board.begin(),
                   [](Cell c) { return static_cast<std::uint8_t>(c); });
  } else {
    obs.retrospective_board = s.last_seen;
  }
  obs.items_collected = s.items_collected;
  obs.time = static_cast<double>(s.t) / s.max_len;
  obs.agent_row = s.row;
  obs.agent_col = s.col;
  obs.agent_dir = s.dir;
  return obs;
}

std::vector<double> DetectorImageGrid::flatten() const {
  std::vector<double> out(movement);
  out.insert(out.end(), board.begin(), board.end());
  return out;
}

DetectorImageGrid grid_encode_detector(const GridworldState& initial, const GridworldState& final_state) {
  DetectorImageGrid img;
  img.grid_size = initial.size;
  const auto n = initial.cells.size();
  img.movement.assign(n, 0.0);
  img.board.assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    if (final_state.last_visit[i] > 0)
      img.movement[i] = static_cast<double>(final_state.last_visit[i]) / final_state.max_len;
    img.board[i] = static_cast<double>(initial.cells[i]) / 3.0;
  }
  return img;
}

std::size_t grid_input_width(const GridConfig& config, Observability mode) {
  const auto inner = static_cast<std::size_t>(config.interior_cells());
  const auto view = static_cast<std::size_t>(config.view_size * config.view_size);
  const auto ego = static_cast<std::size_t>(grid_ego_size(config.grid_size) * grid_ego_size(config.grid_size));
  const std::size_t partial = view * 3 + ego + ego * 4 + inner + 4 + 2;
  return mode == Observability::partial ? partial : partial + ego * 3;
}

std::pair<int, int> grid_ego_cell(const GridworldState& s, int i, int j) {
  const int h = grid_ego_size(s.size) / 2;
  const int du = i - h;  // negative is ahead of the agent
  const int dv = j - h;  // positive is to its right
  switch (s.dir) {
    case Direction::north: return {s.row + du, s.col + dv};
    case Direction::east: return {s.row + dv, s.col - du};
    case Direction::south: return {s.row - du, s.col - dv};
    case Direction::west: return {s.row - dv, s.col + du};
  }
  return {s.row, s.col};
}

void grid_write_input(const GridworldState& s, Observability mode, std::span<double> out) {
  std::fill(out.begin(), out.end(), 0.0);
  const int inner = s.size - 2;
  const int e = grid_ego_size(s.size);
  const auto n_ego = static_cast<std::size_t>(e * e);
  auto interior = [&](int r, int c) { return static_cast<std::size_t>((r - 1) * inner + (c - 1)); };
  auto boundary = [&](int r, int c) { return !in_bounds(s.size, r, c) || r == 0 || c == 0 || r == s.size - 1 || c == s.size - 1; };
  std::size_t base = 0;

  // Egocentric windows are centred on the agent and turned to its heading.
  if (mode == Observability::full) {
    for (int i = 0; i < e; ++i) {
      for (int j = 0; j < e; ++j) {
        const auto [r, c] = grid_ego_cell(s, i, j);
        const Cell cell = in_bounds(s.size, r, c) ? s.at(r, c) : Cell::wall;
        if (cell == Cell::empty) continue;
        out[base + (static_cast<std::size_t>(cell) - 1) * n_ego + static_cast<std::size_t>(i * e + j)] = 1.0;
      }
    }
    base += 3 * n_ego;
  }

  for (auto [r, c] : grid_view_cells(s)) {
    const Cell cell = in_bounds(s.size, r, c) ? s.at(r, c) : Cell::wall;
    if (cell != Cell::empty) out[base + static_cast<std::size_t>(cell) - 1] = 1.0;
    base += 3;
  }

  for (int i = 0; i < e; ++i) {
    for (int j = 0; j < e; ++j) {
      const auto [r, c] = grid_ego_cell(s, i, j);
      if (boundary(r, c)) continue;
      const int visit = s.last_visit[index_of(s.size, r, c)];
      if (visit > 0) out[base + static_cast<std::size_t>(i * e + j)] = static_cast<double>(visit) / s.max_len;
    }
  }
  base += n_ego;

  // Retrospective board: known flag, then wall / item / lava. The outer ring
  // and anything beyond it are always known walls.
  for (int i = 0; i < e; ++i) {
    for (int j = 0; j < e; ++j) {
      const auto [r, c] = grid_ego_cell(s, i, j);
      const auto k = static_cast<std::size_t>(i * e + j);
      std::uint8_t seen = static_cast<std::uint8_t>(Cell::wall);
      if (!boundary(r, c)) seen = s.last_seen[index_of(s.size, r, c)];
      if (seen == kUnseen) continue;
      out[base + k] = 1.0;
      if (seen != static_cast<std::uint8_t>(Cell::empty)) out[base + seen * n_ego + k] = 1.0;
    }
  }
  base += 4 * n_ego;

  out[base + interior(s.row, s.col)] = 1.0;
  base += static_cast<std::size_t>(inner * inner);
  out[base + static_cast<std::size_t>(s.dir)] = 1.0;
  base += 4;
  out[base++] = s.n_items > 0 ? static_cast<double>(s.items_collected) / s.n_items : 0.0;
  out[base++] = static_cast<double>(s.t) / s.max_len;
}

std::string grid_render_ascii(const GridworldState& s, Observability mode) {
  static constexpr char kAgent[4] = {'^', '>', 'v', '<'};
  static constexpr char kTile[4] = {'.', 'W', 'I', 'L'};
  std::string out;
  for (int r = 0; r < s.size; ++r) {
    for (int c = 0; c < s.size; ++c) {
      if (r == s.row && c == s.col) {
        out += kAgent[static_cast<int>(s.dir)];
        continue;
      }
      const auto i = index_of(s.size, r, c);
      if (mode == Observability::partial) {
        out += s.last_seen[i] == kUnseen ? '?' : kTile[s.last_seen[i]];
      } else {
        out += kTile[static_cast<int>(s.cells[i])];
      }
    }
    out += '\n';
  }
  return out;
}

}  // namespace espsim
