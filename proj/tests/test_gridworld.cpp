#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "espsim/errors.hpp"
#include "espsim/gridworld.hpp"
#include "espsim/rng.hpp"

using namespace espsim;

namespace {

// Empty 7x7 board with the agent at (r, c) facing `dir`.
GridworldState empty_board(int r, int c, Direction dir, int max_len = 484) {
  GridConfig config{7, 3, 0, 0, 0, max_len};
  GridworldState s = grid_reset(config, 0);
  std::fill(s.last_seen.begin(), s.last_seen.end(), kUnseen);
  std::fill(s.last_visit.begin(), s.last_visit.end(), -1);
  s.row = r;
  s.col = c;
  s.dir = dir;
  s.n_items = 1;
  s.items_remaining = 1;
  s.last_visit[static_cast<std::size_t>(r * s.size + c)] = 0;
  return s;
}

void put(GridworldState& s, int r, int c, Cell cell) { s.cells[static_cast<std::size_t>(r * s.size + c)] = cell; }

int count(const GridworldState& s, Cell kind) {
  int n = 0;
  for (int r = 1; r < s.size - 1; ++r)
    for (int c = 1; c < s.size - 1; ++c) n += s.at(r, c) == kind;
  return n;
}

}  // namespace

TEST_CASE("reset places every object once and is seeded") {
  const GridConfig config;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto s = grid_reset(config, seed);
    CHECK(count(s, Cell::item) == config.n_items);
    CHECK(count(s, Cell::wall) == config.n_walls);
    CHECK(count(s, Cell::lava) == config.n_lava);
    CHECK(s.at(s.row, s.col) == Cell::empty);
    for (int i = 0; i < s.size; ++i) {
      CHECK(s.at(0, i) == Cell::wall);
      CHECK(s.at(s.size - 1, i) == Cell::wall);
      CHECK(s.at(i, 0) == Cell::wall);
      CHECK(s.at(i, s.size - 1) == Cell::wall);
    }
    CHECK(s.t == 0);
    CHECK(grid_reset(config, seed) == s);
  }
  CHECK_FALSE(grid_reset(config, 1) == grid_reset(config, 2));
}

TEST_CASE("no items means the episode is over at reset") {
  GridConfig config = GridConfig::desk();
  config.n_items = 0;
  const auto s = grid_reset(config, 3);
  CHECK(s.terminated());
  CHECK_THROWS_AS(grid_step(s, GridAction::turn_left), ContractViolation);
}

TEST_CASE("config validation") {
  GridConfig c;
  c.view_size = 4;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = GridConfig{5, 3, 3, 3, 3, 100};  // 9 interior tiles, 9 objects
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = GridConfig{5, 5, 1, 1, 1, 100};
  CHECK_THROWS_AS(c.validate(), ConfigError);
  CHECK_NOTHROW(GridConfig::desk().validate());
}

TEST_CASE("turning rotates in place") {
  auto s = empty_board(3, 3, Direction::north);
  auto out = grid_step(s, GridAction::turn_left);
  CHECK(out.next_state.dir == Direction::west);
  CHECK(out.reward == 0.0);
  CHECK(out.next_state.row == 3);
  CHECK(out.next_state.col == 3);
  CHECK(grid_step(s, GridAction::turn_right).next_state.dir == Direction::east);
}

TEST_CASE("walls block movement but time advances") {
  auto s = empty_board(1, 1, Direction::north);
  auto out = grid_step(s, GridAction::move_forward);
  CHECK(out.next_state.row == 1);
  CHECK(out.next_state.t == 1);
}

TEST_CASE("item at t=0 pays 1 and lava at half time costs 0.05") {
  auto s = empty_board(3, 3, Direction::north);
  put(s, 2, 3, Cell::item);
  auto out = grid_step(s, GridAction::move_forward);
  CHECK(out.reward == 1.0);
  CHECK(out.terminated);
  CHECK(out.next_state.at(2, 3) == Cell::empty);

  auto l = empty_board(3, 3, Direction::east);
  put(l, 3, 4, Cell::lava);
  put(l, 1, 1, Cell::item);
  l.t = 242;
  auto lo = grid_step(l, GridAction::move_forward);
  CHECK(lo.reward == doctest::Approx(-0.05).epsilon(1e-12));
  CHECK(lo.next_state.at(3, 4) == Cell::empty);
  CHECK_FALSE(lo.terminated);
}

TEST_CASE("truncation at max length") {
  auto s = empty_board(3, 3, Direction::north, 5);
  put(s, 1, 1, Cell::item);
  for (int i = 0; i < 5; ++i) {
    auto out = grid_step(s, GridAction::turn_left);
    s = out.next_state;
    CHECK(out.truncated == (i == 4));
  }
  CHECK_THROWS_AS(grid_step(s, GridAction::turn_left), ContractViolation);
}

TEST_CASE("heatmap keeps the last visit time") {
  auto s = empty_board(3, 3, Direction::north);
  put(s, 1, 5, Cell::item);
  // Leave the start cell, come back at t=10 and again at t=20.
  auto step = [&](GridAction a) { s = grid_step(s, a).next_state; };
  step(GridAction::move_forward);  // t=1 at (2,3)
  step(GridAction::turn_left);
  step(GridAction::turn_left);     // t=3, facing south
  while (s.t < 9) step(GridAction::turn_right), step(GridAction::turn_left);
  step(GridAction::move_forward);  // t=10 back at (3,3)
  const auto idx = static_cast<std::size_t>(3 * s.size + 3);
  CHECK(grid_observe(s, Observability::partial).movement_history[idx] == doctest::Approx(10.0 / 484));
  step(GridAction::move_forward);  // t=11 at (4,3)
  step(GridAction::turn_left);
  step(GridAction::turn_left);     // facing north
  while (s.t < 19) step(GridAction::turn_right), step(GridAction::turn_left);
  step(GridAction::move_forward);  // t=20
  CHECK(s.t == 20);
  CHECK(grid_observe(s, Observability::partial).movement_history[idx] == doctest::Approx(20.0 / 484));
}

TEST_CASE("view is the square in front including the agent row") {
  auto s = empty_board(3, 3, Direction::east);
  const auto cells = grid_view_cells(s);
  REQUIRE(cells.size() == 9);
  // Far row first, left to right from the agent's point of view.
  CHECK(cells[0] == std::pair{2, 5});
  CHECK(cells[2] == std::pair{4, 5});
  CHECK(cells[7] == std::pair{3, 3});
  CHECK(cells[6] == std::pair{2, 3});
}

TEST_CASE("retrospective board at reset covers the first view only") {
  const auto s = grid_reset(GridConfig(), 12);
  const auto obs = grid_observe(s, Observability::partial);
  std::vector<std::size_t> footprint;
  for (auto [r, c] : grid_view_cells(s))
    if (r >= 0 && c >= 0 && r < s.size && c < s.size) footprint.push_back(static_cast<std::size_t>(r * s.size + c));
  for (std::size_t i = 0; i < obs.retrospective_board.size(); ++i) {
    const bool in_view = std::find(footprint.begin(), footprint.end(), i) != footprint.end();
    CHECK((obs.retrospective_board[i] != kUnseen) == in_view);
    if (in_view) CHECK(obs.retrospective_board[i] == static_cast<std::uint8_t>(s.cells[i]));
  }
  const auto full = grid_observe(s, Observability::full);
  for (std::size_t i = 0; i < s.cells.size(); ++i)
    CHECK(full.retrospective_board[i] == static_cast<std::uint8_t>(s.cells[i]));
}

TEST_CASE("reward bounds, return bound and monotone heatmap under random play") {
  Rng rng(8);
  const GridConfig config = GridConfig::desk();
  for (std::uint64_t ep = 0; ep < 200; ++ep) {
    auto s = grid_reset(config, ep);
    double total = 0.0;
    while (!s.finished()) {
      auto out = grid_step(s, static_cast<GridAction>(rng.below(3)));
      if (out.reward > 0) CHECK((out.reward > 0.0 && out.reward <= 1.0));
      if (out.reward < 0) CHECK((out.reward >= -0.1 && out.reward < 0.0));
      for (std::size_t i = 0; i < s.last_visit.size(); ++i) CHECK(out.next_state.last_visit[i] >= s.last_visit[i]);
      CHECK(out.next_state.items_remaining <= s.items_remaining);
      CHECK(out.next_state.at(out.next_state.row, out.next_state.col) != Cell::wall);
      total += out.reward;
      s = out.next_state;
    }
    CHECK(total <= config.n_items);
  }
}

TEST_CASE("detector image") {
  auto s = empty_board(3, 3, Direction::north);
  put(s, 1, 1, Cell::item);
  put(s, 4, 4, Cell::lava);
  const auto initial = s;
  for (int i = 0; i < 6; ++i) s = grid_step(s, GridAction::turn_left).next_state;
  const auto img = grid_encode_detector(initial, s);
  for (std::size_t i = 0; i < img.movement.size(); ++i) {
    if (i == static_cast<std::size_t>(3 * s.size + 3)) CHECK(img.movement[i] > 0.0);
    else CHECK(img.movement[i] == 0.0);
  }
  CHECK(img.board[static_cast<std::size_t>(1 * s.size + 1)] == doctest::Approx(2.0 / 3.0));
  CHECK(img.board[0] == doctest::Approx(1.0 / 3.0));
  CHECK(img.flatten().size() == 2 * s.cells.size());
  // Channel 1 depends on the initial board only.
  CHECK(grid_encode_detector(initial, initial).board == img.board);
}

TEST_CASE("egocentric window is centred and turned with the agent") {
  auto s = empty_board(2, 4, Direction::east);
  const int e = grid_ego_size(s.size);
  CHECK(e == 9);
  CHECK(grid_ego_cell(s, 4, 4) == std::pair{2, 4});
  CHECK(grid_ego_cell(s, 3, 4) == std::pair{2, 5});  // one ahead
  CHECK(grid_ego_cell(s, 4, 5) == std::pair{3, 4});  // one to the right
  s.dir = Direction::west;
  CHECK(grid_ego_cell(s, 3, 4) == std::pair{2, 3});
  CHECK(grid_ego_cell(s, 4, 5) == std::pair{1, 4});
}

TEST_CASE("policy input widths and full prefix") {
  const auto config = GridConfig::desk();
  const auto s = grid_reset(config, 4);
  std::vector<double> partial(grid_input_width(config, Observability::partial));
  std::vector<double> full(grid_input_width(config, Observability::full));
  grid_write_input(s, Observability::partial, partial);
  grid_write_input(s, Observability::full, full);
  // The partial layout is the suffix of the full one.
  CHECK(std::equal(partial.begin(), partial.end(), full.end() - static_cast<std::ptrdiff_t>(partial.size())));
  for (double v : full) CHECK((v >= 0.0 && v <= 1.0));
}

TEST_CASE("ascii rendering") {
  auto s = empty_board(3, 3, Direction::north);
  put(s, 1, 1, Cell::item);
  put(s, 4, 4, Cell::lava);
  put(s, 2, 5, Cell::wall);
  const auto text = grid_render_ascii(s, Observability::full);
  CHECK(text.find('^') != std::string::npos);
  CHECK(text.find('I') != std::string::npos);
  CHECK(text.find('L') != std::string::npos);
  CHECK(std::count(text.begin(), text.end(), '\n') == 7);
  CHECK(grid_render_ascii(s, Observability::partial).find('?') != std::string::npos);
}
