#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace espsim {

enum class Game { gridworld, blackjack };

// partial: the non-cheater's masked view; full: ground-truth state plus the
// non-cheater's observation (the cheater's view).
enum class Observability { partial, full };

enum class PlayerLabel { noncheater = 0, cheater = 1 };

// Result of one transition. Games return the successor state by value so the
// transition functions stay pure.
template <typename State>
struct StepOutcome {
  State next_state;
  double reward = 0.0;
  bool terminated = false;
  bool truncated = false;
};

std::string to_string(Game game);
std::string to_string(Observability mode);
std::string to_string(PlayerLabel label);
Game parse_game(std::string_view text);
Observability parse_observability(std::string_view text);

}  // namespace espsim
