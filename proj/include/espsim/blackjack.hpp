#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "espsim/types.hpp"

namespace espsim {

enum class Suit : std::uint8_t { clubs = 0, diamonds = 1, hearts = 2, spades = 3 };

struct Card {
  int rank = 1;  // 1 = ace, 2..10, 11 = J, 12 = Q, 13 = K
  Suit suit = Suit::clubs;

  bool is_ace() const { return rank == 1; }
  // Face cards count 10; an ace reports its high value here, hand_value
  // decides between 1 and 11.
  int value() const { return rank == 1 ? 11 : (rank > 10 ? 10 : rank); }
  friend bool operator==(const Card&, const Card&) = default;
};

enum class BlackjackAction : int { hit = 0, stand = 1, double_down = 2, surrender = 3 };
inline constexpr int kBlackjackActions = 4;

enum class Phase { player_turn, settled };

struct BlackjackConfig {
  int reveal_depth = 13;  // deck cards exposed to the cheater and detector
  int history_pad = 12;   // action-history slots in encodings
  int max_len = 16;       // never reached by legal play; the game ends by itself

  void validate() const;
};

struct BlackjackState {
  std::vector<Card> dealer;  // [0] upcard, [1] hole card, then draws
  std::vector<Card> player;  // initial two cards, then draws
  std::vector<Card> deck;    // remaining cards, top first
  double bet = 1.0;
  std::vector<BlackjackAction> history;
  Phase phase = Phase::player_turn;
  int reveal_depth = 13;
  int history_pad = 12;

  friend bool operator==(const BlackjackState&, const BlackjackState&) = default;
};

// (numeric value, ace flag); a masked card is (0, 0).
struct CardEncoding {
  int value = 0;
  int ace = 0;
  friend bool operator==(const CardEncoding&, const CardEncoding&) = default;
};

struct BlackjackObservation {
  std::array<CardEncoding, 2> player_initial;
  std::array<CardEncoding, 2> dealer_initial;
  std::vector<CardEncoding> deck;  // deck as dealt, reveal_depth entries
  int player_count = 0;
  std::vector<BlackjackAction> history;

  friend bool operator==(const BlackjackObservation&, const BlackjackObservation&) = default;
};

// Highest total not exceeding 21, counting each ace as 1 or 11; if every
// assignment busts, the all-ones total.
int hand_value(std::span<const Card> cards);
bool is_natural(std::span<const Card> cards);

std::vector<Card> standard_deck();

BlackjackState bj_reset(const BlackjackConfig& config, std::uint64_t seed);
// Deals from a caller-supplied shoe (top first): player, dealer, player,
// dealer. Used by tests to stage exact hands.
BlackjackState bj_deal(std::vector<Card> shoe, const BlackjackConfig& config = {});
StepOutcome<BlackjackState> bj_step(const BlackjackState& state, BlackjackAction action);
// Reveals the hole card, draws to at least 17 and returns the settlement.
// The player must have stood or doubled without busting.
double bj_dealer_play_and_settle(BlackjackState& state);
BlackjackObservation bj_observe(const BlackjackState& state, Observability mode);

// The deck as it stood right after the deal, reconstructed from draws.
std::vector<Card> bj_dealt_deck(const BlackjackState& state);

// Flat layout: player initial (2x2) | dealer initial (2x2) | deck
// (reveal_depth x 2) | count / 21 | history one-hot (history_pad x 4).
// Card values are divided by 11.
std::size_t bj_bundle_width(const BlackjackConfig& config);
void bj_write_bundle(const BlackjackObservation& bundle, int history_pad, std::span<double> out);

// Policy input: partial bundle, or full bundle followed by the partial one.
std::size_t bj_input_width(const BlackjackConfig& config, Observability mode);
void bj_write_input(const BlackjackState& state, Observability mode, std::span<double> out);

// Full-visibility bundle of the initial state with the episode's actions.
std::vector<double> bj_encode_detector(const BlackjackState& initial, std::span<const BlackjackAction> actions);

std::string card_to_string(const Card& card);
std::string to_string(BlackjackAction action);
// Dealer | Player | Deck | Action table; cards hidden in `mode` are
// parenthesised.
std::string bj_render_table(const BlackjackState& initial, std::span<const BlackjackAction> actions,
                            Observability mode);

}  // namespace espsim
