#include "espsim/blackjack.hpp"

#include <algorithm>
#include <sstream>

#include "espsim/errors.hpp"
#include "espsim/rng.hpp"

namespace espsim {

namespace {

CardEncoding encode(const Card& card) { return {card.value(), card.is_ace() ? 1 : 0}; }

std::size_t player_draws(const BlackjackState& s) { return s.player.size() - 2; }

double* write_card(const CardEncoding& code, double* out) {
  out[0] = code.value / 11.0;
  out[1] = code.ace;
  return out + 2;
}

}  // namespace

void BlackjackConfig::validate() const {
  if (reveal_depth < 0 || reveal_depth > 48) throw ConfigError("reveal_depth must be in [0, 48]");
  if (history_pad < 1) throw ConfigError("history_pad must be positive");
  if (max_len < 1) throw ConfigError("max_len must be positive");
}

int hand_value(std::span<const Card> cards) {
  int total = 0;
  int aces = 0;
  for (const Card& c : cards) {
    if (c.is_ace()) {
      ++aces;
      total += 1;
    } else {
      total += c.value();
    }
  }
  // At most one ace can be promoted to 11 without exceeding 21.
  if (aces > 0 && total + 10 <= 21) total += 10;
  return total;
}

bool is_natural(std::span<const Card> cards) { return cards.size() == 2 && hand_value(cards) == 21; }

std::vector<Card> standard_deck() {
  std::vector<Card> deck;
  deck.reserve(52);
  for (int suit = 0; suit < 4; ++suit)
    for (int rank = 1; rank <= 13; ++rank) deck.push_back({rank, static_cast<Suit>(suit)});
  return deck;
}

BlackjackState bj_deal(std::vector<Card> shoe, const BlackjackConfig& config) {
  config.validate();
  if (shoe.size() < static_cast<std::size_t>(4 + config.reveal_depth))
    throw ConfigError("shoe too small for the deal and the reveal depth");
  BlackjackState s;
  s.reveal_depth = config.reveal_depth;
  s.history_pad = config.history_pad;
  s.player = {shoe[0], shoe[2]};
  s.dealer = {shoe[1], shoe[3]};
  s.deck.assign(shoe.begin() + 4, shoe.end());
  return s;
}

BlackjackState bj_reset(const BlackjackConfig& config, std::uint64_t seed) {
  Rng rng(derive_seed(seed, 0x626a));
  auto shoe = standard_deck();
  rng.shuffle(shoe.begin(), shoe.end());
  return bj_deal(std::move(shoe), config);
}

double bj_dealer_play_and_settle(BlackjackState& s) {
  if (s.phase != Phase::player_turn) throw ContractViolation("hand already settled");
  const int player = hand_value(s.player);
  if (player > 21) throw ContractViolation("dealer plays only after the player stands or doubles without busting");
  while (hand_value(s.dealer) < 17) {
    if (s.deck.empty()) throw ContractViolation("deck exhausted");
    s.dealer.push_back(s.deck.front());
    s.deck.erase(s.deck.begin());
  }
  s.phase = Phase::settled;
  const int dealer = hand_value(s.dealer);
  if (dealer > 21 || dealer < player) return is_natural(s.player) ? 1.5 * s.bet : s.bet;
  if (dealer == player) return 0.0;
  return -s.bet;
}

StepOutcome<BlackjackState> bj_step(const BlackjackState& state, BlackjackAction action) {
  if (state.phase != Phase::player_turn) throw ContractViolation("bj_step called after settlement");
  StepOutcome<BlackjackState> out{state};
  BlackjackState& s = out.next_state;
  const bool first_turn = s.history.empty();
  s.history.push_back(action);

  auto draw = [&s] {
    if (s.deck.empty()) throw ContractViolation("deck exhausted");
    s.player.push_back(s.deck.front());
    s.deck.erase(s.deck.begin());
  };

  switch (action) {
    case BlackjackAction::hit:
      draw();
      if (hand_value(s.player) > 21) {
        s.phase = Phase::settled;
        out.reward = -s.bet;
      }
      break;
    case BlackjackAction::stand:
      out.reward = bj_dealer_play_and_settle(s);
      break;
    case BlackjackAction::double_down:
      s.bet *= 2.0;
      draw();
      if (hand_value(s.player) > 21) {
        s.phase = Phase::settled;
        out.reward = -s.bet;
      } else {
        out.reward = bj_dealer_play_and_settle(s);
      }
      break;
    case BlackjackAction::surrender:
      s.phase = Phase::settled;
      // Late surrender forfeits twice the unit bet; the bet is still 1 here
      // because doubling ends the hand.
      out.reward = first_turn ? -0.5 * s.bet : -2.0 * s.bet;
      break;
    default:
      throw ConfigError("unknown blackjack action");
  }
  out.terminated = s.phase == Phase::settled;
  return out;
}

std::vector<Card> bj_dealt_deck(const BlackjackState& s) {
  std::vector<Card> deck(s.player.begin() + 2, s.player.end());
  deck.insert(deck.end(), s.dealer.begin() + 2, s.dealer.end());
  deck.insert(deck.end(), s.deck.begin(), s.deck.end());
  return deck;
}

BlackjackObservation bj_observe(const BlackjackState& s, Observability mode) {
  const bool full = mode == Observability::full;
  BlackjackObservation obs;
  obs.player_initial = {encode(s.player[0]), encode(s.player[1])};
  obs.dealer_initial = {encode(s.dealer[0]), full ? encode(s.dealer[1]) : CardEncoding{}};
  const auto dealt = bj_dealt_deck(s);
  const auto revealed = player_draws(s);
  obs.deck.resize(static_cast<std::size_t>(s.reveal_depth));
  for (std::size_t i = 0; i < obs.deck.size() && i < dealt.size(); ++i) {
    if (full || i < revealed) obs.deck[i] = encode(dealt[i]);
  }
  obs.player_count = hand_value(s.player);
  obs.history = s.history;
  return obs;
}

std::size_t bj_bundle_width(const BlackjackConfig& config) {
  return static_cast<std::size_t>(2 * 2 + 2 * 2 + config.reveal_depth * 2 + 1 + config.history_pad * kBlackjackActions);
}

void bj_write_bundle(const BlackjackObservation& b, int history_pad, std::span<double> out) {
  std::fill(out.begin(), out.end(), 0.0);
  double* p = out.data();
  for (const auto& c : b.player_initial) p = write_card(c, p);
  for (const auto& c : b.dealer_initial) p = write_card(c, p);
  for (const auto& c : b.deck) p = write_card(c, p);
  *p++ = b.player_count / 21.0;
  const auto slots = std::min<std::size_t>(b.history.size(), static_cast<std::size_t>(history_pad));
  for (std::size_t i = 0; i < slots; ++i) p[i * kBlackjackActions + static_cast<std::size_t>(b.history[i])] = 1.0;
}

std::size_t bj_input_width(const BlackjackConfig& config, Observability mode) {
  const auto w = bj_bundle_width(config);
  return mode == Observability::partial ? w : 2 * w;
}

void bj_write_input(const BlackjackState& s, Observability mode, std::span<double> out) {
  BlackjackConfig config;
  config.reveal_depth = s.reveal_depth;
  config.history_pad = s.history_pad;
  const auto w = bj_bundle_width(config);
  if (mode == Observability::full) {
    bj_write_bundle(bj_observe(s, Observability::full), s.history_pad, out.subspan(0, w));
    out = out.subspan(w);
  }
  bj_write_bundle(bj_observe(s, Observability::partial), s.history_pad, out.subspan(0, w));
}

std::vector<double> bj_encode_detector(const BlackjackState& initial, std::span<const BlackjackAction> actions) {
  BlackjackConfig config;
  config.reveal_depth = initial.reveal_depth;
  config.history_pad = initial.history_pad;
  auto bundle = bj_observe(initial, Observability::full);
  bundle.history.assign(actions.begin(), actions.end());
  std::vector<double> out(bj_bundle_width(config));
  bj_write_bundle(bundle, initial.history_pad, out);
  return out;
}

std::string card_to_string(const Card& card) {
  static constexpr const char* kRanks[] = {"?", "A", "2", "3", "4", "5", "6", "7", "8", "9", "T", "J", "Q", "K"};
  static constexpr const char* kSuits[] = {"♣", "♢", "♡", "♠"};
  return std::string(kRanks[card.rank]) + kSuits[static_cast<int>(card.suit)];
}

std::string to_string(BlackjackAction action) {
  switch (action) {
    case BlackjackAction::hit: return "hit";
    case BlackjackAction::stand: return "stand";
    case BlackjackAction::double_down: return "doubledown";
    case BlackjackAction::surrender: return "surrender";
  }
  return "?";
}

std::string bj_render_table(const BlackjackState& initial, std::span<const BlackjackAction> actions,
                            Observability mode) {
  const bool full = mode == Observability::full;
  std::size_t revealed = 0;
  for (auto a : actions)
    if (a == BlackjackAction::hit || a == BlackjackAction::double_down) ++revealed;
  auto show = [](const Card& c, bool visible) {
    return visible ? card_to_string(c) : "(" + card_to_string(c) + ")";
  };

  std::ostringstream os;
  os << "Dealer | Player | Deck | Action\n";
  os << show(initial.dealer[0], true) << ", " << show(initial.dealer[1], full) << " | ";
  os << show(initial.player[0], true) << ", " << show(initial.player[1], true) << " | ";
  const auto dealt = bj_dealt_deck(initial);
  for (std::size_t i = 0; i < dealt.size() && i < static_cast<std::size_t>(initial.reveal_depth); ++i) {
    if (i > 0) os << ", ";
    os << show(dealt[i], full || i < revealed);
  }
  os << " | ";
  for (std::size_t i = 0; i < actions.size(); ++i) {
    if (i > 0) os << ", ";
    os << to_string(actions[i]);
  }
  os << '\n';
  return os.str();
}

}  // namespace espsim
