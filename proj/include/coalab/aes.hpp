#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>

#include "coalab/rotation.hpp"

namespace coalab {

/// 16 octets of AES state, plaintext, ciphertext or round key.
using Block = std::array<std::uint8_t, 16>;

std::string to_hex(const Block& b);
/// Parses exactly 32 hex digits; throws std::invalid_argument otherwise.
Block block_from_hex(std::string_view hex);

/// Standard AES-128 expanded key: round 0 is the master key, round 10 the last.
struct KeySchedule {
  std::array<Block, 11> round_keys{};

  const Block& master() const { return round_keys[0]; }
  const Block& last() const { return round_keys[10]; }
};

KeySchedule expand_key(const Block& master);

/// Recovers the master key from the round-10 key by running the expansion backwards.
Block invert_schedule(const Block& round10_key);

/// OpenSSL 0.9.7 style encryption tables. t0..t3 fold SubBytes and MixColumns;
/// t4 replicates the S-box byte into all four octets of each word.
struct TTables {
  std::array<std::uint32_t, 256> t0{}, t1{}, t2{}, t3{}, t4{};
  /// Byte inverse of the substitution embodied by t4.
  std::array<std::uint8_t, 256> inv_t4_byte{};

  static const TTables& standard();
};

inline constexpr std::uint8_t kLastRoundTable = 4;
inline constexpr std::size_t kRounds = 10;
inline constexpr std::size_t kLookupsPerRound = 16;

struct Lookup {
  std::uint8_t table = 0;  // 0..4
  std::uint8_t index = 0;  // physical index touched
};

/// Per-round table lookups of one block. rounds[r - 1] is round r. Entry k of
/// rounds 1..9 is word (k / 4), table (k % 4); entry j of round 10 feeds
/// ciphertext byte j.
struct AccessTrace {
  std::array<std::array<Lookup, kLookupsPerRound>, kRounds> rounds{};

  const std::array<Lookup, kLookupsPerRound>& last_round() const { return rounds[kRounds - 1]; }
};

/// Physical placement of t4: the rotation state plus the permuted table storage
/// it implies. physical_t4[translate(x)] == t4[x] for every logical x.
struct TableLayout {
  RotationState state;
  std::array<std::uint32_t, 256> physical_t4{};
  /// translate(x, state) for every x, kept in sync by the members below.
  std::array<std::uint8_t, 256> physical_index{};

  static TableLayout identity(const TTables& tables);

  void rotate(Rng& rng, OffsetDraw draw = OffsetDraw::unique);
  void rotate_by(std::span<const std::uint32_t> shifts);
  /// Recomputes physical_index from state.
  void refresh_index();
  /// True when storage, index cache and state agree for the given tables.
  bool consistent_with(const TTables& tables) const;
};

struct Encryption {
  Block ciphertext{};
  AccessTrace trace;
};

Encryption encrypt_block(const Block& plaintext, const KeySchedule& ks, const TTables& tables,
                         const TableLayout& layout);

/// Ciphertext only, through the identity layout.
Block encrypt(const Block& plaintext, const KeySchedule& ks);

/// Attacker-side inversion of the last round: inv[ct_byte ^ key_guess].
inline std::uint8_t last_round_index(std::uint8_t ct_byte, std::uint8_t key_guess,
                                     std::span<const std::uint8_t, 256> inv) {
  return inv[static_cast<std::uint8_t>(ct_byte ^ key_guess)];
}

}  // namespace coalab
