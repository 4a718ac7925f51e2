#pragma once

#include <array>
#include <bit>
#include <compare>
#include <cstdint>
#include <optional>
#include <span>
#include <variant>
#include <vector>

#include "coalab/rng.hpp"

namespace coalab {

inline constexpr std::array<std::uint32_t, 4> kWidths = {8, 16, 32, 64};

/// Probability vector over coalescing widths 8/16/32/64 bytes (k = 3..6).
struct WidthDistribution {
  std::array<double, 4> p{0.0, 0.0, 0.0, 1.0};

  /// Skewed preset used for the randomized-width defenses: E[k] = 5, P(8B) = 0.05.
  static WidthDistribution mean32();
  static WidthDistribution point_mass(std::uint32_t width_bytes);
  static WidthDistribution uniform();

  double mean_width() const;
  double mean_log2_width() const;
  /// Throws std::invalid_argument if probabilities are negative or do not sum to 1.
  void validate() const;
};

struct Fixed {
  std::uint32_t width_bytes = 64;
};

/// One width per kernel run, drawn from `distribution`, applied to every line.
struct FixedRandomPerKernel {
  WidthDistribution distribution = WidthDistribution::mean32();
};

/// Line L is split into r[L % 16] subtransactions of 64 / r[L % 16] bytes.
/// When `regenerate` is set, a fresh r is drawn from it at every kernel.
struct DynamicPerLine {
  std::array<std::uint8_t, 16> r{1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1};
  std::optional<WidthDistribution> regenerate = WidthDistribution::mean32();
};

using PolicyMode = std::variant<Fixed, FixedRandomPerKernel, DynamicPerLine>;

struct CoalescingPolicy {
  PolicyMode mode = Fixed{};
  std::uint32_t line_size_bytes = 64;
  /// Addresses at or beyond this bound indicate a misconfigured layout.
  std::uint64_t memory_bytes = 1u << 16;

  static CoalescingPolicy fixed(std::uint32_t width_bytes);
  static CoalescingPolicy fixed_random(WidthDistribution dist = WidthDistribution::mean32());
  static CoalescingPolicy dynamic(std::optional<WidthDistribution> regenerate =
                                      WidthDistribution::mean32());
  static CoalescingPolicy dynamic_with(const std::array<std::uint8_t, 16>& r);

  void validate() const;
  /// True when coalesce() can run without a kernel-time draw.
  bool resolved() const { return !std::holds_alternative<FixedRandomPerKernel>(mode); }
};

/// Draws what varies per kernel: the width for FixedRandomPerKernel, a fresh r for
/// a regenerating DynamicPerLine. Returns a policy with Fixed or DynamicPerLine mode.
CoalescingPolicy resolve_kernel_policy(const CoalescingPolicy& policy, Rng& rng);

struct Transaction {
  std::uint64_t line_number = 0;
  std::uint32_t sub_index = 0;
  std::uint32_t width_bytes = 0;

  auto operator<=>(const Transaction&) const = default;
};

/// Minimal transaction set for one warp instruction, sorted by (line, sub_index).
/// Throws std::invalid_argument for misaligned or out-of-range addresses, or for
/// an unresolved FixedRandomPerKernel policy.
std::vector<Transaction> coalesce(std::span<const std::uint64_t> addresses,
                                  const CoalescingPolicy& policy);

std::uint32_t sample_width(const WidthDistribution& dist, Rng& rng);

/// 16 i.i.d. subtransaction counts, r = 64 / width with width drawn from `dist`.
std::array<std::uint8_t, 16> generate_r(Rng& rng,
                                        const WidthDistribution& dist = WidthDistribution::mean32());

/// Distinct values of (index >> log2(elements_per_txn)).
std::uint32_t count_lines(std::span<const std::uint8_t> indices, std::uint32_t elements_per_txn);

/// Transactions of one instruction as a bitset: bit (line - base_line) * 8 + sub.
struct TxnSet {
  std::uint64_t base_line = 0;
  std::array<std::uint64_t, 4> bits{};
  std::uint32_t count = 0;

  /// Visits (line, sub_index) in ascending order.
  template <class F>
  void for_each(F&& f) const {
    for (unsigned w = 0; w < 4; ++w) {
      std::uint64_t b = bits[w];
      while (b != 0) {
        const unsigned bit = w * 64 + static_cast<unsigned>(std::countr_zero(b));
        b &= b - 1;
        f(base_line + bit / 8, bit % 8);
      }
    }
  }
};

/// Allocation-free coalescer for a resolved policy; used on the simulator hot path.
class FastCoalescer {
 public:
  explicit FastCoalescer(const CoalescingPolicy& resolved_policy);

  /// Writes the transactions of one instruction into `out` (capacity >= addresses.size())
  /// and returns how many were written. Same result and order as coalesce().
  std::size_t run(std::span<const std::uint64_t> addresses, Transaction* out) const;

  /// Bitset form; returns false (set untouched) when the addresses span 32 lines or more.
  bool collect(std::span<const std::uint64_t> addresses, TxnSet& set) const;

  /// Lookups of 4-byte elements idx[] in a table starting at line-aligned `base`.
  void collect_table(std::uint64_t base, std::span<const std::uint8_t> idx, TxnSet& set) const;

  std::uint32_t width_of_line(std::uint64_t line) const { return 1u << sub_shift_[line & 15]; }
  /// TxnSet bit of element x in a table whose first line is congruent to rot mod 16.
  std::uint8_t table_bit(unsigned rot, unsigned x) const;

 private:
  std::size_t run_sorted(std::span<const std::uint64_t> addresses, Transaction* out) const;
  void check(std::uint64_t lo, std::uint64_t hi, std::uint64_t misaligned) const;

  std::array<std::uint8_t, 16> sub_shift_{};   // log2 of the subtransaction width per line % 16
  std::array<std::uint8_t, 256> table_bit_{};  // table_bit(0, x)
  std::uint32_t line_shift_ = 6;
  std::uint64_t memory_bytes_ = 0;
};

}  // namespace coalab
