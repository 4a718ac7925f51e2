#pragma once

#include <array>
#include <bitset>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "coalab/aes.hpp"
#include "coalab/coalescer.hpp"
#include "coalab/memsim.hpp"

namespace coalab {

struct AttackConfig {
  /// The attacker's model of the coalescing granule, in 4-byte table elements.
  std::uint32_t elements_per_txn = 16;
  std::uint64_t num_samples = 500000;
  std::vector<std::uint8_t> target_bytes = all_bytes();
  /// Predict the expected count under `informed_distribution` instead of one width.
  bool informed = false;
  WidthDistribution informed_distribution = WidthDistribution::mean32();

  static std::vector<std::uint8_t> all_bytes();
  void validate() const;
};

struct CorrelationReport {
  std::uint8_t byte_pos = 0;
  std::array<double, 256> correlations{};
  /// Guesses whose predicted counts never varied; their correlation is reported as 0.
  std::bitset<256> zero_variance;
  std::uint8_t best_guess = 0;
  std::optional<std::uint32_t> rank_of_true_key;
  std::optional<std::uint8_t> true_key;
  std::uint64_t samples_used = 0;

  /// |r| at the true key (or at the best guess when truth is absent).
  double rho_peak() const;
  /// Mean |r| over the 255 guesses other than the true key (or best guess).
  double rho_ave() const;
};

struct AttackReport {
  std::vector<CorrelationReport> bytes;
  Block recovered_round10{};
  std::optional<Block> recovered_master;  // only when all 16 bytes were attacked
  bool success = false;
  std::uint64_t samples_used = 0;
};

/// Pearson correlation. Throws ZeroVarianceError if either side is constant.
double pearson(std::span<const double> x, std::span<const double> y);

/// Predicted last-round transaction count of one sample for one guess.
double predict_count(const TimingSample& sample, std::uint8_t byte_pos, std::uint8_t key_guess,
                     const AttackConfig& config);

/// 1-based rank of `guess` under the |r| ordering with lowest-index tie-break.
std::uint32_t rank_of(const std::array<double, 256>& correlations, std::uint8_t guess);

/// Streaming correlation state for all 256 guesses of every targeted byte.
class AttackAccumulator {
 public:
  explicit AttackAccumulator(AttackConfig config);

  void add(const TimingSample& sample);
  void add(std::span<const Block> ciphertexts, std::uint32_t warps, double time);

  CorrelationReport report(std::uint8_t byte_pos,
                           std::optional<std::uint8_t> true_key = std::nullopt) const;
  std::uint64_t samples() const { return count_; }
  const AttackConfig& config() const { return config_; }

 private:
  struct Sums {
    std::array<double, 256> n{}, nn{}, tn{};
  };
  void predict(std::span<const Block> cts, std::uint32_t warps, std::uint8_t byte_pos,
               std::array<double, 256>& out) const;

  AttackConfig config_;
  std::vector<Sums> sums_;      // parallel to config_.target_bytes
  std::vector<std::int8_t> slot_;  // byte position -> index into sums_, -1 if untargeted
  double sum_t_ = 0.0, sum_tt_ = 0.0, t_ref_ = 0.0;
  std::uint64_t count_ = 0;
  int mask_bits_ = 16;  // 16/32/64 fast paths; 0 selects the generic path
  // bitsN_[x * 256 + g] = line bit of inv[x ^ g]; only the width in use is filled.
  std::vector<std::uint16_t> bits16_;
  std::vector<std::uint32_t> bits32_;
  std::vector<std::uint64_t> bits64_;
};

CorrelationReport attack_byte(std::span<const TimingSample> samples, std::uint8_t byte_pos,
                              const AttackConfig& config,
                              std::optional<std::uint8_t> true_key = std::nullopt);

/// Attacks every targeted byte. With truth, success means every byte ranks 1; without
/// it, the recovered master key is checked against a known plaintext/ciphertext pair.
AttackReport attack_full(std::span<const TimingSample> samples, const AttackConfig& config,
                         const std::optional<Block>& true_round10 = std::nullopt);

AttackReport assemble_report(const AttackAccumulator& acc, const std::optional<Block>& true_round10,
                             const std::optional<std::pair<Block, Block>>& known_pair);

/// Tracks, per byte, the first probe that starts a run of `streak` consecutive rank-1 probes.
class Rank1Tracker {
 public:
  Rank1Tracker(const Block& true_round10, std::vector<std::uint8_t> bytes, std::uint32_t streak = 3);

  void probe(const AttackAccumulator& acc);
  /// nullopt means not recovered within the samples seen so far.
  std::optional<std::uint64_t> min_samples(std::uint8_t byte_pos) const;
  bool all_recovered() const;

 private:
  Block truth_;
  std::vector<std::uint8_t> bytes_;
  std::uint32_t streak_;
  std::array<std::uint32_t, 16> run_{};
  std::array<std::uint64_t, 16> run_start_{};
  std::array<std::optional<std::uint64_t>, 16> result_{};
};

/// Smallest prefix, probed every `step` samples, at which the true byte ranks 1 for 3
/// consecutive probes; nullopt signals saturation.
std::optional<std::uint64_t> min_samples_to_rank1(std::span<const TimingSample> samples,
                                                  std::uint8_t byte_pos, const AttackConfig& config,
                                                  std::uint64_t step, std::uint8_t true_key_byte);

}  // namespace coalab
