#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "coalab/attack.hpp"
#include "coalab/config.hpp"
#include "coalab/memsim.hpp"
#include "coalab/stats.hpp"

namespace coalab {

/// Returns false to stop the campaign early.
using SampleSink = std::function<bool(std::uint64_t index, const TimingSample&, const KernelDiagnostics&)>;

/// Produces a campaign's samples in index order. Sample i is a pure function of
/// (config, seed, i): its RNG stream is derived from the index and the layout it sees
/// depends only on its rotation epoch, so the worker count never changes a result.
class CampaignRunner {
 public:
  explicit CampaignRunner(CampaignConfig config, unsigned parallel = 1);

  const Block& key() const { return key_; }
  const KeySchedule& schedule() const { return ks_; }
  const CampaignConfig& config() const { return cfg_; }

  /// Streams samples [0, count) to `sink`; returns how many were delivered.
  std::uint64_t run(std::uint64_t count, const SampleSink& sink);

  /// Simulated cycles of one rotation (one 16-thread copy kernel).
  double rotation_cost() const;

 private:
  CampaignConfig cfg_;
  unsigned parallel_;
  Block key_{};
  KeySchedule ks_;
};

/// The campaign key: config.key when given, otherwise drawn from the seed.
Block campaign_key(const CampaignConfig& config);

struct AttackCampaignResult {
  Block key{};
  Block round10{};
  AttackReport report;
  std::array<std::optional<std::uint64_t>, 16> min_samples{};
  std::uint64_t samples_run = 0;
  double mean_time = 0.0;
  double mean_overhead = 0.0;

  /// Largest per-byte min-samples over the targeted bytes; nullopt if any saturated.
  std::optional<std::uint64_t> max_min_samples(const std::vector<std::uint8_t>& bytes) const;
};

AttackCampaignResult run_attack_campaign(const CampaignConfig& config, unsigned parallel = 1,
                                         const SampleSink& observer = {});

/// True-key-only measurements: per sample the attacker's prediction n_j (identity
/// layout, assumed width) and the simulator's actual round-10 transactions o_j.
struct StudyData {
  std::vector<double> time;
  std::vector<std::array<std::int16_t, 16>> predicted;
  std::vector<std::array<std::int16_t, 16>> actual;
  double mean_time = 0.0;
  double mean_overhead = 0.0;
};

StudyData run_study_campaign(const CampaignConfig& config, unsigned parallel = 1);

struct ByteStudy {
  double rho_tn = 0.0;     // corr(time, predicted)
  double rho_to = 0.0;     // corr(time, actual)
  double sigma_n = 0.0;    // std of predicted
  double sigma_o = 0.0;    // std of actual
  double p_equal = 0.0;    // raw P(actual == predicted)
  double kappa = 0.0;      // chance-corrected agreement of actual and predicted
  SnrEstimate snr_actual;  // time regressed on actual
  SnrEstimate snr_predicted;
};

std::array<ByteStudy, 16> summarize_study(const StudyData& data);

struct AttenuationRow {
  std::string name;
  double formula = 0.0;
  double measured = 0.0;
  double error = 0.0;      // relative when `relative`, absolute otherwise
  double tolerance = 0.0;
  bool relative = true;
  bool pass = false;
};

/// Cross-checks the attenuation formulas against independent campaigns of `samples`
/// kernels derived from `config`: SNR-based attenuation (rotation off), rotation
/// attenuation with one rotation halfway through, and rotation every 1000 kernels
/// (absolute tolerance, the signal there is below the sampling noise).
std::vector<AttenuationRow> check_attenuation(const CampaignConfig& config, std::uint64_t samples,
                                              unsigned parallel = 1);

struct Table2Row {
  std::string label;
  std::uint32_t width_bytes = 0;  // 0 for randomized policies
  RegressionFit fit;
  SnrEstimate snr;
};

struct MicrobenchResult {
  /// Rows in sweep order: fixed widths, then fixed_random and dynamic when enabled.
  std::vector<std::pair<std::string, std::vector<MicrobenchPoint>>> sweeps;
  std::vector<Table2Row> table;

  /// SNR strictly decreasing with fixed width; fixed_random below the widest fixed
  /// width; dynamic below fixed_random. Returns the violated clauses.
  std::vector<std::string> ordering_violations() const;
};

MicrobenchResult run_microbench_campaign(const CampaignConfig& config, unsigned parallel = 1);

struct Calibration {
  MicrobenchResult microbench;
  std::uint32_t reference_width = 64;
  /// sigma_eps at which the reference width's microbench SNR equals the target, when one
  /// was given; 0 when the model's own spread already exceeds the target noise.
  std::optional<double> suggested_sigma_eps;
};

/// The simulator's regression table under `config`, plus the sigma_eps that would put
/// the widest fixed width at `target_snr`.
Calibration calibrate(const CampaignConfig& config, std::optional<double> target_snr,
                      unsigned parallel = 1);

struct DefenseRow {
  std::string name;
  double rho_peak = 0.0;  // mean over targeted bytes, |r| at the true key
  double rho_ave = 0.0;
  std::optional<std::uint64_t> min_samples;
  std::uint64_t samples_run = 0;
  double multiplier = 0.0;  // lower bound when saturated
  std::optional<std::uint64_t> predicted_samples;  // Fisher-z estimate at alpha = 0.9
  double mean_time = 0.0;
  double relative_performance = 0.0;
};

/// Runs every configured defense (the first must be named "baseline").
std::vector<DefenseRow> run_defense_sweep(const CampaignConfig& config, unsigned parallel = 1);

}  // namespace coalab
