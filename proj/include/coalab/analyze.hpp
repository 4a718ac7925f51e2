#pragma once

#include <optional>
#include <vector>

#include "coalab/config.hpp"

namespace coalab {

/// Ratio window within which the Fisher-z sample estimate counts as agreeing with the
/// measured min-samples.
inline constexpr double kPredictionFactor = 3.0;

/// The config fields that may differ between reports being analyzed together.
json comparable_snapshot(const json& config);

struct AnalyzeOptions {
  double alpha = 0.9;
  /// Re-run attenuation cross-checks from the first report's config with this many samples.
  std::optional<std::uint64_t> attenuation_samples;
  unsigned parallel = 1;
};

/// Cross-checks stored attack/defend reports. Throws std::invalid_argument for an empty
/// input, an unsupported schema_version, an unknown report kind or config snapshots that
/// differ in anything but seed, key, sample budget and output paths.
json analyze_reports(const std::vector<json>& reports, const AnalyzeOptions& options = {});

}  // namespace coalab
