#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "coalab/aes.hpp"
#include "coalab/attack.hpp"
#include "coalab/coalescer.hpp"
#include "coalab/memsim.hpp"
#include "coalab/rotation.hpp"

namespace coalab {

using nlohmann::json;

inline constexpr int kSchemaVersion = 1;

struct MicrobenchConfig {
  std::uint32_t reps = 10000;
  std::vector<std::uint32_t> widths{8, 16, 32, 64};
  /// Also sweep the fixed-random and dynamic policies.
  bool randomized = true;
};

struct DefenseSpec {
  std::string name;
  /// Partial campaign config merged over the base config.
  json overrides = json::object();
};

struct OutputConfig {
  std::string dir = "out";
  bool samples_store = false;
};

struct CampaignConfig {
  std::uint64_t seed = 1;
  std::optional<Block> key;
  std::uint32_t threads = 32;
  CoalescingPolicy policy = CoalescingPolicy::fixed(64);
  MshrTopology mshr;
  RotationSchedule rotation;
  OffsetDraw rotation_draw = OffsetDraw::unique;
  TimingParams timing;
  SimConfig sim;
  std::uint64_t samples = 500000;
  AttackConfig attack;
  std::uint64_t step = 500;
  std::uint32_t streak = 3;
  bool stop_when_recovered = true;
  MicrobenchConfig microbench;
  std::vector<DefenseSpec> defenses;
  OutputConfig output;

  void validate() const;
};

/// Throws std::invalid_argument on unknown keys, wrong types or invalid values.
CampaignConfig config_from_json(const json& j);
json config_to_json(const CampaignConfig& c);
CampaignConfig load_config(const std::filesystem::path& path);
/// Merges `overrides` (RFC 7386 merge patch) over `base` and re-validates.
CampaignConfig apply_overrides(const CampaignConfig& base, const json& overrides);

}  // namespace coalab
