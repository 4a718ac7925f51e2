#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "coalab/campaign.hpp"
#include "coalab/config.hpp"
#include "coalab/memsim.hpp"

namespace coalab {

/// Shortest decimal that round-trips the double.
std::string format_double(double v);

/// RFC 4180 writer: CRLF records, fields quoted when they contain a comma, quote or
/// line break.
class CsvWriter {
 public:
  explicit CsvWriter(const std::filesystem::path& path);
  void row(const std::vector<std::string>& fields);

 private:
  std::filesystem::path path_;
  std::ofstream out_;
};

std::string csv_escape(std::string_view field);

/// JSON-lines sample store: one kernel per line, blocks grouped by warp.
class SampleStoreWriter {
 public:
  explicit SampleStoreWriter(const std::filesystem::path& path);
  void write(std::uint64_t index, const TimingSample& sample);

 private:
  std::filesystem::path path_;
  std::ofstream out_;
};

json sample_to_json(std::uint64_t index, const TimingSample& sample);
TimingSample sample_from_json(const json& j);
std::vector<TimingSample> read_sample_store(const std::filesystem::path& path);

/// Deterministic report payload. Wall-clock data goes under "meta" only.
json attack_report_json(const CampaignConfig& config, const AttackCampaignResult& result);
json defense_report_json(const CampaignConfig& config, const std::vector<DefenseRow>& rows);
json microbench_report_json(const CampaignConfig& config, const MicrobenchResult& result);

void write_json(const std::filesystem::path& path, const json& j);
json read_json(const std::filesystem::path& path);

/// Copy of `j` without the "meta" key, for byte-level comparisons.
json without_meta(json j);

}  // namespace coalab
