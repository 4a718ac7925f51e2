#include "coalab/report.hpp"

#include <charconv>
#include <stdexcept>

namespace coalab {

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string csv_escape(std::string_view field) {
  if (field.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

CsvWriter::CsvWriter(const std::filesystem::path& path) : path_(path), out_(path, std::ios::binary) {
  if (!out_) throw std::runtime_error("cannot write " + path.string());
}

void CsvWriter::row(const std::vector<std::string>& fields) {
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out_ << ',';
    out_ << csv_escape(fields[i]);
  }
  out_ << "\r\n";
  if (!out_) throw std::runtime_error("write failed: " + path_.string());
}

SampleStoreWriter::SampleStoreWriter(const std::filesystem::path& path)
    : path_(path), out_(path, std::ios::binary) {
  if (!out_) throw std::runtime_error("cannot write " + path.string());
}

void SampleStoreWriter::write(std::uint64_t index, const TimingSample& sample) {
  out_ << sample_to_json(index, sample).dump() << '\n';
  if (!out_) throw std::runtime_error("write failed: " + path_.string());
}

json sample_to_json(std::uint64_t index, const TimingSample& s) {
  json warps = json::array();
  const std::uint32_t W = std::max<std::uint32_t>(s.warps, 1);
  for (std::uint32_t w = 0; w < W; ++w) {
    json pts = json::array();
    json cts = json::array();
    for (std::size_t b = w; b < s.ciphertexts.size(); b += W) {
      pts.push_back(to_hex(s.plaintexts[b]));
      cts.push_back(to_hex(s.ciphertexts[b]));
    }
    warps.push_back({{"plaintexts", pts}, {"ciphertexts", cts}});
  }
  return {{"index", index}, {"warps", warps}, {"time", s.time}};
}

TimingSample sample_from_json(const json& j) {
  TimingSample s;
  const json& warps = j.at("warps");
  if (!warps.is_array() || warps.empty()) throw std::invalid_argument("sample: warps must be non-empty");
  s.warps = static_cast<std::uint32_t>(warps.size());
  std::size_t total = 0;
  for (const auto& w : warps) total += w.at("ciphertexts").size();
  s.plaintexts.resize(total);
  s.ciphertexts.resize(total);
  for (std::uint32_t w = 0; w < s.warps; ++w) {
    const json& pts = warps[w].at("plaintexts");
    const json& cts = warps[w].at("ciphertexts");
    if (pts.size() != cts.size()) throw std::invalid_argument("sample: plaintext/ciphertext count mismatch");
    for (std::size_t k = 0; k < cts.size(); ++k) {
      const std::size_t b = w + k * s.warps;
      if (b >= total) throw std::invalid_argument("sample: warp grouping is not round-robin");
      s.plaintexts[b] = block_from_hex(pts[k].get<std::string>());
      s.ciphertexts[b] = block_from_hex(cts[k].get<std::string>());
    }
  }
  s.time = j.at("time").get<double>();
  return s;
}

std::vector<TimingSample> read_sample_store(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<TimingSample> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      out.push_back(sample_from_json(json::parse(line)));
    } catch (const std::exception& e) {
      throw std::invalid_argument(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

namespace {

json optional_count(const std::optional<std::uint64_t>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace

json attack_report_json(const CampaignConfig& config, const AttackCampaignResult& r) {
  json j;
  j["schema_version"] = kSchemaVersion;
  j["kind"] = "attack";
  j["config"] = config_to_json(config);
  json res;
  res["samples_used"] = r.samples_run;
  res["success"] = r.report.success;
  res["true_master"] = to_hex(r.key);
  res["true_round10"] = to_hex(r.round10);
  res["recovered_round10"] = to_hex(r.report.recovered_round10);
  res["recovered_master"] = r.report.recovered_master ? json(to_hex(*r.report.recovered_master)) : json(nullptr);
  res["mean_time"] = r.mean_time;
  res["mean_overhead"] = r.mean_overhead;
  json bytes = json::array();
  json matrix = json::array();
  for (std::size_t b = 0; b < 16; ++b) matrix.push_back(nullptr);
  for (const auto& c : r.report.bytes) {
    json zero = json::array();
    for (std::size_t g = 0; g < 256; ++g) {
      if (c.zero_variance.test(g)) zero.push_back(g);
    }
    bytes.push_back({{"byte", c.byte_pos},
                     {"best_guess", c.best_guess},
                     {"true_key", c.true_key ? json(*c.true_key) : json(nullptr)},
                     {"rank", c.rank_of_true_key ? json(*c.rank_of_true_key) : json(nullptr)},
                     {"rho_peak", c.rho_peak()},
                     {"rho_ave", c.rho_ave()},
                     {"min_samples", optional_count(r.min_samples[c.byte_pos])},
                     {"zero_variance_guesses", zero}});
    matrix[c.byte_pos] = c.correlations;
  }
  res["bytes"] = bytes;
  res["correlations"] = matrix;
  j["result"] = res;
  return j;
}

json defense_report_json(const CampaignConfig& config, const std::vector<DefenseRow>& rows) {
  json j;
  j["schema_version"] = kSchemaVersion;
  j["kind"] = "defend";
  j["config"] = config_to_json(config);
  json arr = json::array();
  for (const auto& r : rows) {
    arr.push_back({{"name", r.name},
                   {"rho_peak", r.rho_peak},
                   {"rho_ave", r.rho_ave},
                   {"min_samples", optional_count(r.min_samples)},
                   {"saturated", !r.min_samples.has_value()},
                   {"samples_run", r.samples_run},
                   {"multiplier", r.multiplier},
                   {"predicted_samples", optional_count(r.predicted_samples)},
                   {"mean_time", r.mean_time},
                   {"relative_performance", r.relative_performance}});
  }
  j["result"] = {{"rows", arr}};
  return j;
}

json microbench_report_json(const CampaignConfig& config, const MicrobenchResult& result) {
  json j;
  j["schema_version"] = kSchemaVersion;
  j["kind"] = "microbench";
  j["config"] = config_to_json(config);
  json rows = json::array();
  for (const auto& r : result.table) {
    rows.push_back({{"policy", r.label},
                    {"beta1", r.fit.beta1},
                    {"beta0", r.fit.beta0},
                    {"sigma_eps_sq", r.fit.sigma_eps_sq},
                    {"r_squared", r.fit.r_squared},
                    {"snr", r.snr.noiseless ? json("inf") : json(r.snr.snr)}});
  }
  json bad = result.ordering_violations();
  j["result"] = {{"table", rows}, {"ordering_violations", bad}};
  return j;
}

void write_json(const std::filesystem::path& path, const json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(path.string() + ": " + e.what());
  }
}

json without_meta(json j) {
  if (j.is_object()) j.erase("meta");
  return j;
}

}  // namespace coalab
