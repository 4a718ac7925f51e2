#include "coalab/analyze.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "coalab/campaign.hpp"
#include "coalab/stats.hpp"

namespace coalab {
namespace {

json predicted(double rho_peak, double rho_ave, double alpha) {
  try {
    return samples_required(rho_peak, rho_ave, alpha);
  } catch (const std::domain_error&) {
    return nullptr;  // rho_peak <= rho_ave or out of range
  }
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

json analyze_attack(const json& report, double alpha) {
  json bytes = json::array();
  std::vector<double> ratios;
  for (const auto& b : report.at("result").at("bytes")) {
    const json pred = predicted(b.at("rho_peak").get<double>(), b.at("rho_ave").get<double>(), alpha);
    const json& meas = b.at("min_samples");
    json row = {{"byte", b.at("byte")}, {"predicted_samples", pred}, {"min_samples", meas}};
    if (!pred.is_null() && !meas.is_null()) {
      const double r = meas.get<double>() / pred.get<double>();
      row["ratio"] = r;
      ratios.push_back(r);
    } else {
      row["ratio"] = nullptr;
    }
    bytes.push_back(row);
  }
  json out = {{"kind", "attack"}, {"bytes", bytes}};
  if (ratios.empty()) {
    out["median_ratio"] = nullptr;
    out["within_factor"] = nullptr;
  } else {
    // Per-byte min-samples are heavy tailed; the median byte is the stable comparison.
    const double m = median(ratios);
    out["median_ratio"] = m;
    out["within_factor"] = m <= kPredictionFactor && m >= 1.0 / kPredictionFactor;
  }
  return out;
}

json analyze_defense(const json& report, double alpha) {
  json rows = json::array();
  for (const auto& r : report.at("result").at("rows")) {
    const json pred = predicted(r.at("rho_peak").get<double>(), r.at("rho_ave").get<double>(), alpha);
    json row = {{"name", r.at("name")},
                {"predicted_samples", pred},
                {"min_samples", r.at("min_samples")},
                {"saturated", r.at("saturated")},
                {"samples_run", r.at("samples_run")}};
    // A saturated row is only bounded below by its budget.
    if (!pred.is_null() && r.at("saturated").get<bool>()) {
      row["prediction_consistent"] = pred.get<std::uint64_t>() > r.at("samples_run").get<std::uint64_t>();
    } else if (!pred.is_null()) {
      const double ratio = r.at("min_samples").get<double>() / pred.get<double>();
      row["ratio"] = ratio;
      row["prediction_consistent"] = ratio <= kPredictionFactor && ratio >= 1.0 / kPredictionFactor;
    } else {
      row["prediction_consistent"] = nullptr;
    }
    rows.push_back(row);
  }
  return {{"kind", "defend"}, {"rows", rows}};
}

}  // namespace

json comparable_snapshot(const json& config) {
  json c = config;
  for (const char* k : {"seed", "key", "samples", "output"}) c.erase(k);
  return c;
}

json analyze_reports(const std::vector<json>& reports, const AnalyzeOptions& options) {
  if (reports.empty()) throw std::invalid_argument("analyze: no input reports");
  if (!(options.alpha > 0.5 && options.alpha < 1.0)) {
    throw std::invalid_argument("analyze: alpha must lie in (0.5, 1)");
  }
  std::optional<json> reference;
  for (std::size_t i = 0; i < reports.size(); ++i) {
    const json& r = reports[i];
    if (!r.is_object() || !r.contains("schema_version") || !r.contains("config")) {
      throw std::invalid_argument("analyze: input " + std::to_string(i) + " is not a report");
    }
    if (r["schema_version"] != kSchemaVersion) {
      throw std::invalid_argument("analyze: input " + std::to_string(i) + " has schema_version " +
                                  r["schema_version"].dump() + ", expected " +
                                  std::to_string(kSchemaVersion));
    }
    const json snap = comparable_snapshot(r["config"]);
    if (!reference) {
      reference = snap;
    } else if (snap != *reference) {
      throw std::invalid_argument("analyze: input " + std::to_string(i) +
                                  " was produced by a different configuration");
    }
  }

  json out;
  out["schema_version"] = kSchemaVersion;
  out["kind"] = "analyze";
  out["alpha"] = options.alpha;
  out["prediction_factor"] = kPredictionFactor;
  json items = json::array();
  for (const auto& r : reports) {
    const std::string kind = r.value("kind", "");
    if (kind == "attack") {
      items.push_back(analyze_attack(r, options.alpha));
    } else if (kind == "defend") {
      items.push_back(analyze_defense(r, options.alpha));
    } else {
      throw std::invalid_argument("analyze: cannot analyze a report of kind \"" + kind + "\"");
    }
  }
  out["reports"] = items;

  if (options.attenuation_samples) {
    const CampaignConfig cfg = config_from_json(reports.front()["config"]);
    json rows = json::array();
    for (const auto& a : check_attenuation(cfg, *options.attenuation_samples, options.parallel)) {
      rows.push_back({{"name", a.name},
                      {"formula", a.formula},
                      {"measured", a.measured},
                      {"error", a.error},
                      {"tolerance", a.tolerance},
                      {"relative", a.relative},
                      {"pass", a.pass}});
    }
    out["attenuation"] = rows;
  }
  return out;
}

}  // namespace coalab
