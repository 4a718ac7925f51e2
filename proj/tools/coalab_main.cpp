#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "coalab/analyze.hpp"
#include "coalab/campaign.hpp"
#include "coalab/config.hpp"
#include "coalab/report.hpp"

namespace fs = std::filesystem;
using namespace coalab;

namespace {

constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;
constexpr int kExitCheck = 3;
constexpr int kCsvSchemaVersion = 1;

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::uint64_t> samples;
  std::optional<std::string> out;
  unsigned parallel = 1;
};

void add_common(CLI::App* sub, Common& c, const std::string& samples_help) {
  sub->add_option("--config", c.config, "Campaign config (JSON)")->check(CLI::ExistingFile);
  sub->add_option("--seed", c.seed, "Override the config seed");
  sub->add_option("--samples", c.samples, samples_help)->check(CLI::PositiveNumber);
  sub->add_option("--out", c.out, "Output directory (overrides output.dir)");
  sub->add_option("--parallel", c.parallel, "Worker threads; results do not depend on it")
      ->check(CLI::Range(1u, 256u));
}

CampaignConfig load(const Common& c) {
  CampaignConfig cfg = c.config.empty() ? CampaignConfig{} : load_config(c.config);
  if (c.seed) cfg.seed = *c.seed;
  if (c.samples) {
    cfg.samples = *c.samples;
    cfg.attack.num_samples = *c.samples;
  }
  if (c.out) cfg.output.dir = *c.out;
  cfg.validate();
  return cfg;
}

fs::path out_dir(const CampaignConfig& cfg) {
  fs::path d = cfg.output.dir;
  fs::create_directories(d);
  return d;
}

json meta(std::chrono::steady_clock::time_point start, unsigned parallel) {
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return {{"wall_seconds", secs}, {"parallel", parallel}};
}

std::string num(double v) { return format_double(v); }

std::string opt(const std::optional<std::uint64_t>& v) { return v ? std::to_string(*v) : ""; }

int cmd_microbench(const Common& common, bool check) {
  const auto start = std::chrono::steady_clock::now();
  CampaignConfig cfg = load(common);
  // --samples sets the repetitions per (policy, n) cell here.
  if (common.samples) cfg.microbench.reps = static_cast<std::uint32_t>(*common.samples);
  const MicrobenchResult r = run_microbench_campaign(cfg, common.parallel);
  const fs::path dir = out_dir(cfg);

  {
    CsvWriter fixed(dir / "microbench.csv");
    fixed.row({"width_bytes", "n_unique", "rep", "time"});
    std::optional<CsvWriter> randomized;
    for (const auto& [label, points] : r.sweeps) {
      const bool is_fixed = label != "fixed_random" && label != "dynamic";
      if (!is_fixed && !randomized) {
        randomized.emplace(dir / "microbench_randomized.csv");
        randomized->row({"policy", "n_unique", "rep", "time"});
      }
      for (const auto& p : points) {
        if (is_fixed) {
          fixed.row({std::to_string(p.width_bytes), std::to_string(p.n_unique), std::to_string(p.rep),
                     num(p.time)});
        } else {
          randomized->row({label, std::to_string(p.n_unique), std::to_string(p.rep), num(p.time)});
        }
      }
    }
  }
  CsvWriter table(dir / "table2.csv");
  table.row({"policy", "width_bytes", "beta1", "beta0", "sigma_eps_sq", "r_squared", "snr"});
  for (const auto& t : r.table) {
    table.row({t.label, t.width_bytes ? std::to_string(t.width_bytes) : "", num(t.fit.beta1),
               num(t.fit.beta0), num(t.fit.sigma_eps_sq), num(t.fit.r_squared),
               t.snr.noiseless ? "inf" : num(t.snr.snr)});
    std::cout << t.label << ": beta1=" << t.fit.beta1 << " beta0=" << t.fit.beta0
              << " snr=" << t.snr.snr << "\n";
  }
  json report = microbench_report_json(cfg, r);
  report["csv_schema_version"] = kCsvSchemaVersion;
  report["meta"] = meta(start, common.parallel);
  write_json(dir / "microbench.json", report);

  const auto bad = r.ordering_violations();
  for (const auto& b : bad) std::cerr << "ordering violated: " << b << "\n";
  return check && !bad.empty() ? kExitCheck : 0;
}

void write_correlations(const fs::path& path, const AttackReport& report) {
  CsvWriter csv(path);
  csv.row({"byte", "guess", "correlation", "zero_variance"});
  for (const auto& b : report.bytes) {
    for (std::size_t g = 0; g < 256; ++g) {
      csv.row({std::to_string(b.byte_pos), std::to_string(g), num(b.correlations[g]),
               b.zero_variance.test(g) ? "1" : "0"});
    }
  }
}

int cmd_attack(const Common& common, std::optional<int> byte, bool expect_success,
               const std::string& from) {
  const auto start = std::chrono::steady_clock::now();
  CampaignConfig cfg = load(common);
  if (byte) cfg.attack.target_bytes = {static_cast<std::uint8_t>(*byte)};
  const fs::path dir = out_dir(cfg);

  AttackCampaignResult result;
  if (!from.empty()) {
    // Stored samples carry no truth; success means the recovered key reproduces them.
    const auto samples = read_sample_store(from);
    if (samples.size() < 2) throw std::invalid_argument("attack: sample store holds fewer than 2 samples");
    AttackAccumulator acc(cfg.attack);
    for (const auto& s : samples) acc.add(s);
    std::optional<Block> truth;
    if (cfg.key) truth = expand_key(*cfg.key).last();
    result.report = assemble_report(acc, truth, std::make_pair(samples.front().plaintexts.front(),
                                                               samples.front().ciphertexts.front()));
    result.samples_run = samples.size();
    if (cfg.key) {
      result.key = *cfg.key;
      result.round10 = *truth;
    }
    double t = 0.0;
    for (const auto& s : samples) t += s.time;
    result.mean_time = t / static_cast<double>(samples.size());
  } else {
    std::optional<SampleStoreWriter> store;
    if (cfg.output.samples_store) store.emplace(dir / "samples.jsonl");
    SampleSink observer;
    if (store) {
      observer = [&](std::uint64_t i, const TimingSample& s, const KernelDiagnostics&) {
        store->write(i, s);
        return true;
      };
    }
    result = run_attack_campaign(cfg, common.parallel, observer);
  }

  write_correlations(dir / "correlations.csv", result.report);
  json report = attack_report_json(cfg, result);
  report["csv_schema_version"] = kCsvSchemaVersion;
  report["meta"] = meta(start, common.parallel);
  write_json(dir / "attack.json", report);

  for (const auto& b : result.report.bytes) {
    std::cout << "byte " << int(b.byte_pos) << ": best 0x" << std::hex << int(b.best_guess) << std::dec;
    if (b.rank_of_true_key) std::cout << " true-key rank " << *b.rank_of_true_key;
    if (const auto m = result.min_samples[b.byte_pos]) std::cout << " min-samples " << *m;
    std::cout << " rho_peak " << b.rho_peak() << "\n";
  }
  std::cout << (result.report.success ? "key recovered" : "key NOT recovered") << " after "
            << result.samples_run << " samples\n";
  return expect_success && !result.report.success ? kExitCheck : 0;
}

std::vector<DefenseSpec> default_defenses() {
  const char* presets[][2] = {
      {"baseline", "{}"},
      {"fixed_random", R"({"policy": {"mode": "fixed_random"}})"},
      {"dynamic", R"({"policy": {"mode": "dynamic"}})"},
      {"dynamic_hierarchical",
       R"({"policy": {"mode": "dynamic"}, "mshr": {"mode": "hierarchical"}, "batch": {"threads": 960}})"},
      {"rotate_1000", R"({"rotation": {"rotate_every": 1000}})"},
      {"rotate_1", R"({"rotation": {"rotate_every": 1}})"},
      {"all", R"({"policy": {"mode": "dynamic"}, "mshr": {"mode": "hierarchical"},
                  "batch": {"threads": 960}, "rotation": {"rotate_every": 1000}})"},
  };
  std::vector<DefenseSpec> out;
  for (const auto& p : presets) out.push_back({p[0], json::parse(p[1])});
  return out;
}

int cmd_defend(const Common& common) {
  const auto start = std::chrono::steady_clock::now();
  CampaignConfig cfg = load(common);
  if (cfg.defenses.empty()) cfg.defenses = default_defenses();
  const auto rows = run_defense_sweep(cfg, common.parallel);
  const fs::path dir = out_dir(cfg);
  CsvWriter csv(dir / "defense.csv");
  csv.row({"name", "rho_peak", "rho_ave", "min_samples", "saturated", "samples_run", "multiplier",
           "predicted_samples", "mean_time", "relative_performance"});
  for (const auto& r : rows) {
    csv.row({r.name, num(r.rho_peak), num(r.rho_ave), opt(r.min_samples), r.min_samples ? "0" : "1",
             std::to_string(r.samples_run), num(r.multiplier), opt(r.predicted_samples),
             num(r.mean_time), num(r.relative_performance)});
    std::cout << r.name << ": rho_peak " << r.rho_peak << " multiplier "
              << (r.min_samples ? "" : ">=") << r.multiplier << " perf " << r.relative_performance << "\n";
  }
  json report = defense_report_json(cfg, rows);
  report["csv_schema_version"] = kCsvSchemaVersion;
  report["meta"] = meta(start, common.parallel);
  write_json(dir / "defense.json", report);
  return 0;
}

int cmd_analyze(const std::vector<std::string>& inputs, const std::optional<std::string>& out,
                double alpha, std::optional<std::uint64_t> attenuation, unsigned parallel) {
  const auto start = std::chrono::steady_clock::now();
  std::vector<json> reports;
  for (const auto& p : inputs) reports.push_back(read_json(p));
  AnalyzeOptions o;
  o.alpha = alpha;
  o.attenuation_samples = attenuation;
  o.parallel = parallel;
  json result = analyze_reports(reports, o);
  result["meta"] = meta(start, parallel);

  bool ok = true;
  for (const auto& r : result["reports"]) {
    if (r["kind"] == "attack") {
      std::cout << "attack: median measured/predicted ratio " << r["median_ratio"].dump() << "\n";
      if (r["within_factor"] == false) ok = false;
    } else {
      for (const auto& row : r["rows"]) {
        std::cout << "defend " << row["name"].get<std::string>() << ": predicted "
                  << row["predicted_samples"].dump() << " measured " << row["min_samples"].dump() << "\n";
      }
    }
  }
  if (result.contains("attenuation")) {
    for (const auto& a : result["attenuation"]) {
      std::cout << a["name"].get<std::string>() << ": formula " << a["formula"].dump() << " measured "
                << a["measured"].dump() << (a["pass"].get<bool>() ? " ok" : " MISMATCH") << "\n";
      if (!a["pass"].get<bool>()) ok = false;
    }
  }
  if (out) {
    fs::create_directories(*out);
    write_json(fs::path(*out) / "analysis.json", result);
  } else {
    std::cout << without_meta(result).dump(2) << "\n";
  }
  return ok ? 0 : kExitCheck;
}

int cmd_calibrate(const Common& common, std::optional<double> target) {
  const auto start = std::chrono::steady_clock::now();
  CampaignConfig cfg = load(common);
  if (common.samples) cfg.microbench.reps = static_cast<std::uint32_t>(*common.samples);
  const Calibration c = calibrate(cfg, target, common.parallel);
  const fs::path dir = out_dir(cfg);
  CsvWriter table(dir / "table2.csv");
  table.row({"policy", "width_bytes", "beta1", "beta0", "sigma_eps_sq", "r_squared", "snr"});
  for (const auto& t : c.microbench.table) {
    table.row({t.label, t.width_bytes ? std::to_string(t.width_bytes) : "", num(t.fit.beta1),
               num(t.fit.beta0), num(t.fit.sigma_eps_sq), num(t.fit.r_squared),
               t.snr.noiseless ? "inf" : num(t.snr.snr)});
    std::cout << t.label << ": beta1=" << t.fit.beta1 << " beta0=" << t.fit.beta0
              << " sigma_eps^2=" << t.fit.sigma_eps_sq << " snr=" << t.snr.snr << "\n";
  }
  json report = microbench_report_json(cfg, c.microbench);
  report["kind"] = "calibrate";
  report["csv_schema_version"] = kCsvSchemaVersion;
  report["result"]["reference_width"] = c.reference_width;
  report["result"]["target_snr"] = target ? json(*target) : json(nullptr);
  report["result"]["suggested_sigma_eps"] = c.suggested_sigma_eps ? json(*c.suggested_sigma_eps) : json(nullptr);
  report["meta"] = meta(start, common.parallel);
  write_json(dir / "calibration.json", report);
  if (c.suggested_sigma_eps) {
    std::cout << "sigma_eps for snr " << *target << " at width " << c.reference_width << ": "
              << *c.suggested_sigma_eps << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Coalescing timing side-channel laboratory"};
  app.require_subcommand(1);

  Common mb, at, df, cb;
  bool check = false;
  auto* microbench = app.add_subcommand("microbench", "Regression of time on unique accesses per width");
  add_common(microbench, mb, "Repetitions per (policy, n) cell");
  microbench->add_flag("--check", check, "Exit 3 if the SNR ordering across policies is violated");

  std::optional<int> byte;
  bool expect_success = false;
  std::string from;
  auto* attack = app.add_subcommand("attack", "Correlation timing attack on the last round");
  add_common(attack, at, "Sample budget");
  attack->add_option("--byte", byte, "Attack one key byte only")->check(CLI::Range(0, 15));
  attack->add_flag("--expect-success", expect_success, "Exit 3 unless the key is recovered");
  attack->add_option("--from", from, "Attack a stored JSON-lines sample store")->check(CLI::ExistingFile);

  auto* defend = app.add_subcommand("defend", "Sweep defense configurations against a baseline");
  add_common(defend, df, "Sample budget (cap) per configuration");

  std::vector<std::string> inputs;
  std::optional<std::string> an_out;
  double alpha = 0.9;
  std::optional<std::uint64_t> attenuation;
  unsigned an_parallel = 1;
  auto* analyze = app.add_subcommand("analyze", "Check stored reports against the statistical model");
  analyze->add_option("inputs", inputs, "attack.json / defense.json reports");
  analyze->add_option("--out", an_out, "Write analysis.json here instead of printing");
  analyze->add_option("--alpha", alpha, "Success probability for sample estimates")->check(CLI::Range(0.5, 1.0));
  analyze->add_option("--attenuation", attenuation,
                      "Also cross-check the attenuation formulas with campaigns of this many samples");
  analyze->add_option("--parallel", an_parallel, "Worker threads")->check(CLI::Range(1u, 256u));

  std::optional<double> target;
  auto* cal = app.add_subcommand("calibrate", "Report the regression table and suggest sigma_eps");
  add_common(cal, cb, "Repetitions per (policy, n) cell");
  cal->add_option("--target-snr", target, "Microbench SNR wanted at the widest fixed width")
      ->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitUsage;
  }

  try {
    if (*microbench) return cmd_microbench(mb, check);
    if (*attack) return cmd_attack(at, byte, expect_success, from);
    if (*defend) return cmd_defend(df);
    if (*analyze) {
      if (inputs.empty()) {
        std::cerr << "analyze: no input reports given\n" << analyze->help();
        return kExitUsage;
      }
      return cmd_analyze(inputs, an_out, alpha, attenuation, an_parallel);
    }
    if (*cal) return cmd_calibrate(cb, target);
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return 0;
}
