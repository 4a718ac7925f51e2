// Acceptance run: one PASS/FAIL line per criterion. Criteria to run can be picked on the
// command line (e.g. `coalab_acceptance 1 5 7`); default is all of them.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "coalab/aes.hpp"
#include "coalab/campaign.hpp"
#include "coalab/report.hpp"
#include "coalab/rotation.hpp"
#include "coalab/stats.hpp"
#include "reference_aes.hpp"

using namespace coalab;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

Block random_block(Rng& rng) {
  Block b{};
  for (auto& x : b) x = static_cast<std::uint8_t>(rng());
  return b;
}

double mean(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double sample_sd(const std::vector<double>& v) {
  const double m = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

// Baseline: single warp, Fixed 64B, per-SM MSHRs, no rotation, default sigma_eps.
CampaignConfig baseline(std::uint64_t seed) {
  CampaignConfig c;
  c.seed = seed;
  c.samples = 500000;
  return c;
}

Outcome aes_vectors() {
  const Block key = block_from_hex("000102030405060708090a0b0c0d0e0f");
  const Block pt = block_from_hex("00112233445566778899aabbccddeeff");
  bool ok = to_hex(refaes::encrypt(pt, key)) == "69c4e0d86a7b0430d8cdb78070b4c55a" &&
            encrypt(pt, expand_key(key)) == refaes::encrypt(pt, key);

  Rng rng(0xae5);
  std::vector<Block> keys(10000), pts(10000), expect(10000);
  for (std::size_t i = 0; i < keys.size(); ++i) {
    keys[i] = random_block(rng);
    pts[i] = random_block(rng);
    expect[i] = refaes::encrypt(pts[i], keys[i]);
  }
  const auto t0 = Clock::now();
  int mismatches = 0;
  for (std::size_t i = 0; i < keys.size(); ++i) {
    if (encrypt(pts[i], expand_key(keys[i])) != expect[i]) ++mismatches;
  }
  const double dt = seconds_since(t0);
  ok = ok && mismatches == 0 && dt < 1.0;
  return {ok, "FIPS-197 ok, " + std::to_string(mismatches) + " mismatches in 10^4 random blocks, " +
                  fmt("%.3f s", dt)};
}

// Key recovery on 20 keys.
Outcome baseline_recovery() {
  int recovered = 0;
  std::uint64_t worst = 0;
  std::vector<std::uint64_t> per_key;
  const auto t0 = Clock::now();
  for (std::uint64_t s = 0; s < 20; ++s) {
    const auto r = run_attack_campaign(baseline(1000 + s));
    const auto m = r.max_min_samples(AttackConfig::all_bytes());
    if (m && *m <= 500000 && r.report.success) {
      ++recovered;
      worst = std::max(worst, *m);
      per_key.push_back(*m);
    }
  }
  const double dt = seconds_since(t0);
  std::sort(per_key.begin(), per_key.end());
  const std::uint64_t med = per_key.empty() ? 0 : per_key[per_key.size() / 2];
  return {recovered >= 18 && dt <= 900.0,
          std::to_string(recovered) + "/20 keys, all 16 bytes rank 1; median min-samples " +
              std::to_string(med) + ", worst " + std::to_string(worst) + fmt(", %.0f s", dt)};
}

Outcome microbench_ordering() {
  CampaignConfig c = baseline(7);
  c.microbench.reps = 10000;
  const auto r = run_microbench_campaign(c);
  std::string d = "SNR";
  for (const auto& row : r.table) d += " " + row.label + "=" + fmt("%.4g", row.snr.snr);
  const auto v = r.ordering_violations();
  for (const auto& s : v) d += "; violated: " + s;
  return {v.empty(), d};
}

// Mean over bytes of |corr(time, predicted count under the true key)|.
double study_rho(const CampaignConfig& c) {
  const auto s = summarize_study(run_study_campaign(c));
  double m = 0.0;
  for (const auto& b : s) m += std::abs(b.rho_tn);
  return m / 16.0;
}

Outcome rho_ordering() {
  struct Arm {
    std::string name;
    std::function<void(CampaignConfig&)> apply;
    std::vector<double> rho;
  };
  std::vector<Arm> arms = {
      {"baseline", [](CampaignConfig&) {}, {}},
      {"fixed_random", [](CampaignConfig& c) { c.policy = CoalescingPolicy::fixed_random(); }, {}},
      {"dynamic", [](CampaignConfig& c) { c.policy = CoalescingPolicy::dynamic(); }, {}},
      // Hierarchical MSHRs only act across SMs, so this arm fills the device.
      {"dynamic+hierarchical",
       [](CampaignConfig& c) {
         c.policy = CoalescingPolicy::dynamic();
         c.mshr.mode = MshrMode::hierarchical;
         c.threads = 960;
       },
       {}},
  };
  const auto t0 = Clock::now();
  for (auto& a : arms) {
    for (std::uint64_t s = 0; s < 10; ++s) {
      CampaignConfig c = baseline(2000 + s);
      c.samples = 100000;
      a.apply(c);
      a.rho.push_back(study_rho(c));
    }
  }
  bool ok = true;
  std::string d;
  for (std::size_t i = 0; i < arms.size(); ++i) {
    d += arms[i].name + "=" + fmt("%.5f", mean(arms[i].rho)) + fmt("+-%.5f", sample_sd(arms[i].rho)) + " ";
  }
  for (std::size_t i = 0; i + 1 < arms.size(); ++i) {
    const auto& a = arms[i].rho;
    const auto& b = arms[i + 1].rho;
    const double se = std::sqrt((sample_sd(a) * sample_sd(a) + sample_sd(b) * sample_sd(b)) / 10.0);
    const double z = (mean(a) - mean(b)) / se;
    const bool gap = z > 3.0;
    ok = ok && gap;
    d += "| " + arms[i].name + ">" + arms[i + 1].name + fmt(" z=%.1f", z) + (gap ? "" : " (FAILS)") + " ";
  }
  d += fmt("| %.0f s", seconds_since(t0));
  return {ok, d};
}

Outcome rotation_properties() {
  bool ok = true;
  std::string d;

  Rng rng(0x707);
  auto state = RotationState::identity(16, 16);
  std::vector<std::uint32_t> table(TTables::standard().t4.begin(), TTables::standard().t4.end());
  const auto orig = table;
  for (int i = 0; i < 1000; ++i) state = rotate(state, table, rng);
  auto a = table, b = orig;
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::set<std::uint32_t> image;
  bool lookup = true;
  for (std::uint32_t x = 0; x < 256; ++x) {
    image.insert(translate(x, state));
    lookup = lookup && table[translate(x, state)] == orig[x];
  }
  const bool perm = a == b && image.size() == 256 && lookup;
  ok = ok && perm;
  d += std::string("bijection/multiset ") + (perm ? "ok" : "BROKEN");

  const auto& tables = TTables::standard();
  auto layout = TableLayout::identity(tables);
  int wrong = 0;
  for (int i = 0; i < 10000; ++i) {
    if (i % 10 == 0) layout.rotate(rng);
    const Block k = random_block(rng);
    const Block pt = random_block(rng);
    if (encrypt_block(pt, expand_key(k), tables, layout).ciphertext != refaes::encrypt(pt, k)) ++wrong;
  }
  ok = ok && wrong == 0;
  d += ", transparency " + std::to_string(wrong) + "/10000 wrong";

  // 4x4 table, seven lookups given as (row, column).
  const std::vector<std::pair<std::uint32_t, std::uint32_t>> cells = {
      {0, 0}, {3, 0}, {1, 1}, {2, 1}, {0, 2}, {2, 2}, {3, 3}};
  auto small = RotationState::identity(4, 4);
  std::vector<std::uint32_t> t16(16);
  std::iota(t16.begin(), t16.end(), 0u);
  auto rows = [&](const RotationState& s) {
    std::set<std::uint32_t> r;
    for (auto [row, col] : cells) r.insert(translate(row * 4 + col, s) / 4);
    return r.size();
  };
  const auto before = rows(small);
  const std::vector<std::uint32_t> shifts = {2, 3, 0, 1};
  small = rotate_by(small, t16, shifts);
  const auto after = rows(small);
  ok = ok && before == 4 && after == 3;
  d += ", worked example rows " + std::to_string(before) + "->" + std::to_string(after);
  return {ok, d};
}

Outcome full_defense() {
  const auto t0 = Clock::now();
  // The defended batch fills the device, so the reference attack uses the same batch.
  CampaignConfig base = baseline(3001);
  base.threads = 960;
  base.samples = 2000000;
  const auto b = run_attack_campaign(base);
  const auto need = b.max_min_samples(AttackConfig::all_bytes());
  if (!need) return {false, "reference attack at 960 threads did not recover the key"};

  CampaignConfig def = base;
  def.policy = CoalescingPolicy::dynamic();
  def.mshr.mode = MshrMode::hierarchical;
  def.rotation = RotationSchedule::each(1000);
  def.samples = 10 * *need;
  def.stop_when_recovered = false;
  const auto r = run_attack_campaign(def);
  int recovered = 0;
  int final_rank1 = 0;
  for (std::uint8_t j = 0; j < 16; ++j) {
    if (r.min_samples[j]) ++recovered;
  }
  for (const auto& c : r.report.bytes) {
    if (c.rank_of_true_key == 1u) ++final_rank1;
  }
  const double dt = seconds_since(t0);
  return {recovered == 0 && dt <= 3600.0,
          "reference min-samples " + std::to_string(*need) + ", defended run " +
              std::to_string(r.samples_run) + " samples: " + std::to_string(recovered) +
              " bytes recovered, " + std::to_string(final_rank1) + " bytes at rank 1 at the end" +
              fmt(", %.0f s", dt)};
}

Outcome fisher_z_suite() {
  bool ok = true;
  for (double p : {0.0, 0.05, 0.3}) {
    for (double s : {4.0, 100.0, 1e6}) ok = ok && success_probability(p, p, s) == 0.5;
  }
  const std::vector<double> peaks = {0.02, 0.05, 0.1, 0.2, 0.3};
  const std::vector<double> sizes = {10, 30, 100, 300, 1000};
  bool mono = true;
  for (std::size_t i = 0; i < peaks.size(); ++i) {
    for (std::size_t k = 0; k < sizes.size(); ++k) {
      const double a = success_probability(peaks[i], 0.01, sizes[k]);
      if (k + 1 < sizes.size()) mono = mono && success_probability(peaks[i], 0.01, sizes[k + 1]) > a;
      if (i + 1 < peaks.size()) mono = mono && success_probability(peaks[i + 1], 0.01, sizes[k]) > a;
      mono = mono && success_probability(peaks[i], 0.015, sizes[k]) < a;
    }
  }
  const double z90 = 1.2815515655446004;
  const double oracle = 2.0 * std::pow(z90 / std::atanh(0.1), 2.0) + 3.0;
  const auto s = samples_required(0.1, 0.0, 0.9);
  const bool anchor = std::abs(static_cast<double>(s) - 330.0) <= 1.0 &&
                      std::abs(static_cast<double>(s) - oracle) <= 1.0;
  bool round = true;
  for (double p : {0.01, 0.05, 0.1, 0.3}) {
    for (double a : {0.0, 0.005}) {
      for (double alpha : {0.6, 0.9, 0.99}) {
        const auto n = samples_required(p, a, alpha);
        round = round && success_probability(p, a, static_cast<double>(n)) >= alpha &&
                (n <= 4 || success_probability(p, a, static_cast<double>(n - 1)) < alpha);
      }
    }
  }
  ok = ok && mono && anchor && round;
  return {ok, "S(0.1, 0, 0.9) = " + std::to_string(s) + fmt(" (oracle %.2f)", oracle) +
                  ", monotone " + (mono ? "yes" : "no") + ", round trip " + (round ? "yes" : "no")};
}

Outcome attenuation_agreement() {
  bool ok = true;
  std::string d;
  for (double sigma : {2.0, 60.0}) {
    CampaignConfig c = baseline(4000 + static_cast<std::uint64_t>(sigma));
    c.timing.sigma_eps = sigma;
    for (const auto& row : check_attenuation(c, 100000)) {
      d += fmt("[sigma %.0f] ", sigma) + row.name + ": formula " + fmt("%.5f", row.formula) + " measured " +
           fmt("%.5f", row.measured) + (row.relative ? fmt(" rel err %.3f", row.error) : fmt(" abs err %.5f", row.error));
      // At one rotation per 1000 kernels the expected correlation sits below the sampling
      // error of a 10^5 campaign; that row is checked absolutely and reported only.
      const bool counted = row.relative;
      if (counted) ok = ok && row.pass;
      d += counted ? (row.pass ? " ok; " : " FAILS; ") : (row.pass ? " (info, within 3 SE); " : " (info, beyond 3 SE); ");
    }
  }
  return {ok, d};
}

Outcome regression() {
  std::vector<double> x, y;
  for (int n = 1; n <= 32; ++n) {
    x.push_back(n);
    y.push_back(19.463 * n + 346.2);
  }
  const auto f = fit_linear(x, y);
  const bool planted = std::abs(f.beta1 - 19.463) < 1e-9 && std::abs(f.beta0 - 346.2) < 1e-9 &&
                       f.sigma_eps_sq < 1e-18;

  Rng rng(0x9e9);
  std::uniform_int_distribution<int> pick(1, 32);
  std::normal_distribution<double> eps(0.0, 5.0);
  Eigen::VectorXd xs(100000), ys(100000);
  for (Eigen::Index i = 0; i < xs.size(); ++i) {
    xs[i] = pick(rng);
    ys[i] = 19.463 * xs[i] + 346.2 + eps(rng);
  }
  const auto g = fit_linear(xs, ys);
  const double rel = std::abs(g.sigma_eps_sq - 25.0) / 25.0;
  const Eigen::ArrayXd resid = ys.array() - (g.beta1 * xs.array() + g.beta0);
  const double ortho = std::abs((resid * xs.array()).sum()) / (resid.abs() * xs.array().abs()).sum();
  const bool ok = planted && rel <= 0.05 && ortho <= 1e-9;
  return {ok, fmt("planted fit (%.6f, ", f.beta1) + fmt("%.6f)", f.beta0) + fmt(", sigma_eps^2 rel err %.4f", rel) +
                  fmt(", residual.x relative %.2e", ortho)};
}

Outcome determinism() {
  bool ok = true;
  std::string d;
  auto check = [&](const std::string& name, const std::function<std::string(unsigned)>& payload) {
    const std::string one = payload(1);
    bool same = true;
    for (unsigned p : {2u, 4u}) same = same && payload(p) == one;
    ok = ok && same;
    d += name + (same ? " identical; " : " DIFFERS; ");
  };

  CampaignConfig a = baseline(5001);
  a.samples = 8000;
  a.stop_when_recovered = false;
  check("attack", [&](unsigned p) { return without_meta(attack_report_json(a, run_attack_campaign(a, p))).dump(); });

  CampaignConfig h = a;
  h.threads = 960;
  h.samples = 300;
  h.policy = CoalescingPolicy::dynamic();
  h.mshr.mode = MshrMode::hierarchical;
  h.rotation = RotationSchedule::each(7);
  check("defended attack", [&](unsigned p) { return without_meta(attack_report_json(h, run_attack_campaign(h, p))).dump(); });

  CampaignConfig m = baseline(5002);
  m.microbench.reps = 200;
  check("microbench", [&](unsigned p) { return without_meta(microbench_report_json(m, run_microbench_campaign(m, p))).dump(); });

  CampaignConfig s = baseline(5003);
  s.samples = 20000;
  s.defenses = {{"baseline", json::object()},
                {"rotate_1", json::parse(R"({"rotation": {"rotate_every": 1}})")}};
  check("defend", [&](unsigned p) { return without_meta(defense_report_json(s, run_defense_sweep(s, p))).dump(); });
  return {ok, d};
}

}  // namespace

int main(int argc, char** argv) {
  struct Criterion {
    int id;
    const char* name;
    Outcome (*run)();
  };
  const std::vector<Criterion> all = {
      {1, "AES correctness", aes_vectors},
      {2, "baseline key recovery", baseline_recovery},
      {3, "microbenchmark SNR ordering", microbench_ordering},
      {4, "rho_peak ordering across defenses", rho_ordering},
      {5, "rotation properties", rotation_properties},
      {6, "combined defense resists 10x baseline samples", full_defense},
      {7, "Fisher-z success model", fisher_z_suite},
      {8, "attenuation formulas vs measurement", attenuation_agreement},
      {9, "regression estimator", regression},
      {10, "determinism across worker counts", determinism},
  };
  std::set<int> pick;
  for (int i = 1; i < argc; ++i) pick.insert(std::atoi(argv[i]));

  int failed = 0;
  for (const auto& c : all) {
    if (!pick.empty() && !pick.count(c.id)) continue;
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failed;
    std::printf("[%s] %2d %s: %s\n", o.pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
