#include <doctest.h>

#include <vector>

#include "coalab/memsim.hpp"
#include "coalab/stats.hpp"

using namespace coalab;

namespace {

TimingParams quiet() {
  TimingParams p;
  p.sigma_eps = 0.0;
  p.p_miss = 0.0;
  return p;
}

Block random_block(Rng& rng) {
  Block b{};
  for (auto& x : b) x = static_cast<std::uint8_t>(rng());
  return b;
}

struct Fixture {
  const TTables& tables = TTables::standard();
  TableLayout layout = TableLayout::identity(TTables::standard());
  KeySchedule ks = expand_key(block_from_hex("2b7e151628aed2a6abf7158809cf4f3c"));
};

}  // namespace

TEST_CASE("identical plaintexts in one warp hit the analytic minimum") {
  Fixture f;
  Rng rng(41);
  const std::vector<Block> pts(32, random_block(rng));
  KernelDiagnostics d;
  const auto s = simulate_kernel(pts, f.ks, f.tables, f.layout, CoalescingPolicy::fixed(64), {},
                                 quiet(), rng, &d);
  CHECK(d.transactions == kRounds * kLookupsPerRound);
  CHECK(s.time == analytic_min_time(kRounds * kLookupsPerRound, quiet()));
  CHECK(s.warps == 1);
  for (auto& ct : s.ciphertexts) CHECK(ct == encrypt(pts[0], f.ks));
}

TEST_CASE("time is an increasing affine function of transactions without noise") {
  Fixture f;
  Rng rng(42);
  const auto p = quiet();
  std::vector<double> x, y;
  for (int i = 0; i < 300; ++i) {
    std::vector<Block> pts(1 + i % 32);
    for (auto& b : pts) b = random_block(rng);
    KernelDiagnostics d;
    const auto s = simulate_kernel(pts, f.ks, f.tables, f.layout, CoalescingPolicy::fixed(64), {}, p, rng, &d);
    CHECK(s.time == doctest::Approx(p.base_cycles + d.transactions * (p.c_issue + p.h)));
    x.push_back(static_cast<double>(d.transactions));
    y.push_back(s.time);
  }
  const auto fit = fit_linear(x, y);
  CHECK(fit.beta1 == doctest::Approx(p.c_issue + p.h));
  CHECK(fit.r_squared == doctest::Approx(1.0));
}

TEST_CASE("runs are deterministic for a seed") {
  Fixture f;
  Rng gen(43);
  std::vector<Block> pts(960);
  for (auto& b : pts) b = random_block(gen);
  for (double sigma : {0.0, 2.0}) {
    TimingParams p;
    p.sigma_eps = sigma;
    for (auto mode : {MshrMode::per_sm, MshrMode::hierarchical}) {
      Rng a(7), b(7);
      const auto s1 = simulate_kernel(pts, f.ks, f.tables, f.layout, CoalescingPolicy::dynamic(), {mode}, p, a);
      const auto s2 = simulate_kernel(pts, f.ks, f.tables, f.layout, CoalescingPolicy::dynamic(), {mode}, p, b);
      CHECK(s1.time == s2.time);
      CHECK(s1.ciphertexts == s2.ciphertexts);
    }
  }
}

TEST_CASE("hierarchical MSHR shortens cross-SM misses and never lengthens any") {
  Fixture f;
  TimingParams p;
  p.sigma_eps = 0.0;
  p.p_miss = 0.3;
  const double full = p.miss_latency();
  bool shortened = false;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng gen(seed);
    // Two warps on two SMs encrypting the same block: the same lines at nearly the same time.
    const std::vector<Block> pts(64, random_block(gen));
    KernelDiagnostics per, hier;
    Rng a(seed), b(seed);
    const auto s1 = simulate_kernel(pts, f.ks, f.tables, f.layout, CoalescingPolicy::fixed(64),
                                    {MshrMode::per_sm}, p, a, &per);
    const auto s2 = simulate_kernel(pts, f.ks, f.tables, f.layout, CoalescingPolicy::fixed(64),
                                    {MshrMode::hierarchical}, p, b, &hier);
    CHECK(per.misses > 0);
    CHECK(per.unified_merges == 0);
    CHECK(per.min_miss_latency == full);
    CHECK(per.max_miss_latency == full);
    CHECK(hier.max_miss_latency <= full);
    CHECK(s1.ciphertexts == s2.ciphertexts);
    if (hier.unified_merges > 0 && hier.min_miss_latency < full) shortened = true;
  }
  CHECK(shortened);
}

TEST_CASE("MSHR capacity is respected") {
  Fixture f;
  TimingParams p;
  p.p_miss = 1.0;
  Rng rng(44);
  std::vector<Block> pts(960);
  for (auto& b : pts) b = random_block(rng);
  for (auto mode : {MshrMode::per_sm, MshrMode::hierarchical}) {
    KernelDiagnostics d;
    simulate_kernel(pts, f.ks, f.tables, f.layout, CoalescingPolicy::fixed(8), {mode}, p, rng, &d);
    CHECK(d.max_inflight_per_sm >= 1);
    CHECK(d.max_inflight_per_sm <= SimConfig{}.mshr_entries_per_sm);
  }
}

TEST_CASE("estimate_p_merge") {
  TimingParams p;
  p.p_miss = 0.2;
  CHECK(estimate_p_merge({MshrMode::per_sm}, {960, true}, 5, p, 1) == 0.0);
  CHECK(estimate_p_merge({MshrMode::hierarchical}, {32, true}, 20, p, 1) == 0.0);
  CHECK(estimate_p_merge({MshrMode::hierarchical}, {960, true}, 5, p, 1) > 0.0);
}

TEST_CASE("microbenchmark extremes and regression") {
  const auto p = quiet();
  Rng rng(45);
  const auto one = run_microbenchmark(1, CoalescingPolicy::fixed(64), 3, p, rng);
  CHECK(one.size() == 3);
  for (const auto& pt : one) CHECK(pt.time == analytic_min_time(1, p));
  // Lane t reads float t mod n: 32 floats span 128 bytes, so 32 / 16 / 8 / 4 transactions.
  for (std::uint32_t w : kWidths) {
    const auto all = run_microbenchmark(32, CoalescingPolicy::fixed(w), 1, p, rng);
    CHECK(all[0].transactions == 128 / w);
    CHECK(all[0].time == p.base_cycles + (128.0 / w) * (p.c_issue + p.h));
  }
  std::vector<double> x, y;
  for (std::uint32_t n = 1; n <= 32; ++n) {
    for (const auto& pt : run_microbenchmark(n, CoalescingPolicy::fixed(8), 2, p, rng)) {
      x.push_back(pt.transactions);
      y.push_back(pt.time);
    }
  }
  CHECK(fit_linear(x, y).r_squared == 1.0);
  CHECK_THROWS_AS(run_microbenchmark(0, CoalescingPolicy::fixed(64), 1, p, rng), std::invalid_argument);
  CHECK_THROWS_AS(run_microbenchmark(33, CoalescingPolicy::fixed(64), 1, p, rng), std::invalid_argument);
}

TEST_CASE("noise is positive and centered") {
  TimingParams p;
  p.sigma_eps = 2.0;
  p.p_miss = 0.0;
  Rng rng(46);
  const auto pts = run_microbenchmark(1, CoalescingPolicy::fixed(64), 20000, p, rng);
  double mean = 0.0, sq = 0.0;
  for (const auto& pt : pts) {
    CHECK(pt.time > 0.0);
    mean += pt.time;
    sq += pt.time * pt.time;
  }
  mean /= pts.size();
  const double var = sq / pts.size() - mean * mean;
  CHECK(mean == doctest::Approx(analytic_min_time(1, p)).epsilon(0.01));
  CHECK(var == doctest::Approx(4.0).epsilon(0.05));
}

TEST_CASE("parameter validation") {
  TimingParams p;
  p.m0 = 1.0;
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
  p = {};
  p.sigma_eps = -1.0;
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
  Fixture f;
  Rng rng(47);
  const std::vector<Block> too_many(961);
  CHECK_THROWS_AS(simulate_kernel(too_many, f.ks, f.tables, f.layout, CoalescingPolicy::fixed(64), {}, {}, rng),
                  std::invalid_argument);
}
