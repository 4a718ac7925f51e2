#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <set>
#include <vector>

#include "coalab/coalescer.hpp"

using namespace coalab;

namespace {

std::vector<std::uint64_t> random_addresses(Rng& rng, std::uint64_t span_bytes, std::uint64_t base = 0) {
  std::uniform_int_distribution<std::uint64_t> pick(0, span_bytes / 4 - 1);
  std::vector<std::uint64_t> a(32);
  for (auto& x : a) x = base + 4 * pick(rng);
  return a;
}

}  // namespace

TEST_CASE("coalesce examples") {
  const std::vector<std::uint64_t> same(32, 256);
  CHECK(coalesce(same, CoalescingPolicy::fixed(64)).size() == 1);

  std::vector<std::uint64_t> stride(32);
  for (std::size_t i = 0; i < 32; ++i) stride[i] = 4 * i;
  CHECK(coalesce(stride, CoalescingPolicy::fixed(64)).size() == 2);
  const auto t32 = coalesce(stride, CoalescingPolicy::fixed(32));
  CHECK(t32.size() == 4);
  for (const auto& t : t32) CHECK(t.width_bytes == 32);

  std::array<std::uint8_t, 16> r{};
  r.fill(1);
  r[0] = 2;
  const std::vector<std::uint64_t> two = {0, 32};
  CHECK(coalesce(two, CoalescingPolicy::dynamic_with(r)).size() == 2);
  r[0] = 1;
  CHECK(coalesce(two, CoalescingPolicy::dynamic_with(r)).size() == 1);
}

TEST_CASE("coalesce errors") {
  const std::vector<std::uint64_t> misaligned = {2};
  CHECK_THROWS_AS(coalesce(misaligned, CoalescingPolicy::fixed(64)), std::invalid_argument);
  const std::vector<std::uint64_t> far = {1u << 16};
  CHECK_THROWS_AS(coalesce(far, CoalescingPolicy::fixed(64)), std::invalid_argument);
  const std::vector<std::uint64_t> ok = {0};
  CHECK_THROWS_AS(coalesce(ok, CoalescingPolicy::fixed_random()), std::invalid_argument);
  CHECK_THROWS_AS(CoalescingPolicy::fixed(48), std::invalid_argument);
  std::array<std::uint8_t, 16> bad{};
  bad.fill(3);
  CHECK_THROWS_AS(CoalescingPolicy::dynamic_with(bad), std::invalid_argument);
  CHECK_THROWS_AS(WidthDistribution({{0.5, 0.5, 0.5, 0.0}}).validate(), std::invalid_argument);
}

TEST_CASE("coalesce properties") {
  Rng rng(21);
  for (int trial = 0; trial < 2000; ++trial) {
    const auto a = random_addresses(rng, 1024, 4096);

    // Halving the width never lowers the count.
    std::size_t prev = 0;
    for (std::uint32_t w : {64u, 32u, 16u, 8u}) {
      const std::size_t n = coalesce(a, CoalescingPolicy::fixed(w)).size();
      CHECK(n >= prev);
      prev = n;
    }

    // Partition: every address falls in exactly one transaction and none is empty.
    const auto policy = CoalescingPolicy::dynamic_with(generate_r(rng, WidthDistribution::uniform()));
    const auto txns = coalesce(a, policy);
    std::vector<int> hits(txns.size(), 0);
    for (std::uint64_t x : a) {
      int owners = 0;
      for (std::size_t i = 0; i < txns.size(); ++i) {
        const auto& t = txns[i];
        const std::uint64_t lo = t.line_number * 64 + t.sub_index * t.width_bytes;
        if (x >= lo && x < lo + t.width_bytes) {
          ++owners;
          ++hits[i];
        }
      }
      CHECK(owners == 1);
    }
    CHECK(std::all_of(hits.begin(), hits.end(), [](int h) { return h > 0; }));

    // Order does not matter.
    auto shuffled = a;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    CHECK(coalesce(shuffled, policy) == txns);

    // Uniform r is the fixed width.
    for (std::uint8_t c : {1, 2, 4, 8}) {
      std::array<std::uint8_t, 16> r{};
      r.fill(c);
      CHECK(coalesce(a, CoalescingPolicy::dynamic_with(r)) ==
            coalesce(a, CoalescingPolicy::fixed(64 / c)));
    }
  }
}

TEST_CASE("fast coalescer agrees with coalesce") {
  Rng rng(22);
  std::array<Transaction, 32> out{};
  for (int trial = 0; trial < 2000; ++trial) {
    const auto policy = trial % 2 == 0 ? CoalescingPolicy::fixed(kWidths[trial / 2 % 4])
                                       : CoalescingPolicy::dynamic_with(generate_r(rng, WidthDistribution::uniform()));
    const FastCoalescer fast(policy);
    // Narrow span uses the bitset path, wide span the sorting fallback.
    const auto a = random_addresses(rng, trial % 3 == 0 ? 60000 : 1024, trial % 3 == 0 ? 0 : 2048);
    const auto ref = coalesce(a, policy);
    const std::size_t n = fast.run(a, out.data());
    CHECK(std::vector<Transaction>(out.begin(), out.begin() + n) == ref);

    // Table lookups at a line-aligned base, including rotated line phases.
    std::array<std::uint8_t, 32> idx{};
    for (auto& x : idx) x = static_cast<std::uint8_t>(rng());
    const std::uint64_t base = 64 * (16 + trial % 16);
    std::vector<std::uint64_t> addr(32);
    for (std::size_t i = 0; i < 32; ++i) addr[i] = base + 4u * idx[i];
    TxnSet set;
    fast.collect_table(base, idx, set);
    CHECK(set.count == coalesce(addr, policy).size());
    std::vector<Transaction> from_set;
    set.for_each([&](std::uint64_t line, unsigned sub) {
      from_set.push_back({line, sub, fast.width_of_line(line)});
    });
    CHECK(from_set == coalesce(addr, policy));
  }
}

TEST_CASE("sample_width and generate_r") {
  Rng rng(23);
  for (int i = 0; i < 1000; ++i) CHECK(sample_width(WidthDistribution::point_mass(64), rng) == 64);

  const auto dist = WidthDistribution::mean32();
  CHECK(dist.p[0] == doctest::Approx(0.05));
  CHECK(dist.mean_log2_width() == doctest::Approx(5.0));
  std::array<double, 4> counts{};
  const int n = 1000000;
  double sum = 0.0;
  for (int i = 0; i < n; ++i) {
    const auto w = sample_width(dist, rng);
    sum += w;
    counts[std::countr_zero(w) - 3] += 1.0;
  }
  CHECK(std::abs(counts[0] / n - 0.05) <= 0.01);
  CHECK(std::abs(sum / n - dist.mean_width()) <= 0.05 * dist.mean_width());

  Rng a(99), b(99);
  CHECK(generate_r(a) == generate_r(b));

  std::array<double, 9> freq{};
  const int draws = 100000 / 16 + 1;
  for (int i = 0; i < draws; ++i) {
    for (auto v : generate_r(rng, dist)) freq[v] += 1.0;
  }
  const double total = draws * 16.0;
  CHECK(std::abs(freq[8] / total - dist.p[0]) <= 0.02);
  CHECK(std::abs(freq[4] / total - dist.p[1]) <= 0.02);
  CHECK(std::abs(freq[2] / total - dist.p[2]) <= 0.02);
  CHECK(std::abs(freq[1] / total - dist.p[3]) <= 0.02);

  CoalescingPolicy all_ones = CoalescingPolicy::dynamic(WidthDistribution::point_mass(64));
  const auto resolved = resolve_kernel_policy(all_ones, rng);
  const auto addr = random_addresses(rng, 4096);
  CHECK(coalesce(addr, resolved) == coalesce(addr, CoalescingPolicy::fixed(64)));
}

TEST_CASE("count_lines") {
  const std::vector<std::uint8_t> same(32, 77);
  CHECK(count_lines(same, 16) == 1);
  std::vector<std::uint8_t> seq(32);
  std::iota(seq.begin(), seq.end(), 0);
  CHECK(count_lines(seq, 16) == 2);
  CHECK(count_lines(seq, 8) == 4);
  CHECK_THROWS_AS(count_lines(seq, 3), std::invalid_argument);
}
