#include "coalab/coalescer.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <stdexcept>
#include <string>

namespace coalab {
namespace {

std::size_t width_slot(std::uint32_t width_bytes) {
  for (std::size_t i = 0; i < kWidths.size(); ++i) {
    if (kWidths[i] == width_bytes) return i;
  }
  throw std::invalid_argument("coalescer: width must be 8, 16, 32 or 64 bytes, got " +
                              std::to_string(width_bytes));
}

void check_r(const std::array<std::uint8_t, 16>& r) {
  for (auto v : r) {
    if (v != 1 && v != 2 && v != 4 && v != 8) {
      throw std::invalid_argument("coalescer: r entries must be 1, 2, 4 or 8");
    }
  }
}

}  // namespace

WidthDistribution WidthDistribution::mean32() { return {{0.05, 0.15, 0.55, 0.25}}; }

WidthDistribution WidthDistribution::point_mass(std::uint32_t width_bytes) {
  WidthDistribution d{{0.0, 0.0, 0.0, 0.0}};
  d.p[width_slot(width_bytes)] = 1.0;
  return d;
}

WidthDistribution WidthDistribution::uniform() { return {{0.25, 0.25, 0.25, 0.25}}; }

double WidthDistribution::mean_width() const {
  double m = 0.0;
  for (std::size_t i = 0; i < 4; ++i) m += p[i] * kWidths[i];
  return m;
}

double WidthDistribution::mean_log2_width() const {
  double m = 0.0;
  for (std::size_t i = 0; i < 4; ++i) m += p[i] * static_cast<double>(i + 3);
  return m;
}

void WidthDistribution::validate() const {
  double sum = 0.0;
  for (double v : p) {
    if (!(v >= 0.0)) throw std::invalid_argument("width distribution: negative probability");
    sum += v;
  }
  if (std::abs(sum - 1.0) > 1e-9) {
    throw std::invalid_argument("width distribution: probabilities must sum to 1");
  }
}

CoalescingPolicy CoalescingPolicy::fixed(std::uint32_t width_bytes) {
  CoalescingPolicy p;
  p.mode = Fixed{width_bytes};
  p.validate();
  return p;
}

CoalescingPolicy CoalescingPolicy::fixed_random(WidthDistribution dist) {
  CoalescingPolicy p;
  p.mode = FixedRandomPerKernel{dist};
  p.validate();
  return p;
}

CoalescingPolicy CoalescingPolicy::dynamic(std::optional<WidthDistribution> regenerate) {
  CoalescingPolicy p;
  DynamicPerLine d;
  d.regenerate = regenerate;
  p.mode = d;
  p.validate();
  return p;
}

CoalescingPolicy CoalescingPolicy::dynamic_with(const std::array<std::uint8_t, 16>& r) {
  CoalescingPolicy p;
  p.mode = DynamicPerLine{r, std::nullopt};
  p.validate();
  return p;
}

void CoalescingPolicy::validate() const {
  if (line_size_bytes != 64) {
    throw std::invalid_argument("coalescer: line size must be 64 bytes");
  }
  if (memory_bytes == 0 || memory_bytes % line_size_bytes != 0) {
    throw std::invalid_argument("coalescer: memory size must be a positive multiple of the line");
  }
  if (const auto* f = std::get_if<Fixed>(&mode)) {
    width_slot(f->width_bytes);
  } else if (const auto* fr = std::get_if<FixedRandomPerKernel>(&mode)) {
    fr->distribution.validate();
  } else {
    const auto& d = std::get<DynamicPerLine>(mode);
    check_r(d.r);
    if (d.regenerate) d.regenerate->validate();
  }
}

CoalescingPolicy resolve_kernel_policy(const CoalescingPolicy& policy, Rng& rng) {
  CoalescingPolicy out = policy;
  if (const auto* fr = std::get_if<FixedRandomPerKernel>(&policy.mode)) {
    out.mode = Fixed{sample_width(fr->distribution, rng)};
  } else if (const auto* d = std::get_if<DynamicPerLine>(&policy.mode); d && d->regenerate) {
    out.mode = DynamicPerLine{generate_r(rng, *d->regenerate), std::nullopt};
  }
  return out;
}

std::vector<Transaction> coalesce(std::span<const std::uint64_t> addresses,
                                  const CoalescingPolicy& policy) {
  policy.validate();
  if (!policy.resolved()) {
    throw std::invalid_argument("coalesce: fixed-random policy must be resolved per kernel first");
  }
  std::vector<Transaction> out;
  out.reserve(addresses.size());
  for (std::uint64_t a : addresses) {
    if (a % 4 != 0) throw std::invalid_argument("coalesce: address not 4-byte aligned");
    if (a >= policy.memory_bytes) {
      throw std::invalid_argument("coalesce: address beyond modeled memory (misconfigured layout)");
    }
    const std::uint64_t line = a / policy.line_size_bytes;
    const std::uint32_t offset = static_cast<std::uint32_t>(a % policy.line_size_bytes);
    std::uint32_t width = 0;
    if (const auto* f = std::get_if<Fixed>(&policy.mode)) {
      width = f->width_bytes;
    } else {
      width = policy.line_size_bytes / std::get<DynamicPerLine>(policy.mode).r[line % 16];
    }
    out.push_back({line, offset / width, width});
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::uint32_t sample_width(const WidthDistribution& dist, Rng& rng) {
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  double acc = 0.0;
  for (std::size_t i = 0; i < 3; ++i) {
    acc += dist.p[i];
    if (u < acc) return kWidths[i];
  }
  // Remaining mass (and any rounding slack) goes to the last width with p > 0.
  for (std::size_t i = 4; i-- > 0;) {
    if (dist.p[i] > 0.0) return kWidths[i];
  }
  return kWidths[3];
}

std::array<std::uint8_t, 16> generate_r(Rng& rng, const WidthDistribution& dist) {
  std::array<std::uint8_t, 16> r{};
  for (auto& v : r) v = static_cast<std::uint8_t>(64 / sample_width(dist, rng));
  return r;
}

std::uint32_t count_lines(std::span<const std::uint8_t> indices, std::uint32_t elements_per_txn) {
  if (elements_per_txn == 0 || !std::has_single_bit(elements_per_txn)) {
    throw std::invalid_argument("count_lines: elements per transaction must be a power of two");
  }
  const int shift = std::countr_zero(elements_per_txn);
  std::array<std::uint64_t, 4> seen{};
  for (std::uint8_t idx : indices) {
    const unsigned g = static_cast<unsigned>(idx) >> shift;
    seen[g >> 6] |= std::uint64_t{1} << (g & 63);
  }
  return static_cast<std::uint32_t>(std::popcount(seen[0]) + std::popcount(seen[1]) +
                                    std::popcount(seen[2]) + std::popcount(seen[3]));
}

FastCoalescer::FastCoalescer(const CoalescingPolicy& policy) {
  policy.validate();
  if (!policy.resolved()) {
    throw std::invalid_argument("coalescer: fixed-random policy must be resolved per kernel first");
  }
  memory_bytes_ = policy.memory_bytes;
  line_shift_ = static_cast<std::uint32_t>(std::countr_zero(policy.line_size_bytes));
  for (std::size_t i = 0; i < 16; ++i) {
    std::uint32_t width = 0;
    if (const auto* f = std::get_if<Fixed>(&policy.mode)) {
      width = f->width_bytes;
    } else {
      width = policy.line_size_bytes / std::get<DynamicPerLine>(policy.mode).r[i];
    }
    sub_shift_[i] = static_cast<std::uint8_t>(std::countr_zero(width));
  }
  for (unsigned x = 0; x < 256; ++x) table_bit_[x] = table_bit(0, x);
}

std::uint8_t FastCoalescer::table_bit(unsigned rot, unsigned x) const {
  // Element x of a line-aligned 256-entry table sits in line x / 16 of the table.
  const unsigned l = x >> 4;
  const unsigned elem_shift = sub_shift_[(l + rot) & 15] - 2u;
  return static_cast<std::uint8_t>(l * 8 + ((x & 15u) >> elem_shift));
}

void FastCoalescer::check(std::uint64_t lo, std::uint64_t hi, std::uint64_t misaligned) const {
  (void)lo;
  if (misaligned != 0) throw std::invalid_argument("coalesce: address not 4-byte aligned");
  if (hi >= memory_bytes_) {
    throw std::invalid_argument("coalesce: address beyond modeled memory (misconfigured layout)");
  }
}

bool FastCoalescer::collect(std::span<const std::uint64_t> addresses, TxnSet& set) const {
  if (addresses.empty()) {
    set = {};
    return true;
  }
  std::uint64_t lo = addresses[0];
  std::uint64_t hi = addresses[0];
  std::uint64_t bad = 0;
  for (std::uint64_t a : addresses) {
    lo = std::min(lo, a);
    hi = std::max(hi, a);
    bad |= a & 3;
  }
  check(lo, hi, bad);
  const std::uint64_t base_line = lo >> line_shift_;
  if ((hi >> line_shift_) - base_line >= 32) return false;

  const std::uint64_t line_mask = (std::uint64_t{1} << line_shift_) - 1;
  std::array<std::uint64_t, 4> seen{};
  for (std::uint64_t a : addresses) {
    const std::uint64_t line = a >> line_shift_;
    const unsigned sub = static_cast<unsigned>((a & line_mask) >> sub_shift_[line & 15]);
    const unsigned bit = static_cast<unsigned>(line - base_line) * 8 + sub;
    seen[bit >> 6] |= std::uint64_t{1} << (bit & 63);
  }
  set.base_line = base_line;
  set.bits = seen;
  set.count = static_cast<std::uint32_t>(std::popcount(seen[0]) + std::popcount(seen[1]) +
                                         std::popcount(seen[2]) + std::popcount(seen[3]));
  return true;
}

void FastCoalescer::collect_table(std::uint64_t base, std::span<const std::uint8_t> idx,
                                  TxnSet& set) const {
  if (base % 64 != 0) throw std::invalid_argument("coalesce: table base must be line-aligned");
  check(base, base + 1023, 0);
  // 256 elements of 4 bytes cover 16 lines, so every lookup fits the 32-line window.
  const std::uint64_t base_line = base >> line_shift_;
  const unsigned rot = static_cast<unsigned>(base_line & 15);
  std::uint64_t seen[2] = {0, 0};
  for (std::uint8_t x : idx) {
    const unsigned bit = rot == 0 ? table_bit_[x] : table_bit(rot, x);
    seen[bit >> 6] |= std::uint64_t{1} << (bit & 63);
  }
  set.base_line = base_line;
  set.bits = {seen[0], seen[1], 0, 0};
  set.count = static_cast<std::uint32_t>(std::popcount(seen[0]) + std::popcount(seen[1]));
}

std::size_t FastCoalescer::run(std::span<const std::uint64_t> addresses, Transaction* out) const {
  TxnSet set;
  if (!collect(addresses, set)) return run_sorted(addresses, out);
  std::size_t n = 0;
  set.for_each([&](std::uint64_t line, unsigned sub) { out[n++] = {line, sub, width_of_line(line)}; });
  return n;
}

std::size_t FastCoalescer::run_sorted(std::span<const std::uint64_t> addresses,
                                      Transaction* out) const {
  const std::uint64_t line_mask = (std::uint64_t{1} << line_shift_) - 1;
  std::size_t n = 0;
  for (std::uint64_t a : addresses) {
    const std::uint64_t line = a >> line_shift_;
    const std::uint8_t s = sub_shift_[line & 15];
    out[n++] = {line, static_cast<std::uint32_t>((a & line_mask) >> s), 1u << s};
  }
  std::sort(out, out + n);
  return static_cast<std::size_t>(std::unique(out, out + n) - out);
}

}  // namespace coalab
