#include "coalab/attack.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <stdexcept>

#include "coalab/stats.hpp"

namespace coalab {

std::vector<std::uint8_t> AttackConfig::all_bytes() {
  std::vector<std::uint8_t> v(16);
  for (std::uint8_t i = 0; i < 16; ++i) v[i] = i;
  return v;
}

void AttackConfig::validate() const {
  if (elements_per_txn == 0 || !std::has_single_bit(elements_per_txn) || elements_per_txn > 256) {
    throw std::invalid_argument("attack: elements_per_txn must be a power of two <= 256");
  }
  if (num_samples < 10) throw std::invalid_argument("attack: need at least 10 samples");
  if (target_bytes.empty()) throw std::invalid_argument("attack: no target bytes");
  std::array<bool, 16> seen{};
  for (auto b : target_bytes) {
    if (b > 15) throw std::invalid_argument("attack: byte position must be 0..15");
    if (seen[b]) throw std::invalid_argument("attack: duplicate byte position");
    seen[b] = true;
  }
  if (informed) informed_distribution.validate();
}

double CorrelationReport::rho_peak() const {
  const std::uint8_t k = true_key.value_or(best_guess);
  return std::abs(correlations[k]);
}

double CorrelationReport::rho_ave() const {
  const std::uint8_t k = true_key.value_or(best_guess);
  double s = 0.0;
  for (std::size_t g = 0; g < 256; ++g) {
    if (g != k) s += std::abs(correlations[g]);
  }
  return s / 255.0;
}

double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) {
    throw std::invalid_argument("pearson: need two equal-length vectors of >= 2 values");
  }
  const Eigen::Map<const Eigen::ArrayXd> a(x.data(), static_cast<Eigen::Index>(x.size()));
  const Eigen::Map<const Eigen::ArrayXd> b(y.data(), static_cast<Eigen::Index>(y.size()));
  const Eigen::ArrayXd da = a - a.mean();
  const Eigen::ArrayXd db = b - b.mean();
  const double saa = (da * da).sum();
  const double sbb = (db * db).sum();
  if (saa == 0.0 || sbb == 0.0) throw ZeroVarianceError("pearson: constant input");
  const double r = (da * db).sum() / std::sqrt(saa * sbb);
  return std::clamp(r, -1.0, 1.0);
}

namespace {

double expected_count(std::span<const std::uint8_t> idx, const AttackConfig& config) {
  if (!config.informed) return count_lines(idx, config.elements_per_txn);
  double e = 0.0;
  for (std::size_t i = 0; i < kWidths.size(); ++i) {
    const double p = config.informed_distribution.p[i];
    if (p > 0.0) e += p * count_lines(idx, kWidths[i] / 4);
  }
  return e;
}

}  // namespace

double predict_count(const TimingSample& sample, std::uint8_t byte_pos, std::uint8_t key_guess,
                     const AttackConfig& config) {
  if (byte_pos > 15) throw std::invalid_argument("predict_count: byte position must be 0..15");
  const auto& inv = TTables::standard().inv_t4_byte;
  const std::uint32_t W = std::max<std::uint32_t>(sample.warps, 1);
  double total = 0.0;
  std::vector<std::uint8_t> idx;
  for (std::uint32_t w = 0; w < W; ++w) {
    idx.clear();
    for (std::size_t b = w; b < sample.ciphertexts.size(); b += W) {
      idx.push_back(last_round_index(sample.ciphertexts[b][byte_pos], key_guess, inv));
    }
    if (!idx.empty()) total += expected_count(idx, config);
  }
  return total;
}

std::uint32_t rank_of(const std::array<double, 256>& r, std::uint8_t guess) {
  const double a = std::abs(r[guess]);
  std::uint32_t rank = 1;
  for (std::size_t g = 0; g < 256; ++g) {
    const double b = std::abs(r[g]);
    if (b > a || (b == a && g < guess)) ++rank;
  }
  return rank;
}

AttackAccumulator::AttackAccumulator(AttackConfig config) : config_(std::move(config)) {
  config_.validate();
  slot_.assign(16, -1);
  sums_.resize(config_.target_bytes.size());
  for (std::size_t i = 0; i < config_.target_bytes.size(); ++i) {
    slot_[config_.target_bytes[i]] = static_cast<std::int8_t>(i);
  }
  const std::uint32_t lines = 256 / config_.elements_per_txn;
  mask_bits_ = config_.informed || lines > 64 ? 0 : (lines <= 16 ? 16 : lines <= 32 ? 32 : 64);
  if (mask_bits_ != 0) {
    const auto& inv = TTables::standard().inv_t4_byte;
    const int shift = std::countr_zero(config_.elements_per_txn);
    auto fill = [&](auto& bits) {
      using Mask = typename std::decay_t<decltype(bits)>::value_type;
      bits.resize(256 * 256);
      for (std::uint32_t x = 0; x < 256; ++x) {
        for (std::uint32_t g = 0; g < 256; ++g) {
          bits[x * 256 + g] = static_cast<Mask>(Mask{1} << (inv[x ^ g] >> shift));
        }
      }
    };
    if (mask_bits_ == 16) fill(bits16_);
    else if (mask_bits_ == 32) fill(bits32_);
    else fill(bits64_);
  }
}

namespace {

// Branch-free popcount the compiler can vectorize (no hardware popcnt assumed).
template <class Mask>
inline unsigned swar_popcount(Mask v) {
  std::uint64_t x = v;
  x = x - ((x >> 1) & 0x5555555555555555ULL);
  x = (x & 0x3333333333333333ULL) + ((x >> 2) & 0x3333333333333333ULL);
  x = (x + (x >> 4)) & 0x0f0f0f0f0f0f0f0fULL;
  return static_cast<unsigned>((x * 0x0101010101010101ULL) >> 56);
}

template <class Mask>
void masks_for_warp(const std::vector<Mask>& bits, const std::array<std::uint64_t, 4>& xs,
                    std::array<double, 256>& out) {
  std::array<Mask, 256> mask{};
  for (unsigned wd = 0; wd < 4; ++wd) {
    std::uint64_t set = xs[wd];
    while (set != 0) {
      const unsigned x = wd * 64 + static_cast<unsigned>(std::countr_zero(set));
      set &= set - 1;
      const Mask* row = bits.data() + static_cast<std::size_t>(x) * 256;
      for (std::size_t g = 0; g < 256; ++g) mask[g] |= row[g];
    }
  }
  for (std::size_t g = 0; g < 256; ++g) out[g] += swar_popcount(mask[g]);
}

}  // namespace

void AttackAccumulator::predict(std::span<const Block> cts, std::uint32_t warps,
                                std::uint8_t byte_pos, std::array<double, 256>& out) const {
  out.fill(0.0);
  const std::uint32_t W = std::max<std::uint32_t>(warps, 1);
  if (mask_bits_ == 0) {
    const auto& inv = TTables::standard().inv_t4_byte;
    std::vector<std::uint8_t> idx;
    for (std::uint32_t w = 0; w < W; ++w) {
      for (std::size_t g = 0; g < 256; ++g) {
        idx.clear();
        for (std::size_t b = w; b < cts.size(); b += W) {
          idx.push_back(last_round_index(cts[b][byte_pos], static_cast<std::uint8_t>(g), inv));
        }
        if (!idx.empty()) out[g] += expected_count(idx, config_);
      }
    }
    return;
  }
  for (std::uint32_t w = 0; w < W; ++w) {
    // Only distinct ciphertext bytes matter: duplicates map to the same line.
    std::array<std::uint64_t, 4> xs{};
    bool any = false;
    for (std::size_t b = w; b < cts.size(); b += W) {
      const std::uint8_t x = cts[b][byte_pos];
      xs[x >> 6] |= std::uint64_t{1} << (x & 63);
      any = true;
    }
    if (!any) continue;
    if (mask_bits_ == 16) {
      masks_for_warp(bits16_, xs, out);
    } else if (mask_bits_ == 32) {
      masks_for_warp(bits32_, xs, out);
    } else {
      masks_for_warp(bits64_, xs, out);
    }
  }
}

void AttackAccumulator::add(const TimingSample& sample) {
  add(sample.ciphertexts, sample.warps, sample.time);
}

void AttackAccumulator::add(std::span<const Block> ciphertexts, std::uint32_t warps, double time) {
  if (count_ == 0) t_ref_ = time;
  const double t = time - t_ref_;
  ++count_;
  sum_t_ += t;
  sum_tt_ += t * t;
  std::array<double, 256> n{};
  for (std::size_t i = 0; i < config_.target_bytes.size(); ++i) {
    predict(ciphertexts, warps, config_.target_bytes[i], n);
    Sums& s = sums_[i];
    for (std::size_t g = 0; g < 256; ++g) {
      s.n[g] += n[g];
      s.nn[g] += n[g] * n[g];
      s.tn[g] += t * n[g];
    }
  }
}

CorrelationReport AttackAccumulator::report(std::uint8_t byte_pos,
                                            std::optional<std::uint8_t> true_key) const {
  if (byte_pos > 15 || slot_[byte_pos] < 0) {
    throw std::invalid_argument("attack: byte " + std::to_string(byte_pos) + " was not targeted");
  }
  if (count_ < 2) throw std::invalid_argument("attack: need at least 2 samples");
  const Sums& s = sums_[static_cast<std::size_t>(slot_[byte_pos])];
  const double m = static_cast<double>(count_);
  const double vt = m * sum_tt_ - sum_t_ * sum_t_;

  CorrelationReport rep;
  rep.byte_pos = byte_pos;
  rep.samples_used = count_;
  rep.true_key = true_key;
  for (std::size_t g = 0; g < 256; ++g) {
    const double vn = m * s.nn[g] - s.n[g] * s.n[g];
    if (vn <= 0.0 || vt <= 0.0) {
      rep.zero_variance.set(g);
      rep.correlations[g] = 0.0;
      continue;
    }
    rep.correlations[g] = std::clamp((m * s.tn[g] - sum_t_ * s.n[g]) / std::sqrt(vn * vt), -1.0, 1.0);
  }
  std::size_t best = 0;
  for (std::size_t g = 1; g < 256; ++g) {
    if (std::abs(rep.correlations[g]) > std::abs(rep.correlations[best])) best = g;
  }
  rep.best_guess = static_cast<std::uint8_t>(best);
  if (true_key) rep.rank_of_true_key = rank_of(rep.correlations, *true_key);
  return rep;
}

CorrelationReport attack_byte(std::span<const TimingSample> samples, std::uint8_t byte_pos,
                              const AttackConfig& config, std::optional<std::uint8_t> true_key) {
  if (samples.size() < 2) throw std::invalid_argument("attack_byte: need at least 2 samples");
  AttackConfig c = config;
  c.target_bytes = {byte_pos};
  AttackAccumulator acc(c);
  for (const auto& s : samples) acc.add(s);
  return acc.report(byte_pos, true_key);
}

AttackReport assemble_report(const AttackAccumulator& acc, const std::optional<Block>& true_round10,
                             const std::optional<std::pair<Block, Block>>& known_pair) {
  AttackReport out;
  out.samples_used = acc.samples();
  bool all_rank1 = true;
  for (std::uint8_t b : acc.config().target_bytes) {
    std::optional<std::uint8_t> truth;
    if (true_round10) truth = (*true_round10)[b];
    auto rep = acc.report(b, truth);
    out.recovered_round10[b] = rep.best_guess;
    if (rep.rank_of_true_key != 1u) all_rank1 = false;
    out.bytes.push_back(std::move(rep));
  }
  if (acc.config().target_bytes.size() == 16) {
    out.recovered_master = invert_schedule(out.recovered_round10);
    if (true_round10) {
      out.success = all_rank1;
    } else if (known_pair) {
      out.success = encrypt(known_pair->first, expand_key(*out.recovered_master)) == known_pair->second;
    }
  }
  return out;
}

AttackReport attack_full(std::span<const TimingSample> samples, const AttackConfig& config,
                         const std::optional<Block>& true_round10) {
  if (samples.size() < 2) throw std::invalid_argument("attack_full: need at least 2 samples");
  AttackAccumulator acc(config);
  for (const auto& s : samples) acc.add(s);
  std::optional<std::pair<Block, Block>> pair;
  if (!samples.front().plaintexts.empty()) {
    pair = std::make_pair(samples.front().plaintexts.front(), samples.front().ciphertexts.front());
  }
  return assemble_report(acc, true_round10, pair);
}

Rank1Tracker::Rank1Tracker(const Block& true_round10, std::vector<std::uint8_t> bytes,
                           std::uint32_t streak)
    : truth_(true_round10), bytes_(std::move(bytes)), streak_(streak) {
  if (streak_ == 0) throw std::invalid_argument("rank tracker: streak must be >= 1");
}

void Rank1Tracker::probe(const AttackAccumulator& acc) {
  for (std::uint8_t b : bytes_) {
    if (result_[b]) continue;
    const auto rep = acc.report(b, truth_[b]);
    if (rep.rank_of_true_key == 1u) {
      if (run_[b]++ == 0) run_start_[b] = acc.samples();
      if (run_[b] >= streak_) result_[b] = run_start_[b];
    } else {
      run_[b] = 0;
    }
  }
}

std::optional<std::uint64_t> Rank1Tracker::min_samples(std::uint8_t byte_pos) const {
  return result_.at(byte_pos);
}

bool Rank1Tracker::all_recovered() const {
  return std::all_of(bytes_.begin(), bytes_.end(), [this](std::uint8_t b) { return result_[b].has_value(); });
}

std::optional<std::uint64_t> min_samples_to_rank1(std::span<const TimingSample> samples,
                                                  std::uint8_t byte_pos, const AttackConfig& config,
                                                  std::uint64_t step, std::uint8_t true_key_byte) {
  if (step == 0) throw std::invalid_argument("min_samples_to_rank1: step must be >= 1");
  AttackConfig c = config;
  c.target_bytes = {byte_pos};
  AttackAccumulator acc(c);
  Block truth{};
  truth[byte_pos] = true_key_byte;
  Rank1Tracker tracker(truth, {byte_pos});
  for (std::size_t i = 0; i < samples.size(); ++i) {
    acc.add(samples[i]);
    if (acc.samples() % step == 0 && acc.samples() >= 2) {
      tracker.probe(acc);
      if (tracker.all_recovered()) break;
    }
  }
  return tracker.min_samples(byte_pos);
}

}  // namespace coalab
