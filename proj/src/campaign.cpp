#include "coalab/campaign.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <thread>

namespace coalab {
namespace {

Block random_block(Rng& rng) {
  Block b{};
  for (std::size_t i = 0; i < 16; i += 8) {
    const std::uint64_t v = rng();
    for (std::size_t k = 0; k < 8; ++k) b[i + k] = static_cast<std::uint8_t>(v >> (8 * k));
  }
  return b;
}

// Splits [0, n) into `parallel` contiguous chunks and runs fn(begin, end, worker).
template <class Fn>
void fan_out(std::size_t n, unsigned parallel, Fn&& fn) {
  const unsigned p = std::max(1u, std::min<unsigned>(parallel, static_cast<unsigned>(std::max<std::size_t>(n, 1))));
  if (p == 1) {
    fn(std::size_t{0}, n, 0u);
    return;
  }
  std::vector<std::jthread> pool;
  std::vector<std::exception_ptr> errors(p);
  for (unsigned w = 0; w < p; ++w) {
    const std::size_t b = n * w / p;
    const std::size_t e = n * (w + 1) / p;
    pool.emplace_back([&, b, e, w] {
      try {
        fn(b, e, w);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  pool.clear();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace

Block campaign_key(const CampaignConfig& config) {
  if (config.key) return *config.key;
  Rng rng = make_rng(config.seed, Stream::key, 0);
  return random_block(rng);
}

CampaignRunner::CampaignRunner(CampaignConfig config, unsigned parallel)
    : cfg_(std::move(config)), parallel_(std::max(1u, parallel)) {
  cfg_.validate();
  key_ = campaign_key(cfg_);
  ks_ = expand_key(key_);
}

double CampaignRunner::rotation_cost() const {
  // 16 lanes, one per column; each of the 16 row steps reads and writes one line.
  return cfg_.timing.base_cycles + 32.0 * (cfg_.timing.c_issue + cfg_.timing.h);
}

std::uint64_t CampaignRunner::run(std::uint64_t count, const SampleSink& sink) {
  const TTables& tables = TTables::standard();
  const std::uint64_t block = std::max<std::uint64_t>(64, 131072 / cfg_.threads);
  const std::optional<std::uint64_t> F = cfg_.rotation.every;
  const double rot_cost = rotation_cost();

  TableLayout current = TableLayout::identity(tables);
  std::uint64_t current_epoch = 0;
  std::vector<KernelSimulator> sims(parallel_, KernelSimulator(cfg_.sim));
  std::vector<TimingSample> samples;
  std::vector<KernelDiagnostics> diags;
  std::vector<TableLayout> layouts;

  for (std::uint64_t start = 0; start < count; start += block) {
    const std::uint64_t n = std::min(block, count - start);
    // Epoch e covers samples [e*F, (e+1)*F): a rotation fires after sample counter
    // c = (e+1)*F and the next sample sees the new layout.
    const std::uint64_t first_epoch = F ? start / *F : 0;
    const std::uint64_t last_epoch = F ? (start + n - 1) / *F : 0;
    layouts.clear();
    while (current_epoch < first_epoch) {
      Rng rng = make_rng(cfg_.seed, Stream::rotation, current_epoch + 1);
      current.rotate(rng, cfg_.rotation_draw);
      ++current_epoch;
    }
    layouts.push_back(current);
    while (current_epoch < last_epoch) {
      Rng rng = make_rng(cfg_.seed, Stream::rotation, current_epoch + 1);
      current.rotate(rng, cfg_.rotation_draw);
      ++current_epoch;
      layouts.push_back(current);
    }

    samples.resize(n);
    diags.resize(n);
    fan_out(n, parallel_, [&](std::size_t b, std::size_t e, unsigned w) {
      std::vector<Block> pts(cfg_.threads);
      for (std::size_t k = b; k < e; ++k) {
        const std::uint64_t i = start + k;
        Rng rng = make_rng(cfg_.seed, Stream::sample, i);
        for (auto& p : pts) p = random_block(rng);
        const TableLayout& layout = layouts[F ? i / *F - first_epoch : 0];
        samples[k] = sims[w].run(pts, ks_, tables, layout, cfg_.policy, cfg_.mshr, cfg_.timing, rng,
                                 &diags[k]);
        samples[k].overhead = F && should_rotate(i + 1, cfg_.rotation) ? rot_cost : 0.0;
      }
    });
    for (std::uint64_t k = 0; k < n; ++k) {
      if (!sink(start + k, samples[k], diags[k])) return start + k + 1;
    }
  }
  return count;
}

std::optional<std::uint64_t> AttackCampaignResult::max_min_samples(
    const std::vector<std::uint8_t>& bytes) const {
  std::uint64_t worst = 0;
  for (auto b : bytes) {
    if (!min_samples[b]) return std::nullopt;
    worst = std::max(worst, *min_samples[b]);
  }
  return worst;
}

AttackCampaignResult run_attack_campaign(const CampaignConfig& config, unsigned parallel,
                                         const SampleSink& observer) {
  CampaignRunner runner(config, parallel);
  AttackCampaignResult out;
  out.key = runner.key();
  out.round10 = runner.schedule().last();

  AttackAccumulator acc(config.attack);
  Rank1Tracker tracker(out.round10, config.attack.target_bytes, config.streak);
  double sum_time = 0.0;
  double sum_overhead = 0.0;
  std::optional<std::pair<Block, Block>> known;
  out.samples_run = runner.run(config.samples, [&](std::uint64_t i, const TimingSample& s,
                                                   const KernelDiagnostics& d) {
    if (!known) known = std::make_pair(s.plaintexts.front(), s.ciphertexts.front());
    acc.add(s);
    sum_time += s.time;
    sum_overhead += s.overhead;
    if (observer && !observer(i, s, d)) return false;
    if (acc.samples() % config.step == 0) {
      tracker.probe(acc);
      if (config.stop_when_recovered && tracker.all_recovered()) return false;
    }
    return true;
  });
  for (auto b : config.attack.target_bytes) out.min_samples[b] = tracker.min_samples(b);
  out.report = assemble_report(acc, out.round10, known);
  const double m = static_cast<double>(out.samples_run);
  out.mean_time = sum_time / m;
  out.mean_overhead = sum_overhead / m;
  return out;
}

StudyData run_study_campaign(const CampaignConfig& config, unsigned parallel) {
  CampaignRunner runner(config, parallel);
  const Block k10 = runner.schedule().last();
  const auto& inv = TTables::standard().inv_t4_byte;
  const std::uint32_t ept = config.attack.elements_per_txn;

  StudyData out;
  out.time.reserve(config.samples);
  out.predicted.reserve(config.samples);
  out.actual.reserve(config.samples);
  double sum_time = 0.0;
  double sum_overhead = 0.0;
  std::vector<std::uint8_t> idx;
  runner.run(config.samples, [&](std::uint64_t, const TimingSample& s, const KernelDiagnostics& d) {
    std::array<std::int16_t, 16> n{};
    std::array<std::int16_t, 16> o{};
    for (std::size_t j = 0; j < 16; ++j) {
      std::uint32_t total = 0;
      for (std::uint32_t w = 0; w < s.warps; ++w) {
        idx.clear();
        for (std::size_t b = w; b < s.ciphertexts.size(); b += s.warps) {
          idx.push_back(last_round_index(s.ciphertexts[b][j], k10[j], inv));
        }
        total += count_lines(idx, ept);
      }
      n[j] = static_cast<std::int16_t>(total);
      o[j] = static_cast<std::int16_t>(d.last_round_txns[j]);
    }
    out.time.push_back(s.time);
    out.predicted.push_back(n);
    out.actual.push_back(o);
    sum_time += s.time;
    sum_overhead += s.overhead;
    return true;
  });
  const double m = static_cast<double>(out.time.size());
  out.mean_time = sum_time / m;
  out.mean_overhead = sum_overhead / m;
  return out;
}

namespace {

double safe_pearson(std::span<const double> x, std::span<const double> y) {
  try {
    return pearson(x, y);
  } catch (const ZeroVarianceError&) {
    return 0.0;
  }
}

SnrEstimate safe_snr(const Eigen::VectorXd& x, const Eigen::VectorXd& t) {
  try {
    return snr(fit_linear(x, t), population_variance(x));
  } catch (const ZeroVarianceError&) {
    return {};
  }
}

}  // namespace

std::array<ByteStudy, 16> summarize_study(const StudyData& data) {
  const auto m = static_cast<Eigen::Index>(data.time.size());
  if (m < 2) throw std::invalid_argument("study: need at least 2 samples");
  const Eigen::Map<const Eigen::VectorXd> t(data.time.data(), m);
  std::array<ByteStudy, 16> out{};
  Eigen::VectorXd n(m), o(m);
  std::vector<std::int32_t> ni(static_cast<std::size_t>(m)), oi(static_cast<std::size_t>(m));
  for (std::size_t j = 0; j < 16; ++j) {
    for (Eigen::Index i = 0; i < m; ++i) {
      const auto k = static_cast<std::size_t>(i);
      ni[k] = data.predicted[k][j];
      oi[k] = data.actual[k][j];
      n[i] = ni[k];
      o[i] = oi[k];
    }
    ByteStudy& b = out[j];
    const std::span<const double> ts(data.time);
    b.rho_tn = safe_pearson(ts, std::span<const double>(n.data(), static_cast<std::size_t>(m)));
    b.rho_to = safe_pearson(ts, std::span<const double>(o.data(), static_cast<std::size_t>(m)));
    b.sigma_n = std::sqrt(population_variance(n));
    b.sigma_o = std::sqrt(population_variance(o));
    std::size_t eq = 0;
    for (std::size_t k = 0; k < ni.size(); ++k) eq += ni[k] == oi[k];
    b.p_equal = static_cast<double>(eq) / static_cast<double>(m);
    b.kappa = chance_corrected_agreement(oi, ni);
    b.snr_actual = safe_snr(o, t);
    b.snr_predicted = safe_snr(n, t);
  }
  return out;
}

std::vector<AttenuationRow> check_attenuation(const CampaignConfig& config, std::uint64_t samples,
                                              unsigned parallel) {
  if (samples < 1000) throw std::invalid_argument("attenuation check: need at least 1000 samples");
  auto derived = [&](std::uint64_t trial, std::optional<std::uint64_t> every) {
    CampaignConfig c = config;
    c.seed = derive_seed(config.seed, Stream::trial, trial);
    c.key = campaign_key(config);
    c.samples = samples;
    c.rotation.every = every;
    return summarize_study(run_study_campaign(c, parallel));
  };
  auto mean = [](const std::array<ByteStudy, 16>& s, auto f) {
    double acc = 0.0;
    for (const auto& b : s) acc += f(b);
    return acc / 16.0;
  };
  std::vector<AttenuationRow> rows;
  auto push = [&](std::string name, double formula, double measured, bool relative, double tol) {
    AttenuationRow r;
    r.name = std::move(name);
    r.formula = formula;
    r.measured = measured;
    r.relative = relative;
    r.tolerance = tol;
    r.error = relative ? std::abs(formula - measured) / std::abs(measured) : std::abs(formula - measured);
    r.pass = std::isfinite(r.error) && r.error <= tol;
    rows.push_back(std::move(r));
  };
  auto measured_rho = [](const ByteStudy& b) { return b.rho_tn; };
  // The attacker's view of the rotated table: time against the predicted count, from
  // the correlation with the true count, kappa as p(o = n) and both spreads.
  auto rotated = [](const ByteStudy& b) {
    return attenuate_sw({b.rho_to, std::max(0.0, b.kappa), b.sigma_o, b.sigma_n});
  };

  // SNR from one campaign, correlation from an independent one.
  const auto a = derived(0, std::nullopt);
  const auto b = derived(1, std::nullopt);
  double hw = 0.0;
  for (const auto& s : a) hw += s.snr_predicted.noiseless ? 1.0 : attenuate_hw(1.0, s.snr_predicted.snr);
  push("snr_attenuation", hw / 16.0, mean(b, measured_rho), true, 0.15);

  const auto half = derived(2, samples / 2);
  push("rotation_attenuation_half", mean(half, rotated), mean(half, measured_rho), true, 0.15);

  const auto often = derived(3, 1000);
  push("rotation_attenuation_1000", mean(often, rotated), mean(often, measured_rho), false,
       3.0 / std::sqrt(static_cast<double>(samples)));
  return rows;
}

std::vector<std::string> MicrobenchResult::ordering_violations() const {
  std::vector<std::string> bad;
  std::vector<const Table2Row*> fixed;
  const Table2Row* fr = nullptr;
  const Table2Row* dr = nullptr;
  for (const auto& r : table) {
    if (r.label == "fixed_random") fr = &r;
    else if (r.label == "dynamic") dr = &r;
    else fixed.push_back(&r);
  }
  std::sort(fixed.begin(), fixed.end(),
            [](const Table2Row* a, const Table2Row* b) { return a->width_bytes < b->width_bytes; });
  for (std::size_t i = 1; i < fixed.size(); ++i) {
    if (!(fixed[i]->snr.snr < fixed[i - 1]->snr.snr)) {
      bad.push_back("snr(" + fixed[i]->label + ") >= snr(" + fixed[i - 1]->label + ")");
    }
  }
  if (fr && !fixed.empty() && !(fr->snr.snr < fixed.back()->snr.snr)) {
    bad.push_back("snr(fixed_random) >= snr(" + fixed.back()->label + ")");
  }
  if (fr && dr && !(dr->snr.snr < fr->snr.snr)) bad.push_back("snr(dynamic) >= snr(fixed_random)");
  return bad;
}

MicrobenchResult run_microbench_campaign(const CampaignConfig& config, unsigned parallel) {
  WidthDistribution dist = WidthDistribution::mean32();
  if (const auto* fr = std::get_if<FixedRandomPerKernel>(&config.policy.mode)) {
    dist = fr->distribution;
  } else if (const auto* d = std::get_if<DynamicPerLine>(&config.policy.mode); d && d->regenerate) {
    dist = *d->regenerate;
  }
  std::vector<std::pair<std::string, CoalescingPolicy>> policies;
  for (auto w : config.microbench.widths) {
    policies.emplace_back(std::to_string(w), CoalescingPolicy::fixed(w));
  }
  if (config.microbench.randomized) {
    policies.emplace_back("fixed_random", CoalescingPolicy::fixed_random(dist));
    policies.emplace_back("dynamic", CoalescingPolicy::dynamic(dist));
  }

  // One RNG stream per (policy, n) cell.
  const std::size_t cells = policies.size() * 32;
  std::vector<std::vector<MicrobenchPoint>> results(cells);
  fan_out(cells, parallel, [&](std::size_t b, std::size_t e, unsigned) {
    for (std::size_t c = b; c < e; ++c) {
      Rng rng = make_rng(config.seed, Stream::microbench, c);
      results[c] = run_microbenchmark(static_cast<std::uint32_t>(c % 32 + 1), policies[c / 32].second,
                                      config.microbench.reps, config.timing, rng);
    }
  });

  MicrobenchResult out;
  for (std::size_t p = 0; p < policies.size(); ++p) {
    std::vector<MicrobenchPoint> pts;
    pts.reserve(32u * config.microbench.reps);
    for (std::size_t n = 0; n < 32; ++n) {
      const auto& r = results[p * 32 + n];
      pts.insert(pts.end(), r.begin(), r.end());
    }
    Eigen::VectorXd x(static_cast<Eigen::Index>(pts.size())), y(x.size());
    for (std::size_t i = 0; i < pts.size(); ++i) {
      x[static_cast<Eigen::Index>(i)] = pts[i].n_unique;
      y[static_cast<Eigen::Index>(i)] = pts[i].time;
    }
    Table2Row row;
    row.label = policies[p].first;
    if (const auto* f = std::get_if<Fixed>(&policies[p].second.mode)) row.width_bytes = f->width_bytes;
    row.fit = fit_linear(x, y);
    row.snr = snr(row.fit, population_variance(x));
    out.table.push_back(row);
    out.sweeps.emplace_back(policies[p].first, std::move(pts));
  }
  return out;
}

Calibration calibrate(const CampaignConfig& config, std::optional<double> target_snr,
                      unsigned parallel) {
  if (config.microbench.widths.empty()) throw std::invalid_argument("calibrate: no widths to sweep");
  if (target_snr && !(*target_snr > 0.0)) throw std::invalid_argument("calibrate: target SNR must be positive");
  Calibration out;
  out.microbench = run_microbench_campaign(config, parallel);
  out.reference_width = *std::max_element(config.microbench.widths.begin(), config.microbench.widths.end());
  if (!target_snr) return out;

  // Kernel noise is independent of everything else, so the residual variance splits
  // into the noiseless residual plus sigma_eps^2.
  CampaignConfig quiet = config;
  quiet.timing.sigma_eps = 0.0;
  quiet.microbench.widths = {out.reference_width};
  quiet.microbench.randomized = false;
  const Table2Row row = run_microbench_campaign(quiet, parallel).table.front();
  const double signal = row.fit.beta1 * row.fit.beta1 * row.snr.sigma_n_sq;
  out.suggested_sigma_eps = std::sqrt(std::max(0.0, signal / *target_snr - row.fit.sigma_eps_sq));
  return out;
}

std::vector<DefenseRow> run_defense_sweep(const CampaignConfig& config, unsigned parallel) {
  if (config.defenses.empty() || config.defenses.front().name != "baseline") {
    throw std::invalid_argument("defend: the first defense must be named \"baseline\"");
  }
  std::vector<DefenseRow> rows;
  for (const auto& d : config.defenses) {
    CampaignConfig c = apply_overrides(config, d.overrides);
    const AttackCampaignResult r = run_attack_campaign(c, parallel);
    DefenseRow row;
    row.name = d.name;
    for (const auto& b : r.report.bytes) {
      row.rho_peak += b.rho_peak();
      row.rho_ave += b.rho_ave();
    }
    row.rho_peak /= static_cast<double>(r.report.bytes.size());
    row.rho_ave /= static_cast<double>(r.report.bytes.size());
    row.min_samples = r.max_min_samples(c.attack.target_bytes);
    row.samples_run = r.samples_run;
    row.mean_time = r.mean_time + r.mean_overhead;
    if (row.rho_peak > row.rho_ave && row.rho_peak < 1.0) {
      row.predicted_samples = samples_required(row.rho_peak, row.rho_ave, 0.9);
    }
    rows.push_back(row);
  }
  const DefenseRow& base = rows.front();
  if (!base.min_samples) {
    throw std::runtime_error("defend: baseline did not recover the key within its sample budget");
  }
  for (auto& row : rows) {
    const double effort = static_cast<double>(row.min_samples.value_or(row.samples_run));
    row.multiplier = effort / static_cast<double>(*base.min_samples);
    row.relative_performance = base.mean_time / row.mean_time;
  }
  return rows;
}

}  // namespace coalab
