#include "coalab/memsim.hpp"

#include <algorithm>
#include <cassert>
#include <queue>
#include <stdexcept>

namespace coalab {

void SimConfig::validate() const {
  if (num_sms == 0 || threads_per_warp == 0 || warps_per_sm == 0 || l1_line_bytes == 0 ||
      l2_line_bytes == 0 || mshr_entries_per_sm == 0 || unified_mshr_entries == 0 ||
      l1_size_bytes == 0 || l2_size_bytes == 0) {
    throw std::invalid_argument("sim config: all sizes must be positive");
  }
  if (l2_line_bytes % l1_line_bytes != 0) {
    throw std::invalid_argument("sim config: L2 line must be a multiple of the L1 line");
  }
  if (threads_per_warp > 32) {
    throw std::invalid_argument("sim config: at most 32 threads per warp");
  }
}

void TimingParams::validate() const {
  if (!(h > 0.0) || !(m0 > 1.0) || !(c_issue > 0.0) || !(sigma_eps >= 0.0) ||
      !(p_miss >= 0.0 && p_miss <= 1.0) || !(base_cycles >= 0.0)) {
    throw std::invalid_argument("timing params: need h>0, m0>1, c_issue>0, sigma_eps>=0, "
                                "0<=p_miss<=1, base_cycles>=0");
  }
}

struct KernelSimulator::Context {
  // Either AES traces (enc_) or explicit streams.
  const std::vector<std::vector<std::vector<std::uint64_t>>>* streams = nullptr;
  std::size_t blocks = 0;
  std::uint32_t warps = 1;
  const FastCoalescer* coalescer = nullptr;
  const TimingParams* params = nullptr;
  MshrMode mode = MshrMode::per_sm;
  Rng* rng = nullptr;
  KernelDiagnostics* diag = nullptr;
};

KernelSimulator::KernelSimulator(SimConfig config) : config_(config) {
  config_.validate();
  sm_mshr_.resize(config_.num_sms);
  for (auto& f : sm_mshr_) f.reserve(config_.mshr_entries_per_sm);
  unified_.reserve(config_.unified_mshr_entries);
}

namespace {


template <class E>
void release_done(std::vector<E>& file, double now) {
  std::erase_if(file, [now](const E& e) { return e.done <= now; });
}

template <class E>
double earliest(const std::vector<E>& file) {
  double t = file.front().done;
  for (const auto& e : file) t = std::min(t, e.done);
  return t;
}

}  // namespace

double KernelSimulator::execute(Context& ctx) {
  const TimingParams& p = *ctx.params;
  const std::uint32_t W = ctx.warps;
  for (auto& f : sm_mshr_) f.clear();
  unified_.clear();

  KernelDiagnostics local;
  KernelDiagnostics& d = ctx.diag ? *ctx.diag : local;

  // Misses are drawn by geometric skip over the global transaction order.
  const bool never_miss = p.p_miss <= 0.0;
  const bool always_miss = p.p_miss >= 1.0;
  std::geometric_distribution<std::uint64_t> skip(never_miss || always_miss ? 0.5 : p.p_miss);
  std::uint64_t countdown = never_miss || always_miss ? 0 : skip(*ctx.rng);

  auto instructions = [&](std::uint32_t w) -> std::size_t {
    if (ctx.streams) return (*ctx.streams)[w].size();
    return w < ctx.blocks ? kRounds * kLookupsPerRound : 0;
  };

  std::array<std::uint64_t, 32> addr{};
  std::array<std::uint8_t, 32> idx{};
  std::array<Transaction, 32> txn{};
  std::vector<double> clock(W, 0.0);
  std::vector<std::size_t> pc(W, 0);
  const double miss_lat = p.miss_latency();
  const double hit_cost = p.c_issue + p.h;
  const std::uint64_t l2_ratio = config_.l2_line_bytes / config_.l1_line_bytes;

  // One transaction to `line` issued by a warp on `sm` whose clock reads `now`.
  auto charge = [&](std::uint32_t sm, std::uint64_t line, double now) -> double {
    now += p.c_issue;
    bool miss = always_miss;
    if (!never_miss && !always_miss) {
      if (countdown == 0) {
        miss = true;
        countdown = skip(*ctx.rng);
      } else {
        --countdown;
      }
    }
    if (!miss) return now + p.h;
    ++d.misses;
    auto& file = sm_mshr_[sm];
    release_done(file, now);
    double done = 0.0;
    auto hit = std::find_if(file.begin(), file.end(),
                            [line, now](const Entry& e) { return e.line == line && e.start <= now; });
    if (hit != file.end()) {
      done = hit->done;
      ++d.sm_merges;
    } else {
      if (file.size() >= config_.mshr_entries_per_sm) {
        now = earliest(file);
        release_done(file, now);
      }
      if (ctx.mode == MshrMode::hierarchical) {
        const std::uint64_t l2_line = line / l2_ratio;
        release_done(unified_, now);
        auto u = std::find_if(unified_.begin(), unified_.end(),
                              [l2_line, now](const Entry& e) { return e.line == l2_line && e.start <= now; });
        if (u != unified_.end()) {
          done = u->done;
          ++d.unified_merges;
        } else {
          if (unified_.size() >= config_.unified_mshr_entries) {
            now = earliest(unified_);
            release_done(unified_, now);
          }
          done = now + miss_lat;
          unified_.push_back({l2_line, now, done});
        }
      } else {
        done = now + miss_lat;
      }
      file.push_back({line, now, done});
      d.max_inflight_per_sm = std::max(d.max_inflight_per_sm, static_cast<std::uint32_t>(file.size()));
      assert(file.size() <= config_.mshr_entries_per_sm);
    }
    const double latency = done - now;
    d.max_miss_latency = std::max(d.max_miss_latency, latency);
    d.min_miss_latency = d.misses == 1 ? latency : std::min(d.min_miss_latency, latency);
    return done;
  };

  auto step = [&](std::uint32_t w) {
    const std::uint32_t sm = w % config_.num_sms;
    const std::size_t i = pc[w]++;
    TxnSet set;
    bool have_set = true;
    std::size_t spread = 0;  // transactions in `txn` when the bitset window is too small
    if (ctx.streams) {
      const auto& src = (*ctx.streams)[w][i];
      if (src.size() > addr.size()) throw std::invalid_argument("memsim: more than 32 lanes");
      std::copy(src.begin(), src.end(), addr.begin());
      const std::span<const std::uint64_t> lanes(addr.data(), src.size());
      if (!ctx.coalescer->collect(lanes, set)) {
        have_set = false;
        spread = ctx.coalescer->run(lanes, txn.data());
      }
    } else {
      const std::size_t round = i / kLookupsPerRound;
      const std::size_t k = i % kLookupsPerRound;
      std::size_t lanes = 0;
      std::uint8_t table = 0;
      for (std::size_t b = w; b < ctx.blocks; b += W) {
        const Lookup lk = enc_[b].trace.rounds[round][k];
        table = lk.table;
        idx[lanes++] = lk.index;
      }
      const std::uint64_t base =
          table == kLastRoundTable ? MemoryMap::kT4Base : MemoryMap::table_base(table);
      ctx.coalescer->collect_table(base, std::span(idx.data(), lanes), set);
    }
    const std::size_t n = have_set ? set.count : spread;
    d.transactions += n;
    if (!ctx.streams && i >= (kRounds - 1) * kLookupsPerRound) {
      d.last_round_txns[i - (kRounds - 1) * kLookupsPerRound] += static_cast<std::uint32_t>(n);
    }

    double now = clock[w];
    if (never_miss || (!always_miss && countdown >= n)) {
      // No miss among these n transactions: charge them in one step.
      now += static_cast<double>(n) * hit_cost;
      if (!never_miss) countdown -= n;
    } else if (have_set) {
      set.for_each([&](std::uint64_t line, unsigned) { now = charge(sm, line, now); });
    } else {
      for (std::size_t t = 0; t < spread; ++t) now = charge(sm, txn[t].line_number, now);
    }
    clock[w] = now;
  };

  if (W == 1) {
    while (pc[0] < instructions(0)) step(0);
  } else {
    // Interleave warps at instruction granularity in global clock order.
    using Slot = std::pair<double, std::uint32_t>;
    std::priority_queue<Slot, std::vector<Slot>, std::greater<>> ready;
    for (std::uint32_t w = 0; w < W; ++w) {
      if (instructions(w) > 0) ready.push({0.0, w});
    }
    while (!ready.empty()) {
      const std::uint32_t w = ready.top().second;
      ready.pop();
      step(w);
      if (pc[w] < instructions(w)) ready.push({clock[w], w});
    }
  }

  // Warps on one SM overlap, SMs run in parallel: the kernel ends with the slowest warp.
  const double busy = *std::max_element(clock.begin(), clock.end());
  double t = p.base_cycles + busy;
  if (p.sigma_eps > 0.0) {
    std::normal_distribution<double> noise(0.0, p.sigma_eps);
    double e = noise(*ctx.rng);
    while (t + e <= 0.0) e = noise(*ctx.rng);
    t += e;
  }
  return t;
}

TimingSample KernelSimulator::run(std::span<const Block> plaintexts, const KeySchedule& ks,
                                  const TTables& tables, const TableLayout& layout,
                                  const CoalescingPolicy& policy, const MshrTopology& topology,
                                  const TimingParams& params, Rng& rng, KernelDiagnostics* diag) {
  params.validate();
  if (plaintexts.empty()) throw std::invalid_argument("memsim: empty batch");
  if (plaintexts.size() > config_.max_threads()) {
    throw std::invalid_argument("memsim: batch of " + std::to_string(plaintexts.size()) +
                                " exceeds " + std::to_string(config_.max_threads()) + " threads");
  }
  if (!layout.consistent_with(tables)) {
    throw std::invalid_argument("memsim: layout storage inconsistent with its rotation state");
  }

  const CoalescingPolicy kernel_policy = resolve_kernel_policy(policy, rng);
  if (diag) {
    *diag = {};
    if (const auto* f = std::get_if<Fixed>(&kernel_policy.mode)) diag->resolved_width = f->width_bytes;
  }
  const FastCoalescer coalescer(kernel_policy);

  TimingSample sample;
  sample.plaintexts.assign(plaintexts.begin(), plaintexts.end());
  sample.ciphertexts.resize(plaintexts.size());
  enc_.resize(plaintexts.size());
  for (std::size_t b = 0; b < plaintexts.size(); ++b) {
    enc_[b] = encrypt_block(plaintexts[b], ks, tables, layout);
    sample.ciphertexts[b] = enc_[b].ciphertext;
  }
  sample.warps = warps_for(plaintexts.size(), config_);

  Context ctx;
  ctx.blocks = plaintexts.size();
  ctx.warps = sample.warps;
  ctx.coalescer = &coalescer;
  ctx.params = &params;
  ctx.mode = topology.mode;
  ctx.rng = &rng;
  ctx.diag = diag;
  sample.time = execute(ctx);
  return sample;
}

double KernelSimulator::run_streams(
    const std::vector<std::vector<std::vector<std::uint64_t>>>& addresses,
    const CoalescingPolicy& policy, const MshrTopology& topology, const TimingParams& params,
    Rng& rng, KernelDiagnostics* diag) {
  params.validate();
  if (addresses.empty() || addresses.size() > config_.num_sms * config_.warps_per_sm) {
    throw std::invalid_argument("memsim: stream count must be 1..num_sms*warps_per_sm");
  }
  const CoalescingPolicy kernel_policy = resolve_kernel_policy(policy, rng);
  if (diag) {
    *diag = {};
    if (const auto* f = std::get_if<Fixed>(&kernel_policy.mode)) diag->resolved_width = f->width_bytes;
  }
  const FastCoalescer coalescer(kernel_policy);
  Context ctx;
  ctx.streams = &addresses;
  ctx.warps = static_cast<std::uint32_t>(addresses.size());
  ctx.coalescer = &coalescer;
  ctx.params = &params;
  ctx.mode = topology.mode;
  ctx.rng = &rng;
  ctx.diag = diag;
  return execute(ctx);
}

TimingSample simulate_kernel(std::span<const Block> plaintexts, const KeySchedule& ks,
                             const TTables& tables, const TableLayout& layout,
                             const CoalescingPolicy& policy, const MshrTopology& topology,
                             const TimingParams& params, Rng& rng, KernelDiagnostics* diag,
                             const SimConfig& config) {
  KernelSimulator sim(config);
  return sim.run(plaintexts, ks, tables, layout, policy, topology, params, rng, diag);
}

std::uint32_t warps_for(std::size_t threads, const SimConfig& config) {
  return static_cast<std::uint32_t>((threads + config.threads_per_warp - 1) /
                                    config.threads_per_warp);
}

double analytic_min_time(std::size_t instructions, const TimingParams& params) {
  return params.base_cycles + static_cast<double>(instructions) * (params.c_issue + params.h);
}

std::vector<MicrobenchPoint> run_microbenchmark(std::uint32_t n_unique,
                                                const CoalescingPolicy& policy,
                                                std::uint32_t reps, const TimingParams& params,
                                                Rng& rng) {
  if (n_unique < 1 || n_unique > 32) {
    throw std::invalid_argument("microbench: n_unique must be in [1, 32]");
  }
  std::vector<std::vector<std::vector<std::uint64_t>>> streams(1);
  streams[0].emplace_back(32);
  for (std::uint32_t t = 0; t < 32; ++t) {
    streams[0][0][t] = MemoryMap::kMicrobenchBase + 4u * (t % n_unique);
  }
  std::uint32_t width = 0;
  if (const auto* f = std::get_if<Fixed>(&policy.mode)) width = f->width_bytes;

  KernelSimulator sim;
  std::vector<MicrobenchPoint> out;
  out.reserve(reps);
  KernelDiagnostics diag;
  for (std::uint32_t rep = 0; rep < reps; ++rep) {
    const double t = sim.run_streams(streams, policy, MshrTopology{}, params, rng, &diag);
    out.push_back({n_unique, width, rep, t, static_cast<std::uint32_t>(diag.transactions)});
  }
  return out;
}

double estimate_p_merge(const MshrTopology& topology, const MergeWorkload& workload,
                        std::uint32_t reps, const TimingParams& params, std::uint64_t seed) {
  if (topology.mode == MshrMode::per_sm) return 0.0;
  KernelSimulator sim;
  Rng key_rng = make_rng(seed, Stream::key, 0);
  Block key{};
  for (auto& b : key) b = static_cast<std::uint8_t>(key_rng());
  const KeySchedule ks = expand_key(key);
  const TTables& tables = TTables::standard();
  const TableLayout layout = TableLayout::identity(tables);
  const CoalescingPolicy policy = CoalescingPolicy::fixed(64);

  std::uint64_t misses = 0;
  std::uint64_t merges = 0;
  std::vector<Block> pts(workload.threads);
  KernelDiagnostics diag;
  for (std::uint32_t rep = 0; rep < reps; ++rep) {
    Rng rng = make_rng(seed, Stream::sample, rep);
    for (std::size_t b = 0; b < pts.size(); ++b) {
      if (b == 0 || !workload.identical_plaintexts) {
        for (auto& x : pts[b]) x = static_cast<std::uint8_t>(rng());
      } else {
        pts[b] = pts[0];
      }
    }
    sim.run(pts, ks, tables, layout, policy, topology, params, rng, &diag);
    misses += diag.misses;
    merges += diag.unified_merges;
  }
  return misses == 0 ? 0.0 : static_cast<double>(merges) / static_cast<double>(misses);
}

}  // namespace coalab
