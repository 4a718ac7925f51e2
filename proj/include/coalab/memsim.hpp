#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "coalab/aes.hpp"
#include "coalab/coalescer.hpp"
#include "coalab/rng.hpp"

namespace coalab {

struct SimConfig {
  std::uint32_t num_sms = 15;
  std::uint32_t threads_per_warp = 32;
  std::uint32_t warps_per_sm = 2;
  std::uint32_t l1_line_bytes = 64;
  std::uint32_t l2_line_bytes = 128;
  std::uint32_t mshr_entries_per_sm = 32;
  std::uint32_t unified_mshr_entries = 32;
  std::uint32_t l1_size_bytes = 48 * 1024;
  std::uint32_t l2_size_bytes = 768 * 1024;

  std::uint32_t max_threads() const { return num_sms * warps_per_sm * threads_per_warp; }
  void validate() const;
};

/// Abstract-cycle cost model. A transaction costs c_issue plus h on a hit or m0*h on
/// an L1 miss; each transaction misses independently with probability p_miss.
struct TimingParams {
  double h = 1.0;
  double m0 = 5.0;
  double c_issue = 4.0;
  double sigma_eps = 2.0;
  double p_miss = 0.02;
  double base_cycles = 300.0;

  double miss_latency() const { return m0 * h; }
  void validate() const;
};

enum class MshrMode { per_sm, hierarchical };

struct MshrTopology {
  MshrMode mode = MshrMode::per_sm;
};

/// Byte addresses of the modeled device memory.
struct MemoryMap {
  static constexpr std::uint64_t table_base(std::uint32_t table) { return table * 1024ull; }
  static constexpr std::uint64_t kT4Base = 4096;
  static constexpr std::uint64_t kMicrobenchBase = 8192;
  static constexpr std::uint64_t kMemoryBytes = 1u << 16;
};

/// One kernel run as the attacker sees it. Blocks are in batch order; block b ran on
/// warp b % warps.
struct TimingSample {
  std::vector<Block> plaintexts;
  std::vector<Block> ciphertexts;
  std::uint32_t warps = 1;
  double time = 0.0;
  /// Cycles of rotation work charged to this sample (not part of `time`).
  double overhead = 0.0;
};

/// Ground truth collected during a kernel; never visible to the attacker.
struct KernelDiagnostics {
  /// Round-10 transactions per ciphertext byte position, summed over warps.
  std::array<std::uint32_t, 16> last_round_txns{};
  std::uint64_t transactions = 0;
  std::uint64_t misses = 0;
  std::uint64_t sm_merges = 0;
  std::uint64_t unified_merges = 0;
  std::uint32_t max_inflight_per_sm = 0;
  /// Largest and smallest latency paid by any miss (both 0 when nothing missed).
  double max_miss_latency = 0.0;
  double min_miss_latency = 0.0;
  std::uint32_t resolved_width = 0;  // 0 unless the kernel used one uniform width
};

/// Reusable simulator with scratch buffers; one instance per worker thread.
class KernelSimulator {
 public:
  explicit KernelSimulator(SimConfig config = {});

  TimingSample run(std::span<const Block> plaintexts, const KeySchedule& ks, const TTables& tables,
                   const TableLayout& layout, const CoalescingPolicy& policy,
                   const MshrTopology& topology, const TimingParams& params, Rng& rng,
                   KernelDiagnostics* diag = nullptr);

  /// Times caller-supplied per-warp instruction streams: addresses[w][i] holds the
  /// lane addresses of instruction i of warp w. No AES, no noise-free shortcut.
  double run_streams(const std::vector<std::vector<std::vector<std::uint64_t>>>& addresses,
                     const CoalescingPolicy& policy, const MshrTopology& topology,
                     const TimingParams& params, Rng& rng, KernelDiagnostics* diag = nullptr);

  const SimConfig& config() const { return config_; }

 private:
  struct Entry {
    std::uint64_t line;
    double start;  // allocation time; warps whose clock is behind it cannot join
    double done;
  };
  struct Context;

  double execute(Context& ctx);

  SimConfig config_;
  std::vector<Encryption> enc_;
  std::vector<std::vector<Entry>> sm_mshr_;
  std::vector<Entry> unified_;
};

TimingSample simulate_kernel(std::span<const Block> plaintexts, const KeySchedule& ks,
                             const TTables& tables, const TableLayout& layout,
                             const CoalescingPolicy& policy, const MshrTopology& topology,
                             const TimingParams& params, Rng& rng,
                             KernelDiagnostics* diag = nullptr, const SimConfig& config = {});

/// Number of warps a batch occupies.
std::uint32_t warps_for(std::size_t threads, const SimConfig& config = {});

/// Noise-free time of one warp whose instructions each coalesce into exactly one hit.
double analytic_min_time(std::size_t instructions, const TimingParams& params);

struct MicrobenchPoint {
  std::uint32_t n_unique = 0;
  std::uint32_t width_bytes = 0;  // 0 for randomized policies
  std::uint32_t rep = 0;
  double time = 0.0;
  std::uint32_t transactions = 0;
};

/// One warp; lane t loads float (t mod n_unique) of a line-aligned array.
std::vector<MicrobenchPoint> run_microbenchmark(std::uint32_t n_unique,
                                                const CoalescingPolicy& policy,
                                                std::uint32_t reps, const TimingParams& params,
                                                Rng& rng);

struct MergeWorkload {
  std::uint32_t threads = 960;
  bool identical_plaintexts = true;
};

/// Fraction of L1 misses that joined an in-flight unified entry.
double estimate_p_merge(const MshrTopology& topology, const MergeWorkload& workload,
                        std::uint32_t reps, const TimingParams& params, std::uint64_t seed);

}  // namespace coalab
