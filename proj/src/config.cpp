#include "coalab/config.hpp"

#include <fstream>
#include <set>
#include <stdexcept>

namespace coalab {
namespace {

void only_keys(const json& j, const std::string& where, std::initializer_list<const char*> keys) {
  if (!j.is_object()) throw std::invalid_argument("config: " + where + " must be an object");
  const std::set<std::string> allowed(keys.begin(), keys.end());
  for (const auto& [k, v] : j.items()) {
    if (!allowed.count(k)) throw std::invalid_argument("config: unknown key " + where + "." + k);
  }
}

template <class T>
T get(const json& j, const char* key, const std::string& where, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw std::invalid_argument("config: " + where + "." + key + " has the wrong type");
  }
}

WidthDistribution distribution_from(const json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 4) {
    throw std::invalid_argument("config: " + where + " must be [p8, p16, p32, p64]");
  }
  WidthDistribution d;
  for (std::size_t i = 0; i < 4; ++i) d.p[i] = j[i].get<double>();
  d.validate();
  return d;
}

json distribution_to(const WidthDistribution& d) { return json(d.p); }

CoalescingPolicy policy_from(const json& j) {
  only_keys(j, "policy", {"mode", "width_bytes", "distribution", "regenerate", "r"});
  const auto mode = get<std::string>(j, "mode", "policy", "fixed");
  const WidthDistribution dist = j.contains("distribution")
                                     ? distribution_from(j["distribution"], "policy.distribution")
                                     : WidthDistribution::mean32();
  if (mode == "fixed") return CoalescingPolicy::fixed(get<std::uint32_t>(j, "width_bytes", "policy", 64));
  if (mode == "fixed_random") return CoalescingPolicy::fixed_random(dist);
  if (mode == "dynamic") {
    if (get<bool>(j, "regenerate", "policy", true)) return CoalescingPolicy::dynamic(dist);
    const auto r = get<std::vector<int>>(j, "r", "policy", std::vector<int>(16, 1));
    if (r.size() != 16) throw std::invalid_argument("config: policy.r needs 16 entries");
    std::array<std::uint8_t, 16> rr{};
    for (std::size_t i = 0; i < 16; ++i) rr[i] = static_cast<std::uint8_t>(r[i]);
    return CoalescingPolicy::dynamic_with(rr);
  }
  throw std::invalid_argument("config: policy.mode must be fixed, fixed_random or dynamic");
}

json policy_to(const CoalescingPolicy& p) {
  if (const auto* f = std::get_if<Fixed>(&p.mode)) return {{"mode", "fixed"}, {"width_bytes", f->width_bytes}};
  if (const auto* fr = std::get_if<FixedRandomPerKernel>(&p.mode)) {
    return {{"mode", "fixed_random"}, {"distribution", distribution_to(fr->distribution)}};
  }
  const auto& d = std::get<DynamicPerLine>(p.mode);
  if (d.regenerate) {
    return {{"mode", "dynamic"}, {"regenerate", true}, {"distribution", distribution_to(*d.regenerate)}};
  }
  return {{"mode", "dynamic"}, {"regenerate", false}, {"r", std::vector<int>(d.r.begin(), d.r.end())}};
}

}  // namespace

void CampaignConfig::validate() const {
  policy.validate();
  timing.validate();
  sim.validate();
  attack.validate();
  if (threads == 0 || threads > sim.max_threads()) {
    throw std::invalid_argument("config: batch.threads must be in 1.." + std::to_string(sim.max_threads()));
  }
  if (samples < 2) throw std::invalid_argument("config: samples must be >= 2");
  if (step == 0) throw std::invalid_argument("config: attack.step must be >= 1");
  if (streak == 0) throw std::invalid_argument("config: attack.streak must be >= 1");
  if (microbench.reps == 0) throw std::invalid_argument("config: microbench.reps must be >= 1");
  for (auto w : microbench.widths) CoalescingPolicy::fixed(w);
}

CampaignConfig config_from_json(const json& j) {
  only_keys(j, "", {"schema_version", "seed", "key", "batch", "policy", "mshr", "rotation", "timing",
                    "samples", "attack", "microbench", "defenses", "output"});
  if (!j.contains("seed")) throw std::invalid_argument("config: seed is mandatory");
  const int version = get<int>(j, "schema_version", "", kSchemaVersion);
  if (version != kSchemaVersion) {
    throw std::invalid_argument("config: unsupported schema_version " + std::to_string(version));
  }
  CampaignConfig c;
  c.seed = get<std::uint64_t>(j, "seed", "", 1);
  if (j.contains("key") && !j["key"].is_null()) c.key = block_from_hex(j["key"].get<std::string>());

  if (j.contains("batch")) {
    only_keys(j["batch"], "batch", {"threads"});
    c.threads = get<std::uint32_t>(j["batch"], "threads", "batch", c.threads);
  }
  if (j.contains("policy")) c.policy = policy_from(j["policy"]);
  if (j.contains("mshr")) {
    only_keys(j["mshr"], "mshr", {"mode"});
    const auto m = get<std::string>(j["mshr"], "mode", "mshr", "per_sm");
    if (m == "per_sm") c.mshr.mode = MshrMode::per_sm;
    else if (m == "hierarchical") c.mshr.mode = MshrMode::hierarchical;
    else throw std::invalid_argument("config: mshr.mode must be per_sm or hierarchical");
  }
  if (j.contains("rotation")) {
    const json& r = j["rotation"];
    only_keys(r, "rotation", {"rotate_every", "unique"});
    if (r.contains("rotate_every")) {
      const json& f = r["rotate_every"];
      if (f.is_string()) {
        if (f.get<std::string>() != "off") throw std::invalid_argument("config: rotate_every is an integer or \"off\"");
        c.rotation = RotationSchedule::off();
      } else if (f.is_number_unsigned()) {
        c.rotation = RotationSchedule::each(f.get<std::uint64_t>());
      } else {
        throw std::invalid_argument("config: rotate_every is an integer or \"off\"");
      }
    }
    c.rotation_draw = get<bool>(r, "unique", "rotation", true) ? OffsetDraw::unique : OffsetDraw::with_replacement;
  }
  if (j.contains("timing")) {
    const json& t = j["timing"];
    only_keys(t, "timing", {"h", "m0", "c_issue", "sigma_eps", "p_miss", "base_cycles"});
    c.timing.h = get<double>(t, "h", "timing", c.timing.h);
    c.timing.m0 = get<double>(t, "m0", "timing", c.timing.m0);
    c.timing.c_issue = get<double>(t, "c_issue", "timing", c.timing.c_issue);
    c.timing.sigma_eps = get<double>(t, "sigma_eps", "timing", c.timing.sigma_eps);
    c.timing.p_miss = get<double>(t, "p_miss", "timing", c.timing.p_miss);
    c.timing.base_cycles = get<double>(t, "base_cycles", "timing", c.timing.base_cycles);
  }
  c.samples = get<std::uint64_t>(j, "samples", "", c.samples);
  if (j.contains("attack")) {
    const json& a = j["attack"];
    only_keys(a, "attack", {"elements_per_txn", "target_bytes", "step", "streak", "informed",
                            "stop_when_recovered"});
    c.attack.elements_per_txn = get<std::uint32_t>(a, "elements_per_txn", "attack", c.attack.elements_per_txn);
    if (a.contains("target_bytes")) {
      const auto v = get<std::vector<int>>(a, "target_bytes", "attack", {});
      c.attack.target_bytes.clear();
      for (int b : v) {
        if (b < 0 || b > 15) throw std::invalid_argument("config: target_bytes entries must be 0..15");
        c.attack.target_bytes.push_back(static_cast<std::uint8_t>(b));
      }
    }
    c.step = get<std::uint64_t>(a, "step", "attack", c.step);
    c.streak = get<std::uint32_t>(a, "streak", "attack", c.streak);
    c.attack.informed = get<bool>(a, "informed", "attack", false);
    c.stop_when_recovered = get<bool>(a, "stop_when_recovered", "attack", c.stop_when_recovered);
  }
  if (c.attack.informed) {
    if (const auto* fr = std::get_if<FixedRandomPerKernel>(&c.policy.mode)) {
      c.attack.informed_distribution = fr->distribution;
    } else if (const auto* d = std::get_if<DynamicPerLine>(&c.policy.mode); d && d->regenerate) {
      c.attack.informed_distribution = *d->regenerate;
    }
  }
  c.attack.num_samples = c.samples;
  if (j.contains("microbench")) {
    const json& m = j["microbench"];
    only_keys(m, "microbench", {"reps", "widths", "randomized"});
    c.microbench.reps = get<std::uint32_t>(m, "reps", "microbench", c.microbench.reps);
    c.microbench.widths = get<std::vector<std::uint32_t>>(m, "widths", "microbench", c.microbench.widths);
    c.microbench.randomized = get<bool>(m, "randomized", "microbench", c.microbench.randomized);
  }
  if (j.contains("defenses")) {
    if (!j["defenses"].is_array()) throw std::invalid_argument("config: defenses must be an array");
    for (const auto& d : j["defenses"]) {
      only_keys(d, "defenses[]", {"name", "overrides"});
      DefenseSpec s;
      s.name = get<std::string>(d, "name", "defenses[]", "");
      if (s.name.empty()) throw std::invalid_argument("config: every defense needs a name");
      s.overrides = d.value("overrides", json::object());
      c.defenses.push_back(std::move(s));
    }
  }
  if (j.contains("output")) {
    only_keys(j["output"], "output", {"dir", "samples_store"});
    c.output.dir = get<std::string>(j["output"], "dir", "output", c.output.dir);
    c.output.samples_store = get<bool>(j["output"], "samples_store", "output", false);
  }
  c.validate();
  return c;
}

json config_to_json(const CampaignConfig& c) {
  json j;
  j["schema_version"] = kSchemaVersion;
  j["seed"] = c.seed;
  j["key"] = c.key ? json(to_hex(*c.key)) : json(nullptr);
  j["batch"] = {{"threads", c.threads}};
  j["policy"] = policy_to(c.policy);
  j["mshr"] = {{"mode", c.mshr.mode == MshrMode::per_sm ? "per_sm" : "hierarchical"}};
  j["rotation"] = {{"rotate_every", c.rotation.every ? json(*c.rotation.every) : json("off")},
                   {"unique", c.rotation_draw == OffsetDraw::unique}};
  j["timing"] = {{"h", c.timing.h},          {"m0", c.timing.m0},
                 {"c_issue", c.timing.c_issue}, {"sigma_eps", c.timing.sigma_eps},
                 {"p_miss", c.timing.p_miss},   {"base_cycles", c.timing.base_cycles}};
  j["samples"] = c.samples;
  std::vector<int> bytes(c.attack.target_bytes.begin(), c.attack.target_bytes.end());
  j["attack"] = {{"elements_per_txn", c.attack.elements_per_txn},
                 {"target_bytes", bytes},
                 {"step", c.step},
                 {"streak", c.streak},
                 {"informed", c.attack.informed},
                 {"stop_when_recovered", c.stop_when_recovered}};
  j["microbench"] = {{"reps", c.microbench.reps},
                     {"widths", c.microbench.widths},
                     {"randomized", c.microbench.randomized}};
  json defs = json::array();
  for (const auto& d : c.defenses) defs.push_back({{"name", d.name}, {"overrides", d.overrides}});
  j["defenses"] = defs;
  j["output"] = {{"dir", c.output.dir}, {"samples_store", c.output.samples_store}};
  return j;
}

CampaignConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config: cannot open " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw std::invalid_argument("config: " + path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

CampaignConfig apply_overrides(const CampaignConfig& base, const json& overrides) {
  json j = config_to_json(base);
  j.merge_patch(overrides);
  return config_from_json(j);
}

}  // namespace coalab
