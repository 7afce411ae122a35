#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <memory>
#include <mutex>
#include <set>
#include <span>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "diffattack/attack.hpp"
#include "diffattack/error.hpp"
#include "diffattack/io.hpp"
#include "diffattack/metrics.hpp"
#include "diffattack/oracle.hpp"
#include "diffattack/rng.hpp"

namespace diffattack {

// Unordered pairs (i < j) in list order.
inline std::vector<std::pair<std::size_t, std::size_t>> unordered_pairs(std::size_t n) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) out.emplace_back(i, j);
  }
  return out;
}

// Runs hill_climb for every (seed, unordered model pair). Each task clones its
// own oracles and draws its rng seed from (cfg.rng_seed, seed id, pair), so the
// records are identical for any parallelism degree. Records come back ordered
// by seed, then pair.
inline std::vector<CampaignRecord> run_campaign(std::span<const SeedEntry> seeds,
                                                std::span<const Oracle* const> models,
                                                const AttackConfig& cfg, std::size_t parallel = 1) {
  if (models.size() < 2) throw ConfigError("a campaign needs at least two models");
  if (seeds.empty()) throw ConfigError("a campaign needs at least one seed");
  if (parallel < 1) throw ConfigError("parallelism must be >= 1");
  cfg.validate();
  std::set<std::string> ids;
  for (const Oracle* m : models) {
    if (!ids.insert(m->id()).second) throw ConfigError("duplicate model id '" + m->id() + "'");
  }
  const auto pairs = unordered_pairs(models.size());
  for (const auto& [i, j] : pairs) check_compatible(*models[i], *models[j], cfg);

  const std::size_t total = seeds.size() * pairs.size();
  std::vector<CampaignRecord> records(total);
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::mutex error_mutex;

  auto worker = [&] {
    while (!failed.load()) {
      const std::size_t task = next.fetch_add(1);
      if (task >= total) return;
      const auto& seed = seeds[task / pairs.size()];
      const auto [i, j] = pairs[task % pairs.size()];
      try {
        auto o1 = models[i]->clone();
        auto o2 = models[j]->clone();
        AttackConfig run_cfg = cfg;
        run_cfg.rng_seed = derive_run_seed(cfg.rng_seed, seed.id, o1->id(), o2->id());
        records[task] = {seed.id, o1->id(), o2->id(), hill_climb(seed.input, *o1, *o2, run_cfg)};
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        failed.store(true);
      }
    }
  };

  const std::size_t threads = std::min(parallel, total);
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (error) std::rethrow_exception(error);
  return records;
}

}  // namespace diffattack
