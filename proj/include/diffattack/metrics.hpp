#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "diffattack/attack.hpp"
#include "diffattack/error.hpp"
#include "diffattack/oracle.hpp"

namespace diffattack {

struct CampaignRecord {
  std::string seed_id;
  std::string model_a;
  std::string model_b;
  AttackResult result;

  friend bool operator==(const CampaignRecord&, const CampaignRecord&) = default;
};

struct Histogram {
  std::vector<double> edges;  // counts.size() + 1 entries
  std::vector<std::size_t> counts;

  friend bool operator==(const Histogram&, const Histogram&) = default;
};

// Equal-width bins over [min, max], last bin right-closed. A degenerate range
// collapses to one bin holding every value.
inline Histogram histogram(std::span<const double> values, std::size_t bin_count) {
  if (values.empty()) throw ValueError("histogram of an empty sample");
  if (bin_count < 1) throw ValueError("histogram needs at least one bin");
  const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
  const double lo = *lo_it;
  const double hi = *hi_it;
  Histogram h;
  if (!(hi > lo)) {
    h.edges = {lo, hi};
    h.counts = {values.size()};
    return h;
  }
  h.edges.resize(bin_count + 1);
  for (std::size_t i = 0; i <= bin_count; ++i) {
    h.edges[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(bin_count);
  }
  h.edges.back() = hi;
  h.counts.assign(bin_count, 0);
  for (double v : values) {
    auto bin = static_cast<std::size_t>((v - lo) / (hi - lo) * static_cast<double>(bin_count));
    h.counts[std::min(bin, bin_count - 1)]++;
  }
  return h;
}

using ModelPair = std::pair<std::string, std::string>;

// Aggregates over a campaign. Averages and histograms cover successful attacks
// only and are empty when nothing succeeded.
struct DsrReport {
  std::map<ModelPair, double> pair_dsr;
  double overall_dsr = 0.0;
  std::size_t records = 0;
  std::size_t successes = 0;
  std::optional<double> avg_l2;
  std::optional<double> avg_queries;
  std::optional<double> avg_time_ms;
  std::optional<Histogram> l2_histogram;
  std::optional<Histogram> queries_histogram;
  std::optional<Histogram> time_histogram;

  friend bool operator==(const DsrReport&, const DsrReport&) = default;
};

inline constexpr std::size_t kDefaultHistogramBins = 10;

inline double mean_of(std::span<const double> v) {
  double sum = 0.0;
  for (double x : v) sum += x;
  return sum / static_cast<double>(v.size());
}

inline DsrReport dsr_differential(std::span<const CampaignRecord> records,
                                  std::size_t bin_count = kDefaultHistogramBins) {
  if (records.empty()) throw ValueError("differential success rate of an empty campaign");
  std::map<ModelPair, std::pair<std::size_t, std::size_t>> tally;  // successes, total
  std::vector<double> l2s, queries, times;
  for (const auto& r : records) {
    auto& t = tally[{r.model_a, r.model_b}];
    ++t.second;
    if (r.result.success()) {
      ++t.first;
      l2s.push_back(r.result.l2);
      queries.push_back(static_cast<double>(r.result.queries_per_oracle));
      times.push_back(std::chrono::duration<double, std::milli>(r.result.elapsed).count());
    }
  }

  DsrReport report;
  report.records = records.size();
  report.successes = l2s.size();
  std::vector<double> rates;
  for (const auto& [pair, t] : tally) {
    const double rate = static_cast<double>(t.first) / static_cast<double>(t.second);
    report.pair_dsr[pair] = rate;
    rates.push_back(rate);
  }
  report.overall_dsr = mean_of(rates);
  if (!l2s.empty()) {
    report.avg_l2 = mean_of(l2s);
    report.avg_queries = mean_of(queries);
    report.avg_time_ms = mean_of(times);
    report.l2_histogram = histogram(l2s, bin_count);
    report.queries_histogram = histogram(queries, bin_count);
    report.time_histogram = histogram(times, bin_count);
  }
  return report;
}

// Square matrix over model_ids: unordered-pair rates mirrored, diagonal empty,
// cells for pairs absent from the report empty too.
inline std::vector<std::vector<std::optional<double>>> pair_matrix(
    const DsrReport& report, const std::vector<std::string>& model_ids) {
  const std::size_t n = model_ids.size();
  std::vector<std::vector<std::optional<double>>> m(n, std::vector<std::optional<double>>(n));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      auto it = report.pair_dsr.find({model_ids[i], model_ids[j]});
      if (it == report.pair_dsr.end()) it = report.pair_dsr.find({model_ids[j], model_ids[i]});
      if (it != report.pair_dsr.end()) m[i][j] = it->second;
    }
  }
  return m;
}

// An adversarial input produced by a single-model attack against model a.
struct NonDifferentialEntry {
  std::string seed_id;
  std::string model_a;
  InputTensor adversarial;
  bool success_on_a = false;
  Prediction model_a_output;  // what model a answered on `adversarial`
};

// Share of entries whose adversarial input also makes model b answer
// differently from model a. Entries that failed on a count as misses. Any
// oracle error aborts the whole computation.
inline double dsr_nondifferential(std::span<const NonDifferentialEntry> entries, Oracle& model_b,
                                  double regression_threshold = 0.2) {
  if (entries.empty()) throw ValueError("non-differential success rate of an empty entry list");
  std::size_t hits = 0;
  for (const auto& e : entries) {
    if (!e.success_on_a) continue;
    const Prediction b = model_b.query(e.adversarial);
    if (b.task != e.model_a_output.task) {
      throw ConfigError("entry '" + e.seed_id + "': model b solves a different task");
    }
    bool differs = false;
    if (b.task == TaskKind::kClassification) {
      differs = b.top_label != e.model_a_output.top_label;
    } else {
      if (!e.model_a_output.value) {
        throw ConfigError("entry '" + e.seed_id + "': no recorded regression value for model a");
      }
      differs = std::abs(*b.value - *e.model_a_output.value) >= regression_threshold;
    }
    if (differs) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(entries.size());
}

}  // namespace diffattack
