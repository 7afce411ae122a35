// Acceptance run: one PASS/FAIL line per criterion, non-zero exit if any fail.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "test_support.hpp"

using namespace diffattack;
using testing::fixture;

namespace {

struct Outcome {
  bool ok = true;
  std::string detail;

  void require(bool cond, const std::string& what) {
    if (!cond && ok) {
      ok = false;
      detail = what;
    }
  }
};

bool close(double a, double b, double tol) { return std::fabs(a - b) <= tol; }

bool close_all(const std::vector<double>& got, const std::vector<double>& want, double tol) {
  if (got.size() != want.size()) return false;
  for (std::size_t i = 0; i < got.size(); ++i) {
    if (!close(got[i], want[i], tol)) return false;
  }
  return true;
}

std::size_t workers() { return std::max(1u, std::thread::hardware_concurrency()); }

// 1
Outcome forward_fixtures() {
  Outcome out;
  constexpr double tol = 1e-9;
  {
    const LayerSpec id = LayerSpec::dense({{1, 0}, {0, 1}}, {0, 0});
    const std::vector<double> x{3, 4};
    out.require(close_all(forward(std::span(&id, 1), x, 1.0), {3, 4}, tol), "identity dense");
  }
  {
    const std::vector<double> z{0, 0, 0};
    out.require(close_all(softmax(z), {1.0 / 3, 1.0 / 3, 1.0 / 3}, tol), "uniform softmax");
  }
  {
    const std::vector<LayerSpec> dense{LayerSpec::dense({{1, -1}, {0, 2}}, {0.5, 0})};
    const std::vector<LayerSpec> with_relu{dense[0], LayerSpec::relu()};
    const std::vector<double> x{2, 1};
    out.require(close_all(forward(dense, x, 1.0), {1.5, 2}, tol), "dense [[1,-1],[0,2]]");
    out.require(close_all(forward(with_relu, x, 1.0), {1.5, 2}, tol), "dense then relu");
  }
  {
    Model m = testing::linear_classifier("ln3", Shape{1}, {{0}, {0}}, {0, std::log(3.0)}, 1.0);
    LocalOracle o(m, AccessLevel::kTop1);
    const auto p = o.query(InputTensor::zeros(Shape{1}));
    out.require(p.top_label == 1 && p.top_prob && close(*p.top_prob, 0.75, tol), "logits [0, ln 3]");
  }
  {
    // x/2 = [1, 0.5]; hidden [1-1, 0.5+0.5] = [0, 1]; out [0, 1] -> softmax [1/(1+e), e/(1+e)]
    const std::vector<LayerSpec> mlp{LayerSpec::dense({{1, -2}, {0.5, 1}}, {0, 0}), LayerSpec::relu(),
                                     LayerSpec::dense({{2, 0}, {0, 1}}, {0, 0}), LayerSpec::softmax()};
    const std::vector<double> x{2, 1};
    const double e = std::exp(1.0);
    out.require(close_all(forward(mlp, x, 2.0), {1 / (1 + e), e / (1 + e)}, tol),
                "two-layer mlp with normalizer 2");
  }
  return out;
}

// 2
Outcome soundness_suite() {
  Outcome out;
  std::mt19937_64 eng(2);
  const Shape shape{2, 3};
  constexpr std::uint64_t kBudget = 200;
  for (int run = 0; run < 200 && out.ok; ++run) {
    const Model a = testing::random_mlp("a", shape, 5, 3, eng);
    const Model b = testing::random_mlp("b", shape, 5, 3, eng);
    const auto x = testing::random_tensor(shape, eng);
    const AccessLevel level = run % 2 ? AccessLevel::kTop1 : AccessLevel::kFullDistribution;
    AttackConfig cfg;
    cfg.max_iterations = kBudget;
    cfg.rng_seed = static_cast<std::uint64_t>(run) * 7919;
    if (run % 4 == 0) cfg.mode = DivergenceMode::kL1Distribution;

    std::vector<double> accepted;
    LocalOracle o1(a, level), o2(b, level);
    const auto r = hill_climb(x, o1, o2, cfg, [&](const StepEvent& e) {
      if (e.accepted) accepted.push_back(e.score);
    });
    const std::string tag = "run " + std::to_string(run) + ": ";
    for (std::size_t i = 1; i < accepted.size(); ++i) {
      out.require(accepted[i] > accepted[i - 1], tag + "accepted scores not increasing");
    }
    out.require(r.queries_per_oracle <= kBudget, tag + "budget exceeded");
    out.require(o1.query_count() == r.queries_per_oracle && o2.query_count() == r.queries_per_oracle,
                tag + "query count mismatch");
    if (r.success()) {
      LocalOracle c1(a, level), c2(b, level);
      out.require(c1.query(r.adversarial).top_label != c2.query(r.adversarial).top_label,
                  tag + "success does not reproduce");
    }
    LocalOracle d1(a, level), d2(b, level);
    out.require(hill_climb(x, d1, d2, cfg).same_outcome(r), tag + "rerun differs");
  }
  return out;
}

// 3
Outcome linear_pair() {
  Outcome out;
  const Model a = load_model(fixture("linear_pair/lin_a.json"));
  const Model b = load_model(fixture("linear_pair/lin_b.json"));
  const auto seed = load_seeds(fixture("linear_pair/seeds.json")).entries.at(0).input;
  const auto diaes = testing::single_pixel_diaes(seed, a, b);
  out.require(!diaes.empty(), "enumeration found no single-pixel DIAE");
  int successes = 0;
  for (std::uint64_t s = 0; s < 10; ++s) {
    AttackConfig cfg;
    cfg.max_iterations = 5000;
    cfg.rng_seed = 1000 + s;
    LocalOracle o1(a, AccessLevel::kTop1), o2(b, AccessLevel::kTop1);
    const auto r = hill_climb(seed, o1, o2, cfg);
    if (r.success() && r.final_prediction_1.top_label != r.final_prediction_2.top_label) ++successes;
  }
  out.detail = std::to_string(diaes.size()) + " DIAEs enumerated, " + std::to_string(successes) +
               "/10 runs succeeded";
  out.require(successes >= 9, out.detail);
  return out;
}

// 4
Outcome ten_cell_mean() {
  Outcome out;
  const std::vector<double> cells{1.0, 1.0, 1.0, 1.0, 1.0, 0.989, 0.989, 0.988, 0.988, 0.977};
  std::vector<CampaignRecord> recs;
  for (std::size_t p = 0; p < cells.size(); ++p) {
    const int succ = static_cast<int>(std::lround(cells[p] * 1000));
    for (int s = 0; s < 1000; ++s) {
      CampaignRecord r;
      r.seed_id = "s" + std::to_string(s);
      r.model_a = "m" + std::to_string(p);
      r.model_b = "n";
      r.result.status = s < succ ? AttackStatus::kSuccess : AttackStatus::kBudgetExhausted;
      recs.push_back(std::move(r));
    }
  }
  const auto rep = dsr_differential(recs);
  char buf[64];
  std::snprintf(buf, sizeof buf, "overall %.4f", rep.overall_dsr);
  out.detail = buf;
  out.require(rep.pair_dsr.size() == 10 && close(rep.overall_dsr, 0.992, 0.002), out.detail);
  return out;
}

std::string csv_without_timing(const ReportDocument& doc) {
  std::istringstream in(report_to_csv(doc));
  std::string line, kept;
  while (std::getline(in, line)) {
    if (line.rfind("# avg_time_ms", 0) == 0) continue;
    if (!line.empty() && line[0] != '#') line = line.substr(0, line.rfind(','));
    kept += line + "\n";
  }
  return kept;
}

// 5
Outcome campaign_a() {
  Outcome out;
  const auto seeds = load_seeds(fixture("pair_a/seeds.json"));
  LocalOracle a(load_model(fixture("pair_a/mlp_a.json")), AccessLevel::kTop1);
  LocalOracle b(load_model(fixture("pair_a/mlp_b.json")), AccessLevel::kTop1);
  const std::vector<const Oracle*> models{&a, &b};
  AttackConfig cfg;
  cfg.max_iterations = 10000;
  cfg.c = 0.001;
  const nlohmann::json config{{"budget", 10000}, {"c", 0.001}};
  const auto first = make_report(config, {"mlp_a", "mlp_b"}, run_campaign(seeds.entries, models, cfg, workers()));
  const auto second = make_report(config, {"mlp_a", "mlp_b"}, run_campaign(seeds.entries, models, cfg, 1));
  const auto& s = first.summary;
  char buf[128];
  std::snprintf(buf, sizeof buf, "%zu seeds, DSR %.3f, mean queries %.1f", seeds.entries.size(),
                s.overall_dsr, s.avg_queries.value_or(0.0));
  out.detail = buf;
  out.require(seeds.entries.size() == 50, "expected 50 seeds");
  out.require(s.overall_dsr >= 0.95, out.detail);
  out.require(s.avg_queries && *s.avg_queries <= 10000.0, out.detail);
  out.require(csv_without_timing(first) == csv_without_timing(second), "CSV differs between reruns");
  return out;
}

// 6
Outcome regression_campaign() {
  Outcome out;
  const auto seeds = load_seeds(fixture("regression/seeds.json"));
  const Model ma = load_model(fixture("regression/steer_a.json"));
  const Model mb = load_model(fixture("regression/steer_b.json"));
  LocalOracle a(ma, AccessLevel::kTop1), b(mb, AccessLevel::kTop1);
  const std::vector<const Oracle*> models{&a, &b};
  AttackConfig cfg;
  cfg.max_iterations = 10000;
  cfg.c = 0.0002;
  cfg.mode = DivergenceMode::kRegressionGap;
  cfg.regression_threshold = 0.2;
  const auto recs = run_campaign(seeds.entries, models, cfg, workers());
  std::size_t successes = 0;
  for (const auto& r : recs) {
    if (!r.result.success()) continue;
    ++successes;
    LocalOracle c1(ma, AccessLevel::kTop1), c2(mb, AccessLevel::kTop1);
    const double gap = std::fabs(*c1.query(r.result.adversarial).value - *c2.query(r.result.adversarial).value);
    out.require(gap >= 0.2, r.seed_id + " re-queried gap " + std::to_string(gap));
  }
  if (out.ok) out.detail = std::to_string(successes) + "/" + std::to_string(recs.size()) + " successes, all re-query >= 0.2";
  out.require(successes > 0, "no successes to check");
  return out;
}

// 7
Outcome zero_c_invariance() {
  Outcome out;
  std::mt19937_64 eng(7);
  const Shape shape{2, 3};
  const Model ma = testing::random_mlp("a", shape, 5, 3, eng);
  const Model mb = testing::random_mlp("b", shape, 5, 3, eng);
  LocalOracle o1(ma, AccessLevel::kFullDistribution), o2(mb, AccessLevel::kFullDistribution);
  const std::vector<double> scales{1e-9, 1e-3, 0.5, 1.0, 3.0, 1e3, 1e9};
  const auto x = testing::random_tensor(shape, eng);
  const int ref = o1.query(x).top_label;
  Rng rng(99);
  InputTensor incumbent = x;
  for (int i = 0; i < 100; ++i) {
    const auto cand = mutate(incumbent, rng);
    for (auto mode : {DivergenceMode::kReferenceLabelGap, DivergenceMode::kL1Distribution}) {
      const double d_inc = divergence(o1.query(incumbent), o2.query(incumbent), mode, ref);
      const double d_new = divergence(o1.query(cand), o2.query(cand), mode, ref);
      const double l_inc = l2_distance(incumbent, x), l_new = l2_distance(cand, x);
      const bool base = fitness_from_terms(d_new, l_new, 0.0) > fitness_from_terms(d_inc, l_inc, 0.0);
      for (double k : scales) {
        const bool scaled =
            fitness_from_terms(d_new, k * l_new, 0.0) > fitness_from_terms(d_inc, k * l_inc, 0.0);
        out.require(scaled == base, "decision flipped at evaluation " + std::to_string(i));
      }
      if (mode == DivergenceMode::kReferenceLabelGap && base) incumbent = cand;
    }
  }
  return out;
}

// 8
Outcome nondifferential() {
  Outcome out;
  const auto entries = load_nondifferential_entries(fixture("threshold/adversarials.json"));
  LocalOracle b(load_model(fixture("threshold/thr_200.json")), AccessLevel::kTop1);
  LocalOracle same(load_model(fixture("threshold/thr_128.json")), AccessLevel::kTop1);
  const double dsr = dsr_nondifferential(entries, b);
  const double dsr_same = dsr_nondifferential(entries, same);
  out.detail = "threshold " + std::to_string(dsr) + ", identical " + std::to_string(dsr_same);
  out.require(dsr == 0.5 && dsr_same == 0.0, out.detail);
  return out;
}

// 9
Outcome codec_round_trips() {
  Outcome out;
  std::mt19937_64 eng(9);
  std::uniform_int_distribution<std::size_t> ext(1, 16);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 1000 && out.ok; ++i) {
    GrayImage img;
    img.width = ext(eng);
    img.height = ext(eng);
    const auto x = testing::random_tensor(Shape{img.height, img.width}, eng);
    for (double v : x.values()) img.pixels.push_back(to_byte(v));
    const GrayImage back = decode_pgm(encode_pgm(img));
    out.require(back.width == img.width && back.height == img.height && back.pixels == img.pixels,
                "PGM case " + std::to_string(i));

    CampaignRecord r;
    r.seed_id = "s" + std::to_string(i);
    r.model_a = "a";
    r.model_b = "b";
    r.result.status = u(eng) < 0.5 ? AttackStatus::kSuccess : AttackStatus::kBudgetExhausted;
    r.result.adversarial = x;
    r.result.divergence = u(eng);
    r.result.fitness = u(eng) - 0.5;
    r.result.l2 = u(eng) * 100;
    r.result.queries_per_oracle = 1 + eng() % 10000;
    r.result.iterations = r.result.queries_per_oracle - 1;
    r.result.elapsed = std::chrono::nanoseconds(eng() % 1000000000);
    r.result.seed_prediction_1 = r.result.final_prediction_1 = Prediction::from_distribution({0.25, 0.75});
    r.result.seed_prediction_2 = r.result.final_prediction_2 =
        truncate(Prediction::from_distribution({0.6, 0.4}), AccessLevel::kTop1);
    const auto doc = make_report({{"case", i}}, {"a", "b"}, {r});
    const auto text = report_to_json(doc).dump();
    out.require(report_from_json(nlohmann::json::parse(text)) == doc,
                "JSON case " + std::to_string(i));
  }
  return out;
}

// 10
Outcome remote_conformance() {
  Outcome out;
  const Model m = load_model(fixture("pair_a/mlp_a.json"));
  StubServer server(m);
  server.start();
  std::mt19937_64 eng(10);
  const std::chrono::milliseconds timeout{2000};
  for (AccessLevel level : {AccessLevel::kFullDistribution, AccessLevel::kTop1, AccessLevel::kLabelOnly}) {
    LocalOracle local(m, level);
    RemoteOracle remote("remote", server.url(), TaskKind::kClassification, level, m.input_shape, timeout);
    for (int i = 0; i < 20; ++i) {
      const auto x = testing::random_tensor(m.input_shape, eng);
      out.require(remote.query(x) == local.query(x),
                  std::string("mismatch at access ") + to_string(level));
    }
  }
  RemoteOracle remote("remote", server.url(), TaskKind::kClassification, AccessLevel::kTop1,
                      m.input_shape, timeout);
  const auto x = InputTensor::zeros(m.input_shape);
  int before = server.request_count();
  server.fail_next(2);
  try {
    remote.query(x);
  } catch (const Error& e) {
    out.require(false, std::string("two injected 500s not absorbed: ") + e.what());
  }
  out.require(server.request_count() - before == 3, "expected 3 attempts after two 500s");
  before = server.request_count();
  server.fail_next(3);
  int attempts = 0;
  try {
    remote.query(x);
  } catch (const TransportError& e) {
    attempts = e.attempts();
  }
  out.require(attempts == 3 && server.request_count() - before == 3,
              "three injected 500s should fail after 3 attempts");
  return out;
}

struct Criterion {
  int number;
  const char* name;
  double limit_s;
  std::function<Outcome()> run;
};

}  // namespace

int main() {
  const std::vector<Criterion> criteria{
      {1, "forward-pass fixtures to 1e-9", 1, forward_fixtures},
      {2, "hill-climb soundness, 200 runs at T=200", 30, soundness_suite},
      {3, "linear pair enumeration and >= 9/10 attacks at T=5000", 10, linear_pair},
      {4, "ten-cell DSR mean 0.992 +- 0.002", 1, ten_cell_mean},
      {5, "fixture campaign A, DSR >= 0.95", 300, campaign_a},
      {6, "regression campaign, every success >= 0.2 on re-query", 60, regression_campaign},
      {7, "c=0 decisions invariant to distance rescaling", 5, zero_c_invariance},
      {8, "non-differential DSR 0.5 and 0.0", 1, nondifferential},
      {9, "PGM and JSON report round-trips, 1000 cases", 10, codec_round_trips},
      {10, "stub server conformance and 3-retry on 500s", 30, remote_conformance},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o.ok = false;
      o.detail = std::string("exception: ") + e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (o.ok && secs > c.limit_s) {
      o.ok = false;
      o.detail = "over the " + std::to_string(static_cast<int>(c.limit_s)) + " s limit";
    }
    failed += o.ok ? 0 : 1;
    std::printf("[%s] %2d %s (%.2f s)%s%s\n", o.ok ? "PASS" : "FAIL", c.number, c.name, secs,
                o.detail.empty() ? "" : ": ", o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
