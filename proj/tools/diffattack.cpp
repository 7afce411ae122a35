// diffattack: command-line front end for differential hill-climbing attacks.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "diffattack/diffattack.hpp"

namespace fs = std::filesystem;
using namespace diffattack;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitNoDiae = 2;

struct CommonOptions {
  std::vector<std::string> models;
  std::string seeds;
  std::uint64_t budget = 10000;
  double c = 0.001;
  std::string mode = "ref-gap";
  double delta = 0.2;
  std::optional<double> epsilon;
  std::uint64_t rng_seed = 0;
  std::size_t parallel = 1;
  std::string out;
  std::string format = "both";
  std::string access = "auto";
  bool save_adversarials = false;
};

void add_attack_flags(CLI::App* cmd, CommonOptions& o, bool needs_out) {
  cmd->add_option("--models", o.models, "Model weight files or http(s) endpoints")->required();
  cmd->add_option("--seeds", o.seeds, "Seed manifest (JSON)")->required()->check(CLI::ExistingFile);
  cmd->add_option("--budget", o.budget, "Query budget T per oracle")->capture_default_str()
      ->check(CLI::PositiveNumber);
  cmd->add_option("--c", o.c, "L2 rescaling constant")->capture_default_str()
      ->check(CLI::NonNegativeNumber);
  cmd->add_option("--mode", o.mode, "Divergence mode")->capture_default_str()
      ->check(CLI::IsMember({"ref-gap", "l1-dist", "regression"}));
  cmd->add_option("--delta", o.delta, "Regression success gap")->capture_default_str()
      ->check(CLI::PositiveNumber);
  cmd->add_option("--epsilon", o.epsilon, "Hard L2 cap on candidates (off by default)")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--rng-seed", o.rng_seed, "Base RNG seed")->capture_default_str();
  cmd->add_option("--access", o.access,
                  "Oracle access level; auto = full for l1-dist, top1 otherwise")
      ->capture_default_str()
      ->check(CLI::IsMember({"auto", "full", "top1", "label"}));
  auto* out = cmd->add_option("--out", o.out, "Output directory");
  if (needs_out) out->required();
  cmd->add_flag("--save-adversarials", o.save_adversarials, "Write adversarial inputs");
}

AccessLevel resolve_access(const std::string& access, DivergenceMode mode) {
  if (access == "full") return AccessLevel::kFullDistribution;
  if (access == "top1") return AccessLevel::kTop1;
  if (access == "label") return AccessLevel::kLabelOnly;
  return mode == DivergenceMode::kL1Distribution ? AccessLevel::kFullDistribution
                                                 : AccessLevel::kTop1;
}

AttackConfig attack_config(const CommonOptions& o) {
  AttackConfig cfg;
  cfg.max_iterations = o.budget;
  cfg.c = o.c;
  cfg.mode = divergence_mode_from_string(o.mode);
  cfg.regression_threshold = o.delta;
  cfg.rng_seed = o.rng_seed;
  cfg.epsilon = o.epsilon;
  cfg.validate();
  return cfg;
}

std::unique_ptr<Oracle> make_oracle(const std::string& source, AccessLevel access, TaskKind task,
                                    const Shape& input_shape) {
  if (is_remote_endpoint(source)) {
    return std::make_unique<RemoteOracle>(source, source, task, access, input_shape);
  }
  auto oracle = std::make_unique<LocalOracle>(load_model(source), access);
  if (oracle->input_shape() != input_shape) {
    throw ConfigError("model '" + oracle->id() + "' takes " + oracle->input_shape().to_string() +
                      " inputs but the seeds are " + input_shape.to_string());
  }
  return oracle;
}

std::vector<std::unique_ptr<Oracle>> make_oracles(const CommonOptions& o, const AttackConfig& cfg,
                                                  const Shape& input_shape) {
  const AccessLevel access = resolve_access(o.access, cfg.mode);
  const TaskKind task = cfg.mode == DivergenceMode::kRegressionGap ? TaskKind::kRegression
                                                                    : TaskKind::kClassification;
  std::vector<std::unique_ptr<Oracle>> out;
  for (const auto& m : o.models) out.push_back(make_oracle(m, access, task, input_shape));
  return out;
}

nlohmann::json config_echo(const CommonOptions& o) {
  return {{"models", o.models},
          {"seeds", o.seeds},
          {"budget", o.budget},
          {"c", o.c},
          {"mode", o.mode},
          {"delta", o.delta},
          {"epsilon", o.epsilon ? nlohmann::json(*o.epsilon) : nlohmann::json(nullptr)},
          {"rng_seed", o.rng_seed},
          {"access", o.access},
          {"parallel", o.parallel}};
}

std::string describe(const Prediction& p) {
  if (p.task == TaskKind::kRegression) return detail::fixed6(p.value.value_or(0.0));
  std::string s = std::to_string(p.top_label);
  if (p.top_prob) s += " (p=" + detail::fixed6(*p.top_prob) + ")";
  return s;
}

void save_input(const InputTensor& x, const fs::path& stem) {
  const auto& d = x.shape().dims();
  if (d.size() == 2 || (d.size() == 3 && d[2] == 1)) {
    save_adversarial(x, fs::path(stem).concat(".pgm"));
    return;
  }
  std::vector<std::uint8_t> bytes;
  for (double v : x.values()) bytes.push_back(to_byte(v));
  write_bytes(fs::path(stem).concat(".raw"), bytes);
}

std::string file_safe(std::string s) {
  for (char& ch : s) {
    if (!std::isalnum(static_cast<unsigned char>(ch)) && ch != '-' && ch != '_' && ch != '.') ch = '_';
  }
  return s;
}

void print_result(const AttackResult& r) {
  std::cout << "status: " << to_string(r.status) << '\n'
            << "queries_per_oracle: " << r.queries_per_oracle << '\n'
            << "iterations: " << r.iterations << '\n'
            << "divergence: " << detail::fixed6(r.divergence) << '\n'
            << "fitness: " << detail::fixed6(r.fitness) << '\n'
            << "l2: " << detail::fixed6(r.l2) << '\n'
            << "elapsed_ms: "
            << detail::fixed6(std::chrono::duration<double, std::milli>(r.elapsed).count()) << '\n'
            << "seed_outputs: " << describe(r.seed_prediction_1) << " | "
            << describe(r.seed_prediction_2) << '\n'
            << "final_outputs: " << describe(r.final_prediction_1) << " | "
            << describe(r.final_prediction_2) << '\n';
}

int cmd_attack(const CommonOptions& o, const std::string& seed_id) {
  if (o.models.size() != 2) throw ConfigError("attack needs exactly two models");
  const AttackConfig cfg = attack_config(o);
  const SeedSet seeds = load_seeds(o.seeds);
  const SeedEntry* seed = nullptr;
  if (seed_id.empty()) {
    if (seeds.entries.size() != 1) {
      throw ConfigError("manifest holds " + std::to_string(seeds.entries.size()) +
                        " seeds; pick one with --seed-id");
    }
    seed = &seeds.entries.front();
  } else {
    for (const auto& e : seeds.entries) {
      if (e.id == seed_id) seed = &e;
    }
    if (!seed) throw ConfigError("no seed '" + seed_id + "' in " + o.seeds);
  }
  auto oracles = make_oracles(o, cfg, seeds.shape);
  const AttackResult result = hill_climb(seed->input, *oracles[0], *oracles[1], cfg);
  std::cout << "seed: " << seed->id << '\n'
            << "models: " << oracles[0]->id() << " " << oracles[1]->id() << '\n';
  print_result(result);
  if (o.save_adversarials) {
    const fs::path dir = o.out.empty() ? fs::path(".") : fs::path(o.out);
    fs::create_directories(dir);
    save_input(result.adversarial, dir / file_safe(seed->id));
  }
  return result.success() ? kExitOk : kExitNoDiae;
}

std::vector<std::string> model_ids(const std::vector<std::unique_ptr<Oracle>>& oracles) {
  std::vector<std::string> ids;
  for (const auto& o : oracles) ids.push_back(o->id());
  return ids;
}

void print_matrix(const ReportDocument& doc) {
  const auto m = pair_matrix(doc.summary, doc.model_ids);
  std::cout << "pair DSR matrix:\n";
  for (std::size_t i = 0; i < m.size(); ++i) {
    std::cout << "  " << doc.model_ids[i] << ":";
    for (const auto& cell : m[i]) std::cout << ' ' << (cell ? detail::fixed6(*cell) : "NA");
    std::cout << '\n';
  }
}

int run_campaign_command(const CommonOptions& o, bool matrix) {
  const std::size_t min_models = matrix ? 3 : 2;
  if (o.models.size() < min_models) {
    throw ConfigError(std::string(matrix ? "matrix" : "campaign") + " needs at least " +
                      std::to_string(min_models) + " models");
  }
  const AttackConfig cfg = attack_config(o);
  const SeedSet seeds = load_seeds(o.seeds);
  auto oracles = make_oracles(o, cfg, seeds.shape);
  std::vector<const Oracle*> views;
  for (const auto& p : oracles) views.push_back(p.get());

  auto records = run_campaign(seeds.entries, views, cfg, o.parallel);
  const ReportDocument doc = make_report(config_echo(o), model_ids(oracles), std::move(records));

  const fs::path dir(o.out);
  fs::create_directories(dir);
  if (o.format == "csv" || o.format == "both") write_report(doc, dir / "report.csv", ReportFormat::kCsv);
  if (o.format == "json" || o.format == "both") write_report(doc, dir / "report.json", ReportFormat::kJson);
  if (matrix) {
    std::ofstream out(dir / "matrix.csv");
    const auto m = pair_matrix(doc.summary, doc.model_ids);
    out << "model";
    for (const auto& id : doc.model_ids) out << ',' << id;
    out << '\n';
    for (std::size_t i = 0; i < m.size(); ++i) {
      out << doc.model_ids[i];
      for (const auto& cell : m[i]) out << ',' << (cell ? detail::fixed6(*cell) : "NA");
      out << '\n';
    }
    out << "overall," << detail::fixed6(doc.summary.overall_dsr) << '\n';
    if (!out) throw IoError("cannot write " + (dir / "matrix.csv").string());
  }
  if (o.save_adversarials) {
    const fs::path adv = dir / "adversarials";
    fs::create_directories(adv);
    for (const auto& r : doc.records) {
      if (!r.result.success()) continue;
      save_input(r.result.adversarial, adv / file_safe(r.seed_id + "__" + r.model_a + "__" + r.model_b));
    }
  }

  const auto& s = doc.summary;
  std::cout << "records: " << s.records << '\n'
            << "successes: " << s.successes << '\n'
            << "overall_dsr: " << detail::fixed6(s.overall_dsr) << '\n'
            << "avg_l2: " << (s.avg_l2 ? detail::fixed6(*s.avg_l2) : "NA") << '\n'
            << "avg_queries: " << (s.avg_queries ? detail::fixed6(*s.avg_queries) : "NA") << '\n'
            << "avg_time_ms: " << (s.avg_time_ms ? detail::fixed6(*s.avg_time_ms) : "NA") << '\n';
  if (matrix) print_matrix(doc);
  return kExitOk;
}

struct AdaptOptions {
  std::string adversarials;
  std::string model_b;
  std::string access = "top1";
  double delta = 0.2;
  std::string out;
};

int cmd_adapt_dsr(const AdaptOptions& o) {
  auto entries = load_nondifferential_entries(o.adversarials);
  if (entries.empty()) throw ConfigError("adversarial manifest has no entries");
  const Shape shape = entries.front().adversarial.shape();
  const TaskKind task = entries.front().model_a_output.task;
  const AccessLevel access = resolve_access(o.access, DivergenceMode::kReferenceLabelGap);
  auto model_b = make_oracle(o.model_b, access, task, shape);
  const double dsr = dsr_nondifferential(entries, *model_b, o.delta);
  std::size_t succeeded = 0;
  for (const auto& e : entries) succeeded += e.success_on_a ? 1 : 0;
  std::cout << "model_b: " << model_b->id() << '\n'
            << "entries: " << entries.size() << '\n'
            << "success_on_a: " << succeeded << '\n'
            << "dsr: " << detail::fixed6(dsr) << '\n';
  if (!o.out.empty()) {
    fs::create_directories(o.out);
    std::ofstream out(fs::path(o.out) / "adapt_dsr.json");
    out << nlohmann::json{{"schema_version", kReportSchemaVersion},
                          {"adversarials", o.adversarials},
                          {"model_b", model_b->id()},
                          {"entries", entries.size()},
                          {"success_on_a", succeeded},
                          {"dsr", dsr}}
               .dump(1)
        << '\n';
    if (!out) throw IoError("cannot write adapt_dsr.json");
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Differential black-box adversarial input search"};
  app.require_subcommand(1);

  CommonOptions attack_opts;
  std::string seed_id;
  auto* attack = app.add_subcommand("attack", "Attack one seed with one model pair");
  add_attack_flags(attack, attack_opts, false);
  attack->add_option("--seed-id", seed_id, "Seed to attack when the manifest holds several");

  CommonOptions campaign_opts;
  auto* campaign = app.add_subcommand("campaign", "Attack every seed for every model pair");
  add_attack_flags(campaign, campaign_opts, true);
  campaign->add_option("--parallel", campaign_opts.parallel, "Concurrent attack tasks")
      ->capture_default_str()->check(CLI::PositiveNumber);
  campaign->add_option("--format", campaign_opts.format, "Report format")->capture_default_str()
      ->check(CLI::IsMember({"csv", "json", "both"}));

  CommonOptions matrix_opts;
  auto* matrix = app.add_subcommand("matrix", "All-pairs DSR matrix over three or more models");
  add_attack_flags(matrix, matrix_opts, true);
  matrix->add_option("--parallel", matrix_opts.parallel, "Concurrent attack tasks")
      ->capture_default_str()->check(CLI::PositiveNumber);
  matrix->add_option("--format", matrix_opts.format, "Report format")->capture_default_str()
      ->check(CLI::IsMember({"csv", "json", "both"}));

  AdaptOptions adapt_opts;
  auto* adapt = app.add_subcommand("adapt-dsr",
                                   "DSR of single-model adversarials judged against a second model");
  adapt->add_option("--adversarials", adapt_opts.adversarials, "Adversarial manifest (JSON)")
      ->required()->check(CLI::ExistingFile);
  adapt->add_option("--model-b", adapt_opts.model_b, "Model file or endpoint to judge with")
      ->required();
  adapt->add_option("--access", adapt_opts.access, "Access level for model b")
      ->capture_default_str()->check(CLI::IsMember({"full", "top1", "label"}));
  adapt->add_option("--delta", adapt_opts.delta, "Regression success gap")->capture_default_str()
      ->check(CLI::PositiveNumber);
  adapt->add_option("--out", adapt_opts.out, "Output directory");

  std::string serve_model;
  std::string serve_host = "127.0.0.1";
  int serve_port = 8080;
  auto* serve = app.add_subcommand("serve", "Serve a model over the predict protocol");
  serve->add_option("--model", serve_model, "Model weight file")->required()->check(CLI::ExistingFile);
  serve->add_option("--host", serve_host, "Bind address")->capture_default_str();
  serve->add_option("--port", serve_port, "Port")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitError;
  }

  try {
    if (*attack) return cmd_attack(attack_opts, seed_id);
    if (*campaign) return run_campaign_command(campaign_opts, false);
    if (*matrix) return run_campaign_command(matrix_opts, true);
    if (*adapt) return cmd_adapt_dsr(adapt_opts);
    if (*serve) {
      StubServer server(load_model(serve_model));
      std::cerr << "serving " << serve_model << " on http://" << serve_host << ":" << serve_port
                << '\n';
      server.listen(serve_host, serve_port);
      return kExitOk;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitError;
  }
  return kExitError;
}
