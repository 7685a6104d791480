// fedcarbon: energy / CO2e estimates, FL simulation and carbon-cost search.
//
// Exit codes: 0 success, 1 validation or usage error, 2 I/O error,
// 3 target accuracy not reached (simulate).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fedcarbon/fedcarbon.hpp"

namespace fs = std::filesystem;
using namespace fedcarbon;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitIo = 2;
constexpr int kExitNotReached = 3;
constexpr double kIidAlpha = 1000.0;

struct Options {
  std::vector<std::string> configs;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string fixtures;
  // subcommand-specific
  std::string schedule_out;
  std::string csv_out;
  std::string rule = "target";
  std::optional<double> alpha;
  std::vector<std::string> reports;
  std::string grid;
};

void emit(const std::string& text, const std::string& path) {
  if (path.empty()) {
    std::cout << text;
  } else {
    write_file_atomic(path, text);
  }
}

ExperimentConfig load(const std::string& path, const Options& opt, const Registry& registry) {
  ExperimentConfig cfg = load_config(path, registry);
  if (opt.seed) cfg.seed = *opt.seed;
  return cfg;
}

const std::string& single_config(const Options& opt) {
  if (opt.configs.size() != 1) throw validation_error("exactly one --config is required");
  return opt.configs.front();
}

int cmd_estimate(const Options& opt, const Registry& registry) {
  const ExperimentConfig cfg = load(single_config(opt), opt, registry);
  std::optional<RoundSchedule> schedule;
  if (!opt.fixtures.empty()) schedule = schedule_from_json(read_json_file(opt.fixtures), registry);
  const EmissionReport report = estimate(cfg, schedule);
  const std::string text = to_json(report).dump(2) + "\n";
  std::cout << text;
  if (!opt.out.empty()) write_file_atomic(opt.out, text);
  return kExitOk;
}

int cmd_compare(const Options& opt, const Registry& registry) {
  std::vector<ExperimentConfig> configs;
  std::vector<std::string> labels;
  for (const auto& p : opt.configs) {
    configs.push_back(load(p, opt, registry));
    labels.push_back(fs::path(p).stem().string());
  }
  emit(comparison_csv(compare(configs, labels)), opt.out);
  return kExitOk;
}

int cmd_simulate(const Options& opt, const Registry& registry) {
  const ExperimentConfig cfg = load(single_config(opt), opt, registry);
  if (cfg.mode != Mode::fl) throw validation_error("simulate requires mode \"fl\"");
  const FederatedTask task = build_task(cfg);
  const SimResult sim = run_simulation(cfg, task);
  const std::string digest = config_digest(cfg);
  emit(trace_csv(sim, digest, cfg.seed), opt.out);

  std::string schedule_path = opt.schedule_out;
  if (schedule_path.empty() && !opt.out.empty()) schedule_path = opt.out + ".schedule.json";
  if (!schedule_path.empty()) {
    json doc = to_json(sim.schedule);
    doc["config_digest"] = digest;
    doc["seed"] = cfg.seed;
    write_file_atomic(schedule_path, doc.dump(2) + "\n");
  }
  if (!rounds_to_target(sim.trace, cfg.sim.target_accuracy)) {
    std::cerr << "fedcarbon: target accuracy " << cfg.sim.target_accuracy << " not reached in "
              << sim.trace.rounds() << " rounds\n";
    return kExitNotReached;
  }
  return kExitOk;
}

int cmd_partition(const Options& opt, const Registry& registry) {
  const ExperimentConfig cfg = load(single_config(opt), opt, registry);
  const FederatedTask task = build_task(cfg, opt.alpha);
  // In the IID regime every q_k should sit close to the prior.
  if (task.partition.alpha >= 1000.0) {
    std::size_t off = 0;
    for (const auto& q : task.partition.per_client)
      for (std::size_t i = 0; i < q.size(); ++i)
        off += std::abs(q[i] - task.prior.proportions[i]) > 0.05 ? 1 : 0;
    if (off > 0)
      std::cerr << "fedcarbon: warning: " << off << " class proportions deviate from the prior by more than 0.05\n";
  }
  emit(partition_json(task, config_digest(cfg), cfg.seed).dump() + "\n", opt.out);
  return kExitOk;
}

int cmd_optimize(const Options& opt, const Registry& registry) {
  const AccuracyRule rule = opt.rule == "stable" ? AccuracyRule::stable : AccuracyRule::target;
  std::string digest = "fixture";
  std::uint64_t seed = opt.seed.value_or(0);
  SearchResult result;
  if (!opt.fixtures.empty()) {
    const json doc = read_json_file(opt.fixtures);
    const FixtureTable table = fixture_table_from_json(doc);
    digest = fnv1a_hex(doc.dump());
    result = grid_search(table.space(), table.runner(), table.target_accuracy, rule);
  } else {
    const ExperimentConfig cfg = load(single_config(opt), opt, registry);
    if (cfg.mode != Mode::fl) throw validation_error("optimize requires mode \"fl\"");
    digest = config_digest(cfg);
    seed = cfg.seed;
    SearchSpace space;
    for (std::size_t n = 1; n <= 10; ++n) space.clients.push_back(n);
    space.local_epochs = {1, 5};
    // IID is alpha = 1000; the config's alpha is the non-IID setting unless it
    // is itself IID, in which case 0.1 is used.
    const double non_iid = cfg.sim.alpha < kIidAlpha ? cfg.sim.alpha : 0.1;
    space.alphas = {non_iid, kIidAlpha};
    result = grid_search(space, simulation_runner(cfg), cfg.sim.target_accuracy, rule);
  }
  emit(optimize_json(result, digest, seed).dump(2) + "\n", opt.out);
  std::string csv_path = opt.csv_out;
  if (csv_path.empty() && !opt.out.empty()) csv_path = opt.out + ".csv";
  if (!csv_path.empty()) write_file_atomic(csv_path, optimize_csv(result));
  return kExitOk;
}

int cmd_plot(const Options& opt, const Registry& registry) {
  if (!opt.grid.empty()) {
    emit(grid_plot_data(read_json_file(opt.grid)), opt.out);
    return kExitOk;
  }
  if (!opt.reports.empty()) {
    std::vector<EmissionReport> reports;
    for (const auto& p : opt.reports) reports.push_back(report_from_json(read_json_file(p)));
    emit(reports_plot_data(reports), opt.out);
    return kExitOk;
  }
  if (opt.configs.empty()) throw validation_error("plot needs --config, --report or --grid");
  std::optional<RoundSchedule> schedule;
  if (!opt.fixtures.empty()) schedule = schedule_from_json(read_json_file(opt.fixtures), registry);
  std::vector<std::string> names;
  std::vector<std::vector<double>> series;
  for (const auto& p : opt.configs) {
    const ExperimentConfig cfg = load(p, opt, registry);
    names.push_back(!cfg.label.empty() ? cfg.label : fs::path(p).stem().string());
    series.push_back(emission_growth(cfg, cfg.mode == Mode::fl ? schedule : std::nullopt));
  }
  emit(growth_plot_data(names, series), opt.out);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Energy and CO2e accounting for federated and centralized training"};
  app.require_subcommand(1);
  Options opt;

  auto common = [&](CLI::App* sub, bool many_configs) {
    if (many_configs)
      sub->add_option("--config", opt.configs, "Experiment config (JSON); repeatable");
    else
      sub->add_option("--config", opt.configs, "Experiment config (JSON)")->expected(1);
    sub->add_option("--seed", opt.seed, "Override the config seed");
    sub->add_option("--out", opt.out, "Write output to this file");
    sub->add_option("--fixtures", opt.fixtures, "Fixture file (schedule JSON or recorded grid table)");
  };

  auto* estimate_cmd = app.add_subcommand("estimate", "Energy and CO2e report for one config");
  common(estimate_cmd, false);
  auto* simulate_cmd = app.add_subcommand("simulate", "Run the FL simulator; write trace CSV and schedule JSON");
  common(simulate_cmd, false);
  simulate_cmd->add_option("--schedule-out", opt.schedule_out, "Schedule JSON path (default <out>.schedule.json)");
  auto* partition_cmd = app.add_subcommand("partition", "Dirichlet (LDA) partition of the synthetic task");
  common(partition_cmd, false);
  partition_cmd->add_option("--alpha", opt.alpha, "Override the concentration");
  auto* optimize_cmd = app.add_subcommand("optimize", "Carbon-cost grid search");
  common(optimize_cmd, false);
  optimize_cmd->add_option("--rule", opt.rule, "Accuracy rule: target or stable")
      ->check(CLI::IsMember({"target", "stable"}));
  optimize_cmd->add_option("--csv-out", opt.csv_out, "CSV path (default <out>.csv)");
  auto* compare_cmd = app.add_subcommand("compare", "Comparison CSV across configs");
  common(compare_cmd, true);
  auto* plot_cmd = app.add_subcommand("plot", "Plot-data file for emissions growth, reports or a grid");
  common(plot_cmd, true);
  plot_cmd->add_option("--report", opt.reports, "Emission report JSON; repeatable");
  plot_cmd->add_option("--grid", opt.grid, "optimize JSON output");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitValidation;
  }

  try {
    const Registry registry = registry_from_environment();
    if (*estimate_cmd) return cmd_estimate(opt, registry);
    if (*simulate_cmd) return cmd_simulate(opt, registry);
    if (*partition_cmd) return cmd_partition(opt, registry);
    if (*optimize_cmd) return cmd_optimize(opt, registry);
    if (*compare_cmd) return cmd_compare(opt, registry);
    if (*plot_cmd) return cmd_plot(opt, registry);
  } catch (const io_error& e) {
    std::cerr << "fedcarbon: error: " << e.what() << '\n';
    return kExitIo;
  } catch (const error& e) {
    std::cerr << "fedcarbon: error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "fedcarbon: error: " << e.what() << '\n';
    return kExitValidation;
  }
  return kExitValidation;
}
