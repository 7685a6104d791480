#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "fedcarbon/carbon_model.hpp"
#include "fedcarbon/config.hpp"
#include "fedcarbon/fl_sim.hpp"
#include "fedcarbon/optimizer.hpp"
#include "fedcarbon/partitioner.hpp"

// Pipelines behind the command-line front end: config -> schedule -> report,
// comparisons, simulations, grid searches and plot-data files.
namespace fedcarbon {

// Fixed-length schedule implied by the "fl" block: fl.rounds rounds of
// clients_per_round seeded picks, each lasting local_epochs epochs.
inline RoundSchedule nominal_schedule(const ExperimentConfig& cfg) {
  if (!cfg.fl.rounds) throw validation_error("fl.rounds is required when no schedule file is given");
  RoundSchedule s;
  s.rounds = *cfg.fl.rounds;
  const double t = static_cast<double>(cfg.fl.local_epochs) * cfg.hardware.time_per_local_epoch_s;
  s.participation.reserve(s.rounds * cfg.fl.clients_per_round);
  for (std::uint64_t r = 0; r < s.rounds; ++r)
    for (auto c : select_clients(cfg.fl.pool_size, cfg.fl.clients_per_round, r, cfg.seed))
      s.participation.push_back(Participation{r, c, t, cfg.hardware});
  return s;
}

inline EmissionReport estimate(const ExperimentConfig& cfg, const std::optional<RoundSchedule>& schedule = {}) {
  if (cfg.mode == Mode::centralized) return estimate_centralized(cfg);
  return estimate_fl(cfg, schedule ? *schedule : nominal_schedule(cfg));
}

inline EmissionReport with_grid(EmissionReport r, const GridIntensity& grid) {
  r.grid = grid;
  r.co2e_g = to_co2e(r.energy.total_wh, grid);
  return r;
}

struct ComparisonRow {
  std::string label;
  Mode mode = Mode::fl;
  std::vector<double> co2e_g;  // one per region, in region order
  double comm_fraction = 0.0;
  std::uint64_t rounds_or_epochs = 0;
};

struct Comparison {
  std::vector<std::string> regions;
  std::vector<ComparisonRow> rows;
};

inline Comparison compare(const std::vector<ExperimentConfig>& configs, const std::vector<std::string>& labels) {
  if (configs.size() < 2) throw validation_error("compare needs at least two configs");
  Comparison out;
  for (const auto& r : configs.front().regions) out.regions.push_back(r.region);
  for (std::size_t i = 0; i < configs.size(); ++i) {
    const auto& cfg = configs[i];
    std::vector<std::string> regions;
    for (const auto& r : cfg.regions) regions.push_back(r.region);
    if (regions != out.regions)
      throw validation_error("region mismatch: config " + std::to_string(i + 1) +
                             " does not share the first config's region list");
    const EmissionReport base = estimate(cfg);
    ComparisonRow row;
    row.label = !cfg.label.empty() ? cfg.label : (i < labels.size() ? labels[i] : "config" + std::to_string(i + 1));
    row.mode = cfg.mode;
    for (const auto& g : cfg.regions) row.co2e_g.push_back(with_grid(base, g).co2e_g);
    row.comm_fraction = base.energy.comm_fraction;
    row.rounds_or_epochs = cfg.mode == Mode::centralized ? cfg.centralized.epochs : cfg.fl.rounds.value_or(0);
    out.rows.push_back(std::move(row));
  }
  return out;
}

// Grams are display-rounded to one decimal.
inline std::string comparison_csv(const Comparison& c) {
  std::ostringstream os;
  os << "label,mode";
  for (const auto& r : c.regions) os << ',' << r << "_co2e_g";
  os << ",comm_fraction,rounds_or_epochs\n";
  for (const auto& row : c.rows) {
    os << row.label << ',' << to_string(row.mode);
    for (double g : row.co2e_g) os << ',' << format_fixed(display_grams(g), 1);
    os << ',' << format_fixed(row.comm_fraction, 4) << ',' << row.rounds_or_epochs << '\n';
  }
  return os.str();
}

// Dataset, prior, partition and sample assignment derived from a config.
struct FederatedTask {
  SimDataset dataset;
  ClassPrior prior;
  Partition partition;
  Assignment assignment;
};

inline constexpr std::uint64_t kConfigPartitionStream = 0x70617274636f6e66ULL;

inline FederatedTask build_task(const ExperimentConfig& cfg, std::optional<double> alpha_override = {}) {
  const SimSettings& s = cfg.sim;
  FederatedTask t;
  t.dataset = make_task(s.classes, s.features, s.samples, cfg.seed, s.separation);
  if (s.prior == PriorKind::uniform) {
    t.prior = uniform_prior(s.classes);
  } else {
    std::vector<std::uint64_t> counts(s.classes, 0);
    for (auto i : t.dataset.train) ++counts[t.dataset.labels[i]];
    t.prior = empirical_prior(counts);
  }
  const std::size_t pool = cfg.fl.pool_size;
  std::size_t per_client = s.samples_per_client;
  if (per_client == 0) per_client = t.dataset.train.size() / pool;
  if (per_client == 0)
    throw validation_error("training split of " + std::to_string(t.dataset.train.size()) +
                           " samples is too small for " + std::to_string(pool) + " clients");
  const std::uint64_t seed = derive_seed(cfg.seed, {kConfigPartitionStream});
  t.partition = lda_partition(t.prior, alpha_override.value_or(s.alpha), pool, per_client, seed);

  std::vector<std::size_t> train_labels;
  train_labels.reserve(t.dataset.train.size());
  for (auto i : t.dataset.train) train_labels.push_back(t.dataset.labels[i]);
  t.assignment = assign_samples(train_labels, t.partition, seed);
  // assign_samples indexes the training split; map back to dataset rows.
  for (auto& shard : t.assignment.per_client)
    for (auto& idx : shard) idx = t.dataset.train[idx];
  return t;
}

inline SimResult run_simulation(const ExperimentConfig& cfg, const FederatedTask& task) {
  return simulate(make_sim_config(cfg), task.dataset, task.assignment.per_client, cfg.hardware);
}

// round,accuracy,cumulative_wh (training energy of rounds 1..r).
inline std::string trace_csv(const SimResult& sim, const std::string& digest, std::uint64_t seed) {
  std::ostringstream os;
  os << "# config_digest=" << digest << " seed=" << seed << '\n';
  os << "round,accuracy,cumulative_wh\n";
  std::vector<double> per_round(sim.trace.rounds(), 0.0);
  for (const auto& p : sim.schedule.participation)
    per_round[p.round] += p.wall_time_s * p.hardware.active_power_w / kSecondsPerHour;
  double cumulative = 0.0;
  for (std::size_t r = 0; r < sim.trace.rounds(); ++r) {
    cumulative += per_round[r];
    os << (r + 1) << ',' << format_double(sim.trace.accuracy[r]) << ',' << format_double(cumulative) << '\n';
  }
  return os.str();
}

inline json partition_json(const FederatedTask& t, const std::string& digest, std::uint64_t seed) {
  return json{{"alpha", t.partition.alpha},
              {"prior", t.partition.prior.proportions},
              {"per_client", t.partition.per_client},
              {"assignments", t.assignment.per_client},
              {"warnings", t.assignment.warnings},
              {"config_digest", digest},
              {"seed", seed}};
}

// Transfer term for the emission objective under the config's WAN model.
inline TransferTerm transfer_term(const ExperimentConfig& cfg) {
  switch (cfg.fl.wan_model) {
    case WanModel::router:
      return RouterTransfer{cfg.fl.model_size_mb, cfg.network.value(), cfg.hardware.idle_power_w};
    case WanModel::legacy_5kwh_per_gb:
      return LegacyTransfer{megabits_to_gigabytes(cfg.fl.model_size_mb)};
    case WanModel::none:
      return LegacyTransfer{0.0};
  }
  return LegacyTransfer{0.0};
}

// Runs every cell through the simulator for the full sim.max_rounds and
// prices the rounds with objective_F.
inline CellRunner simulation_runner(const ExperimentConfig& base) {
  return [base](const GridCell& cell) {
    ExperimentConfig cfg = base;
    cfg.fl.clients_per_round = cell.clients;
    cfg.fl.local_epochs = cell.local_epochs;
    cfg.fl.pool_size = std::max<std::uint64_t>(cfg.fl.pool_size, cell.clients);
    cfg.sim.alpha = cell.alpha;
    cfg.sim.target_accuracy = 1.0;
    const FederatedTask task = build_task(cfg);
    const SimResult sim = run_simulation(cfg, task);
    const double t = static_cast<double>(cell.local_epochs) * cfg.hardware.time_per_local_epoch_s;
    const auto transfer = transfer_term(cfg);
    auto priced = [&](std::size_t rounds, double acc) {
      return Measurement{rounds,
                         objective_F(static_cast<double>(rounds), static_cast<double>(cell.clients), t, cfg.grid,
                                     cfg.hardware.active_power_w, transfer),
                         acc};
    };
    CellOutcome out;
    const auto& acc = sim.trace.accuracy;
    const auto best = static_cast<std::size_t>(std::max_element(acc.begin(), acc.end()) - acc.begin());
    out.at_best = priced(best + 1, acc[best]);
    if (auto r = rounds_to_target(sim.trace, base.sim.target_accuracy)) out.at_target = priced(*r, acc[*r - 1]);
    return out;
  };
}

// Recorded grid-search outcomes, e.g. the CIFAR10 carbon-cost tables.
struct FixtureTable {
  double target_accuracy = 0.6;
  std::map<std::string, double> alphas;  // partition label -> alpha
  struct Row {
    std::string partition;
    std::size_t local_epochs = 1;
    std::size_t clients = 1;
    std::optional<Measurement> target;
    std::optional<double> target_recorded_cost;
    Measurement stable;
    double stable_recorded_cost = 0.0;
  };
  std::vector<Row> rows;

  double alpha_of(const std::string& partition) const {
    auto it = alphas.find(partition);
    if (it == alphas.end()) throw validation_error("fixture partition \"" + partition + "\" has no alpha");
    return it->second;
  }

  SearchSpace space() const {
    SearchSpace s;
    auto add = [](auto& v, auto x) {
      if (std::find(v.begin(), v.end(), x) == v.end()) v.push_back(x);
    };
    for (const auto& r : rows) {
      add(s.clients, r.clients);
      add(s.local_epochs, r.local_epochs);
      add(s.alphas, alpha_of(r.partition));
    }
    std::sort(s.clients.begin(), s.clients.end());
    std::sort(s.local_epochs.begin(), s.local_epochs.end());
    std::sort(s.alphas.begin(), s.alphas.end());
    return s;
  }

  CellRunner runner() const {
    return [this](const GridCell& cell) {
      for (const auto& r : rows) {
        if (r.clients == cell.clients && r.local_epochs == cell.local_epochs && alpha_of(r.partition) == cell.alpha)
          return CellOutcome{r.target, r.stable};
      }
      throw validation_error("fixture has no row for n=" + std::to_string(cell.clients) + ", " +
                             std::to_string(cell.local_epochs) + " local epochs, alpha=" + format_double(cell.alpha));
    };
  }
};

inline FixtureTable fixture_table_from_json(const json& j) {
  constexpr std::string_view ctx = "fixture";
  jf::expect_object(j, ctx);
  FixtureTable t;
  t.target_accuracy = jf::number(j, ctx, "target_accuracy");
  const json& alphas = jf::at(j, ctx, "alphas");
  jf::expect_object(alphas, "fixture.alphas");
  for (const auto& [k, v] : alphas.items()) t.alphas[k] = jf::as_number(v, "fixture.alphas", k);
  const json& blocks = jf::at(j, ctx, "blocks");
  if (!blocks.is_array()) throw parse_error("\"fixture.blocks\" must be an array");
  for (const auto& b : blocks) {
    const std::string partition = jf::string(b, "fixture.blocks[]", "partition");
    const auto epochs = jf::unsigned_int(b, "fixture.blocks[]", "local_epochs");
    for (const auto& r : jf::at(b, "fixture.blocks[]", "rows")) {
      constexpr std::string_view rctx = "fixture.blocks[].rows[]";
      FixtureTable::Row row;
      row.partition = partition;
      row.local_epochs = epochs;
      row.clients = jf::unsigned_int(r, rctx, "n");
      const json& tgt = jf::at(r, rctx, "target");
      if (!tgt.is_null()) {
        row.target = Measurement{jf::unsigned_int(tgt, "target", "rounds"), jf::number(tgt, "target", "co2e_g"),
                                 t.target_accuracy};
        row.target_recorded_cost = jf::number(tgt, "target", "carbon_cost");
      }
      const json& st = jf::at(r, rctx, "stable");
      row.stable = Measurement{jf::unsigned_int(st, "stable", "rounds"), jf::number(st, "stable", "co2e_g"),
                               jf::number(st, "stable", "accuracy")};
      row.stable_recorded_cost = jf::number(st, "stable", "carbon_cost");
      t.rows.push_back(std::move(row));
    }
  }
  return t;
}

inline std::vector<CostPoint> ranked_points(const SearchResult& r) {
  std::vector<CostPoint> out;
  for (auto i : r.ranking)
    if (auto p = r.entries[i].point(r.rule)) out.push_back(*p);
  return out;
}

// {cells, ranking, pareto, winner}; "cells" in enumeration order and every
// index refers into it. Unreached cells carry "reached": false.
inline json optimize_json(const SearchResult& r, const std::string& digest, std::uint64_t seed) {
  json cells = json::array();
  std::vector<CostPoint> reached;
  std::vector<std::size_t> reached_index;
  for (std::size_t i = 0; i < r.entries.size(); ++i) {
    const auto& e = r.entries[i];
    const auto p = e.point(r.rule);
    json c = p ? to_json(*p)
               : json{{"n", e.cell.clients}, {"local_epochs", e.cell.local_epochs}, {"alpha", e.cell.alpha},
                      {"rounds", nullptr},   {"co2e_g", nullptr},                  {"accuracy", nullptr},
                      {"carbon_cost", nullptr}};
    c["reached"] = p.has_value();
    cells.push_back(std::move(c));
    if (p) {
      reached.push_back(*p);
      reached_index.push_back(i);
    }
  }
  std::vector<std::size_t> pareto;
  for (auto k : pareto_front_indices(reached)) pareto.push_back(reached_index[k]);
  return json{{"rule", r.rule == AccuracyRule::target ? "target" : "stable"},
              {"cells", cells},
              {"ranking", r.ranking},
              {"pareto", pareto},
              {"winner", r.ranking.front()},
              {"config_digest", digest},
              {"seed", seed}};
}

inline std::string optimize_csv(const SearchResult& r) {
  std::ostringstream os;
  os << "n,epochs,alpha,rounds,co2e_g,accuracy,carbon_cost\n";
  for (auto i : r.ranking) {
    const auto& e = r.entries[i];
    os << e.cell.clients << ',' << e.cell.local_epochs << ',' << format_double(e.cell.alpha) << ',';
    if (auto p = e.point(r.rule))
      os << p->rounds << ',' << format_double(p->co2e_g) << ',' << format_double(p->accuracy) << ','
         << format_double(p->carbon_cost) << '\n';
    else
      os << "NA,NA,NA,NA\n";
  }
  return os.str();
}

// Cumulative grams after each round (FL) or epoch (centralized).
inline std::vector<double> emission_growth(const ExperimentConfig& cfg,
                                           const std::optional<RoundSchedule>& schedule = {}) {
  std::vector<double> out;
  if (cfg.mode == Mode::centralized) {
    const double per_epoch = to_co2e(
        training_energy_centralized(cfg.hardware.active_power_w, cfg.hardware.time_per_local_epoch_s, *cfg.pue),
        cfg.grid);
    for (std::uint64_t e = 1; e <= cfg.centralized.epochs; ++e) out.push_back(per_epoch * static_cast<double>(e));
    return out;
  }
  const RoundSchedule full = schedule ? *schedule : nominal_schedule(cfg);
  for (std::uint64_t r = 1; r <= full.rounds; ++r) {
    RoundSchedule prefix{r, {}};
    for (const auto& p : full.participation)
      if (p.round < r) prefix.participation.push_back(p);
    const auto energy = make_breakdown(training_energy_fl(prefix), wan_energy_wh(cfg.fl, cfg.network, prefix));
    out.push_back(to_co2e(energy.total_wh, cfg.grid));
  }
  return out;
}

// x,<series...> with one row per step; shorter series are padded with "nan".
inline std::string growth_plot_data(const std::vector<std::string>& names,
                                    const std::vector<std::vector<double>>& series) {
  if (series.empty()) throw validation_error("plot needs at least one series");
  std::size_t rows = 0;
  for (const auto& s : series) rows = std::max(rows, s.size());
  if (rows == 0) throw validation_error("plot needs a non-empty series");
  std::ostringstream os;
  os << 'x';
  for (const auto& n : names) os << ',' << n;
  os << '\n';
  for (std::size_t i = 0; i < rows; ++i) {
    os << (i + 1);
    for (const auto& s : series) os << ',' << (i < s.size() ? format_double(s[i]) : std::string("nan"));
    os << '\n';
  }
  return os.str();
}

// One row per grid cell: n,local_epochs,alpha,co2e_g,accuracy.
inline std::string grid_plot_data(const json& optimize_doc) {
  const json& cells = jf::at(optimize_doc, "optimize", "cells");
  if (!cells.is_array() || cells.empty()) throw validation_error("plot needs a non-empty grid");
  std::ostringstream os;
  os << "n,local_epochs,alpha,co2e_g,accuracy\n";
  for (const auto& c : cells) {
    if (c.at("co2e_g").is_null()) continue;
    os << c.at("n").get<std::uint64_t>() << ',' << c.at("local_epochs").get<std::uint64_t>() << ','
       << format_double(c.at("alpha").get<double>()) << ',' << format_double(c.at("co2e_g").get<double>()) << ','
       << format_double(c.at("accuracy").get<double>()) << '\n';
  }
  return os.str();
}

// One row per report: x (1-based report index), co2e_g.
inline std::string reports_plot_data(const std::vector<EmissionReport>& reports) {
  if (reports.empty()) throw validation_error("plot needs at least one report");
  std::ostringstream os;
  os << "x,co2e_g\n";
  for (std::size_t i = 0; i < reports.size(); ++i) os << (i + 1) << ',' << format_double(reports[i].co2e_g) << '\n';
  return os.str();
}

}  // namespace fedcarbon
