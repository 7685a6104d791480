#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <tuple>
#include <variant>
#include <vector>

#include "fedcarbon/carbon_model.hpp"
#include "fedcarbon/error.hpp"
#include "fedcarbon/profiles.hpp"

namespace fedcarbon {

// Transfer term of the emission objective: the flat 5 kWh/GB rule, or the
// router/idle model over S(1/D + 1/U).
struct LegacyTransfer {
  double model_size_gb = 0.0;
};
struct RouterTransfer {
  double model_size_mb = 0.0;
  NetworkProfile network;
  double idle_power_w = 0.0;
};
using TransferTerm = std::variant<LegacyTransfer, RouterTransfer>;

// Wh one client spends on one model transfer.
inline double transfer_wh(const TransferTerm& term) {
  if (const auto* legacy = std::get_if<LegacyTransfer>(&term))
    return 1000.0 * legacy_transfer_energy(legacy->model_size_gb, 1.0);
  const auto& router = std::get<RouterTransfer>(term);
  if (!(router.model_size_mb >= 0.0)) throw domain_error("model_size_mb >= 0");
  return transfer_time_s(router.model_size_mb, router.network) *
         (router.network.router_power_w + router.idle_power_w) / kSecondsPerHour;
}

// Emitted grams after r rounds of n clients each running t seconds at
// e_clients watts: r * c_rate * n * (t * e / 3600 + transfer).
inline double objective_F(double rounds, double clients, double round_time_s, const GridIntensity& grid,
                          double client_power_w, const TransferTerm& transfer) {
  if (!(rounds > 0.0) || !(clients > 0.0) || !(round_time_s > 0.0))
    throw domain_error("objective_F needs rounds, clients and round time > 0");
  if (!(client_power_w > 0.0)) throw domain_error("objective_F needs client power > 0");
  return rounds * grid.c_rate_kg_per_kwh * clients *
         (round_time_s * client_power_w / kSecondsPerHour + transfer_wh(transfer));
}

inline double objective_F(double rounds, double clients, double round_time_s, const GridIntensity& grid,
                          double client_power_w, double model_size_gb) {
  return objective_F(rounds, clients, round_time_s, grid, client_power_w, LegacyTransfer{model_size_gb});
}

inline double carbon_cost(double co2e_g, double accuracy) {
  if (!(accuracy > 0.0 && accuracy <= 1.0))
    throw domain_error("carbon_cost needs accuracy in (0, 1] (got " + format_double(accuracy) + ")");
  return co2e_g / accuracy;
}

// One FL design point.
struct GridCell {
  std::size_t clients = 1;
  std::size_t local_epochs = 1;
  double alpha = 1.0;

  bool operator==(const GridCell&) const = default;
};

struct CostPoint {
  std::size_t clients = 1;
  std::size_t local_epochs = 1;
  double alpha = 1.0;
  std::size_t rounds = 0;
  double co2e_g = 0.0;    // F
  double accuracy = 1.0;  // G
  double carbon_cost = 0.0;

  bool operator==(const CostPoint&) const = default;
};

inline CostPoint make_cost_point(const GridCell& cell, std::size_t rounds, double co2e_g, double accuracy) {
  return CostPoint{cell.clients, cell.local_epochs, cell.alpha, rounds, co2e_g, accuracy,
                   carbon_cost(co2e_g, accuracy)};
}

// What a runner reports for one cell: emissions up to the first round at the
// fixed target (absent if never reached) and up to the best-accuracy round.
struct Measurement {
  std::size_t rounds = 0;
  double co2e_g = 0.0;
  double accuracy = 0.0;
};
struct CellOutcome {
  std::optional<Measurement> at_target;
  Measurement at_best;
};

using CellRunner = std::function<CellOutcome(const GridCell&)>;

struct SearchSpace {
  std::vector<std::size_t> clients;
  std::vector<std::size_t> local_epochs;
  std::vector<double> alphas;

  std::vector<GridCell> cells() const {
    std::vector<GridCell> out;
    for (auto n : clients)
      for (auto e : local_epochs)
        for (auto a : alphas) out.push_back(GridCell{n, e, a});
    return out;
  }
};

enum class AccuracyRule { target, stable };

struct GridEntry {
  GridCell cell;
  std::optional<CostPoint> target;  // G is the target accuracy itself
  CostPoint stable;                 // G is the best accuracy seen

  std::optional<CostPoint> point(AccuracyRule rule) const {
    return rule == AccuracyRule::target ? target : std::optional<CostPoint>(stable);
  }
};

struct SearchResult {
  std::vector<GridEntry> entries;    // enumeration order of SearchSpace::cells()
  std::vector<std::size_t> ranking;  // indices into entries, best first
  AccuracyRule rule = AccuracyRule::target;

  const GridEntry& winner() const { return entries.at(ranking.at(0)); }
};

// Orders entries by carbon cost under `rule`; unreached cells go last and ties
// fall back to fewer clients, then fewer local epochs, then lower alpha.
inline std::vector<std::size_t> rank_entries(std::span<const GridEntry> entries, AccuracyRule rule) {
  std::vector<std::size_t> order(entries.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  auto key = [&](std::size_t i) {
    const auto p = entries[i].point(rule);
    const GridCell& c = entries[i].cell;
    return std::make_tuple(!p.has_value(), p ? p->carbon_cost : 0.0, c.clients, c.local_epochs, c.alpha);
  };
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return key(a) < key(b); });
  return order;
}

inline SearchResult grid_search(const SearchSpace& space, const CellRunner& runner, double target_accuracy,
                                AccuracyRule rule = AccuracyRule::target) {
  const auto cells = space.cells();
  if (cells.empty()) throw domain_error("grid_search needs a non-empty space");
  if (!(target_accuracy > 0.0 && target_accuracy <= 1.0)) throw domain_error("target accuracy in (0, 1]");
  SearchResult out;
  out.rule = rule;
  out.entries.reserve(cells.size());
  for (const auto& cell : cells) {
    const CellOutcome o = runner(cell);
    GridEntry e{cell, std::nullopt, make_cost_point(cell, o.at_best.rounds, o.at_best.co2e_g, o.at_best.accuracy)};
    if (o.at_target) e.target = make_cost_point(cell, o.at_target->rounds, o.at_target->co2e_g, target_accuracy);
    out.entries.push_back(std::move(e));
  }
  out.ranking = rank_entries(out.entries, rule);
  return out;
}

// Points not dominated in (lower F, higher G), in input order. Sweeps the
// points by ascending F; a point survives if it has the best G of its F-group
// and beats every G seen at strictly smaller F.
inline std::vector<std::size_t> pareto_front_indices(std::span<const CostPoint> points) {
  std::vector<std::size_t> order(points.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (points[a].co2e_g != points[b].co2e_g) return points[a].co2e_g < points[b].co2e_g;
    return points[a].accuracy > points[b].accuracy;
  });
  std::vector<bool> keep(points.size(), false);
  double best_prior = -INFINITY;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    const double f = points[order[i]].co2e_g;
    const double group_best = points[order[i]].accuracy;
    while (j < order.size() && points[order[j]].co2e_g == f) {
      const double g = points[order[j]].accuracy;
      keep[order[j]] = g == group_best && g > best_prior;
      ++j;
    }
    best_prior = std::max(best_prior, group_best);
    i = j;
  }
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < points.size(); ++i)
    if (keep[i]) out.push_back(i);
  return out;
}

inline std::vector<CostPoint> pareto_front(std::span<const CostPoint> points) {
  std::vector<CostPoint> out;
  for (auto i : pareto_front_indices(points)) out.push_back(points[i]);
  return out;
}

inline json to_json(const CostPoint& p) {
  return json{{"n", p.clients},          {"local_epochs", p.local_epochs}, {"alpha", p.alpha},
              {"rounds", p.rounds},      {"co2e_g", p.co2e_g},             {"accuracy", p.accuracy},
              {"carbon_cost", p.carbon_cost}};
}

}  // namespace fedcarbon
