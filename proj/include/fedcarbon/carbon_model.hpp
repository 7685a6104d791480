#pragma once

#include <cmath>
#include <cstdint>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "fedcarbon/config.hpp"
#include "fedcarbon/error.hpp"
#include "fedcarbon/io.hpp"
#include "fedcarbon/json_fields.hpp"
#include "fedcarbon/profiles.hpp"

namespace fedcarbon {

inline constexpr double kSecondsPerHour = 3600.0;
// Flat transfer cost of the legacy WAN rule.
inline constexpr double kLegacyKwhPerGb = 5.0;
inline constexpr double kMegabitsPerGigabyte = 8000.0;

// One client taking part in one round.
struct Participation {
  std::uint64_t round = 0;
  std::uint64_t client = 0;
  double wall_time_s = 0.0;
  HardwareProfile hardware;

  bool operator==(const Participation&) const = default;
};

// Which clients trained in which round, and for how long.
struct RoundSchedule {
  std::uint64_t rounds = 0;
  std::vector<Participation> participation;

  bool operator==(const RoundSchedule&) const = default;
};

inline void validate(const RoundSchedule& s) {
  std::set<std::pair<std::uint64_t, std::uint64_t>> seen;
  for (const auto& p : s.participation) {
    if (p.round >= s.rounds)
      throw validation_error("schedule entry round " + std::to_string(p.round) + " outside [0, " +
                             std::to_string(s.rounds) + ")");
    if (!(std::isfinite(p.wall_time_s) && p.wall_time_s > 0.0))
      throw validation_error("schedule entry wall_time_s > 0 (got " + format_double(p.wall_time_s) + ")");
    validate(p.hardware);
    if (!seen.emplace(p.round, p.client).second)
      throw validation_error("duplicate schedule entry for round " + std::to_string(p.round) +
                             ", client " + std::to_string(p.client));
  }
}

struct EnergyBreakdown {
  double training_wh = 0.0;
  double communication_wh = 0.0;
  double total_wh = 0.0;
  double comm_fraction = 0.0;

  bool operator==(const EnergyBreakdown&) const = default;
};

inline EnergyBreakdown make_breakdown(double training_wh, double communication_wh) {
  EnergyBreakdown e;
  e.training_wh = training_wh;
  e.communication_wh = communication_wh;
  e.total_wh = training_wh + communication_wh;
  e.comm_fraction = e.total_wh > 0.0 ? communication_wh / e.total_wh : 0.0;
  return e;
}

struct EmissionReport {
  EnergyBreakdown energy;
  double co2e_g = 0.0;
  GridIntensity grid;
  Mode mode = Mode::fl;
  std::string config_digest;

  bool operator==(const EmissionReport&) const = default;
};

// Sum over entries of t_i * e_i, in Wh.
inline double training_energy_fl(const RoundSchedule& schedule) {
  double wh = 0.0;
  for (const auto& p : schedule.participation)
    wh += p.wall_time_s * p.hardware.active_power_w / kSecondsPerHour;
  return wh;
}

inline double training_energy_centralized(double power_w, double duration_s, double pue) {
  if (!(pue >= 1.0)) throw domain_error("pue >= 1.0 (got " + format_double(pue) + ")");
  if (!(power_w > 0.0)) throw domain_error("power_w > 0 (got " + format_double(power_w) + ")");
  if (!(duration_s >= 0.0)) throw domain_error("duration_s >= 0 (got " + format_double(duration_s) + ")");
  return pue * power_w * duration_s / kSecondsPerHour;
}

// Seconds spent moving one model down and back up.
inline double transfer_time_s(double model_size_mb, const NetworkProfile& net) {
  if (!(net.download_mbps > 0.0) || !(net.upload_mbps > 0.0))
    throw domain_error("download_mbps and upload_mbps must be > 0");
  return model_size_mb * (1.0 / net.download_mbps + 1.0 / net.upload_mbps);
}

// Router plus client idle draw over each entry's transfer window, in Wh.
inline double communication_energy(const RoundSchedule& schedule, double model_size_mb,
                                   const NetworkProfile& net) {
  if (!(model_size_mb >= 0.0)) throw domain_error("model_size_mb >= 0");
  const double window_s = transfer_time_s(model_size_mb, net);
  double wh = 0.0;
  for (const auto& p : schedule.participation)
    wh += window_s * (net.router_power_w + p.hardware.idle_power_w) / kSecondsPerHour;
  return wh;
}

// 5 kWh per GB moved; returns kWh.
inline double legacy_transfer_energy(double model_size_gb, double transfers) {
  if (!(model_size_gb >= 0.0) || !(transfers >= 0.0))
    throw domain_error("legacy transfer needs model_size_gb >= 0 and transfers >= 0");
  return kLegacyKwhPerGb * model_size_gb * transfers;
}

inline double megabits_to_gigabytes(double mb) { return mb / kMegabitsPerGigabyte; }

// kg/kWh == g/Wh, so grams = Wh * c_rate.
inline double to_co2e(double total_wh, const GridIntensity& grid) {
  if (!(total_wh >= 0.0)) throw domain_error("total_wh >= 0 (got " + format_double(total_wh) + ")");
  return total_wh * grid.c_rate_kg_per_kwh;
}

inline EmissionReport make_report(const EnergyBreakdown& energy, const GridIntensity& grid, Mode mode,
                                  std::string digest) {
  return EmissionReport{energy, to_co2e(energy.total_wh, grid), grid, mode, std::move(digest)};
}

// WAN energy for a schedule under the configured transfer model, in Wh.
inline double wan_energy_wh(const FlSettings& fl, const std::optional<NetworkProfile>& net,
                            const RoundSchedule& schedule) {
  switch (fl.wan_model) {
    case WanModel::router:
      if (!net) throw validation_error("wan_model \"router\" requires a network profile");
      return communication_energy(schedule, fl.model_size_mb, *net);
    case WanModel::legacy_5kwh_per_gb:
      return 1000.0 * legacy_transfer_energy(megabits_to_gigabytes(fl.model_size_mb),
                                             static_cast<double>(schedule.participation.size()));
    case WanModel::none:
      return 0.0;
  }
  return 0.0;
}

inline void check_consistent(const ExperimentConfig& cfg, const RoundSchedule& schedule) {
  if (cfg.fl.rounds && *cfg.fl.rounds != schedule.rounds)
    throw inconsistency_error("schedule has " + std::to_string(schedule.rounds) +
                              " rounds but config fl.rounds is " + std::to_string(*cfg.fl.rounds));
  std::vector<std::uint64_t> per_round(schedule.rounds, 0);
  for (const auto& p : schedule.participation) ++per_round[p.round];
  for (std::uint64_t r = 0; r < schedule.rounds; ++r) {
    if (per_round[r] != cfg.fl.clients_per_round)
      throw inconsistency_error("round " + std::to_string(r) + " has " + std::to_string(per_round[r]) +
                                " clients but config fl.clients_per_round is " +
                                std::to_string(cfg.fl.clients_per_round));
  }
}

inline EmissionReport estimate_fl(const ExperimentConfig& cfg, const RoundSchedule& schedule) {
  if (cfg.mode != Mode::fl) throw validation_error("estimate_fl requires mode \"fl\"");
  validate(schedule);
  check_consistent(cfg, schedule);
  const auto energy = make_breakdown(training_energy_fl(schedule), wan_energy_wh(cfg.fl, cfg.network, schedule));
  return make_report(energy, cfg.grid, Mode::fl, config_digest(cfg));
}

inline EmissionReport estimate_centralized(const ExperimentConfig& cfg) {
  if (cfg.mode != Mode::centralized) throw validation_error("estimate_centralized requires mode \"centralized\"");
  validate(cfg);
  const double wh =
      training_energy_centralized(cfg.hardware.active_power_w, cfg.centralized_duration_s(), *cfg.pue);
  return make_report(make_breakdown(wh, 0.0), cfg.grid, Mode::centralized, config_digest(cfg));
}

inline json to_json(const EmissionReport& r) {
  return json{{"training_wh", r.energy.training_wh},
              {"communication_wh", r.energy.communication_wh},
              {"total_wh", r.energy.total_wh},
              {"comm_fraction", r.energy.comm_fraction},
              {"co2e_g", r.co2e_g},
              {"grid_region", r.grid.region},
              {"c_rate", r.grid.c_rate_kg_per_kwh},
              {"mode", std::string(to_string(r.mode))},
              {"config_digest", r.config_digest}};
}

inline EmissionReport report_from_json(const json& j) {
  constexpr std::string_view ctx = "report";
  jf::expect_object(j, ctx);
  EmissionReport r;
  r.energy.training_wh = jf::number(j, ctx, "training_wh");
  r.energy.communication_wh = jf::number(j, ctx, "communication_wh");
  r.energy.total_wh = jf::number(j, ctx, "total_wh");
  r.energy.comm_fraction = jf::number(j, ctx, "comm_fraction");
  r.co2e_g = jf::number(j, ctx, "co2e_g");
  r.grid.region = jf::string(j, ctx, "grid_region");
  r.grid.c_rate_kg_per_kwh = jf::number(j, ctx, "c_rate");
  r.mode = mode_from_string(jf::string(j, ctx, "mode"));
  r.config_digest = jf::string(j, ctx, "config_digest");
  return r;
}

// Schedule file: {"rounds": R, "participation": [{"round", "client",
// "wall_time_s", "hardware"}...]}; "hardware" is a registry name or an inline
// profile.
inline json to_json(const RoundSchedule& s) {
  json entries = json::array();
  for (const auto& p : s.participation)
    entries.push_back(json{{"round", p.round},
                           {"client", p.client},
                           {"wall_time_s", p.wall_time_s},
                           {"hardware", to_json(p.hardware)}});
  return json{{"rounds", s.rounds}, {"participation", entries}};
}

inline RoundSchedule schedule_from_json(const json& j, const Registry& registry) {
  constexpr std::string_view ctx = "schedule";
  jf::expect_object(j, ctx);
  RoundSchedule s;
  s.rounds = jf::unsigned_int(j, ctx, "rounds");
  const json& entries = jf::at(j, ctx, "participation");
  if (!entries.is_array()) throw parse_error("\"schedule.participation\" must be an array");
  s.participation.reserve(entries.size());
  for (const auto& e : entries) {
    constexpr std::string_view ectx = "schedule.participation[]";
    jf::expect_object(e, ectx);
    Participation p;
    p.round = jf::unsigned_int(e, ectx, "round");
    p.client = jf::unsigned_int(e, ectx, "client");
    p.wall_time_s = jf::number(e, ectx, "wall_time_s");
    const json& hw = jf::at(e, ectx, "hardware");
    p.hardware = hw.is_string() ? registry.hardware(hw.get<std::string>())
                                : hardware_from_json(hw, "schedule.participation[].hardware");
    s.participation.push_back(std::move(p));
  }
  validate(s);
  return s;
}

}  // namespace fedcarbon
