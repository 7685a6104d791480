#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "fedcarbon/error.hpp"
#include "fedcarbon/io.hpp"
#include "fedcarbon/json_fields.hpp"
#include "fedcarbon/profiles.hpp"

namespace fedcarbon {

enum class Mode { fl, centralized };
enum class Strategy { fedavg, fedadam };
// How WAN transfer energy is charged: the router/idle-time model, the flat
// 5 kWh per GB rule, or not at all.
enum class WanModel { router, legacy_5kwh_per_gb, none };
enum class PriorKind { uniform, empirical };

inline std::string_view to_string(Mode m) { return m == Mode::fl ? "fl" : "centralized"; }
inline std::string_view to_string(Strategy s) { return s == Strategy::fedavg ? "fedavg" : "fedadam"; }
inline std::string_view to_string(WanModel w) {
  switch (w) {
    case WanModel::router: return "router";
    case WanModel::legacy_5kwh_per_gb: return "legacy-5kwh-per-gb";
    case WanModel::none: return "none";
  }
  return "none";
}
inline std::string_view to_string(PriorKind p) {
  return p == PriorKind::uniform ? "uniform" : "empirical";
}

inline Mode mode_from_string(std::string_view s) {
  if (s == "fl") return Mode::fl;
  if (s == "centralized") return Mode::centralized;
  throw validation_error("mode must be \"fl\" or \"centralized\", got \"" + std::string(s) + "\"");
}
inline Strategy strategy_from_string(std::string_view s) {
  if (s == "fedavg") return Strategy::fedavg;
  if (s == "fedadam") return Strategy::fedadam;
  throw validation_error("strategy must be \"fedavg\" or \"fedadam\", got \"" + std::string(s) + "\"");
}
inline WanModel wan_model_from_string(std::string_view s) {
  if (s == "router") return WanModel::router;
  if (s == "legacy-5kwh-per-gb") return WanModel::legacy_5kwh_per_gb;
  if (s == "none") return WanModel::none;
  throw validation_error("wan_model must be \"router\", \"legacy-5kwh-per-gb\" or \"none\", got \"" +
                         std::string(s) + "\"");
}
inline PriorKind prior_from_string(std::string_view s) {
  if (s == "uniform") return PriorKind::uniform;
  if (s == "empirical") return PriorKind::empirical;
  throw validation_error("prior must be \"uniform\" or \"empirical\", got \"" + std::string(s) + "\"");
}

struct FlSettings {
  std::uint64_t pool_size = 1;
  std::uint64_t clients_per_round = 1;
  // Expected round count of a supplied schedule; unset means "whatever the
  // schedule says".
  std::optional<std::uint64_t> rounds;
  std::uint64_t local_epochs = 1;
  double model_size_mb = 0.0;  // megabits
  Strategy strategy = Strategy::fedavg;
  WanModel wan_model = WanModel::none;

  bool operator==(const FlSettings&) const = default;
};

inline constexpr double kDefaultFedAvgClientLr = 0.031622776601683794;  // 10^-1.5

struct SimSettings {
  std::uint64_t classes = 4;
  std::uint64_t features = 4;
  std::uint64_t samples = 5000;
  std::uint64_t samples_per_client = 0;  // 0: train split divided evenly
  std::uint64_t max_rounds = 200;
  std::uint64_t batch_size = 32;
  double client_lr = kDefaultFedAvgClientLr;
  double server_lr = 0.1;
  double tau = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.99;
  double target_accuracy = 0.5;
  double alpha = 1000.0;
  PriorKind prior = PriorKind::uniform;
  double separation = 3.0;
  std::uint64_t threads = 1;

  bool operator==(const SimSettings&) const = default;
};

struct CentralizedSettings {
  std::uint64_t epochs = 1;
  std::optional<double> duration_s;  // overrides epochs * time_per_local_epoch_s

  bool operator==(const CentralizedSettings&) const = default;
};

struct ExperimentConfig {
  Mode mode = Mode::fl;
  std::string label;
  HardwareProfile hardware;
  GridIntensity grid;
  std::vector<GridIntensity> regions;  // comparison columns; defaults to {grid}
  std::optional<NetworkProfile> network;
  std::optional<double> pue;
  CentralizedSettings centralized;
  FlSettings fl;
  SimSettings sim;
  std::uint64_t seed = 0;

  bool operator==(const ExperimentConfig&) const = default;

  double centralized_duration_s() const {
    return centralized.duration_s.value_or(static_cast<double>(centralized.epochs) *
                                           hardware.time_per_local_epoch_s);
  }
};

void validate(const ExperimentConfig& cfg);

namespace detail {

inline HardwareProfile resolve_hardware(const json& v, const Registry& reg, DeviceKind default_kind) {
  if (v.is_string()) return reg.hardware(v.get<std::string>());
  return hardware_from_json(v, "hardware", default_kind);
}

inline GridIntensity resolve_grid(const json& v, const Registry& reg, std::string_view ctx) {
  if (v.is_string()) return reg.grid(v.get<std::string>());
  return grid_from_json(v, ctx);
}

inline FlSettings fl_from_json(const json& j) {
  constexpr std::string_view ctx = "fl";
  jf::expect_object(j, ctx);
  jf::reject_unknown_keys(j, ctx,
                          {"pool_size", "clients_per_round", "rounds", "local_epochs", "model_size_mb",
                           "strategy", "wan_model"});
  FlSettings fl;
  fl.pool_size = jf::unsigned_int(j, ctx, "pool_size");
  fl.clients_per_round = jf::unsigned_int(j, ctx, "clients_per_round");
  if (j.contains("rounds")) fl.rounds = jf::unsigned_int(j, ctx, "rounds");
  fl.local_epochs = jf::unsigned_or(j, ctx, "local_epochs", 1);
  fl.model_size_mb = jf::number_or(j, ctx, "model_size_mb", 0.0);
  fl.strategy = strategy_from_string(jf::string_or(j, ctx, "strategy", "fedavg"));
  fl.wan_model = wan_model_from_string(jf::string_or(j, ctx, "wan_model", "none"));
  return fl;
}

inline SimSettings sim_from_json(const json& j) {
  constexpr std::string_view ctx = "sim";
  jf::expect_object(j, ctx);
  jf::reject_unknown_keys(j, ctx,
                          {"classes", "features", "samples", "samples_per_client", "max_rounds",
                           "batch_size", "client_lr", "server_lr", "tau", "beta1", "beta2",
                           "target_accuracy", "alpha", "prior", "separation", "threads"});
  SimSettings d;
  SimSettings s;
  s.classes = jf::unsigned_or(j, ctx, "classes", d.classes);
  s.features = jf::unsigned_or(j, ctx, "features", d.features);
  s.samples = jf::unsigned_or(j, ctx, "samples", d.samples);
  s.samples_per_client = jf::unsigned_or(j, ctx, "samples_per_client", d.samples_per_client);
  s.max_rounds = jf::unsigned_or(j, ctx, "max_rounds", d.max_rounds);
  s.batch_size = jf::unsigned_or(j, ctx, "batch_size", d.batch_size);
  s.client_lr = jf::number_or(j, ctx, "client_lr", d.client_lr);
  s.server_lr = jf::number_or(j, ctx, "server_lr", d.server_lr);
  s.tau = jf::number_or(j, ctx, "tau", d.tau);
  s.beta1 = jf::number_or(j, ctx, "beta1", d.beta1);
  s.beta2 = jf::number_or(j, ctx, "beta2", d.beta2);
  s.target_accuracy = jf::number_or(j, ctx, "target_accuracy", d.target_accuracy);
  s.alpha = jf::number_or(j, ctx, "alpha", d.alpha);
  s.prior = prior_from_string(jf::string_or(j, ctx, "prior", "uniform"));
  s.separation = jf::number_or(j, ctx, "separation", d.separation);
  s.threads = jf::unsigned_or(j, ctx, "threads", d.threads);
  return s;
}

}  // namespace detail

// Parses and validates one experiment document. Profile names resolve
// against `registry`.
inline ExperimentConfig parse_config(const json& doc, const Registry& registry) {
  jf::expect_object(doc, "");
  jf::reject_unknown_keys(doc, "",
                          {"mode", "label", "hardware", "grid", "regions", "network", "pue",
                           "centralized", "fl", "sim", "seed"});
  ExperimentConfig cfg;
  cfg.mode = mode_from_string(jf::string(doc, "", "mode"));
  cfg.label = jf::string_or(doc, "", "label", "");
  const DeviceKind default_kind =
      cfg.mode == Mode::fl ? DeviceKind::edge : DeviceKind::datacenter;
  cfg.hardware = detail::resolve_hardware(jf::at(doc, "", "hardware"), registry, default_kind);
  cfg.grid = detail::resolve_grid(jf::at(doc, "", "grid"), registry, "grid");

  if (auto it = doc.find("regions"); it != doc.end()) {
    if (!it->is_array()) throw parse_error("\"regions\" must be an array");
    for (const auto& r : *it) cfg.regions.push_back(detail::resolve_grid(r, registry, "regions[]"));
  } else {
    cfg.regions.push_back(cfg.grid);
  }

  if (auto it = doc.find("network"); it != doc.end()) cfg.network = network_from_json(*it, "network");

  if (auto it = doc.find("pue"); it != doc.end()) {
    cfg.pue = it->is_string() ? registry.pue(it->get<std::string>()) : jf::as_number(*it, "", "pue");
  }

  if (auto it = doc.find("centralized"); it != doc.end()) {
    jf::expect_object(*it, "centralized");
    jf::reject_unknown_keys(*it, "centralized", {"epochs", "duration_s"});
    cfg.centralized.epochs = jf::unsigned_or(*it, "centralized", "epochs", 1);
    if (it->contains("duration_s")) cfg.centralized.duration_s = jf::number(*it, "centralized", "duration_s");
  }

  if (auto it = doc.find("fl"); it != doc.end()) {
    cfg.fl = detail::fl_from_json(*it);
  } else if (cfg.mode == Mode::fl) {
    throw parse_error("missing required key \"fl\" for mode \"fl\"");
  }

  if (auto it = doc.find("sim"); it != doc.end()) cfg.sim = detail::sim_from_json(*it);
  cfg.seed = jf::unsigned_or(doc, "", "seed", 0);

  validate(cfg);
  return cfg;
}

inline ExperimentConfig load_config(const std::filesystem::path& path, const Registry& registry) {
  return parse_config(read_json_file(path), registry);
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  return load_config(path, registry_from_environment());
}

// Fully resolved form: every profile inline, so the document re-parses to an
// equal configuration without a registry.
inline json to_json(const ExperimentConfig& cfg) {
  json j;
  j["mode"] = std::string(to_string(cfg.mode));
  if (!cfg.label.empty()) j["label"] = cfg.label;
  j["hardware"] = to_json(cfg.hardware);
  j["grid"] = to_json(cfg.grid);
  json regions = json::array();
  for (const auto& r : cfg.regions) regions.push_back(to_json(r));
  j["regions"] = regions;
  if (cfg.network) j["network"] = to_json(*cfg.network);
  if (cfg.pue) j["pue"] = *cfg.pue;
  json c{{"epochs", cfg.centralized.epochs}};
  if (cfg.centralized.duration_s) c["duration_s"] = *cfg.centralized.duration_s;
  j["centralized"] = c;
  json fl{{"pool_size", cfg.fl.pool_size},
          {"clients_per_round", cfg.fl.clients_per_round},
          {"local_epochs", cfg.fl.local_epochs},
          {"model_size_mb", cfg.fl.model_size_mb},
          {"strategy", std::string(to_string(cfg.fl.strategy))},
          {"wan_model", std::string(to_string(cfg.fl.wan_model))}};
  if (cfg.fl.rounds) fl["rounds"] = *cfg.fl.rounds;
  j["fl"] = fl;
  const SimSettings& s = cfg.sim;
  j["sim"] = json{{"classes", s.classes},
                  {"features", s.features},
                  {"samples", s.samples},
                  {"samples_per_client", s.samples_per_client},
                  {"max_rounds", s.max_rounds},
                  {"batch_size", s.batch_size},
                  {"client_lr", s.client_lr},
                  {"server_lr", s.server_lr},
                  {"tau", s.tau},
                  {"beta1", s.beta1},
                  {"beta2", s.beta2},
                  {"target_accuracy", s.target_accuracy},
                  {"alpha", s.alpha},
                  {"prior", std::string(to_string(s.prior))},
                  {"separation", s.separation},
                  {"threads", s.threads}};
  j["seed"] = cfg.seed;
  return j;
}

// Stable identifier of a configuration: FNV-1a over the canonical
// (key-sorted) resolved JSON.
inline std::string config_digest(const ExperimentConfig& cfg) { return fnv1a_hex(to_json(cfg).dump()); }

inline void validate(const SimSettings& s) {
  using detail::describe;
  using detail::require;
  require(s.classes >= 2, "sim.classes >= 2");
  require(s.features >= 1, "sim.features >= 1");
  require(s.samples >= 2, "sim.samples >= 2");
  require(s.max_rounds >= 1, "sim.max_rounds >= 1");
  require(s.batch_size >= 1, "sim.batch_size >= 1");
  require(std::isfinite(s.client_lr) && s.client_lr > 0.0, describe("sim.client_lr > 0", s.client_lr));
  require(std::isfinite(s.server_lr) && s.server_lr > 0.0, describe("sim.server_lr > 0", s.server_lr));
  require(std::isfinite(s.tau) && s.tau > 0.0, describe("sim.tau > 0", s.tau));
  require(s.beta1 >= 0.0 && s.beta1 < 1.0, describe("sim.beta1 in [0,1)", s.beta1));
  require(s.beta2 >= 0.0 && s.beta2 < 1.0, describe("sim.beta2 in [0,1)", s.beta2));
  require(s.target_accuracy >= 0.0 && s.target_accuracy <= 1.0,
          describe("sim.target_accuracy in [0,1]", s.target_accuracy));
  require(std::isfinite(s.alpha) && s.alpha > 0.0, describe("sim.alpha > 0", s.alpha));
  require(std::isfinite(s.separation) && s.separation > 0.0,
          describe("sim.separation > 0", s.separation));
  require(s.threads >= 1, "sim.threads >= 1");
}

inline void validate(const ExperimentConfig& cfg) {
  using detail::describe;
  using detail::require;
  validate(cfg.hardware);
  validate(cfg.grid);
  require(!cfg.regions.empty(), "regions must not be empty");
  for (const auto& r : cfg.regions) validate(r);
  if (cfg.network) validate(*cfg.network);
  validate(cfg.sim);

  if (cfg.mode == Mode::centralized) {
    require(cfg.pue.has_value(), "centralized mode requires \"pue\"");
    validate_pue(*cfg.pue);
    require(cfg.hardware.kind == DeviceKind::datacenter,
            "centralized mode requires datacenter hardware");
    require(!cfg.network.has_value(), "\"network\" is only valid in fl mode");
    if (cfg.centralized.duration_s)
      require(std::isfinite(*cfg.centralized.duration_s) && *cfg.centralized.duration_s >= 0.0,
              describe("centralized.duration_s >= 0", *cfg.centralized.duration_s));
    return;
  }

  require(!cfg.pue.has_value(), "\"pue\" is only valid in centralized mode");
  const FlSettings& fl = cfg.fl;
  require(fl.pool_size >= 1, "fl.pool_size >= 1");
  require(fl.clients_per_round >= 1 && fl.clients_per_round <= fl.pool_size,
          "1 <= fl.clients_per_round <= fl.pool_size");
  require(fl.local_epochs >= 1, "fl.local_epochs >= 1");
  require(std::isfinite(fl.model_size_mb) && fl.model_size_mb >= 0.0,
          describe("fl.model_size_mb >= 0", fl.model_size_mb));
  if (fl.wan_model == WanModel::router)
    require(cfg.network.has_value(), "wan_model \"router\" requires a \"network\" object");
}

}  // namespace fedcarbon
