#pragma once

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "fedcarbon/error.hpp"
#include "fedcarbon/io.hpp"
#include "fedcarbon/json_fields.hpp"

namespace fedcarbon {

enum class DeviceKind { edge, datacenter };

inline std::string_view to_string(DeviceKind kind) {
  return kind == DeviceKind::edge ? "edge" : "datacenter";
}

inline DeviceKind device_kind_from_string(std::string_view s) {
  if (s == "edge") return DeviceKind::edge;
  if (s == "datacenter") return DeviceKind::datacenter;
  throw validation_error("hardware kind must be \"edge\" or \"datacenter\", got \"" +
                         std::string(s) + "\"");
}

// Electrical behaviour of one device running one workload.
struct HardwareProfile {
  std::string name;
  double active_power_w = 0.0;
  double idle_power_w = 0.0;
  double time_per_local_epoch_s = 0.0;
  DeviceKind kind = DeviceKind::edge;

  bool operator==(const HardwareProfile&) const = default;
};

struct DatacenterProfile {
  HardwareProfile hardware;
  double pue = 1.0;

  bool operator==(const DatacenterProfile&) const = default;
};

// Country-level carbon intensity; kg/kWh is numerically g/Wh.
struct GridIntensity {
  std::string region;
  double c_rate_kg_per_kwh = 0.0;

  bool operator==(const GridIntensity&) const = default;
};

struct NetworkProfile {
  std::string region;
  double download_mbps = 0.0;
  double upload_mbps = 0.0;
  double router_power_w = 0.0;

  bool operator==(const NetworkProfile&) const = default;
};

namespace detail {

inline void require(bool ok, const std::string& what) {
  if (!ok) throw validation_error(what);
}

inline std::string describe(std::string_view field, double value) {
  return std::string(field) + " (got " + format_double(value) + ")";
}

}  // namespace detail

inline void validate(const HardwareProfile& hw) {
  using detail::describe;
  using detail::require;
  const std::string who = "hardware \"" + hw.name + "\": ";
  require(std::isfinite(hw.active_power_w) && hw.active_power_w > 0.0,
          who + describe("active_power_w > 0", hw.active_power_w));
  require(std::isfinite(hw.idle_power_w) && hw.idle_power_w >= 0.0,
          who + describe("idle_power_w >= 0", hw.idle_power_w));
  require(std::isfinite(hw.time_per_local_epoch_s) && hw.time_per_local_epoch_s > 0.0,
          who + describe("time_per_local_epoch_s > 0", hw.time_per_local_epoch_s));
  require(hw.idle_power_w < hw.active_power_w,
          who + describe("idle_power_w < active_power_w", hw.idle_power_w));
}

inline void validate_pue(double pue) {
  detail::require(std::isfinite(pue) && pue >= 1.0, detail::describe("pue >= 1.0", pue));
}

inline void validate(const DatacenterProfile& dc) {
  validate(dc.hardware);
  detail::require(dc.hardware.kind == DeviceKind::datacenter,
                  "datacenter profile requires hardware kind \"datacenter\"");
  validate_pue(dc.pue);
}

inline void validate(const GridIntensity& grid) {
  detail::require(std::isfinite(grid.c_rate_kg_per_kwh) && grid.c_rate_kg_per_kwh > 0.0,
                  "grid \"" + grid.region + "\": " +
                      detail::describe("c_rate_kg_per_kwh > 0", grid.c_rate_kg_per_kwh));
}

inline void validate(const NetworkProfile& net) {
  using detail::describe;
  using detail::require;
  const std::string who = "network \"" + net.region + "\": ";
  require(std::isfinite(net.download_mbps) && net.download_mbps > 0.0,
          who + describe("download_mbps > 0", net.download_mbps));
  require(std::isfinite(net.upload_mbps) && net.upload_mbps > 0.0,
          who + describe("upload_mbps > 0", net.upload_mbps));
  require(std::isfinite(net.router_power_w) && net.router_power_w >= 0.0,
          who + describe("router_power_w >= 0", net.router_power_w));
}

// Named profiles. Names are namespaced ("hw:", "grid:", "pue:"); lookups also
// accept the bare name when the namespace is implied by the call.
class Registry {
 public:
  void add(HardwareProfile hw) {
    validate(hw);
    hardware_[strip(hw.name, "hw:")] = std::move(hw);
  }
  void add(GridIntensity grid) {
    validate(grid);
    grids_[strip(grid.region, "grid:")] = std::move(grid);
  }
  void add_pue(std::string name, double pue) {
    validate_pue(pue);
    pues_[strip(name, "pue:")] = pue;
  }

  const HardwareProfile& hardware(std::string_view name) const {
    return find(hardware_, strip(name, "hw:"), "hardware", name);
  }
  const GridIntensity& grid(std::string_view name) const {
    return find(grids_, strip(name, "grid:"), "grid", name);
  }
  double pue(std::string_view name) const { return find(pues_, strip(name, "pue:"), "pue", name); }

  DatacenterProfile datacenter(std::string_view hardware_name, std::string_view pue_name) const {
    DatacenterProfile dc{hardware(hardware_name), pue(pue_name)};
    validate(dc);
    return dc;
  }

  // Resolve any namespaced name to its scalar value (power in W for hardware,
  // kg/kWh for grids, the ratio for PUE).
  double scalar(std::string_view qualified) const {
    if (qualified.starts_with("hw:")) return hardware(qualified).active_power_w;
    if (qualified.starts_with("grid:")) return grid(qualified).c_rate_kg_per_kwh;
    if (qualified.starts_with("pue:")) return pue(qualified);
    throw unknown_profile_error("unknown profile namespace in \"" + std::string(qualified) + "\"");
  }

  const std::map<std::string, HardwareProfile, std::less<>>& hardware_profiles() const {
    return hardware_;
  }
  const std::map<std::string, GridIntensity, std::less<>>& grids() const { return grids_; }
  const std::map<std::string, double, std::less<>>& pues() const { return pues_; }

  // Merges {"hardware": {...}, "grid": {...}, "pue": {...}} entries over this
  // registry. Later entries replace earlier ones with the same name.
  void merge_json(const json& doc);

  bool operator==(const Registry&) const = default;

 private:
  static std::string strip(std::string_view name, std::string_view prefix) {
    if (name.starts_with(prefix)) name.remove_prefix(prefix.size());
    return std::string(name);
  }

  template <typename Map>
  static const typename Map::mapped_type& find(const Map& m, const std::string& key,
                                               std::string_view kind, std::string_view asked) {
    auto it = m.find(key);
    if (it == m.end())
      throw unknown_profile_error("unknown " + std::string(kind) + " profile \"" +
                                  std::string(asked) + "\"");
    return it->second;
  }

  std::map<std::string, HardwareProfile, std::less<>> hardware_;
  std::map<std::string, GridIntensity, std::less<>> grids_;
  std::map<std::string, double, std::less<>> pues_;
};

namespace detail {

inline Registry make_builtin_registry() {
  Registry r;
  // Measured per-task wattage and per-epoch time on the edge devices; idle
  // draw is 1.35 W (TX2) and 2.25 W (Xavier NX).
  constexpr double tx2_idle = 1.35;
  constexpr double nx_idle = 2.25;
  r.add(HardwareProfile{"tx2-cifar10", 4.7, tx2_idle, 0.8, DeviceKind::edge});
  r.add(HardwareProfile{"nx-cifar10", 6.3, nx_idle, 0.6, DeviceKind::edge});
  r.add(HardwareProfile{"tx2-imagenet", 6.5, tx2_idle, 474.0, DeviceKind::edge});
  r.add(HardwareProfile{"nx-imagenet", 9.7, nx_idle, 273.0, DeviceKind::edge});
  r.add(HardwareProfile{"tx2-speechcmd", 5.7, tx2_idle, 1.6, DeviceKind::edge});
  r.add(HardwareProfile{"nx-speechcmd", 7.9, nx_idle, 0.9, DeviceKind::edge});
  // V100 server, GPU + CPU draw. Idle draw was not measured.
  r.add(HardwareProfile{"v100-cifar10", 160.0 + 42.0, 0.0, 24.0, DeviceKind::datacenter});
  r.add(HardwareProfile{"v100-imagenet", 220.0 + 84.0, 0.0, 1440.0, DeviceKind::datacenter});
  r.add(HardwareProfile{"v100-speechcmd", 68.0 + 56.0, 0.0, 52.0, DeviceKind::datacenter});

  r.add(GridIntensity{"france", 0.0790});
  r.add(GridIntensity{"usa", 0.5741});
  r.add(GridIntensity{"china", 0.9746});

  r.add_pue("world-2019", 1.67);
  r.add_pue("google", 1.11);
  r.add_pue("amazon", 1.2);
  r.add_pue("microsoft", 1.125);
  return r;
}

}  // namespace detail

// Immutable built-in profiles. Network profiles are deliberately absent:
// download/upload rates and router power must come from the config.
inline const Registry& builtin_registry() {
  static const Registry registry = detail::make_builtin_registry();
  return registry;
}

inline constexpr const char* kRegistryEnvVar = "FEDCARBON_REGISTRY";

// Built-ins plus the overrides file named by $FEDCARBON_REGISTRY, if set.
inline Registry registry_from_environment() {
  Registry r = builtin_registry();
  if (const char* path = std::getenv(kRegistryEnvVar); path != nullptr && *path != '\0') {
    r.merge_json(read_json_file(path));
  }
  return r;
}

// JSON forms of the profile types. `default_kind` applies when an inline
// hardware object omits "kind".
inline HardwareProfile hardware_from_json(const json& j, std::string_view ctx,
                                          DeviceKind default_kind = DeviceKind::edge) {
  jf::expect_object(j, ctx);
  jf::reject_unknown_keys(j, ctx,
                          {"name", "active_power_w", "idle_power_w", "time_per_local_epoch_s", "kind"});
  HardwareProfile hw;
  hw.name = jf::string_or(j, ctx, "name", "inline");
  hw.active_power_w = jf::number(j, ctx, "active_power_w");
  hw.idle_power_w = jf::number_or(j, ctx, "idle_power_w", 0.0);
  hw.time_per_local_epoch_s = jf::number(j, ctx, "time_per_local_epoch_s");
  hw.kind = j.contains("kind") ? device_kind_from_string(jf::string(j, ctx, "kind")) : default_kind;
  validate(hw);
  return hw;
}

inline json to_json(const HardwareProfile& hw) {
  return json{{"name", hw.name},
              {"active_power_w", hw.active_power_w},
              {"idle_power_w", hw.idle_power_w},
              {"time_per_local_epoch_s", hw.time_per_local_epoch_s},
              {"kind", std::string(to_string(hw.kind))}};
}

inline GridIntensity grid_from_json(const json& j, std::string_view ctx) {
  jf::expect_object(j, ctx);
  jf::reject_unknown_keys(j, ctx, {"region", "c_rate_kg_per_kwh"});
  GridIntensity g{jf::string_or(j, ctx, "region", "inline"), jf::number(j, ctx, "c_rate_kg_per_kwh")};
  validate(g);
  return g;
}

inline json to_json(const GridIntensity& g) {
  return json{{"region", g.region}, {"c_rate_kg_per_kwh", g.c_rate_kg_per_kwh}};
}

inline NetworkProfile network_from_json(const json& j, std::string_view ctx) {
  jf::expect_object(j, ctx);
  jf::reject_unknown_keys(j, ctx, {"region", "download_mbps", "upload_mbps", "router_power_w"});
  NetworkProfile n{jf::string_or(j, ctx, "region", "inline"), jf::number(j, ctx, "download_mbps"),
                   jf::number(j, ctx, "upload_mbps"), jf::number(j, ctx, "router_power_w")};
  validate(n);
  return n;
}

inline json to_json(const NetworkProfile& n) {
  return json{{"region", n.region},
              {"download_mbps", n.download_mbps},
              {"upload_mbps", n.upload_mbps},
              {"router_power_w", n.router_power_w}};
}

inline void Registry::merge_json(const json& doc) {
  jf::expect_object(doc, "registry");
  jf::reject_unknown_keys(doc, "registry", {"hardware", "grid", "pue"});
  if (auto it = doc.find("hardware"); it != doc.end()) {
    jf::expect_object(*it, "registry.hardware");
    for (const auto& [name, value] : it->items()) {
      HardwareProfile hw = hardware_from_json(value, "registry.hardware." + name);
      hw.name = strip(name, "hw:");
      add(std::move(hw));
    }
  }
  if (auto it = doc.find("grid"); it != doc.end()) {
    jf::expect_object(*it, "registry.grid");
    for (const auto& [name, value] : it->items()) {
      add(GridIntensity{strip(name, "grid:"), jf::as_number(value, "registry.grid", name)});
    }
  }
  if (auto it = doc.find("pue"); it != doc.end()) {
    jf::expect_object(*it, "registry.pue");
    for (const auto& [name, value] : it->items()) {
      add_pue(name, jf::as_number(value, "registry.pue", name));
    }
  }
}

}  // namespace fedcarbon
