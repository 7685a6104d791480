#include <cstdlib>
#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "fedcarbon/fedcarbon.hpp"

using namespace fedcarbon;

namespace {

const std::string kRoot = FEDCARBON_SOURCE_DIR;

json fl_doc() {
  return json{{"mode", "fl"},
              {"hardware", "tx2-cifar10"},
              {"grid", "france"},
              {"fl", {{"pool_size", 10}, {"clients_per_round", 2}, {"rounds", 3}}}};
}

std::filesystem::path temp_file(const std::string& name, const std::string& body) {
  const auto p = std::filesystem::temp_directory_path() / name;
  std::ofstream(p) << body;
  return p;
}

}  // namespace

TEST(Registry, BuiltinHardwareFromMeasuredTable) {
  const Registry& r = builtin_registry();
  const auto& tx2 = r.hardware("tx2-cifar10");
  EXPECT_DOUBLE_EQ(tx2.active_power_w, 4.7);
  EXPECT_DOUBLE_EQ(tx2.idle_power_w, 1.35);
  EXPECT_EQ(tx2.kind, DeviceKind::edge);
  EXPECT_DOUBLE_EQ(r.hardware("hw:tx2-imagenet").active_power_w, 6.5);
  EXPECT_DOUBLE_EQ(r.hardware("tx2-speechcmd").active_power_w, 5.7);
  EXPECT_DOUBLE_EQ(r.hardware("nx-cifar10").active_power_w, 6.3);
  EXPECT_DOUBLE_EQ(r.hardware("nx-imagenet").active_power_w, 9.7);
  EXPECT_DOUBLE_EQ(r.hardware("nx-speechcmd").active_power_w, 7.9);
  EXPECT_DOUBLE_EQ(r.hardware("nx-speechcmd").idle_power_w, 2.25);
  EXPECT_DOUBLE_EQ(r.hardware("v100-cifar10").active_power_w, 202.0);
  EXPECT_DOUBLE_EQ(r.hardware("v100-imagenet").active_power_w, 304.0);
  EXPECT_DOUBLE_EQ(r.hardware("v100-speechcmd").active_power_w, 124.0);
  EXPECT_EQ(r.hardware("v100-cifar10").kind, DeviceKind::datacenter);
}

TEST(Registry, GridsAndPue) {
  const Registry& r = builtin_registry();
  EXPECT_DOUBLE_EQ(r.grid("france").c_rate_kg_per_kwh, 0.0790);
  EXPECT_DOUBLE_EQ(r.grid("grid:usa").c_rate_kg_per_kwh, 0.5741);
  EXPECT_DOUBLE_EQ(r.grid("china").c_rate_kg_per_kwh, 0.9746);
  EXPECT_DOUBLE_EQ(r.pue("world-2019"), 1.67);
  EXPECT_DOUBLE_EQ(r.pue("pue:google"), 1.11);
  EXPECT_DOUBLE_EQ(r.scalar("grid:china"), 0.9746);
  EXPECT_DOUBLE_EQ(r.scalar("hw:v100-imagenet"), 304.0);
  EXPECT_DOUBLE_EQ(r.scalar("pue:world-2019"), 1.67);
  EXPECT_THROW(r.scalar("net:home"), unknown_profile_error);
  const auto dc = r.datacenter("v100-cifar10", "google");
  EXPECT_DOUBLE_EQ(dc.pue, 1.11);
}

TEST(Registry, EveryEntrySatisfiesInvariants) {
  const Registry& r = builtin_registry();
  EXPECT_EQ(r.hardware_profiles().size(), 9u);
  for (const auto& [name, hw] : r.hardware_profiles()) {
    EXPECT_NO_THROW(validate(hw)) << name;
    EXPECT_LT(hw.idle_power_w, hw.active_power_w) << name;
  }
  for (const auto& [name, g] : r.grids()) EXPECT_GT(g.c_rate_kg_per_kwh, 0.0) << name;
  for (const auto& [name, p] : r.pues()) EXPECT_GE(p, 1.0) << name;
}

TEST(Registry, NoNetworkDefaults) {
  json doc = fl_doc();
  doc["fl"]["wan_model"] = "router";
  EXPECT_THROW(parse_config(doc, builtin_registry()), validation_error);
}

TEST(Registry, UnknownNames) {
  EXPECT_THROW(builtin_registry().hardware("tpu-v4"), unknown_profile_error);
  json doc = fl_doc();
  doc["grid"] = "atlantis";
  EXPECT_THROW(parse_config(doc, builtin_registry()), unknown_profile_error);
}

TEST(Registry, Immutable) {
  const Registry& a = builtin_registry();
  const Registry& b = builtin_registry();
  EXPECT_EQ(&a, &b);
  EXPECT_EQ(a, detail::make_builtin_registry());
}

TEST(Registry, EnvironmentOverride) {
  const auto path = temp_file("fedcarbon_registry_test.json",
                              R"({"grid": {"iceland": 0.028}, "pue": {"lab": 1.4},
                                  "hardware": {"pi4": {"active_power_w": 6.4, "idle_power_w": 2.7,
                                                       "time_per_local_epoch_s": 3.0}}})");
  ::setenv(kRegistryEnvVar, path.c_str(), 1);
  const Registry r = registry_from_environment();
  ::unsetenv(kRegistryEnvVar);
  EXPECT_DOUBLE_EQ(r.grid("iceland").c_rate_kg_per_kwh, 0.028);
  EXPECT_DOUBLE_EQ(r.hardware("pi4").idle_power_w, 2.7);
  EXPECT_DOUBLE_EQ(r.pue("lab"), 1.4);
  EXPECT_DOUBLE_EQ(r.grid("france").c_rate_kg_per_kwh, 0.0790);
  std::filesystem::remove(path);
}

TEST(Validation, Bounds) {
  EXPECT_THROW(validate(HardwareProfile{"x", 2.0, 2.0, 1.0, DeviceKind::edge}), validation_error);
  EXPECT_THROW(validate(HardwareProfile{"x", 0.0, 0.0, 1.0, DeviceKind::edge}), validation_error);
  EXPECT_THROW(validate(HardwareProfile{"x", 5.0, 1.0, 0.0, DeviceKind::edge}), validation_error);
  EXPECT_THROW(validate(HardwareProfile{"x", NAN, 1.0, 1.0, DeviceKind::edge}), validation_error);
  EXPECT_THROW(validate(GridIntensity{"g", 0.0}), validation_error);
  EXPECT_THROW(validate(NetworkProfile{"n", 0.0, 10.0, 5.0}), validation_error);
  EXPECT_THROW(validate(NetworkProfile{"n", 10.0, 10.0, -1.0}), validation_error);
  EXPECT_NO_THROW(validate(NetworkProfile{"n", 10.0, 10.0, 0.0}));
}

TEST(LoadConfig, ResolvesRegistryHardware) {
  const ExperimentConfig cfg = parse_config(fl_doc(), builtin_registry());
  EXPECT_DOUBLE_EQ(cfg.hardware.active_power_w, 4.7);
  EXPECT_DOUBLE_EQ(cfg.hardware.idle_power_w, 1.35);
  ASSERT_EQ(cfg.regions.size(), 1u);
  EXPECT_EQ(cfg.regions[0].region, "france");
}

TEST(LoadConfig, PueBelowOneNamesTheBound) {
  json doc{{"mode", "centralized"}, {"hardware", "v100-cifar10"}, {"grid", "france"}, {"pue", 0.9}};
  try {
    parse_config(doc, builtin_registry());
    FAIL() << "accepted pue 0.9";
  } catch (const validation_error& e) {
    EXPECT_NE(std::string(e.what()).find("pue >= 1.0"), std::string::npos) << e.what();
  }
}

TEST(LoadConfig, InlineHardwareAccepted) {
  json doc = fl_doc();
  doc["hardware"] = {{"active_power_w", 10.0}, {"idle_power_w", 2.0}, {"time_per_local_epoch_s", 1.0}};
  const ExperimentConfig cfg = parse_config(doc, builtin_registry());
  EXPECT_DOUBLE_EQ(cfg.hardware.active_power_w, 10.0);
  EXPECT_NO_THROW(estimate(cfg));
}

TEST(LoadConfig, PueByName) {
  json doc{{"mode", "centralized"}, {"hardware", "v100-cifar10"}, {"grid", "france"}, {"pue", "world-2019"}};
  EXPECT_DOUBLE_EQ(*parse_config(doc, builtin_registry()).pue, 1.67);
}

TEST(LoadConfig, ModeSpecificKeys) {
  json fl = fl_doc();
  fl["pue"] = 1.5;
  EXPECT_THROW(parse_config(fl, builtin_registry()), validation_error);

  json central{{"mode", "centralized"}, {"hardware", "v100-cifar10"}, {"grid", "france"}};
  EXPECT_THROW(parse_config(central, builtin_registry()), validation_error);  // pue missing
  central["pue"] = 1.1;
  central["network"] = {{"download_mbps", 10}, {"upload_mbps", 5}, {"router_power_w", 5}};
  EXPECT_THROW(parse_config(central, builtin_registry()), validation_error);

  json edge_central{{"mode", "centralized"}, {"hardware", "tx2-cifar10"}, {"grid", "france"}, {"pue", 1.1}};
  EXPECT_THROW(parse_config(edge_central, builtin_registry()), validation_error);
}

TEST(LoadConfig, ClientsPerRoundBounds) {
  json doc = fl_doc();
  doc["fl"]["clients_per_round"] = 11;
  EXPECT_THROW(parse_config(doc, builtin_registry()), validation_error);
  doc["fl"]["clients_per_round"] = 0;
  EXPECT_THROW(parse_config(doc, builtin_registry()), validation_error);
}

TEST(LoadConfig, ParseErrors) {
  json doc = fl_doc();
  doc["colour"] = "green";
  EXPECT_THROW(parse_config(doc, builtin_registry()), parse_error);
  doc = fl_doc();
  doc["fl"]["pool_size"] = "ten";
  EXPECT_THROW(parse_config(doc, builtin_registry()), parse_error);
  doc = fl_doc();
  doc["fl"]["pool_size"] = -3;
  EXPECT_THROW(parse_config(doc, builtin_registry()), parse_error);
  doc = fl_doc();
  doc["fl"]["strategy"] = "fedprox";
  EXPECT_THROW(parse_config(doc, builtin_registry()), validation_error);

  const auto bad = temp_file("fedcarbon_bad.json", "{\"mode\": ");
  EXPECT_THROW(load_config(bad, builtin_registry()), parse_error);
  std::filesystem::remove(bad);
  EXPECT_THROW(load_config("/nonexistent/cfg.json", builtin_registry()), io_error);
}

TEST(LoadConfig, FileRoundTrip) {
  for (const char* name : {"configs/cifar10_centralized_france.json", "configs/cifar10_fedadam_tx2_wan.json",
                           "configs/sim_demo.json", "fixtures/worked_example.json"}) {
    const ExperimentConfig cfg = load_config(kRoot + "/" + name, builtin_registry());
    const auto p = temp_file("fedcarbon_roundtrip.json", to_json(cfg).dump(2));
    const ExperimentConfig back = load_config(p, builtin_registry());
    EXPECT_EQ(back, cfg) << name;
    EXPECT_EQ(config_digest(back), config_digest(cfg)) << name;
    std::filesystem::remove(p);
  }
}

TEST(LoadConfig, DigestTracksContent) {
  ExperimentConfig a = parse_config(fl_doc(), builtin_registry());
  ExperimentConfig b = a;
  EXPECT_EQ(config_digest(a), config_digest(b));
  b.seed = 1;
  EXPECT_NE(config_digest(a), config_digest(b));
  EXPECT_EQ(config_digest(a).size(), 16u);
}
