#include <cmath>
#include <set>
#include <string>

#include <gtest/gtest.h>

#include <qkdsync/config.hpp>
#include <qkdsync/csv.hpp>

using namespace qkdsync;

TEST(Units, ParsesDimensionedQuantities) {
  EXPECT_NEAR(parse_quantity("300 ps", Dim::time), 300e-12, 1e-24);
  EXPECT_NEAR(parse_quantity("155us", Dim::time), 155e-6, 1e-18);
  EXPECT_NEAR(parse_quantity("2.3 us/s", Dim::drift), 2.3e-6, 1e-18);
  EXPECT_NEAR(parse_quantity("100 km", Dim::length), 1e5, 1e-9);
  EXPECT_NEAR(parse_quantity("500 MHz", Dim::frequency), 5e8, 1e-3);
  EXPECT_NEAR(parse_quantity("0.1 %", Dim::none), 1e-3, 1e-18);
  EXPECT_NEAR(parse_quantity("  24 h ", Dim::time), 86400.0, 1e-9);
}

TEST(Units, RejectsBareNumbersAndUnknownUnits) {
  EXPECT_THROW(parse_quantity("300", Dim::time), ConfigError);
  EXPECT_THROW(parse_quantity("300 parsecs", Dim::time), ConfigError);
  EXPECT_THROW(parse_quantity("ps", Dim::time), ConfigError);
  EXPECT_THROW(parse_quantity("3 km", Dim::none), ConfigError);
  EXPECT_THROW(parse_quantity("2.5", Dim::integer), ConfigError);
}

TEST(Units, Lists) {
  const auto v = parse_list("1000 ps, 700 ps,500ps", Dim::time, "windows");
  ASSERT_EQ(v.size(), 3u);
  EXPECT_NEAR(v[2], 500e-12, 1e-24);
  EXPECT_THROW(parse_list("1 ns, 2", Dim::time, "windows"), ConfigError);
}

TEST(RunConfig, DefaultsAndOverrides) {
  RunConfig c = RunConfig::parse("# comment\nwindow = 500 ps\n\nseed=7 # trailing\n");
  EXPECT_NEAR(c.get("window"), 500e-12, 1e-24);
  EXPECT_EQ(c.seed(), 7u);
  EXPECT_NEAR(c.get("mean_photon"), 0.225, 1e-15);
  c.apply_overrides({"window=1 ns"});
  EXPECT_NEAR(c.get("window"), 1e-9, 1e-21);
  EXPECT_THROW(c.apply_overrides({"no_such_key=1"}), ConfigError);
  EXPECT_THROW(c.apply_overrides({"window"}), ConfigError);
  EXPECT_THROW(RunConfig::parse("window 300 ps"), ConfigError);
  EXPECT_THROW(RunConfig::parse("window=300"), ConfigError);
}

TEST(RunConfig, LossSentinel) {
  RunConfig c;
  EXPECT_EQ(c.raw("loss"), "fiber");
  c.set("loss", "25 dB");
  EXPECT_NEAR(c.get("loss"), 25.0, 1e-12);
}

TEST(RunConfig, HashIsStableAndSensitive) {
  const RunConfig a;
  RunConfig b;
  b.set("window", a.raw("window"));  // explicit default
  EXPECT_EQ(a.hash(), b.hash());
  EXPECT_EQ(a.hash().size(), 16u);
  std::set<std::string> seen{a.hash()};
  for (const char* kv : {"window=500 ps", "seed=2", "fiber_length=80 km", "mean_photon=0.5"}) {
    RunConfig c;
    c.apply_overrides({kv});
    EXPECT_TRUE(seen.insert(c.hash()).second) << kv;
  }
}

TEST(RunConfig, CanonicalCoversEveryKey) {
  const std::string canon = RunConfig{}.canonical();
  for (const auto& k : key_specs()) EXPECT_NE(canon.find(std::string(k.name) + "="), std::string::npos) << k.name;
  for (const auto& k : key_specs()) {
    if (k.dim == Dim::text || std::string(k.name) == "loss") continue;
    if (k.list)
      EXPECT_NO_THROW(parse_list(k.default_value, k.dim, k.name)) << k.name;
    else
      EXPECT_NO_THROW(parse_quantity(k.default_value, k.dim, k.name)) << k.name;
  }
}

TEST(Csv, FormatsNumbersAndMissing) {
  EXPECT_EQ(num(0.5), "0.5");
  EXPECT_EQ(num(std::nan("")), "NA");
  CsvTable t("", {"a", "b"});
  t.row({"1", "2"});
  EXPECT_NE(t.str().find("a,b\n1,2\n"), std::string::npos);
  const RunConfig c;
  const std::string h = metadata_header(c, "qber-curve");
  EXPECT_NE(h.find("config_hash=" + c.hash()), std::string::npos);
  EXPECT_NE(h.find("command=qber-curve"), std::string::npos);
}
