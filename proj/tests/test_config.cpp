#include <gtest/gtest.h>

#include <sstream>

#include "cgc/config.hpp"

using namespace cgc;

namespace {

RunConfig parse(const std::string& text) {
  std::stringstream ss(text);
  return RunConfig::parse(ss, "test");
}

}  // namespace

TEST(RunConfig, ParsesKeysCommentsAndWhitespace) {
  auto cfg = parse("# header\n grid.shape = square  # trailing\n\ncgc.B=20\n");
  EXPECT_EQ(cfg.get_string("grid.shape", "x"), "square");
  EXPECT_EQ(cfg.get_int("cgc.B", 0), 20);
  EXPECT_NO_THROW(cfg.check_all_used());
}

TEST(RunConfig, SyntaxErrors) {
  EXPECT_THROW(parse("grid.shape\n"), ConfigError);
  EXPECT_THROW(parse("shape = square\n"), ConfigError);
  EXPECT_THROW(parse("a.b = 1\na.b = 2\n"), ConfigError);
}

TEST(RunConfig, UnknownKeysRejected) {
  auto cfg = parse("grid.side = 4\ngrid.sied = 5\n");
  cfg.get_int("grid.side", 8);
  EXPECT_THROW(cfg.check_all_used(), ConfigError);
}

TEST(RunConfig, TypedGetters) {
  auto cfg = parse("a.d = 0.25\na.i = -3\na.u = 18446744073709551615\na.b = false\na.l = x, y ,z\na.dl = 1,2.5\n");
  EXPECT_EQ(cfg.get_double("a.d", 0), 0.25);
  EXPECT_EQ(cfg.get_int("a.i", 0), -3);
  EXPECT_EQ(cfg.get_u64("a.u", 0), 18446744073709551615ULL);
  EXPECT_FALSE(cfg.get_bool("a.b", true));
  EXPECT_EQ(cfg.get_list("a.l", ""), (std::vector<std::string>{"x", "y", "z"}));
  EXPECT_EQ(cfg.get_double_list("a.dl", ""), (std::vector<double>{1.0, 2.5}));
  EXPECT_EQ(cfg.get_int("a.missing", 7), 7);
  EXPECT_EQ(cfg.resolved().at("a.missing"), "7");
}

TEST(RunConfig, BadValues) {
  auto cfg = parse("a.i = 1.5\na.d = abc\na.b = maybe\na.u = -1\n");
  EXPECT_THROW(cfg.get_int("a.i", 0), ConfigError);
  EXPECT_THROW(cfg.get_double("a.d", 0), ConfigError);
  EXPECT_THROW(cfg.get_bool("a.b", false), ConfigError);
  EXPECT_THROW(cfg.get_u64("a.u", 0), ConfigError);
}

TEST(RunConfig, OverridesWin) {
  auto cfg = parse("a.x = 1\n");
  cfg.set("a.x", "2");
  EXPECT_EQ(cfg.get_int("a.x", 0), 2);
}

TEST(RunConfig, ManifestRoundTrip) {
  auto cfg = parse("cgc.lambda = 0.10\n");
  cfg.get_double("cgc.lambda", 0.1);
  cfg.get_int("cgc.B", 20);
  cfg.get_string("grid.shape", "square");
  std::stringstream manifest;
  cfg.write_manifest(manifest);
  EXPECT_NE(manifest.str().find("artifact.version = " + std::string(kArtifactVersion)), std::string::npos);
  EXPECT_NE(manifest.str().find("cgc.lambda = 0.1\n"), std::string::npos);

  auto again = RunConfig::parse(manifest, "manifest");
  again.get_string("artifact.version", "");
  again.get_double("cgc.lambda", 0.5);
  again.get_int("cgc.B", 1);
  again.get_string("grid.shape", "circle");
  EXPECT_NO_THROW(again.check_all_used());
  std::stringstream second;
  again.write_manifest(second);
  EXPECT_EQ(second.str(), manifest.str());
}

TEST(RunConfig, MissingFile) {
  try {
    RunConfig::load("/nonexistent/run.cfg");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("/nonexistent/run.cfg"), std::string::npos);
  }
}
