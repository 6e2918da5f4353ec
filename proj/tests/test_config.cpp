#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <regex>
#include <sstream>

#include "example_data.hpp"
#include "iqcmpc/config.hpp"

using namespace iqcmpc;

namespace {

const std::filesystem::path kCanonical = std::filesystem::path(IQCMPC_SOURCE_DIR) / "configs" / "delay_example.yaml";

std::string canonical_text() {
  std::ifstream in(kCanonical);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

// Replaces the first match of `pattern` in the canonical text.
std::string edited(const std::string& pattern, const std::string& replacement) {
  const std::string text = canonical_text();
  std::string out = std::regex_replace(text, std::regex(pattern), replacement, std::regex_constants::format_first_only);
  EXPECT_NE(out, text) << "pattern not found: " << pattern;
  return out;
}

// Parses and returns the error, failing the test when parsing succeeds.
Error parse_failure(const std::string& text) {
  try {
    parse_config(text);
  } catch (const Error& e) {
    return e;
  }
  ADD_FAILURE() << "expected a parse error";
  return Error(ErrorCode::InvalidArgument, "");
}

int line_of(const std::string& text, const std::string& needle) {
  std::istringstream in(text);
  std::string line;
  for (int n = 1; std::getline(in, line); ++n)
    if (line.find(needle) != std::string::npos) return n;
  return -1;
}

}  // namespace

TEST(Config, CanonicalFileMatchesExample) {
  const ProblemConfig cfg = load_config(kCanonical);
  EXPECT_EQ(cfg.sys.a, example::a());
  EXPECT_EQ(cfg.sys.b_u, example::b_u());
  EXPECT_EQ(cfg.sys.b_w, example::b_w());
  EXPECT_EQ(cfg.sys.b_d, example::b_d());
  EXPECT_EQ(cfg.sys.c, example::c());
  EXPECT_EQ(cfg.sys.d_u, example::d_u());
  EXPECT_EQ(cfg.cons.h_mat, example::f_mat());
  EXPECT_EQ(cfg.cons.h_vec, example::f_vec());
  EXPECT_EQ(cfg.dist.d_max, example::d_max);
  EXPECT_EQ(cfg.tau_max, example::tau_max);
  EXPECT_EQ(cfg.rho, example::rho);
  ASSERT_TRUE(cfg.k.has_value());
  EXPECT_EQ(*cfg.k, example::k());
  EXPECT_EQ(cfg.k_omega, example::k_omega());
  EXPECT_EQ(cfg.gamma.value_or(0.0), example::gamma);
  EXPECT_EQ(cfg.horizon, example::horizon);
  ASSERT_EQ(cfg.initial_states.size(), 2u);
  EXPECT_EQ(cfg.initial_states[0], (Vector{{0.4, 0.2}}));
  EXPECT_EQ(cfg.initial_states[1], (Vector{{0.2, -0.05}}));
  EXPECT_EQ(cfg.init, InitMode::Free);
  EXPECT_EQ(cfg.tube_mode, TubeMode::General);
}

TEST(Config, SerializationRoundTrips) {
  const ProblemConfig cfg = load_config(kCanonical);
  const std::string text = serialize_config(cfg);
  const ProblemConfig back = parse_config(text);
  EXPECT_TRUE(same_config(cfg, back));
  EXPECT_EQ(serialize_config(back), text);
}

TEST(Config, RoundTripKeepsAwkwardNumbers) {
  ProblemConfig cfg = load_config(kCanonical);
  cfg.sys.a(0, 1) = 0.1 + 0.2;
  cfg.dist.d_max = 1.0 / 3.0;
  cfg.k = Matrix{{std::nextafter(0.18, 1.0), -1e-300}};
  cfg.k_lqr.reset();
  cfg.seed = 18446744073709551615ull;
  cfg.gamma_mat.reset();
  cfg.s_omega.reset();
  EXPECT_TRUE(same_config(cfg, parse_config(serialize_config(cfg))));

  ProblemConfig lqr = cfg;
  lqr.k.reset();
  lqr.k_lqr = LqrWeights{SymMatrix::identity(2), SymMatrix::identity(1)};
  EXPECT_TRUE(same_config(lqr, parse_config(serialize_config(lqr))));
  EXPECT_FALSE(same_config(cfg, lqr));
}

TEST(Config, RhoOfOneIsRejected) {
  const std::string text = edited("rho: 0.95", "rho: 1.0");
  const Error e = parse_failure(text);
  EXPECT_EQ(e.code(), ErrorCode::Parse);
  EXPECT_NE(std::string(e.what()).find("line " + std::to_string(line_of(text, "rho:"))), std::string::npos) << e.what();
  EXPECT_NE(std::string(e.what()).find("design.rho"), std::string::npos);
}

TEST(Config, EmptyConstraintSetIsRejected) {
  const std::string text = edited(R"(F: \[\[1, 0, 0\].*\]\]\n  f: \[.*\])", "F: []\n  f: []");
  const Error e = parse_failure(text);
  EXPECT_EQ(e.code(), ErrorCode::Parse);
  EXPECT_NE(std::string(e.what()).find("empty"), std::string::npos) << e.what();
}

TEST(Config, ErrorsCarryTheLine) {
  {
    const std::string text = edited(R"(d_max: 0\.001)", "d_max: 0.0o1");
    const Error e = parse_failure(text);
    EXPECT_NE(std::string(e.what()).find("line " + std::to_string(line_of(text, "0.0o1"))), std::string::npos)
        << e.what();
  }
  {
    const std::string text = edited(R"(B_u: \[\[0\.0\], \[1\.0\]\])", "B_u: [[0.0], [1.0, 2.0]]");
    const Error e = parse_failure(text);
    EXPECT_NE(std::string(e.what()).find("line " + std::to_string(line_of(text, "B_u:"))), std::string::npos)
        << e.what();
  }
  {
    const std::string text = edited("horizon: 25", "horizon: 25\n  horizn: 3");
    const Error e = parse_failure(text);
    EXPECT_NE(std::string(e.what()).find("line " + std::to_string(line_of(text, "horizn"))), std::string::npos)
        << e.what();
    EXPECT_NE(std::string(e.what()).find("unknown key"), std::string::npos);
  }
  {
    const std::string text = edited("  tau_max: 2\n", "  tau_max: [2\n");
    EXPECT_NE(std::string(parse_failure(text).what()).find("line "), std::string::npos);
  }
}

TEST(Config, DimensionsAreCrossChecked) {
  {
    const std::string text = edited(R"(D_u: \[\[1\.0\]\])", "D_u: [[1.0, 0.0]]");
    const Error e = parse_failure(text);
    EXPECT_NE(std::string(e.what()).find("plant.D_u"), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find("line " + std::to_string(line_of(text, "D_u:"))), std::string::npos);
  }
  {
    const Error e = parse_failure(edited(R"(K: \[\[0\.18, -0\.35\]\])", "K: [[0.18, -0.35, 1.0]]"));
    EXPECT_NE(std::string(e.what()).find("design.K"), std::string::npos) << e.what();
  }
  {
    const Error e = parse_failure(edited(R"(f: \[0\.4, 0\.4,)", "f: [0.4,"));
    EXPECT_NE(std::string(e.what()).find("constraints.f"), std::string::npos) << e.what();
  }
  {
    const Error e = parse_failure(edited(R"(\[0\.2, -0\.05\]\])", "[0.2]]"));
    EXPECT_NE(std::string(e.what()).find("initial_states"), std::string::npos) << e.what();
  }
  {
    const Error e = parse_failure(edited(R"(K: \[\[0\.18, -0\.35\]\])", "K: [[0.18, -0.35]]\n  K_lqr: {Q: [[1, 0], [0, 1]], R: [[1]]}"));
    EXPECT_NE(std::string(e.what()).find("exactly one"), std::string::npos) << e.what();
  }
  {
    const Error e = parse_failure(edited("R: \\[\\[1\\]\\]", "R: [[-1]]"));
    EXPECT_NE(std::string(e.what()).find("mpc.R"), std::string::npos) << e.what();
  }
}

TEST(Config, MissingSectionsAndBadEnums) {
  {
    const Error e = parse_failure(edited(R"(mpc:\n  horizon: 25\n)", "mpc:\n"));
    EXPECT_NE(std::string(e.what()).find("mpc.horizon"), std::string::npos) << e.what();
  }
  {
    const Error e = parse_failure(edited("init: free", "init: warm"));
    EXPECT_NE(std::string(e.what()).find("warm"), std::string::npos) << e.what();
  }
  EXPECT_EQ(parse_failure("").code(), ErrorCode::Parse);
  try {
    load_config("/nonexistent/config.yaml");
    FAIL() << "expected Io";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::Io);
  }
}

TEST(Config, OptionalSectionsTakeDefaults) {
  std::string text = canonical_text();
  text = text.substr(0, text.find("simulation:"));
  const ProblemConfig cfg = parse_config(text);
  EXPECT_EQ(cfg.steps, 50);
  EXPECT_TRUE(cfg.initial_states.empty());
  EXPECT_EQ(cfg.verify_samples, 1000u);
  EXPECT_EQ(cfg.delay, DelayPolicy::Random);
}
