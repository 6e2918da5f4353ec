// Acceptance suite for the two-state delay example: one PASS/FAIL line per criterion.
// The exit status is the number of failing criteria.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "example_data.hpp"
#include "iqcmpc/pipeline.hpp"
#include "iqcmpc/synthesis.hpp"
#include "iqcmpc/tube.hpp"
#include "oracles.hpp"

using namespace iqcmpc;

namespace {

// Pinned tolerances.
constexpr double kPrintedLmiSlack = 0.5;         // printed P, M are rounded to one decimal
constexpr double kMarginPerScale = 1e-6;         // required margin per unit disturbance weight
constexpr double kPrintedSTol = 0.1;             // entrywise
constexpr double kXOmegaFactor = 2.0;
constexpr std::size_t kTerminalSamples = 1000;
constexpr int kOracleHorizon = 6;
constexpr double kCandidateTol = 1e-9;           // re-check tolerance of shifted candidates
constexpr double kViolationTol = 0.0;            // constraints hold exactly
constexpr double kTerminalTubeBound = 0.1;       // s_{T|0}
constexpr double kConvergedNorm = 1e-3;
constexpr int kConvergenceSteps = 60;
constexpr double kIssResidualTol = 0.05;         // affine fit, relative to the largest energy
constexpr double kIssSlopeGrowth = 2.0;          // later slope over earlier slope
constexpr double kTightenTol = 1e-6;
constexpr int kTightenSamples = 100000;
constexpr double kRecenterTol = 1e-6;            // relative to max(1, |value|)
constexpr int kRecenterInstances = 1000;
constexpr int kOrderingInstances = 10000;
constexpr double kOrderingTol = 1e-12;           // relative to max(1, value)
constexpr int kRunSteps = 50;

const std::filesystem::path kCanonical = std::filesystem::path(IQCMPC_SOURCE_DIR) / "configs" / "delay_example.yaml";

struct Outcome {
  bool passed = true;
  std::ostringstream detail;

  // Records one sub-check as "label value (ok|FAIL)".
  void check(bool ok, const std::string& label, const std::string& value) {
    if (!detail.str().empty()) detail << "; ";
    detail << label << ' ' << value << (ok ? " ok" : " FAIL");
    passed = passed && ok;
  }
};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

std::string vec(const Vector& x) {
  std::string s = "[";
  for (Index i = 0; i < x.size(); ++i) s += (i ? ", " : "") + num(x(i));
  return s + "]";
}

struct Context {
  ProblemConfig cfg;
  DesignArtifact art;
};

// Per-step worst |e_k|^2_Pe over every delay schedule and disturbance sign sequence,
// each sequence simulated from scratch.
std::vector<double> enumerate_worst_error(const ProblemConfig& cfg, const DesignArtifact& art,
                                          const std::vector<double>& ybar) {
  const Matrix a_cl = cfg.sys.a + cfg.sys.b_u * *cfg.k;
  const Matrix c_cl = cfg.sys.c + cfg.sys.d_u * *cfg.k;
  const int branches = (cfg.tau_max + 1) * 2;
  std::size_t total = 1;
  for (int k = 0; k < kOracleHorizon; ++k) total *= static_cast<std::size_t>(branches);
  std::vector<double> worst(kOracleHorizon + 1, 0.0);
  std::vector<double> y(kOracleHorizon, 0.0);
  for (std::size_t code = 0; code < total; ++code) {
    std::size_t rest = code;
    Vector e = Vector::Zero(cfg.sys.nx());
    for (int k = 0; k < kOracleHorizon; ++k) {
      const int digit = static_cast<int>(rest % branches);
      rest /= branches;
      const int tau = digit / 2;
      const double d = (digit % 2 ? -1.0 : 1.0) * cfg.dist.d_max;
      y[k] = (c_cl * e)(0) + ybar[k];
      const double delayed = k - tau >= 0 ? y[k - tau] : 0.0;
      const double w = tau == 0 ? 0.0 : delayed - y[k];
      e = a_cl * e + cfg.sys.b_w.col(0) * w + cfg.sys.b_d.col(0) * d;
      worst[k + 1] = std::max(worst[k + 1], art.tube.p_e.quad(e));
    }
  }
  return worst;
}

std::vector<std::pair<std::string, std::vector<double>>> excitations() {
  std::vector<double> zero(kOracleHorizon, 0.0);
  std::vector<double> pulse = zero;
  pulse[0] = 1.0;
  std::vector<double> ramp(kOracleHorizon);
  for (int k = 0; k < kOracleHorizon; ++k) ramp[k] = (k + 1.0) / kOracleHorizon;
  return {{"zero", zero}, {"pulse", pulse}, {"ramp", ramp}};
}

RunRequest request(const ProblemConfig& cfg, const Vector& x0, int steps) {
  RunRequest req;
  req.x0 = x0;
  req.steps = steps;
  req.seed = cfg.seed;
  req.keep_every = 0;
  return req;
}

// Criterion-4 conditions on one run; returns false on any failure.
bool check_run(Outcome& out, const std::string& tag, const SimTrace& trace, const ProblemConfig& cfg,
               const DesignArtifact& art) {
  const RunSummary sum = summarize(trace, cfg, art);
  const bool ran = !sum.infeasible_start && sum.steps == kRunSteps;
  bool infeasible_step = false;
  for (const SimStep& st : trace.steps) infeasible_step = infeasible_step || st.status == SolveStatus::Infeasible;
  const bool before = out.passed;
  out.check(ran && !infeasible_step, tag + " feasible steps", std::to_string(sum.steps));
  out.check(sum.worst_candidate_gap <= kCandidateTol, tag + " candidate gap", num(sum.worst_candidate_gap));
  out.check(sum.max_violation <= kViolationTol, tag + " max violation", num(sum.max_violation));
  out.check(sum.s_terminal0 <= kTerminalTubeBound, tag + " s_T|0", num(sum.s_terminal0));
  out.check(sum.containment_violations == 0, tag + " containment violations",
            std::to_string(sum.containment_violations));
  return before && out.passed;
}

Outcome criterion1(const Context& c) {
  Outcome out;
  const SymMatrix xi = c.cfg.dist.xi;
  const SymMatrix printed = design_lmi_value(c.cfg.sys, *c.cfg.k, c.art.filter,
                                             SymMatrix::symmetrize(example::printed_p()),
                                             SymMatrix{example::printed_m()}, example::gamma,
                                             SymMatrix::symmetrize(Matrix::Constant(1, 1, example::gamma)), xi,
                                             example::rho);
  const double lam_printed = lambda_max(printed);
  out.check(lam_printed <= kPrintedLmiSlack, "printed lambda_max", num(lam_printed));
  const SymMatrix own = design_lmi_value(c.cfg.sys, *c.cfg.k, c.art.filter, c.art.tube.p, c.art.m,
                                         c.art.tube.gamma, c.art.tube.gamma_mat, xi, c.art.tube.rho);
  const double scale = std::max({1.0, c.art.tube.gamma, lambda_max(c.art.tube.gamma_mat)});
  const double lam_own = lambda_max(own);
  out.check(lam_own <= -kMarginPerScale * scale, "synthesized lambda_max", num(lam_own));
  return out;
}

Outcome criterion2(const Context& c) {
  Outcome out;
  const SymMatrix q = SymMatrix::identity(c.cfg.sys.nx());
  const SymMatrix r = SymMatrix::identity(c.cfg.sys.nu());
  const TerminalSet bisected =
      terminal_ingredients(c.cfg.sys, c.art.tube, c.cfg.cons, q, r, example::k_omega(), std::nullopt);
  const double s_err = (bisected.s_mat.mat() - example::printed_s()).cwiseAbs().maxCoeff();
  out.check(s_err <= kPrintedSTol, "S entrywise error", num(s_err));
  const double ratio = bisected.x_omega / example::printed_x_omega;
  out.check(ratio <= kXOmegaFactor && ratio >= 1.0 / kXOmegaFactor, "x_omega", num(bisected.x_omega));
  const TerminalCheck own =
      check_terminal_set(c.cfg.sys, c.art.tube, c.cfg.cons, bisected, q, r, kTerminalSamples, c.cfg.verify_seed);
  out.check(bisected.s_omega > 0.0 && own.passed(), "s_omega", num(bisected.s_omega));
  TerminalSet printed = bisected;
  printed.x_omega = example::printed_x_omega;
  printed.s_omega = example::printed_s_omega;
  const TerminalCheck chk =
      check_terminal_set(c.cfg.sys, c.art.tube, c.cfg.cons, printed, q, r, kTerminalSamples, c.cfg.verify_seed);
  out.check(chk.passed(), "printed pair violations",
            std::to_string(chk.item1_invariance + chk.item2_constraints + chk.item3_decrease) + "/" +
                std::to_string(chk.samples));
  return out;
}

Outcome criterion3(const Context& c) {
  Outcome out;
  for (const auto& [name, ybar] : excitations()) {
    const std::vector<double> worst = enumerate_worst_error(c.cfg, c.art, ybar);
    double s = 0.0;
    double slack = std::numeric_limits<double>::infinity();
    int violations = 0;
    for (int k = 0; k < kOracleHorizon; ++k) {
      s = c.art.tube.rho * c.art.tube.rho * s + c.art.tube.gamma * c.cfg.dist.d_max * c.cfg.dist.d_max +
          c.art.tube.gamma_mat.mat()(0, 0) * ybar[k] * ybar[k];
      if (worst[k + 1] > s) ++violations;
      slack = std::min(slack, s - worst[k + 1]);
    }
    out.check(violations == 0, name + " violations", std::to_string(violations) + " (min slack " + num(slack) + ")");
  }
  return out;
}

Outcome criterion4(const Context& c) {
  Outcome out;
  for (const Vector& x0 : c.cfg.initial_states) {
    const SimTrace trace = run_closed_loop(c.cfg, c.art, request(c.cfg, x0, kRunSteps));
    check_run(out, vec(x0), trace, c.cfg, c.art);
  }
  return out;
}

// x_t for 0 <= t <= trace length.
const Vector& state_at(const SimTrace& trace, int t) {
  return t < static_cast<int>(trace.size()) ? trace.steps[t].x : trace.x_final;
}

double state_energy(const SimTrace& trace, int n) {
  double e = 0.0;
  for (int t = 0; t <= n; ++t) {
    e += state_at(trace, t).squaredNorm();
  }
  return e;
}

double disturbance_energy(const SimTrace& trace, int n) {
  double e = 0.0;
  for (int t = 0; t < n; ++t) e += trace.steps[t].d.squaredNorm();
  return e;
}

Outcome criterion5(const Context& c) {
  Outcome out;
  ProblemConfig still = c.cfg;
  still.delay = DelayPolicy::Constant;
  still.delay_value = c.cfg.tau_max;
  still.disturbance = DisturbancePolicy::Zero;
  for (const Vector& x0 : c.cfg.initial_states) {
    const SimTrace trace = run_closed_loop(still, c.art, request(still, x0, kConvergenceSteps));
    int reached = -1;
    for (int t = 0; t <= static_cast<int>(trace.size()) && reached < 0; ++t)
      if (state_at(trace, t).norm() <= kConvergedNorm) reached = t;
    out.check(!trace.infeasible_start && reached >= 0, vec(x0) + " converged at t", std::to_string(reached));
  }
  const std::vector<int> horizons{25, 50, 100};
  for (const Vector& x0 : c.cfg.initial_states) {
    const SimTrace trace = run_closed_loop(c.cfg, c.art, request(c.cfg, x0, horizons.back()));
    std::vector<double> ex, dx;
    for (int n : horizons) {
      ex.push_back(state_energy(trace, n));
      dx.push_back(disturbance_energy(trace, n));
    }
    // Least-squares line E = a + b D through the three points.
    const double md = (dx[0] + dx[1] + dx[2]) / 3.0;
    const double me = (ex[0] + ex[1] + ex[2]) / 3.0;
    double sdd = 0.0, sde = 0.0;
    for (int i = 0; i < 3; ++i) {
      sdd += (dx[i] - md) * (dx[i] - md);
      sde += (dx[i] - md) * (ex[i] - me);
    }
    const double b = sde / sdd;
    const double a = me - b * md;
    double resid = 0.0;
    for (int i = 0; i < 3; ++i) resid = std::max(resid, std::abs(ex[i] - a - b * dx[i]));
    const double early = (ex[1] - ex[0]) / (dx[1] - dx[0]);
    const double late = (ex[2] - ex[1]) / (dx[2] - dx[1]);
    const bool ok = trace.size() == static_cast<std::size_t>(horizons.back()) && b >= 0.0 &&
                    resid <= kIssResidualTol * ex[2] && late <= kIssSlopeGrowth * early;
    out.check(ok, vec(x0) + " ISS fit",
              "a " + num(a) + " b " + num(b) + " slopes " + num(early) + "/" + num(late) + " resid " + num(resid));
  }
  return out;
}

Outcome criterion6(const Context& c) {
  Outcome out;
  const Vector x0 = c.cfg.initial_states.at(1);
  ProblemConfig fixed = c.cfg;
  fixed.init = InitMode::Fixed;
  const SimTrace f = run_closed_loop(fixed, c.art, request(fixed, x0, 1));
  out.check(f.infeasible_start, "fixed init at " + vec(x0), f.infeasible_start ? "infeasible" : "feasible");
  const SimTrace free = run_closed_loop(c.cfg, c.art, request(c.cfg, x0, 1));
  out.check(!free.infeasible_start, "free init at " + vec(x0), free.infeasible_start ? "infeasible" : "feasible");
  return out;
}

Outcome criterion7(const Context& c) {
  Outcome out;
  ProblemConfig worst = c.cfg;
  worst.delay = DelayPolicy::Constant;
  worst.delay_value = c.cfg.tau_max;
  const SymMatrix q = SymMatrix::identity(c.cfg.sys.nx());
  const SymMatrix r = SymMatrix::identity(c.cfg.sys.nu());
  for (const Vector& x0 : c.cfg.initial_states) {
    BaselineOptions opts;
    opts.steps = kRunSteps;
    opts.policy = worst.disturbance;
    opts.seed = worst.seed;
    const SimTrace base = nominal_mpc_baseline(c.cfg.sys, c.cfg.cons, q, r, c.cfg.horizon, x0,
                                               make_delay(worst), c.cfg.dist, opts);
    double violation = -std::numeric_limits<double>::infinity();
    for (const SimStep& st : base.steps) violation = std::max(violation, st.max_violation);
    const bool failed = base.diverged || base.fallback_used || violation > kViolationTol;
    std::string how = base.diverged ? "diverged" : base.fallback_used ? "lost feasibility" : "";
    if (violation > kViolationTol) how += (how.empty() ? "" : ", ") + std::string("violation ") + num(violation);
    out.check(failed, vec(x0) + " baseline", how.empty() ? "stable" : how);

    const SimTrace tube = run_closed_loop(worst, c.art, request(worst, x0, kRunSteps));
    bool same = true;
    for (std::size_t t = 0; t < std::min(base.size(), tube.size()); ++t)
      same = same && base.steps[t].d == tube.steps[t].d && base.steps[t].tau == tube.steps[t].tau;
    out.check(same, vec(x0) + " realization", same ? "shared" : "differs");
    check_run(out, vec(x0) + " tube", tube, worst, c.art);
  }
  return out;
}

Outcome criterion8(const Context& c) {
  Outcome out;
  const Matrix& k = *c.cfg.k;
  double analytic_err = 0.0;
  double sampled_err = 0.0;
  for (Index i = 0; i < c.cfg.cons.rows(); ++i) {
    const Vector row = c.cfg.cons.h_mat.row(i).transpose();
    const double ci = c.art.tube.c(i);
    const Vector e = oracle::row_maximizer(c.art.tube.p_e, k, row);
    analytic_err = std::max(analytic_err, std::abs(oracle::row_response(row, k, e) - ci));
    const double sampled = oracle::sampled_row_max(c.art.tube.p_e, k, row, kTightenSamples, 11 + i);
    // Sampling approaches c from below and must never exceed it.
    sampled_err = std::max(sampled_err, sampled > ci ? sampled - ci : ci - sampled);
  }
  out.check(analytic_err <= kTightenTol, "tightening at maximizer", num(analytic_err));
  out.check(sampled_err <= kTightenTol, "tightening sampled", num(sampled_err));

  std::mt19937_64 gen(2024);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto random_vector = [&](Index n, double scale) {
    Vector v(n);
    for (Index i = 0; i < n; ++i) v(i) = scale * normal(gen);
    return v;
  };
  double recenter_err = 0.0;
  for (int trial = 0; trial < kRecenterInstances; ++trial) {
    TubeParams tube = c.art.tube;
    tube.p = oracle::random_spd(4, 0.2, 5.0, gen);
    const SchurSplit split = schur_reduce(tube.p, 2);
    tube.p_e = split.p_e;
    tube.p_diff = split.p_diff;
    const Vector e1 = random_vector(2, 0.5);
    const Vector e0 = random_vector(2, 0.5);
    const double s1 = tube.p_e.quad(e1) + 2.0 * unit(gen);
    const double numeric = oracle::recenter_max(tube.p, 2, s1, e1, e0);
    const double closed = tube_measurement_update(s1, e1, e0, tube) - s1;
    recenter_err = std::max(recenter_err, std::abs(closed - numeric) / std::max(1.0, std::abs(numeric)));
  }
  out.check(recenter_err <= kRecenterTol, "closed-form recentering", num(recenter_err));

  const TubeParams& tube = c.art.tube;
  const Matrix p22 = tube.p.mat().bottomRightCorner(2, 2);
  const Matrix p21 = tube.p.mat().bottomLeftCorner(2, 2);
  const Eigen::LLT<Matrix> llt(p22);
  const Matrix upper = llt.matrixU();
  int exceed = 0;
  for (int trial = 0; trial < kOrderingInstances; ++trial) {
    const Vector e1 = random_vector(2, 0.05);
    const Vector e0 = random_vector(2, 0.05);
    const double s1 = tube.p_e.quad(e1) + unit(gen);
    const Vector centre = -p22.ldlt().solve(p21 * e1);
    Vector dir = random_vector(2, 1.0).normalized();
    dir *= std::sqrt(unit(gen)) * std::sqrt(s1 - tube.p_e.quad(e1));
    const Vector psi = centre + upper.triangularView<Eigen::Upper>().solve(dir);
    const double exact = exact_update(s1, e1, psi, e0, tube);
    const double general = tube_measurement_update(s1, e1, e0, tube);
    if (exact > general + kOrderingTol * std::max(1.0, general)) ++exceed;
  }
  out.check(exceed == 0, "exact above general", std::to_string(exceed) + "/" + std::to_string(kOrderingInstances));
  return out;
}

}  // namespace

int main() {
  Context ctx;
  try {
    ctx.cfg = load_config(kCanonical);
    ctx.art = synthesize(ctx.cfg);
  } catch (const std::exception& e) {
    std::cout << "setup: FAIL " << e.what() << '\n';
    return 8;
  }
  const std::vector<std::pair<std::string, std::function<Outcome(const Context&)>>> criteria{
      {"design inequality", criterion1},   {"terminal ingredients", criterion2},
      {"containment oracle", criterion3},  {"closed-loop runs", criterion4},
      {"input-to-state stability", criterion5}, {"free initial state", criterion6},
      {"nominal baseline", criterion7},    {"oracle equivalences", criterion8},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto start = std::chrono::steady_clock::now();
    Outcome out;
    try {
      out = criteria[i].second(ctx);
    } catch (const std::exception& e) {
      out.check(false, "exception", e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (!out.passed) ++failures;
    std::cout << "criterion " << i + 1 << " (" << criteria[i].first << "): " << (out.passed ? "PASS" : "FAIL")
              << " | " << out.detail.str() << " | " << num(secs) << " s" << std::endl;
  }
  return failures;
}
