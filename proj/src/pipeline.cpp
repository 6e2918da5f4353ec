#include "iqcmpc/pipeline.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <sstream>

#include "iqcmpc/synthesis.hpp"
#include "iqcmpc/tube.hpp"

namespace iqcmpc {

namespace {

using json = nlohmann::json;

template <typename F>
auto stage(const char* name, F&& body) -> decltype(body()) {
  try {
    return body();
  } catch (const Error& e) {
    throw Error(e.code(), std::string("synthesis stage '") + name + "': " + e.what());
  }
}

Matrix feedback_gain(const ProblemConfig& cfg) {
  if (cfg.k) return *cfg.k;
  return lqr_gain(cfg.sys.a, cfg.sys.b_u, cfg.k_lqr->q, cfg.k_lqr->r);
}

}  // namespace

DesignArtifact synthesize(const ProblemConfig& cfg) {
  cfg.validate();
  const Matrix k = stage("feedback", [&] { return feedback_gain(cfg); });
  const DelayIqc iqc = stage("iqc", [&] { return build_delay_iqc(cfg.tau_max, cfg.sys.ny()); });
  const DesignInputs in{cfg.sys, k, cfg.dist, cfg.cons, cfg.rho, iqc.filter, iqc};
  const double gamma = stage("gamma", [&] { return cfg.gamma ? *cfg.gamma : propose_gamma(in); });
  const SymMatrix gamma_mat = cfg.gamma_mat ? *cfg.gamma_mat : SymMatrix::symmetrize(gamma * Matrix::Identity(cfg.sys.ny(), cfg.sys.ny()));
  const DesignResult res = stage("tightening", [&] { return minimize_tightening(in, gamma, gamma_mat); });
  stage("terminal", [&] {
    if (!check_terminal_existence(cfg.cons, res.tube))
      fail(ErrorCode::NoTerminalSet, "some constraint row leaves no room for the steady-state tube");
    return 0;
  });
  DesignArtifact art;
  art.tube = res.tube;
  art.terminal = stage("terminal", [&] {
    return terminal_ingredients(cfg.sys, res.tube, cfg.cons, cfg.q, cfg.r, cfg.k_omega, cfg.s_omega);
  });
  art.filter = iqc.filter;
  art.m = res.m.m;
  art.x_weight = res.x_weight;
  art.tau_max = cfg.tau_max;
  art.lmi_margin = res.lmi_margin;
  return art;
}

namespace {

json to_json(const Matrix& m) {
  json rows = json::array();
  for (Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

json to_json(const Vector& v) {
  json out = json::array();
  for (Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

Matrix matrix_from(const json& j, const std::string& what) {
  if (!j.is_array() || j.empty()) fail(ErrorCode::Parse, "design: '" + what + "' must be a nonempty list of rows");
  const auto rows = static_cast<Index>(j.size());
  const auto cols = static_cast<Index>(j.front().size());
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    const json& row = j[static_cast<std::size_t>(i)];
    if (!row.is_array() || static_cast<Index>(row.size()) != cols)
      fail(ErrorCode::Parse, "design: '" + what + "' has ragged rows");
    for (Index c = 0; c < cols; ++c) {
      const json& v = row[static_cast<std::size_t>(c)];
      if (!v.is_number()) fail(ErrorCode::Parse, "design: '" + what + "' has a non-numeric entry");
      m(i, c) = v.get<double>();
    }
  }
  return m;
}

Vector vector_from(const json& j, const std::string& what) {
  if (!j.is_array()) fail(ErrorCode::Parse, "design: '" + what + "' must be a list of numbers");
  Vector v(static_cast<Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) fail(ErrorCode::Parse, "design: '" + what + "' has a non-numeric entry");
    v(static_cast<Index>(i)) = j[i].get<double>();
  }
  return v;
}

SymMatrix sym_from(const json& j, const std::string& what) {
  const Matrix m = matrix_from(j, what);
  if (m.rows() != m.cols()) fail(ErrorCode::Parse, "design: '" + what + "' must be square");
  return SymMatrix::symmetrize(m);
}

const json& field(const json& j, const std::string& key) {
  const auto it = j.find(key);
  if (it == j.end()) fail(ErrorCode::Parse, "design: missing field '" + key + "'");
  return *it;
}

double number_from(const json& j, const std::string& key) {
  const json& v = field(j, key);
  if (!v.is_number()) fail(ErrorCode::Parse, "design: '" + key + "' must be a number");
  return v.get<double>();
}

constexpr const char* kFormat = "iqcmpc-design";
constexpr int kVersion = 1;

}  // namespace

std::string design_to_json(const DesignArtifact& art) {
  const TubeParams& t = art.tube;
  json j;
  j["format"] = kFormat;
  j["version"] = kVersion;
  j["tau_max"] = art.tau_max;
  j["tube"] = {{"rho", t.rho},     {"P", to_json(t.p.mat())},          {"gamma", t.gamma},
               {"Gamma", to_json(t.gamma_mat.mat())}, {"K", to_json(t.k)}, {"c", to_json(t.c)},
               {"d_max", t.d_max}, {"lmi_margin", art.lmi_margin}};
  j["multiplier"] = {{"M", to_json(art.m.mat())}};
  if (art.x_weight) j["multiplier"]["X"] = to_json(art.x_weight->mat());
  const IQCFilter& f = art.filter;
  j["filter"] = {{"A_psi", to_json(f.a_psi)},   {"B_psi1", to_json(f.b_psi1)}, {"B_psi2", to_json(f.b_psi2)},
                 {"C_psi", to_json(f.c_psi)},   {"D_psi1", to_json(f.d_psi1)}, {"D_psi2", to_json(f.d_psi2)}};
  const TerminalSet& term = art.terminal;
  j["terminal"] = {{"K_omega", to_json(term.k_omega)},
                   {"S", to_json(term.s_mat.mat())},
                   {"x_omega", term.x_omega},
                   {"s_omega", term.s_omega}};
  std::ostringstream out;
  out << std::setw(2) << j << '\n';
  return out.str();
}

DesignArtifact design_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    fail(ErrorCode::Parse, std::string("design: ") + e.what());
  }
  if (!j.is_object() || j.value("format", "") != kFormat) fail(ErrorCode::Parse, "design: not a design artifact");
  if (j.value("version", 0) != kVersion) fail(ErrorCode::Parse, "design: unsupported version");

  DesignArtifact art;
  const json& t = field(j, "tube");
  TubeParams& tube = art.tube;
  tube.rho = number_from(t, "rho");
  tube.p = sym_from(field(t, "P"), "P");
  tube.gamma = number_from(t, "gamma");
  tube.gamma_mat = sym_from(field(t, "Gamma"), "Gamma");
  tube.k = matrix_from(field(t, "K"), "K");
  tube.c = vector_from(field(t, "c"), "c");
  tube.d_max = number_from(t, "d_max");
  art.lmi_margin = number_from(t, "lmi_margin");

  const json& mult = field(j, "multiplier");
  art.m = sym_from(field(mult, "M"), "M");
  if (mult.contains("X")) art.x_weight = sym_from(mult["X"], "X");

  const json& f = field(j, "filter");
  art.filter = {matrix_from(field(f, "A_psi"), "A_psi"), matrix_from(field(f, "B_psi1"), "B_psi1"),
                matrix_from(field(f, "B_psi2"), "B_psi2"), matrix_from(field(f, "C_psi"), "C_psi"),
                matrix_from(field(f, "D_psi1"), "D_psi1"), matrix_from(field(f, "D_psi2"), "D_psi2")};
  const json& tj = field(j, "tau_max");
  if (!tj.is_number_integer()) fail(ErrorCode::Parse, "design: 'tau_max' must be an integer");
  art.tau_max = tj.get<int>();

  const json& term = field(j, "terminal");
  art.terminal.k_omega = matrix_from(field(term, "K_omega"), "K_omega");
  art.terminal.s_mat = sym_from(field(term, "S"), "S");
  art.terminal.x_omega = number_from(term, "x_omega");
  art.terminal.s_omega = number_from(term, "s_omega");

  const Index nx = tube.k.cols();
  if (tube.p.dim() != nx + art.filter.npsi() || art.filter.npsi() != art.filter.a_psi.cols())
    fail(ErrorCode::Parse, "design: P does not match the state and filter dimensions");
  if (art.terminal.s_mat.dim() != nx) fail(ErrorCode::Parse, "design: S does not match the state dimension");
  try {
    const SchurSplit split = schur_reduce(tube.p, nx);
    tube.p_e = split.p_e;
    tube.p_diff = split.p_diff;
  } catch (const Error& e) {
    fail(ErrorCode::Parse, std::string("design: P is not usable: ") + e.what());
  }
  return art;
}

void save_design(const DesignArtifact& art, const std::filesystem::path& path) {
  const std::string text = design_to_json(art);
  std::ofstream out(path);
  if (!out) fail(ErrorCode::Io, "cannot write design " + path.string());
  out << text;
  if (!out) fail(ErrorCode::Io, "write failed for " + path.string());
}

DesignArtifact load_design(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::Io, "cannot open design " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  try {
    return design_from_json(buf.str());
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

bool VerifyReport::passed() const noexcept {
  for (const auto& c : checks)
    if (!c.passed) return false;
  return !checks.empty();
}

std::string VerifyReport::to_json() const {
  json j;
  j["passed"] = passed();
  j["checks"] = json::array();
  for (const auto& c : checks) {
    json entry = {{"name", c.name}, {"passed", c.passed}, {"detail", c.detail}};
    // Non-finite values have no JSON literal.
    entry["value"] = std::isfinite(c.value) ? json(c.value) : json(nullptr);
    entry["bound"] = std::isfinite(c.bound) ? json(c.bound) : json(nullptr);
    j["checks"].push_back(std::move(entry));
  }
  std::ostringstream out;
  out << std::setw(2) << j << '\n';
  return out.str();
}

std::vector<std::pair<std::string, std::vector<Vector>>> oracle_excitations(Index ny, int horizon) {
  std::vector<Vector> zero(horizon, Vector::Zero(ny));
  std::vector<Vector> pulse = zero;
  std::vector<Vector> ramp = zero;
  if (horizon > 0) pulse[0].setOnes();
  for (int k = 0; k < horizon; ++k) ramp[k].setConstant(static_cast<double>(k + 1) / horizon);
  return {{"zero", zero}, {"pulse", pulse}, {"ramp", ramp}};
}

namespace {

CheckResult check(std::string name, double value, double bound, std::string detail = {}) {
  return {std::move(name), value <= bound, value, bound, std::move(detail)};
}

// Artifact data that must agree with the configuration before anything else is meaningful.
std::optional<std::string> mismatch(const ProblemConfig& cfg, const DesignArtifact& art) {
  const Index nx = cfg.sys.nx();
  const Index nu = cfg.sys.nu();
  const TubeParams& t = art.tube;
  if (t.k.rows() != nu || t.k.cols() != nx) return "feedback gain has wrong size";
  if (cfg.k && *cfg.k != t.k) return "feedback gain differs from the configuration";
  if (t.rho != cfg.rho) return "rho differs from the configuration";
  if (art.tau_max != cfg.tau_max) return "tau_max differs from the configuration";
  if (t.d_max != cfg.dist.d_max) return "d_max differs from the configuration";
  if (t.c.size() != cfg.cons.rows()) return "tightening has wrong length";
  if (t.gamma_mat.dim() != cfg.sys.ny()) return "Gamma has wrong size";
  if (art.filter.ny() != cfg.sys.ny() || art.filter.nw() != cfg.sys.nw()) return "filter does not match the plant";
  if (art.m.dim() != art.filter.nz()) return "multiplier does not match the filter";
  if (art.terminal.k_omega.rows() != nu || art.terminal.k_omega.cols() != nx) return "terminal gain has wrong size";
  return std::nullopt;
}

}  // namespace

VerifyReport verify_design(const ProblemConfig& cfg, const DesignArtifact& art) {
  cfg.validate();
  VerifyReport rep;
  if (const auto why = mismatch(cfg, art)) {
    rep.checks.push_back({"artifact_matches_config", false, 1.0, 0.0, *why});
    return rep;
  }
  rep.checks.push_back(check("artifact_matches_config", 0.0, 0.0));
  const TubeParams& tube = art.tube;
  const LinearSystem& sys = cfg.sys;

  const SymMatrix lmi = design_lmi_value(sys, tube.k, art.filter, tube.p, art.m, tube.gamma, tube.gamma_mat,
                                         cfg.dist.xi, tube.rho);
  rep.checks.push_back(check("design_lmi", lambda_max(lmi), -design_margin(tube.gamma, tube.gamma_mat, cfg.dist.xi),
                             "largest eigenvalue of the design inequality"));
  rep.checks.push_back(check("metric_positive", -lambda_min(tube.p), 0.0, "P must be positive definite"));

  if (art.x_weight) {
    const DelayIqc iqc = build_delay_iqc(art.tau_max, sys.ny());
    double worst = -lambda_min(*art.x_weight);
    for (int tau = 0; tau <= art.tau_max; ++tau)
      worst = std::max(worst, -lambda_min(SymMatrix::symmetrize(art.m.mat() - iqc.lower_bound(tau, *art.x_weight).mat())));
    rep.checks.push_back(check("multiplier_family", worst, 1e-9, "M >= M_tau(X) for every delay and X >= 0"));
  }

  const Vector c = tighten_vector(tube.p_e, tube.k, cfg.cons);
  const double c_err = (c - tube.c).lpNorm<Eigen::Infinity>();
  rep.checks.push_back(check("tightening", c_err, 1e-9 * std::max(1.0, c.lpNorm<Eigen::Infinity>()),
                             "stored tightening against the metric"));

  rep.checks.push_back(check("terminal_existence", check_terminal_existence(cfg.cons, tube) ? 0.0 : 1.0, 0.0));

  const TerminalSet& term = art.terminal;
  const Matrix a_omega = sys.a + sys.b_u * term.k_omega;
  const Matrix lyap = term.s_mat.mat() - a_omega.transpose() * term.s_mat.mat() * a_omega - cfg.q.mat() -
                      term.k_omega.transpose() * cfg.r.mat() * term.k_omega;
  rep.checks.push_back(check("terminal_lyapunov", lyap.lpNorm<Eigen::Infinity>(),
                             1e-8 * std::max(1.0, term.s_mat.mat().lpNorm<Eigen::Infinity>())));

  const TerminalCheck tc = check_terminal_set(sys, tube, cfg.cons, term, cfg.q, cfg.r, cfg.verify_samples,
                                              cfg.verify_seed);
  const std::string samples = std::to_string(tc.samples) + " samples";
  rep.checks.push_back(check("terminal_invariance", static_cast<double>(tc.item1_invariance), 0.0, samples));
  rep.checks.push_back(check("terminal_constraints", static_cast<double>(tc.item2_constraints), 0.0, samples));
  rep.checks.push_back(check("terminal_decrease", static_cast<double>(tc.item3_decrease), 0.0, samples));

  const auto vertices = disturbance_vertices(cfg.dist);
  for (const auto& [name, ybar] : oracle_excitations(sys.ny(), cfg.oracle_horizon)) {
    const auto worst = brute_force_worst_error(sys, tube.k, tube.p_e, cfg.oracle_horizon, art.tau_max, vertices, ybar);
    double s = 0.0;
    double excess = cfg.oracle_horizon == 0 ? worst[0] : -std::numeric_limits<double>::infinity();
    for (int k = 0; k < cfg.oracle_horizon; ++k) {
      s = tube_predict(s, tube.gamma_mat.quad(ybar[k]), tube);
      excess = std::max(excess, worst[k + 1] - s);
    }
    rep.checks.push_back(check("containment_" + name, excess, 0.0, "max_k worst |e_k|^2_Pe - s_k"));
  }
  return rep;
}

MPCConfig make_mpc_config(const ProblemConfig& cfg, const DesignArtifact& art) {
  MPCConfig m;
  m.horizon = cfg.horizon;
  m.q = cfg.q;
  m.r = cfg.r;
  m.s_cost = art.terminal.s_mat;
  m.terminal = art.terminal;
  m.tube = art.tube;
  m.sys = cfg.sys;
  m.cons = cfg.cons;
  m.init = cfg.init;
  m.tube_mode = cfg.tube_mode;
  return m;
}

Controller make_controller(const ProblemConfig& cfg, const DesignArtifact& art) {
  std::optional<IQCFilter> filter;
  if (cfg.tube_mode == TubeMode::Exact) filter = art.filter;
  return Controller(make_mpc_config(cfg, art), filter);
}

SimTrace run_closed_loop(const ProblemConfig& cfg, const DesignArtifact& art, const RunRequest& req) {
  Controller ctrl = make_controller(cfg, art);
  RunOptions opts;
  opts.steps = req.steps;
  opts.policy = cfg.disturbance;
  opts.seed = req.seed;
  opts.keep_every = req.keep_every;
  return closed_loop_run(cfg.sys, make_delay(cfg), ctrl, cfg.dist, req.x0, opts);
}

RunSummary summarize(const SimTrace& trace, const ProblemConfig& cfg, const DesignArtifact& art) {
  RunSummary sum;
  sum.infeasible_start = trace.infeasible_start;
  sum.steps = static_cast<int>(trace.size());
  sum.s_omega = art.terminal.s_omega;
  sum.final_norm = trace.x_final.size() ? trace.x_final.norm() : 0.0;
  if (trace.steps.empty()) return sum;
  sum.max_violation = -std::numeric_limits<double>::infinity();
  for (const SimStep& st : trace.steps) {
    sum.max_violation = std::max(sum.max_violation, st.max_violation);
    if (st.status != SolveStatus::Optimal) ++sum.suboptimal_steps;
    if (st.candidate_gap) sum.worst_candidate_gap = std::max(sum.worst_candidate_gap, *st.candidate_gap);
  }
  if (!trace.steps.front().s_pred.empty()) sum.s_terminal0 = trace.steps.front().s_pred.back();
  const ContainmentReport rep = verify_containment(containment_samples(trace), art.tube);
  sum.min_containment_slack = rep.min_slack;
  sum.containment_violations = static_cast<int>(rep.violations.size());
  sum.replay_residual = replay_residual(cfg.sys, trace, cfg.tau_max);
  return sum;
}

void export_predictions(const SimTrace& trace, double s_omega, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::Io, "cannot write predictions " + path.string());
  const Index nx = trace.steps.empty() ? 2 : trace.steps.front().x.size();
  out << "t,k,s";
  for (Index i = 0; i < nx; ++i) out << ",z" << i + 1;
  out << ",s_omega\n" << std::setprecision(17);
  for (const SimStep& st : trace.steps) {
    for (std::size_t k = 0; k < st.s_pred.size(); ++k) {
      out << st.t << ',' << k << ',' << st.s_pred[k];
      for (Index i = 0; i < nx; ++i) out << ',' << st.z_pred[k](i);
      out << ',' << s_omega << '\n';
    }
  }
  if (!out) fail(ErrorCode::Io, "write failed for " + path.string());
}

}  // namespace iqcmpc
