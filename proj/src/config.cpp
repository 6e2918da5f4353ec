#include "iqcmpc/config.hpp"

#include <yaml-cpp/yaml.h>

#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace iqcmpc {

namespace {

// First problem found by the cross-checks: the offending field and a message.
struct Issue {
  std::string field;
  std::string message;
};

bool shape(const Matrix& m, Index rows, Index cols) { return m.rows() == rows && m.cols() == cols; }

bool positive_definite(const SymMatrix& m) { return m.dim() > 0 && m.mat().allFinite() && lambda_min(m) > 0.0; }

std::optional<Issue> first_issue(const ProblemConfig& cfg) {
  const LinearSystem& s = cfg.sys;
  const Index nx = s.a.rows();
  if (nx == 0 || s.a.cols() != nx) return Issue{"plant.A", "must be square and nonempty"};
  const Index nu = s.b_u.cols();
  const Index nw = s.b_w.cols();
  const Index nd = s.b_d.cols();
  const Index ny = s.c.rows();
  if (s.b_u.rows() != nx || nu == 0) return Issue{"plant.B_u", "must have one row per state and at least one column"};
  if (s.b_w.rows() != nx || nw == 0) return Issue{"plant.B_w", "must have one row per state and at least one column"};
  if (s.b_d.rows() != nx || nd == 0) return Issue{"plant.B_d", "must have one row per state and at least one column"};
  if (s.c.cols() != nx || ny == 0) return Issue{"plant.C", "must have one column per state"};
  if (ny != nw) return Issue{"plant.C", "the uncertainty maps y to w, so C needs as many rows as B_w has columns"};
  if (!shape(s.d_w, ny, nw)) return Issue{"plant.D_w", "has wrong size"};
  if (!shape(s.d_d, ny, nd)) return Issue{"plant.D_d", "has wrong size"};
  if (!shape(s.d_u, ny, nu)) return Issue{"plant.D_u", "has wrong size"};
  for (const Matrix* m : {&s.a, &s.b_w, &s.b_d, &s.b_u, &s.c, &s.d_w, &s.d_d, &s.d_u})
    if (!m->allFinite()) return Issue{"plant", "entries must be finite"};

  if (cfg.cons.rows() == 0) return Issue{"constraints.F", "the constraint set is empty"};
  if (cfg.cons.h_mat.cols() != nx + nu) return Issue{"constraints.F", "needs one column per state and input"};
  if (cfg.cons.h_vec.size() != cfg.cons.rows()) return Issue{"constraints.f", "needs one entry per row of F"};
  if (!cfg.cons.h_mat.allFinite() || !cfg.cons.h_vec.allFinite()) return Issue{"constraints", "entries must be finite"};

  if (cfg.dist.xi.dim() != nd) return Issue{"disturbance.Xi", "needs one row per disturbance"};
  if (!positive_definite(cfg.dist.xi)) return Issue{"disturbance.Xi", "must be positive definite"};
  if (!(cfg.dist.d_max >= 0.0) || !std::isfinite(cfg.dist.d_max))
    return Issue{"disturbance.d_max", "must be finite and nonnegative"};
  if (cfg.tau_max < 0) return Issue{"uncertainty.tau_max", "must be nonnegative"};

  if (!(cfg.rho > 0.0 && cfg.rho < 1.0)) return Issue{"design.rho", "must lie strictly between 0 and 1"};
  if (cfg.k.has_value() == cfg.k_lqr.has_value()) return Issue{"design", "give exactly one of K and K_lqr"};
  if (cfg.k && (!shape(*cfg.k, nu, nx) || !cfg.k->allFinite())) return Issue{"design.K", "must be inputs x states"};
  if (cfg.k_lqr) {
    if (cfg.k_lqr->q.dim() != nx || !positive_definite(cfg.k_lqr->q))
      return Issue{"design.K_lqr.Q", "must be positive definite with one row per state"};
    if (cfg.k_lqr->r.dim() != nu || !positive_definite(cfg.k_lqr->r))
      return Issue{"design.K_lqr.R", "must be positive definite with one row per input"};
  }
  if (cfg.gamma && !(*cfg.gamma > 0.0 && std::isfinite(*cfg.gamma)))
    return Issue{"design.gamma", "must be positive and finite"};
  if (cfg.gamma_mat && (cfg.gamma_mat->dim() != ny || !positive_definite(*cfg.gamma_mat)))
    return Issue{"design.Gamma", "must be positive definite with one row per output"};
  if (cfg.gamma_mat && !cfg.gamma) return Issue{"design.Gamma", "needs design.gamma as well"};
  if (!shape(cfg.k_omega, nu, nx) || !cfg.k_omega.allFinite()) return Issue{"design.K_omega", "must be inputs x states"};
  if (cfg.s_omega && !(*cfg.s_omega > 0.0 && std::isfinite(*cfg.s_omega)))
    return Issue{"design.s_omega", "must be positive and finite"};

  if (cfg.horizon < 1) return Issue{"mpc.horizon", "must be at least 1"};
  if (cfg.q.dim() != nx || !positive_definite(cfg.q)) return Issue{"mpc.Q", "must be positive definite, states x states"};
  if (cfg.r.dim() != nu || !positive_definite(cfg.r)) return Issue{"mpc.R", "must be positive definite, inputs x inputs"};

  if (cfg.steps < 0) return Issue{"simulation.steps", "must be nonnegative"};
  if (cfg.delay_value < 0 || cfg.delay_value > cfg.tau_max)
    return Issue{"simulation.delay_value", "must lie in [0, tau_max]"};
  for (const Vector& x0 : cfg.initial_states)
    if (x0.size() != nx || !x0.allFinite()) return Issue{"simulation.initial_states", "each entry needs one value per state"};

  if (cfg.verify_samples == 0) return Issue{"verify.samples", "must be positive"};
  if (cfg.oracle_horizon < 0 || cfg.oracle_horizon > 10) return Issue{"verify.oracle_horizon", "must lie in [0, 10]"};
  return std::nullopt;
}

[[noreturn]] void parse_error(const YAML::Mark& mark, const std::string& what) {
  const std::string where = mark.is_null() ? std::string("config") : "line " + std::to_string(mark.line + 1);
  fail(ErrorCode::Parse, where + ": " + what);
}

// Reads one mapping, remembers where every key lives and rejects unknown keys.
class Section {
 public:
  Section(const YAML::Node& node, std::string path, std::map<std::string, YAML::Mark>& marks,
          std::set<std::string> allowed)
      : node_(node), path_(std::move(path)), marks_(marks) {
    if (!node_.IsMap()) parse_error(node_.Mark(), path_ + " must be a mapping");
    for (const auto& kv : node_) {
      const auto key = kv.first.as<std::string>();
      if (!allowed.count(key)) parse_error(kv.first.Mark(), "unknown key '" + qualify(key) + "'");
      marks_[qualify(key)] = kv.first.Mark();
    }
  }

  bool has(const std::string& key) const { return static_cast<bool>(node_[key]); }

  YAML::Node get(const std::string& key) const {
    const YAML::Node n = node_[key];
    if (!n) parse_error(node_.Mark(), "missing key '" + qualify(key) + "'");
    return n;
  }

  std::string qualify(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  Section child(const std::string& key, std::set<std::string> allowed) const {
    return Section(get(key), qualify(key), marks_, std::move(allowed));
  }

  template <typename T>
  T scalar(const std::string& key) const {
    const YAML::Node n = get(key);
    if (!n.IsScalar()) parse_error(n.Mark(), qualify(key) + " must be a scalar");
    try {
      return n.as<T>();
    } catch (const YAML::Exception&) {
      parse_error(n.Mark(), qualify(key) + ": cannot read '" + n.Scalar() + "'");
    }
  }

  template <typename T>
  T scalar_or(const std::string& key, T fallback) const {
    return has(key) ? scalar<T>(key) : fallback;
  }

  Matrix matrix(const std::string& key) const { return read_matrix(get(key), qualify(key)); }
  Vector vector(const std::string& key) const { return read_vector(get(key), qualify(key)); }
  SymMatrix sym(const std::string& key) const {
    const YAML::Node n = get(key);
    const Matrix m = read_matrix(n, qualify(key));
    if (m.rows() != m.cols() || !(m - m.transpose()).isZero(0.0))
      parse_error(n.Mark(), qualify(key) + " must be symmetric");
    return SymMatrix(m);
  }

  static double number(const YAML::Node& n, const std::string& what) {
    if (!n.IsScalar()) parse_error(n.Mark(), what + ": expected a number");
    try {
      return n.as<double>();
    } catch (const YAML::Exception&) {
      parse_error(n.Mark(), what + ": cannot read '" + n.Scalar() + "' as a number");
    }
  }

  static Vector read_vector(const YAML::Node& n, const std::string& what) {
    if (!n.IsSequence()) parse_error(n.Mark(), what + " must be a list of numbers");
    Vector v(static_cast<Index>(n.size()));
    for (std::size_t i = 0; i < n.size(); ++i) v(static_cast<Index>(i)) = number(n[i], what);
    return v;
  }

  // Row-major list of rows; every row has the same length.
  static Matrix read_matrix(const YAML::Node& n, const std::string& what) {
    if (!n.IsSequence() || n.size() == 0) parse_error(n.Mark(), what + " must be a nonempty list of rows");
    const auto rows = static_cast<Index>(n.size());
    Index cols = -1;
    Matrix m;
    for (Index i = 0; i < rows; ++i) {
      const YAML::Node row = n[static_cast<std::size_t>(i)];
      const Vector r = read_vector(row, what);
      if (cols < 0) {
        cols = r.size();
        m.resize(rows, cols);
      } else if (r.size() != cols) {
        parse_error(row.Mark(), what + ": row " + std::to_string(i + 1) + " has " + std::to_string(r.size()) +
                                    " entries, expected " + std::to_string(cols));
      }
      m.row(i) = r.transpose();
    }
    return m;
  }

 private:
  YAML::Node node_;
  std::string path_;
  std::map<std::string, YAML::Mark>& marks_;
};

template <typename Enum>
Enum choose(const Section& sec, const std::string& key, const std::map<std::string, Enum>& options, Enum fallback) {
  if (!sec.has(key)) return fallback;
  const auto name = sec.scalar<std::string>(key);
  const auto it = options.find(name);
  if (it == options.end()) parse_error(sec.get(key).Mark(), "unknown value '" + name + "' for " + sec.qualify(key));
  return it->second;
}

const std::map<std::string, InitMode> kInitModes{{"free", InitMode::Free}, {"fixed", InitMode::Fixed}};
const std::map<std::string, TubeMode> kTubeModes{{"general", TubeMode::General}, {"exact", TubeMode::Exact}};
const std::map<std::string, DelayPolicy> kDelayPolicies{{"random", DelayPolicy::Random},
                                                        {"constant", DelayPolicy::Constant}};
const std::map<std::string, DisturbancePolicy> kDisturbancePolicies{{"zero", DisturbancePolicy::Zero},
                                                                    {"uniform", DisturbancePolicy::Uniform},
                                                                    {"vertex", DisturbancePolicy::Vertex}};

template <typename Enum>
std::string name_of(const std::map<std::string, Enum>& options, Enum value) {
  for (const auto& [name, v] : options)
    if (v == value) return name;
  return "unknown";
}

}  // namespace

void ProblemConfig::validate() const {
  if (const auto issue = first_issue(*this)) fail(ErrorCode::Parse, issue->field + ": " + issue->message);
}

ProblemConfig parse_config(const std::string& text) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    parse_error(e.mark, e.msg);
  }
  if (!root || root.IsNull()) fail(ErrorCode::Parse, "config: empty document");

  std::map<std::string, YAML::Mark> marks;
  const Section top(root, "", marks,
                    {"plant", "constraints", "disturbance", "uncertainty", "design", "mpc", "simulation", "verify"});
  ProblemConfig cfg;

  const Section plant = top.child("plant", {"A", "B_w", "B_d", "B_u", "C", "D_w", "D_d", "D_u"});
  cfg.sys = {plant.matrix("A"), plant.matrix("B_w"), plant.matrix("B_d"), plant.matrix("B_u"),
             plant.matrix("C"), plant.matrix("D_w"), plant.matrix("D_d"), plant.matrix("D_u")};

  const Section cons = top.child("constraints", {"F", "f"});
  const YAML::Node f_rows = cons.get("F");
  if (f_rows.IsSequence() && f_rows.size() == 0) parse_error(f_rows.Mark(), "constraints.F: the constraint set is empty");
  cfg.cons = {cons.matrix("F"), cons.vector("f")};

  const Section dist = top.child("disturbance", {"d_max", "Xi"});
  cfg.dist.d_max = dist.scalar<double>("d_max");
  cfg.dist.xi = dist.has("Xi") ? dist.sym("Xi") : SymMatrix::identity(cfg.sys.b_d.cols());

  cfg.tau_max = top.child("uncertainty", {"tau_max"}).scalar<int>("tau_max");

  const Section design = top.child("design", {"rho", "K", "K_lqr", "gamma", "Gamma", "K_omega", "s_omega"});
  cfg.rho = design.scalar<double>("rho");
  if (design.has("K")) cfg.k = design.matrix("K");
  if (design.has("K_lqr")) {
    const Section lqr = design.child("K_lqr", {"Q", "R"});
    cfg.k_lqr = LqrWeights{lqr.sym("Q"), lqr.sym("R")};
  }
  if (design.has("gamma")) cfg.gamma = design.scalar<double>("gamma");
  if (design.has("Gamma")) cfg.gamma_mat = design.sym("Gamma");
  cfg.k_omega = design.matrix("K_omega");
  if (design.has("s_omega")) cfg.s_omega = design.scalar<double>("s_omega");

  const Section mpc = top.child("mpc", {"horizon", "Q", "R", "init", "tube_mode"});
  cfg.horizon = mpc.scalar<int>("horizon");
  cfg.q = mpc.sym("Q");
  cfg.r = mpc.sym("R");
  cfg.init = choose(mpc, "init", kInitModes, InitMode::Free);
  cfg.tube_mode = choose(mpc, "tube_mode", kTubeModes, TubeMode::General);

  if (top.has("simulation")) {
    const Section sim = top.child(
        "simulation", {"steps", "seed", "delay_seed", "delay", "delay_value", "disturbance", "initial_states"});
    cfg.steps = sim.scalar_or<int>("steps", cfg.steps);
    cfg.seed = sim.scalar_or<std::uint64_t>("seed", cfg.seed);
    cfg.delay_seed = sim.scalar_or<std::uint64_t>("delay_seed", cfg.delay_seed);
    cfg.delay = choose(sim, "delay", kDelayPolicies, cfg.delay);
    cfg.delay_value = sim.scalar_or<int>("delay_value", cfg.delay_value);
    cfg.disturbance = choose(sim, "disturbance", kDisturbancePolicies, cfg.disturbance);
    if (sim.has("initial_states")) {
      const Matrix states = sim.matrix("initial_states");
      for (Index i = 0; i < states.rows(); ++i) cfg.initial_states.push_back(states.row(i).transpose());
    }
  }
  if (top.has("verify")) {
    const Section ver = top.child("verify", {"samples", "seed", "oracle_horizon"});
    cfg.verify_samples = ver.scalar_or<std::size_t>("samples", cfg.verify_samples);
    cfg.verify_seed = ver.scalar_or<std::uint64_t>("seed", cfg.verify_seed);
    cfg.oracle_horizon = ver.scalar_or<int>("oracle_horizon", cfg.oracle_horizon);
  }

  if (const auto issue = first_issue(cfg)) {
    // Anchor at the field itself, or at the closest enclosing key that was written.
    std::string field = issue->field;
    while (!marks.count(field) && field.find('.') != std::string::npos) field.erase(field.rfind('.'));
    const YAML::Mark mark = marks.count(field) ? marks.at(field) : YAML::Mark::null_mark();
    parse_error(mark, issue->field + ": " + issue->message);
  }
  return cfg;
}

ProblemConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::Io, "cannot open config " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  try {
    return parse_config(buf.str());
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

namespace {

void emit_matrix(YAML::Emitter& out, const Matrix& m) {
  out << YAML::Flow << YAML::BeginSeq;
  for (Index i = 0; i < m.rows(); ++i) {
    out << YAML::Flow << YAML::BeginSeq;
    for (Index j = 0; j < m.cols(); ++j) out << m(i, j);
    out << YAML::EndSeq;
  }
  out << YAML::EndSeq;
}

void emit_vector(YAML::Emitter& out, const Vector& v) {
  out << YAML::Flow << YAML::BeginSeq;
  for (Index i = 0; i < v.size(); ++i) out << v(i);
  out << YAML::EndSeq;
}

void key_matrix(YAML::Emitter& out, const char* key, const Matrix& m) {
  out << YAML::Key << key << YAML::Value;
  emit_matrix(out, m);
}

}  // namespace

std::string serialize_config(const ProblemConfig& cfg) {
  cfg.validate();
  YAML::Emitter out;
  out.SetDoublePrecision(17);
  out << YAML::BeginMap;

  out << YAML::Key << "plant" << YAML::Value << YAML::BeginMap;
  key_matrix(out, "A", cfg.sys.a);
  key_matrix(out, "B_w", cfg.sys.b_w);
  key_matrix(out, "B_d", cfg.sys.b_d);
  key_matrix(out, "B_u", cfg.sys.b_u);
  key_matrix(out, "C", cfg.sys.c);
  key_matrix(out, "D_w", cfg.sys.d_w);
  key_matrix(out, "D_d", cfg.sys.d_d);
  key_matrix(out, "D_u", cfg.sys.d_u);
  out << YAML::EndMap;

  out << YAML::Key << "constraints" << YAML::Value << YAML::BeginMap;
  key_matrix(out, "F", cfg.cons.h_mat);
  out << YAML::Key << "f" << YAML::Value;
  emit_vector(out, cfg.cons.h_vec);
  out << YAML::EndMap;

  out << YAML::Key << "disturbance" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "d_max" << YAML::Value << cfg.dist.d_max;
  key_matrix(out, "Xi", cfg.dist.xi.mat());
  out << YAML::EndMap;

  out << YAML::Key << "uncertainty" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "tau_max" << YAML::Value << cfg.tau_max << YAML::EndMap;

  out << YAML::Key << "design" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "rho" << YAML::Value << cfg.rho;
  if (cfg.k) key_matrix(out, "K", *cfg.k);
  if (cfg.k_lqr) {
    out << YAML::Key << "K_lqr" << YAML::Value << YAML::BeginMap;
    key_matrix(out, "Q", cfg.k_lqr->q.mat());
    key_matrix(out, "R", cfg.k_lqr->r.mat());
    out << YAML::EndMap;
  }
  if (cfg.gamma) out << YAML::Key << "gamma" << YAML::Value << *cfg.gamma;
  if (cfg.gamma_mat) key_matrix(out, "Gamma", cfg.gamma_mat->mat());
  key_matrix(out, "K_omega", cfg.k_omega);
  if (cfg.s_omega) out << YAML::Key << "s_omega" << YAML::Value << *cfg.s_omega;
  out << YAML::EndMap;

  out << YAML::Key << "mpc" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "horizon" << YAML::Value << cfg.horizon;
  key_matrix(out, "Q", cfg.q.mat());
  key_matrix(out, "R", cfg.r.mat());
  out << YAML::Key << "init" << YAML::Value << name_of(kInitModes, cfg.init);
  out << YAML::Key << "tube_mode" << YAML::Value << name_of(kTubeModes, cfg.tube_mode);
  out << YAML::EndMap;

  out << YAML::Key << "simulation" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "steps" << YAML::Value << cfg.steps;
  out << YAML::Key << "seed" << YAML::Value << cfg.seed;
  out << YAML::Key << "delay_seed" << YAML::Value << cfg.delay_seed;
  out << YAML::Key << "delay" << YAML::Value << name_of(kDelayPolicies, cfg.delay);
  out << YAML::Key << "delay_value" << YAML::Value << cfg.delay_value;
  out << YAML::Key << "disturbance" << YAML::Value << name_of(kDisturbancePolicies, cfg.disturbance);
  if (!cfg.initial_states.empty()) {
    out << YAML::Key << "initial_states" << YAML::Value << YAML::BeginSeq;
    for (const Vector& x0 : cfg.initial_states) emit_vector(out, x0);
    out << YAML::EndSeq;
  }
  out << YAML::EndMap;

  out << YAML::Key << "verify" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "samples" << YAML::Value << cfg.verify_samples;
  out << YAML::Key << "seed" << YAML::Value << cfg.verify_seed;
  out << YAML::Key << "oracle_horizon" << YAML::Value << cfg.oracle_horizon;
  out << YAML::EndMap;

  out << YAML::EndMap;
  return std::string(out.c_str()) + "\n";
}

void save_config(const ProblemConfig& cfg, const std::filesystem::path& path) {
  const std::string text = serialize_config(cfg);
  std::ofstream out(path);
  if (!out) fail(ErrorCode::Io, "cannot write config " + path.string());
  out << text;
  if (!out) fail(ErrorCode::Io, "write failed for " + path.string());
}

namespace {

bool same(const Matrix& a, const Matrix& b) { return a.rows() == b.rows() && a.cols() == b.cols() && a == b; }

template <typename T, typename Eq>
bool same_optional(const std::optional<T>& a, const std::optional<T>& b, Eq eq) {
  return a.has_value() == b.has_value() && (!a || eq(*a, *b));
}

}  // namespace

bool same_config(const ProblemConfig& a, const ProblemConfig& b) {
  const auto& sa = a.sys;
  const auto& sb = b.sys;
  const bool plant = same(sa.a, sb.a) && same(sa.b_w, sb.b_w) && same(sa.b_d, sb.b_d) && same(sa.b_u, sb.b_u) &&
                     same(sa.c, sb.c) && same(sa.d_w, sb.d_w) && same(sa.d_d, sb.d_d) && same(sa.d_u, sb.d_u);
  const auto sym_eq = [](const SymMatrix& x, const SymMatrix& y) { return same(x.mat(), y.mat()); };
  const auto lqr_eq = [&](const LqrWeights& x, const LqrWeights& y) { return sym_eq(x.q, y.q) && sym_eq(x.r, y.r); };
  const auto mat_eq = [](const Matrix& x, const Matrix& y) { return same(x, y); };
  const auto num_eq = [](double x, double y) { return x == y; };
  bool states = a.initial_states.size() == b.initial_states.size();
  for (std::size_t i = 0; states && i < a.initial_states.size(); ++i)
    states = same(a.initial_states[i], b.initial_states[i]);
  return plant && same(a.cons.h_mat, b.cons.h_mat) && same(a.cons.h_vec, b.cons.h_vec) &&
         sym_eq(a.dist.xi, b.dist.xi) && a.dist.d_max == b.dist.d_max && a.tau_max == b.tau_max && a.rho == b.rho &&
         same_optional(a.k, b.k, mat_eq) && same_optional(a.k_lqr, b.k_lqr, lqr_eq) &&
         same_optional(a.gamma, b.gamma, num_eq) && same_optional(a.gamma_mat, b.gamma_mat, sym_eq) &&
         same(a.k_omega, b.k_omega) && same_optional(a.s_omega, b.s_omega, num_eq) && a.horizon == b.horizon &&
         sym_eq(a.q, b.q) && sym_eq(a.r, b.r) && a.init == b.init && a.tube_mode == b.tube_mode &&
         a.steps == b.steps && a.seed == b.seed && a.delay_seed == b.delay_seed && a.delay == b.delay &&
         a.delay_value == b.delay_value && a.disturbance == b.disturbance && states &&
         a.verify_samples == b.verify_samples && a.verify_seed == b.verify_seed &&
         a.oracle_horizon == b.oracle_horizon;
}

DelayUncertainty make_delay(const ProblemConfig& cfg) {
  if (cfg.delay == DelayPolicy::Constant) return DelayUncertainty::constant(cfg.tau_max, cfg.delay_value);
  return DelayUncertainty::random(cfg.tau_max, cfg.delay_seed);
}

}  // namespace iqcmpc
