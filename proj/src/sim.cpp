#include "iqcmpc/sim.hpp"

#include <Eigen/LU>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

namespace iqcmpc {

const char* to_string(DisturbancePolicy p) noexcept {
  switch (p) {
    case DisturbancePolicy::Zero:
      return "zero";
    case DisturbancePolicy::Uniform:
      return "uniform";
    case DisturbancePolicy::Vertex:
      return "vertex";
  }
  return "unknown";
}

DisturbancePolicy parse_disturbance_policy(const std::string& name) {
  if (name == "zero") return DisturbancePolicy::Zero;
  if (name == "uniform") return DisturbancePolicy::Uniform;
  if (name == "vertex") return DisturbancePolicy::Vertex;
  fail(ErrorCode::Parse, "unknown disturbance policy '" + name + "'");
}

DisturbanceSource::DisturbanceSource(DisturbanceModel model, DisturbancePolicy policy, std::uint64_t seed)
    : model_(std::move(model)), policy_(policy), rng_(seed) {
  model_.validate();
  shape_ = inv_sqrt(model_.xi).mat();
}

Vector DisturbanceSource::next() {
  const Index nd = model_.xi.dim();
  if (policy_ == DisturbancePolicy::Zero) return Vector::Zero(nd);
  std::normal_distribution<double> normal;
  Vector dir(nd);
  do {
    for (Index i = 0; i < nd; ++i) dir(i) = normal(rng_);
  } while (dir.norm() == 0.0);
  dir.normalize();
  double radius = 1.0;
  if (policy_ == DisturbancePolicy::Uniform) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    radius = std::pow(unit(rng_), 1.0 / static_cast<double>(nd));
  }
  return model_.d_max * radius * (shape_ * dir);
}

PlantStep plant_step(const LinearSystem& sys, const Vector& x, const Vector& u, const Vector& d, int tau,
                     int tau_max, std::vector<Vector>& y_history) {
  const Vector y_free = sys.c * x + sys.d_d * d + sys.d_u * u;
  y_history.push_back(y_free);
  const Vector gap = delay_operator(y_history, tau, tau_max);
  // w = y_{t-tau} - y_t with y_t = y_free + D_w w.
  Vector w = sys.d_w.isZero() ? gap : Vector((Matrix::Identity(sys.nw(), sys.nw()) + sys.d_w).lu().solve(gap));
  if (tau == 0) w.setZero();
  const Vector y = y_free + sys.d_w * w;
  y_history.back() = y;
  return {sys.a * x + sys.b_w * w + sys.b_d * d + sys.b_u * u, y, w};
}

namespace {

double worst_gap(const OcpCheck& chk) {
  return std::max({chk.row_violation, chk.terminal_violation, chk.tube_violation, chk.dynamics_residual,
                   chk.init_violation});
}

}  // namespace

SimTrace closed_loop_run(const LinearSystem& sys, DelayUncertainty uncertainty, Controller& ctrl,
                         const DisturbanceModel& dist, const Vector& x0, const RunOptions& opts) {
  require(opts.steps >= 0, ErrorCode::InvalidArgument, "closed_loop_run: negative step count");
  require(x0.size() == sys.nx(), ErrorCode::DimensionMismatch, "closed_loop_run: initial state has wrong size");
  DisturbanceSource source(dist, opts.policy, opts.seed);
  const ConstraintSet& cons = ctrl.config().cons;
  SimTrace trace;
  std::vector<Vector> y_history;
  Vector x = x0;
  for (int t = 0; t < opts.steps; ++t) {
    StepResult res;
    try {
      res = ctrl.step(x);
    } catch (const Error& err) {
      if (t == 0 && err.code() == ErrorCode::Infeasible) {
        trace.infeasible_start = true;
        break;
      }
      throw;
    }
    SimStep rec;
    rec.t = t;
    rec.x = x;
    rec.u = res.u;
    rec.d = source.next();
    rec.tau = uncertainty.next();
    const PlantStep ps = plant_step(sys, x, res.u, rec.d, rec.tau, uncertainty.tau_max(), y_history);
    rec.w = ps.w;
    rec.y = ps.y;
    const MPCSolution& sol = res.solution;
    rec.z0 = sol.z0;
    rec.v0 = sol.v_bar.front();
    rec.s0 = sol.s_seq[0];
    rec.s1 = sol.s_seq[1];
    rec.z1 = sol.z_bar[1];
    rec.status = sol.status;
    rec.cost = sol.cost;
    rec.max_violation = cons.residual(x, res.u).maxCoeff();
    if (res.candidate_check) rec.candidate_gap = worst_gap(*res.candidate_check);
    rec.candidate_cost = res.candidate_cost;
    if (t == 0 || (opts.keep_every > 0 && t % opts.keep_every == 0)) {
      rec.s_pred = sol.s_seq;
      rec.z_pred = sol.z_bar;
    }
    trace.steps.push_back(std::move(rec));
    x = ps.x_next;
  }
  trace.x_final = x;
  return trace;
}

std::vector<ContainmentSample> containment_samples(const SimTrace& trace) {
  std::vector<ContainmentSample> out;
  for (std::size_t i = 0; i < trace.steps.size(); ++i) {
    const SimStep& st = trace.steps[i];
    const Vector& next = i + 1 < trace.steps.size() ? trace.steps[i + 1].x : trace.x_final;
    out.push_back({st.t, 0, st.x - st.z0, st.s0});
    out.push_back({st.t, 1, next - st.z1, st.s1});
  }
  return out;
}

double replay_residual(const LinearSystem& sys, const SimTrace& trace, int tau_max) {
  std::vector<Vector> y_history;
  double worst = 0.0;
  for (std::size_t i = 0; i < trace.steps.size(); ++i) {
    const SimStep& st = trace.steps[i];
    const PlantStep ps = plant_step(sys, st.x, st.u, st.d, st.tau, tau_max, y_history);
    const Vector& next = i + 1 < trace.steps.size() ? trace.steps[i + 1].x : trace.x_final;
    worst = std::max({worst, (ps.x_next - next).lpNorm<Eigen::Infinity>(), (ps.w - st.w).lpNorm<Eigen::Infinity>()});
  }
  return worst;
}

std::vector<Vector> disturbance_vertices(const DisturbanceModel& dist) {
  const SymEigen eig = sym_eig(dist.xi);
  std::vector<Vector> out;
  for (Index i = 0; i < eig.values.size(); ++i) {
    const Vector axis = dist.d_max / std::sqrt(eig.values(i)) * eig.vectors.col(i);
    out.push_back(axis);
    out.push_back(-axis);
  }
  return out;
}

namespace {

struct ErrorSearch {
  const LinearSystem& sys;
  Matrix a_cl, c_cl;
  const SymMatrix& p_e;
  int horizon;
  int tau_max;
  const std::vector<Vector>& vertices;
  const std::vector<Vector>& ybar;
  std::vector<double> worst;
  std::vector<Vector> y_history;

  void descend(int k, const Vector& e) {
    worst[k] = std::max(worst[k], p_e.quad(e));
    if (k == horizon) return;
    for (int tau = 0; tau <= tau_max; ++tau) {
      for (const Vector& d : vertices) {
        const Vector y_free = c_cl * e + sys.d_d * d + ybar[k];
        y_history.push_back(y_free);
        const Vector gap = delay_operator(y_history, tau, tau_max);
        Vector w = sys.d_w.isZero() ? gap : Vector((Matrix::Identity(sys.nw(), sys.nw()) + sys.d_w).lu().solve(gap));
        if (tau == 0) w.setZero();
        y_history.back() = y_free + sys.d_w * w;
        descend(k + 1, a_cl * e + sys.b_w * w + sys.b_d * d);
        y_history.pop_back();
      }
    }
  }
};

}  // namespace

std::vector<double> brute_force_worst_error(const LinearSystem& sys, const Matrix& k, const SymMatrix& p_e,
                                            int horizon, int tau_max, const std::vector<Vector>& vertices,
                                            const std::vector<Vector>& ybar, std::uint64_t budget) {
  sys.validate();
  require(horizon >= 0 && tau_max >= 0, ErrorCode::InvalidArgument, "brute_force_worst_error: negative size");
  require(static_cast<int>(ybar.size()) >= horizon, ErrorCode::DimensionMismatch,
          "brute_force_worst_error: excitation shorter than the horizon");
  require(!vertices.empty(), ErrorCode::InvalidArgument, "brute_force_worst_error: no disturbance vertices");
  const double branching = static_cast<double>(tau_max + 1) * static_cast<double>(vertices.size());
  if (std::pow(branching, horizon) > static_cast<double>(budget))
    fail(ErrorCode::EnumerationBudget, "brute_force_worst_error: enumeration exceeds the budget");
  ErrorSearch search{sys,   sys.a + sys.b_u * k, sys.c + sys.d_u * k, p_e, horizon, tau_max, vertices, ybar,
                     std::vector<double>(horizon + 1, 0.0), {}};
  search.descend(0, Vector::Zero(sys.nx()));
  return search.worst;
}

namespace {

// Scales u toward zero until the rows that only involve the input hold.
Vector saturate(const ConstraintSet& cons, Index nx, const Vector& u) {
  double scale = 1.0;
  for (Index i = 0; i < cons.rows(); ++i) {
    if (!cons.h_mat.row(i).head(nx).isZero()) continue;
    const double load = cons.h_mat.row(i).tail(u.size()).dot(u);
    if (load > cons.h_vec(i) && load > 0.0) scale = std::min(scale, std::max(cons.h_vec(i), 0.0) / load);
  }
  return scale * u;
}

}  // namespace

SimTrace nominal_mpc_baseline(const LinearSystem& sys, const ConstraintSet& cons, const SymMatrix& q,
                              const SymMatrix& r, int horizon, const Vector& x0, DelayUncertainty uncertainty,
                              const DisturbanceModel& dist, const BaselineOptions& opts) {
  sys.validate();
  cons.validate(sys.nx(), sys.nu());
  require(horizon >= 1, ErrorCode::InvalidArgument, "nominal_mpc_baseline: horizon must be positive");
  const Index nx = sys.nx();
  const Index nu = sys.nu();
  const SymMatrix terminal = riccati_solution(sys.a, sys.b_u, q, r);
  const Matrix gain = lqr_gain(sys.a, sys.b_u, q, r);
  const Index n = horizon * nu;
  DisturbanceSource source(dist, opts.policy, opts.seed);

  SimTrace trace;
  std::vector<Vector> y_history;
  Vector x = x0;
  for (int t = 0; t < opts.steps; ++t) {
    if (!x.allFinite() || x.norm() > opts.divergence) {
      trace.diverged = true;
      break;
    }
    // Nominal predictions x_k = map[k] v + offset[k].
    ConicProblem prob(n);
    Matrix map = Matrix::Zero(nx, n);
    Vector offset = x;
    for (int k = 0; k < horizon; ++k) {
      Matrix v_sel = Matrix::Zero(nu, n);
      v_sel.middleCols(k * nu, nu).setIdentity();
      prob.hess += 2.0 * (map.transpose() * q.mat() * map + v_sel.transpose() * r.mat() * v_sel);
      prob.lin += 2.0 * map.transpose() * q.mat() * offset;
      const Matrix row_map = cons.h_mat.leftCols(nx) * map + cons.h_mat.rightCols(nu) * v_sel;
      const Vector row_const = cons.h_mat.leftCols(nx) * offset;
      for (Index i = 0; i < cons.rows(); ++i)
        if (!row_map.row(i).isZero()) prob.add_row(row_map.row(i).transpose(), cons.h_vec(i) - row_const(i));
      map = sys.a * map + sys.b_u * v_sel;
      offset = sys.a * offset;
    }
    prob.hess += 2.0 * map.transpose() * terminal.mat() * map;
    prob.lin += 2.0 * map.transpose() * terminal.mat() * offset;

    SimStep rec;
    rec.t = t;
    rec.x = x;
    try {
      const ConicSolution sol = solve_conic(prob);
      rec.u = sol.x.head(nu);
      rec.cost = sol.objective + offset.dot(terminal.mat() * offset);
      rec.status = SolveStatus::Optimal;
    } catch (const Error&) {
      rec.u = saturate(cons, nx, gain * x);
      rec.status = SolveStatus::Infeasible;
      trace.fallback_used = true;
    }
    rec.z0 = x;
    rec.v0 = rec.u;
    rec.z1 = sys.a * x + sys.b_u * rec.u;
    rec.d = source.next();
    rec.tau = uncertainty.next();
    const PlantStep ps = plant_step(sys, x, rec.u, rec.d, rec.tau, uncertainty.tau_max(), y_history);
    rec.w = ps.w;
    rec.y = ps.y;
    rec.max_violation = cons.residual(x, rec.u).maxCoeff();
    trace.steps.push_back(std::move(rec));
    x = ps.x_next;
  }
  if (!trace.diverged && (!x.allFinite() || x.norm() > opts.divergence)) trace.diverged = true;
  trace.x_final = x;
  return trace;
}

namespace {

void add_columns(std::vector<std::string>& cols, const std::string& base, Index n) {
  if (n == 1) {
    cols.push_back(base);
    return;
  }
  for (Index i = 0; i < n; ++i) cols.push_back(base + std::to_string(i + 1));
}

SolveStatus parse_status(const std::string& s) {
  if (s == "Optimal") return SolveStatus::Optimal;
  if (s == "FeasibleSuboptimal") return SolveStatus::FeasibleSuboptimal;
  if (s == "Infeasible") return SolveStatus::Infeasible;
  fail(ErrorCode::Parse, "import_trace: unknown status '" + s + "'");
}

// Counts columns named base or base1, base2, ...
Index count_columns(const std::vector<std::string>& header, const std::string& base) {
  Index n = 0;
  for (const auto& h : header) {
    if (h == base) return 1;
    if (h.size() > base.size() && h.compare(0, base.size(), base) == 0 &&
        h.find_first_not_of("0123456789", base.size()) == std::string::npos)
      ++n;
  }
  return n;
}

}  // namespace

std::vector<std::string> trace_header(Index nx, Index nu, Index nd, Index nw) {
  std::vector<std::string> cols{"t"};
  for (Index i = 0; i < nx; ++i) cols.push_back("x" + std::to_string(i + 1));
  add_columns(cols, "u", nu);
  add_columns(cols, "d", nd);
  cols.push_back("tau");
  add_columns(cols, "w", nw);
  cols.push_back("s0");
  for (Index i = 0; i < nx; ++i) cols.push_back("z0" + std::to_string(i + 1));
  add_columns(cols, "v0", nu);
  cols.push_back("status");
  cols.push_back("cost");
  return cols;
}

void export_trace(const SimTrace& trace, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::Io, "export_trace: cannot open " + path.string());
  Index nx = 2, nu = 1, nd = 1, nw = 1;
  if (!trace.steps.empty()) {
    const SimStep& s = trace.steps.front();
    nx = s.x.size();
    nu = s.u.size();
    nd = s.d.size();
    nw = s.w.size();
  }
  const auto header = trace_header(nx, nu, nd, nw);
  for (std::size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
  out << '\n' << std::setprecision(17);
  auto put = [&out](const Vector& v) {
    for (Index i = 0; i < v.size(); ++i) out << ',' << v(i);
  };
  for (const SimStep& s : trace.steps) {
    out << s.t;
    put(s.x);
    put(s.u);
    put(s.d);
    out << ',' << s.tau;
    put(s.w);
    out << ',' << s.s0;
    put(s.z0);
    put(s.v0);
    out << ',' << to_string(s.status) << ',' << s.cost << '\n';
  }
  if (!out) fail(ErrorCode::Io, "export_trace: write failed for " + path.string());
}

SimTrace import_trace(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::Io, "import_trace: cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) fail(ErrorCode::Parse, "import_trace: missing header");
  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) header.push_back(cell);
  }
  const Index nx = count_columns(header, "x");
  const Index nu = count_columns(header, "u");
  const Index nd = count_columns(header, "d");
  const Index nw = count_columns(header, "w");
  if (header != trace_header(nx, nu, nd, nw)) fail(ErrorCode::Parse, "import_trace: unexpected header");

  SimTrace trace;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) cells.push_back(cell);
    if (cells.size() != header.size())
      fail(ErrorCode::Parse, "import_trace: line " + std::to_string(line_no) + " has the wrong column count");
    std::size_t pos = 0;
    auto num = [&]() {
      const std::string& c = cells[pos++];
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(c, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != c.size())
        fail(ErrorCode::Parse, "import_trace: line " + std::to_string(line_no) + ": bad number '" + c + "'");
      return v;
    };
    auto vec = [&](Index n) {
      Vector v(n);
      for (Index i = 0; i < n; ++i) v(i) = num();
      return v;
    };
    SimStep s;
    s.t = static_cast<int>(num());
    s.x = vec(nx);
    s.u = vec(nu);
    s.d = vec(nd);
    s.tau = static_cast<int>(num());
    s.w = vec(nw);
    s.s0 = num();
    s.z0 = vec(nx);
    s.v0 = vec(nu);
    s.status = parse_status(cells[pos++]);
    s.cost = num();
    trace.steps.push_back(std::move(s));
  }
  return trace;
}

}  // namespace iqcmpc
