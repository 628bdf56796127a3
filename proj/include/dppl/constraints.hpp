#pragma once

// Constraint specifications and builders: hierarchical coherency, PDE
// conservation laws (linear and nonlinear), box bounds, and the total
// variation relaxation used as a convex penalty.

#include <Eigen/Dense>
#include <atomic>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <limits>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "dppl/pde.hpp"

namespace dppl {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Equality constraint A u = b with A full row rank (q <= n).
struct LinearEquality {
  MatrixXd A;
  VectorXd b;

  LinearEquality(MatrixXd A_in, VectorXd b_in) : A(std::move(A_in)), b(std::move(b_in)) {
    if (A.rows() < 1 || A.rows() > A.cols())
      throw std::invalid_argument("LinearEquality: need 1 <= q <= n");
    if (b.size() != A.rows())
      throw std::invalid_argument("LinearEquality: rhs length mismatch");
    Eigen::ColPivHouseholderQR<MatrixXd> qr(A.transpose());
    qr.setThreshold(1e-10);
    if (qr.rank() < A.rows())
      throw std::invalid_argument("LinearEquality: A is rank deficient (rank " +
                                  std::to_string(qr.rank()) + " < " +
                                  std::to_string(A.rows()) + ")");
  }

  Index q() const { return A.rows(); }
  Index n() const { return A.cols(); }

  /// Same constraint matrix with a new right-hand side.
  LinearEquality with_rhs(VectorXd new_b) const {
    if (new_b.size() != A.rows())
      throw std::invalid_argument("LinearEquality: rhs length mismatch");
    LinearEquality out(*this);
    out.b = std::move(new_b);
    return out;
  }

  VectorXd residual(const VectorXd& u) const { return A * u - b; }
};

/// Equality constraint h(u) = 0 with evaluators for h and its Jacobian
/// J = grad h(u)^T (q x n).
struct NonlinearEquality {
  Index q = 0;
  Index n = 0;
  std::function<VectorXd(const VectorXd&)> h;
  std::function<MatrixXd(const VectorXd&)> jac_h;
  // Builders may attach a counter for degeneracy handling events (e.g. the
  // clamp of negative iterates before a fractional power).
  std::shared_ptr<std::atomic<std::int64_t>> diagnostics;

  // Self-test hook: Jacobian versus central finite differences at `probe`.
  bool check_jacobian(const VectorXd& probe, double rel_tol = 1e-5,
                      double step = 1e-6) const {
    const MatrixXd J = jac_h(probe);
    MatrixXd J_fd(q, n);
    VectorXd u = probe;
    for (Index k = 0; k < n; ++k) {
      const double h_k = step * (1.0 + std::abs(probe[k]));
      u[k] = probe[k] + h_k;
      const VectorXd hp = h(u);
      u[k] = probe[k] - h_k;
      const VectorXd hm = h(u);
      u[k] = probe[k];
      J_fd.col(k) = (hp - hm) / (2.0 * h_k);
    }
    const double scale = std::max(J.cwiseAbs().maxCoeff(), 1.0);
    return (J - J_fd).cwiseAbs().maxCoeff() <= rel_tol * scale;
  }
};

/// Per-coordinate bounds, -inf/+inf allowed.
struct BoxBounds {
  VectorXd lo, hi;

  BoxBounds(VectorXd lo_in, VectorXd hi_in) : lo(std::move(lo_in)), hi(std::move(hi_in)) {
    if (lo.size() != hi.size()) throw std::invalid_argument("BoxBounds: length mismatch");
    if ((lo.array() > hi.array()).any())
      throw std::invalid_argument("BoxBounds: lo > hi");
  }
};

/// Total variation penalty weight for an nt x nx grid field.
struct TVPenalty {
  double weight = 0.0;
  Index nt = 0, nx = 0;

  TVPenalty(double w, Index nt_in, Index nx_in) : weight(w), nt(nt_in), nx(nx_in) {
    if (weight < 0) throw std::invalid_argument("TVPenalty: negative weight");
    if (nt < 1 || nx < 1) throw std::invalid_argument("TVPenalty: bad grid dims");
  }
};

/// Coherency constraint [I_q  -S] u = 0 for a 0/1 summation matrix S mapping
/// bottom series to aggregates; u stacks (aggregates, bottom).
inline LinearEquality hierarchy_constraint(const MatrixXd& s_sum) {
  const Index q = s_sum.rows(), p = s_sum.cols();
  if (q < 1 || p < 1) throw std::invalid_argument("hierarchy_constraint: empty matrix");
  for (Index i = 0; i < q; ++i) {
    bool any = false;
    for (Index j = 0; j < p; ++j) {
      const double v = s_sum(i, j);
      if (v != 0.0 && v != 1.0)
        throw std::invalid_argument("hierarchy_constraint: entries must be 0 or 1");
      any = any || v == 1.0;
    }
    if (!any)
      throw std::invalid_argument("hierarchy_constraint: all-zero row " + std::to_string(i));
  }
  MatrixXd A(q, q + p);
  A << MatrixXd::Identity(q, q), -s_sum;
  return LinearEquality(std::move(A), VectorXd::Zero(q));
}

/// Composite trapezoid weights: sum_i w_i f(x_i) integrates f over
/// [x_0, x_{m-1}].
inline VectorXd trapezoid_weights(const VectorXd& x) {
  const Index m = x.size();
  if (m < 2) throw std::invalid_argument("trapezoid_weights: need at least 2 points");
  for (Index i = 1; i < m; ++i)
    if (!(x[i] > x[i - 1]))
      throw std::invalid_argument("trapezoid_weights: grid not strictly increasing");
  VectorXd w = VectorXd::Zero(m);
  w[0] = 0.5 * (x[1] - x[0]);
  w[m - 1] = 0.5 * (x[m - 1] - x[m - 2]);
  for (Index i = 1; i + 1 < m; ++i) w[i] = 0.5 * (x[i + 1] - x[i - 1]);
  return w;
}

// Exact total mass of each family at time t (the conservation right-hand
// side).
inline double conservation_rhs(PdeKind kind, double param, double t) {
  switch (kind) {
    case PdeKind::heat:
      return 0.0;
    case PdeKind::pme:
      return std::pow(param * t, 1.0 + 1.0 / param) / (param + 1.0);
    case PdeKind::stefan: {
      const StefanAlpha a = solve_stefan_alpha(param);
      return 2.0 * (1.0 - param) / std::erf(a.alpha_tilde) *
             std::sqrt(t / 3.14159265358979323846);
    }
    case PdeKind::advection:
      return 0.5 + param * t;
  }
  throw std::invalid_argument("unknown PdeKind");
}

// Global mass constraints, one row per requested time slice. The constrained
// vector stacks the requested slices (len(t_slices) x nx, slice-major), so
// row supports are disjoint and A has full row rank.
inline LinearEquality conservation_linear(PdeKind kind, double param, const VectorXd& x_grid,
                                          const VectorXd& t_slices) {
  const Index q = t_slices.size(), nx = x_grid.size();
  if (q < 1) throw std::invalid_argument("conservation_linear: no slices");
  switch (kind) {
    case PdeKind::heat:
    case PdeKind::pme:
    case PdeKind::advection:
      if (param <= 0) throw std::invalid_argument("conservation_linear: parameter must be > 0");
      break;
    case PdeKind::stefan:
      if (!(param > 0 && param < 1))
        throw std::invalid_argument("conservation_linear: u* must lie in (0,1)");
      break;
  }
  const VectorXd w = trapezoid_weights(x_grid);
  MatrixXd A = MatrixXd::Zero(q, q * nx);
  VectorXd b(q);
  for (Index s = 0; s < q; ++s) {
    const double t = t_slices[s];
    if (t < 0.0 || t > 1.0)
      throw std::invalid_argument("conservation_linear: slice time outside [0,1]");
    A.block(s, s * nx, 1, nx) = w.transpose();
    b[s] = conservation_rhs(kind, param, t);
  }
  return LinearEquality(std::move(A), std::move(b));
}

namespace detail {

// One-sided second-order boundary derivatives on a uniform grid, matching the
// trapezoid rule's order.
struct BoundaryDiff {
  double h;
  double left(const Eigen::Ref<const VectorXd>& row) const {
    return (-3.0 * row[0] + 4.0 * row[1] - row[2]) / (2.0 * h);
  }
  double right(const Eigen::Ref<const VectorXd>& row) const {
    const Index n = row.size();
    return (3.0 * row[n - 1] - 4.0 * row[n - 2] + row[n - 3]) / (2.0 * h);
  }
};

inline void require_uniform(const VectorXd& g, const char* what) {
  const double h = g[1] - g[0];
  for (Index i = 1; i < g.size(); ++i)
    if (std::abs((g[i] - g[i - 1]) - h) > 1e-9 * std::max(h, 1.0))
      throw std::invalid_argument(std::string(what) + ": grid must be uniform");
}

}  // namespace detail

// General-form PME mass law on a full nt x nx field: for each requested
// slice index s,
//   h_s(u) = mass(t_s) - int_0^{t_s} [ u^m du/dx |_{x=end} - u^m du/dx |_{x=0} ] dt,
// both integrals by the trapezoid rule, boundary derivatives by one-sided
// 3-point differences. The flux difference is oriented as the net influx, so
// h vanishes on solutions of the PDE. Negative field values are clamped to 0
// before the power (counted in `diagnostics`); the clamped branch carries a
// zero derivative.
inline NonlinearEquality conservation_nonlinear_pme(double m, const VectorXd& x_grid,
                                                    const VectorXd& t_grid,
                                                    const std::vector<Index>& t_slices) {
  if (m <= 0) throw std::invalid_argument("conservation_nonlinear_pme: m must be positive");
  const Index nx = x_grid.size(), nt = t_grid.size();
  if (nx < 3) throw std::invalid_argument("conservation_nonlinear_pme: need nx >= 3");
  if (t_slices.empty()) throw std::invalid_argument("conservation_nonlinear_pme: no slices");
  for (Index s : t_slices)
    if (s < 0 || s >= nt)
      throw std::invalid_argument("conservation_nonlinear_pme: slice index out of range");
  detail::require_uniform(x_grid, "conservation_nonlinear_pme(x)");
  detail::require_uniform(t_grid, "conservation_nonlinear_pme(t)");

  auto clamp_count = std::make_shared<std::atomic<std::int64_t>>(0);
  const VectorXd wx = trapezoid_weights(x_grid);
  const detail::BoundaryDiff diff{x_grid[1] - x_grid[0]};
  auto slices = t_slices;

  auto power = [m, clamp_count](double u) {
    if (u < 0.0) {
      clamp_count->fetch_add(1, std::memory_order_relaxed);
      u = 0.0;
    }
    return std::pow(u, m);
  };
  auto dpower = [m](double u) { return u > 0.0 ? m * std::pow(u, m - 1.0) : 0.0; };

  NonlinearEquality nl;
  nl.q = static_cast<Index>(slices.size());
  nl.n = nt * nx;
  nl.diagnostics = clamp_count;

  nl.h = [=](const VectorXd& u) -> VectorXd {
    if (u.size() != nt * nx)
      throw std::invalid_argument("conservation_nonlinear_pme: field size mismatch");
    VectorXd out(static_cast<Index>(slices.size()));
    for (std::size_t si = 0; si < slices.size(); ++si) {
      const Index s = slices[si];
      const auto row = [&](Index it) { return u.segment(it * nx, nx); };
      const double mass = wx.dot(row(s));
      double flux = 0.0;
      if (s >= 1) {
        const VectorXd wt = trapezoid_weights(t_grid.head(s + 1));
        for (Index it = 0; it <= s; ++it) {
          const auto r = row(it);
          const double g = power(r[nx - 1]) * diff.right(r) - power(r[0]) * diff.left(r);
          flux += wt[it] * g;
        }
      }
      out[static_cast<Index>(si)] = mass - flux;
    }
    return out;
  };

  nl.jac_h = [=](const VectorXd& u) -> MatrixXd {
    if (u.size() != nt * nx)
      throw std::invalid_argument("conservation_nonlinear_pme: field size mismatch");
    MatrixXd J = MatrixXd::Zero(static_cast<Index>(slices.size()), nt * nx);
    const double h = x_grid[1] - x_grid[0];
    for (std::size_t si = 0; si < slices.size(); ++si) {
      const Index s = slices[si];
      const Index r = static_cast<Index>(si);
      J.block(r, s * nx, 1, nx) = wx.transpose();
      if (s < 1) continue;
      const VectorXd wt = trapezoid_weights(t_grid.head(s + 1));
      for (Index it = 0; it <= s; ++it) {
        const auto row = u.segment(it * nx, nx);
        const double uL = row[0], uR = row[nx - 1];
        const double dL = diff.left(row), dR = diff.right(row);
        const Index base = it * nx;
        // d/du of  u_R^m dR - u_L^m dL  (flux orientated as net influx).
        J(r, base + nx - 1) -= wt[it] * (dpower(uR) * dR + power(uR) * 3.0 / (2.0 * h));
        J(r, base + nx - 2) -= wt[it] * power(uR) * (-4.0 / (2.0 * h));
        J(r, base + nx - 3) -= wt[it] * power(uR) * (1.0 / (2.0 * h));
        J(r, base + 0) += wt[it] * (dpower(uL) * dL + power(uL) * (-3.0 / (2.0 * h)));
        J(r, base + 1) += wt[it] * power(uL) * (4.0 / (2.0 * h));
        J(r, base + 2) += wt[it] * power(uL) * (-1.0 / (2.0 * h));
      }
    }
    return J;
  };
  return nl;
}

/// Discrete total variation summed over all time slices.
inline double tv_value(const VectorXd& u, Index nt, Index nx) {
  if (u.size() != nt * nx) throw std::invalid_argument("tv_value: grid shape mismatch");
  double total = 0.0;
  for (Index it = 0; it < nt; ++it)
    for (Index ix = 0; ix + 1 < nx; ++ix)
      total += std::abs(u[it * nx + ix + 1] - u[it * nx + ix]);
  return total;
}

/// Entrywise subgradient of tv_value; sign(0) taken as 0 at ties.
inline VectorXd tv_subgradient(const VectorXd& u, Index nt, Index nx) {
  if (u.size() != nt * nx) throw std::invalid_argument("tv_subgradient: grid shape mismatch");
  VectorXd g = VectorXd::Zero(u.size());
  for (Index it = 0; it < nt; ++it) {
    for (Index ix = 0; ix + 1 < nx; ++ix) {
      const double d = u[it * nx + ix + 1] - u[it * nx + ix];
      const double s = d > 0 ? 1.0 : (d < 0 ? -1.0 : 0.0);
      g[it * nx + ix + 1] += s;
      g[it * nx + ix] -= s;
    }
  }
  return g;
}

/// Reads a 0/1 summation matrix from CSV (optional header row).
inline MatrixXd load_summation_matrix(const std::string& path, bool has_header = false) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_summation_matrix: cannot open " + path);
  std::vector<std::vector<double>> rows;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (first && has_header) {
      first = false;
      continue;
    }
    first = false;
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      std::size_t pos = 0;
      double v = 0.0;
      try {
        v = std::stod(cell, &pos);
      } catch (const std::exception&) {
        throw std::invalid_argument("load_summation_matrix: bad cell '" + cell + "'");
      }
      while (pos < cell.size() && std::isspace(static_cast<unsigned char>(cell[pos]))) ++pos;
      if (pos != cell.size())
        throw std::invalid_argument("load_summation_matrix: bad cell '" + cell + "'");
      if (v != 0.0 && v != 1.0)
        throw std::invalid_argument("load_summation_matrix: non-binary entry '" + cell + "'");
      row.push_back(v);
    }
    if (!rows.empty() && row.size() != rows.front().size())
      throw std::invalid_argument("load_summation_matrix: ragged rows");
    rows.push_back(std::move(row));
  }
  if (rows.empty() || rows.front().empty())
    throw std::invalid_argument("load_summation_matrix: empty matrix");
  MatrixXd s(static_cast<Index>(rows.size()), static_cast<Index>(rows.front().size()));
  for (Index i = 0; i < s.rows(); ++i)
    for (Index j = 0; j < s.cols(); ++j)
      s(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
  return s;
}

}  // namespace dppl
