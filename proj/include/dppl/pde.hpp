#pragma once

// Exact solutions of the four benchmark conservation-law problems and
// deterministic dataset generation on regular (t, x) grids.
//
// All four families live on t in [0,1]; heat uses x in [0, 2pi], the others
// x in [0,1]. Fields are stored flattened row-major by time slice: entry
// (it, ix) sits at index it*nx + ix.

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "dppl/rng.hpp"

namespace dppl {

using Eigen::Index;
using Eigen::VectorXd;

enum class PdeKind { heat, pme, stefan, advection };

inline std::string to_string(PdeKind k) {
  switch (k) {
    case PdeKind::heat: return "heat";
    case PdeKind::pme: return "pme";
    case PdeKind::stefan: return "stefan";
    case PdeKind::advection: return "advection";
  }
  throw std::invalid_argument("unknown PdeKind");
}

inline PdeKind parse_pde_kind(const std::string& s) {
  if (s == "heat") return PdeKind::heat;
  if (s == "pme") return PdeKind::pme;
  if (s == "stefan") return PdeKind::stefan;
  if (s == "advection") return PdeKind::advection;
  throw std::invalid_argument("unknown PDE kind: " + s);
}

// u = exp(-k t) sin(x), periodic on [0, 2pi].
inline double exact_heat(double t, double x, double k) {
  if (k <= 0) throw std::invalid_argument("exact_heat: k must be positive");
  if (t < 0 || t > 1 || x < 0 || x > 6.283185307179586476925286766559 + 1e-12)
    throw std::invalid_argument("exact_heat: (t, x) outside [0,1] x [0,2pi]");
  return std::exp(-k * t) * std::sin(x);
}

// u = (m ReLU(t - x))^{1/m}; zero for x >= t, sharp front at x = t.
inline double exact_pme(double t, double x, double m) {
  if (m <= 0) throw std::invalid_argument("exact_pme: m must be positive");
  const double s = t - x;
  return s > 0 ? std::pow(m * s, 1.0 / m) : 0.0;
}

/// Root of the Stefan front equation (1-u*)/sqrt(pi) = u* erf(a) a exp(a^2).
struct StefanAlpha {
  double alpha_tilde = 0.0;
  double alpha = 0.0;  // 2 * alpha_tilde
  double residual = 0.0;
};

inline StefanAlpha solve_stefan_alpha(double u_star) {
  if (!(u_star > 0.0 && u_star < 1.0))
    throw std::invalid_argument("solve_stefan_alpha: u* must lie in (0,1)");
  const double lhs = (1.0 - u_star) / std::sqrt(3.14159265358979323846);
  auto f = [&](double a) { return u_star * std::erf(a) * a * std::exp(a * a) - lhs; };

  // f is increasing in a; bracket then bisect, then polish with secant steps.
  double lo = 1e-8, hi = 4.0;
  if (f(lo) > 0 || f(hi) < 0)
    throw std::runtime_error("solve_stefan_alpha: bracket failure");
  for (int i = 0; i < 80; ++i) {
    const double mid = 0.5 * (lo + hi);
    (f(mid) > 0 ? hi : lo) = mid;
  }
  double a = 0.5 * (lo + hi), b = hi;
  double fa = f(a), fb = f(b);
  for (int i = 0; i < 60 && std::abs(fa) > 1e-15; ++i) {
    if (fb == fa) break;
    const double c = a - fa * (b - a) / (fb - fa);
    b = a; fb = fa;
    a = c; fa = f(a);
  }
  StefanAlpha out;
  out.alpha_tilde = a;
  out.alpha = 2.0 * a;
  out.residual = std::abs(fa);
  if (out.residual > 1e-12)
    throw std::runtime_error("solve_stefan_alpha: residual above 1e-12");
  return out;
}

// Rightward-moving phase front; t = 0 returns the initial condition directly
// (the erf profile is singular there).
inline double exact_stefan(double t, double x, double u_star, const StefanAlpha& alpha) {
  if (t <= 0) return x == 0.0 ? 1.0 : 0.0;
  const double v =
      1.0 - (1.0 - u_star) / std::erf(alpha.alpha_tilde) * std::erf(x / (2.0 * std::sqrt(t)));
  return v >= u_star ? v : 0.0;
}

inline double exact_stefan(double t, double x, double u_star) {
  return exact_stefan(t, x, u_star, solve_stefan_alpha(u_star));
}

// Step initial condition transported at speed beta: u = 1_{x <= 0.5 + beta t}.
inline double exact_advection(double t, double x, double beta) {
  if (beta <= 0) throw std::invalid_argument("exact_advection: beta must be positive");
  return x <= 0.5 + beta * t ? 1.0 : 0.0;
}

inline std::pair<double, double> default_param_range(PdeKind kind) {
  switch (kind) {
    case PdeKind::heat: return {1.0, 5.0};
    case PdeKind::pme: return {2.0, 3.0};
    case PdeKind::stefan: return {0.6, 0.65};
    case PdeKind::advection: return {1.0, 2.0};
  }
  throw std::invalid_argument("unknown PdeKind");
}

inline double spatial_domain_end(PdeKind kind) {
  return kind == PdeKind::heat ? 6.283185307179586476925286766559 : 1.0;
}

/// Parameter/solution pairs on a shared uniform grid with a fixed
/// train/test split.
struct PdeDataset {
  PdeKind kind = PdeKind::heat;
  VectorXd params;              // one scalar parameter per sample
  double param_lo = 0.0, param_hi = 0.0;
  VectorXd x_grid, t_grid;
  std::vector<VectorXd> fields;  // nt*nx each, time-major
  std::vector<int> train_idx, test_idx;
  std::uint64_t seed = 0;
  std::string prng = kPrngName;

  Index nt() const { return t_grid.size(); }
  Index nx() const { return x_grid.size(); }
  Index n_samples() const { return params.size(); }
};

inline VectorXd uniform_grid(double lo, double hi, Index n) {
  return VectorXd::LinSpaced(n, lo, hi);
}

inline VectorXd exact_field(PdeKind kind, double param, const VectorXd& x_grid,
                            const VectorXd& t_grid) {
  const Index nt = t_grid.size(), nx = x_grid.size();
  VectorXd u(nt * nx);
  StefanAlpha alpha;
  if (kind == PdeKind::stefan) alpha = solve_stefan_alpha(param);
  for (Index it = 0; it < nt; ++it) {
    for (Index ix = 0; ix < nx; ++ix) {
      double v = 0.0;
      switch (kind) {
        case PdeKind::heat: v = exact_heat(t_grid[it], x_grid[ix], param); break;
        case PdeKind::pme: v = exact_pme(t_grid[it], x_grid[ix], param); break;
        case PdeKind::stefan: v = exact_stefan(t_grid[it], x_grid[ix], param, alpha); break;
        case PdeKind::advection: v = exact_advection(t_grid[it], x_grid[ix], param); break;
      }
      u[it * nx + ix] = v;
    }
  }
  return u;
}

// Parameters are sampled uniformly from per-sample streams derived by
// seed-splitting, so generation order (or parallel generation) cannot change
// the result.
inline PdeDataset gen_dataset(PdeKind kind, Index n_samples, double param_lo, double param_hi,
                              Index nt, Index nx, double split, std::uint64_t seed) {
  if (n_samples < 1) throw std::invalid_argument("gen_dataset: n_samples < 1");
  if (nt < 2 || nx < 3) throw std::invalid_argument("gen_dataset: grid too small");
  if (!(split > 0.0 && split <= 1.0)) throw std::invalid_argument("gen_dataset: bad split");
  if (!(param_lo < param_hi)) throw std::invalid_argument("gen_dataset: empty parameter range");
  const auto [dlo, dhi] = default_param_range(kind);
  const bool range_ok = [&] {
    switch (kind) {
      case PdeKind::heat: return param_lo > 0;
      case PdeKind::pme: return param_lo > 0;
      case PdeKind::stefan: return param_lo > 0 && param_hi < 1;
      case PdeKind::advection: return param_lo > 0;
    }
    return false;
  }();
  (void)dlo; (void)dhi;
  if (!range_ok) throw std::invalid_argument("gen_dataset: invalid range for kind");

  PdeDataset ds;
  ds.kind = kind;
  ds.seed = seed;
  ds.param_lo = param_lo;
  ds.param_hi = param_hi;
  ds.x_grid = uniform_grid(0.0, spatial_domain_end(kind), nx);
  ds.t_grid = uniform_grid(0.0, 1.0, nt);
  ds.params.resize(n_samples);
  ds.fields.reserve(n_samples);
  for (Index i = 0; i < n_samples; ++i) {
    Rng stream(derive_stream_seed(seed, static_cast<std::uint64_t>(i)));
    ds.params[i] = stream.uniform(param_lo, param_hi);
    ds.fields.push_back(exact_field(kind, ds.params[i], ds.x_grid, ds.t_grid));
  }
  const Index n_train = static_cast<Index>(std::lround(split * static_cast<double>(n_samples)));
  for (Index i = 0; i < n_samples; ++i)
    (i < n_train ? ds.train_idx : ds.test_idx).push_back(static_cast<int>(i));
  return ds;
}

inline PdeDataset gen_dataset(PdeKind kind, Index n_samples = 200, Index nt = 64, Index nx = 64,
                              double split = 0.8, std::uint64_t seed = 1) {
  const auto [lo, hi] = default_param_range(kind);
  return gen_dataset(kind, n_samples, lo, hi, nt, nx, split, seed);
}

/// Indices of the final `frac` share of time slices (the evaluation window).
inline std::vector<Index> eval_window_indices(Index nt, double frac = 0.2) {
  Index count = static_cast<Index>(std::lround(frac * static_cast<double>(nt)));
  count = std::max<Index>(1, std::min(count, nt));
  std::vector<Index> idx(count);
  for (Index i = 0; i < count; ++i) idx[i] = nt - count + i;
  return idx;
}

/// Rows of `field` (time-major nt*nx) restricted to the given slices,
/// re-flattened in slice order.
inline VectorXd restrict_to_slices(const VectorXd& field, Index nx,
                                   const std::vector<Index>& slices) {
  VectorXd out(static_cast<Index>(slices.size()) * nx);
  for (std::size_t s = 0; s < slices.size(); ++s)
    out.segment(static_cast<Index>(s) * nx, nx) = field.segment(slices[s] * nx, nx);
  return out;
}

}  // namespace dppl
