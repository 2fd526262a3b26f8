#pragma once

// Reference computations that share no code with the library: a brute-force
// transportation LP and a dense-grid CDF integral.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "disteval/measures.hpp"

namespace oracle {

/// min over couplings of sum pi_ij |x_i - y_j|^p, by enumerating the basic
/// solutions of the transportation polytope (every (m + n - 1)-subset of
/// cells). Exponential; meant for a handful of atoms.
inline double coupling_cost(const std::vector<disteval::Atom>& a, const std::vector<disteval::Atom>& b, double p) {
  const int m = static_cast<int>(a.size());
  const int n = static_cast<int>(b.size());
  const int cells = m * n;
  const int basis = m + n - 1;
  Eigen::MatrixXd constraints = Eigen::MatrixXd::Zero(m + n, cells);
  Eigen::VectorXd rhs(m + n);
  for (int i = 0; i < m; ++i) rhs[i] = a[i].w;
  for (int j = 0; j < n; ++j) rhs[m + j] = b[j].w;
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      constraints(i, i * n + j) = 1.0;
      constraints(m + j, i * n + j) = 1.0;
    }
  }
  double best = std::numeric_limits<double>::infinity();
  std::vector<bool> pick(cells, false);
  std::fill(pick.begin(), pick.begin() + basis, true);
  do {
    Eigen::MatrixXd sub(m + n, basis);
    std::vector<int> idx;
    for (int c = 0; c < cells; ++c) {
      if (pick[c]) {
        sub.col(static_cast<Eigen::Index>(idx.size())) = constraints.col(c);
        idx.push_back(c);
      }
    }
    const auto qr = sub.colPivHouseholderQr();
    if (qr.rank() < basis) continue;
    const Eigen::VectorXd flow = qr.solve(rhs);
    if ((sub * flow - rhs).cwiseAbs().maxCoeff() > 1e-12 || flow.minCoeff() < -1e-12) continue;
    double cost = 0.0;
    for (int k = 0; k < basis; ++k) {
      const int i = idx[k] / n;
      const int j = idx[k] % n;
      cost += flow[k] * std::pow(std::abs(a[i].x - b[j].x), p);
    }
    best = std::min(best, cost);
  } while (std::prev_permutation(pick.begin(), pick.end()));
  return best;
}

inline double step_cdf(const std::vector<disteval::Atom>& atoms, double x) {
  double total = 0.0;
  for (const auto& at : atoms) {
    if (at.x < x) total += at.w;
  }
  return total;
}

/// sqrt of the midpoint rule for int (F_a - F_b)^2 on [lo, hi] with n cells.
inline double dense_cramer(const std::vector<disteval::Atom>& a, const std::vector<disteval::Atom>& b, double lo,
                           double hi, long n) {
  const double h = (hi - lo) / static_cast<double>(n);
  double total = 0.0;
  for (long i = 0; i < n; ++i) {
    const double x = lo + (static_cast<double>(i) + 0.5) * h;
    const double d = step_cdf(a, x) - step_cdf(b, x);
    total += d * d * h;
  }
  return std::sqrt(total);
}

/// Hat-function weight of atom x on grid point k, written out from the
/// definition rather than from the lower-index formula.
inline double hat_weight(double x, int k, double gap, int K) {
  const double xk = k * gap;
  if (k == 0 && x <= 0.0) return 1.0;
  if (k == K && x >= K * gap) return 1.0;
  return std::max(0.0, 1.0 - std::abs(x - xk) / gap);
}

}  // namespace oracle
