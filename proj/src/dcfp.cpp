#include <Eigen/Sparse>
#include <Eigen/IterativeLinearSolvers>
#include <Eigen/SparseLU>

#include <cmath>
#include <map>
#include <string>

#include "disteval/bellman.hpp"

namespace disteval {

DCFPResult dcfp_solve(const TabularMDP& mdp, const Policy& policy, const SupportGrid& grid,
                      std::size_t max_dimension) {
  if (!(grid.gamma() == mdp.gamma())) throw BellmanError("dcfp_solve: grid discount differs from the MDP discount");
  const int n_states = mdp.n_states();
  const int K = grid.K();
  const std::size_t full_dimension = static_cast<std::size_t>(n_states) * grid.size();
  if (full_dimension > max_dimension) {
    throw BellmanError("dcfp_solve: system dimension " + std::to_string(full_dimension) + " exceeds cap " +
                       std::to_string(max_dimension));
  }
  const BellmanOperator op(mdp, policy);
  std::map<double, GridShift> shifts;
  for (double r : op.reward_values()) shifts.emplace(r, GridShift(grid, r));

  // Unknowns p(s, k) for k = 0..K. Rows k < K are the fixed-point
  // equations p = A p; row K of every state is replaced by its unit-mass
  // constraint, which makes the system nonsingular and implies the dropped
  // equation.
  const auto width = static_cast<Eigen::Index>(grid.size());
  const auto index = [width](int s, std::size_t k) { return static_cast<Eigen::Index>(s) * width + static_cast<Eigen::Index>(k); };
  const Eigen::Index n = static_cast<Eigen::Index>(n_states) * width;
  std::vector<Eigen::Triplet<double>> entries;
  Vector rhs = Vector::Zero(n);
  for (int s = 0; s < n_states; ++s) {
    for (int k = 0; k < K; ++k) entries.emplace_back(index(s, k), index(s, k), 1.0);
    for (int k = 0; k <= K; ++k) entries.emplace_back(index(s, K), index(s, k), 1.0);
    rhs(index(s, K)) = 1.0;
  }
  for (int s = 0; s < n_states; ++s) {
    for (const auto& b : op.branches(s)) {
      const auto& shift = shifts.at(b.reward);
      for (std::size_t j = 0; j < grid.size(); ++j) {
        const auto k = shift.lower(j);
        const double f = shift.upper_share(j);
        if (k < static_cast<std::size_t>(K)) entries.emplace_back(index(s, k), index(b.s_next, j), -b.prob * (1.0 - f));
        if (f != 0.0 && k + 1 < static_cast<std::size_t>(K)) {
          entries.emplace_back(index(s, k + 1), index(b.s_next, j), -b.prob * f);
        }
      }
    }
  }
  Eigen::SparseMatrix<double> system(n, n);
  system.setFromTriplets(entries.begin(), entries.end());
  system.makeCompressed();

  // Krylov solve; the system is a well-conditioned perturbation of the
  // identity. Sparse LU is the fallback, and is much slower at K = 512.
  Vector q;
  {
    Eigen::BiCGSTAB<Eigen::SparseMatrix<double>> krylov;
    krylov.setTolerance(1e-15);
    krylov.setMaxIterations(5000);
    krylov.compute(system);
    q = krylov.solve(rhs);
    if (krylov.info() != Eigen::Success || !q.allFinite() || (system * q - rhs).cwiseAbs().maxCoeff() > 1e-13) {
      Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
      lu.compute(system);
      if (lu.info() != Eigen::Success) throw BellmanError("dcfp_solve: factorization failed: " + lu.lastErrorMessage());
      q = lu.solve(rhs);
      if (lu.info() != Eigen::Success || !q.allFinite()) throw BellmanError("dcfp_solve: solve failed");
    }
  }

  DCFPResult result{ReturnModel::constant(n_states, CategoricalDist::dirac(grid, 0)), 0.0, 0.0};
  // Residual of the full fixed-point equation p = A p, including the rows
  // that were traded for the mass constraints.
  result.residual = (system * q - rhs).cwiseAbs().maxCoeff();
  for (int s = 0; s < n_states; ++s) {
    std::vector<double> image(grid.size(), 0.0);
    for (const auto& b : op.branches(s)) {
      shifts.at(b.reward).accumulate(std::span<const double>(q.data() + index(b.s_next, 0), grid.size()), b.prob, image);
    }
    for (std::size_t k = 0; k < grid.size(); ++k) {
      result.residual = std::max(result.residual, std::abs(q(index(s, k)) - image[k]));
    }
  }
  if (result.residual > 1e-10) {
    throw BellmanError("dcfp_solve: residual " + std::to_string(result.residual) + " above 1e-10");
  }

  std::vector<Distribution> dists;
  for (int s = 0; s < n_states; ++s) {
    std::vector<double> probs(q.data() + index(s, 0), q.data() + index(s, 0) + width);
    double total = 0.0;
    for (double& p : probs) {
      if (p < -1e-9) {
        throw BellmanError("dcfp_solve: probability " + std::to_string(p) + " at state " + std::to_string(s) +
                           " is too negative to be rounding error");
      }
      if (p < 0.0) {
        result.clipped_mass += -p;
        p = 0.0;
      }
      total += p;
    }
    for (double& p : probs) p /= total;
    dists.emplace_back(CategoricalDist(grid, std::move(probs)));
  }
  result.model = ReturnModel(std::move(dists));
  return result;
}

}  // namespace disteval
