#pragma once

#include <dg/operators.hpp>

#include <functional>
#include <vector>

namespace dg
{

// Matrix-free operator action y = A x on plain coefficient vectors.
using ApplyFn =
  std::function<void(const std::vector<double> &, std::vector<double> &)>;

struct SolveReport
{
  bool converged = false;
  int iterations = 0;
  double relative_residual = 0.0;
};

// Conjugate gradients for symmetric positive definite A. Stops when
// ||b - A x|| <= rel_tol * ||b|| (or at once for b = 0).
SolveReport conjugate_gradient(const ApplyFn &A, const std::vector<double> &b,
                               std::vector<double> &x, double rel_tol = 1e-10,
                               int max_iterations = 10000);

// Restarted GMRES for general A, modified Gram-Schmidt, Givens rotations on
// the Hessenberg factor. Suitable for the non-symmetric upwind systems.
SolveReport gmres(const ApplyFn &A, const std::vector<double> &b,
                  std::vector<double> &x, double rel_tol = 1e-10,
                  int max_iterations = 10000, int restart = 30);

// Adapts a single-rank operator to plain vectors over its owned dofs. Each
// call resets the input vector state, so repeated applies are allowed.
ApplyFn make_apply(RankOperator &op);

} // namespace dg
