#include <dg/solvers.hpp>

#include <cmath>
#include <stdexcept>

namespace dg
{

namespace
{

double dot(const std::vector<double> &a, const std::vector<double> &b)
{
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i)
    s += a[i] * b[i];
  return s;
}

double norm(const std::vector<double> &a) { return std::sqrt(dot(a, a)); }

} // namespace

SolveReport conjugate_gradient(const ApplyFn &A, const std::vector<double> &b,
                               std::vector<double> &x, double rel_tol,
                               int max_iterations)
{
  const std::size_t n = b.size();
  x.assign(n, 0.0);
  SolveReport report;

  const double norm_b = norm(b);
  if (norm_b == 0.0)
    {
      report.converged = true;
      return report;
    }

  std::vector<double> r = b, p = b, Ap(n);
  double rr = dot(r, r);
  for (int it = 0; it < max_iterations; ++it)
    {
      A(p, Ap);
      const double pAp = dot(p, Ap);
      if (pAp <= 0.0)
        throw std::runtime_error(
          "conjugate_gradient: operator is not positive definite");
      const double alpha = rr / pAp;
      for (std::size_t i = 0; i < n; ++i)
        {
          x[i] += alpha * p[i];
          r[i] -= alpha * Ap[i];
        }
      const double rr_new = dot(r, r);
      report.iterations = it + 1;
      report.relative_residual = std::sqrt(rr_new) / norm_b;
      if (report.relative_residual <= rel_tol)
        {
          report.converged = true;
          return report;
        }
      const double beta = rr_new / rr;
      rr = rr_new;
      for (std::size_t i = 0; i < n; ++i)
        p[i] = r[i] + beta * p[i];
    }
  return report;
}

SolveReport gmres(const ApplyFn &A, const std::vector<double> &b,
                  std::vector<double> &x, double rel_tol, int max_iterations,
                  int restart)
{
  const std::size_t n = b.size();
  x.assign(n, 0.0);
  SolveReport report;

  const double norm_b = norm(b);
  if (norm_b == 0.0)
    {
      report.converged = true;
      return report;
    }

  const int m = restart;
  std::vector<std::vector<double>> V(m + 1, std::vector<double>(n));
  // Column-major upper Hessenberg, (m+1) x m, plus the Givens data.
  std::vector<double> H((m + 1) * m, 0.0), cs(m), sn(m), g(m + 1);
  std::vector<double> w(n);

  int total_it = 0;
  while (total_it < max_iterations)
    {
      // r = b - A x
      A(x, w);
      for (std::size_t i = 0; i < n; ++i)
        V[0][i] = b[i] - w[i];
      double beta = norm(V[0]);
      report.relative_residual = beta / norm_b;
      if (report.relative_residual <= rel_tol)
        {
          report.converged = true;
          return report;
        }
      for (std::size_t i = 0; i < n; ++i)
        V[0][i] /= beta;
      std::fill(g.begin(), g.end(), 0.0);
      g[0] = beta;

      int j = 0;
      for (; j < m && total_it < max_iterations; ++j, ++total_it)
        {
          A(V[j], w);
          for (int i = 0; i <= j; ++i)
            {
              const double h = dot(w, V[i]);
              H[j * (m + 1) + i] = h;
              for (std::size_t l = 0; l < n; ++l)
                w[l] -= h * V[i][l];
            }
          double h1 = norm(w);
          H[j * (m + 1) + j + 1] = h1;
          if (h1 != 0.0)
            for (std::size_t l = 0; l < n; ++l)
              V[j + 1][l] = w[l] / h1;

          // Apply the accumulated rotations, then zero the new subdiagonal.
          for (int i = 0; i < j; ++i)
            {
              const double t = H[j * (m + 1) + i];
              H[j * (m + 1) + i] = cs[i] * t + sn[i] * H[j * (m + 1) + i + 1];
              H[j * (m + 1) + i + 1] =
                -sn[i] * t + cs[i] * H[j * (m + 1) + i + 1];
            }
          const double a = H[j * (m + 1) + j], bb = H[j * (m + 1) + j + 1];
          const double rho = std::hypot(a, bb);
          cs[j] = rho == 0.0 ? 1.0 : a / rho;
          sn[j] = rho == 0.0 ? 0.0 : bb / rho;
          H[j * (m + 1) + j] = rho;
          H[j * (m + 1) + j + 1] = 0.0;
          const double gt = g[j];
          g[j] = cs[j] * gt;
          g[j + 1] = -sn[j] * gt;

          report.iterations = total_it + 1;
          report.relative_residual = std::abs(g[j + 1]) / norm_b;
          if (report.relative_residual <= rel_tol)
            {
              ++j;
              break;
            }
        }

      // Back substitution for the j coefficients, then update x.
      std::vector<double> y(j);
      for (int i = j - 1; i >= 0; --i)
        {
          double s = g[i];
          for (int l = i + 1; l < j; ++l)
            s -= H[l * (m + 1) + i] * y[l];
          y[i] = s / H[i * (m + 1) + i];
        }
      for (int i = 0; i < j; ++i)
        for (std::size_t l = 0; l < n; ++l)
          x[l] += y[i] * V[i][l];

      if (report.relative_residual <= rel_tol)
        {
          // The rotated residual estimate can drift; confirm with the true
          // residual at the restart boundary.
          A(x, w);
          double rn = 0;
          for (std::size_t i = 0; i < n; ++i)
            {
              const double ri = b[i] - w[i];
              rn += ri * ri;
            }
          report.relative_residual = std::sqrt(rn) / norm_b;
          if (report.relative_residual <= rel_tol)
            {
              report.converged = true;
              return report;
            }
        }
    }
  return report;
}

ApplyFn make_apply(RankOperator &op)
{
  if (op.layout().ghost_global_cells.size() != 0 &&
      op.config().kind != OperatorKind::mass &&
      op.config().kind != OperatorKind::inverse_mass)
    throw std::invalid_argument(
      "make_apply: operator must be single-rank (no ghost cells)");
  auto u = std::make_shared<GhostedVector>(op.layout().make_vector());
  auto y = std::make_shared<GhostedVector>(op.layout().make_vector());
  return [&op, u, y](const std::vector<double> &in, std::vector<double> &out) {
    if (in.size() != static_cast<std::size_t>(u->n_owned))
      throw std::invalid_argument("make_apply: vector size mismatch");
    std::copy(in.begin(), in.end(), u->data.begin());
    u->state = VectorState::clean;
    op.apply(*u, *y);
    out.assign(y->data.begin(), y->data.begin() + y->n_owned);
  };
}

} // namespace dg
