#include <dg/quadrature.hpp>

#include <cmath>
#include <stdexcept>

namespace dg
{

namespace
{
constexpr double newton_tol = 1e-15;
constexpr int newton_max_iter = 100;

// Legendre value and derivative at x in [-1,1] via three-term recurrence.
void legendre(int n, double x, double &p, double &dp)
{
  double p0 = 1.0, p1 = x;
  if (n == 0)
    {
      p = 1.0;
      dp = 0.0;
      return;
    }
  for (int m = 2; m <= n; ++m)
    {
      const double p2 = ((2 * m - 1) * x * p1 - (m - 1) * p0) / m;
      p0 = p1;
      p1 = p2;
    }
  p = p1;
  if (std::abs(x) == 1.0)
    dp = (n % 2 == 0 ? x : 1.0) * n * (n + 1) / 2.0;
  else
    dp = n * (x * p1 - p0) / (x * x - 1.0);
}

// Make the rule exactly symmetric about 0.5 and sorted ascending.
void symmetrize(Quadrature1D &q)
{
  const int n = q.size();
  for (int i = 0; i < n / 2; ++i)
    {
      const int j = n - 1 - i;
      const double p = 0.5 * (q.points[i] + (1.0 - q.points[j]));
      q.points[i] = p;
      q.points[j] = 1.0 - p;
      const double w = 0.5 * (q.weights[i] + q.weights[j]);
      q.weights[i] = w;
      q.weights[j] = w;
    }
  if (n % 2 == 1)
    q.points[n / 2] = 0.5;
}
} // namespace

Quadrature1D gauss_quadrature(int n)
{
  if (n < 1)
    throw std::invalid_argument("gauss_quadrature: need at least one point");

  Quadrature1D q;
  q.points.resize(n);
  q.weights.resize(n);
  for (int i = 0; i < n; ++i)
    {
      // Chebyshev-based initial guess, then Newton on P_n.
      double x = std::cos(M_PI * (i + 0.75) / (n + 0.5));
      double p = 0, dp = 1;
      for (int it = 0; it < newton_max_iter; ++it)
        {
          legendre(n, x, p, dp);
          const double dx = p / dp;
          x -= dx;
          if (std::abs(dx) < newton_tol)
            break;
        }
      legendre(n, x, p, dp);
      // Map from [-1,1] to [0,1]; the cosine guesses run right to left.
      q.points[n - 1 - i] = 0.5 * (x + 1.0);
      q.weights[n - 1 - i] = 1.0 / ((1.0 - x * x) * dp * dp);
    }
  symmetrize(q);
  return q;
}

Quadrature1D gauss_lobatto_quadrature(int n)
{
  if (n < 2)
    throw std::invalid_argument(
      "gauss_lobatto_quadrature: need at least two points");

  Quadrature1D q;
  q.points.resize(n);
  q.weights.resize(n);
  const int m = n - 1;
  for (int i = 0; i < n; ++i)
    {
      double x;
      if (i == 0)
        x = -1.0;
      else if (i == m)
        x = 1.0;
      else
        {
          // Interior nodes are the roots of P'_{n-1}.
          x = std::cos(M_PI * (m - i) / m);
          for (int it = 0; it < newton_max_iter; ++it)
            {
              double p, dp;
              legendre(m, x, p, dp);
              // P'' from the Legendre differential equation.
              const double d2p =
                (2.0 * x * dp - m * (m + 1) * p) / (1.0 - x * x);
              const double dx = dp / d2p;
              x -= dx;
              if (std::abs(dx) < newton_tol)
                break;
            }
        }
      double p, dp;
      legendre(m, x, p, dp);
      q.points[i] = 0.5 * (x + 1.0);
      q.weights[i] = 1.0 / (m * (m + 1) * p * p);
    }
  symmetrize(q);
  return q;
}

} // namespace dg
