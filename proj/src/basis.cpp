#include <dg/basis.hpp>

#include <Eigen/Dense>

#include <cmath>
#include <numeric>
#include <stdexcept>

namespace dg
{

namespace
{

double lagrange_value(const std::vector<double> &nodes, int j, double x)
{
  double v = 1.0;
  for (std::size_t m = 0; m < nodes.size(); ++m)
    if (static_cast<int>(m) != j)
      v *= (x - nodes[m]) / (nodes[j] - nodes[m]);
  return v;
}

double lagrange_derivative(const std::vector<double> &nodes, int j, double x)
{
  double sum = 0.0;
  for (std::size_t i = 0; i < nodes.size(); ++i)
    {
      if (static_cast<int>(i) == j)
        continue;
      double v = 1.0 / (nodes[j] - nodes[i]);
      for (std::size_t m = 0; m < nodes.size(); ++m)
        if (static_cast<int>(m) != j && m != i)
          v *= (x - nodes[m]) / (nodes[j] - nodes[m]);
      sum += v;
    }
  return sum;
}

// Values and derivatives of the shifted Legendre polynomials P_m(2x-1),
// m = 0..n-1.
void shifted_legendre_all(int n, double x, double *p, double *dp)
{
  const double t = 2.0 * x - 1.0;
  for (int m = 0; m < n; ++m)
    {
      if (m == 0)
        {
          p[0] = 1.0;
          dp[0] = 0.0;
        }
      else if (m == 1)
        {
          p[1] = t;
          dp[1] = 2.0;
        }
      else
        {
          p[m] = ((2 * m - 1) * t * p[m - 1] - (m - 1) * p[m - 2]) / m;
          // d/dx P_m(2x-1) = d/dx P_{m-2}(2x-1) + 2 (2m-1) P_{m-1}(2x-1)
          dp[m] = dp[m - 2] + 2.0 * (2 * m - 1) * p[m - 1];
        }
    }
}

} // namespace

double Basis1D::value(int j, double x) const
{
  if (!nodes.empty())
    return lagrange_value(nodes, j, x);
  const int k = size();
  std::vector<double> p(k), dp(k);
  shifted_legendre_all(k, x, p.data(), dp.data());
  double v = 0.0;
  for (int m = 0; m < k; ++m)
    v += legendre_coeffs[j * k + m] * p[m];
  return v;
}

double Basis1D::derivative(int j, double x) const
{
  if (!nodes.empty())
    return lagrange_derivative(nodes, j, x);
  const int k = size();
  std::vector<double> p(k), dp(k);
  shifted_legendre_all(k, x, p.data(), dp.data());
  double v = 0.0;
  for (int m = 0; m < k; ++m)
    v += legendre_coeffs[j * k + m] * dp[m];
  return v;
}

std::vector<int> Basis1D::face_support(int face, int highest_derivative) const
{
  const int k = size();
  std::vector<int> all(k);
  std::iota(all.begin(), all.end(), 0);

  switch (face_access)
    {
      case FaceAccess::nodal_on_faces:
        if (highest_derivative == 0)
          return {face == 0 ? 0 : k - 1};
        return all;
      case FaceAccess::hermite_type_basis:
        if (highest_derivative == 0)
          return {face == 0 ? 0 : k - 1};
        return face == 0 ? std::vector<int>{0, 1}
                         : std::vector<int>{k - 2, k - 1};
      default:
        return all;
    }
}

Basis1D make_basis(BasisKind kind, int p)
{
  if (p < 0)
    throw std::invalid_argument("make_basis: negative degree");

  Basis1D basis;
  basis.kind = kind;
  basis.degree = p;
  const int k = p + 1;

  switch (kind)
    {
      case BasisKind::lagrange_gauss_lobatto:
        basis.face_access = FaceAccess::nodal_on_faces;
        basis.nodes = p == 0 ? std::vector<double>{0.5}
                             : gauss_lobatto_quadrature(k).points;
        break;

      case BasisKind::lagrange_gauss:
        basis.face_access = FaceAccess::generic;
        basis.nodes = gauss_quadrature(k).points;
        break;

      case BasisKind::hermite_like:
        {
          if (p < 3)
            throw std::invalid_argument(
              "make_basis: hermite_like requires cubic or higher degree");
          basis.face_access = FaceAccess::hermite_type_basis;

          // Interpolation conditions: value and derivative at x=0
          // (functions 0, 1), values in k-4 interior Chebyshev-distributed
          // points, derivative and value at x=1 (functions k-2, k-1).
          std::vector<double> interior(k - 4);
          for (int t = 1; t <= k - 4; ++t)
            interior[t - 1] = 0.5 * (1.0 - std::cos(M_PI * t / (k - 3)));

          Eigen::MatrixXd c(k, k);
          std::vector<double> pv(k), dv(k);
          for (int m = 0; m < k; ++m)
            {
              shifted_legendre_all(k, 0.0, pv.data(), dv.data());
              c(0, m) = pv[m];
              c(1, m) = dv[m];
              shifted_legendre_all(k, 1.0, pv.data(), dv.data());
              c(k - 2, m) = dv[m];
              c(k - 1, m) = pv[m];
              for (int t = 0; t < k - 4; ++t)
                {
                  shifted_legendre_all(k, interior[t], pv.data(), dv.data());
                  c(2 + t, m) = pv[m];
                }
            }
          const Eigen::MatrixXd a =
            c.partialPivLu().solve(Eigen::MatrixXd::Identity(k, k));
          // Basis function j has the Legendre coefficients of column j.
          basis.legendre_coeffs.resize(k * k);
          for (int j = 0; j < k; ++j)
            for (int m = 0; m < k; ++m)
              basis.legendre_coeffs[j * k + m] = a(m, j);
          break;
        }
    }
  return basis;
}

EvenOddMatrix pack_even_odd(const double *m, int rows, int cols, bool skew)
{
  double scale = 0.0;
  for (int i = 0; i < rows * cols; ++i)
    scale = std::max(scale, std::abs(m[i]));
  const double sign = skew ? -1.0 : 1.0;
  for (int q = 0; q < rows; ++q)
    for (int j = 0; j < cols; ++j)
      if (std::abs(m[q * cols + j] -
                   sign * m[(rows - 1 - q) * cols + (cols - 1 - j)]) >
          1e-12 * std::max(1.0, scale))
        throw std::invalid_argument(
          "pack_even_odd: matrix lacks the required mirror symmetry");

  EvenOddMatrix eo;
  eo.rows = rows;
  eo.cols = cols;
  eo.skew = skew;
  const int rh = rows / 2, ch = cols / 2;
  const int re = skew ? rh : (rows + 1) / 2; // rows fed by the even input
  const int ro = skew ? (rows + 1) / 2 : rh; // rows fed by the odd input
  const int ce = (cols + 1) / 2;

  eo.block_e.resize(re * ce);
  for (int q = 0; q < re; ++q)
    for (int j = 0; j < ce; ++j)
      eo.block_e[q * ce + j] =
        j < ch ? 0.5 * (m[q * cols + j] + m[q * cols + (cols - 1 - j)])
               : m[q * cols + j];

  eo.block_o.resize(ro * ch);
  for (int q = 0; q < ro; ++q)
    for (int j = 0; j < ch; ++j)
      eo.block_o[q * ch + j] =
        0.5 * (m[q * cols + j] - m[q * cols + (cols - 1 - j)]);

  return eo;
}

std::vector<double> unpack_even_odd(const EvenOddMatrix &eo)
{
  const int rows = eo.rows, cols = eo.cols;
  const int rh = rows / 2, ch = cols / 2;
  const int ce = (cols + 1) / 2;
  const double sign = eo.skew ? -1.0 : 1.0;
  std::vector<double> m(rows * cols, 0.0);

  for (int q = 0; q < rh; ++q)
    for (int j = 0; j < cols; ++j)
      {
        const int jm = std::min(j, cols - 1 - j);
        const double e = eo.block_e[q * ce + jm];
        const double o = jm < ch ? eo.block_o[q * ch + jm] : 0.0;
        const double v = j < ch    ? e + o
                         : j == jm ? e
                                   : e - o;
        m[q * cols + j] = v;
        m[(rows - 1 - q) * cols + (cols - 1 - j)] = sign * v;
      }

  if (rows % 2 == 1)
    {
      // Middle row: palindromic for symmetric matrices (even block),
      // anti-palindromic for skew ones (odd block).
      const int q = rh;
      for (int j = 0; j < cols; ++j)
        {
          const int jm = std::min(j, cols - 1 - j);
          if (!eo.skew)
            m[q * cols + j] = eo.block_e[q * ce + jm];
          else
            m[q * cols + j] = jm < ch ? (j < ch ? eo.block_o[q * ch + jm]
                                               : -eo.block_o[q * ch + jm])
                                      : 0.0;
        }
    }
  return m;
}

ShapeMatrices1D shape_matrices(const Basis1D &basis, const Quadrature1D &quad)
{
  const int k = basis.size();
  const int l = quad.size();
  if (l < k)
    throw std::invalid_argument(
      "shape_matrices: interpolation needs at least as many quadrature "
      "points as basis functions");

  ShapeMatrices1D sm;
  sm.k = k;
  sm.l = l;
  sm.S.resize(l * k);
  sm.D.resize(l * k);
  sm.Dco.resize(l * l);
  for (int q = 0; q < l; ++q)
    {
      for (int j = 0; j < k; ++j)
        {
          sm.S[q * k + j] = basis.value(j, quad.points[q]);
          sm.D[q * k + j] = basis.derivative(j, quad.points[q]);
        }
      for (int j = 0; j < l; ++j)
        sm.Dco[q * l + j] = lagrange_derivative(quad.points, j, quad.points[q]);
    }

  for (int face = 0; face < 2; ++face)
    {
      const double x = face == 0 ? 0.0 : 1.0;
      sm.Sf[face].resize(k);
      sm.Df[face].resize(k);
      for (int j = 0; j < k; ++j)
        {
          sm.Sf[face][j] = basis.value(j, x);
          sm.Df[face][j] = basis.derivative(j, x);
        }
    }
  if (basis.face_access == FaceAccess::hermite_type_basis)
    {
      // The interpolation conditions pin these rows; store them exactly.
      std::fill(sm.Sf[0].begin(), sm.Sf[0].end(), 0.0);
      std::fill(sm.Df[0].begin(), sm.Df[0].end(), 0.0);
      std::fill(sm.Sf[1].begin(), sm.Sf[1].end(), 0.0);
      std::fill(sm.Df[1].begin(), sm.Df[1].end(), 0.0);
      sm.Sf[0][0] = 1.0;
      sm.Df[0][1] = 1.0;
      sm.Sf[1][k - 1] = 1.0;
      sm.Df[1][k - 2] = 1.0;
    }

  const bool basis_symmetric = basis.kind != BasisKind::hermite_like;
  if (basis_symmetric)
    {
      sm.symmetric = true;
      sm.S_eo = pack_even_odd(sm.S.data(), l, k, false);
      sm.D_eo = pack_even_odd(sm.D.data(), l, k, true);
      sm.Dco_eo = pack_even_odd(sm.Dco.data(), l, l, true);
      // Re-expand so that the plain matrices and the packed halves describe
      // bitwise identical operators.
      sm.S = unpack_even_odd(sm.S_eo);
      sm.D = unpack_even_odd(sm.D_eo);
      sm.Dco = unpack_even_odd(sm.Dco_eo);
    }
  return sm;
}

} // namespace dg
