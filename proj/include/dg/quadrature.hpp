#pragma once

#include <vector>

namespace dg
{

// 1D quadrature formula on the unit interval [0,1]. Points are strictly
// increasing and symmetric about 0.5; weights sum to one.
struct Quadrature1D
{
  std::vector<double> points;
  std::vector<double> weights;

  int size() const { return static_cast<int>(points.size()); }
};

// Gauss-Legendre formula with n points, exact for degree <= 2n-1.
Quadrature1D gauss_quadrature(int n);

// Gauss-Lobatto-Legendre formula with n >= 2 points including both
// endpoints, exact for degree <= 2n-3.
Quadrature1D gauss_lobatto_quadrature(int n);

} // namespace dg
