#pragma once

#include <cstddef>

namespace dg
{

// A batch of W values processed in parallel arithmetic lanes, one value per
// cell or face (array-of-structure-of-arrays layout). All arithmetic is
// elementwise; nothing in the kernels ever crosses lanes.
template <int W>
struct alignas(sizeof(double) * W) LaneBatch
{
  static_assert(W == 1 || W == 2 || W == 4 || W == 8, "unsupported width");

  double v[W];

  LaneBatch() = default;
  explicit LaneBatch(double s)
  {
    for (int i = 0; i < W; ++i)
      v[i] = s;
  }

  double &operator[](int i) { return v[i]; }
  double operator[](int i) const { return v[i]; }

  LaneBatch &operator+=(const LaneBatch &o)
  {
    for (int i = 0; i < W; ++i)
      v[i] += o.v[i];
    return *this;
  }
  LaneBatch &operator-=(const LaneBatch &o)
  {
    for (int i = 0; i < W; ++i)
      v[i] -= o.v[i];
    return *this;
  }
  LaneBatch &operator*=(double s)
  {
    for (int i = 0; i < W; ++i)
      v[i] *= s;
    return *this;
  }
};

template <int W>
inline LaneBatch<W> operator+(LaneBatch<W> a, const LaneBatch<W> &b)
{
  return a += b;
}

template <int W>
inline LaneBatch<W> operator-(LaneBatch<W> a, const LaneBatch<W> &b)
{
  return a -= b;
}

template <int W>
inline LaneBatch<W> operator*(LaneBatch<W> a, double s)
{
  return a *= s;
}

template <int W>
inline LaneBatch<W> operator*(LaneBatch<W> a, const LaneBatch<W> &b)
{
  for (int i = 0; i < W; ++i)
    a.v[i] *= b.v[i];
  return a;
}

template <int W>
inline LaneBatch<W> operator-(LaneBatch<W> a)
{
  for (int i = 0; i < W; ++i)
    a.v[i] = -a.v[i];
  return a;
}

} // namespace dg
