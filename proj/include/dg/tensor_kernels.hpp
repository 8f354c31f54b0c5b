#pragma once

#include <dg/basis.hpp>
#include <dg/counters.hpp>
#include <dg/lane_batch.hpp>

#include <stdexcept>

namespace dg
{

enum class MatrixForm
{
  plain,
  even_odd
};

// Upper bound on the 1D size, sets the stack buffers of the stripe kernels.
inline constexpr int max_points_1d = 40;

namespace kernels
{

// y = M x (or M^T x): one stripe of length cols (rows when transposed),
// strided access, result optionally accumulated.
template <typename T>
inline void stripe_plain(const double *m, int rows, int cols, bool transpose,
                         const T *x, int xs, T *y, int ys, bool add)
{
  const int n_in = transpose ? rows : cols;
  const int n_out = transpose ? cols : rows;
  T xb[max_points_1d];
  for (int i = 0; i < n_in; ++i)
    xb[i] = x[i * xs];
  for (int q = 0; q < n_out; ++q)
    {
      const double m0 = transpose ? m[q] : m[q * cols];
      T acc = xb[0] * m0;
      for (int j = 1; j < n_in; ++j)
        {
          const double mj = transpose ? m[j * cols + q] : m[q * cols + j];
          acc += xb[j] * mj;
        }
      if (add)
        y[q * ys] += acc;
      else
        y[q * ys] = acc;
    }
}

// Even-odd decomposed stripe product. The input vector is split into even
// and odd mirror components; the two half-sized blocks act on them
// separately and the output halves are recombined by adding and subtracting.
template <typename T>
inline void stripe_even_odd(const EvenOddMatrix &eo, bool transpose,
                            const T *x, int xs, T *y, int ys, bool add)
{
  const int rows = transpose ? eo.cols : eo.rows;
  const int cols = transpose ? eo.rows : eo.cols;
  const int ch = cols / 2, ce = (cols + 1) / 2;
  const int rh = rows / 2, re = (rows + 1) / 2;

  T xe[max_points_1d / 2 + 1], xo[max_points_1d / 2];
  for (int j = 0; j < ch; ++j)
    {
      xe[j] = x[j * xs] + x[(cols - 1 - j) * xs];
      xo[j] = x[j * xs] - x[(cols - 1 - j) * xs];
    }
  if (cols % 2 == 1)
    xe[ce - 1] = x[ch * xs];

  // Select which packed block consumes the even part of the input and which
  // produces the even part of the output. For symmetric matrices block_e
  // maps even to even; for skew-symmetric ones it maps even to odd, and
  // transposition swaps the roles of the two blocks.
  const bool swap_blocks = eo.skew && transpose;
  const std::vector<double> &be = swap_blocks ? eo.block_o : eo.block_e;
  const std::vector<double> &bo = swap_blocks ? eo.block_e : eo.block_o;
  // Stored column counts of the selected blocks: the block consuming the
  // even input half spans ceil(cols/2) stored columns (middle included),
  // the odd one floor(cols/2), with the roles exchanged when the blocks are
  // swapped for a transposed skew application.
  const int be_cols = swap_blocks ? eo.cols / 2 : (eo.cols + 1) / 2;
  const int bo_cols = swap_blocks ? (eo.cols + 1) / 2 : eo.cols / 2;

  // even_out[q], q < re: the mirror-even part of the output (middle entry
  // included); odd_out[q], q < rh: the mirror-odd part.
  T even_out[max_points_1d / 2 + 1], odd_out[max_points_1d / 2];

  const int n_from_even = eo.skew ? rh : re; // outputs fed by even input
  const int n_from_odd = eo.skew ? re : rh;
  T from_even[max_points_1d / 2 + 1], from_odd[max_points_1d / 2 + 1];
  for (int q = 0; q < n_from_even; ++q)
    {
      T acc = xe[0] * (transpose ? be[q] : be[q * be_cols]);
      for (int j = 1; j < ce; ++j)
        acc += xe[j] * (transpose ? be[j * be_cols + q] : be[q * be_cols + j]);
      from_even[q] = acc;
    }
  for (int q = 0; q < n_from_odd; ++q)
    {
      if (ch == 0)
        {
          from_odd[q] = xe[0] * 0.0;
          continue;
        }
      T acc = xo[0] * (transpose ? bo[q] : bo[q * bo_cols]);
      for (int j = 1; j < ch; ++j)
        acc += xo[j] * (transpose ? bo[j * bo_cols + q] : bo[q * bo_cols + j]);
      from_odd[q] = acc;
    }

  const T *ev = eo.skew ? from_odd : from_even;
  const T *od = eo.skew ? from_even : from_odd;
  for (int q = 0; q < rh; ++q)
    {
      const T a = ev[q] + od[q];
      const T b = ev[q] - od[q];
      if (add)
        {
          y[q * ys] += a;
          y[(rows - 1 - q) * ys] += b;
        }
      else
        {
          y[q * ys] = a;
          y[(rows - 1 - q) * ys] = b;
        }
    }
  if (rows % 2 == 1)
    {
      if (add)
        y[rh * ys] += ev[re - 1];
      else
        y[rh * ys] = ev[re - 1];
    }
}

} // namespace kernels

// Applies a 1D matrix (rows x cols, row-major; the even-odd packed form when
// form == even_odd) along one axis of a d-dimensional tensor with extents
// ext_in (axis 0 has stride one). transpose applies the transposed matrix.
// Counts as one kernel invocation.
template <typename T>
void apply_1d(MatrixForm form, bool transpose, int axis, int d,
              const int *ext_in, const double *m, const EvenOddMatrix *eo,
              int rows, int cols, const T *in, T *out, bool add,
              KernelCounters *counters)
{
  if (axis < 0 || axis >= d)
    throw std::invalid_argument("apply_1d: axis out of range");
  const int n_in = transpose ? rows : cols;
  const int n_out = transpose ? cols : rows;
  if (n_in > max_points_1d || n_out > max_points_1d)
    throw std::invalid_argument("apply_1d: 1D size too large");
  if (ext_in[axis] != n_in)
    throw std::invalid_argument("apply_1d: extent mismatch");
  if (form == MatrixForm::even_odd && (eo == nullptr || eo->empty()))
    throw std::invalid_argument("apply_1d: even-odd form not available");

  long long inner = 1, outer = 1;
  for (int a = 0; a < axis; ++a)
    inner *= ext_in[a];
  for (int a = axis + 1; a < d; ++a)
    outer *= ext_in[a];

  T buf[max_points_1d];
  for (long long o = 0; o < outer; ++o)
    for (long long i = 0; i < inner; ++i)
      {
        const T *x = in + o * inner * n_in + i;
        T *y = out + o * inner * n_out + i;
        // Buffer the result so that in == out is safe for square matrices.
        if (form == MatrixForm::plain)
          kernels::stripe_plain(m, rows, cols, transpose, x,
                                static_cast<int>(inner), buf, 1, false);
        else
          kernels::stripe_even_odd(*eo, transpose, x, static_cast<int>(inner),
                                   buf, 1, false);
        if (add)
          for (int q = 0; q < n_out; ++q)
            y[q * inner] += buf[q];
        else
          for (int q = 0; q < n_out; ++q)
            y[q * inner] = buf[q];
      }

  if (counters)
    {
      counters->kernel_invocations += 1;
      if (form == MatrixForm::plain)
        charge_plain(counters, n_out, n_in, inner * outer);
      else
        charge_even_odd(counters, transpose ? cols : rows,
                        transpose ? rows : cols, inner * outer);
    }
}

namespace kernels
{
inline long long ipow(int base, int exp)
{
  long long r = 1;
  for (int i = 0; i < exp; ++i)
    r *= base;
  return r;
}
} // namespace kernels

// Change between polynomial bases: out = (S (x) ... (x) S) in when
// interpolating (k^d -> l^d), the transposed application when integrating
// (l^d -> k^d). scratch must hold 2 l^d entries. When add is set the result
// is accumulated into out. in == out is allowed for k == l.
template <typename T>
void basis_change(int d, bool interpolate, int k, int l, bool add,
                  const ShapeMatrices1D &sm, const T *in, T *out, T *scratch,
                  KernelCounters *counters, MatrixForm form = MatrixForm::plain)
{
  if (k > l)
    throw std::invalid_argument("basis_change: needs k <= l");
  if (sm.k != k || sm.l != l)
    throw std::invalid_argument("basis_change: shape matrix size mismatch");

  const EvenOddMatrix *eo = form == MatrixForm::even_odd ? &sm.S_eo : nullptr;
  int ext[3];
  for (int a = 0; a < d; ++a)
    ext[a] = interpolate ? k : l;

  const long long nl = kernels::ipow(l, d);
  T *s1 = scratch, *s2 = scratch + nl;
  const T *src = in;
  for (int pass = 0; pass < d; ++pass)
    {
      const int axis = interpolate ? pass : d - 1 - pass;
      const bool last = pass == d - 1;
      T *dst = last ? out : (src == s1 ? s2 : s1);
      apply_1d(form, !interpolate, axis, d, ext, sm.S.data(), eo, l, k, src,
               dst, last && add, counters);
      ext[axis] = interpolate ? l : k;
      src = dst;
    }
}

// Unit-cell derivative in collocation space. With interpolate set, takes one
// field of k^d values and produces the d gradient components (d consecutive
// fields in out); otherwise sums the transposed application of the d input
// fields into a single output field.
template <typename T>
void collocation_derivative(int d, bool interpolate, int k, bool add,
                            const ShapeMatrices1D &sm, const T *in, T *out,
                            KernelCounters *counters,
                            MatrixForm form = MatrixForm::plain)
{
  if (sm.l != k)
    throw std::invalid_argument(
      "collocation_derivative: expects the collocation space size");
  const EvenOddMatrix *eo = form == MatrixForm::even_odd ? &sm.Dco_eo : nullptr;
  int ext[3] = {k, k, k};
  const long long n = kernels::ipow(k, d);
  for (int f = 0; f < d; ++f)
    {
      if (interpolate)
        apply_1d(form, false, f, d, ext, sm.Dco.data(), eo, k, k, in,
                 out + f * n, add, counters);
      else
        apply_1d(form, true, f, d, ext, sm.Dco.data(), eo, k, k, in + f * n,
                 out, add || f > 0, counters);
    }
}

// Interpolation of values (or first derivatives) in face-normal direction:
// applies a 1 x k row along `direction`, contracting a k^d coefficient array
// to a k^{d-1} face layer; the transposed application distributes a face
// layer back into the volume (accumulating; pass add = true). Only the
// entries listed in support (size n_support) are touched, which realizes the
// reduced access of nodal and Hermite-type bases.
template <typename T>
void face_normal_interpolation(int d, int direction, bool interpolate, int k,
                               const double *row, const int *support,
                               int n_support, bool add, const T *in, T *out,
                               KernelCounters *counters)
{
  if (direction < 0 || direction >= d)
    throw std::invalid_argument("face_normal_interpolation: bad direction");
  if (!interpolate && !add)
    throw std::invalid_argument(
      "face_normal_interpolation: transposed form only accumulates");

  long long inner = 1, outer = 1;
  for (int a = 0; a < direction; ++a)
    inner *= k;
  for (int a = direction + 1; a < d; ++a)
    outer *= k;

  for (long long o = 0; o < outer; ++o)
    for (long long i = 0; i < inner; ++i)
      {
        const long long face_idx = o * inner + i;
        const long long vol_base = o * inner * k + i;
        if (interpolate)
          {
            T acc = in[vol_base + support[0] * inner] * row[support[0]];
            for (int c = 1; c < n_support; ++c)
              acc += in[vol_base + support[c] * inner] * row[support[c]];
            if (add)
              out[face_idx] += acc;
            else
              out[face_idx] = acc;
          }
        else
          {
            for (int c = 0; c < n_support; ++c)
              out[vol_base + support[c] * inner] +=
                in[face_idx] * row[support[c]];
          }
      }

  if (counters)
    {
      counters->kernel_invocations += 1;
      counters->mults += inner * outer;
      counters->fmas += inner * outer * (n_support - 1);
    }
}

// Loop-tiled evaluation of the 3D cell Laplacian: basis change to the
// collocation points, unit-cell gradient, a quadrature point operation and
// the transposed integration, with all sweeps except the third-direction
// ones fused over z-layers. The callback receives one x-line of k quadrature
// points (linear offset of the first point) with the three reference
// gradient components and overwrites them with the integrand components.
// scratch must hold 2 k^3 + k^2 entries; out receives the k^3 result.
template <typename T, typename QOp>
void tiled_cell_laplacian(int k, const ShapeMatrices1D &sm, QOp &&qop,
                          const T *in, T *out, T *scratch,
                          KernelCounters *counters)
{
  if (sm.k != k || sm.l != k)
    throw std::invalid_argument(
      "tiled_cell_laplacian: expects square shape matrices");
  const int k2 = k * k;
  const long long n = static_cast<long long>(k) * k2;
  T *val = scratch;          // basis-change / collocation values
  T *dz = scratch + n;       // z-derivative, then integrand component z
  T *dy = scratch + 2 * n;   // per-layer y-derivative / integrand component y
  const double *s = sm.S.data();
  const double *dco = sm.Dco.data();

  if (counters)
    counters->kernel_invocations += 12;
  charge_plain(counters, k, k, 12 * k2);

  int ext[3] = {k, k, k};
  // S_1, S_2 fused over z-layers.
  for (int iz = 0; iz < k; ++iz)
    {
      const T *src = in + iz * k2;
      T *lay = val + iz * k2;
      for (int iy = 0; iy < k; ++iy)
        kernels::stripe_plain(s, k, k, false, src + iy * k, 1, lay + iy * k, 1,
                              false);
      for (int ix = 0; ix < k; ++ix)
        kernels::stripe_plain(s, k, k, false, lay + ix, k, lay + ix, k, false);
    }
  (void)ext;
  // S_3 and D_3^co per pencil.
  T pencil[max_points_1d];
  for (int i = 0; i < k2; ++i)
    {
      kernels::stripe_plain(s, k, k, false, val + i, k2, pencil, 1, false);
      for (int iz = 0; iz < k; ++iz)
        val[i + iz * k2] = pencil[iz];
      kernels::stripe_plain(dco, k, k, false, val + i, k2, dz + i, k2, false);
    }
  // Gradient in x and y, quadrature point operation and x/y integration,
  // fused per z-layer.
  T line[max_points_1d];
  for (int iz = 0; iz < k; ++iz)
    {
      T *lay = val + iz * k2;
      T *dylay = dy;
      for (int ix = 0; ix < k; ++ix)
        kernels::stripe_plain(dco, k, k, false, lay + ix, k, dylay + ix, k,
                              false);
      for (int iy = 0; iy < k; ++iy)
        {
          const long long off = static_cast<long long>(iz) * k2 + iy * k;
          kernels::stripe_plain(dco, k, k, false, lay + iy * k, 1, line, 1,
                                false);
          qop(off, k, line, dylay + iy * k, dz + off);
          kernels::stripe_plain(dco, k, k, true, line, 1, out + off, 1, false);
        }
      for (int ix = 0; ix < k; ++ix)
        kernels::stripe_plain(dco, k, k, true, dylay + ix, k, out + iz * k2 + ix,
                              k, true);
    }
  // z integration and S_3^T per pencil.
  for (int i = 0; i < k2; ++i)
    {
      kernels::stripe_plain(dco, k, k, true, dz + i, k2, out + i, k2, true);
      kernels::stripe_plain(s, k, k, true, out + i, k2, pencil, 1, false);
      for (int iz = 0; iz < k; ++iz)
        out[i + iz * k2] = pencil[iz];
    }
  // S_2^T, S_1^T fused over z-layers.
  for (int iz = 0; iz < k; ++iz)
    {
      T *lay = out + iz * k2;
      for (int ix = 0; ix < k; ++ix)
        kernels::stripe_plain(s, k, k, true, lay + ix, k, lay + ix, k, false);
      for (int iy = 0; iy < k; ++iy)
        kernels::stripe_plain(s, k, k, true, lay + iy * k, 1, lay + iy * k, 1,
                              false);
    }
}

} // namespace dg
