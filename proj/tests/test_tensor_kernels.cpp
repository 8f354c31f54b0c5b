#include <dg/basis.hpp>
#include <dg/oracle.hpp>
#include <dg/tensor_kernels.hpp>

#include <doctest.h>

#include "test_helpers.hpp"

#include <cmath>
#include <numeric>

using namespace dg;
using dg_test::broadcast;
using dg_test::max_abs;
using dg_test::max_abs_diff;
using dg_test::random_vector;

namespace
{

long long ipow(int b, int e)
{
  long long r = 1;
  while (e--)
    r *= b;
  return r;
}

std::vector<double> identity_matrix(int n)
{
  std::vector<double> m(n * n, 0.0);
  for (int i = 0; i < n; ++i)
    m[i * n + i] = 1.0;
  return m;
}

// Random matrix with the requested mirror symmetry about the center.
std::vector<double> random_mirror_matrix(int rows, int cols, bool skew,
                                         unsigned seed)
{
  auto m = random_vector(rows * cols, seed);
  const double sign = skew ? -1.0 : 1.0;
  for (int q = 0; q < rows; ++q)
    for (int j = 0; j < cols; ++j)
      {
        const int qm = rows - 1 - q, jm = cols - 1 - j;
        if (q * cols + j > qm * cols + jm)
          m[q * cols + j] = sign * m[qm * cols + jm];
        else if (q * cols + j == qm * cols + jm && skew)
          m[q * cols + j] = 0.0;
      }
  return m;
}

} // namespace

TEST_CASE("basis_change: identity and partition of unity")
{
  const int k = 4;
  const auto basis = make_basis(BasisKind::lagrange_gauss, k - 1);
  const auto sm = shape_matrices(basis, gauss_quadrature(k));

  // Collocation: S = I, so the basis change is a copy (also in place).
  auto in = random_vector(ipow(k, 3), 1);
  std::vector<double> out(in.size()), scratch(2 * in.size());
  basis_change(3, true, k, k, false, sm, in.data(), out.data(),
               scratch.data(), nullptr);
  CHECK(max_abs_diff(in, out) < 1e-12);

  // Partition of unity: an all-ones coefficient vector stays all ones.
  const auto gll = make_basis(BasisKind::lagrange_gauss_lobatto, 3);
  const auto sm2 = shape_matrices(gll, gauss_quadrature(5));
  std::vector<double> ones(ipow(4, 2), 1.0), out2(ipow(5, 2)),
    scratch2(2 * ipow(5, 2));
  basis_change(2, true, 4, 5, false, sm2, ones.data(), out2.data(),
               scratch2.data(), nullptr);
  for (double v : out2)
    CHECK(v == doctest::Approx(1.0).epsilon(1e-13));
}

TEST_CASE("basis_change matches the dense Kronecker oracle")
{
  for (int d : {1, 2, 3})
    for (int k : {2, 3, 4})
      for (int l : {k, k + 1})
        {
          const auto basis = make_basis(BasisKind::lagrange_gauss_lobatto,
                                        k - 1);
          const auto sm = shape_matrices(basis, gauss_quadrature(l));
          const oracle::DenseFactor fS{l, k, sm.S};
          const std::vector<oracle::DenseFactor> factors(d, fS);

          const auto in = random_vector(ipow(k, d), 7 * k + l + d);
          std::vector<double> out(ipow(l, d)), scratch(2 * ipow(l, d));
          KernelCounters counters;
          basis_change(d, true, k, l, false, sm, in.data(), out.data(),
                       scratch.data(), &counters);
          CHECK(counters.kernel_invocations == d);

          const auto ref = oracle::dense_kronecker_apply(factors, in);
          CHECK(max_abs_diff(out, ref) < 1e-13);

          // Transposed (integration) direction against the transposed dense
          // matrix.
          const auto inT = random_vector(ipow(l, d), 100 + k + l + d);
          std::vector<double> outT(ipow(k, d));
          basis_change(d, false, k, l, false, sm, inT.data(), outT.data(),
                       scratch.data(), nullptr);
          const Eigen::MatrixXd dense = oracle::dense_kronecker_matrix(factors);
          Eigen::Map<const Eigen::VectorXd> x(inT.data(), inT.size());
          const Eigen::VectorXd y = dense.transpose() * x;
          for (int i = 0; i < y.size(); ++i)
            CHECK(outT[i] == doctest::Approx(y[i]).epsilon(1e-13));

          // Adjoint consistency <S u, v> = <u, S^T v>.
          double a = 0, b = 0;
          for (std::size_t i = 0; i < out.size(); ++i)
            a += out[i] * inT[i];
          for (std::size_t i = 0; i < outT.size(); ++i)
            b += outT[i] * in[i];
          CHECK(a == doctest::Approx(b).epsilon(1e-12));
        }
}

TEST_CASE("basis_change: add mode and in-place square application")
{
  const int d = 2, k = 3, l = 3;
  const auto basis = make_basis(BasisKind::lagrange_gauss_lobatto, k - 1);
  const auto sm = shape_matrices(basis, gauss_quadrature(l));
  const auto in = random_vector(ipow(k, d), 3);
  std::vector<double> scratch(2 * ipow(l, d));

  std::vector<double> base = random_vector(ipow(l, d), 4);
  std::vector<double> out = base;
  basis_change(d, true, k, l, true, sm, in.data(), out.data(), scratch.data(),
               nullptr);
  std::vector<double> plain(ipow(l, d));
  basis_change(d, true, k, l, false, sm, in.data(), plain.data(),
               scratch.data(), nullptr);
  for (std::size_t i = 0; i < out.size(); ++i)
    CHECK(out[i] == doctest::Approx(base[i] + plain[i]).epsilon(1e-13));

  std::vector<double> inplace = in;
  basis_change(d, true, k, l, false, sm, inplace.data(), inplace.data(),
               scratch.data(), nullptr);
  CHECK(max_abs_diff(inplace, plain) == 0.0);
}

TEST_CASE("collocation_derivative: exact on constants and linears")
{
  const int k = 5;
  const auto quad = gauss_quadrature(k);
  const auto basis = make_basis(BasisKind::lagrange_gauss, k - 1);
  const auto sm = shape_matrices(basis, quad);

  for (int d : {2, 3})
    {
      const long long n = ipow(k, d);
      std::vector<double> c(n, 0.7), grad(d * n);
      collocation_derivative(d, true, k, false, sm, c.data(), grad.data(),
                             nullptr);
      CHECK(max_abs(grad) < 1e-12);

      // u = xi_1 sampled in the collocation points: unit derivative along
      // axis 0, zero along the others.
      std::vector<double> u(n);
      for (long long i = 0; i < n; ++i)
        u[i] = quad.points[i % k];
      collocation_derivative(d, true, k, false, sm, u.data(), grad.data(),
                             nullptr);
      for (long long i = 0; i < n; ++i)
        CHECK(grad[i] == doctest::Approx(1.0).epsilon(1e-12));
      for (long long i = n; i < d * n; ++i)
        CHECK(grad[i] == doctest::Approx(0.0).epsilon(1e-12));
    }
}

TEST_CASE("gradient via Eq-(6) factorization equals the naive stacked form")
{
  for (int d : {1, 2, 3})
    for (int k = 2; k <= 8; ++k)
      {
        const auto quad = gauss_quadrature(k);
        const auto basis = make_basis(BasisKind::lagrange_gauss_lobatto,
                                      k - 1);
        const auto sm = shape_matrices(basis, quad);
        const long long n = ipow(k, d);
        const auto in = random_vector(n, 17 * d + k);

        // Factored: basis change to collocation space, then the collocation
        // derivative per component.
        std::vector<double> coll(n), grad(d * n), scratch(2 * n);
        basis_change(d, true, k, k, false, sm, in.data(), coll.data(),
                     scratch.data(), nullptr);
        collocation_derivative(d, true, k, false, sm, coll.data(), grad.data(),
                               nullptr);

        // Naive: stacked Kronecker rows with D in the slot of the
        // derivative direction and S elsewhere.
        const oracle::DenseFactor fS{k, k, sm.S}, fD{k, k, sm.D};
        for (int f = 0; f < d; ++f)
          {
            std::vector<oracle::DenseFactor> factors(d, fS);
            factors[f] = fD;
            const auto ref = oracle::dense_kronecker_apply(factors, in);
            for (long long i = 0; i < n; ++i)
              CHECK(std::abs(grad[f * n + i] - ref[i]) < 1e-13 * (1 + max_abs(ref)));
          }

        // Transposed direction: summing d fields into one.
        const auto fields = random_vector(d * n, 23 * d + k);
        std::vector<double> summed(n), ref_sum(n, 0.0), coll_sum(n);
        collocation_derivative(d, false, k, false, sm, fields.data(),
                               coll_sum.data(), nullptr);
        basis_change(d, false, k, k, false, sm, coll_sum.data(), summed.data(),
                     scratch.data(), nullptr);
        for (int f = 0; f < d; ++f)
          {
            std::vector<oracle::DenseFactor> factors(d, fS);
            factors[f] = fD;
            const Eigen::MatrixXd dense =
              oracle::dense_kronecker_matrix(factors);
            Eigen::Map<const Eigen::VectorXd> x(fields.data() + f * n, n);
            const Eigen::VectorXd y = dense.transpose() * x;
            for (long long i = 0; i < n; ++i)
              ref_sum[i] += y[i];
          }
        CHECK(max_abs_diff(summed, ref_sum) < 1e-12);
      }
}

TEST_CASE("face_normal_interpolation")
{
  const int d = 3, k = 4;
  const auto gll = make_basis(BasisKind::lagrange_gauss_lobatto, k - 1);
  const auto sm = shape_matrices(gll, gauss_quadrature(k));
  const long long n = ipow(k, d), nf = ipow(k, d - 1);
  const auto in = random_vector(n, 5);

  // Nodal basis, left face: the face layer verbatim.
  for (int direction = 0; direction < d; ++direction)
    {
      const auto support = gll.face_support(0, 0);
      std::vector<double> out(nf);
      KernelCounters counters;
      face_normal_interpolation(d, direction, true, k, sm.Sf[0].data(),
                                support.data(),
                                static_cast<int>(support.size()), false,
                                in.data(), out.data(), &counters);
      CHECK(counters.kernel_invocations == 1);
      long long idx = 0;
      long long inner = 1;
      for (int a = 0; a < direction; ++a)
        inner *= k;
      for (long long o = 0; o < nf / inner; ++o)
        for (long long i = 0; i < inner; ++i, ++idx)
          CHECK(out[idx] == in[o * inner * k + i]);
    }

  // Generic basis: equals the dense 1 x k row in the direction slot.
  const auto gauss = make_basis(BasisKind::lagrange_gauss, k - 1);
  const auto smg = shape_matrices(gauss, gauss_quadrature(k));
  std::vector<int> all(k);
  std::iota(all.begin(), all.end(), 0);
  for (int direction = 0; direction < d; ++direction)
    for (int face = 0; face < 2; ++face)
      {
        std::vector<double> out(nf);
        face_normal_interpolation(d, direction, true, k, smg.Sf[face].data(),
                                  all.data(), k, false, in.data(), out.data(),
                                  nullptr);
        std::vector<oracle::DenseFactor> factors(
          d, oracle::DenseFactor{k, k, identity_matrix(k)});
        factors[direction] = oracle::DenseFactor{1, k, smg.Sf[face]};
        const auto ref = oracle::dense_kronecker_apply(factors, in);
        CHECK(max_abs_diff(out, ref) < 1e-13);
      }

  // Hermite basis: values and normal derivative at the face see only the
  // first two coefficient layers.
  const auto herm = make_basis(BasisKind::hermite_like, 4);
  const int kh = 5;
  const auto smh = shape_matrices(herm, gauss_quadrature(kh));
  std::vector<double> uh(ipow(kh, d), 0.0);
  for (long long i = 0; i < ipow(kh, d); ++i)
    if ((i / (kh * kh)) >= 2) // layers >= 2 from the low face in z
      uh[i] = 1.0 + i;
  for (int deriv = 0; deriv <= 1; ++deriv)
    {
      const auto &row = deriv == 0 ? smh.Sf[0] : smh.Df[0];
      const auto support = herm.face_support(0, deriv);
      std::vector<double> out(ipow(kh, d - 1), -1.0);
      face_normal_interpolation(d, 2, true, kh, row.data(),
                                support.data() + (deriv == 0 ? 0 : 0),
                                static_cast<int>(support.size()), false,
                                uh.data(), out.data(), nullptr);
      CHECK(max_abs(out) == 0.0);
    }

  // Transposed distribution is the adjoint of the interpolation.
  const auto xface = random_vector(nf, 9);
  std::vector<double> vol(n, 0.0), face(nf);
  face_normal_interpolation(d, 1, false, k, sm.Sf[1].data(),
                            gll.face_support(1, 0).data(), 1, true,
                            xface.data(), vol.data(), nullptr);
  face_normal_interpolation(d, 1, true, k, sm.Sf[1].data(),
                            gll.face_support(1, 0).data(), 1, false, in.data(),
                            face.data(), nullptr);
  double a = 0, b = 0;
  for (long long i = 0; i < n; ++i)
    a += vol[i] * in[i];
  for (long long i = 0; i < nf; ++i)
    b += xface[i] * face[i];
  CHECK(a == doctest::Approx(b).epsilon(1e-13));

  CHECK_THROWS_AS(face_normal_interpolation(d, 3, true, k, sm.Sf[0].data(),
                                            all.data(), k, false, in.data(),
                                            face.data(), nullptr),
                  std::invalid_argument);
}

TEST_CASE("even-odd stripe kernel: counters per Eq-(8) model")
{
  for (int k = 2; k <= 16; ++k)
    {
      const auto m = random_mirror_matrix(k, k, false, 1000 + k);
      const auto eo = pack_even_odd(m.data(), k, k, false);
      const auto x = random_vector(k, 2000 + k);
      std::vector<double> y(k);
      KernelCounters counters;
      int ext[1] = {k};
      apply_1d(MatrixForm::even_odd, false, 0, 1, ext, m.data(), &eo, k, k,
               x.data(), y.data(), false, &counters);
      CHECK(counters.adds == 2 * k);
      CHECK(counters.mults == k);
      CHECK(counters.fmas == k * (k - 2) / 2);
      CHECK(counters.kernel_invocations == 1);
    }

  // The spec-level example: k = 4 gives 8 adds, 4 mults, 4 FMAs.
  {
    const auto m = random_mirror_matrix(4, 4, false, 77);
    const auto eo = pack_even_odd(m.data(), 4, 4, false);
    const auto x = random_vector(4, 78);
    std::vector<double> y(4);
    KernelCounters counters;
    int ext[1] = {4};
    apply_1d(MatrixForm::even_odd, false, 0, 1, ext, m.data(), &eo, 4, 4,
             x.data(), y.data(), false, &counters);
    CHECK(counters.adds == 8);
    CHECK(counters.mults == 4);
    CHECK(counters.fmas == 4);
  }
}

TEST_CASE("even-odd equals plain on symmetric and skew matrices")
{
  for (bool skew : {false, true})
    for (int rows : {2, 3, 4, 5, 7, 8, 12, 16})
      for (int cols : {rows, rows - 1})
        {
          if (cols < 2)
            continue;
          const auto m =
            random_mirror_matrix(rows, cols, skew, 31 * rows + cols + skew);
          const auto eo = pack_even_odd(m.data(), rows, cols, skew);
          for (bool transpose : {false, true})
            {
              const int n_in = transpose ? rows : cols;
              const int n_out = transpose ? cols : rows;
              const auto x = random_vector(n_in, rows * 7 + cols + transpose);
              std::vector<double> y_plain(n_out), y_eo(n_out);
              int ext[1] = {n_in};
              apply_1d(MatrixForm::plain, transpose, 0, 1, ext, m.data(),
                       nullptr, rows, cols, x.data(), y_plain.data(), false,
                       nullptr);
              apply_1d(MatrixForm::even_odd, transpose, 0, 1, ext, m.data(),
                       &eo, rows, cols, x.data(), y_eo.data(), false, nullptr);
              CHECK(max_abs_diff(y_plain, y_eo) < 1e-13);
            }
        }

  // Identity stripes pass through unchanged.
  const auto id = identity_matrix(6);
  const auto eo = pack_even_odd(id.data(), 6, 6, false);
  const auto x = random_vector(6, 5);
  std::vector<double> y(6);
  int ext[1] = {6};
  apply_1d(MatrixForm::even_odd, false, 0, 1, ext, id.data(), &eo, 6, 6,
           x.data(), y.data(), false, nullptr);
  CHECK(max_abs_diff(x, y) < 1e-15);
}

TEST_CASE("even-odd equals plain: 1000 random stripes per size")
{
  for (int k = 2; k <= 16; ++k)
    {
      double worst = 0;
      for (int trial = 0; trial < 1000; ++trial)
        {
          const auto m = random_mirror_matrix(k, k, false, k * 100000 + trial);
          const auto eo = pack_even_odd(m.data(), k, k, false);
          const auto x = random_vector(k, k * 50000 + trial);
          std::vector<double> yp(k), ye(k);
          int ext[1] = {k};
          apply_1d(MatrixForm::plain, false, 0, 1, ext, m.data(), nullptr, k,
                   k, x.data(), yp.data(), false, nullptr);
          apply_1d(MatrixForm::even_odd, false, 0, 1, ext, m.data(), &eo, k,
                   k, x.data(), ye.data(), false, nullptr);
          const double scale = std::max(1.0, max_abs(yp));
          worst = std::max(worst, max_abs_diff(yp, ye) / scale);
        }
      CHECK(worst < 1e-13);
    }
}

TEST_CASE("lane batches reproduce scalar arithmetic per lane")
{
  const int d = 2, k = 4, l = 5;
  const auto basis = make_basis(BasisKind::lagrange_gauss_lobatto, k - 1);
  const auto sm = shape_matrices(basis, gauss_quadrature(l));
  constexpr int W = 4;

  std::vector<std::vector<double>> lanes;
  for (int w = 0; w < W; ++w)
    lanes.push_back(random_vector(ipow(k, d), 40 + w));
  std::vector<LaneBatch<W>> in(ipow(k, d));
  for (long long i = 0; i < ipow(k, d); ++i)
    for (int w = 0; w < W; ++w)
      in[i][w] = lanes[w][i];

  std::vector<LaneBatch<W>> out(ipow(l, d)), scratch(2 * ipow(l, d));
  basis_change(d, true, k, l, false, sm, in.data(), out.data(), scratch.data(),
               nullptr);

  for (int w = 0; w < W; ++w)
    {
      std::vector<double> ref(ipow(l, d)), s2(2 * ipow(l, d));
      basis_change(d, true, k, l, false, sm, lanes[w].data(), ref.data(),
                   s2.data(), nullptr);
      for (long long i = 0; i < ipow(l, d); ++i)
        CHECK(out[i][w] == ref[i]);
    }
}

TEST_CASE("tiled cell Laplacian equals the untiled kernel sequence")
{
  const int d = 3;
  for (int k = 2; k <= 8; ++k)
    {
      const auto quad = gauss_quadrature(k);
      const auto basis = make_basis(BasisKind::lagrange_gauss_lobatto, k - 1);
      const auto sm = shape_matrices(basis, quad);
      const long long n = ipow(k, d);
      const auto in = random_vector(n, 300 + k);

      // A non-trivial diagonal quadrature point operation mimicking a
      // variable-coefficient Laplacian.
      auto coeff = [](long long q, int c) {
        return 0.5 + 0.1 * c + 0.001 * static_cast<double>(q % 17);
      };

      std::vector<double> tiled(n), scratch(2 * n + k * k);
      KernelCounters counters;
      tiled_cell_laplacian(
        k, sm,
        [&](long long offset, int count, double *dx, double *dy, double *dz) {
          for (int i = 0; i < count; ++i)
            {
              dx[i] *= coeff(offset + i, 0);
              dy[i] *= coeff(offset + i, 1);
              dz[i] *= coeff(offset + i, 2);
            }
        },
        in.data(), tiled.data(), scratch.data(), &counters);
      CHECK(counters.kernel_invocations == 12);

      // Untiled reference: basis change, gradient, pointwise scaling,
      // transposed gradient and basis change.
      std::vector<double> coll(n), grad(d * n), ref(n), s2(2 * n);
      basis_change(d, true, k, k, false, sm, in.data(), coll.data(), s2.data(),
                   nullptr);
      collocation_derivative(d, true, k, false, sm, coll.data(), grad.data(),
                             nullptr);
      for (int c = 0; c < d; ++c)
        for (long long q = 0; q < n; ++q)
          grad[c * n + q] *= coeff(q, c);
      collocation_derivative(d, false, k, false, sm, grad.data(), coll.data(),
                             nullptr);
      basis_change(d, false, k, k, false, sm, coll.data(), ref.data(),
                   s2.data(), nullptr);

      const double scale = std::max(1.0, max_abs(ref));
      CHECK(max_abs_diff(tiled, ref) / scale < 1e-13);

      // Constant input: zero gradient, zero output.
      std::vector<double> ones(n, 1.0), zout(n);
      tiled_cell_laplacian(
        k, sm,
        [&](long long, int count, double *dx, double *dy, double *dz) {
          for (int i = 0; i < count; ++i)
            {
              dx[i] *= 1.0;
              dy[i] *= 1.0;
              dz[i] *= 1.0;
            }
        },
        ones.data(), zout.data(), scratch.data(), nullptr);
      CHECK(max_abs(zout) < 1e-11);
    }
}
