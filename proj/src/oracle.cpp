#include <dg/oracle.hpp>

#include <dg/geometry.hpp>
#include <dg/mesh.hpp>
#include <dg/operators.hpp>

#include <cmath>
#include <fstream>
#include <stdexcept>

namespace dg
{
namespace oracle
{

Eigen::MatrixXd dense_kronecker_matrix(const std::vector<DenseFactor> &factors)
{
  const int d = static_cast<int>(factors.size());
  if (d < 1 || d > 3)
    throw std::invalid_argument("dense_kronecker_matrix: need 1 to 3 factors");
  long long rows = 1, cols = 1;
  for (const auto &f : factors)
    {
      if (f.rows > 12 || f.cols > 12)
        throw std::invalid_argument("dense_kronecker_matrix: factor too large");
      rows *= f.rows;
      cols *= f.cols;
    }

  Eigen::MatrixXd m(rows, cols);
  for (long long q = 0; q < rows; ++q)
    for (long long j = 0; j < cols; ++j)
      {
        double v = 1.0;
        long long qq = q, jj = j;
        for (int a = 0; a < d; ++a)
          {
            const DenseFactor &f = factors[a];
            v *= f.m[(qq % f.rows) * f.cols + (jj % f.cols)];
            qq /= f.rows;
            jj /= f.cols;
          }
        m(q, j) = v;
      }
  return m;
}

std::vector<double> dense_kronecker_apply(
  const std::vector<DenseFactor> &factors, const std::vector<double> &in)
{
  const Eigen::MatrixXd m = dense_kronecker_matrix(factors);
  if (static_cast<long long>(in.size()) != m.cols())
    throw std::invalid_argument("dense_kronecker_apply: size mismatch");
  Eigen::Map<const Eigen::VectorXd> x(in.data(), in.size());
  const Eigen::VectorXd y = m * x;
  return std::vector<double>(y.data(), y.data() + y.size());
}

namespace
{

long long ipow(int b, int e)
{
  long long r = 1;
  while (e--)
    r *= b;
  return r;
}

// Tensor-product basis values and reference gradients at the cell
// quadrature points, identical for every cell.
struct CellBasisTable
{
  long long nq = 0, nj = 0;
  std::vector<double> phi;  // [q][j]
  std::vector<double> dphi; // [q][j][a]
};

CellBasisTable cell_basis_table(const Basis1D &basis, const Quadrature1D &q1,
                                int d)
{
  const int k = basis.size(), l = static_cast<int>(q1.points.size());
  std::vector<double> v(l * k), g(l * k);
  for (int q = 0; q < l; ++q)
    for (int j = 0; j < k; ++j)
      {
        v[q * k + j] = basis.value(j, q1.points[q]);
        g[q * k + j] = basis.derivative(j, q1.points[q]);
      }

  CellBasisTable t;
  t.nq = ipow(l, d);
  t.nj = ipow(k, d);
  t.phi.resize(t.nq * t.nj);
  t.dphi.resize(t.nq * t.nj * d);
  for (long long q = 0; q < t.nq; ++q)
    for (long long j = 0; j < t.nj; ++j)
      {
        int qm[3], jm[3];
        long long qq = q, jj = j;
        for (int a = 0; a < d; ++a)
          {
            qm[a] = static_cast<int>(qq % l);
            qq /= l;
            jm[a] = static_cast<int>(jj % k);
            jj /= k;
          }
        double p = 1.0;
        for (int a = 0; a < d; ++a)
          p *= v[qm[a] * k + jm[a]];
        t.phi[q * t.nj + j] = p;
        for (int a = 0; a < d; ++a)
          {
            double dp = g[qm[a] * k + jm[a]];
            for (int b = 0; b < d; ++b)
              if (b != a)
                dp *= v[qm[b] * k + jm[b]];
            t.dphi[(q * t.nj + j) * d + a] = dp;
          }
      }
  return t;
}

// Value and reference-gradient traces of all cell basis functions on one
// cell face, at the face quadrature points in the shared tangential
// ordering (ascending tangential axes, lowest axis fastest).
struct FaceBasisTable
{
  long long nq = 0, nj = 0;
  std::vector<double> phi;  // [q][j]
  std::vector<double> dphi; // [q][j][a]
};

FaceBasisTable face_basis_table(const Basis1D &basis, const Quadrature1D &q1,
                                int d, int face_number)
{
  const int k = basis.size(), l = static_cast<int>(q1.points.size());
  const int axis = face_number / 2;
  const double xf = face_number % 2 ? 1.0 : 0.0;

  std::vector<double> v(l * k), g(l * k);
  for (int q = 0; q < l; ++q)
    for (int j = 0; j < k; ++j)
      {
        v[q * k + j] = basis.value(j, q1.points[q]);
        g[q * k + j] = basis.derivative(j, q1.points[q]);
      }
  std::vector<double> vf(k), gf(k);
  for (int j = 0; j < k; ++j)
    {
      vf[j] = basis.value(j, xf);
      gf[j] = basis.derivative(j, xf);
    }

  int tang[2], nt = 0;
  for (int a = 0; a < d; ++a)
    if (a != axis)
      tang[nt++] = a;

  FaceBasisTable t;
  t.nq = ipow(l, d - 1);
  t.nj = ipow(k, d);
  t.phi.resize(t.nq * t.nj);
  t.dphi.resize(t.nq * t.nj * d);
  for (long long q = 0; q < t.nq; ++q)
    {
      int qm[3] = {0, 0, 0}; // per-axis quadrature index, face axis unused
      long long qq = q;
      for (int ti = 0; ti < nt; ++ti)
        {
          qm[tang[ti]] = static_cast<int>(qq % l);
          qq /= l;
        }
      for (long long j = 0; j < t.nj; ++j)
        {
          int jm[3];
          long long jj = j;
          for (int a = 0; a < d; ++a)
            {
              jm[a] = static_cast<int>(jj % k);
              jj /= k;
            }
          auto factor = [&](int a) {
            return a == axis ? vf[jm[a]] : v[qm[a] * k + jm[a]];
          };
          double p = 1.0;
          for (int a = 0; a < d; ++a)
            p *= factor(a);
          t.phi[q * t.nj + j] = p;
          for (int a = 0; a < d; ++a)
            {
              double dp = a == axis ? gf[jm[a]] : g[qm[a] * k + jm[a]];
              for (int b = 0; b < d; ++b)
                if (b != a)
                  dp *= factor(b);
              t.dphi[(q * t.nj + j) * d + a] = dp;
            }
        }
    }
  return t;
}

} // namespace

Eigen::MatrixXd assemble_operator(const OperatorConfig &cfg, const Mesh &mesh)
{
  const int d = mesh.d, k = cfg.k();
  const long long nj = ipow(k, d);
  const long long n = mesh.n_cells() * nj;
  if (n > 20000)
    throw std::invalid_argument(
      "assemble_operator: refusing to assemble more than 20000 dofs");
  if (cfg.d != d)
    throw std::invalid_argument("assemble_operator: dimension mismatch");

  const auto faces = enumerate_faces(mesh);
  const GeometryCache g =
    precompute_geometry(mesh, faces, k, k, GeometryVariant::g3,
                        cfg.equation(), cfg.velocity);
  const Basis1D basis = make_basis(cfg.basis, cfg.p);
  const CellBasisTable ct = cell_basis_table(basis, g.quad1d, d);
  const long long nq = ct.nq;

  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);

  // Cell integrals.
  for (int cell = 0; cell < mesh.n_cells(); ++cell)
    {
      const long long off = static_cast<long long>(cell) * nj;
      Eigen::MatrixXd local = Eigen::MatrixXd::Zero(nj, nj);
      for (long long q = 0; q < nq; ++q)
        {
          const double jxw = g.cell_jxw(cell, q);
          const double *jit = g.cell_inv_jac_t(cell, q);
          switch (cfg.kind)
            {
            case OperatorKind::mass:
            case OperatorKind::inverse_mass:
              for (long long i = 0; i < nj; ++i)
                for (long long j = 0; j < nj; ++j)
                  local(i, j) +=
                    ct.phi[q * nj + i] * ct.phi[q * nj + j] * jxw;
              break;
            case OperatorKind::advection:
              {
                double c[3] = {cfg.velocity.constant[0],
                               cfg.velocity.constant[1],
                               cfg.velocity.constant[2]};
                if (!cfg.velocity.is_constant())
                  {
                    const auto cv = cfg.velocity(
                      {g.qpoints[(cell * nq + q) * d],
                       g.qpoints[(cell * nq + q) * d + 1],
                       d > 2 ? g.qpoints[(cell * nq + q) * d + 2] : 0.0});
                    for (int i = 0; i < d; ++i)
                      c[i] = cv[i];
                  }
                double t[3];
                advection_cell_integrand(d, jit, jxw, c, 1.0, t);
                for (long long i = 0; i < nj; ++i)
                  {
                    double s = 0;
                    for (int x = 0; x < d; ++x)
                      s += ct.dphi[(q * nj + i) * d + x] * t[x];
                    for (long long j = 0; j < nj; ++j)
                      local(i, j) -= s * ct.phi[q * nj + j];
                  }
                break;
              }
            case OperatorKind::laplacian:
              for (long long i = 0; i < nj; ++i)
                {
                  double gi[3] = {0, 0, 0};
                  for (int x = 0; x < d; ++x)
                    for (int y = 0; y < d; ++y)
                      gi[x] += jit[x * d + y] * ct.dphi[(q * nj + i) * d + y];
                  for (long long j = 0; j < nj; ++j)
                    {
                      double gj[3] = {0, 0, 0}, s = 0;
                      for (int x = 0; x < d; ++x)
                        {
                          for (int y = 0; y < d; ++y)
                            gj[x] +=
                              jit[x * d + y] * ct.dphi[(q * nj + j) * d + y];
                          s += gi[x] * gj[x];
                        }
                      local(i, j) += s * jxw;
                    }
                }
              break;
            }
        }
      if (cfg.kind == OperatorKind::inverse_mass)
        local = local.inverse().eval();
      a.block(off, off, nj, nj) += local;
    }

  if (cfg.kind == OperatorKind::mass || cfg.kind == OperatorKind::inverse_mass)
    return a;

  // Face integrals. Trace tables depend only on the face number.
  std::array<FaceBasisTable, 6> ft;
  for (int fn = 0; fn < 2 * d; ++fn)
    ft[fn] = face_basis_table(basis, g.quad1d, d, fn);
  const long long nqf = g.n_q_face;

  for (long long f = 0; f < static_cast<long long>(faces.size()); ++f)
    {
      const RawFace &face = faces[f];
      const int ci = face.interior_cell;
      const long long oi = static_cast<long long>(ci) * nj;
      const FaceBasisTable &ti = ft[face.interior_face_number];
      const bool boundary = face.at_boundary();
      const int ce = boundary ? 0 : face.exterior_cell;
      const long long oe = static_cast<long long>(ce) * nj;
      const FaceBasisTable *te = boundary ? nullptr
                                          : &ft[face.exterior_face_number];

      for (long long q = 0; q < nqf; ++q)
        {
          const long long base = f * nqf + q;
          const double jxw = g.face_jxw[base];
          if (cfg.kind == OperatorKind::advection)
            {
              double c[3] = {cfg.velocity.constant[0],
                             cfg.velocity.constant[1],
                             cfg.velocity.constant[2]};
              if (!cfg.velocity.is_constant())
                {
                  const auto cv = cfg.velocity(
                    {g.face_qpoints[base * d], g.face_qpoints[base * d + 1],
                     d > 2 ? g.face_qpoints[base * d + 2] : 0.0});
                  for (int i = 0; i < d; ++i)
                    c[i] = cv[i];
                }
              double cdn = 0;
              for (int i = 0; i < d; ++i)
                cdn += c[i] * g.face_normal[base * d + i];

              if (boundary)
                {
                  // Mirror u+ = -u-: the flux reduces to |c.n| u-.
                  const double w = std::abs(cdn) * jxw;
                  for (long long i = 0; i < nj; ++i)
                    for (long long j = 0; j < nj; ++j)
                      a(oi + i, oi + j) +=
                        ti.phi[q * nj + i] * w * ti.phi[q * nj + j];
                  continue;
                }
              const double dm = 0.5 * (cdn + std::abs(cdn)) * jxw;
              const double dp = 0.5 * (cdn - std::abs(cdn)) * jxw;
              for (long long i = 0; i < nj; ++i)
                {
                  const double vi = ti.phi[q * nj + i];
                  const double ve = te->phi[q * nj + i];
                  for (long long j = 0; j < nj; ++j)
                    {
                      const double um = ti.phi[q * nj + j];
                      const double up = te->phi[q * nj + j];
                      a(oi + i, oi + j) += vi * dm * um;
                      a(oi + i, oe + j) += vi * dp * up;
                      a(oe + i, oi + j) -= ve * dm * um;
                      a(oe + i, oe + j) -= ve * dp * up;
                    }
                }
            }
          else // laplacian, symmetric interior penalty
            {
              const double tau = g.penalty[f];
              const double *jni = g.face_jni.data() + base * d;
              const double *jne = g.face_jne.data() + base * d;
              if (boundary)
                {
                  for (long long i = 0; i < nj; ++i)
                    {
                      const double vi = ti.phi[q * nj + i];
                      double dni = 0;
                      for (int x = 0; x < d; ++x)
                        dni += jni[x] * ti.dphi[(q * nj + i) * d + x];
                      for (long long j = 0; j < nj; ++j)
                        {
                          const double uj = ti.phi[q * nj + j];
                          double dnj = 0;
                          for (int x = 0; x < d; ++x)
                            dnj += jni[x] * ti.dphi[(q * nj + j) * d + x];
                          a(oi + i, oi + j) +=
                            (2.0 * tau * vi * uj - dnj * vi - uj * dni) * jxw;
                        }
                    }
                  continue;
                }
              for (int su = 0; su < 2; ++su)
                for (int sv = 0; sv < 2; ++sv)
                  {
                    const FaceBasisTable &tu = su == 0 ? ti : *te;
                    const FaceBasisTable &tv = sv == 0 ? ti : *te;
                    const double *jnu = su == 0 ? jni : jne;
                    const double *jnv = sv == 0 ? jni : jne;
                    const long long ou = su == 0 ? oi : oe;
                    const long long ov = sv == 0 ? oi : oe;
                    const double gu = su == 0 ? 1.0 : -1.0;
                    const double gv = sv == 0 ? 1.0 : -1.0;
                    for (long long i = 0; i < nj; ++i)
                      {
                        const double vi = tv.phi[q * nj + i];
                        double dni = 0;
                        for (int x = 0; x < d; ++x)
                          dni += jnv[x] * tv.dphi[(q * nj + i) * d + x];
                        for (long long j = 0; j < nj; ++j)
                          {
                            const double uj = tu.phi[q * nj + j];
                            double dnj = 0;
                            for (int x = 0; x < d; ++x)
                              dnj += jnu[x] * tu.dphi[(q * nj + j) * d + x];
                            a(ov + i, ou + j) +=
                              (tau * gu * gv * vi * uj -
                               0.5 * gv * vi * dnj - 0.5 * gu * uj * dni) *
                              jxw;
                          }
                      }
                  }
            }
        }
    }
  return a;
}

Eigen::MatrixXd assemble_unit_interval_mass(int p, double h)
{
  const int k = p + 1;
  const Basis1D basis = make_basis(BasisKind::lagrange_gauss_lobatto, p);
  const Quadrature1D quad = gauss_quadrature(k);
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(k, k);
  for (int q = 0; q < k; ++q)
    for (int i = 0; i < k; ++i)
      for (int j = 0; j < k; ++j)
        m(i, j) += basis.value(i, quad.points[q]) *
                   basis.value(j, quad.points[q]) * quad.weights[q] * h;
  return m;
}

void dump_triplets(const Eigen::MatrixXd &m, const std::string &path)
{
  std::ofstream out(path);
  out.precision(17);
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      if (m(i, j) != 0.0)
        out << i << ' ' << j << ' ' << m(i, j) << '\n';
}

} // namespace oracle
} // namespace dg
