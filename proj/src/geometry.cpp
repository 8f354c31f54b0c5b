#include <dg/geometry.hpp>

#include <cmath>
#include <stdexcept>

namespace dg
{

const char *to_string(GeometryVariant v)
{
  switch (v)
    {
    case GeometryVariant::g1:
      return "g1";
    case GeometryVariant::g2:
      return "g2";
    case GeometryVariant::g3:
      return "g3";
    case GeometryVariant::g4:
      return "g4";
    }
  return "?";
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
} // namespace

MappingEval build_mapping(const Mesh &mesh, int m)
{
  MappingEval map;
  map.d = mesh.d;
  map.m = m;
  map.basis = make_basis(BasisKind::lagrange_gauss_lobatto, m);
  map.points_per_cell = ipow(m + 1, mesh.d);
  map.support.resize(static_cast<long long>(mesh.n_cells()) *
                     map.points_per_cell * mesh.d);

  const auto &nodes = map.basis.nodes;
  double *out = map.support.data();
  for (int c = 0; c < mesh.n_cells(); ++c)
    for (long long s = 0; s < map.points_per_cell; ++s)
      {
        double xi[3] = {0, 0, 0};
        long long idx = s;
        for (int a = 0; a < mesh.d; ++a)
          {
            xi[a] = nodes[idx % (m + 1)];
            idx /= (m + 1);
          }
        const auto x = mesh.map_point(c, xi);
        for (int a = 0; a < mesh.d; ++a)
          *out++ = x[a];
      }
  return map;
}

void mapping_point_jacobian(const Basis1D &mapping_basis, int d,
                            const double *support_points, const double *xi,
                            double *x_out, double *jac_out)
{
  const int n = mapping_basis.size();
  double val[3][16], der[3][16];
  if (n > 16)
    throw std::invalid_argument("mapping_point_jacobian: degree too high");
  for (int a = 0; a < d; ++a)
    for (int j = 0; j < n; ++j)
      {
        val[a][j] = mapping_basis.value(j, xi[a]);
        der[a][j] = mapping_basis.derivative(j, xi[a]);
      }

  if (x_out)
    for (int i = 0; i < d; ++i)
      x_out[i] = 0.0;
  if (jac_out)
    for (int i = 0; i < d * d; ++i)
      jac_out[i] = 0.0;

  const long long np = ipow(n, d);
  for (long long s = 0; s < np; ++s)
    {
      double shape = 1.0, dshape[3];
      long long idx = s;
      int loc[3] = {0, 0, 0};
      for (int a = 0; a < d; ++a)
        {
          loc[a] = static_cast<int>(idx % n);
          idx /= n;
          shape *= val[a][loc[a]];
        }
      for (int a = 0; a < d; ++a)
        {
          double p = der[a][loc[a]];
          for (int b = 0; b < d; ++b)
            if (b != a)
              p *= val[b][loc[b]];
          dshape[a] = p;
        }
      const double *xs = support_points + s * d;
      if (x_out)
        for (int i = 0; i < d; ++i)
          x_out[i] += shape * xs[i];
      if (jac_out)
        for (int i = 0; i < d; ++i)
          for (int a = 0; a < d; ++a)
            jac_out[i * d + a] += dshape[a] * xs[i];
    }
}

double invert_jacobian(int d, const double *jac, double *inv_jac_t)
{
  if (d == 2)
    {
      const double a = jac[0], b = jac[1], c = jac[2], e = jac[3];
      const double det = a * e - b * c;
      const double inv = 1.0 / det;
      // J^{-1} = [[e, -b], [-c, a]] / det; store its transpose.
      inv_jac_t[0] = e * inv;
      inv_jac_t[1] = -c * inv;
      inv_jac_t[2] = -b * inv;
      inv_jac_t[3] = a * inv;
      return det;
    }
  // d == 3: cofactor expansion.
  const double *j = jac;
  double cof[9];
  cof[0] = j[4] * j[8] - j[5] * j[7];
  cof[1] = j[5] * j[6] - j[3] * j[8];
  cof[2] = j[3] * j[7] - j[4] * j[6];
  cof[3] = j[2] * j[7] - j[1] * j[8];
  cof[4] = j[0] * j[8] - j[2] * j[6];
  cof[5] = j[1] * j[6] - j[0] * j[7];
  cof[6] = j[1] * j[5] - j[2] * j[4];
  cof[7] = j[2] * j[3] - j[0] * j[5];
  cof[8] = j[0] * j[4] - j[1] * j[3];
  const double det = j[0] * cof[0] + j[1] * cof[1] + j[2] * cof[2];
  const double inv = 1.0 / det;
  // J^{-1}[a][i] = cof[i*3+a] * inv, so J^{-T}[i][a] = cof[i*3+a] * inv.
  for (int i = 0; i < 9; ++i)
    inv_jac_t[i] = cof[i] * inv;
  return det;
}

long long GeometryCache::doubles_per_cell_qpoint() const
{
  switch (variant)
    {
    case GeometryVariant::g1:
      return 0; // storage is per support point, not per quadrature point
    case GeometryVariant::g2:
      return d;
    case GeometryVariant::g3:
      return d * d + 1;
    case GeometryVariant::g4:
      switch (equation)
        {
        case Equation::mass:
          return 1;
        case Equation::advection:
          return d;
        case Equation::laplacian:
          return n_symmetric_entries(d);
        }
    }
  return 0;
}

void advection_cell_integrand(int d, const double *inv_jac_t, double det_jxw,
                              const double *c, double u, double *t)
{
  // J^{-1} c = (J^{-T})^T c.
  for (int i = 0; i < d; ++i)
    {
      double s = 0;
      for (int j = 0; j < d; ++j)
        s += inv_jac_t[j * d + i] * c[j];
      t[i] = s * u * det_jxw;
    }
}

void laplacian_cell_integrand(int d, const double *inv_jac_t, double det_jxw,
                              const double *grad_ref, double *t)
{
  double g[3];
  // Physical gradient J^{-T} grad_ref.
  for (int i = 0; i < d; ++i)
    {
      double s = 0;
      for (int j = 0; j < d; ++j)
        s += inv_jac_t[i * d + j] * grad_ref[j];
      g[i] = s;
    }
  // Back to reference space with J^{-1}.
  for (int i = 0; i < d; ++i)
    {
      double s = 0;
      for (int j = 0; j < d; ++j)
        s += inv_jac_t[j * d + i] * g[j];
      t[i] = s * det_jxw;
    }
}

double advection_numerical_flux(double c_dot_n, double um, double up)
{
  return 0.5 * c_dot_n * (um + up) + 0.5 * std::abs(c_dot_n) * (um - up);
}

namespace
{

void symmetric_coefficient(int d, const double *inv_jac_t, double det_jxw,
                           double *out)
{
  // (J^{-1} J^{-T})_{ij} = sum_a J^{-T}[a][i] J^{-T}[a][j].
  auto entry = [&](int i, int j) {
    double s = 0;
    for (int a = 0; a < d; ++a)
      s += inv_jac_t[a * d + i] * inv_jac_t[a * d + j];
    return s * det_jxw;
  };
  if (d == 2)
    {
      out[0] = entry(0, 0);
      out[1] = entry(1, 1);
      out[2] = entry(0, 1);
    }
  else
    {
      out[0] = entry(0, 0);
      out[1] = entry(1, 1);
      out[2] = entry(2, 2);
      out[3] = entry(0, 1);
      out[4] = entry(0, 2);
      out[5] = entry(1, 2);
    }
}

} // namespace

GeometryCache precompute_geometry(const Mesh &mesh,
                                  const std::vector<RawFace> &faces, int k,
                                  int l, GeometryVariant variant,
                                  Equation equation,
                                  const VelocityField &velocity)
{
  GeometryCache g;
  g.d = mesh.d;
  g.k = k;
  g.l = l;
  g.equation = equation;
  g.variant = variant;
  g.velocity = velocity;
  g.quad1d = gauss_quadrature(l);
  g.n_cells = mesh.n_cells();
  g.n_faces = static_cast<long long>(faces.size());
  g.n_q_face = ipow(l, mesh.d - 1);
  g.mapping_degree = mesh.mapping_degree;

  const bool variable_c =
    equation == Equation::advection && !velocity.is_constant();
  const bool compress = mesh.cartesian() && !variable_c &&
                        (variant == GeometryVariant::g3 ||
                         variant == GeometryVariant::g4);
  g.compression =
    compress ? GeometryCompression::cartesian : GeometryCompression::general;
  const long long nq = ipow(l, mesh.d);
  g.n_q_cell = compress ? 1 : nq;

  // Tensor quadrature weights.
  g.wq_cell.resize(nq);
  for (long long q = 0; q < nq; ++q)
    {
      double w = 1.0;
      long long idx = q;
      for (int a = 0; a < mesh.d; ++a)
        {
          w *= g.quad1d.weights[idx % l];
          idx /= l;
        }
      g.wq_cell[q] = w;
    }
  g.wq_face.resize(g.n_q_face);
  for (long long q = 0; q < g.n_q_face; ++q)
    {
      double w = 1.0;
      long long idx = q;
      for (int a = 0; a < mesh.d - 1; ++a)
        {
          w *= g.quad1d.weights[idx % l];
          idx /= l;
        }
      g.wq_face[q] = w;
    }

  const MappingEval mapping = build_mapping(mesh, mesh.mapping_degree);
  const int d = mesh.d;

  // Cell payload allocation.
  const int n_cells = g.n_cells;
  if (variant == GeometryVariant::g1)
    g.mapping_support = mapping.support;
  // A variable velocity field is evaluated at stored coordinates, so the
  // Jacobian-based variant keeps the quadrature points as well.
  if (variant == GeometryVariant::g2 ||
      (variable_c && variant == GeometryVariant::g3))
    g.qpoints.resize(static_cast<long long>(n_cells) * g.n_q_cell * d);
  if (variant == GeometryVariant::g3)
    {
      g.inv_jac_t.resize(static_cast<long long>(n_cells) * g.n_q_cell * d * d);
      g.jxw.resize(static_cast<long long>(n_cells) * g.n_q_cell);
    }
  if (variant == GeometryVariant::g4)
    {
      if (equation == Equation::mass)
        g.jxw.resize(static_cast<long long>(n_cells) * g.n_q_cell);
      else
        g.coeff.resize(static_cast<long long>(n_cells) * g.n_q_cell *
                       (equation == Equation::advection
                          ? d
                          : n_symmetric_entries(d)));
    }
  g.cell_volume.assign(n_cells, 0.0);

  for (int c = 0; c < n_cells; ++c)
    {
      const double *sup = mapping.cell_support(c);
      for (long long rec = 0; rec < g.n_q_cell; ++rec)
        {
          double xi[3] = {0.5, 0.5, 0.5};
          if (!compress)
            {
              long long idx = rec;
              for (int a = 0; a < d; ++a)
                {
                  xi[a] = g.quad1d.points[idx % l];
                  idx /= l;
                }
            }
          double x[3], jac[9], jit[9];
          mapping_point_jacobian(mapping.basis, d, sup, xi, x, jac);
          const double det = invert_jacobian(d, jac, jit);
          if (!(det > 0.0))
            throw std::runtime_error(
              "precompute_geometry: non-positive mapping Jacobian");
          const double det_jxw = compress ? det : det * g.wq_cell[rec];

          switch (variant)
            {
            case GeometryVariant::g1:
              break;
            case GeometryVariant::g2:
              for (int a = 0; a < d; ++a)
                g.qpoints[(c * g.n_q_cell + rec) * d + a] = x[a];
              break;
            case GeometryVariant::g3:
              if (!g.qpoints.empty())
                for (int a = 0; a < d; ++a)
                  g.qpoints[(c * g.n_q_cell + rec) * d + a] = x[a];
              for (int i = 0; i < d * d; ++i)
                g.inv_jac_t[(c * g.n_q_cell + rec) * d * d + i] = jit[i];
              g.jxw[c * g.n_q_cell + rec] = det_jxw;
              break;
            case GeometryVariant::g4:
              if (equation == Equation::mass)
                g.jxw[c * g.n_q_cell + rec] = det_jxw;
              else if (equation == Equation::laplacian)
                symmetric_coefficient(
                  d, jit, det_jxw,
                  g.coeff.data() +
                    (c * g.n_q_cell + rec) * n_symmetric_entries(d));
              else
                {
                  const auto cv = velocity({x[0], x[1], d > 2 ? x[2] : 0.0});
                  advection_cell_integrand(
                    d, jit, det_jxw, cv.data(), 1.0,
                    g.coeff.data() + (c * g.n_q_cell + rec) * d);
                }
              break;
            }
        }

      // Cell volume from the full quadrature rule regardless of variant.
      if (mesh.cartesian())
        {
          double v = 1.0;
          for (int a = 0; a < d; ++a)
            v *= (mesh.hi[a] - mesh.lo[a]) / mesh.cells_per_dim[a];
          g.cell_volume[c] = v;
        }
      else
        for (long long q = 0; q < nq; ++q)
          {
            double xi[3] = {0, 0, 0};
            long long idx = q;
            for (int a = 0; a < d; ++a)
              {
                xi[a] = g.quad1d.points[idx % l];
                idx /= l;
              }
            double jac[9], jit[9];
            mapping_point_jacobian(mapping.basis, d, sup, xi, nullptr, jac);
            g.cell_volume[c] += invert_jacobian(d, jac, jit) * g.wq_cell[q];
          }
    }

  // Face data, always stored in full.
  const long long nqf = g.n_q_face;
  g.face_qpoints.resize(g.n_faces * nqf * d);
  g.face_jxw.resize(g.n_faces * nqf);
  g.face_normal.resize(g.n_faces * nqf * d);
  g.face_jni.resize(g.n_faces * nqf * d);
  g.face_jne.resize(g.n_faces * nqf * d);
  g.penalty.resize(g.n_faces);

  for (long long f = 0; f < g.n_faces; ++f)
    {
      const RawFace &face = faces[f];
      const int axis = face.axis();
      int tang[2], nt = 0;
      for (int a = 0; a < d; ++a)
        if (a != axis)
          tang[nt++] = a;

      double area = 0.0;
      for (long long q = 0; q < nqf; ++q)
        {
          double tcoord[2] = {0.5, 0.5};
          long long idx = q;
          for (int t = 0; t < nt; ++t)
            {
              tcoord[t] = g.quad1d.points[idx % l];
              idx /= l;
            }

          double xi[3] = {0, 0, 0};
          for (int t = 0; t < nt; ++t)
            xi[tang[t]] = tcoord[t];
          xi[axis] = face.interior_face_number % 2 ? 1.0 : 0.0;

          double xq[3], jac[9], jit[9];
          mapping_point_jacobian(mapping.basis, d,
                                 mapping.cell_support(face.interior_cell), xi,
                                 xq, jac);
          for (int i = 0; i < d; ++i)
            g.face_qpoints[(f * nqf + q) * d + i] = xq[i];
          const double det = invert_jacobian(d, jac, jit);
          if (!(det > 0.0))
            throw std::runtime_error(
              "precompute_geometry: non-positive Jacobian on a face");

          // Outward normal of the interior cell: sign times the axis column
          // of J^{-T}; the area element is det |J^{-T} e_a| w_q.
          const double sign = face.interior_face_number % 2 ? 1.0 : -1.0;
          double nvec[3], nrm = 0;
          for (int i = 0; i < d; ++i)
            {
              nvec[i] = jit[i * d + axis];
              nrm += nvec[i] * nvec[i];
            }
          nrm = std::sqrt(nrm);
          const long long base = (f * nqf + q) * d;
          for (int i = 0; i < d; ++i)
            g.face_normal[base + i] = sign * nvec[i] / nrm;
          g.face_jxw[f * nqf + q] = det * nrm * g.wq_face[q];
          area += g.face_jxw[f * nqf + q];

          for (int j = 0; j < d; ++j)
            {
              double s = 0;
              for (int i = 0; i < d; ++i)
                s += g.face_normal[base + i] * jit[i * d + j];
              g.face_jni[base + j] = s;
            }

          if (face.at_boundary())
            {
              for (int j = 0; j < d; ++j)
                g.face_jne[base + j] = g.face_jni[base + j];
            }
          else
            {
              double xie[3] = {0, 0, 0};
              for (int t = 0; t < nt; ++t)
                xie[tang[t]] = tcoord[t];
              xie[axis] = face.exterior_face_number % 2 ? 1.0 : 0.0;
              double jace[9], jite[9];
              mapping_point_jacobian(mapping.basis, d,
                                     mapping.cell_support(face.exterior_cell),
                                     xie, nullptr, jace);
              if (!(invert_jacobian(d, jace, jite) > 0.0))
                throw std::runtime_error(
                  "precompute_geometry: non-positive Jacobian on a face");
              for (int j = 0; j < d; ++j)
                {
                  double s = 0;
                  for (int i = 0; i < d; ++i)
                    s += g.face_normal[base + i] * jite[i * d + j];
                  g.face_jne[base + j] = s;
                }
            }
        }

      const double p1sq = static_cast<double>(k) * k; // (p+1)^2
      if (face.at_boundary())
        g.penalty[f] = p1sq * area / g.cell_volume[face.interior_cell];
      else
        g.penalty[f] =
          p1sq * 0.5 *
          (area / g.cell_volume[face.interior_cell] +
           area / g.cell_volume[face.exterior_cell]);
    }

  return g;
}

} // namespace dg
