#pragma once

#include <dg/basis.hpp>
#include <dg/mesh.hpp>
#include <dg/quadrature.hpp>

#include <array>
#include <functional>
#include <vector>

namespace dg
{

enum class Equation
{
  mass,
  advection,
  laplacian
};

// How much geometry is precomputed per cell:
//   g1: mapping support points only, Jacobians evaluated on the fly.
//   g2: quadrature point coordinates, Jacobians from collocation derivatives.
//   g3: inverse transposed Jacobian and det(J) times quadrature weight.
//   g4: the effective quadrature-point coefficient of the equation.
enum class GeometryVariant
{
  g1,
  g2,
  g3,
  g4
};

enum class GeometryCompression
{
  cartesian,
  affine,
  general
};

const char *to_string(GeometryVariant v);

// Transport direction, either a constant vector or a closed-form field
// evaluated at physical coordinates.
struct VelocityField
{
  std::array<double, 3> constant{1, 1, 1};
  std::function<std::array<double, 3>(const std::array<double, 3> &)> field;

  bool is_constant() const { return !field; }
  std::array<double, 3> operator()(const std::array<double, 3> &x) const
  {
    return field ? field(x) : constant;
  }
};

// Tensor-product Lagrange interpolant of the mesh mapping on the
// Gauss-Lobatto points of degree m, per cell.
struct MappingEval
{
  int d = 0;
  int m = 1;
  Basis1D basis; // Gauss-Lobatto Lagrange of degree m
  long long points_per_cell = 0;
  std::vector<double> support; // [cell][point][dim]

  const double *cell_support(int cell) const
  {
    return support.data() + static_cast<long long>(cell) * points_per_cell * d;
  }
};

MappingEval build_mapping(const Mesh &mesh, int m);

// Evaluates the interpolated mapping at reference point xi: physical
// coordinates (x_out, d entries) and Jacobian J_ij = dx_i/dxi_j (jac_out,
// d*d row-major). Either output may be null.
void mapping_point_jacobian(const Basis1D &mapping_basis, int d,
                            const double *support_points, const double *xi,
                            double *x_out, double *jac_out);

// Inverts a d x d Jacobian; returns det(J) and writes J^{-T} row-major.
double invert_jacobian(int d, const double *jac, double *inv_jac_t);

inline int n_symmetric_entries(int d) { return d * (d + 1) / 2; }

// Precomputed geometric factors for one (mesh, solution size k, quadrature
// size l, variant, equation) combination. Cell storage depends on the
// variant; face data (area elements, unit normals from the interior side,
// the normal times inverse Jacobian of both sides, and the interior penalty
// factor) is always precomputed. On Cartesian meshes the cell storage is
// compressed to a single record per cell with the quadrature weight applied
// at use; jxw slots then hold det(J) only.
struct GeometryCache
{
  int d = 0;
  int k = 0;
  int l = 0;
  Equation equation = Equation::mass;
  GeometryVariant variant = GeometryVariant::g3;
  GeometryCompression compression = GeometryCompression::general;
  VelocityField velocity;
  Quadrature1D quad1d;
  int n_cells = 0;
  long long n_faces = 0;
  long long n_q_cell = 0;   // stored records per cell (1 if compressed)
  long long n_q_face = 0;   // l^{d-1}
  int mapping_degree = 1;

  std::vector<double> mapping_support; // g1: [cell][(m+1)^d][d]
  std::vector<double> qpoints;         // g2: [cell][q][d]
  std::vector<double> inv_jac_t;       // g3: [cell][q][d*d]
  std::vector<double> jxw;             // g3, g4-mass: [cell][q]
  std::vector<double> coeff;           // g4: [cell][q][d or d(d+1)/2]

  std::vector<double> face_qpoints; // [face][qf][d]
  std::vector<double> face_jxw;    // [face][qf]
  std::vector<double> face_normal; // [face][qf][d]
  std::vector<double> face_jni;    // [face][qf][d], n . J^{-T} of side e-
  std::vector<double> face_jne;    // [face][qf][d], n . J^{-T} of side e+
  std::vector<double> penalty;     // [face]
  std::vector<double> cell_volume; // [cell]

  std::vector<double> wq_cell; // tensor weights, l^d
  std::vector<double> wq_face; // tensor weights, l^{d-1}

  bool compressed() const
  {
    return compression != GeometryCompression::general;
  }

  // det(J) w_q at cell quadrature point q (expanding compressed storage).
  double cell_jxw(int cell, long long q) const
  {
    return compressed() ? jxw[cell] * wq_cell[q]
                        : jxw[cell * n_q_cell + q];
  }

  const double *cell_inv_jac_t(int cell, long long q) const
  {
    const long long rec = compressed() ? cell : cell * n_q_cell + q;
    return inv_jac_t.data() + rec * d * d;
  }

  // Stored doubles per cell quadrature point in the uncompressed layout.
  long long doubles_per_cell_qpoint() const;
};

GeometryCache precompute_geometry(const Mesh &mesh,
                                  const std::vector<RawFace> &faces, int k,
                                  int l, GeometryVariant variant,
                                  Equation equation,
                                  const VelocityField &velocity = {});

// Reference (scalar) quadrature point operations shared by the assembled
// oracle and the unit tests. The fast operators implement the same algebra
// on lane batches.

// Advection cell integrand t = J^{-1} c u detJ w (the weak form subtracts
// its divergence test-function pairing; the caller applies that sign).
void advection_cell_integrand(int d, const double *inv_jac_t, double det_jxw,
                              const double *c, double u, double *t);

// Laplacian cell integrand t = J^{-1} J^{-T} grad_ref(u) detJ w.
void laplacian_cell_integrand(int d, const double *inv_jac_t, double det_jxw,
                              const double *grad_ref, double *t);

// Upwind (Lax-Friedrichs) advection flux times the normal of side e-:
// c.n (u- + u+)/2 + |c.n| (u- - u+)/2.
double advection_numerical_flux(double c_dot_n, double um, double up);

} // namespace dg
