#pragma once

#include <dg/quadrature.hpp>

#include <array>
#include <vector>

namespace dg
{

enum class BasisKind
{
  lagrange_gauss_lobatto,
  lagrange_gauss,
  hermite_like
};

enum class FaceAccess
{
  nodal_on_faces,
  hermite_type_basis,
  generic
};

// One-dimensional polynomial basis of degree p (k = p+1 functions) on [0,1].
//
// lagrange_gauss_lobatto: nodal Lagrange basis in the Gauss-Lobatto points,
//   a single basis function is nonzero on each endpoint.
// lagrange_gauss: nodal Lagrange basis in the k Gauss points (collocation
//   basis for a k-point Gauss quadrature).
// hermite_like: basis where functions 0 and 1 carry value and derivative at
//   the left endpoint and functions k-2, k-1 derivative and value at the
//   right endpoint; all other functions have zero value and derivative at
//   both endpoints, so face values and first derivatives depend on at most
//   two coefficient layers.
class Basis1D
{
public:
  BasisKind kind;
  int degree;
  FaceAccess face_access;

  int size() const { return degree + 1; }

  double value(int j, double x) const;
  double derivative(int j, double x) const;

  // Indices of the basis functions with a nonzero value (derivative = 0) or
  // nonzero value-or-first-derivative (derivative = 1) at face 0 (x = 0) or
  // face 1 (x = 1). Returns all indices for generic bases.
  std::vector<int> face_support(int face, int highest_derivative) const;

  // Internal representation: Lagrange nodes, or expansion coefficients of
  // each basis function in shifted Legendre polynomials (row-major k x k).
  std::vector<double> nodes;
  std::vector<double> legendre_coeffs;
};

Basis1D make_basis(BasisKind kind, int p);

// Packed even-odd form of an interpolation (or derivative) matrix with the
// mirror symmetry M[q][j] = s * M[rows-1-q][cols-1-j], s = +1 for value
// matrices and s = -1 for derivative matrices. block_e applies to the even
// part of the input vector, block_o to the odd part.
struct EvenOddMatrix
{
  int rows = 0;
  int cols = 0;
  bool skew = false;
  // block_e: ceil(rows/2) x ceil(cols/2) for symmetric matrices,
  //          floor(rows/2) x ceil(cols/2) for skew-symmetric ones.
  // block_o: the complementary block.
  std::vector<double> block_e;
  std::vector<double> block_o;

  bool empty() const { return block_e.empty() && block_o.empty() && rows == 0; }
};

// The 1D matrices feeding all tensor product kernels: values S (l x k),
// derivatives D (l x k), the collocation derivative Dco (l x l, Lagrange
// basis in the quadrature points), and the face rows Sf/Df evaluating value
// and first derivative at x = 0 (index 0) and x = 1 (index 1). All matrices
// are stored row-major with the quadrature index as the row.
struct ShapeMatrices1D
{
  int k = 0;
  int l = 0;
  std::vector<double> S;
  std::vector<double> D;
  std::vector<double> Dco;
  std::array<std::vector<double>, 2> Sf;
  std::array<std::vector<double>, 2> Df;

  // Even-odd packed forms; present when the required mirror symmetry holds
  // (symmetric quadrature and a basis symmetric under x -> 1-x).
  bool symmetric = false;
  EvenOddMatrix S_eo;
  EvenOddMatrix D_eo;
  EvenOddMatrix Dco_eo;
};

ShapeMatrices1D shape_matrices(const Basis1D &basis, const Quadrature1D &quad);

// Packs a full matrix into even-odd form; throws if the required symmetry
// (within a small tolerance) does not hold. Exposed for kernel-level tests.
EvenOddMatrix pack_even_odd(const double *m, int rows, int cols, bool skew);

// Expands a packed matrix back to full storage (row-major rows x cols).
std::vector<double> unpack_even_odd(const EvenOddMatrix &eo);

} // namespace dg
