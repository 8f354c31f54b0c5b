#pragma once

#include <array>
#include <cstdint>
#include <vector>

namespace dg
{

inline constexpr std::uint32_t invalid_cell = 0xffffffffu;

// Box side b = 2*axis + (0: low end, 1: high end).
struct BoundarySpec
{
  bool periodic = false;
  int dirichlet_id = 0;
};

// Structured d-dimensional mesh of quadrilaterals/hexahedra on a box, with
// an optional smooth deformation x(y) = y + a * prod_i sin(pi y_i) applied
// per component in normalized box coordinates y. The deformation vanishes on
// the box boundary, so periodically identified faces stay geometrically
// consistent. Cells are enumerated lexicographically, axis 0 fastest.
struct Mesh
{
  int d = 2;
  std::array<int, 3> cells_per_dim{1, 1, 1};
  std::array<double, 3> lo{0, 0, 0};
  std::array<double, 3> hi{1, 1, 1};
  double deform_amplitude = 0.0; // 0 = Cartesian
  int mapping_degree = 1;        // polynomial degree of the cell mapping
  std::array<BoundarySpec, 6> boundary{};

  bool cartesian() const { return deform_amplitude == 0.0; }

  int n_cells() const
  {
    int n = 1;
    for (int a = 0; a < d; ++a)
      n *= cells_per_dim[a];
    return n;
  }

  std::array<int, 3> cell_multi_index(int c) const
  {
    std::array<int, 3> m{0, 0, 0};
    for (int a = 0; a < d; ++a)
      {
        m[a] = c % cells_per_dim[a];
        c /= cells_per_dim[a];
      }
    return m;
  }

  int cell_index(const std::array<int, 3> &m) const
  {
    int c = 0;
    for (int a = d - 1; a >= 0; --a)
      c = c * cells_per_dim[a] + m[a];
    return c;
  }

  // Physical coordinates of reference point xi in [0,1]^d of a cell.
  std::array<double, 3> map_point(int cell, const double *xi) const;
};

Mesh build_mesh(int d, const std::array<int, 3> &cells_per_dim,
                const std::array<double, 3> &lo,
                const std::array<double, 3> &hi, double deform_amplitude,
                int mapping_degree, const std::array<BoundarySpec, 6> &boundary);

// Convenience: all-Dirichlet (id per side = side number) or all-periodic
// unit-box meshes.
Mesh make_box_mesh(int d, int cells_per_dim, double deform_amplitude,
                   bool periodic, int mapping_degree = 3);

// A mesh face. Face numbers are 2*axis + (0: low side, 1: high side) as seen
// from the respective cell. The cell with the lower index is the interior
// cell e-; for boundary faces the exterior slot stores the boundary id.
struct RawFace
{
  std::uint32_t interior_cell = invalid_cell;
  std::uint32_t exterior_cell = invalid_cell; // invalid_cell on the boundary
  std::uint8_t interior_face_number = 0;
  std::uint8_t exterior_face_number = 0; // boundary id for boundary faces
  std::uint8_t subface_index = 255;      // 255: uniform face
  std::uint8_t face_orientation = 0;     // standard orientation only

  bool at_boundary() const { return exterior_cell == invalid_cell; }
  int axis() const { return interior_face_number / 2; }
};

// Deterministic enumeration: axis by axis, cells in lexicographic order.
std::vector<RawFace> enumerate_faces(const Mesh &mesh);

// Cell ownership in contiguous lexicographic slabs plus the rank computing
// each face (parallel to the enumerate_faces order).
struct Partition
{
  int n_ranks = 1;
  std::vector<int> cell_owner;
  std::vector<std::pair<int, int>> rank_cell_range; // [begin, end) per rank
  std::vector<int> face_owner;

  int n_owned_cells(int rank) const
  {
    return rank_cell_range[rank].second - rank_cell_range[rank].first;
  }
};

Partition partition_cells(const Mesh &mesh, int n_ranks);

// Assigns the computing rank of every face: faces interior to a rank stay
// there; faces on a rank interface are split evenly, except that all
// interface faces sharing one cell of rank p_i are scheduled on the opposite
// rank p_j so the data of that cell is sent only once.
void assign_face_owners(const Mesh &mesh, const std::vector<RawFace> &faces,
                        Partition &partition);

} // namespace dg
