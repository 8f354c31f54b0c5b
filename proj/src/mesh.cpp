#include <dg/mesh.hpp>

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

namespace dg
{

std::array<double, 3> Mesh::map_point(int cell, const double *xi) const
{
  const std::array<int, 3> m = cell_multi_index(cell);
  std::array<double, 3> y{0, 0, 0};
  for (int a = 0; a < d; ++a)
    y[a] = (m[a] + xi[a]) / cells_per_dim[a];

  double bump = deform_amplitude;
  for (int a = 0; a < d; ++a)
    bump *= std::sin(M_PI * y[a]);

  std::array<double, 3> x{0, 0, 0};
  for (int a = 0; a < d; ++a)
    x[a] = lo[a] + (hi[a] - lo[a]) * (y[a] + bump);
  return x;
}

Mesh build_mesh(int d, const std::array<int, 3> &cells_per_dim,
                const std::array<double, 3> &lo,
                const std::array<double, 3> &hi, double deform_amplitude,
                int mapping_degree, const std::array<BoundarySpec, 6> &boundary)
{
  if (d != 2 && d != 3)
    throw std::invalid_argument("build_mesh: dimension must be 2 or 3");
  Mesh mesh;
  mesh.d = d;
  mesh.cells_per_dim = cells_per_dim;
  mesh.lo = lo;
  mesh.hi = hi;
  mesh.deform_amplitude = deform_amplitude;
  mesh.mapping_degree = std::max(1, mapping_degree);
  mesh.boundary = boundary;
  for (int a = 0; a < d; ++a)
    {
      if (cells_per_dim[a] < 1)
        throw std::invalid_argument("build_mesh: need at least one cell");
      if (hi[a] <= lo[a])
        throw std::invalid_argument("build_mesh: non-positive extent");
      if (mesh.boundary[2 * a].periodic != mesh.boundary[2 * a + 1].periodic)
        throw std::invalid_argument(
          "build_mesh: periodic sides must come in opposing pairs");
    }
  return mesh;
}

Mesh make_box_mesh(int d, int cells_per_dim, double deform_amplitude,
                   bool periodic, int mapping_degree)
{
  std::array<BoundarySpec, 6> boundary{};
  for (int s = 0; s < 6; ++s)
    {
      boundary[s].periodic = periodic;
      boundary[s].dirichlet_id = s;
    }
  return build_mesh(d, {cells_per_dim, cells_per_dim, cells_per_dim},
                    {0, 0, 0}, {1, 1, 1}, deform_amplitude, mapping_degree,
                    boundary);
}

std::vector<RawFace> enumerate_faces(const Mesh &mesh)
{
  std::vector<RawFace> faces;
  const int d = mesh.d;
  for (int a = 0; a < d; ++a)
    {
      const bool periodic = mesh.boundary[2 * a].periodic;
      const int n_a = mesh.cells_per_dim[a];
      for (int c = 0; c < mesh.n_cells(); ++c)
        {
          const std::array<int, 3> m = mesh.cell_multi_index(c);

          // Low-side boundary face.
          if (m[a] == 0 && !periodic)
            {
              RawFace f;
              f.interior_cell = c;
              f.interior_face_number = 2 * a;
              f.exterior_face_number = mesh.boundary[2 * a].dirichlet_id;
              faces.push_back(f);
            }

          // Face on the high side of this cell.
          if (m[a] == n_a - 1)
            {
              if (!periodic)
                {
                  RawFace f;
                  f.interior_cell = c;
                  f.interior_face_number = 2 * a + 1;
                  f.exterior_face_number =
                    mesh.boundary[2 * a + 1].dirichlet_id;
                  faces.push_back(f);
                }
              else
                {
                  // Wrap-around face; the low-side cell has the smaller
                  // (cell, face number) pair and becomes e-.
                  std::array<int, 3> mn = m;
                  mn[a] = 0;
                  RawFace f;
                  f.interior_cell = mesh.cell_index(mn);
                  f.exterior_cell = c;
                  f.interior_face_number = 2 * a;
                  f.exterior_face_number = 2 * a + 1;
                  faces.push_back(f);
                }
            }
          else
            {
              std::array<int, 3> mn = m;
              mn[a] = m[a] + 1;
              RawFace f;
              f.interior_cell = c;
              f.exterior_cell = mesh.cell_index(mn);
              f.interior_face_number = 2 * a + 1;
              f.exterior_face_number = 2 * a;
              faces.push_back(f);
            }
        }
    }
  return faces;
}

Partition partition_cells(const Mesh &mesh, int n_ranks)
{
  const int n = mesh.n_cells();
  if (n_ranks < 1 || n_ranks > n)
    throw std::invalid_argument(
      "partition_cells: rank count must be in [1, n_cells]");

  Partition p;
  p.n_ranks = n_ranks;
  p.cell_owner.resize(n);
  const int base = n / n_ranks, extra = n % n_ranks;
  int begin = 0;
  for (int r = 0; r < n_ranks; ++r)
    {
      const int size = base + (r < extra ? 1 : 0);
      p.rank_cell_range.emplace_back(begin, begin + size);
      std::fill(p.cell_owner.begin() + begin,
                p.cell_owner.begin() + begin + size, r);
      begin += size;
    }
  return p;
}

void assign_face_owners(const Mesh &mesh, const std::vector<RawFace> &faces,
                        Partition &partition)
{
  (void)mesh;
  partition.face_owner.assign(faces.size(), -1);

  // Faces not crossing a rank interface.
  std::map<std::pair<int, int>, std::vector<std::size_t>> interface_faces;
  for (std::size_t i = 0; i < faces.size(); ++i)
    {
      const RawFace &f = faces[i];
      const int ri = partition.cell_owner[f.interior_cell];
      if (f.at_boundary())
        {
          partition.face_owner[i] = ri;
          continue;
        }
      const int re = partition.cell_owner[f.exterior_cell];
      if (ri == re)
        partition.face_owner[i] = ri;
      else
        interface_faces[{std::min(ri, re), std::max(ri, re)}].push_back(i);
    }

  for (auto &[pair, list] : interface_faces)
    {
      const auto [ra, rb] = pair;
      // Multiplicity of each cell among the faces of this interface.
      std::map<std::uint32_t, int> mult;
      for (std::size_t i : list)
        {
          ++mult[faces[i].interior_cell];
          ++mult[faces[i].exterior_cell];
        }

      int count_a = 0, count_b = 0;
      auto assign = [&](std::size_t i, int rank) {
        partition.face_owner[i] = rank;
        (rank == ra ? count_a : count_b) += 1;
      };

      // Faces whose cell appears in several interface faces are all
      // scheduled on the rank opposite that cell, so the cell data crosses
      // the interface only once. If both cells repeat, alternate whole cell
      // groups (keyed by the ra-side cell) between the ranks.
      std::map<std::uint32_t, int> group_rank;
      std::vector<std::size_t> singles;
      for (std::size_t i : list)
        {
          const RawFace &f = faces[i];
          const std::uint32_t ca =
            partition.cell_owner[f.interior_cell] == ra ? f.interior_cell
                                                        : f.exterior_cell;
          const std::uint32_t cb =
            ca == f.interior_cell ? f.exterior_cell : f.interior_cell;
          const int ma = mult[ca], mb = mult[cb];
          if (ma >= 2 && mb < 2)
            assign(i, rb);
          else if (mb >= 2 && ma < 2)
            assign(i, ra);
          else if (ma >= 2 && mb >= 2)
            {
              auto [it, inserted] =
                group_rank.try_emplace(ca, group_rank.size() % 2 == 0 ? rb : ra);
              assign(i, it->second);
              (void)inserted;
            }
          else
            singles.push_back(i);
        }

      // Remaining one-off faces alternate, starting with the lighter rank.
      for (std::size_t i : singles)
        assign(i, count_a <= count_b ? ra : rb);
    }
}

} // namespace dg
