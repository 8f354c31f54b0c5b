#include <dg/mesh.hpp>

#include <doctest.h>

#include <array>
#include <cmath>
#include <map>
#include <set>
#include <stdexcept>

using namespace dg;

namespace
{

int count_interior(const std::vector<RawFace> &faces)
{
  int n = 0;
  for (const auto &f : faces)
    if (!f.at_boundary())
      ++n;
  return n;
}

} // namespace

TEST_CASE("mesh construction and cell numbering")
{
  const auto mesh = make_box_mesh(2, 4, 0.0, false);
  CHECK(mesh.n_cells() == 16);
  CHECK(mesh.cartesian());

  CHECK(mesh.cell_multi_index(0) == std::array<int, 3>{0, 0, 0});
  CHECK(mesh.cell_multi_index(1) == std::array<int, 3>{1, 0, 0});
  CHECK(mesh.cell_multi_index(4) == std::array<int, 3>{0, 1, 0});
  CHECK(mesh.cell_index({3, 2, 0}) == 11);
  for (int c = 0; c < mesh.n_cells(); ++c)
    CHECK(mesh.cell_index(mesh.cell_multi_index(c)) == c);

  CHECK_THROWS_AS(build_mesh(4, {1, 1, 1}, {0, 0, 0}, {1, 1, 1}, 0.0, 1, {}),
                  std::invalid_argument);
  CHECK_THROWS_AS(build_mesh(2, {2, 2, 1}, {0, 0, 0}, {0, 1, 1}, 0.0, 1, {}),
                  std::invalid_argument);
}

TEST_CASE("cartesian mapping is affine per cell")
{
  const auto mesh = make_box_mesh(2, 4, 0.0, false);
  const double xi0[2] = {0.0, 0.0}, xi1[2] = {1.0, 1.0}, xim[2] = {0.5, 0.5};
  const auto a = mesh.map_point(5, xi0); // cell (1,1)
  const auto b = mesh.map_point(5, xi1);
  const auto m = mesh.map_point(5, xim);
  CHECK(a[0] == doctest::Approx(0.25).epsilon(1e-14));
  CHECK(a[1] == doctest::Approx(0.25).epsilon(1e-14));
  CHECK(b[0] == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(m[0] == doctest::Approx(0.375).epsilon(1e-14));
}

TEST_CASE("deformed mapping stays fixed on the box boundary")
{
  const auto mesh = make_box_mesh(2, 3, 0.08, true);
  // Corner of the box.
  const double xi0[2] = {0.0, 0.0};
  const auto p = mesh.map_point(0, xi0);
  CHECK(p[0] == doctest::Approx(0.0).epsilon(1e-14));
  CHECK(p[1] == doctest::Approx(0.0).epsilon(1e-14));
  // A point on the left box edge keeps x = 0.
  const double xi1[2] = {0.0, 0.7};
  const auto q = mesh.map_point(0, xi1);
  CHECK(q[0] == doctest::Approx(0.0).epsilon(1e-13));
  // Interior points move.
  const double xi2[2] = {0.5, 0.5};
  const auto r = mesh.map_point(4, xi2); // center cell
  CHECK(std::abs(r[0] - 0.5) > 1e-6);

  // Shared cell vertices agree between neighboring cells.
  const double left_hi[2] = {1.0, 0.3};
  const double right_lo[2] = {0.0, 0.3};
  const auto s1 = mesh.map_point(0, left_hi);
  const auto s2 = mesh.map_point(1, right_lo);
  CHECK(s1[0] == doctest::Approx(s2[0]).epsilon(1e-13));
  CHECK(s1[1] == doctest::Approx(s2[1]).epsilon(1e-13));
}

TEST_CASE("face enumeration counts")
{
  const auto faces_d = enumerate_faces(make_box_mesh(2, 4, 0.0, false));
  CHECK(faces_d.size() == 40);
  CHECK(count_interior(faces_d) == 24);

  const auto faces_p = enumerate_faces(make_box_mesh(2, 4, 0.0, true));
  CHECK(faces_p.size() == 32);
  CHECK(count_interior(faces_p) == 32);

  const auto faces_3d = enumerate_faces(make_box_mesh(3, 3, 0.0, false));
  CHECK(count_interior(faces_3d) == 54);
  CHECK(faces_3d.size() == 54 + 54);
}

TEST_CASE("face sides and numbers")
{
  // Two cells side by side: the lower cell is the interior side with its
  // high-x face, the neighbor contributes its low-x face.
  auto mesh = build_mesh(2, {2, 1, 1}, {0, 0, 0}, {2, 1, 1}, 0.0, 1, {});
  const auto faces = enumerate_faces(mesh);
  bool found = false;
  for (const auto &f : faces)
    if (!f.at_boundary())
      {
        CHECK(f.interior_cell == 0);
        CHECK(f.exterior_cell == 1);
        CHECK(f.interior_face_number == 1);
        CHECK(f.exterior_face_number == 0);
        CHECK(f.subface_index == 255);
        CHECK(f.face_orientation == 0);
        found = true;
      }
  CHECK(found);

  // Boundary faces carry the boundary id in the exterior slot.
  std::array<BoundarySpec, 6> bdry{};
  for (int b = 0; b < 6; ++b)
    bdry[b].dirichlet_id = b;
  mesh = build_mesh(2, {2, 1, 1}, {0, 0, 0}, {2, 1, 1}, 0.0, 1, bdry);
  for (const auto &f : enumerate_faces(mesh))
    if (f.at_boundary())
      CHECK(f.exterior_face_number == f.interior_face_number);

  // Periodic wrap: the low-side cell is the interior side with its low face.
  const auto pmesh = make_box_mesh(2, 3, 0.0, true);
  int n_wrap = 0;
  for (const auto &f : enumerate_faces(pmesh))
    {
      const auto mi = pmesh.cell_multi_index(static_cast<int>(f.interior_cell));
      const auto me = pmesh.cell_multi_index(static_cast<int>(f.exterior_cell));
      const int a = f.axis();
      if (std::abs(mi[a] - me[a]) != 1) // wrap-around face
        {
          ++n_wrap;
          CHECK(mi[a] == 0);
          CHECK(me[a] == pmesh.cells_per_dim[a] - 1);
          CHECK(f.interior_face_number == 2 * a);
          CHECK(f.exterior_face_number == 2 * a + 1);
        }
    }
  CHECK(n_wrap == 6);

  // Single periodic cell: both sides are the same cell.
  const auto one = make_box_mesh(2, 1, 0.0, true);
  const auto ofaces = enumerate_faces(one);
  CHECK(ofaces.size() == 2);
  for (const auto &f : ofaces)
    {
      CHECK(f.interior_cell == 0);
      CHECK(f.exterior_cell == 0);
      CHECK(f.interior_face_number == 2 * f.axis());
      CHECK(f.exterior_face_number == 2 * f.axis() + 1);
    }
}

TEST_CASE("every interior face appears exactly once")
{
  for (bool periodic : {false, true})
    {
      const auto mesh = make_box_mesh(3, 3, 0.0, periodic);
      const auto faces = enumerate_faces(mesh);
      std::set<std::pair<std::pair<int, int>, std::pair<int, int>>> seen;
      for (const auto &f : faces)
        {
          auto key = std::make_pair(
            std::make_pair(static_cast<int>(f.interior_cell),
                           static_cast<int>(f.interior_face_number)),
            std::make_pair(static_cast<int>(f.exterior_cell),
                           static_cast<int>(f.exterior_face_number)));
          CHECK(seen.insert(key).second);
        }
      // Each cell sees each of its 2d faces exactly once across the list.
      std::map<std::pair<int, int>, int> cell_face_count;
      for (const auto &f : faces)
        {
          ++cell_face_count[{static_cast<int>(f.interior_cell),
                             static_cast<int>(f.interior_face_number)}];
          if (!f.at_boundary())
            ++cell_face_count[{static_cast<int>(f.exterior_cell),
                               static_cast<int>(f.exterior_face_number)}];
        }
      CHECK(cell_face_count.size() ==
            static_cast<std::size_t>(mesh.n_cells() * 6));
      for (const auto &[key, n] : cell_face_count)
        CHECK(n == 1);
    }
}

TEST_CASE("cell partitioning into contiguous slabs")
{
  auto mesh = build_mesh(2, {17, 1, 1}, {0, 0, 0}, {17, 1, 1}, 0.0, 1, {});
  const auto part = partition_cells(mesh, 4);
  CHECK(part.n_ranks == 4);
  CHECK(part.n_owned_cells(0) == 5);
  CHECK(part.n_owned_cells(1) == 4);
  CHECK(part.n_owned_cells(2) == 4);
  CHECK(part.n_owned_cells(3) == 4);
  CHECK(part.rank_cell_range[0] == std::make_pair(0, 5));
  CHECK(part.rank_cell_range[3] == std::make_pair(13, 17));
  for (int c = 0; c < 17; ++c)
    {
      const int r = part.cell_owner[c];
      CHECK(c >= part.rank_cell_range[r].first);
      CHECK(c < part.rank_cell_range[r].second);
    }

  const auto single = partition_cells(make_box_mesh(2, 4, 0.0, false), 1);
  CHECK(single.n_owned_cells(0) == 16);
}

TEST_CASE("face owners: single rank owns everything")
{
  const auto mesh = make_box_mesh(2, 4, 0.0, true);
  const auto faces = enumerate_faces(mesh);
  auto part = partition_cells(mesh, 1);
  assign_face_owners(mesh, faces, part);
  REQUIRE(part.face_owner.size() == faces.size());
  for (int o : part.face_owner)
    CHECK(o == 0);
}

TEST_CASE("face owners: interior faces stay on their rank")
{
  for (int d : {2, 3})
    for (bool periodic : {false, true})
      for (int n_ranks : {2, 3, 4})
        {
          const auto mesh = make_box_mesh(d, 4, 0.0, periodic);
          const auto faces = enumerate_faces(mesh);
          auto part = partition_cells(mesh, n_ranks);
          assign_face_owners(mesh, faces, part);

          std::map<std::pair<int, int>, int> balance;
          for (std::size_t i = 0; i < faces.size(); ++i)
            {
              const auto &f = faces[i];
              const int owner = part.face_owner[i];
              const int ri = part.cell_owner[f.interior_cell];
              if (f.at_boundary())
                {
                  CHECK(owner == ri);
                  continue;
                }
              const int re = part.cell_owner[f.exterior_cell];
              if (ri == re)
                CHECK(owner == ri);
              else
                {
                  CHECK((owner == ri || owner == re));
                  const auto key = std::minmax(ri, re);
                  balance[{key.first, key.second}] +=
                    owner == key.first ? 1 : -1;
                }
            }
          for (const auto &[pair, diff] : balance)
            CHECK(std::abs(diff) <= 2 * d);
        }
}

TEST_CASE("face owners: multiply-shared cells are computed remotely")
{
  // On a long thin strip every interface cell touches only one interface
  // face, so the split alternates; with 2D slabs of width 4, cut cells touch
  // one face each as well. Build a case with a genuinely multiply-shared
  // cell: 2 ranks on a 4x4 periodic mesh puts the cut through rows, and with
  // slab partitioning the cells at the cut see exactly one interface face
  // each, so construct a 2x2x2 mesh with 2 ranks where the four cells of
  // rank 0's upper layer each touch one face but the periodic wrap doubles
  // them.
  const auto mesh = make_box_mesh(3, 2, 0.0, true);
  const auto faces = enumerate_faces(mesh);
  auto part = partition_cells(mesh, 2);
  assign_face_owners(mesh, faces, part);

  // Count interface faces per (cell, rank side): every cell on the interface
  // has multiplicity 2 here (direct neighbor plus periodic wrap), so the
  // grouping rule applies to all of them and each cell's faces land on a
  // single opposite rank.
  std::map<int, std::set<int>> owners_per_cell;
  for (std::size_t i = 0; i < faces.size(); ++i)
    {
      const auto &f = faces[i];
      if (f.at_boundary())
        continue;
      const int ri = part.cell_owner[f.interior_cell];
      const int re = part.cell_owner[f.exterior_cell];
      if (ri == re)
        continue;
      owners_per_cell[f.interior_cell].insert(part.face_owner[i]);
      owners_per_cell[f.exterior_cell].insert(part.face_owner[i]);
    }
  for (const auto &[cell, owners] : owners_per_cell)
    {
      // All interface faces touching one multiply-shared cell are computed
      // by a single rank, so the cell's data crosses the wire only once.
      CHECK(owners.size() == 1);
    }
}
