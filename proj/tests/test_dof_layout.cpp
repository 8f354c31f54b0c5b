#include <dg/dof_layout.hpp>
#include <dg/tensor_kernels.hpp>

#include <doctest.h>

#include "test_helpers.hpp"

#include <numeric>
#include <set>
#include <stdexcept>

using namespace dg;
using dg_test::max_abs_diff;
using dg_test::random_vector;

namespace
{

DoFLayout square_layout(int n_per_dim, int k, int W, int n_ranks = 1,
                        int rank = 0, bool periodic = false)
{
  const auto mesh = make_box_mesh(2, n_per_dim, 0.0, periodic);
  const auto faces = enumerate_faces(mesh);
  auto part = partition_cells(mesh, n_ranks);
  assign_face_owners(mesh, faces, part);
  return build_dof_layout(mesh, part, faces, rank, k, W);
}

} // namespace

TEST_CASE("interleaved numbering over lane batches")
{
  // 4x4 cells, p=3, W=4: within a batch the dof index runs lane-major.
  const auto layout = square_layout(4, 4, 4);
  CHECK(layout.dofs_per_cell == 16);
  CHECK(layout.n_cell_batches == 4);
  CHECK(layout.owned_size == 256);

  auto index = [&](std::uint32_t cell, long long dof) {
    return layout.cell_storage_start(cell) +
           dof * layout.cell_storage_stride(cell);
  };
  CHECK(index(0, 0) == 0);
  CHECK(index(1, 0) == 1);
  CHECK(index(2, 0) == 2);
  CHECK(index(3, 0) == 3);
  CHECK(index(0, 1) == 4);
  CHECK(index(4, 0) == 64);

  for (const auto &info : layout.cell_info)
    {
      CHECK(info.variant == IndexVariant::interleaved_contiguous);
      CHECK(info.n_lanes_filled == 4);
    }
}

TEST_CASE("lane width one gives plain contiguous cell storage")
{
  const auto layout = square_layout(3, 3, 1);
  for (std::uint32_t c = 0; c < layout.n_owned_cells; ++c)
    {
      CHECK(layout.cell_storage_start(c) == c * layout.dofs_per_cell);
      CHECK(layout.cell_storage_stride(c) == 1);
    }
  for (const auto &info : layout.cell_info)
    CHECK(info.variant == IndexVariant::contiguous);
}

TEST_CASE("partially filled trailing cell batch")
{
  // 6 owned cells, W=4: two batches, the second with two lanes, stored
  // compactly with the fill count as dof stride.
  const auto mesh = build_mesh(2, {3, 2, 1}, {0, 0, 0}, {3, 2, 1}, 0.0, 1, {});
  const auto faces = enumerate_faces(mesh);
  auto part = partition_cells(mesh, 1);
  assign_face_owners(mesh, faces, part);
  const auto layout = build_dof_layout(mesh, part, faces, 0, 3, 4);

  CHECK(layout.n_cell_batches == 2);
  CHECK(layout.cell_batch_lanes(0) == 4);
  CHECK(layout.cell_batch_lanes(1) == 2);
  CHECK(layout.owned_size == 6 * 9);
  CHECK(layout.cell_storage_start(4) == 4 * 9);
  CHECK(layout.cell_storage_stride(4) == 2);
  CHECK(layout.cell_storage_start(5) == 4 * 9 + 1);

  // The dof indices of all owned cells are a bijection onto the owned range.
  std::set<std::uint32_t> seen;
  for (std::uint32_t c = 0; c < layout.n_owned_cells; ++c)
    for (long long j = 0; j < layout.dofs_per_cell; ++j)
      seen.insert(layout.cell_storage_start(c) +
                  j * layout.cell_storage_stride(c));
  CHECK(seen.size() == static_cast<std::size_t>(layout.owned_size));
  CHECK(*seen.rbegin() == layout.owned_size - 1);
}

TEST_CASE("face batching by structural signature")
{
  // The worked example: four faces with identical face numbers on both
  // sides merge into one full batch.
  std::vector<RawFace> faces(4);
  const std::uint32_t interior[4] = {0, 1, 2, 3};
  const std::uint32_t exterior[4] = {1, 4, 3, 6};
  for (int i = 0; i < 4; ++i)
    {
      faces[i].interior_cell = interior[i];
      faces[i].exterior_cell = exterior[i];
      faces[i].interior_face_number = 1;
      faces[i].exterior_face_number = 0;
    }
  std::vector<std::uint32_t> ids(4);
  std::iota(ids.begin(), ids.end(), 0);
  auto batches = batch_faces(faces, ids, 4);
  REQUIRE(batches.size() == 1);
  CHECK(batches[0].n_lanes_filled == 4);
  for (int l = 0; l < 4; ++l)
    {
      CHECK(batches[0].interior_cell_numbers[l] == interior[l]);
      CHECK(batches[0].exterior_cell_numbers[l] == exterior[l]);
    }
  CHECK(batches[0].interior_face_number == 1);
  CHECK(batches[0].exterior_face_number == 0);
  CHECK(batches[0].subface_index == 255);

  // Two distinct interior face numbers force at least two batches.
  faces[2].interior_face_number = 3;
  batches = batch_faces(faces, ids, 4);
  CHECK(batches.size() == 2);

  // Five identical faces split 4 + 1.
  std::vector<RawFace> five(5);
  for (auto &f : five)
    {
      f.interior_cell = 0;
      f.exterior_cell = 1;
      f.interior_face_number = 1;
      f.exterior_face_number = 0;
    }
  std::vector<std::uint32_t> ids5(5);
  std::iota(ids5.begin(), ids5.end(), 0);
  batches = batch_faces(five, ids5, 4);
  REQUIRE(batches.size() == 2);
  CHECK(batches[0].n_lanes_filled == 4);
  CHECK(batches[1].n_lanes_filled == 1);
  // Sentinels trail in the partial batch.
  CHECK(batches[1].interior_cell_numbers[1] == invalid_cell);

  // Boundary and interior faces never share a batch.
  std::vector<RawFace> mixed(2);
  mixed[0].interior_cell = 0;
  mixed[0].exterior_cell = 1;
  mixed[0].interior_face_number = 1;
  mixed[0].exterior_face_number = 0;
  mixed[1].interior_cell = 2;
  mixed[1].exterior_cell = invalid_cell;
  mixed[1].interior_face_number = 1;
  mixed[1].exterior_face_number = 0; // boundary id
  std::vector<std::uint32_t> ids2 = {0, 1};
  batches = batch_faces(mixed, ids2, 4);
  CHECK(batches.size() == 2);
}

TEST_CASE("index storage classification of the worked face example")
{
  // 4x4 cells, p=3, W=4 as in the interleaved-numbering figure. The batch
  // pairs cells {0,1,2,3} with {1,4,3,6}.
  const auto layout = square_layout(4, 4, 4);
  const std::uint32_t interior[4] = {0, 1, 2, 3};
  const std::uint32_t exterior[4] = {1, 4, 3, 6};

  const auto info_i = classify_index_storage(layout, interior, 4);
  CHECK(info_i.variant == IndexVariant::interleaved_contiguous);
  CHECK(info_i.starts[0] == 0);
  CHECK(info_i.strides[0] == 4);

  const auto info_e = classify_index_storage(layout, exterior, 4);
  CHECK(info_e.variant == IndexVariant::interleaved_contiguous_strided);
  CHECK(info_e.starts[0] == 1);
  CHECK(info_e.starts[1] == 64);
  CHECK(info_e.starts[2] == 3);
  CHECK(info_e.starts[3] == 66);
  for (int l = 0; l < 4; ++l)
    CHECK(info_e.strides[l] == 4);
}

TEST_CASE("mixed strides from partial batches and ghost cells")
{
  // Six cells on one rank, W=4: the axis-0 interior faces pair cells of the
  // full first batch (stride 4) with cells of the partial second batch
  // (stride 2) on the same side.
  const auto mesh = build_mesh(2, {3, 2, 1}, {0, 0, 0}, {3, 2, 1}, 0.0, 1, {});
  const auto faces = enumerate_faces(mesh);
  auto part = partition_cells(mesh, 1);
  assign_face_owners(mesh, faces, part);
  const auto layout = build_dof_layout(mesh, part, faces, 0, 3, 4);

  bool found_mixed = false;
  for (const auto &sides : layout.interior_face_info)
    for (const auto &info : sides)
      if (info.variant == IndexVariant::interleaved_contiguous_mixed_strides)
        found_mixed = true;
  CHECK(found_mixed);

  // A side mixing an owned cell (interleaved storage) with a ghost cell
  // (contiguous slot) also needs per-lane strides.
  const auto layout2 = square_layout(4, 3, 4, 2, 0);
  REQUIRE(!layout2.ghost_global_cells.empty());
  const std::uint32_t cells[2] = {0, layout2.ghost_global_cells[0]};
  const auto info = classify_index_storage(layout2, cells, 2);
  CHECK(info.variant == IndexVariant::interleaved_contiguous_mixed_strides);
  CHECK(info.strides[0] == 4);
  CHECK(info.strides[1] == 1);
  CHECK(info.touches_ghosts);

  // A side made of ghost cells only reads contiguous per-lane blocks.
  if (layout2.ghost_global_cells.size() >= 2)
    {
      const std::uint32_t gcells[2] = {layout2.ghost_global_cells[0],
                                       layout2.ghost_global_cells[1]};
      const auto ginfo = classify_index_storage(layout2, gcells, 2);
      CHECK(ginfo.variant == IndexVariant::contiguous);
    }
}

TEST_CASE("ghost cells appended in ascending owner order")
{
  for (int rank : {0, 1, 2})
    {
      const auto layout = square_layout(4, 3, 4, 3, rank, true);
      for (std::size_t g = 1; g < layout.ghost_global_cells.size(); ++g)
        {
          CHECK(layout.ghost_owner[g] >= layout.ghost_owner[g - 1]);
          CHECK(layout.ghost_global_cells[g] >
                layout.ghost_global_cells[g - 1]);
        }
      for (std::size_t g = 0; g < layout.ghost_global_cells.size(); ++g)
        {
          CHECK(layout.ghost_owner[g] != rank);
          const std::uint32_t local = layout.local_cell(
            layout.ghost_global_cells[g]);
          CHECK(local == layout.n_owned_cells + g);
          CHECK(layout.cell_storage_stride(local) == 1);
          CHECK(layout.cell_storage_start(local) ==
                layout.owned_size + g * layout.dofs_per_cell);
        }
      CHECK(layout.local_cell(layout.owned_cell_begin) == 0);
    }
}

TEST_CASE("gather and scatter round trips")
{
  for (int W : {1, 4})
    for (int n_ranks : {1, 2})
      {
        const auto layout = square_layout(3, 3, W == 1 ? 1 : 4, n_ranks, 0);
        auto v = layout.make_vector();
        const auto ref = random_vector(layout.total_size, 11 * W + n_ranks);
        std::copy(ref.begin(), ref.end(), v.data.begin());
        v.state = VectorState::ghosts_valid;

        auto run = [&](auto wc) {
          constexpr int WW = decltype(wc)::value;
          std::vector<LaneBatch<WW>> buf(layout.dofs_per_cell);
          // Round trip over every entity: gather then scatter-set leaves
          // the vector bitwise unchanged.
          auto check_info = [&](const EntityIndexInfo &info) {
            gather_cell(layout, v, info, buf.data());
            // Fast path equals the always-present full index list.
            EntityIndexInfo as_full = info;
            as_full.variant = IndexVariant::full;
            std::vector<LaneBatch<WW>> buf2(layout.dofs_per_cell);
            gather_cell(layout, v, as_full, buf2.data());
            for (long long j = 0; j < layout.dofs_per_cell; ++j)
              for (int l = 0; l < WW; ++l)
                CHECK(buf[j][l] == buf2[j][l]);
            scatter_cell(layout, info, buf.data(), false, v);
            CHECK(v.data == ref);
          };
          for (const auto &info : layout.cell_info)
            check_info(info);
          for (const auto &sides : layout.interior_face_info)
            for (const auto &info : sides)
              check_info(info);
          for (const auto &info : layout.boundary_face_info)
            check_info(info);
        };
        if (W == 1)
          run(std::integral_constant<int, 1>{});
        else
          run(std::integral_constant<int, 4>{});
      }
}

TEST_CASE("scatter-add distributes over addition")
{
  const auto layout = square_layout(3, 3, 4, 2, 0);
  const auto a = random_vector(layout.dofs_per_cell * 4, 1);
  const auto b = random_vector(layout.dofs_per_cell * 4, 2);
  std::vector<LaneBatch<4>> la(layout.dofs_per_cell), lb(layout.dofs_per_cell),
    lab(layout.dofs_per_cell);
  for (long long j = 0; j < layout.dofs_per_cell; ++j)
    for (int l = 0; l < 4; ++l)
      {
        la[j][l] = a[j * 4 + l];
        lb[j][l] = b[j * 4 + l];
        lab[j][l] = a[j * 4 + l] + b[j * 4 + l];
      }

  for (const auto &sides : layout.interior_face_info)
    for (const auto &info : sides)
      {
        auto v1 = layout.make_vector();
        auto v2 = layout.make_vector();
        scatter_cell(layout, info, la.data(), true, v1);
        scatter_cell(layout, info, lb.data(), true, v1);
        scatter_cell(layout, info, lab.data(), true, v2);
        CHECK(max_abs_diff(v1.data, v2.data) < 1e-15);
      }
}

TEST_CASE("dummy lanes are excluded from scatter")
{
  const auto mesh = build_mesh(2, {3, 2, 1}, {0, 0, 0}, {3, 2, 1}, 0.0, 1, {});
  const auto faces = enumerate_faces(mesh);
  auto part = partition_cells(mesh, 1);
  assign_face_owners(mesh, faces, part);
  const auto layout = build_dof_layout(mesh, part, faces, 0, 3, 4);
  const auto &partial = layout.cell_info[1];
  REQUIRE(partial.n_lanes_filled == 2);

  auto v = layout.make_vector();
  std::vector<LaneBatch<4>> ones(layout.dofs_per_cell, LaneBatch<4>(1.0));
  scatter_cell(layout, partial, ones.data(), true, v);
  double sum = 0;
  for (double x : v.data)
    sum += x;
  // Only the two filled lanes may write.
  CHECK(sum == doctest::Approx(2.0 * layout.dofs_per_cell).epsilon(1e-14));
}

TEST_CASE("reading ghosts requires valid ghost values")
{
  const auto layout = square_layout(4, 3, 4, 2, 0);
  auto v = layout.make_vector();
  const EntityIndexInfo *ghost_info = nullptr;
  for (const auto &sides : layout.interior_face_info)
    for (const auto &info : sides)
      if (info.touches_ghosts)
        ghost_info = &info;
  REQUIRE(ghost_info != nullptr);

  std::vector<LaneBatch<4>> buf(layout.dofs_per_cell);
  CHECK_THROWS_AS(gather_cell(layout, v, *ghost_info, buf.data()),
                  std::logic_error);
  v.state = VectorState::ghosts_valid;
  CHECK_NOTHROW(gather_cell(layout, v, *ghost_info, buf.data()));
}

TEST_CASE("face dof reads touch only the required layers")
{
  const auto mesh = make_box_mesh(3, 2, 0.0, false);
  const auto faces = enumerate_faces(mesh);
  auto part = partition_cells(mesh, 1);
  assign_face_owners(mesh, faces, part);

  // Nodal-on-faces basis, values only: k^{d-1} reads per lane.
  {
    const int k = 4;
    const auto layout = build_dof_layout(mesh, part, faces, 0, k, 4);
    auto v = layout.make_vector();
    const auto ref = random_vector(layout.total_size, 3);
    std::copy(ref.begin(), ref.end(), v.data.begin());
    v.state = VectorState::ghosts_valid;

    const auto &batch = layout.interior_face_batches[0];
    const auto &info = layout.interior_face_info[0][0];
    std::vector<LaneBatch<4>> out(16);
    const long long n_read = read_face_dofs(
      layout, v, info, batch.interior_face_number,
      FaceAccess::nodal_on_faces, 0, out.data());
    CHECK(n_read == 16);

    // Equals the full gather followed by the face layer extraction.
    const auto basis = make_basis(BasisKind::lagrange_gauss_lobatto, k - 1);
    const auto sm = shape_matrices(basis, gauss_quadrature(k));
    std::vector<LaneBatch<4>> cell(layout.dofs_per_cell), face(16);
    gather_cell(layout, v, info, cell.data());
    const int fn = batch.interior_face_number;
    const auto support = basis.face_support(fn % 2, 0);
    face_normal_interpolation(3, fn / 2, true, k,
                              sm.Sf[fn % 2].data(), support.data(),
                              static_cast<int>(support.size()), false,
                              cell.data(), face.data(), nullptr);
    for (int i = 0; i < 16; ++i)
      for (int l = 0; l < 4; ++l)
        CHECK(out[i][l] == face[i][l]);
  }

  // Hermite-type basis, values and first derivative: 2 k^{d-1} reads.
  {
    const int k = 5;
    const auto layout = build_dof_layout(mesh, part, faces, 0, k, 4);
    auto v = layout.make_vector();
    const auto ref = random_vector(layout.total_size, 4);
    std::copy(ref.begin(), ref.end(), v.data.begin());
    v.state = VectorState::ghosts_valid;

    const auto &batch = layout.interior_face_batches[0];
    const auto &info = layout.interior_face_info[0][1];
    std::vector<LaneBatch<4>> out(2 * 25);
    const long long n_read = read_face_dofs(
      layout, v, info, batch.exterior_face_number,
      FaceAccess::hermite_type_basis, 1, out.data());
    CHECK(n_read == 50);

    // The two layers are the face-adjacent coefficient layers of the cell.
    std::vector<LaneBatch<4>> cell(layout.dofs_per_cell);
    gather_cell(layout, v, info, cell.data());
    const int fn = batch.exterior_face_number;
    const int axis = fn / 2;
    const auto basis = make_basis(BasisKind::hermite_like, k - 1);
    const auto support = basis.face_support(fn % 2, 1);
    for (int layer = 0; layer < 2; ++layer)
      for (long long f = 0; f < 25; ++f)
        {
          const long long jj =
            detail::face_dof_index(3, k, axis, support[layer], f);
          for (int l = 0; l < 4; ++l)
            CHECK(out[layer * 25 + f][l] == cell[jj][l]);
        }

    // Generic access degrades to the full cell.
    std::vector<LaneBatch<4>> full(layout.dofs_per_cell);
    const long long n_full = read_face_dofs(layout, v, info,
                                            batch.exterior_face_number,
                                            FaceAccess::generic, 1,
                                            full.data());
    CHECK(n_full == layout.dofs_per_cell);
    for (long long j = 0; j < layout.dofs_per_cell; ++j)
      for (int l = 0; l < 4; ++l)
        CHECK(full[j][l] == cell[j][l]);
  }
}

TEST_CASE("face dof distribution is the adjoint of the read")
{
  const auto mesh = make_box_mesh(3, 2, 0.0, false);
  const auto faces = enumerate_faces(mesh);
  auto part = partition_cells(mesh, 1);
  assign_face_owners(mesh, faces, part);
  const int k = 4;
  const auto layout = build_dof_layout(mesh, part, faces, 0, k, 4);
  const auto &batch = layout.interior_face_batches[0];
  const auto &info = layout.interior_face_info[0][0];
  const int fn = batch.interior_face_number;

  auto u = layout.make_vector();
  const auto uref = random_vector(layout.total_size, 7);
  std::copy(uref.begin(), uref.end(), u.data.begin());
  u.state = VectorState::ghosts_valid;

  const long long nf = 16;
  std::vector<LaneBatch<4>> t(nf), r(nf);
  const auto traw = random_vector(nf * 4, 8);
  for (long long i = 0; i < nf; ++i)
    for (int l = 0; l < 4; ++l)
      t[i][l] = traw[i * 4 + l];

  read_face_dofs(layout, u, info, fn, FaceAccess::nodal_on_faces, 0, r.data());
  auto w = layout.make_vector();
  distribute_face_dofs(layout, info, fn, FaceAccess::nodal_on_faces, 0,
                       t.data(), w);

  // The lanes write to disjoint cells, so the global inner products match.
  double lhs = 0, rhs = 0;
  for (long long i = 0; i < nf; ++i)
    for (int l = 0; l < 4; ++l)
      lhs += r[i][l] * t[i][l];
  for (long long i = 0; i < layout.total_size; ++i)
    rhs += w.data[i] * u.data[i];
  CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
}
