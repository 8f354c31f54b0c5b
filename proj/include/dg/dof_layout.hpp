#pragma once

#include <dg/basis.hpp>
#include <dg/lane_batch.hpp>
#include <dg/mesh.hpp>

#include <algorithm>
#include <array>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace dg
{

inline constexpr int max_lanes = 8;

// How the W vector-value addresses of one entity (cell batch or one side of
// a face batch) are encoded, from cheapest to most general:
//   contiguous: each lane reads a contiguous block of dofs_per_cell values
//     (stride 1), lane starts arbitrary.
//   interleaved_contiguous: lane L, dof j at start + j*W + L; one contiguous
//     block for the whole batch.
//   interleaved_contiguous_strided: dof stride W for every lane, lane starts
//     arbitrary.
//   interleaved_contiguous_mixed_strides: per-lane start and stride arrays.
//   full: an explicit index per (dof, lane).
enum class IndexVariant : std::uint8_t
{
  contiguous,
  interleaved_contiguous,
  interleaved_contiguous_strided,
  interleaved_contiguous_mixed_strides,
  full
};

const char *to_string(IndexVariant v);

// Vector addressing of one entity. The explicit per-dof index list `full` is
// always populated and serves as the reference the compressed variants are
// checked against. Unfilled lanes replicate lane 0 for address safety; they
// are never written back.
struct EntityIndexInfo
{
  IndexVariant variant = IndexVariant::full;
  std::array<std::uint32_t, max_lanes> starts{};
  std::array<std::uint32_t, max_lanes> strides{};
  int n_lanes_filled = 0;
  bool touches_ghosts = false;
  std::vector<std::uint32_t> full; // dofs_per_cell * W, lane-major per dof

  std::uint32_t index(long long dof, int lane, int W) const
  {
    return full[dof * W + lane];
  }
};

// W faces with identical structural data merged into one lane batch. Cell
// numbers are kept as in the input face list; unfilled lanes carry the
// sentinel value.
struct FaceInfoBatch
{
  std::array<std::uint32_t, max_lanes> interior_cell_numbers;
  std::array<std::uint32_t, max_lanes> exterior_cell_numbers;
  std::uint8_t interior_face_number = 0;
  std::uint8_t exterior_face_number = 0;
  std::uint8_t subface_index = 255;
  std::uint8_t face_orientations = 0;
  int n_lanes_filled = 0;
  std::vector<std::uint32_t> face_ids; // positions in the input face list

  bool at_boundary() const
  {
    return exterior_cell_numbers[0] == invalid_cell;
  }
};

// State of the ghost region of a vector: clean (ghost values meaningless),
// ghosts_valid (ghost entries mirror the owning rank's values, reading
// allowed), has_remote_contributions (ghost entries hold partial integrals
// that still must be accumulated on the owning rank).
enum class VectorState : std::uint8_t
{
  clean,
  ghosts_valid,
  has_remote_contributions
};

struct GhostedVector
{
  std::vector<double> data; // owned values followed by the ghost region
  long long n_owned = 0;
  VectorState state = VectorState::clean;

  long long size() const { return n_owned; } // solver-facing length
  double *owned() { return data.data(); }
  const double *owned() const { return data.data(); }

  void zero_ghosts()
  {
    std::fill(data.begin() + n_owned, data.end(), 0.0);
  }
};

// Rank-local degree-of-freedom layout: owned cells grouped into lane
// batches with the dof index interleaved lane-major inside a batch, ghost
// cells appended contiguously in ascending (owner rank, remote index) order,
// and the face batches this rank computes together with the classified
// vector addressing of every entity.
struct DoFLayout
{
  int d = 0;
  int k = 0;
  int W = 1;
  int rank = 0;
  long long dofs_per_cell = 0;

  std::uint32_t owned_cell_begin = 0; // global id of the first owned cell
  std::uint32_t n_owned_cells = 0;
  int n_cell_batches = 0;
  std::vector<std::uint32_t> ghost_global_cells; // ascending
  std::vector<int> ghost_owner;

  long long owned_size = 0;
  long long total_size = 0;

  std::vector<EntityIndexInfo> cell_info; // one per cell batch

  std::vector<FaceInfoBatch> interior_face_batches;
  std::vector<FaceInfoBatch> boundary_face_batches;
  // Addressing of side 0 (interior) and side 1 (exterior) per interior face
  // batch, and of the single cell side per boundary face batch.
  std::vector<std::array<EntityIndexInfo, 2>> interior_face_info;
  std::vector<EntityIndexInfo> boundary_face_info;

  // Rank-local cell number of a global cell: owned cells first, ghost slots
  // after; invalid_cell if the cell is not present on this rank.
  std::uint32_t local_cell(std::uint32_t global) const;

  // First vector index and dof-to-dof stride of a rank-local cell.
  std::uint32_t cell_storage_start(std::uint32_t local) const;
  std::uint32_t cell_storage_stride(std::uint32_t local) const;
  int cell_batch_lanes(int batch) const
  {
    return cell_info[batch].n_lanes_filled;
  }

  GhostedVector make_vector() const
  {
    GhostedVector v;
    v.data.assign(total_size, 0.0);
    v.n_owned = owned_size;
    return v;
  }
};

DoFLayout build_dof_layout(const Mesh &mesh, const Partition &partition,
                           const std::vector<RawFace> &faces, int rank, int k,
                           int W);

// Deterministic face batching: stable sort by (interior face number,
// exterior face number, subface, orientation), then fill batches of W in
// order. Boundary and interior faces are never mixed into one batch.
std::vector<FaceInfoBatch> batch_faces(const std::vector<RawFace> &faces,
                                       const std::vector<std::uint32_t> &ids,
                                       int W);

// Derives the compressed addressing of the given cells (one per lane) from
// the layout's storage map and classifies it. Cells must be present on the
// rank.
EntityIndexInfo classify_index_storage(const DoFLayout &layout,
                                       const std::uint32_t *global_cells,
                                       int n_lanes);

namespace detail
{
inline void check_ghost_read(const GhostedVector &v,
                             const EntityIndexInfo &info)
{
  if (info.touches_ghosts && v.state != VectorState::ghosts_valid)
    throw std::logic_error(
      "gather: reading ghost values without a preceding ghost update");
}
} // namespace detail

// Reads the dofs_per_cell values of each lane into lane batches. Unfilled
// lanes replicate lane 0.
template <int W>
void gather_cell(const DoFLayout &layout, const GhostedVector &v,
                 const EntityIndexInfo &info, LaneBatch<W> *out)
{
  detail::check_ghost_read(v, info);
  const long long n = layout.dofs_per_cell;
  const double *x = v.data.data();
  switch (info.variant)
    {
    case IndexVariant::interleaved_contiguous:
      {
        const double *base = x + info.starts[0];
        for (long long j = 0; j < n; ++j)
          for (int l = 0; l < W; ++l)
            out[j][l] = base[j * W + l];
        break;
      }
    case IndexVariant::contiguous:
    case IndexVariant::interleaved_contiguous_strided:
    case IndexVariant::interleaved_contiguous_mixed_strides:
      for (int l = 0; l < W; ++l)
        {
          const double *base = x + info.starts[l];
          const std::uint32_t s = info.strides[l];
          for (long long j = 0; j < n; ++j)
            out[j][l] = base[j * s];
        }
      break;
    case IndexVariant::full:
      for (long long j = 0; j < n; ++j)
        for (int l = 0; l < W; ++l)
          out[j][l] = x[info.full[j * W + l]];
      break;
    }
}

// Writes the lane batches back, either overwriting (cell integrals) or
// accumulating (face integrals). Only the filled lanes are written.
template <int W>
void scatter_cell(const DoFLayout &layout, const EntityIndexInfo &info,
                  const LaneBatch<W> *in, bool add, GhostedVector &v)
{
  const long long n = layout.dofs_per_cell;
  const int nl = info.n_lanes_filled;
  double *x = v.data.data();
  if (info.variant == IndexVariant::interleaved_contiguous && nl == W)
    {
      double *base = x + info.starts[0];
      if (add)
        for (long long j = 0; j < n; ++j)
          for (int l = 0; l < W; ++l)
            base[j * W + l] += in[j][l];
      else
        for (long long j = 0; j < n; ++j)
          for (int l = 0; l < W; ++l)
            base[j * W + l] = in[j][l];
      return;
    }
  for (int l = 0; l < nl; ++l)
    {
      if (info.variant == IndexVariant::full)
        {
          for (long long j = 0; j < n; ++j)
            if (add)
              x[info.full[j * W + l]] += in[j][l];
            else
              x[info.full[j * W + l]] = in[j][l];
          continue;
        }
      double *base = x + info.starts[l];
      const std::uint32_t s = info.strides[l];
      for (long long j = 0; j < n; ++j)
        if (add)
          base[j * s] += in[j][l];
        else
          base[j * s] = in[j][l];
    }
}

namespace detail
{
long long ipowll(int base, int exp);

// Linear cell-local index of a dof on face layer `layer` (coordinate along
// the face-normal axis) with face-lexicographic index f over the remaining
// axes.
inline long long face_dof_index(int d, int k, int axis, int layer,
                                long long f)
{
  long long inner = 1;
  for (int a = 0; a < axis; ++a)
    inner *= k;
  const long long low = f % inner, high = f / inner;
  return high * inner * k + layer * inner + low;
}
} // namespace detail

// Reads exactly the vector entries a face evaluation of the given basis
// class needs: one coefficient layer for bases nodal on faces (values only),
// two layers for Hermite-type bases (values and first derivatives), the full
// cell otherwise. The output holds the layers in ascending layer order, each
// as k^{d-1} face-lexicographic lane batches (the full cell for generic
// access). Returns the number of vector values read per lane.
template <int W>
long long read_face_dofs(const DoFLayout &layout, const GhostedVector &v,
                         const EntityIndexInfo &info, int face_number,
                         FaceAccess access, int highest_derivative,
                         LaneBatch<W> *out)
{
  detail::check_ghost_read(v, info);
  const int d = layout.d, k = layout.k;
  const int axis = face_number / 2, side = face_number % 2;

  int n_layers;
  if (access == FaceAccess::nodal_on_faces && highest_derivative == 0)
    n_layers = 1;
  else if (access == FaceAccess::hermite_type_basis && highest_derivative <= 1)
    n_layers = 2;
  else
    {
      gather_cell(layout, v, info, out);
      return layout.dofs_per_cell;
    }

  const long long nf = detail::ipowll(k, d - 1);
  const double *x = v.data.data();
  for (int layer = 0; layer < n_layers; ++layer)
    {
      const int jn = side == 0 ? layer : k - n_layers + layer;
      for (long long f = 0; f < nf; ++f)
        {
          const long long jj = detail::face_dof_index(d, k, axis, jn, f);
          LaneBatch<W> &o = out[layer * nf + f];
          if (info.variant == IndexVariant::full)
            for (int l = 0; l < W; ++l)
              o[l] = x[info.full[jj * W + l]];
          else
            for (int l = 0; l < W; ++l)
              o[l] = x[info.starts[l] + jj * info.strides[l]];
        }
    }
  return n_layers * nf;
}

// Adjoint of read_face_dofs for the reduced-access bases: accumulates the
// given face layers back into the vector. Only filled lanes are written.
template <int W>
void distribute_face_dofs(const DoFLayout &layout, const EntityIndexInfo &info,
                          int face_number, FaceAccess access,
                          int highest_derivative, const LaneBatch<W> *in,
                          GhostedVector &v)
{
  const int d = layout.d, k = layout.k;
  const int axis = face_number / 2, side = face_number % 2;
  const int nl = info.n_lanes_filled;

  int n_layers;
  if (access == FaceAccess::nodal_on_faces && highest_derivative == 0)
    n_layers = 1;
  else if (access == FaceAccess::hermite_type_basis && highest_derivative <= 1)
    n_layers = 2;
  else
    {
      scatter_cell(layout, info, in, true, v);
      return;
    }

  const long long nf = detail::ipowll(k, d - 1);
  double *x = v.data.data();
  for (int layer = 0; layer < n_layers; ++layer)
    {
      const int jn = side == 0 ? layer : k - n_layers + layer;
      for (long long f = 0; f < nf; ++f)
        {
          const long long jj = detail::face_dof_index(d, k, axis, jn, f);
          const LaneBatch<W> &val = in[layer * nf + f];
          if (info.variant == IndexVariant::full)
            for (int l = 0; l < nl; ++l)
              x[info.full[jj * W + l]] += val[l];
          else
            for (int l = 0; l < nl; ++l)
              x[info.starts[l] + jj * info.strides[l]] += val[l];
        }
    }
}

} // namespace dg
