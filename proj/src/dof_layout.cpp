#include <dg/dof_layout.hpp>

#include <algorithm>
#include <tuple>

namespace dg
{

const char *to_string(IndexVariant v)
{
  switch (v)
    {
    case IndexVariant::contiguous:
      return "contiguous";
    case IndexVariant::interleaved_contiguous:
      return "interleaved_contiguous";
    case IndexVariant::interleaved_contiguous_strided:
      return "interleaved_contiguous_strided";
    case IndexVariant::interleaved_contiguous_mixed_strides:
      return "interleaved_contiguous_mixed_strides";
    case IndexVariant::full:
      return "full";
    }
  return "?";
}

namespace detail
{
long long ipowll(int base, int exp)
{
  long long r = 1;
  for (int i = 0; i < exp; ++i)
    r *= base;
  return r;
}
} // namespace detail

std::uint32_t DoFLayout::local_cell(std::uint32_t global) const
{
  if (global >= owned_cell_begin && global < owned_cell_begin + n_owned_cells)
    return global - owned_cell_begin;
  const auto it = std::lower_bound(ghost_global_cells.begin(),
                                   ghost_global_cells.end(), global);
  if (it == ghost_global_cells.end() || *it != global)
    return invalid_cell;
  return n_owned_cells +
         static_cast<std::uint32_t>(it - ghost_global_cells.begin());
}

std::uint32_t DoFLayout::cell_storage_start(std::uint32_t local) const
{
  if (local >= n_owned_cells) // ghost slot, stored contiguously
    return static_cast<std::uint32_t>(owned_size +
                                      (local - n_owned_cells) * dofs_per_cell);
  const std::uint32_t b = local / W, l = local % W;
  return static_cast<std::uint32_t>(b * W * dofs_per_cell + l);
}

std::uint32_t DoFLayout::cell_storage_stride(std::uint32_t local) const
{
  if (local >= n_owned_cells)
    return 1;
  const std::uint32_t b = local / W;
  return static_cast<std::uint32_t>(cell_info[b].n_lanes_filled);
}

std::vector<FaceInfoBatch> batch_faces(const std::vector<RawFace> &faces,
                                       const std::vector<std::uint32_t> &ids,
                                       int W)
{
  if (W < 1 || W > max_lanes)
    throw std::invalid_argument("batch_faces: unsupported lane count");

  std::vector<std::uint32_t> order = ids;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::uint32_t a, std::uint32_t b) {
                     const RawFace &fa = faces[a], &fb = faces[b];
                     return std::make_tuple(fa.at_boundary(),
                                            fa.interior_face_number,
                                            fa.exterior_face_number,
                                            fa.subface_index,
                                            fa.face_orientation) <
                            std::make_tuple(fb.at_boundary(),
                                            fb.interior_face_number,
                                            fb.exterior_face_number,
                                            fb.subface_index,
                                            fb.face_orientation);
                   });

  std::vector<FaceInfoBatch> batches;
  for (std::uint32_t id : order)
    {
      const RawFace &f = faces[id];
      const bool open =
        !batches.empty() && batches.back().n_lanes_filled < W &&
        batches.back().at_boundary() == f.at_boundary() &&
        batches.back().interior_face_number == f.interior_face_number &&
        batches.back().exterior_face_number == f.exterior_face_number &&
        batches.back().subface_index == f.subface_index &&
        batches.back().face_orientations == f.face_orientation;
      if (!open)
        {
          FaceInfoBatch b;
          b.interior_cell_numbers.fill(invalid_cell);
          b.exterior_cell_numbers.fill(invalid_cell);
          b.interior_face_number = f.interior_face_number;
          b.exterior_face_number = f.exterior_face_number;
          b.subface_index = f.subface_index;
          b.face_orientations = f.face_orientation;
          batches.push_back(std::move(b));
        }
      FaceInfoBatch &b = batches.back();
      b.interior_cell_numbers[b.n_lanes_filled] = f.interior_cell;
      b.exterior_cell_numbers[b.n_lanes_filled] =
        f.at_boundary() ? invalid_cell : f.exterior_cell;
      b.face_ids.push_back(id);
      ++b.n_lanes_filled;
    }
  return batches;
}

EntityIndexInfo classify_index_storage(const DoFLayout &layout,
                                       const std::uint32_t *global_cells,
                                       int n_lanes)
{
  const int W = layout.W;
  EntityIndexInfo info;
  info.n_lanes_filled = n_lanes;
  for (int l = 0; l < W; ++l)
    {
      // Unfilled lanes replicate lane 0's addresses as dummies.
      const std::uint32_t global = global_cells[l < n_lanes ? l : 0];
      const std::uint32_t local = layout.local_cell(global);
      if (local == invalid_cell)
        throw std::logic_error(
          "classify_index_storage: cell not present on this rank");
      info.starts[l] = layout.cell_storage_start(local);
      info.strides[l] = layout.cell_storage_stride(local);
      if (l < n_lanes && info.starts[l] >= layout.owned_size)
        info.touches_ghosts = true;
    }

  bool all_unit = true, all_w = true, uniform = true, lane_major = true;
  for (int l = 0; l < n_lanes; ++l)
    {
      all_unit &= info.strides[l] == 1;
      all_w &= info.strides[l] == static_cast<std::uint32_t>(W);
      uniform &= info.strides[l] == info.strides[0];
      lane_major &= info.starts[l] == info.starts[0] + l;
    }
  // The fully interleaved fast path reads the batch as one solid block of
  // dofs_per_cell * W values, so it requires every lane to be filled.
  if (all_unit)
    info.variant = IndexVariant::contiguous;
  else if (all_w && lane_major && n_lanes == W)
    info.variant = IndexVariant::interleaved_contiguous;
  else if (uniform)
    info.variant = IndexVariant::interleaved_contiguous_strided;
  else
    info.variant = IndexVariant::interleaved_contiguous_mixed_strides;

  info.full.resize(layout.dofs_per_cell * W);
  for (long long j = 0; j < layout.dofs_per_cell; ++j)
    for (int l = 0; l < W; ++l)
      info.full[j * W + l] =
        info.starts[l] + static_cast<std::uint32_t>(j) * info.strides[l];
  return info;
}

DoFLayout build_dof_layout(const Mesh &mesh, const Partition &partition,
                           const std::vector<RawFace> &faces, int rank, int k,
                           int W)
{
  if (W < 1 || W > max_lanes)
    throw std::invalid_argument("build_dof_layout: unsupported lane count");
  if (rank < 0 || rank >= partition.n_ranks)
    throw std::invalid_argument("build_dof_layout: rank out of range");

  DoFLayout layout;
  layout.d = mesh.d;
  layout.k = k;
  layout.W = W;
  layout.rank = rank;
  layout.dofs_per_cell = detail::ipowll(k, mesh.d);
  layout.owned_cell_begin = partition.rank_cell_range[rank].first;
  layout.n_owned_cells = partition.n_owned_cells(rank);
  layout.n_cell_batches =
    (layout.n_owned_cells + W - 1) / W;
  layout.owned_size = layout.n_owned_cells * layout.dofs_per_cell;

  // Ghosts: every non-owned cell referenced by a face this rank computes,
  // in ascending (owner rank, remote index) order. With contiguous slab
  // ownership that order coincides with ascending global cell ids.
  std::vector<std::uint32_t> my_face_ids;
  std::vector<std::uint32_t> ghosts;
  for (std::uint32_t i = 0; i < faces.size(); ++i)
    {
      if (partition.face_owner[i] != rank)
        continue;
      my_face_ids.push_back(i);
      const RawFace &f = faces[i];
      for (std::uint32_t c : {f.interior_cell, f.exterior_cell})
        if (c != invalid_cell && partition.cell_owner[c] != rank)
          ghosts.push_back(c);
    }
  std::sort(ghosts.begin(), ghosts.end());
  ghosts.erase(std::unique(ghosts.begin(), ghosts.end()), ghosts.end());
  layout.ghost_global_cells = ghosts;
  for (std::uint32_t c : ghosts)
    layout.ghost_owner.push_back(partition.cell_owner[c]);
  layout.total_size =
    layout.owned_size +
    static_cast<long long>(ghosts.size()) * layout.dofs_per_cell;

  // Cell batch addressing. The n_lanes_filled of the batch must be set
  // before classification because the storage stride of a partially filled
  // batch is its fill count.
  layout.cell_info.resize(layout.n_cell_batches);
  for (int b = 0; b < layout.n_cell_batches; ++b)
    layout.cell_info[b].n_lanes_filled =
      std::min<int>(W, layout.n_owned_cells - b * W);
  for (int b = 0; b < layout.n_cell_batches; ++b)
    {
      std::array<std::uint32_t, max_lanes> cells;
      const int nl = layout.cell_info[b].n_lanes_filled;
      for (int l = 0; l < nl; ++l)
        cells[l] = layout.owned_cell_begin + b * W + l;
      layout.cell_info[b] = classify_index_storage(layout, cells.data(), nl);
    }

  // Face batches and their addressing.
  auto batches = batch_faces(faces, my_face_ids, W);
  for (auto &b : batches)
    {
      if (b.at_boundary())
        {
          layout.boundary_face_info.push_back(classify_index_storage(
            layout, b.interior_cell_numbers.data(), b.n_lanes_filled));
          layout.boundary_face_batches.push_back(std::move(b));
        }
      else
        {
          std::array<EntityIndexInfo, 2> sides{
            classify_index_storage(layout, b.interior_cell_numbers.data(),
                                   b.n_lanes_filled),
            classify_index_storage(layout, b.exterior_cell_numbers.data(),
                                   b.n_lanes_filled)};
          layout.interior_face_info.push_back(std::move(sides));
          layout.interior_face_batches.push_back(std::move(b));
        }
    }
  return layout;
}

} // namespace dg
