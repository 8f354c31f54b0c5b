#include <dg/ghost_exchange.hpp>

#include <algorithm>
#include <cstring>
#include <exception>
#include <map>
#include <stdexcept>
#include <thread>

namespace dg
{

GhostDataNeed ghost_need(OperatorKind kind)
{
  switch (kind)
    {
    case OperatorKind::advection:
      return GhostDataNeed::values;
    case OperatorKind::laplacian:
      return GhostDataNeed::values_and_first_derivatives;
    default:
      return GhostDataNeed::none;
    }
}

long long ExchangePlan::total_send_values() const
{
  long long n = 0;
  for (const NeighborPlan &p : send)
    n += p.n_values();
  return n;
}

long long ExchangePlan::total_recv_values() const
{
  long long n = 0;
  for (const NeighborPlan &p : recv)
    n += p.n_values();
  return n;
}

namespace
{

// Marks the cell-local dofs a face evaluation reads, mirroring the layer
// choice of read_face_dofs: one coefficient layer for bases nodal on faces
// when only values are needed, two layers for Hermite-type bases, the full
// cell otherwise.
void mark_face_dofs(int d, int k, int face_number, FaceAccess access,
                    GhostDataNeed need, std::vector<char> &mask)
{
  const int axis = face_number / 2, side = face_number % 2;
  int n_layers;
  if (access == FaceAccess::nodal_on_faces && need == GhostDataNeed::values)
    n_layers = 1;
  else if (access == FaceAccess::hermite_type_basis)
    n_layers = 2;
  else
    {
      std::fill(mask.begin(), mask.end(), 1);
      return;
    }

  const long long nf = detail::ipowll(k, d - 1);
  for (int layer = 0; layer < n_layers; ++layer)
    {
      const int jn = side == 0 ? layer : k - n_layers + layer;
      for (long long f = 0; f < nf; ++f)
        mask[detail::face_dof_index(d, k, axis, jn, f)] = 1;
    }
}

// Dof masks of the interface cells one rank sends to or receives from one
// neighbor, keyed by ascending global cell id.
using CellMasks = std::map<std::uint32_t, std::vector<char>>;

std::vector<NeighborPlan> finalize(std::map<int, CellMasks> &by_neighbor)
{
  std::vector<NeighborPlan> plans;
  for (auto &[neighbor, cells] : by_neighbor)
    {
      NeighborPlan p;
      p.neighbor = neighbor;
      p.dof_offsets.push_back(0);
      for (auto &[cell, mask] : cells)
        {
          p.cells.push_back(cell);
          for (std::size_t j = 0; j < mask.size(); ++j)
            if (mask[j])
              p.dofs.push_back(static_cast<std::uint32_t>(j));
          p.dof_offsets.push_back(static_cast<std::uint32_t>(p.dofs.size()));
        }
      plans.push_back(std::move(p));
    }
  return plans;
}

} // namespace

ExchangePlan build_exchange_plan(const DoFLayout &layout,
                                 const std::vector<RawFace> &faces,
                                 const Partition &partition,
                                 FaceAccess access, GhostDataNeed need)
{
  ExchangePlan plan;
  plan.rank = layout.rank;
  plan.need = need;
  if (need == GhostDataNeed::none)
    return plan;

  const int d = layout.d, k = layout.k;
  const long long dpc = layout.dofs_per_cell;
  std::map<int, CellMasks> send_masks, recv_masks;

  for (std::size_t fid = 0; fid < faces.size(); ++fid)
    {
      const RawFace &f = faces[fid];
      const int w = partition.face_owner[fid];
      const std::uint32_t cells[2] = {f.interior_cell, f.exterior_cell};
      const int fns[2] = {f.interior_face_number, f.exterior_face_number};
      for (int s = 0; s < (f.at_boundary() ? 1 : 2); ++s)
        {
          const std::uint32_t c = cells[s];
          const int o = partition.cell_owner[c];
          if (o == w)
            continue;
          CellMasks *dest = nullptr;
          if (o == layout.rank)
            dest = &send_masks[w];
          else if (w == layout.rank)
            dest = &recv_masks[o];
          if (!dest)
            continue;
          std::vector<char> &mask = (*dest)[c];
          if (mask.empty())
            mask.assign(static_cast<std::size_t>(dpc), 0);
          mark_face_dofs(d, k, fns[s], access, need, mask);
        }
    }

  plan.send = finalize(send_masks);
  plan.recv = finalize(recv_masks);
  return plan;
}

void MessageChannel::send(std::vector<std::uint8_t> message)
{
  {
    std::lock_guard<std::mutex> lock(mutex_);
    queue_.push_back(std::move(message));
  }
  cv_.notify_one();
}

std::vector<std::uint8_t> MessageChannel::receive()
{
  std::unique_lock<std::mutex> lock(mutex_);
  cv_.wait(lock, [&] { return !queue_.empty(); });
  std::vector<std::uint8_t> m = std::move(queue_.front());
  queue_.pop_front();
  return m;
}

TransportHub::TransportHub(int n_ranks)
  : n_ranks_(n_ranks),
    channels_(static_cast<std::size_t>(n_ranks) * n_ranks)
{
}

MessageChannel &TransportHub::channel(int from, int to)
{
  if (from < 0 || from >= n_ranks_ || to < 0 || to >= n_ranks_)
    throw std::out_of_range("channel: rank out of range");
  return channels_[static_cast<std::size_t>(from) * n_ranks_ + to];
}

namespace
{

void write_le_u64(std::uint8_t *p, std::uint64_t v)
{
  for (int i = 0; i < 8; ++i)
    p[i] = static_cast<std::uint8_t>(v >> (8 * i));
}

std::uint64_t read_le_u64(const std::uint8_t *p)
{
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i)
    v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

void write_le_double(std::uint8_t *p, double x)
{
  std::uint64_t bits;
  std::memcpy(&bits, &x, sizeof bits);
  write_le_u64(p, bits);
}

} // namespace

double read_le_double(const std::uint8_t *p)
{
  const std::uint64_t bits = read_le_u64(p);
  double x;
  std::memcpy(&x, &bits, sizeof x);
  return x;
}

std::vector<std::uint8_t> pack_message(int source_rank, MessageKind kind,
                                       const double *values, long long count)
{
  std::vector<std::uint8_t> m(24 + 8 * static_cast<std::size_t>(count));
  write_le_u64(m.data(), static_cast<std::uint64_t>(source_rank));
  write_le_u64(m.data() + 8, static_cast<std::uint64_t>(kind));
  write_le_u64(m.data() + 16, static_cast<std::uint64_t>(count));
  for (long long i = 0; i < count; ++i)
    write_le_double(m.data() + 24 + 8 * i, values[i]);
  return m;
}

void unpack_header(const std::vector<std::uint8_t> &message,
                   std::uint64_t &source_rank, MessageKind &kind,
                   std::uint64_t &count)
{
  if (message.size() < 24)
    throw std::runtime_error("unpack_header: truncated message");
  source_rank = read_le_u64(message.data());
  kind = static_cast<MessageKind>(read_le_u64(message.data() + 8));
  count = read_le_u64(message.data() + 16);
  if (message.size() != 24 + 8 * count)
    throw std::runtime_error("unpack_header: payload size mismatch");
}

const std::uint8_t *message_payload(const std::vector<std::uint8_t> &message)
{
  return message.data() + 24;
}

GhostExchanger::GhostExchanger(ExchangePlan plan, const DoFLayout *layout,
                               TransportHub *hub)
  : plan_(std::move(plan)), layout_(layout), hub_(hub)
{
}

namespace
{

// Values of one neighbor plan in ascending (cell, dof) order.
std::vector<double> pack_plan_values(const DoFLayout &layout,
                                     const GhostedVector &v,
                                     const NeighborPlan &p)
{
  std::vector<double> buf(static_cast<std::size_t>(p.n_values()));
  std::size_t i = 0;
  for (std::size_t c = 0; c < p.cells.size(); ++c)
    {
      const std::uint32_t lc = layout.local_cell(p.cells[c]);
      if (lc == invalid_cell)
        throw std::logic_error("exchange plan references an absent cell");
      const std::uint32_t start = layout.cell_storage_start(lc);
      const std::uint32_t stride = layout.cell_storage_stride(lc);
      for (std::uint32_t j = p.dof_offsets[c]; j < p.dof_offsets[c + 1]; ++j)
        buf[i++] = v.data[start + p.dofs[j] * stride];
    }
  return buf;
}

enum class UnpackMode
{
  overwrite,
  accumulate
};

void unpack_plan_values(const DoFLayout &layout, const NeighborPlan &p,
                        const std::uint8_t *payload, UnpackMode mode,
                        GhostedVector &v)
{
  std::size_t i = 0;
  for (std::size_t c = 0; c < p.cells.size(); ++c)
    {
      const std::uint32_t lc = layout.local_cell(p.cells[c]);
      const std::uint32_t start = layout.cell_storage_start(lc);
      const std::uint32_t stride = layout.cell_storage_stride(lc);
      for (std::uint32_t j = p.dof_offsets[c]; j < p.dof_offsets[c + 1]; ++j)
        {
          const double x = read_le_double(payload + 8 * i++);
          double &slot = v.data[start + p.dofs[j] * stride];
          if (mode == UnpackMode::overwrite)
            slot = x;
          else
            slot += x;
        }
    }
}

} // namespace

void GhostExchanger::start_update(GhostedVector &u)
{
  if (u.state == VectorState::ghosts_valid)
    throw std::logic_error(
      "update_ghost_values: ghosts are already valid; a second update "
      "without resetting the vector is a contract violation");
  if (u.state == VectorState::has_remote_contributions)
    throw std::logic_error(
      "update_ghost_values: vector holds uncompressed remote contributions");
  if (update_in_flight_)
    throw std::logic_error("update_ghost_values: update already in flight");

  for (const NeighborPlan &p : plan_.send)
    {
      const std::vector<double> buf = pack_plan_values(*layout_, u, p);
      hub_->channel(plan_.rank, p.neighbor)
        .send(pack_message(plan_.rank, MessageKind::ghost_values, buf.data(),
                           static_cast<long long>(buf.size())));
      values_sent_ += p.n_values();
    }
  update_in_flight_ = true;
  // Without incoming data the update is complete once the sends are posted;
  // finishing here keeps the state machine uniform for ranks whose ghost
  // region is empty.
  if (plan_.recv.empty())
    finish_update(u);
}

void GhostExchanger::finish_update(GhostedVector &u)
{
  if (!update_in_flight_)
    throw std::logic_error(
      "finish_ghost_update: no update was started on this vector");
  for (const NeighborPlan &p : plan_.recv)
    {
      const std::vector<std::uint8_t> m =
        hub_->channel(p.neighbor, plan_.rank).receive();
      std::uint64_t source, count;
      MessageKind kind;
      unpack_header(m, source, kind, count);
      if (static_cast<int>(source) != p.neighbor ||
          kind != MessageKind::ghost_values ||
          static_cast<long long>(count) != p.n_values())
        throw std::runtime_error(
          "finish_ghost_update: message does not match the exchange plan");
      unpack_plan_values(*layout_, p, message_payload(m),
                         UnpackMode::overwrite, u);
      values_received_ += p.n_values();
    }
  update_in_flight_ = false;
  u.state = VectorState::ghosts_valid;
}

void GhostExchanger::update_ghost_values(GhostedVector &u)
{
  start_update(u);
  finish_update(u);
}

void GhostExchanger::compress(GhostedVector &y)
{
  if (y.state == VectorState::ghosts_valid)
    throw std::logic_error(
      "compress: vector holds ghost mirrors, not remote contributions");

  // The ghost contributions travel along the reversed update routes: what
  // this rank received as ghost data goes back to its owner.
  for (const NeighborPlan &p : plan_.recv)
    {
      const std::vector<double> buf = pack_plan_values(*layout_, y, p);
      hub_->channel(plan_.rank, p.neighbor)
        .send(pack_message(plan_.rank, MessageKind::residual_contributions,
                           buf.data(), static_cast<long long>(buf.size())));
      values_sent_ += p.n_values();
    }

  // Accumulation visits the neighbors in ascending rank order; together
  // with the fixed (cell, dof) pack order this makes the sum deterministic
  // for a given partition.
  for (const NeighborPlan &p : plan_.send)
    {
      const std::vector<std::uint8_t> m =
        hub_->channel(p.neighbor, plan_.rank).receive();
      std::uint64_t source, count;
      MessageKind kind;
      unpack_header(m, source, kind, count);
      if (static_cast<int>(source) != p.neighbor ||
          kind != MessageKind::residual_contributions ||
          static_cast<long long>(count) != p.n_values())
        throw std::runtime_error(
          "compress: message does not match the exchange plan");
      unpack_plan_values(*layout_, p, message_payload(m),
                         UnpackMode::accumulate, y);
      values_received_ += p.n_values();
    }

  y.zero_ghosts();
  y.state = VectorState::clean;
}

ExchangeHooks GhostExchanger::hooks()
{
  ExchangeHooks h;
  h.start_ghost_update = [this](GhostedVector &u) { start_update(u); };
  h.finish_ghost_update = [this](GhostedVector &u) { finish_update(u); };
  h.compress = [this](GhostedVector &y) { compress(y); };
  return h;
}

void run_ranks(int n_ranks, const std::function<void(int)> &fn)
{
  std::vector<std::thread> threads;
  std::vector<std::exception_ptr> errors(n_ranks);
  threads.reserve(n_ranks);
  for (int r = 0; r < n_ranks; ++r)
    threads.emplace_back([&, r] {
      try
        {
          fn(r);
        }
      catch (...)
        {
          errors[r] = std::current_exception();
        }
    });
  for (std::thread &t : threads)
    t.join();
  for (const std::exception_ptr &e : errors)
    if (e)
      std::rethrow_exception(e);
}

} // namespace dg
