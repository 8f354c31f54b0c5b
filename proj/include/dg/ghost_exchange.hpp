#pragma once

#include <dg/dof_layout.hpp>
#include <dg/operators.hpp>

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <mutex>
#include <vector>

namespace dg
{

// What face integrals downstream will read from ghost cells; selects how
// many values per interface cell travel over the wire.
enum class GhostDataNeed
{
  none,
  values,
  values_and_first_derivatives
};

GhostDataNeed ghost_need(OperatorKind kind);

// One neighbor's share of an exchange plan: cells in ascending global order
// and, per cell, the ascending cell-local dof indices that travel. Slim
// plans list one face layer (bases nodal on faces) or two layers (Hermite
// type); generic bases list all k^d dofs.
struct NeighborPlan
{
  int neighbor = -1;
  std::vector<std::uint32_t> cells;       // global cell ids
  std::vector<std::uint32_t> dof_offsets; // prefix sums, cells.size()+1
  std::vector<std::uint32_t> dofs;        // cell-local dof indices

  long long n_values() const { return static_cast<long long>(dofs.size()); }
};

struct ExchangePlan
{
  int rank = 0;
  GhostDataNeed need = GhostDataNeed::none;
  std::vector<NeighborPlan> send; // data of owned cells, by receiving rank
  std::vector<NeighborPlan> recv; // data of ghost cells, by owning rank

  long long total_send_values() const;
  long long total_recv_values() const;
};

// Derives the mirror-image send/receive plans of one rank from the face
// ownership: every (cell, face) incidence where the face is computed on a
// different rank than the cell lives on contributes the face's dof layers.
ExchangePlan build_exchange_plan(const DoFLayout &layout,
                                 const std::vector<RawFace> &faces,
                                 const Partition &partition,
                                 FaceAccess access, GhostDataNeed need);

// Reliable in-order point-to-point byte channel (single producer, single
// consumer); the only object shared between rank threads.
class MessageChannel
{
public:
  void send(std::vector<std::uint8_t> message);
  std::vector<std::uint8_t> receive(); // blocks until a message arrives

private:
  std::mutex mutex_;
  std::condition_variable cv_;
  std::deque<std::vector<std::uint8_t>> queue_;
};

// Channel matrix for a set of simulated ranks.
class TransportHub
{
public:
  explicit TransportHub(int n_ranks);
  int n_ranks() const { return n_ranks_; }
  MessageChannel &channel(int from, int to);

private:
  int n_ranks_;
  std::vector<MessageChannel> channels_;
};

// Wire format: little-endian 64-bit header {source rank, message kind,
// value count}, then the values as 64-bit floats in plan order.
enum class MessageKind : std::uint64_t
{
  ghost_values = 1,
  residual_contributions = 2
};

std::vector<std::uint8_t> pack_message(int source_rank, MessageKind kind,
                                       const double *values,
                                       long long count);
void unpack_header(const std::vector<std::uint8_t> &message,
                   std::uint64_t &source_rank, MessageKind &kind,
                   std::uint64_t &count);
// Returns a pointer to the count values following the header.
const std::uint8_t *message_payload(const std::vector<std::uint8_t> &message);
double read_le_double(const std::uint8_t *p);

// Per-rank endpoint implementing the two halves of the halo protocol and
// the vector state machine around them.
class GhostExchanger
{
public:
  GhostExchanger(ExchangePlan plan, const DoFLayout *layout,
                 TransportHub *hub);

  // Packs and posts the owned interface data. Requires a clean vector; a
  // second update without an intervening reset is a contract violation.
  void start_update(GhostedVector &u);
  // Receives and scatters the neighbor data; state becomes ghosts_valid.
  void finish_update(GhostedVector &u);
  void update_ghost_values(GhostedVector &u);

  // Sends the accumulated ghost contributions back to their owners, adds
  // the received contributions (in ascending source rank order) into the
  // owned entries, zeroes the ghost region, and resets the state to clean.
  void compress(GhostedVector &y);

  ExchangeHooks hooks();

  const ExchangePlan &plan() const { return plan_; }
  long long values_sent() const { return values_sent_; }
  long long values_received() const { return values_received_; }

private:
  ExchangePlan plan_;
  const DoFLayout *layout_;
  TransportHub *hub_;
  bool update_in_flight_ = false;
  long long values_sent_ = 0;
  long long values_received_ = 0;
};

// Runs fn(rank) on one thread per rank and joins; the first exception, if
// any, is rethrown in the caller.
void run_ranks(int n_ranks, const std::function<void(int)> &fn);

} // namespace dg
