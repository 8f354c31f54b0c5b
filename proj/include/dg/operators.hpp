#pragma once

#include <dg/counters.hpp>
#include <dg/dof_layout.hpp>
#include <dg/geometry.hpp>
#include <dg/mesh.hpp>

#include <functional>
#include <memory>

namespace dg
{

enum class OperatorKind
{
  mass,
  inverse_mass,
  advection,
  laplacian
};

const char *to_string(OperatorKind k);

using ScalarField = std::function<double(const std::array<double, 3> &)>;

struct OperatorConfig
{
  OperatorKind kind = OperatorKind::mass;
  int d = 2;
  int p = 3;
  int W = 1;
  BasisKind basis = BasisKind::lagrange_gauss_lobatto;
  GeometryVariant geometry = GeometryVariant::g3;
  VelocityField velocity;
  ScalarField dirichlet; // g(x), zero if unset
  ScalarField forcing;   // f(x), zero if unset

  int k() const { return p + 1; }
  Equation equation() const
  {
    switch (kind)
      {
      case OperatorKind::advection:
        return Equation::advection;
      case OperatorKind::laplacian:
        return Equation::laplacian;
      default:
        return Equation::mass;
      }
  }
};

// Fills in the preferred basis for the equation: nodal Gauss-Lobatto for
// advection and mass, the Hermite-type basis for the Laplacian when p >= 3
// (nodal Gauss-Lobatto with the generic face path otherwise).
OperatorConfig make_operator_config(OperatorKind kind, int d, int p, int W,
                                    GeometryVariant geometry);

// Hooks wiring a distributed transport into the apply loop; absent hooks
// mean single-rank operation.
struct ExchangeHooks
{
  std::function<void(GhostedVector &)> start_ghost_update;
  std::function<void(GhostedVector &)> finish_ghost_update;
  std::function<void(GhostedVector &)> compress;
};

// Matrix-free operator evaluation for the cells and faces one rank computes.
class RankOperator
{
public:
  RankOperator(const Mesh &mesh, const Partition &partition,
               const std::vector<RawFace> &faces,
               std::shared_ptr<const GeometryCache> geometry,
               const OperatorConfig &config, int rank);
  ~RankOperator();
  RankOperator(RankOperator &&) noexcept;

  const DoFLayout &layout() const;
  const OperatorConfig &config() const;

  // y = A u. Cell integrals write, face integrals accumulate; face batches
  // are interleaved behind the cell batches whose results they consume.
  // Without hooks the operator must be single-rank.
  void apply(GhostedVector &u, GhostedVector &y,
             const ExchangeHooks *hooks = nullptr);

  // Right-hand side from the forcing term and the Dirichlet data moved
  // across the mirror principle.
  void assemble_rhs(GhostedVector &rhs);

  // Accumulated tensor kernel instrumentation.
  const KernelCounters &counters() const;
  void reset_counters();

  // Expected kernel invocations per batch from the operation schedule
  // (asserted internally on the counting fast paths).
  long long expected_cell_invocations() const;
  long long expected_inner_face_invocations() const;
  long long expected_boundary_face_invocations() const;

  struct Impl;

private:
  std::unique_ptr<Impl> impl_;
};

// Conversion between the lane-interleaved rank-local layout and the
// canonical cell-major global numbering (global cell index times dofs per
// cell plus the lexicographic local index) used by the assembled oracle.
void to_canonical(const DoFLayout &layout, const GhostedVector &v,
                  std::vector<double> &canonical);
void from_canonical(const DoFLayout &layout, const std::vector<double> &canonical,
                    GhostedVector &v);

} // namespace dg
