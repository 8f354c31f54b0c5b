#pragma once

#include <dg/operators.hpp>
#include <dg/solvers.hpp>

#include <string>
#include <vector>

namespace dg
{
namespace bench
{

inline constexpr const char *csv_header =
  "operator,dim,degree,cells,geometry,lanes,ranks,n_dofs,time_s,dofs_per_s,"
  "flops,bytes,intensity";

// CLI-facing names: mass, invmass, advection, laplace.
const char *cli_name(OperatorKind kind);
bool parse_operator(const std::string &name, OperatorKind &kind);

// Geometry setting of a benchmark run: g1..g4 on a deformed mesh, or
// "cartesian" for the compressed axis-aligned storage (g3 records).
bool parse_geometry(const std::string &name, GeometryVariant &variant,
                    bool &cartesian);

struct BenchParams
{
  OperatorKind kind = OperatorKind::laplacian;
  int d = 3;
  int p = 3;
  long long cells = 64; // target total cell count, rounded to a box
  GeometryVariant geometry = GeometryVariant::g3;
  bool cartesian = false;
  int W = 4;
  int ranks = 1;
  int reps = 5; // timed repetitions, at least 5 are taken
};

struct BenchRecord
{
  std::string op;
  int dim = 0;
  int degree = 0;
  long long cells = 0;
  std::string geometry;
  int lanes = 1;
  int ranks = 1;
  long long n_dofs = 0;
  double time_s = 0;     // median wall time of one operator application
  double dofs_per_s = 0;
  double flops = 0;      // instrumented arithmetic per application
  double bytes = 0;      // modeled memory traffic per application
  double intensity = 0;  // flops / bytes
};

// Warm-up of at least half a second, then the median of at least five
// timed repetitions on the monotonic clock.
BenchRecord run_benchmark(const BenchParams &params);

// Appends a record, writing the header when the file is new or empty.
void append_csv(const std::string &path, const BenchRecord &record);
std::vector<BenchRecord> read_csv(const std::string &path);

// Closed-form arithmetic of one operator application from the kernel
// schedule: invocation counts per cell and face times the per-stripe cost
// of the even-odd 1D kernel. Used as the 10% cross-check against the
// instrumented counters.
double scheduled_flops_model(const BenchParams &params, long long n_cells,
                             long long n_inner_faces,
                             long long n_boundary_faces);

// Seconds per application of the assembled dense operator (the oracle
// path) on the same configuration, for speedup comparisons.
double time_dense_oracle_apply(const BenchParams &params);

struct ConvergenceLevel
{
  int level = 0;
  long long n_dofs = 0;
  double l2_error = 0;
  double rate = 0; // against the previous level, 0 on the first
  SolveReport solve;
};

struct ConvergenceResult
{
  std::vector<ConvergenceLevel> levels;
  bool solvers_converged = true;
};

// Manufactured smooth solution on the unit square/cube, meshes of
// 2^level cells per direction. Laplacian solves with matrix-free CG,
// advection solves the stationary upwind system with restarted GMRES.
ConvergenceResult convergence_study(OperatorKind kind, int d, int p,
                                    int level_begin, int level_end);

struct RooflineRow
{
  BenchRecord record;
  double achieved_flops_per_s = 0;
  double ceiling = 0; // min(peak, intensity * bandwidth)
  bool compute_bound = false;
};

std::vector<RooflineRow> roofline(const std::vector<BenchRecord> &records,
                                  double peak_flops_per_s,
                                  double bandwidth_bytes_per_s);

} // namespace bench
} // namespace dg
