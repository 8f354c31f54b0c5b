#pragma once

#include <string>
#include <vector>

namespace dg
{
namespace verify
{

struct CheckResult
{
  std::string suite;
  std::string name;
  bool passed = false;
  std::string detail;
};

// Empty suite or zero dim/degree means "all".
struct Filter
{
  std::string suite;
  int dim = 0;
  int degree = 0;
};

const std::vector<std::string> &suite_names();

// Runs the verification suites matching the filter:
//   kernels   - 1D stripe flop counts, even-odd vs plain equivalence,
//               factored gradients, tiled cell evaluation
//   counts    - kernel invocation schedule and flop model cross-checks
//   oracle    - matrix-free applies against assembled matrices
//   exchange  - slim message sizes and rank-count invariance
//   sip       - symmetry and near-positive spectrum of the Laplacian
//   bytemodel - per-quadrature-point double counts of the geometry variants
std::vector<CheckResult> run_suites(const Filter &filter);

bool all_passed(const std::vector<CheckResult> &results);

} // namespace verify
} // namespace dg
