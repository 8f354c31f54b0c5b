#pragma once

#include <Eigen/Dense>

#include <vector>

namespace dg
{
struct OperatorConfig;
struct Mesh;

namespace oracle
{

// One 1D factor of a Kronecker product, rows x cols row-major.
struct DenseFactor
{
  int rows = 0;
  int cols = 0;
  std::vector<double> m;
};

// Explicitly assembled Kronecker product of up to three factors;
// factors[0] acts on the fastest-running tensor axis. Deliberately brute
// force: this is the reference the sum-factorized kernels are tested
// against. Sizes are guarded to keep the dense matrix at desk scale.
Eigen::MatrixXd dense_kronecker_matrix(const std::vector<DenseFactor> &factors);

std::vector<double> dense_kronecker_apply(
  const std::vector<DenseFactor> &factors, const std::vector<double> &in);

// Naive assembled operator matrix over the canonical cell-major dof
// numbering (cell index times dofs per cell plus the lexicographic local
// index): per-cell and per-face quadrature loops over all basis function
// pairs, sharing only basis evaluations and geometry records with the fast
// path. Guarded to at most 20000 dofs.
Eigen::MatrixXd assemble_operator(const OperatorConfig &config,
                                  const Mesh &mesh);

// Mass matrix of a single 1D cell [0, h] at degree p, assembled with the
// same quadrature loop (meshes are 2D/3D, so the 1D reference case gets a
// direct entry point). Linear elements on h = 1 give {{1/3,1/6},{1/6,1/3}}.
Eigen::MatrixXd assemble_unit_interval_mass(int p, double h);

// Writes "row col value" triplets of the nonzero entries.
void dump_triplets(const Eigen::MatrixXd &m, const std::string &path);

} // namespace oracle
} // namespace dg
