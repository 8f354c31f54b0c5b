#include <dg/verify.hpp>

#include <dg/bench.hpp>
#include <dg/ghost_exchange.hpp>
#include <dg/oracle.hpp>
#include <dg/operators.hpp>
#include <dg/tensor_kernels.hpp>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <cmath>
#include <memory>
#include <random>
#include <sstream>

namespace dg
{
namespace verify
{

namespace
{

void add_result(std::vector<CheckResult> &results, const std::string &suite,
                const std::string &name, bool passed,
                const std::string &detail = "")
{
  results.push_back({suite, name, passed, detail});
}

std::vector<double> random_vector(std::size_t n, unsigned seed)
{
  std::mt19937 gen(seed);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  std::vector<double> v(n);
  for (double &x : v)
    x = dist(gen);
  return v;
}

double rel_linf(const std::vector<double> &a, const std::vector<double> &b)
{
  double diff = 0, scale = 0;
  for (std::size_t i = 0; i < a.size(); ++i)
    {
      diff = std::max(diff, std::abs(a[i] - b[i]));
      scale = std::max(scale, std::abs(b[i]));
    }
  return diff / std::max(scale, 1e-300);
}

struct World
{
  Mesh mesh;
  OperatorConfig cfg;
  std::vector<RawFace> faces;
  Partition partition;
  std::shared_ptr<const GeometryCache> geom;
  std::vector<std::unique_ptr<RankOperator>> ops;

  World(const Mesh &m, const OperatorConfig &c, int n_ranks,
        std::shared_ptr<const GeometryCache> shared_geom = nullptr)
    : mesh(m), cfg(c)
  {
    faces = enumerate_faces(mesh);
    partition = partition_cells(mesh, n_ranks);
    assign_face_owners(mesh, faces, partition);
    geom = shared_geom
             ? std::move(shared_geom)
             : std::make_shared<GeometryCache>(precompute_geometry(
                 mesh, faces, cfg.k(), cfg.k(), cfg.geometry, cfg.equation(),
                 cfg.velocity));
    for (int r = 0; r < n_ranks; ++r)
      ops.push_back(std::make_unique<RankOperator>(mesh, partition, faces,
                                                   geom, cfg, r));
  }

  long long n_dofs() const
  {
    return static_cast<long long>(mesh.n_cells()) *
           ops[0]->layout().dofs_per_cell;
  }
};

// Applies the operator across all ranks (threaded transport when more than
// one) and returns the result in the canonical cell-major numbering.
std::vector<double> world_apply(World &w, const std::vector<double> &x,
                                FaceAccess access)
{
  const int nr = static_cast<int>(w.ops.size());
  const std::size_t n = static_cast<std::size_t>(w.n_dofs());
  std::vector<std::vector<double>> partial(nr, std::vector<double>(n, 0.0));
  TransportHub hub(nr);
  run_ranks(nr, [&](int r) {
    GhostExchanger ex(build_exchange_plan(w.ops[r]->layout(), w.faces,
                                          w.partition, access,
                                          ghost_need(w.cfg.kind)),
                      &w.ops[r]->layout(), &hub);
    ExchangeHooks hooks = ex.hooks();
    GhostedVector u = w.ops[r]->layout().make_vector();
    GhostedVector y = w.ops[r]->layout().make_vector();
    from_canonical(w.ops[r]->layout(), x, u);
    w.ops[r]->apply(u, y, nr > 1 ? &hooks : nullptr);
    to_canonical(w.ops[r]->layout(), y, partial[r]);
  });
  std::vector<double> out(n, 0.0);
  for (int r = 0; r < nr; ++r)
    for (std::size_t i = 0; i < n; ++i)
      out[i] += partial[r][i];
  return out;
}

FaceAccess natural_access(const OperatorConfig &cfg)
{
  return make_basis(cfg.basis, cfg.p).face_access;
}

bool skip(const Filter &f, int d, int p)
{
  return (f.dim != 0 && f.dim != d) || (f.degree != 0 && f.degree != p);
}

// ---------------------------------------------------------------------------
// kernels suite

void suite_kernels(const Filter &f, std::vector<CheckResult> &results)
{
  const std::string suite = "kernels";

  // Flop counts of a single even-odd stripe on a k x k value matrix.
  for (int k = 2; k <= 16; ++k)
    {
      if (f.degree != 0 && f.degree != k - 1)
        continue;
      const Basis1D basis =
        make_basis(BasisKind::lagrange_gauss_lobatto, k - 1);
      const ShapeMatrices1D sm = shape_matrices(basis, gauss_quadrature(k));
      if (sm.S_eo.empty())
        {
          add_result(results, suite, "even-odd stripe counts k=" +
                                       std::to_string(k),
                     false, "even-odd form unavailable");
          continue;
        }
      const std::vector<double> x = random_vector(k, 100 + k);
      std::vector<double> y(k);
      KernelCounters c;
      const int ext[1] = {k};
      apply_1d(MatrixForm::even_odd, false, 0, 1, ext, sm.S.data(), &sm.S_eo,
               k, k, x.data(), y.data(), false, &c);
      const bool ok = c.adds == 2 * k && c.mults == k &&
                      c.fmas == k * (k - 2) / 2 && c.kernel_invocations == 1;
      std::ostringstream detail;
      detail << "adds=" << c.adds << " mults=" << c.mults
             << " fmas=" << c.fmas;
      add_result(results, suite,
                 "even-odd stripe counts k=" + std::to_string(k), ok,
                 detail.str());
    }

  // Even-odd versus plain on 1000 random stripes per size.
  for (int k = 2; k <= 16; ++k)
    {
      if (f.degree != 0 && f.degree != k - 1)
        continue;
      const Basis1D basis =
        make_basis(BasisKind::lagrange_gauss_lobatto, k - 1);
      const ShapeMatrices1D sm = shape_matrices(basis, gauss_quadrature(k));
      double worst = 0;
      const int ext[1] = {k};
      for (int trial = 0; trial < 1000; ++trial)
        {
          const std::vector<double> x =
            random_vector(k, 1000 * k + trial);
          std::vector<double> yp(k), ye(k);
          apply_1d(MatrixForm::plain, false, 0, 1, ext, sm.S.data(), nullptr,
                   k, k, x.data(), yp.data(), false, nullptr);
          apply_1d(MatrixForm::even_odd, false, 0, 1, ext, sm.S.data(),
                   &sm.S_eo, k, k, x.data(), ye.data(), false, nullptr);
          worst = std::max(worst, rel_linf(ye, yp));
        }
      add_result(results, suite,
                 "even-odd equals plain k=" + std::to_string(k),
                 worst <= 1e-13, "max rel diff " + std::to_string(worst));
    }

  // Factored collocation gradient against the dense Kronecker form.
  for (int d = 1; d <= 3; ++d)
    for (int k = 2; k <= 8; ++k)
      {
        if (skip(f, d, k - 1))
          continue;
        const Basis1D basis = make_basis(BasisKind::lagrange_gauss, k - 1);
        const ShapeMatrices1D sm = shape_matrices(basis, gauss_quadrature(k));
        const long long n = detail::ipowll(k, d);
        const std::vector<double> x =
          random_vector(static_cast<std::size_t>(n), 40 + 10 * d + k);
        std::vector<double> grad(static_cast<std::size_t>(d * n));
        collocation_derivative(d, true, k, false, sm, x.data(), grad.data(),
                               nullptr);

        oracle::DenseFactor id{k, k, std::vector<double>(
                                       static_cast<std::size_t>(k) * k, 0.0)};
        for (int i = 0; i < k; ++i)
          id.m[i * k + i] = 1.0;
        const oracle::DenseFactor dm{k, k, sm.Dco};
        double worst = 0;
        for (int a = 0; a < d; ++a)
          {
            std::vector<oracle::DenseFactor> factors(d, id);
            factors[a] = dm;
            const std::vector<double> ref =
              oracle::dense_kronecker_apply(factors, x);
            const std::vector<double> got(grad.begin() + a * n,
                                          grad.begin() + (a + 1) * n);
            worst = std::max(worst, rel_linf(got, ref));
          }
        add_result(results, suite,
                   "factored gradient d=" + std::to_string(d) +
                     " k=" + std::to_string(k),
                   worst <= 1e-13, "max rel diff " + std::to_string(worst));
      }

  // Tiled 3D cell evaluation against the plain sweep sequence.
  for (int k = 2; k <= 8; ++k)
    {
      if (skip(f, 3, k - 1))
        continue;
      const Basis1D basis =
        make_basis(BasisKind::lagrange_gauss_lobatto, k - 1);
      const ShapeMatrices1D sm = shape_matrices(basis, gauss_quadrature(k));
      const long long n = detail::ipowll(k, 3);
      const std::vector<double> x =
        random_vector(static_cast<std::size_t>(n), 900 + k);
      const std::vector<double> coeff =
        random_vector(static_cast<std::size_t>(6 * n), 901 + k);

      auto contract = [&](long long q, const double *g, double *t) {
        const double *c = coeff.data() + 6 * q;
        t[0] = c[0] * g[0] + c[3] * g[1] + c[4] * g[2];
        t[1] = c[3] * g[0] + c[1] * g[1] + c[5] * g[2];
        t[2] = c[4] * g[0] + c[5] * g[1] + c[2] * g[2];
      };

      // Reference: separate interpolation, gradient, quadrature operation
      // and transposed integration passes.
      std::vector<double> val(n), grad(3 * n), integ(3 * n), tmp(n),
        ref(n), scratch(2 * n);
      basis_change(3, true, k, k, false, sm, x.data(), val.data(),
                   scratch.data(), nullptr);
      collocation_derivative(3, true, k, false, sm, val.data(), grad.data(),
                             nullptr);
      for (long long q = 0; q < n; ++q)
        {
          const double g[3] = {grad[q], grad[n + q], grad[2 * n + q]};
          double t[3];
          contract(q, g, t);
          integ[q] = t[0];
          integ[n + q] = t[1];
          integ[2 * n + q] = t[2];
        }
      collocation_derivative(3, false, k, false, sm, integ.data(), tmp.data(),
                             nullptr);
      basis_change(3, false, k, k, false, sm, tmp.data(), ref.data(),
                   scratch.data(), nullptr);

      std::vector<double> out(n), tiled_scratch(2 * n + k * k);
      auto qop = [&](long long offset, int count, double *dx, double *dy,
                     double *dz) {
        for (int i = 0; i < count; ++i)
          {
            const double g[3] = {dx[i], dy[i], dz[i]};
            double t[3];
            contract(offset + i, g, t);
            dx[i] = t[0];
            dy[i] = t[1];
            dz[i] = t[2];
          }
      };
      tiled_cell_laplacian(k, sm, qop, x.data(), out.data(),
                           tiled_scratch.data(), nullptr);
      const double diff = rel_linf(out, ref);
      add_result(results, suite, "tiled cell pass k=" + std::to_string(k),
                 diff <= 1e-13, "max rel diff " + std::to_string(diff));
    }
}

// ---------------------------------------------------------------------------
// counts suite

void suite_counts(const Filter &f, std::vector<CheckResult> &results)
{
  const std::string suite = "counts";
  const OperatorKind kinds[] = {OperatorKind::mass, OperatorKind::inverse_mass,
                                OperatorKind::advection,
                                OperatorKind::laplacian};
  for (int d : {2, 3})
    for (int p : {2, 3})
      for (OperatorKind kind : kinds)
        {
          if (skip(f, d, p))
            continue;
          const Mesh mesh = make_box_mesh(d, d == 2 ? 4 : 2, 0.04, false);
          OperatorConfig cfg =
            make_operator_config(kind, d, p, 1, GeometryVariant::g3);
          World w(mesh, cfg, 1);
          RankOperator &op = *w.ops[0];

          long long cell_expect = 0, inner_expect = 0, bnd_expect = 0;
          switch (kind)
            {
            case OperatorKind::mass:
            case OperatorKind::inverse_mass:
              cell_expect = 2 * d;
              break;
            case OperatorKind::advection:
              cell_expect = 3 * d;
              inner_expect = 4 * (d - 1) + 4;
              bnd_expect = 2 * (d - 1) + 2;
              break;
            case OperatorKind::laplacian:
              cell_expect = d == 3 ? 12 : 8;
              inner_expect = 12 * (d - 1) + 8;
              bnd_expect = 6 * (d - 1) + 4;
              break;
            }

          bool ok = op.expected_cell_invocations() == cell_expect &&
                    op.expected_inner_face_invocations() == inner_expect &&
                    op.expected_boundary_face_invocations() == bnd_expect;

          const DoFLayout &layout = op.layout();
          GhostedVector u = layout.make_vector();
          GhostedVector y = layout.make_vector();
          const std::vector<double> x = random_vector(
            static_cast<std::size_t>(w.n_dofs()), 77 + d + p);
          from_canonical(layout, x, u);
          op.reset_counters();
          op.apply(u, y);
          const KernelCounters c = op.counters();
          const long long total =
            layout.n_cell_batches * cell_expect +
            static_cast<long long>(layout.interior_face_batches.size()) *
              inner_expect +
            static_cast<long long>(layout.boundary_face_batches.size()) *
              bnd_expect;
          ok = ok && c.kernel_invocations == total;

          std::ostringstream detail;
          detail << "invocations " << c.kernel_invocations << " expected "
                 << total;

          // The closed-form schedule arithmetic must stay within 10% of the
          // instrumented flops.
          bench::BenchParams bp;
          bp.kind = kind;
          bp.d = d;
          bp.p = p;
          long long n_inner = 0, n_bnd = 0;
          for (const RawFace &face : w.faces)
            (face.at_boundary() ? n_bnd : n_inner) += 1;
          const double model = bench::scheduled_flops_model(
            bp, mesh.n_cells(), n_inner, n_bnd);
          const double measured = static_cast<double>(c.flops());
          const double rel = std::abs(measured - model) / model;
          ok = ok && rel <= 0.10;
          detail << ", flops " << measured << " model " << model
                 << " rel " << rel;

          add_result(results, suite,
                     std::string(bench::cli_name(kind)) + " schedule d=" +
                       std::to_string(d) + " p=" + std::to_string(p),
                     ok, detail.str());
        }
}

// ---------------------------------------------------------------------------
// oracle suite

void suite_oracle(const Filter &f, std::vector<CheckResult> &results)
{
  const std::string suite = "oracle";
  const OperatorKind kinds[] = {OperatorKind::mass, OperatorKind::advection,
                                OperatorKind::laplacian};
  struct MeshCase
  {
    int d;
    int cells;
    double deform;
  };

  for (OperatorKind kind : kinds)
    for (int d : {2, 3})
      {
        const int p_max = d == 2 ? 5 : 3;
        for (int p = 1; p <= p_max; ++p)
          {
            if (skip(f, d, p))
              continue;
            const MeshCase mesh_cases[] = {
              {d, d == 2 ? 4 : 3, 0.0},
              {d, d == 2 ? 4 : 3, d == 2 ? 0.06 : 0.04}};
            for (const MeshCase &mc : mesh_cases)
              {
                // The quadrature-point geometry representation recovers
                // Jacobians by collocation differentiation, which resolves
                // mapping degrees up to p. Cap the mesh curvature there so
                // every representation describes the same geometry.
                const Mesh mesh = make_box_mesh(mc.d, mc.cells, mc.deform,
                                                false, std::min(3, p));
                OperatorConfig base = make_operator_config(
                  kind, d, p, 1, GeometryVariant::g3);
                base.velocity.constant = {0.8, -0.45, 0.3};
                const Eigen::MatrixXd a =
                  oracle::assemble_operator(base, mesh);
                const std::vector<double> x = random_vector(
                  static_cast<std::size_t>(a.cols()), 3000 + 10 * d + p);
                Eigen::Map<const Eigen::VectorXd> xv(
                  x.data(), static_cast<Eigen::Index>(x.size()));
                const Eigen::VectorXd axv = a * xv;
                const std::vector<double> ref(axv.data(),
                                              axv.data() + axv.size());

                std::vector<GeometryVariant> variants;
                if (mesh.cartesian())
                  variants = {GeometryVariant::g3, GeometryVariant::g4};
                else
                  variants = {GeometryVariant::g1, GeometryVariant::g2,
                              GeometryVariant::g3, GeometryVariant::g4};

                for (GeometryVariant variant : variants)
                  {
                    OperatorConfig cfg = base;
                    cfg.geometry = variant;
                    auto geom = std::make_shared<GeometryCache>(
                      precompute_geometry(mesh, enumerate_faces(mesh),
                                          cfg.k(), cfg.k(), variant,
                                          cfg.equation(), cfg.velocity));
                    double worst = 0;
                    for (int W : {1, 4})
                      for (int ranks : {1, 2, 4})
                        {
                          OperatorConfig c2 = cfg;
                          c2.W = W;
                          World w(mesh, c2, ranks, geom);
                          const std::vector<double> y =
                            world_apply(w, x, natural_access(c2));
                          worst = std::max(worst, rel_linf(y, ref));
                        }
                    std::ostringstream name;
                    name << bench::cli_name(kind) << " d=" << d << " p=" << p
                         << (mesh.cartesian() ? " cartesian " : " deformed ")
                         << to_string(variant);
                    add_result(results, suite, name.str(), worst <= 1e-11,
                               "max rel diff " + std::to_string(worst));
                  }
              }
          }
      }
}

// ---------------------------------------------------------------------------
// exchange suite

void suite_exchange(const Filter &f, std::vector<CheckResult> &results)
{
  const std::string suite = "exchange";

  // Slim message sizes per interface cell on a slab cut.
  if (!skip(f, 3, 3))
    {
      const Mesh mesh = make_box_mesh(3, 2, 0.0, false);
      struct Case
      {
        OperatorKind kind;
        long long per_cell;
      };
      for (const Case &c :
           {Case{OperatorKind::advection, 16}, Case{OperatorKind::laplacian,
                                                    32}})
        {
          OperatorConfig cfg =
            make_operator_config(c.kind, 3, 3, 4, GeometryVariant::g3);
          World w(mesh, cfg, 2);
          bool ok = true;
          long long seen = -1;
          for (int r = 0; r < 2; ++r)
            {
              const ExchangePlan plan = build_exchange_plan(
                w.ops[r]->layout(), w.faces, w.partition,
                natural_access(cfg), ghost_need(c.kind));
              for (const NeighborPlan &np : plan.send)
                for (std::size_t i = 0; i + 1 < np.dof_offsets.size(); ++i)
                  {
                    seen = np.dof_offsets[i + 1] - np.dof_offsets[i];
                    ok = ok && seen == c.per_cell;
                  }
            }
          add_result(results, suite,
                     std::string(bench::cli_name(c.kind)) +
                       " values per interface cell",
                     ok,
                     "expected " + std::to_string(c.per_cell) + " saw " +
                       std::to_string(seen));
        }
    }

  // Slim versus whole-cell messages give the same operator action.
  if (!skip(f, 2, 4))
    {
      const Mesh mesh = make_box_mesh(2, 4, 0.07, false);
      OperatorConfig cfg =
        make_operator_config(OperatorKind::laplacian, 2, 4, 4,
                             GeometryVariant::g3);
      World w(mesh, cfg, 3);
      const std::vector<double> x = random_vector(
        static_cast<std::size_t>(w.n_dofs()), 55);
      const std::vector<double> slim = world_apply(w, x, natural_access(cfg));
      const std::vector<double> full =
        world_apply(w, x, FaceAccess::generic);
      const double diff = rel_linf(slim, full);
      add_result(results, suite, "slim equals full exchange", diff <= 1e-13,
                 "max rel diff " + std::to_string(diff));
    }

  // Rank-count invariance.
  for (OperatorKind kind : {OperatorKind::advection, OperatorKind::laplacian})
    {
      const int p = kind == OperatorKind::advection ? 2 : 3;
      if (skip(f, 2, p))
        continue;
      const Mesh mesh = make_box_mesh(2, 4, 0.06, false);
      OperatorConfig cfg =
        make_operator_config(kind, 2, p, 4, GeometryVariant::g3);
      cfg.velocity.constant = {0.7, -0.35, 0.0};
      World single(mesh, cfg, 1);
      const std::vector<double> x = random_vector(
        static_cast<std::size_t>(single.n_dofs()), 66);
      const std::vector<double> ref =
        world_apply(single, x, natural_access(cfg));
      double worst = 0;
      for (int ranks : {2, 4, 7})
        {
          World w(mesh, cfg, ranks);
          worst = std::max(
            worst, rel_linf(world_apply(w, x, natural_access(cfg)), ref));
        }
      add_result(results, suite,
                 std::string(bench::cli_name(kind)) +
                   " rank-count invariance",
                 worst <= 1e-12, "max rel diff " + std::to_string(worst));
    }
}

// ---------------------------------------------------------------------------
// sip suite

void suite_sip(const Filter &f, std::vector<CheckResult> &results)
{
  const std::string suite = "sip";
  for (int p = 1; p <= 3; ++p)
    {
      if (skip(f, 2, p))
        continue;
      const Mesh mesh = make_box_mesh(2, 4, 0.05, false);
      OperatorConfig cfg =
        make_operator_config(OperatorKind::laplacian, 2, p, 1,
                             GeometryVariant::g3);
      const Eigen::MatrixXd a = oracle::assemble_operator(cfg, mesh);
      const double scale = a.cwiseAbs().maxCoeff();
      const double asym = (a - a.transpose()).cwiseAbs().maxCoeff() / scale;
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(
        0.5 * (a + a.transpose()), Eigen::EigenvaluesOnly);
      const double lambda_min = es.eigenvalues().minCoeff();
      const bool ok = asym <= 1e-11 && lambda_min >= -1e-10;
      std::ostringstream detail;
      detail << "asymmetry " << asym << ", min eigenvalue " << lambda_min;
      add_result(results, suite, "laplacian spectrum p=" + std::to_string(p),
                 ok, detail.str());
    }
}

// ---------------------------------------------------------------------------
// bytemodel suite

void suite_bytemodel(const Filter &f, std::vector<CheckResult> &results)
{
  const std::string suite = "bytemodel";
  if (f.dim != 0 && f.dim != 3)
    return;
  const Mesh mesh = make_box_mesh(3, 2, 0.05, false);
  const std::vector<RawFace> faces = enumerate_faces(mesh);
  struct Case
  {
    GeometryVariant variant;
    Equation equation;
    long long expected;
    const char *name;
  };
  const Case cases[] = {
    {GeometryVariant::g2, Equation::laplacian, 3, "g2"},
    {GeometryVariant::g3, Equation::laplacian, 10, "g3"},
    {GeometryVariant::g4, Equation::laplacian, 6, "g4 laplacian"},
    {GeometryVariant::g4, Equation::advection, 3, "g4 advection"},
  };
  for (const Case &c : cases)
    {
      const GeometryCache g =
        precompute_geometry(mesh, faces, 4, 4, c.variant, c.equation);
      const long long got = g.doubles_per_cell_qpoint();
      add_result(results, suite,
                 std::string("doubles per q-point ") + c.name,
                 got == c.expected,
                 "expected " + std::to_string(c.expected) + " got " +
                   std::to_string(got));
    }
}

} // namespace

const std::vector<std::string> &suite_names()
{
  static const std::vector<std::string> names = {
    "kernels", "counts", "oracle", "exchange", "sip", "bytemodel"};
  return names;
}

std::vector<CheckResult> run_suites(const Filter &filter)
{
  std::vector<CheckResult> results;
  auto want = [&](const char *s) {
    return filter.suite.empty() || filter.suite == s;
  };
  if (want("kernels"))
    suite_kernels(filter, results);
  if (want("counts"))
    suite_counts(filter, results);
  if (want("oracle"))
    suite_oracle(filter, results);
  if (want("exchange"))
    suite_exchange(filter, results);
  if (want("sip"))
    suite_sip(filter, results);
  if (want("bytemodel"))
    suite_bytemodel(filter, results);
  return results;
}

bool all_passed(const std::vector<CheckResult> &results)
{
  for (const CheckResult &r : results)
    if (!r.passed)
      return false;
  return true;
}

} // namespace verify
} // namespace dg
