#include <dg/bench.hpp>

#include <dg/ghost_exchange.hpp>
#include <dg/oracle.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <sstream>
#include <stdexcept>

namespace dg
{
namespace bench
{

const char *cli_name(OperatorKind kind)
{
  switch (kind)
    {
    case OperatorKind::mass:
      return "mass";
    case OperatorKind::inverse_mass:
      return "invmass";
    case OperatorKind::advection:
      return "advection";
    case OperatorKind::laplacian:
      return "laplace";
    }
  return "?";
}

bool parse_operator(const std::string &name, OperatorKind &kind)
{
  if (name == "mass")
    kind = OperatorKind::mass;
  else if (name == "invmass")
    kind = OperatorKind::inverse_mass;
  else if (name == "advection")
    kind = OperatorKind::advection;
  else if (name == "laplace")
    kind = OperatorKind::laplacian;
  else
    return false;
  return true;
}

bool parse_geometry(const std::string &name, GeometryVariant &variant,
                    bool &cartesian)
{
  cartesian = false;
  if (name == "g1")
    variant = GeometryVariant::g1;
  else if (name == "g2")
    variant = GeometryVariant::g2;
  else if (name == "g3")
    variant = GeometryVariant::g3;
  else if (name == "g4")
    variant = GeometryVariant::g4;
  else if (name == "cartesian")
    {
      variant = GeometryVariant::g3;
      cartesian = true;
    }
  else
    return false;
  return true;
}

namespace
{

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0)
{
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

int cells_per_direction(long long target, int d)
{
  int n = static_cast<int>(std::llround(std::pow(
    static_cast<double>(std::max<long long>(target, 1)), 1.0 / d)));
  n = std::max(n, 1);
  while (std::pow(n + 1, d) <= static_cast<double>(target))
    ++n;
  return n;
}

struct BenchWorld
{
  Mesh mesh;
  OperatorConfig cfg;
  std::vector<RawFace> faces;
  Partition partition;
  std::shared_ptr<const GeometryCache> geom;
  std::vector<std::unique_ptr<RankOperator>> ops;

  BenchWorld(const BenchParams &p)
  {
    const int n = cells_per_direction(p.cells, p.d);
    mesh = make_box_mesh(p.d, n, p.cartesian ? 0.0 : 0.06, false);
    cfg = make_operator_config(p.kind, p.d, p.p, p.W, p.geometry);
    faces = enumerate_faces(mesh);
    partition = partition_cells(mesh, p.ranks);
    assign_face_owners(mesh, faces, partition);
    geom = std::make_shared<GeometryCache>(
      precompute_geometry(mesh, faces, cfg.k(), cfg.k(), cfg.geometry,
                          cfg.equation(), cfg.velocity));
    for (int r = 0; r < p.ranks; ++r)
      ops.push_back(std::make_unique<RankOperator>(mesh, partition, faces,
                                                   geom, cfg, r));
  }

  long long n_dofs() const
  {
    return static_cast<long long>(mesh.n_cells()) *
           ops[0]->layout().dofs_per_cell;
  }

  // Wall time of n_applies operator applications, all ranks advancing in
  // lockstep over the threaded transport when more than one is present.
  double run(long long n_applies)
  {
    if (ops.size() == 1)
      {
        GhostedVector u = ops[0]->layout().make_vector();
        GhostedVector y = ops[0]->layout().make_vector();
        for (std::size_t i = 0; i < u.data.size(); ++i)
          u.data[i] = 0.25 + 1e-4 * static_cast<double>(i % 97);
        const auto t0 = Clock::now();
        for (long long i = 0; i < n_applies; ++i)
          {
            u.state = VectorState::clean;
            ops[0]->apply(u, y);
          }
        return seconds_since(t0);
      }

    const int nr = static_cast<int>(ops.size());
    TransportHub hub(nr);
    const FaceAccess access = make_basis(cfg.basis, cfg.p).face_access;
    const auto t0 = Clock::now();
    run_ranks(nr, [&](int r) {
      GhostExchanger ex(build_exchange_plan(ops[r]->layout(), faces,
                                            partition, access,
                                            ghost_need(cfg.kind)),
                        &ops[r]->layout(), &hub);
      ExchangeHooks hooks = ex.hooks();
      GhostedVector u = ops[r]->layout().make_vector();
      GhostedVector y = ops[r]->layout().make_vector();
      for (std::size_t i = 0; i < u.data.size(); ++i)
        u.data[i] = 0.25 + 1e-4 * static_cast<double>(i % 97);
      for (long long i = 0; i < n_applies; ++i)
        {
          u.state = VectorState::clean;
          ops[r]->apply(u, y, &hooks);
        }
    });
    return seconds_since(t0);
  }

  KernelCounters total_counters() const
  {
    KernelCounters c;
    for (const auto &op : ops)
      {
        const KernelCounters &o = op->counters();
        c.adds += o.adds;
        c.mults += o.mults;
        c.fmas += o.fmas;
        c.kernel_invocations += o.kernel_invocations;
      }
    return c;
  }
};

// Modeled memory traffic of one application: two vector reads and one
// vector write plus the geometry records the operator actually consumes.
// This is a traffic model, not a measurement.
double modeled_bytes(const BenchWorld &w)
{
  const GeometryCache &g = *w.geom;
  double doubles = 3.0 * static_cast<double>(w.n_dofs());
  doubles += static_cast<double>(g.mapping_support.size() + g.qpoints.size() +
                                 g.inv_jac_t.size() + g.jxw.size() +
                                 g.coeff.size());
  switch (w.cfg.equation())
    {
    case Equation::mass:
      break;
    case Equation::advection:
      doubles += static_cast<double>(g.face_jxw.size() + g.face_normal.size());
      if (w.cfg.velocity.field)
        doubles += static_cast<double>(g.face_qpoints.size());
      break;
    case Equation::laplacian:
      doubles += static_cast<double>(g.face_jxw.size() + g.face_jni.size() +
                                     g.face_jne.size() + g.penalty.size());
      break;
    }
  return 8.0 * doubles;
}

long long ipow(int b, int e)
{
  long long r = 1;
  for (int i = 0; i < e; ++i)
    r *= b;
  return r;
}

} // namespace

double scheduled_flops_model(const BenchParams &params, long long n_cells,
                             long long n_inner_faces,
                             long long n_boundary_faces)
{
  const int d = params.d, k = params.p + 1;
  // Per-stripe cost of the even-odd kernel on a k x k matrix: 2k additions,
  // k multiplications and floor(k(k-2)/2) fused multiply-adds. The tiled 3D
  // Laplacian cell path runs plain stripes instead (k multiplications and
  // k(k-1) fused multiply-adds each).
  const double stripe = 3.0 * k + 2.0 * (k * (k - 2) / 2);
  const double plain_stripe = k + 2.0 * k * (k - 1.0);

  long long cell_inv = 0, inner_ext = 0, inner_sweep = 0, bnd_ext = 0,
            bnd_sweep = 0;
  double ext_stripe = 1.0;            // face-row flops per entry
  double cell_cost = stripe;          // per full-tensor stripe
  double sweep_cost = stripe;         // per face-tensor stripe
  switch (params.kind)
    {
    case OperatorKind::mass:
    case OperatorKind::inverse_mass:
      cell_inv = 2 * d;
      break;
    case OperatorKind::advection:
      cell_inv = 3 * d;
      inner_ext = 4;
      inner_sweep = 4 * (d - 1);
      bnd_ext = 2;
      bnd_sweep = 2 * (d - 1);
      ext_stripe = 1.0; // nodal basis, single support column
      break;
    case OperatorKind::laplacian:
      cell_inv = d == 3 ? 12 : 8;
      inner_ext = 8;
      inner_sweep = 12 * (d - 1);
      bnd_ext = 4;
      bnd_sweep = 6 * (d - 1);
      if (params.p >= 3)
        {
          // The Hermite-type basis is not symmetric under reflection, so
          // its 1D sweeps run as plain stripes; face rows collapse to a
          // single support column.
          cell_cost = plain_stripe;
          sweep_cost = plain_stripe;
          ext_stripe = 1.0;
        }
      else
        {
          // Generic fallback: per extraction pair one single-support value
          // row and one dense derivative row, k flops per entry on average.
          ext_stripe = static_cast<double>(k);
          if (d == 3)
            cell_cost = plain_stripe; // tiled cell path
        }
      break;
    }

  const double nf = static_cast<double>(ipow(k, d - 1));
  const double cell_stripes = static_cast<double>(ipow(k, d - 1));
  const double face_stripes = static_cast<double>(ipow(k, d - 2));

  double flops = static_cast<double>(n_cells) * cell_inv * cell_stripes *
                 cell_cost;
  flops += static_cast<double>(n_inner_faces) *
           (inner_ext * nf * ext_stripe +
            inner_sweep * face_stripes * sweep_cost);
  flops += static_cast<double>(n_boundary_faces) *
           (bnd_ext * nf * ext_stripe +
            bnd_sweep * face_stripes * sweep_cost);
  return flops;
}

BenchRecord run_benchmark(const BenchParams &params)
{
  BenchWorld w(params);

  // Warm up for at least half a second while estimating the time of one
  // application.
  long long warm = 1;
  double elapsed = 0;
  const auto warm_start = Clock::now();
  while ((elapsed = seconds_since(warm_start)) < 0.5)
    {
      w.run(warm);
      warm = std::min<long long>(warm * 2, 1 << 20);
    }
  double est = w.run(1);
  est = std::max(est, 1e-7);

  const int reps = std::max(params.reps, 5);
  const long long inner = std::max<long long>(
    1, static_cast<long long>(std::ceil(0.02 / est)));

  for (auto &op : w.ops)
    op->reset_counters();
  std::vector<double> times(reps);
  for (int r = 0; r < reps; ++r)
    times[r] = w.run(inner) / static_cast<double>(inner);
  std::sort(times.begin(), times.end());
  const double median = times[reps / 2];

  const KernelCounters c = w.total_counters();
  const double applies = static_cast<double>(reps) * inner;

  BenchRecord rec;
  rec.op = cli_name(params.kind);
  rec.dim = params.d;
  rec.degree = params.p;
  rec.cells = w.mesh.n_cells();
  rec.geometry = params.cartesian
                   ? "cartesian"
                   : std::string(to_string(params.geometry));
  rec.lanes = params.W;
  rec.ranks = params.ranks;
  rec.n_dofs = w.n_dofs();
  rec.time_s = median;
  rec.dofs_per_s = static_cast<double>(rec.n_dofs) / median;
  // Counters are charged per lane batch; every lane executes the
  // arithmetic, so the per-application flop count scales with W.
  rec.flops = static_cast<double>(c.flops()) * params.W / applies;
  rec.bytes = modeled_bytes(w);
  rec.intensity = rec.bytes > 0 ? rec.flops / rec.bytes : 0.0;
  return rec;
}

void append_csv(const std::string &path, const BenchRecord &r)
{
  bool need_header = true;
  {
    std::ifstream in(path);
    std::string first;
    if (in && std::getline(in, first) && !first.empty())
      need_header = false;
  }
  std::ofstream out(path, std::ios::app);
  if (!out)
    throw std::runtime_error("cannot open csv file: " + path);
  if (need_header)
    out << csv_header << "\n";
  char buf[512];
  std::snprintf(buf, sizeof buf,
                "%s,%d,%d,%lld,%s,%d,%d,%lld,%.9e,%.6e,%.6e,%.6e,%.6e",
                r.op.c_str(), r.dim, r.degree, r.cells, r.geometry.c_str(),
                r.lanes, r.ranks, r.n_dofs, r.time_s, r.dofs_per_s, r.flops,
                r.bytes, r.intensity);
  out << buf << "\n";
}

std::vector<BenchRecord> read_csv(const std::string &path)
{
  std::ifstream in(path);
  if (!in)
    throw std::runtime_error("cannot open csv file: " + path);
  std::string line;
  if (!std::getline(in, line) || line != csv_header)
    throw std::runtime_error("csv file has an unexpected header: " + path);
  std::vector<BenchRecord> records;
  while (std::getline(in, line))
    {
      if (line.empty())
        continue;
      std::stringstream ss(line);
      std::string field;
      std::vector<std::string> fields;
      while (std::getline(ss, field, ','))
        fields.push_back(field);
      if (fields.size() != 13)
        throw std::runtime_error("malformed csv row: " + line);
      BenchRecord r;
      r.op = fields[0];
      r.dim = std::stoi(fields[1]);
      r.degree = std::stoi(fields[2]);
      r.cells = std::stoll(fields[3]);
      r.geometry = fields[4];
      r.lanes = std::stoi(fields[5]);
      r.ranks = std::stoi(fields[6]);
      r.n_dofs = std::stoll(fields[7]);
      r.time_s = std::stod(fields[8]);
      r.dofs_per_s = std::stod(fields[9]);
      r.flops = std::stod(fields[10]);
      r.bytes = std::stod(fields[11]);
      r.intensity = std::stod(fields[12]);
      records.push_back(std::move(r));
    }
  return records;
}

double time_dense_oracle_apply(const BenchParams &params)
{
  BenchParams p = params;
  p.ranks = 1;
  BenchWorld w(p);
  const Eigen::MatrixXd a = oracle::assemble_operator(w.cfg, w.mesh);
  Eigen::VectorXd x = Eigen::VectorXd::LinSpaced(a.cols(), 0.1, 1.0);
  Eigen::VectorXd y(a.rows());

  long long warm = 1;
  const auto warm_start = Clock::now();
  while (seconds_since(warm_start) < 0.2)
    for (long long i = 0; i < warm; ++i)
      y.noalias() = a * x;

  std::vector<double> times(5);
  for (double &t : times)
    {
      const auto t0 = Clock::now();
      y.noalias() = a * x;
      t = seconds_since(t0);
    }
  std::sort(times.begin(), times.end());
  return std::max(times[2], 1e-9);
}

namespace
{

// Smooth manufactured solution with nonzero boundary values.
double exact_solution(int d, const std::array<double, 3> &x)
{
  double u = std::cos(2.3 * x[0] + 0.4);
  u *= std::cos(1.7 * x[1] - 0.2);
  if (d == 3)
    u *= std::cos(1.1 * x[2] + 0.1);
  return u;
}

std::array<double, 3> exact_gradient(int d, const std::array<double, 3> &x)
{
  const double c0 = std::cos(2.3 * x[0] + 0.4), s0 = std::sin(2.3 * x[0] + 0.4);
  const double c1 = std::cos(1.7 * x[1] - 0.2), s1 = std::sin(1.7 * x[1] - 0.2);
  const double c2 = d == 3 ? std::cos(1.1 * x[2] + 0.1) : 1.0;
  const double s2 = d == 3 ? std::sin(1.1 * x[2] + 0.1) : 0.0;
  return {-2.3 * s0 * c1 * c2, -1.7 * c0 * s1 * c2, -1.1 * c0 * c1 * s2};
}

double exact_neg_laplacian(int d, const std::array<double, 3> &x)
{
  const double lam = 2.3 * 2.3 + 1.7 * 1.7 + (d == 3 ? 1.1 * 1.1 : 0.0);
  return lam * exact_solution(d, x);
}

// L2 error of the discrete solution (canonical cell-major coefficients)
// against the manufactured solution, by k-point Gauss quadrature per cell.
double l2_error(const Mesh &mesh, const OperatorConfig &cfg,
                const std::vector<double> &u_canonical)
{
  const int d = mesh.d, k = cfg.k();
  const Basis1D basis = make_basis(cfg.basis, cfg.p);
  const Quadrature1D quad = gauss_quadrature(k);
  std::vector<double> bval(static_cast<std::size_t>(k) * k);
  for (int q = 0; q < k; ++q)
    for (int j = 0; j < k; ++j)
      bval[q * k + j] = basis.value(j, quad.points[q]);

  const MappingEval mapping = build_mapping(mesh, mesh.mapping_degree);
  const long long dpc = detail::ipowll(k, d);
  std::vector<double> jac(9), inv(9);

  double err2 = 0;
  for (int cell = 0; cell < mesh.n_cells(); ++cell)
    {
      const double *coef = u_canonical.data() + cell * dpc;
      std::array<int, 3> qi{0, 0, 0};
      const int nq2 = d == 3 ? k : 1;
      for (qi[2] = 0; qi[2] < nq2; ++qi[2])
        for (qi[1] = 0; qi[1] < k; ++qi[1])
          for (qi[0] = 0; qi[0] < k; ++qi[0])
            {
              double uh = 0;
              std::array<int, 3> ji{0, 0, 0};
              const int nj2 = d == 3 ? k : 1;
              for (ji[2] = 0; ji[2] < nj2; ++ji[2])
                for (ji[1] = 0; ji[1] < k; ++ji[1])
                  {
                    double phi12 = bval[qi[1] * k + ji[1]];
                    if (d == 3)
                      phi12 *= bval[qi[2] * k + ji[2]];
                    const long long base = (ji[2] * k + ji[1]) *
                                           static_cast<long long>(k);
                    for (ji[0] = 0; ji[0] < k; ++ji[0])
                      uh += coef[base + ji[0]] * phi12 *
                            bval[qi[0] * k + ji[0]];
                  }

              double xi[3], x[3];
              double wq = 1.0;
              for (int a = 0; a < d; ++a)
                {
                  xi[a] = quad.points[qi[a]];
                  wq *= quad.weights[qi[a]];
                }
              mapping_point_jacobian(mapping.basis, d,
                                     mapping.cell_support(cell), xi, x,
                                     jac.data());
              const double det = invert_jacobian(d, jac.data(), inv.data());
              const std::array<double, 3> xp{x[0], x[1], d == 3 ? x[2] : 0.0};
              const double diff = uh - exact_solution(d, xp);
              err2 += diff * diff * det * wq;
            }
    }
  return std::sqrt(err2);
}

} // namespace

ConvergenceResult convergence_study(OperatorKind kind, int d, int p,
                                    int level_begin, int level_end)
{
  if (kind != OperatorKind::laplacian && kind != OperatorKind::advection)
    throw std::invalid_argument(
      "convergence_study: supported operators are laplace and advection");

  const std::array<double, 3> c{0.85, 0.6, 0.35};
  ConvergenceResult result;
  for (int level = level_begin; level <= level_end; ++level)
    {
      const int n = 1 << level;
      const Mesh mesh = make_box_mesh(d, n, 0.0, false);
      OperatorConfig cfg =
        make_operator_config(kind, d, p, 4, GeometryVariant::g3);
      cfg.velocity.constant = c;
      cfg.dirichlet = [d](const std::array<double, 3> &x) {
        return exact_solution(d, x);
      };
      if (kind == OperatorKind::laplacian)
        cfg.forcing = [d](const std::array<double, 3> &x) {
          return exact_neg_laplacian(d, x);
        };
      else
        cfg.forcing = [d, c](const std::array<double, 3> &x) {
          const std::array<double, 3> g = exact_gradient(d, x);
          double f = 0;
          for (int a = 0; a < d; ++a)
            f += c[a] * g[a];
          return f;
        };

      const std::vector<RawFace> faces = enumerate_faces(mesh);
      Partition partition = partition_cells(mesh, 1);
      assign_face_owners(mesh, faces, partition);
      auto geom = std::make_shared<GeometryCache>(
        precompute_geometry(mesh, faces, cfg.k(), cfg.k(), cfg.geometry,
                            cfg.equation(), cfg.velocity));
      RankOperator op(mesh, partition, faces, geom, cfg, 0);

      GhostedVector rhs = op.layout().make_vector();
      op.assemble_rhs(rhs);
      const std::vector<double> b(rhs.data.begin(),
                                  rhs.data.begin() + rhs.n_owned);

      const ApplyFn A = make_apply(op);
      std::vector<double> x;
      SolveReport rep;
      // Tight tolerances so the discretization error, not the solver
      // residual, dominates on the finest levels.
      if (kind == OperatorKind::laplacian)
        rep = conjugate_gradient(A, b, x, 1e-12, 100000);
      else
        rep = gmres(A, b, x, 1e-11, 100000, 30);
      if (!rep.converged)
        result.solvers_converged = false;

      GhostedVector sol = op.layout().make_vector();
      std::copy(x.begin(), x.end(), sol.data.begin());
      std::vector<double> canonical;
      to_canonical(op.layout(), sol, canonical);

      ConvergenceLevel lvl;
      lvl.level = level;
      lvl.n_dofs = static_cast<long long>(mesh.n_cells()) *
                   op.layout().dofs_per_cell;
      lvl.l2_error = l2_error(mesh, cfg, canonical);
      lvl.solve = rep;
      if (!result.levels.empty() && lvl.l2_error > 0)
        lvl.rate = std::log2(result.levels.back().l2_error / lvl.l2_error);
      result.levels.push_back(lvl);
    }
  return result;
}

std::vector<RooflineRow> roofline(const std::vector<BenchRecord> &records,
                                  double peak_flops_per_s,
                                  double bandwidth_bytes_per_s)
{
  const double knee = peak_flops_per_s / bandwidth_bytes_per_s;
  std::vector<RooflineRow> rows;
  for (const BenchRecord &r : records)
    {
      RooflineRow row;
      row.record = r;
      row.achieved_flops_per_s = r.time_s > 0 ? r.flops / r.time_s : 0.0;
      row.ceiling = std::min(peak_flops_per_s,
                             r.intensity * bandwidth_bytes_per_s);
      row.compute_bound = r.intensity >= knee;
      rows.push_back(row);
    }
  return rows;
}

} // namespace bench
} // namespace dg
