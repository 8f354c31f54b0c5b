#include <CLI11.hpp>

#include <dg/bench.hpp>
#include <dg/verify.hpp>

#include <cstdio>
#include <string>
#include <vector>

namespace
{

int cmd_verify(const std::string &suite, int dim, int degree)
{
  if (!suite.empty())
    {
      bool known = false;
      for (const std::string &s : dg::verify::suite_names())
        known = known || s == suite;
      if (!known)
        {
          std::fprintf(stderr, "unknown suite '%s'\n", suite.c_str());
          return 2;
        }
    }
  dg::verify::Filter filter;
  filter.suite = suite;
  filter.dim = dim;
  filter.degree = degree;
  const std::vector<dg::verify::CheckResult> results =
    dg::verify::run_suites(filter);
  int failed = 0;
  for (const auto &r : results)
    {
      std::printf("[%s] %-9s %s", r.passed ? "PASS" : "FAIL",
                  r.suite.c_str(), r.name.c_str());
      if (!r.detail.empty())
        std::printf("  (%s)", r.detail.c_str());
      std::printf("\n");
      failed += r.passed ? 0 : 1;
    }
  std::printf("%zu checks, %d failed\n", results.size(), failed);
  return failed == 0 ? 0 : 1;
}

int cmd_bench(const dg::bench::BenchParams &params, const std::string &csv)
{
  const dg::bench::BenchRecord r = dg::bench::run_benchmark(params);
  std::printf("%s\n", dg::bench::csv_header);
  std::printf("%s,%d,%d,%lld,%s,%d,%d,%lld,%.9e,%.6e,%.6e,%.6e,%.6e\n",
              r.op.c_str(), r.dim, r.degree, r.cells, r.geometry.c_str(),
              r.lanes, r.ranks, r.n_dofs, r.time_s, r.dofs_per_s, r.flops,
              r.bytes, r.intensity);
  std::printf("# bytes is a traffic model: two vector reads, one vector "
              "write, plus geometry records\n");
  if (!csv.empty())
    dg::bench::append_csv(csv, r);
  return 0;
}

int cmd_convergence(dg::OperatorKind kind, int d, int p, int level_begin,
                    int level_end)
{
  const dg::bench::ConvergenceResult res =
    dg::bench::convergence_study(kind, d, p, level_begin, level_end);
  std::printf("%-6s %-10s %-14s %-8s %-6s %s\n", "level", "n_dofs",
              "l2_error", "rate", "iters", "residual");
  for (const auto &lvl : res.levels)
    std::printf("%-6d %-10lld %-14.6e %-8.3f %-6d %.3e\n", lvl.level,
                lvl.n_dofs, lvl.l2_error, lvl.rate, lvl.solve.iterations,
                lvl.solve.relative_residual);
  if (!res.solvers_converged)
    {
      std::fprintf(stderr, "solver did not reach the residual target\n");
      return 1;
    }
  return 0;
}

int cmd_roofline(double peak, double bw, const std::string &csv)
{
  std::vector<dg::bench::BenchRecord> records;
  try
    {
      records = dg::bench::read_csv(csv);
    }
  catch (const std::exception &e)
    {
      std::fprintf(stderr, "%s\n", e.what());
      return 2;
    }
  const double knee = peak / bw;
  std::printf("# peak %.3e flop/s, bandwidth %.3e B/s, knee intensity "
              "%.3f flop/B\n",
              peak, bw, knee);
  std::printf("%-10s %-4s %-4s %-10s %-10s %-12s %-12s %s\n", "operator",
              "dim", "p", "geometry", "intensity", "achieved", "ceiling",
              "binding");
  for (const auto &row : dg::bench::roofline(records, peak, bw))
    std::printf("%-10s %-4d %-4d %-10s %-10.4f %-12.4e %-12.4e %s\n",
                row.record.op.c_str(), row.record.dim, row.record.degree,
                row.record.geometry.c_str(), row.record.intensity,
                row.achieved_flops_per_s, row.ceiling,
                row.compute_bound ? "compute-bound" : "memory-bound");
  return 0;
}

} // namespace

int main(int argc, char **argv)
{
  CLI::App app{"Matrix-free high-order DG operator benchmark harness"};
  app.require_subcommand(1);

  // verify
  auto *verify = app.add_subcommand("verify", "run verification suites");
  std::string suite;
  int vdim = 0, vdeg = 0;
  verify->add_option("--suite", suite, "suite name");
  verify->add_option("--dim", vdim, "restrict to dimension")
    ->check(CLI::IsMember({2, 3}));
  verify->add_option("--degree", vdeg, "restrict to polynomial degree");

  // bench
  auto *bench = app.add_subcommand("bench", "time operator applications");
  std::string op_name = "laplace", geom_name = "g3", csv_path;
  dg::bench::BenchParams params;
  bench->add_option("--operator", op_name, "mass|invmass|advection|laplace");
  bench->add_option("--dim", params.d, "space dimension")
    ->check(CLI::IsMember({2, 3}));
  bench->add_option("--degree", params.p, "polynomial degree")
    ->check(CLI::Range(1, 12));
  bench->add_option("--cells", params.cells, "target total cell count")
    ->check(CLI::PositiveNumber);
  bench->add_option("--geometry", geom_name, "g1|g2|g3|g4|cartesian");
  bench->add_option("--lanes", params.W, "SIMD lane width")
    ->check(CLI::IsMember({1, 2, 4, 8}));
  bench->add_option("--ranks", params.ranks, "simulated ranks")
    ->check(CLI::Range(1, 64));
  bench->add_option("--reps", params.reps, "timed repetitions (>= 5 used)");
  bench->add_option("--csv", csv_path, "append the record to this file");

  // convergence
  auto *conv = app.add_subcommand("convergence", "manufactured solution study");
  std::string conv_op = "laplace", levels = "3..5";
  int cdim = 2, cdeg = 2;
  conv->add_option("--operator", conv_op, "laplace|advection");
  conv->add_option("--dim", cdim, "space dimension")
    ->check(CLI::IsMember({2, 3}));
  conv->add_option("--degree", cdeg, "polynomial degree")
    ->check(CLI::Range(1, 8));
  conv->add_option("--levels", levels, "refinement range A..B");

  // roofline
  auto *roof = app.add_subcommand("roofline", "roofline report from a csv");
  double peak = 0, bw = 0;
  std::string roof_csv;
  roof->add_option("--peak", peak, "peak flop/s")
    ->required()
    ->check(CLI::PositiveNumber);
  roof->add_option("--bw", bw, "memory bandwidth B/s")
    ->required()
    ->check(CLI::PositiveNumber);
  roof->add_option("--csv", roof_csv, "benchmark csv file")->required();

  try
    {
      app.parse(argc, argv);
    }
  catch (const CLI::ParseError &e)
    {
      app.exit(e);
      return e.get_exit_code() == 0 ? 0 : 2;
    }

  try
    {
      if (verify->parsed())
        return cmd_verify(suite, vdim, vdeg);
      if (bench->parsed())
        {
          if (!dg::bench::parse_operator(op_name, params.kind))
            {
              std::fprintf(stderr, "unknown operator '%s'\n", op_name.c_str());
              return 2;
            }
          if (!dg::bench::parse_geometry(geom_name, params.geometry,
                                         params.cartesian))
            {
              std::fprintf(stderr, "unknown geometry '%s'\n",
                           geom_name.c_str());
              return 2;
            }
          return cmd_bench(params, csv_path);
        }
      if (conv->parsed())
        {
          dg::OperatorKind kind;
          if (!dg::bench::parse_operator(conv_op, kind) ||
              (kind != dg::OperatorKind::laplacian &&
               kind != dg::OperatorKind::advection))
            {
              std::fprintf(stderr, "unknown operator '%s'\n",
                           conv_op.c_str());
              return 2;
            }
          const auto pos = levels.find("..");
          if (pos == std::string::npos)
            {
              std::fprintf(stderr, "levels must be given as A..B\n");
              return 2;
            }
          int a = 0, b = 0;
          try
            {
              a = std::stoi(levels.substr(0, pos));
              b = std::stoi(levels.substr(pos + 2));
            }
          catch (const std::exception &)
            {
              std::fprintf(stderr, "levels must be given as A..B\n");
              return 2;
            }
          if (a < 1 || b < a || b > 8)
            {
              std::fprintf(stderr, "invalid level range %d..%d\n", a, b);
              return 2;
            }
          return cmd_convergence(kind, cdim, cdeg, a, b);
        }
      if (roof->parsed())
        return cmd_roofline(peak, bw, roof_csv);
    }
  catch (const std::exception &e)
    {
      std::fprintf(stderr, "error: %s\n", e.what());
      return 1;
    }
  return 2;
}
