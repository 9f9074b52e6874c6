// Benchmark driver for the tiled QR and Barnes-Hut task graphs.
//
//   qsbench qr --m 32 --n 32 --b 64 --threads 8 --runs 10 --report
//   qsbench bh --nparts 100000 --nmax 100 --ntask 5000 --verify
//
// Reports are key=value lines on stdout. Exit status: 0 ok, 1 usage error,
// 2 verification or trace-validation failure.

#include <CLI11.hpp>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "bh/barnes_hut.hpp"
#include "qr/tiled_qr.hpp"
#include "qsched/scheduler.hpp"

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitVerify = 2;

// Twice the worst relative L2 error over seeds 1-5 at N = 1e4, n_max = 16,
// n_task = 256. Same bound as the BH accuracy test.
constexpr double kBhDefaultTolerance = 6.925e-3;

struct Common {
  int threads = 1;
  int runs = 1;
  std::uint64_t seed = 1;
  std::string trace;
  bool verify = false;
  bool report = false;
  bool park = false;
};

int default_threads() {
  if (const char* env = std::getenv("QS_THREADS")) {
    try {
      const int v = std::stoi(env);
      if (v > 0) return v;
    } catch (const std::exception&) {
    }
    std::cerr << "warning: ignoring QS_THREADS='" << env << "'\n";
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

double ms(std::int64_t ns) { return static_cast<double>(ns) * 1e-6; }

using Clock = std::chrono::steady_clock;

std::int64_t since_ns(Clock::time_point t0) {
  return std::chrono::duration_cast<std::chrono::nanoseconds>(Clock::now() - t0).count();
}

struct Timings {
  std::vector<std::int64_t> wall_ns;
  std::int64_t gettask_ns = 0;
  std::int64_t busy_ns = 0;
  std::vector<std::int64_t> last_gettask_ns;

  void add(const qsched::RunReport& r) {
    wall_ns.push_back(r.wall_ns);
    gettask_ns += r.total_gettask_ns();
    busy_ns += r.total_busy_ns();
    last_gettask_ns = r.gettask_ns;
  }

  void print(std::ostream& os) const {
    if (wall_ns.empty()) return;
    std::int64_t sum = 0;
    for (auto w : wall_ns) sum += w;
    os << "runs=" << wall_ns.size() << '\n';
    os << "wall_ms_avg=" << ms(sum) / static_cast<double>(wall_ns.size()) << '\n';
    os << "wall_ms=";
    for (std::size_t i = 0; i < wall_ns.size(); ++i) os << (i ? "," : "") << ms(wall_ns[i]);
    os << '\n';
    os << "gettask_ms=";
    for (std::size_t i = 0; i < last_gettask_ns.size(); ++i) os << (i ? "," : "") << ms(last_gettask_ns[i]);
    os << '\n';
    os << "busy_ms_total=" << ms(busy_ns) << '\n';
    os << "overhead_fraction=" << (busy_ns > 0 ? static_cast<double>(gettask_ns) / static_cast<double>(busy_ns) : 0.0)
       << '\n';
  }
};

// Validates the last run's trace and writes it. Returns false on violations.
bool emit_trace(const Common& c, const qsched::Scheduler& s, const qsched::RunReport& last) {
  const auto check = qsched::validate_trace(last.records, s.tasks(), s.resources());
  if (c.report || !check.ok()) std::cout << "trace_violations=" << check.violations.size() << '\n';
  for (std::size_t i = 0; i < check.violations.size() && i < 10; ++i) {
    const auto& v = check.violations[i];
    std::cerr << "trace violation: " << qsched::to_string(v.kind) << " task " << v.a.value << " / " << v.b.value
              << '\n';
  }
  if (!check.ok()) return false;
  if (!c.trace.empty()) qsched::write_trace_csv(c.trace, last.records);
  return true;
}

qsched::SchedulerConfig make_config(const Common& c, bool reown) {
  qsched::SchedulerConfig cfg;
  cfg.idle_policy = c.park ? qsched::IdlePolicy::park : qsched::IdlePolicy::spin;
  cfg.reown = reown;
  cfg.rng_seed = c.seed;
  return cfg;
}

struct QrOptions {
  int m = 32;
  int n = 32;
  int b = 64;
  bool single = false;
  bool no_uses = false;
};

template <typename Scalar>
int run_qr(const Common& c, const QrOptions& o) {
  const auto setup0 = Clock::now();
  qsched::Scheduler s(c.threads, make_config(c, true));
  const qr::QrGraph g = qr::make_tasks(s, o.m, o.n, !o.no_uses);
  const std::int64_t setup_ns = since_ns(setup0);

  std::cout << "app=qr m=" << o.m << " n=" << o.n << " b=" << o.b << " threads=" << c.threads
            << " precision=" << (o.single ? "float" : "double") << " seed=" << c.seed << '\n';
  std::cout << "tasks=" << s.task_count() << " deps=" << g.level_deps << " resources=" << s.resource_count()
            << " locks=" << s.lock_count() << " uses=" << s.use_count() << " unlocks=" << s.unlock_count() << '\n';
  if (c.report) {
    std::cout << "level_deps=" << g.level_deps << '\n';
    std::cout << "carry_deps=" << g.carry_deps << '\n';
    std::cout << "setup_ms=" << ms(setup_ns) << '\n';
  }
  if (c.runs == 0) return 0;

  const auto original = qr::TiledMatrix<Scalar>::random(o.m, o.n, o.b, c.seed);
  const auto dense = original.to_dense();
  auto a = original;
  Timings timings;
  qsched::RunReport last;
  for (int r = 0; r < c.runs; ++r) {
    a = original;
    last = s.run(c.threads, qr::make_exec(a));
    timings.add(last);
  }
  if (c.report) timings.print(std::cout);
  bool ok = emit_trace(c, s, last);

  if (c.verify) {
    const auto check = qr::verify<Scalar>(dense, a);
    const double scale = std::max(1.0, static_cast<double>(dense.rows()) / 256.0);
    const double tol = (o.single ? 1e-4 : 1e-12) * scale;
    const bool pass = check.residual <= tol && check.orthogonality <= tol;
    std::cout << std::scientific << std::setprecision(3) << "residual=" << check.residual
              << "\northogonality=" << check.orthogonality << "\nr_abs_max_diff=" << check.r_abs_max_diff
              << "\ntolerance=" << tol << std::defaultfloat << "\nverify=" << (pass ? "PASS" : "FAIL") << '\n';
    ok = ok && pass;
  }
  return ok ? 0 : kExitVerify;
}

struct BhOptions {
  std::size_t nparts = 10000;
  int nmax = 100;
  int ntask = 5000;
  double epsilon = 0;
  double tolerance = kBhDefaultTolerance;
  std::string input;
};

std::vector<bh::Particle> load_particles(const std::string& path, bh::Vec3& lo, bh::Vec3& hi) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open particle file '" + path + "'");
  std::vector<bh::Particle> parts;
  std::string line;
  std::size_t lineno = 0;
  lo.setConstant(std::numeric_limits<double>::infinity());
  hi.setConstant(-std::numeric_limits<double>::infinity());
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    for (char& ch : line)
      if (ch == ',') ch = ' ';
    std::istringstream row(line);
    bh::Particle p;
    if (!(row >> p.id >> p.mass >> p.x.x() >> p.x.y() >> p.x.z())) {
      if (parts.empty() && lineno == 1) continue;  // header
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": expected id,mass,x,y,z");
    }
    if (!(p.mass > 0)) throw std::runtime_error(path + ":" + std::to_string(lineno) + ": mass must be positive");
    lo = lo.cwiseMin(p.x);
    hi = hi.cwiseMax(p.x);
    parts.push_back(p);
  }
  return parts;
}

int run_bh(const Common& c, const BhOptions& o) {
  bh::Vec3 loc = bh::Vec3::Zero();
  bh::Vec3 h = bh::Vec3::Ones();
  std::vector<bh::Particle> parts;
  if (o.input.empty()) {
    parts = bh::uniform_particles(o.nparts, c.seed);
  } else {
    bh::Vec3 lo, hi;
    parts = load_particles(o.input, lo, hi);
    if (!parts.empty()) {
      const double edge = std::max((hi - lo).maxCoeff(), 1e-9) * (1 + 1e-9);
      loc = lo;
      h.setConstant(edge);
    }
  }

  const auto setup0 = Clock::now();
  bh::Octree tree = bh::build_octree(std::move(parts), o.nmax, loc, h);
  qsched::Scheduler s(c.threads, make_config(c, false));
  const bh::BhGraph g = bh::make_tasks(s, tree, o.ntask);
  const std::int64_t setup_ns = since_ns(setup0);

  std::cout << "app=bh nparts=" << tree.parts.size() << " nmax=" << o.nmax << " ntask=" << o.ntask
            << " threads=" << c.threads << " seed=" << c.seed << '\n';
  std::cout << "tasks=" << s.task_count() << " deps=" << s.unlock_count() << " resources=" << s.resource_count()
            << " locks=" << s.lock_count() << " uses=" << s.use_count() << '\n';
  if (c.report) {
    std::cout << "self_tasks=" << g.self_tasks << " pair_tasks=" << g.pair_tasks << " pc_tasks=" << g.pc_tasks
              << " com_tasks=" << g.com_tasks << '\n';
    std::cout << "cells=" << tree.cells.size() << " leaves=" << tree.leaf_count() << '\n';
    std::cout << "setup_ms=" << ms(setup_ns) << '\n';
  }
  if (c.runs == 0) return 0;

  Timings timings;
  qsched::RunReport last;
  for (int r = 0; r < c.runs; ++r) {
    bh::clear_accelerations(tree);
    last = s.run(c.threads, bh::make_exec(tree, o.epsilon));
    timings.add(last);
  }
  if (c.report) timings.print(std::cout);
  bool ok = emit_trace(c, s, last);

  if (c.verify) {
    const auto ref = bh::direct_sum(tree.parts, o.epsilon);
    const double err = bh::relative_l2_error(tree.parts, ref);
    const bool pass = err <= o.tolerance;
    std::cout << std::scientific << std::setprecision(3) << "rel_l2_error=" << err << "\ntolerance=" << o.tolerance
              << std::defaultfloat << "\nverify=" << (pass ? "PASS" : "FAIL") << '\n';
    ok = ok && pass;
  }
  return ok ? 0 : kExitVerify;
}

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--threads", c.threads, "Worker threads (default: QS_THREADS or all cores)")
      ->check(CLI::PositiveNumber);
  sub->add_option("--runs", c.runs, "Timed runs; 0 builds the graph only")->check(CLI::NonNegativeNumber);
  sub->add_option("--seed", c.seed, "Input and work-stealing seed");
  sub->add_option("--trace", c.trace, "Write the last run's task timeline as CSV");
  sub->add_flag("--verify", c.verify, "Check the result against the reference");
  sub->add_flag("--report", c.report, "Print graph statistics and timings");
  sub->add_flag("--park", c.park, "Park idle workers instead of spinning");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Task scheduler benchmarks: tiled QR and Barnes-Hut"};
  app.require_subcommand(1);

  Common common;
  common.threads = default_threads();

  QrOptions qo;
  auto* qr_cmd = app.add_subcommand("qr", "Tiled QR factorization of a random matrix");
  qr_cmd->add_option("--m", qo.m, "Tile rows")->check(CLI::PositiveNumber);
  qr_cmd->add_option("--n", qo.n, "Tile columns")->check(CLI::PositiveNumber);
  qr_cmd->add_option("--b", qo.b, "Tile edge")->check(CLI::PositiveNumber);
  qr_cmd->add_flag("--float", qo.single, "Single precision");
  qr_cmd->add_flag("--no-uses", qo.no_uses, "Do not register read-only uses");
  add_common(qr_cmd, common);

  BhOptions bo;
  auto* bh_cmd = app.add_subcommand("bh", "Barnes-Hut accelerations for N particles");
  bh_cmd->add_option("--nparts", bo.nparts, "Particles drawn uniformly from the unit cube");
  bh_cmd->add_option("--nmax", bo.nmax, "Max particles per leaf")->check(CLI::PositiveNumber);
  bh_cmd->add_option("--ntask", bo.ntask, "Task recursion floor")->check(CLI::PositiveNumber);
  bh_cmd->add_option("--epsilon", bo.epsilon, "Plummer softening")->check(CLI::NonNegativeNumber);
  bh_cmd->add_option("--tol", bo.tolerance, "Relative L2 error bound for --verify");
  bh_cmd->add_option("--input", bo.input, "Particle CSV with columns id,mass,x,y,z")->check(CLI::ExistingFile);
  add_common(bh_cmd, common);

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (qr_cmd->parsed()) return qo.single ? run_qr<float>(common, qo) : run_qr<double>(common, qo);
    return run_bh(common, bo);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  }
}
