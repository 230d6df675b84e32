// oulog: simulate OU paths, estimate the drift, verify the limit theorems.
//
// Exit codes: 0 success, 1 verification failure, 2 usage or config error,
// 3 I/O error, 4 degenerate path.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "oulog/csv.hpp"
#include "oulog/errors.hpp"
#include "oulog/estimators.hpp"
#include "oulog/montecarlo.hpp"
#include "oulog/ou_process.hpp"
#include "oulog/weights.hpp"

namespace fs = std::filesystem;
using namespace oulog;

namespace {

constexpr int kVerifyFailed = 1;
constexpr int kUsage = 2;
constexpr int kIo = 3;
constexpr int kDegenerate = 4;

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct CommonArgs {
  std::string config_path;
  std::vector<std::string> sets;
  std::string out = ".";
  int threads = 0;
  std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "key=value config file");
  cmd->add_option("--set", args.sets, "override key=value (repeatable)")->expected(1)->multi_option_policy(
      CLI::MultiOptionPolicy::TakeAll);
  cmd->add_option("--out", args.out, "output directory");
  cmd->add_option("--threads", args.threads, "worker cap (0: OpenMP default)")->check(CLI::NonNegativeNumber);
  cmd->add_option("--seed", args.seed, "seed root");
}

/// defaults < config file < OULOG_* environment < --set < --seed/--threads
ExperimentConfig load_config(const CommonArgs& args) {
  KeyValues kv;
  if (!args.config_path.empty()) {
    kv = read_key_value_file(args.config_path);
  }
  apply_environment(kv);
  for (const auto& s : args.sets) {
    auto [k, v] = parse_assignment(s);
    kv[k] = v;
  }
  if (args.seed) {
    kv.erase("seed");
    kv["seed_root"] = std::to_string(*args.seed);
  }
  if (args.threads > 0) {
    kv["threads"] = std::to_string(args.threads);
  }
  return config_from_key_values(kv);
}

fs::path prepare_out(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) {
    throw IoError("cannot create output directory '" + dir + "'");
  }
  return fs::path(dir);
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream out(p, std::ios::binary);
  if (!out) {
    throw IoError("cannot write '" + p.string() + "'");
  }
  return out;
}

void close_out(std::ofstream& out, const fs::path& p) {
  out.close();
  if (!out) {
    throw IoError("write failed for '" + p.string() + "'");
  }
}

void write_provenance(const fs::path& dir, const ExperimentConfig& config, Provenance prov,
                      const std::vector<fs::path>& files) {
  prov.config_hash = config_hash(config);
  std::map<std::string, std::uint64_t> hashes;
  for (const auto& f : files) {
    hashes[f.filename().string()] = csv::fnv1a_file(f.string());
  }
  const fs::path p = dir / "provenance.json";
  auto out = open_out(p);
  write_provenance_json(out, config, prov, hashes);
  close_out(out, p);
}

SamplePath read_path_csv(const std::string& path) {
  csv::Table table;
  try {
    table = csv::read_file(path);
  } catch (const InvalidArgument&) {
    throw;
  } catch (const std::exception& e) {
    throw IoError(e.what());
  }
  const std::size_t ct = table.column("t");
  const std::size_t cx = table.column("x");
  std::optional<std::size_t> cdb;
  for (std::size_t i = 0; i < table.header.size(); ++i) {
    if (table.header[i] == "db") cdb = i;
  }
  if (table.rows.size() < 2) {
    throw InvalidArgument("path needs at least two rows");
  }
  std::vector<double> t;
  std::vector<double> x;
  std::vector<double> db;
  for (const auto& row : table.rows) {
    t.push_back(csv::to_double(row[ct]));
    x.push_back(csv::to_double(row[cx]));
    if (cdb && !row[*cdb].empty()) db.push_back(csv::to_double(row[*cdb]));
  }
  if (t.front() != 0.0) {
    throw InvalidArgument("path must start at t = 0");
  }
  const double dt = t[1] - t[0];
  for (std::size_t i = 1; i < t.size(); ++i) {
    if (std::abs((t[i] - t[i - 1]) - dt) > 1e-9 * std::max(1.0, t[i])) {
      throw InvalidArgument("path times must be equally spaced");
    }
  }
  const SimGrid grid = SimGrid::make(t.back(), dt);
  if (grid.n_steps + 1 != x.size()) {
    throw InvalidArgument("path time column inconsistent with its length");
  }
  std::optional<std::vector<double>> brownian;
  if (cdb) {
    if (db.size() < grid.n_steps) {
      throw InvalidArgument("db column needs n_steps values");
    }
    db.resize(grid.n_steps);
    brownian = std::move(db);
  }
  return SamplePath::from_values(grid, std::move(x), std::move(brownian));
}

int cmd_simulate(const CommonArgs& args) {
  const ExperimentConfig config = load_config(args);
  config.validate_basic();
  const SimGrid grid = config.grid();
  const fs::path dir = prepare_out(args.out);
  const fs::path p = dir / "path.csv";
  auto out = open_out(p);
  const bool euler = config.scheme == Scheme::euler;
  csv::write_row(out, euler ? std::vector<std::string>{"t", "x", "db"} : std::vector<std::string>{"t", "x"});
  PathStepper stepper(config.params, grid, split_seed(config.seed_root, 0), config.scheme);
  double x_last = 0.0;
  while (!stepper.done()) {
    const PathStep s = stepper.next();
    if (euler) {
      csv::write_row(out, {csv::number(s.t), csv::number(s.x), csv::number(s.db)});
    } else {
      csv::write_row(out, {csv::number(s.t), csv::number(s.x)});
    }
    x_last = s.x_next;
  }
  const std::string t_last = csv::number(grid.time(grid.n_steps));
  if (euler) {
    csv::write_row(out, {t_last, csv::number(x_last), ""});
  } else {
    csv::write_row(out, {t_last, csv::number(x_last)});
  }
  close_out(out, p);
  Provenance prov;
  prov.seeds.push_back(split_seed(config.seed_root, 0));
  write_provenance(dir, config, prov, {p});
  std::cout << "wrote " << p.string() << " (" << grid.n_steps + 1 << " rows)\n";
  return 0;
}

int cmd_estimate(const CommonArgs& args) {
  const ExperimentConfig config = load_config(args);
  config.validate_basic();
  SamplePath path;
  if (!config.input.empty()) {
    path = read_path_csv(config.input);
  } else {
    path = simulate_path(config.params, config.grid(), split_seed(config.seed_root, 0), config.scheme);
  }
  const SimGrid& grid = path.grid;
  const double T = grid.time(grid.n_steps);
  if (!(config.burn_in < T)) {
    throw ConfigError("burn_in must be below the path horizon");
  }
  double lo = std::min(config.checkpoint_t_min, T);
  if (lo <= config.burn_in) {
    lo = std::min(T, config.burn_in + grid.dt);
  }
  const double hi = std::min(config.checkpoint_end(), T);
  std::vector<double> times = lo < hi ? geometric_checkpoints(lo, hi, config.points_per_decade) : std::vector<double>{};
  times.push_back(T);

  const WeightSchedule weights(WeightFamily(config.alpha), grid);
  EngineOptions opts;
  opts.burn_in = config.burn_in;
  opts.weights = &weights;
  opts.bar_source = config.bar_source;
  const EstimatorTrace trace = estimate_path(path, opts, times);

  const fs::path dir = prepare_out(args.out);
  const fs::path tp = dir / "trace.csv";
  {
    auto out = open_out(tp);
    csv::write_row(out, {"t", "theta_hat", "theta_tilde", "theta_bar"});
    for (const auto& r : trace.checkpoints) {
      csv::write_row(out, {csv::number(r.t), csv::number(r.theta_hat), csv::number(r.theta_tilde),
                           csv::number(r.theta_bar)});
    }
    close_out(out, tp);
  }
  const fs::path dp = dir / "derived.json";
  const DerivedEstimates& d = trace.final().derived;
  {
    nlohmann::ordered_json j;
    j["sigma_hat2"] = d.sigma_hat2;
    j["theta_check"] = d.theta_check;
    j["sigma_tilde2"] = d.sigma_tilde2;
    j["theta_breve"] = d.theta_breve;
    auto out = open_out(dp);
    out << j.dump(2) << '\n';
    close_out(out, dp);
  }
  Provenance prov;
  if (config.input.empty()) prov.seeds.push_back(split_seed(config.seed_root, 0));
  write_provenance(dir, config, prov, {tp, dp});
  const auto& f = trace.final();
  std::printf("T=%g theta_hat=%.6g theta_tilde=%.6g theta_bar=%.6g\n", f.t, f.theta_hat, f.theta_tilde,
              f.theta_bar);
  std::printf("sigma_hat2=%.6g theta_check=%.6g sigma_tilde2=%.6g theta_breve=%.6g\n", d.sigma_hat2,
              d.theta_check, d.sigma_tilde2, d.theta_breve);
  return 0;
}

void print_reports(const std::vector<TheoremReport>& reports) {
  for (const auto& r : reports) {
    std::printf("%-4s %-40s %-4s value=%-12.6g reference=%-10.6g tolerance=%.3g (%s)\n", r.theorem_id.c_str(),
                r.statistic.c_str(), r.pass ? "PASS" : "FAIL", r.value, r.reference, r.tolerance,
                std::string(to_string(r.criterion)).c_str());
  }
}

int cmd_verify(const CommonArgs& args) {
  const ExperimentConfig config = load_config(args);
  config.validate_for_experiment();
  const fs::path dir = prepare_out(args.out);
  const ExperimentReport report = run_experiment(config, {Execution::parallel, args.threads});
  std::vector<fs::path> files;
  const fs::path rp = dir / "reports.csv";
  {
    auto out = open_out(rp);
    write_reports_csv(out, report.reports);
    close_out(out, rp);
    files.push_back(rp);
  }
  if (!report.summaries.empty()) {
    const fs::path sp = dir / "summaries.csv";
    auto out = open_out(sp);
    write_summaries_csv(out, report.summaries);
    close_out(out, sp);
    files.push_back(sp);
  }
  if (!report.lemma_table.empty()) {
    const fs::path lp = dir / "lemmas.csv";
    auto out = open_out(lp);
    write_lemma_csv(out, report.lemma_table);
    close_out(out, lp);
    files.push_back(lp);
  }
  write_provenance(dir, config, report.provenance, files);
  print_reports(report.reports);
  if (!report.provenance.excluded.empty()) {
    std::printf("excluded replicas: %zu of %zu\n", report.provenance.excluded.size(), config.replicas);
  }
  const bool ok = report.all_pass();
  std::printf("%s (constants=%s, config %s)\n", ok ? "all checks passed" : "verification FAILED",
              std::string(to_string(config.constants)).c_str(), csv::hex(report.provenance.config_hash).c_str());
  return ok ? 0 : kVerifyFailed;
}

int cmd_lemmas(const CommonArgs& args) {
  ExperimentConfig config = load_config(args);
  if (!(config.alpha > 0.5 && config.alpha < 1.0)) {
    throw ConfigError("alpha must lie in (1/2, 1)");
  }
  for (double t : config.lemma_times) {
    if (!(t >= 1.0)) throw ConfigError("lemma_times must be >= 1");
  }
  const auto rows = lemma_table(config);
  const fs::path dir = prepare_out(args.out);
  const fs::path lp = dir / "lemmas.csv";
  auto out = open_out(lp);
  write_lemma_csv(out, rows);
  close_out(out, lp);
  write_provenance(dir, config, Provenance{}, {lp});
  for (const auto& r : rows) {
    std::printf("t=%-8g alpha=%-5g r1=%-12.6g r2=%-12.6g r3=%-12.6g r4=%-12.6g t^a V2/U2=%.6g%s\n", r.t, r.alpha,
                r.r1, r.r2, r.r3, r.r4, r.v2_over_u2_scaled, r.accuracy_warning ? " (accuracy warning)" : "");
  }
  return 0;
}

int cmd_report(const std::string& dir) {
  const fs::path rp = fs::path(dir) / "reports.csv";
  csv::Table table;
  try {
    table = csv::read_file(rp.string());
  } catch (const InvalidArgument&) {
    throw;
  } catch (const std::exception& e) {
    throw IoError(e.what());
  }
  const std::size_t cid = table.column("theorem_id");
  const std::size_t cst = table.column("statistic");
  const std::size_t cv = table.column("value");
  const std::size_t cr = table.column("reference");
  const std::size_t ctol = table.column("tolerance");
  const std::size_t cp = table.column("pass");
  const std::size_t cT = table.column("T");
  const std::size_t crep = table.column("replicas");
  struct Tally {
    std::size_t pass = 0;
    std::size_t total = 0;
  };
  std::map<std::string, Tally> tally;
  std::vector<std::string> order;
  for (const auto& row : table.rows) {
    auto [it, inserted] = tally.try_emplace(row[cid]);
    if (inserted) order.push_back(row[cid]);
    it->second.total++;
    if (row[cp] == "1") it->second.pass++;
  }
  std::printf("%-6s %8s\n", "check", "passed");
  std::size_t failed = 0;
  for (const auto& id : order) {
    const auto& t = tally[id];
    std::printf("%-6s %4zu/%-3zu\n", id.c_str(), t.pass, t.total);
    failed += t.total - t.pass;
  }
  if (!table.rows.empty()) {
    std::printf("horizon T=%s, replicas=%s\n", table.rows.front()[cT].c_str(), table.rows.front()[crep].c_str());
  }
  if (failed > 0) {
    std::printf("\nfailing rows:\n");
    for (const auto& row : table.rows) {
      if (row[cp] == "1") continue;
      std::printf("  %-4s %-40s value=%s reference=%s tolerance=%s\n", row[cid].c_str(), row[cst].c_str(),
                  row[cv].c_str(), row[cr].c_str(), row[ctol].c_str());
    }
  }
  const fs::path sp = fs::path(dir) / "summaries.csv";
  if (fs::exists(sp)) {
    const csv::Table s = csv::read_file(sp.string());
    const std::size_t ce = s.column("estimator");
    const std::size_t ct = s.column("t");
    const std::size_t cm = s.column("median");
    std::printf("\nmedian |error| at the last checkpoint:\n");
    for (std::size_t i = 0; i < s.rows.size(); ++i) {
      const bool last = i + 1 == s.rows.size() || s.rows[i + 1][ce] != s.rows[i][ce];
      if (last) {
        std::printf("  %-12s t=%-10s %s\n", s.rows[i][ce].c_str(), s.rows[i][ct].c_str(), s.rows[i][cm].c_str());
      }
    }
  }
  const fs::path pp = fs::path(dir) / "provenance.json";
  if (fs::exists(pp)) {
    std::printf("\nprovenance: %s\n", pp.string().c_str());
  }
  std::printf("%zu of %zu checks failed\n", failed, table.rows.size());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Drift estimation and limit-theorem checks for the Ornstein-Uhlenbeck process"};
  app.require_subcommand(1);
  app.footer("Config keys may also come from OULOG_<KEY> environment variables (e.g. OULOG_T_MAX).");

  CommonArgs args;
  auto* simulate = app.add_subcommand("simulate", "simulate one path; writes path.csv");
  auto* estimate = app.add_subcommand("estimate", "estimate the drift; writes trace.csv and derived.json");
  auto* verify = app.add_subcommand("verify", "run theorem checks; writes reports.csv");
  auto* lemmas = app.add_subcommand("lemmas", "weight residual table; writes lemmas.csv");
  auto* report = app.add_subcommand("report", "summarize the CSVs in --out");
  for (auto* cmd : {simulate, estimate, verify, lemmas}) {
    add_common(cmd, args);
  }
  report->add_option("--out", args.out, "directory holding reports.csv");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    if (*simulate) return cmd_simulate(args);
    if (*estimate) return cmd_estimate(args);
    if (*verify) return cmd_verify(args);
    if (*lemmas) return cmd_lemmas(args);
    if (*report) return cmd_report(args.out);
  } catch (const IoError& e) {
    std::cerr << "I/O error: " << e.what() << '\n';
    return kIo;
  } catch (const DegeneratePathError& e) {
    std::cerr << "degenerate path: " << e.what() << '\n';
    return kDegenerate;
  } catch (const InvalidArgument& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kIo;
  }
  return kUsage;
}
