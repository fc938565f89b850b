#include "cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "csv.hpp"
#include "mfg/asymptotic.hpp"
#include "mfg/linalg.hpp"
#include "mfg/master.hpp"
#include "mfg/model_io.hpp"
#include "mfg/nce.hpp"
#include "mfg/sim.hpp"

namespace mfg::cli {

using json = nlohmann::ordered_json;

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::NonFiniteField:
    case ErrorKind::AsymmetryDrift:
    case ErrorKind::PermutationMismatch:
    case ErrorKind::NonFiniteState:
    case ErrorKind::SeedStreamExhausted:
      return 2;
    default:
      return 1;
  }
}

namespace {

struct RunConfig {
  std::string command;
  std::string method;
  std::string model_path;
  int grid = 1000;
  std::optional<int> grid2;
  std::string out = "out";
  double tol = 1e-8;
  std::uint64_t seed = 0;
  std::vector<int> N;
  double dt = 0.0;
  bool dense = false;
  int replications = 1;
  std::string law = "nce";
  int stride = 0;
  std::vector<int> type_counts;
  int max_players = 10;
  bool empirical_feedback = false;
  int residual_samples = 100;
};

// Everything a command produces; files are only touched by flush().
class Artifacts {
 public:
  explicit Artifacts(std::string dir) : dir_(std::move(dir)) {}

  void add(const std::string& name, std::function<void(const std::string&)> writer) {
    pending_.push_back({name, std::move(writer)});
  }
  void add(const std::string& name, const WideTable& table) {
    add(name, [&table](const std::string& p) { table.save(p); });
  }
  void add(const std::string& name, const CsvWriter& table) {
    add(name, [&table](const std::string& p) { table.save(p); });
  }

  json summary;

  void flush(std::ostream& out) {
    std::error_code ec;
    std::filesystem::create_directories(dir_, ec);
    if (ec) throw Error(ErrorKind::Io, "--out: cannot create directory '" + dir_ + "': " + ec.message());
    add("summary.json", [this](const std::string& p) {
      std::ofstream f(p, std::ios::binary);
      if (!f) throw Error(ErrorKind::Io, "cannot write '" + p + "'");
      f << summary.dump(2) << '\n';
    });
    for (const auto& [name, writer] : pending_) writer((std::filesystem::path(dir_) / name).string());
    out << "wrote " << pending_.size() << (pending_.size() == 1 ? " file" : " files") << " to " << dir_ << "\n";
  }

 private:
  struct Pending {
    std::string name;
    std::function<void(const std::string&)> writer;
  };
  std::string dir_;
  std::vector<Pending> pending_;
};

std::string idx(std::size_t k) { return std::to_string(k + 1); }

json blowup_json(const BlowUpReport& r) {
  return {{"phase", r.phase},
          {"escape_node", r.escape_node},
          {"escape_time", r.escape_time},
          {"norm_at_escape", r.norm_at_escape},
          {"threshold", r.threshold}};
}

std::string describe(const BlowUpReport& r) {
  return "escape time t = " + format_number(r.escape_time) + " (node " + std::to_string(r.escape_node) + ", " +
         r.phase + " phase, norm " + format_number(r.norm_at_escape) + ")";
}

int blowup_exit(Artifacts& art, const std::string& what, const BlowUpReport& r, std::ostream& out,
                std::ostream& err) {
  art.summary["status"] = "blow-up";
  art.summary["blow_up"] = blowup_json(r);
  art.flush(out);
  err << what << " blows up: " << describe(r) << "\n";
  return 2;
}

double min_eigenvalue_over(const MatrixPath& p) {
  double m = std::numeric_limits<double>::infinity();
  for (int i = 0; i < p.size(); ++i) m = std::min(m, min_eigenvalue(p[i]));
  return m;
}

int single_N(const RunConfig& cfg) {
  if (cfg.N.empty()) return 10;
  if (cfg.N.size() != 1) throw Error(ErrorKind::InvalidArgument, "--N: this command takes one population size");
  return cfg.N.front();
}

TimeGrid make_grid(const ValidatedModel& m, int steps, const char* flag) {
  if (steps < 1) throw Error(ErrorKind::InvalidArgument, std::string(flag) + ": must be a positive step count");
  return TimeGrid(m.params().T, steps);
}

int storage_stride(const RunConfig& cfg) { return cfg.stride > 0 ? cfg.stride : 1; }

// Lambda blocks through the same re-partition as the mean-field kernels.
PhiSolution as_phi(const LambdaSolution& l) { return PhiSolution{l.grid, l.n, l.blocks}; }

// ---------------------------------------------------------------- solve

int solve_nce_cmd(const ValidatedModel& m, const RunConfig& cfg, Artifacts& art, std::ostream& out,
                  std::ostream& err) {
  const auto r = solve_nce(m, make_grid(m, cfg.grid, "--grid"));
  if (blew_up(r)) return blowup_exit(art, "NCE system", blow_up(r), out, err);
  const NceSolution& s = solved(r);
  const PiLifted& l = m.lifted();

  WideTable riccati(s.grid), offsets(s.grid), field(s.grid);
  riccati.add("P0", s.P0);
  offsets.add("s0", s.s0);
  double pin = std::max(l1_norm(s.P0.back() - l.Q0fpi), l1_norm(s.s0.back() + l.eta0fpi));
  json mins = {{"P0", min_eigenvalue_over(s.P0)}};
  for (std::size_t k = 0; k < s.P.size(); ++k) {
    riccati.add("P" + idx(k), s.P[k]);
    offsets.add("s" + idx(k), s.s[k]);
    pin = std::max({pin, l1_norm(s.P[k].back() - l.Qfpi), l1_norm(s.s[k].back() + l.etafpi)});
    mins["P" + idx(k)] = min_eigenvalue_over(s.P[k]);
  }
  field.add("Abar", s.Abar);
  field.add("Gbar", s.Gbar);
  field.add("mbar", s.mbar);

  art.summary["status"] = "solved";
  art.summary["terminal_pin_gap"] = pin;
  art.summary["min_eigenvalue"] = mins;
  art.add("nce_riccati.csv", riccati);
  art.add("nce_offsets.csv", offsets);
  art.add("nce_mean_field.csv", field);
  art.flush(out);
  out << "solve nce: solved on " << s.grid.steps() << " steps, terminal pin gap " << format_number(pin) << "\n";
  return 0;
}

int solve_master_cmd(const ValidatedModel& m, const RunConfig& cfg, Artifacts& art, std::ostream& out,
                     std::ostream& err) {
  const auto r = solve_master(m, make_grid(m, cfg.grid, "--grid"));
  if (blew_up(r)) return blowup_exit(art, "master system", blow_up(r), out, err);
  const MasterSolution& s = solved(r);
  const PiLifted& l = m.lifted();
  const ModelParams& p = m.params();

  WideTable riccati(s.grid), offsets(s.grid), field(s.grid);
  riccati.add("Pd0", s.Pd0);
  offsets.add("sd0", s.sd0);
  offsets.add("rd0", s.rd0);
  double pin = std::max({l1_norm(s.Pd0.back() - l.Q0fpi), l1_norm(s.sd0.back() + l.eta0fpi),
                         std::abs(s.rd0.back() - p.eta0f.dot(p.Q0f * p.eta0f))});
  json mins = {{"Pd0", min_eigenvalue_over(s.Pd0)}};
  for (std::size_t k = 0; k < s.Pd.size(); ++k) {
    riccati.add("Pd" + idx(k), s.Pd[k]);
    offsets.add("sd" + idx(k), s.sd[k]);
    offsets.add("rd" + idx(k), s.rd[k]);
    pin = std::max({pin, l1_norm(s.Pd[k].back() - l.Qfpi), l1_norm(s.sd[k].back() + l.etafpi),
                    std::abs(s.rd[k].back() - p.etaf.dot(p.Qf * p.etaf))});
    mins["Pd" + idx(k)] = min_eigenvalue_over(s.Pd[k]);
  }
  field.add("Abar", s.Abar);
  field.add("Gbar", s.Gbar);
  field.add("mbar", s.mbar);

  // Residual certificate at random interior points.
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> when(0.05 * p.T, 0.95 * p.T);
  std::normal_distribution<double> normal;
  auto gaussian = [&](int size) {
    Vector v(size);
    for (int i = 0; i < size; ++i) v(i) = normal(rng);
    return v;
  };
  double worst = 0.0;
  for (int i = 0; i < cfg.residual_samples; ++i) {
    ResidualSample smp;
    smp.t = when(rng);
    smp.x0 = gaussian(p.n);
    smp.z = gaussian(p.n);
    smp.zbar = gaussian(p.n * p.K);
    smp.kappa = i % (p.K + 1);
    worst = std::max(worst, master_residual(m, s, smp).relative());
  }

  art.summary["status"] = "solved";
  art.summary["terminal_pin_gap"] = pin;
  art.summary["min_eigenvalue"] = mins;
  art.summary["residual_samples"] = cfg.residual_samples;
  art.summary["max_relative_residual"] = worst;
  art.add("master_riccati.csv", riccati);
  art.add("master_offsets.csv", offsets);
  art.add("master_mean_field.csv", field);
  art.flush(out);
  out << "solve master: solved on " << s.grid.steps() << " steps, terminal pin gap " << format_number(pin)
      << ", max relative residual " << format_number(worst) << "\n";
  return 0;
}

int solve_lambda_cmd(const ValidatedModel& m, const RunConfig& cfg, Artifacts& art, std::ostream& out,
                     std::ostream& err) {
  const auto r = solve_lambda(m, make_grid(m, cfg.grid, "--grid"));
  if (blew_up(r)) return blowup_exit(art, "limiting system", blow_up(r), out, err);
  const LambdaSolution& s = solved(r);
  const PhiSolution phi = as_phi(s);

  WideTable blocks(s.grid);
  for (int b = 0; b < kLimitBlockCount; ++b) blocks.add(limit_block_label(b), s[b]);

  const PiLifted& l = m.lifted();
  const auto [P0T, P1T] = assemble_phi(phi, s.grid.steps());
  const double pin = std::max(l1_norm(P0T - l.Q0fpi), l1_norm(P1T - l.Qfpi));
  double min0 = std::numeric_limits<double>::infinity(), min1 = min0;
  for (int i = 0; i < s.grid.size(); ++i) {
    const auto [P0, P1] = assemble_phi(phi, i);
    min0 = std::min(min0, min_eigenvalue(P0));
    min1 = std::min(min1, min_eigenvalue(P1));
  }

  art.summary["status"] = "solved";
  art.summary["terminal_pin_gap"] = pin;
  art.summary["min_eigenvalue"] = {{"major", min0}, {"minor", min1}};
  art.add("lambda_blocks.csv", blocks);
  art.flush(out);
  out << "solve lambda: solved on " << s.grid.steps() << " steps, terminal pin gap " << format_number(pin) << "\n";
  return 0;
}

int solve_finite_n_cmd(const ValidatedModel& m, const RunConfig& cfg, Artifacts& art, std::ostream& out,
                       std::ostream& err) {
  const int N = single_N(cfg);
  FiniteNOptions opts;
  opts.dense = cfg.dense;
  opts.store_stride = storage_stride(cfg);
  const FiniteNSystem sys = assemble_finite_n(m, N, opts.memory_cap);
  const auto r = solve_finite_n(m, N, make_grid(m, cfg.grid, "--grid"), opts);
  if (blew_up(r)) return blowup_exit(art, "N-player system", blow_up(r), out, err);
  const FiniteNSolution& s = solved(r);

  const MatrixPath P0 = s.P_path(0), P1 = s.P_path(1);
  VectorPath S0{s.grid, {}, {}}, S1{s.grid, {}, {}};
  for (int i = 0; i < s.grid.size(); ++i) {
    S0.values.push_back(s.S_at(0, i));
    S1.values.push_back(s.S_at(1, i));
  }
  WideTable riccati(s.grid), offsets(s.grid);
  riccati.add("P0", P0);
  riccati.add("P1", P1);
  offsets.add("S0", S0);
  offsets.add("S1", S1);

  const int last = s.grid.steps();
  const double pin = std::max({l1_norm(s.P_at(0, last) - sys.Qbig(0, true)),
                               l1_norm(s.P_at(1, last) - sys.Qbig(1, true)),
                               l1_norm(s.S_at(0, last) + sys.qbig(0, true)),
                               l1_norm(s.S_at(1, last) + sys.qbig(1, true))});

  art.summary["status"] = "solved";
  art.summary["N"] = N;
  art.summary["dense"] = cfg.dense;
  art.summary["sup_norm"] = s.sup_norm;
  art.summary["terminal_pin_gap"] = pin;
  art.summary["min_eigenvalue"] = {{"P0", min_eigenvalue_over(P0)}, {"P1", min_eigenvalue_over(P1)}};
  art.add("finite_n_riccati.csv", riccati);
  art.add("finite_n_offsets.csv", offsets);
  art.flush(out);
  out << "solve finite-n: N = " << N << " solved on " << s.grid.steps() << " stored steps, sup norm "
      << format_number(s.sup_norm) << "\n";
  return 0;
}

// ---------------------------------------------------------------- compare

CsvWriter diff_table(const DiffReport& rep) {
  CsvWriter w({"quantity", "max_l1", "tolerance", "pass"});
  for (const auto& e : rep.entries) {
    w.cell(e.name).cell(e.max_l1).cell(rep.tolerance).cell(e.max_l1 <= rep.tolerance ? 1 : 0);
    w.end_row();
  }
  return w;
}

int report_diff(const std::string& label, const DiffReport& rep, Artifacts& art, std::ostream& out) {
  const CsvWriter table = diff_table(rep);
  art.summary["status"] = rep.pass ? "PASS" : "FAIL";
  art.summary["tolerance"] = rep.tolerance;
  art.summary["max_diff"] = rep.max_diff();
  art.add("diff.csv", table);
  art.flush(out);
  out << label << ": " << (rep.pass ? "PASS" : "FAIL") << " max diff " << format_number(rep.max_diff())
      << " (tolerance " << format_number(rep.tolerance) << ")\n";
  return rep.pass ? 0 : 2;
}

int compare_nce_master_cmd(const ValidatedModel& m, const RunConfig& cfg, Artifacts& art, std::ostream& out,
                           std::ostream& err) {
  const TimeGrid g1 = make_grid(m, cfg.grid, "--grid");
  const TimeGrid g2 = make_grid(m, cfg.grid2.value_or(cfg.grid), "--grid2");
  const auto nce = solve_nce(m, g1);
  const auto master = solve_master(m, g2);
  if (blew_up(nce) || blew_up(master)) {
    if (blew_up(nce)) art.summary["nce_blow_up"] = blowup_json(blow_up(nce));
    if (blew_up(master)) art.summary["master_blow_up"] = blowup_json(blow_up(master));
    return blowup_exit(art, blew_up(nce) ? "NCE system" : "master system",
                       blew_up(nce) ? blow_up(nce) : blow_up(master), out, err);
  }
  return report_diff("compare nce-master", compare_nce_master(solved(nce), solved(master), cfg.tol), art, out);
}

int compare_lambda_phi_cmd(const ValidatedModel& m, const RunConfig& cfg, Artifacts& art, std::ostream& out,
                           std::ostream& err) {
  if (m.K() != 1)
    throw Error(ErrorKind::KNotOne, "--model: lambda-phi needs homogeneous minor players, model has K = " +
                                        std::to_string(m.K()));
  const auto lambda = solve_lambda(m, make_grid(m, cfg.grid, "--grid"));
  const auto nce = solve_nce(m, make_grid(m, cfg.grid2.value_or(cfg.grid), "--grid2"));
  if (blew_up(lambda) || blew_up(nce)) {
    if (blew_up(lambda)) art.summary["lambda_blow_up"] = blowup_json(blow_up(lambda));
    if (blew_up(nce)) art.summary["nce_blow_up"] = blowup_json(blow_up(nce));
    if (blew_up(lambda) != blew_up(nce))
      err << "only the " << (blew_up(lambda) ? "limiting" : "NCE") << " system escapes\n";
    return blowup_exit(art, blew_up(lambda) ? "limiting system" : "NCE system",
                       blew_up(lambda) ? blow_up(lambda) : blow_up(nce), out, err);
  }
  return report_diff("compare lambda-phi",
                     compare_lambda_phi(solved(lambda), phi_from_nce(solved(nce)), cfg.tol), art, out);
}

struct StructureRun {
  int N = 0;
  TimeGrid grid;  // storage grid of the report
  StructureReport report;
  std::optional<double> dense_gap;
};

int compare_finite_structure_cmd(const ValidatedModel& m, const RunConfig& cfg, Artifacts& art,
                                 std::ostream& out, std::ostream& err) {
  const std::vector<int> Ns = cfg.N.empty() ? std::vector<int>{10} : cfg.N;
  const TimeGrid grid = make_grid(m, cfg.grid, "--grid");
  FiniteNOptions opts;
  opts.store_stride = storage_stride(cfg);

  std::vector<StructureRun> runs;
  for (int N : Ns) {
    const auto sym = solve_finite_n(m, N, grid, opts);
    if (blew_up(sym)) return blowup_exit(art, "N-player system (N = " + std::to_string(N) + ")", blow_up(sym), out, err);
    StructureRun run{N, solved(sym).grid, extract_block_structure(solved(sym), cfg.tol), std::nullopt};
    if (cfg.dense) {
      FiniteNOptions dopts = opts;
      dopts.dense = true;
      const auto dense = solve_finite_n(m, N, grid, dopts);
      if (blew_up(dense)) return blowup_exit(art, "dense N-player system", blow_up(dense), out, err);
      double gap = 0.0;
      for (int node = 0; node < solved(sym).grid.size(); ++node)
        for (int i : {0, 1}) {
          gap = std::max(gap, l1_norm(solved(sym).P_at(i, node) - solved(dense).P_at(i, node)));
          gap = std::max(gap, l1_norm(solved(sym).S_at(i, node) - solved(dense).S_at(i, node)));
        }
      run.dense_gap = gap;
    }
    runs.push_back(std::move(run));
  }

  bool pass = true;
  json per_N = json::array();
  std::vector<CsvWriter> tables;
  tables.reserve(2 * runs.size());
  for (const auto& run : runs) {
    const StructureReport& rep = run.report;
    const bool ok = rep.max_clusters(0) <= 3 && rep.max_clusters(1) <= 6 &&
                    (!run.dense_gap || *run.dense_gap <= cfg.tol);
    pass = pass && ok;
    json j = {{"N", run.N},
              {"max_clusters_P0", rep.max_clusters(0)},
              {"max_clusters_P1", rep.max_clusters(1)},
              {"min_clusters_P0", rep.min_clusters(0)},
              {"min_clusters_P1", rep.min_clusters(1)},
              {"pass", ok}};
    if (run.dense_gap) j["dense_symmetric_gap"] = *run.dense_gap;
    per_N.push_back(j);

    const TimeGrid& sg = run.grid;
    CsvWriter& clusters = tables.emplace_back(std::vector<std::string>{"node", "t", "clusters_P0", "clusters_P1"});
    for (std::size_t k = 0; k < rep.clusters_p0.size(); ++k) {
      clusters.cell(static_cast<int>(k)).cell(sg.node(static_cast<int>(k))).cell(rep.clusters_p0[k]).cell(rep.clusters_p1[k]);
      clusters.end_row();
    }
    CsvWriter& tiles = tables.emplace_back(
        std::vector<std::string>{"tile", "limit_block", "exponent", "node", "t", "i", "j", "raw", "scaled"});
    for (const auto& tile : rep.tiles)
      for (int k = 0; k < tile.raw.size(); ++k)
        for (Eigen::Index i = 0; i < tile.raw[k].rows(); ++i)
          for (Eigen::Index j = 0; j < tile.raw[k].cols(); ++j) {
            tiles.cell(tile.label).cell(limit_block_label(tile.limit_block)).cell(tile.exponent).cell(k);
            tiles.cell(sg.node(k)).cell(static_cast<int>(i)).cell(static_cast<int>(j));
            tiles.cell(tile.raw[k](i, j)).cell(tile.scaled[k](i, j));
            tiles.end_row();
          }
    art.add("structure_N" + std::to_string(run.N) + ".csv", tables[tables.size() - 2]);
    art.add("tiles_N" + std::to_string(run.N) + ".csv", tables.back());
  }
  art.summary["status"] = pass ? "PASS" : "FAIL";
  art.summary["tolerance"] = cfg.tol;
  art.summary["runs"] = per_N;

  // With several population sizes, also measure the approach to the limit.
  CsvWriter convergence({"N", "limit_block", "max_l1"});
  if (runs.size() >= 2) {
    std::vector<StructureReport> reports;
    for (const auto& run : runs) reports.push_back(run.report);
    const ExponentFit fit = fit_scaling_exponents(reports);
    art.summary["fitted_exponents"] = fit.exponents;
    art.summary["fitted_slopes"] = fit.slopes;
    const auto lambda = solve_lambda(m, grid);
    if (blew_up(lambda)) {
      art.summary["lambda_blow_up"] = blowup_json(blow_up(lambda));
    } else {
      for (const auto& run : runs) {
        const DiffReport d = compare_structure_lambda(run.report, solved(lambda), cfg.tol);
        for (const auto& e : d.entries) {
          convergence.cell(run.N).cell(e.name).cell(e.max_l1);
          convergence.end_row();
        }
      }
      art.add("convergence.csv", convergence);
    }
  }
  art.flush(out);
  for (const auto& j : per_N) {
    out << "N = " << j["N"].get<int>() << ": P0 tiles " << j["max_clusters_P0"].get<int>() << ", P1 tiles "
        << j["max_clusters_P1"].get<int>();
    if (j.contains("dense_symmetric_gap"))
      out << ", dense vs symmetric " << format_number(j["dense_symmetric_gap"].get<double>());
    out << "\n";
  }
  out << "compare finite-structure: " << (pass ? "PASS" : "FAIL") << "\n";
  return pass ? 0 : 2;
}

// ---------------------------------------------------------------- check-solvability

int check_solvability_cmd(const ValidatedModel& m, const RunConfig& cfg, Artifacts& art, std::ostream& out) {
  const std::vector<int> Ns = cfg.N.empty() ? std::vector<int>{4, 8, 16, 32, 64} : cfg.N;
  const SolvabilityReport rep = check_asymptotic_solvability(m, Ns, make_grid(m, cfg.grid, "--grid"));

  CsvWriter table({"N", "status", "sup_norm", "escape_time"});
  for (std::size_t k = 0; k < rep.N.size(); ++k) {
    table.cell(rep.N[k]);
    if (rep.norms[k]) {
      table.cell("solved").cell(*rep.norms[k]).cell("");
    } else {
      table.cell("blow-up").cell("").cell(rep.blowups[k]->escape_time);
    }
    table.end_row();
  }
  art.summary["bounded"] = rep.bounded;
  art.summary["lambda_solvable"] = rep.lambda_solvable;
  if (rep.lambda_blowup) art.summary["lambda_blow_up"] = blowup_json(*rep.lambda_blowup);
  art.summary["consistent"] = rep.consistent();
  art.summary["status"] = rep.consistent() ? "PASS" : "FAIL";
  art.add("solvability.csv", table);
  art.flush(out);
  out << "N-player solutions bounded: " << (rep.bounded ? "yes" : "no")
      << "; limiting system solvable: " << (rep.lambda_solvable ? "yes" : "no") << "\n";
  if (rep.lambda_blowup) out << "limiting system " << describe(*rep.lambda_blowup) << "\n";
  out << "check-solvability: " << (rep.consistent() ? "PASS" : "FAIL") << "\n";
  return rep.consistent() ? 0 : 2;
}

// ---------------------------------------------------------------- simulate

struct SweepRow {
  int N = 0;
  double mean_sup = 0.0;
  double std_error = 0.0;
};

int simulate_cmd(const ValidatedModel& m, const RunConfig& cfg, Artifacts& art, std::ostream& out,
                 std::ostream& err) {
  const TimeGrid grid = make_grid(m, cfg.grid, "--grid");
  std::optional<ClosedLoopLaw> law;
  if (cfg.law == "nce") {
    const auto r = solve_nce(m, grid);
    if (blew_up(r)) return blowup_exit(art, "NCE system", blow_up(r), out, err);
    law.emplace(nce_law(solved(r), m));
  } else {
    const auto r = solve_master(m, grid);
    if (blew_up(r)) return blowup_exit(art, "master system", blow_up(r), out, err);
    law.emplace(master_law(solved(r), m));
  }

  SimulationOptions opts;
  opts.dt = cfg.dt > 0.0 ? cfg.dt : m.params().T / 4000.0;
  opts.seed = cfg.seed;
  opts.type_counts = cfg.type_counts;
  opts.empirical_feedback = cfg.empirical_feedback;
  // By default keep the nodes of the law grid.
  const double ratio = grid.step() / opts.dt;
  opts.store_stride = cfg.stride > 0 ? cfg.stride : std::max(1, static_cast<int>(std::lround(ratio)));

  const std::vector<int> Ns = cfg.N.empty() ? std::vector<int>{100} : cfg.N;
  const int K = m.K();
  const int n = m.n();
  std::vector<SweepRow> sweep;
  std::vector<CsvWriter> tables;
  tables.reserve(4 * Ns.size());
  for (int N : Ns) {
    const std::vector<Trajectory> batch = simulate_batch(m, N, *law, opts, cfg.replications);
    const std::string tag = "_N" + std::to_string(N);

    CsvWriter& traj = tables.emplace_back(std::vector<std::string>{
        "replication", "node", "t", "player", "type", "quantity", "component", "value"});
    CsvWriter& zbar = tables.emplace_back(
        std::vector<std::string>{"replication", "node", "t", "type", "component", "value"});
    CsvWriter& errors = tables.emplace_back(std::vector<std::string>{"replication", "node", "t", "type", "error"});
    CsvWriter& costs = tables.emplace_back(
        std::vector<std::string>{"player", "type", "mean", "std_error", "samples"});

    const int shown = std::min(N, cfg.max_players);
    std::vector<double> sups;
    for (std::size_t r = 0; r < batch.size(); ++r) {
      const Trajectory& tr = batch[r];
      const int rep = static_cast<int>(r);
      for (int k = 0; k < tr.grid.size(); ++k) {
        const double t = tr.grid.node(k);
        auto emit = [&](int player, int type, const char* quantity, const Vector& v) {
          for (Eigen::Index c = 0; c < v.size(); ++c) {
            traj.cell(rep).cell(k).cell(t).cell(player).cell(type).cell(quantity).cell(static_cast<int>(c)).cell(v(c));
            traj.end_row();
          }
        };
        emit(0, 0, "state", tr.X0[k]);
        emit(0, 0, "control", tr.U0[k]);
        for (int i = 0; i < shown; ++i) {
          const int type = tr.types[static_cast<std::size_t>(i)];
          emit(i + 1, type, "state", tr.X[k].col(i));
          emit(i + 1, type, "control", tr.U[k].col(i));
        }
        for (int kk = 0; kk < K; ++kk)
          for (int c = 0; c < n; ++c) {
            zbar.cell(rep).cell(k).cell(t).cell(kk + 1).cell(c).cell(tr.Zbar[k](kk * n + c));
            zbar.end_row();
          }
      }
      const MeanErrorReport me = empirical_mean_error(tr);
      for (std::size_t kk = 0; kk < me.per_type.size(); ++kk)
        for (int k = 0; k < me.per_type[kk].size(); ++k) {
          errors.cell(rep).cell(k).cell(tr.grid.node(k)).cell(static_cast<int>(kk) + 1).cell(me.per_type[kk][k]);
          errors.end_row();
        }
      sups.push_back(me.sup);
    }

    // The major player and the first player of each type.
    std::vector<int> players = {0};
    const std::vector<int>& types = batch.front().types;
    for (int kk = 1; kk <= K; ++kk) {
      const auto it = std::find(types.begin(), types.end(), kk);
      if (it != types.end()) players.push_back(static_cast<int>(it - types.begin()) + 1);
    }
    for (int player : players) {
      const CostEstimate c = evaluate_cost(m, batch, player);
      costs.cell(player).cell(player == 0 ? 0 : types[static_cast<std::size_t>(player - 1)]);
      costs.cell(c.mean).cell(c.std_error).cell(c.samples);
      costs.end_row();
    }

    SweepRow row{N, 0.0, 0.0};
    for (double s : sups) row.mean_sup += s / static_cast<double>(sups.size());
    if (sups.size() > 1) {
      double var = 0.0;
      for (double s : sups) var += (s - row.mean_sup) * (s - row.mean_sup);
      row.std_error = std::sqrt(var / static_cast<double>(sups.size() - 1) / static_cast<double>(sups.size()));
    }
    sweep.push_back(row);

    art.add("trajectories" + tag + ".csv", tables[tables.size() - 4]);
    art.add("zbar" + tag + ".csv", tables[tables.size() - 3]);
    art.add("mean_error" + tag + ".csv", tables[tables.size() - 2]);
    art.add("costs" + tag + ".csv", tables.back());
  }

  CsvWriter summary_table({"N", "replications", "mean_sup_error", "std_error"});
  json rows = json::array();
  for (const auto& r : sweep) {
    summary_table.cell(r.N).cell(cfg.replications).cell(r.mean_sup).cell(r.std_error);
    summary_table.end_row();
    rows.push_back({{"N", r.N}, {"mean_sup_error", r.mean_sup}, {"std_error", r.std_error}});
  }
  art.add("sweep.csv", summary_table);
  art.summary["status"] = "simulated";
  art.summary["law"] = cfg.law;
  art.summary["dt"] = opts.dt;
  art.summary["replications"] = cfg.replications;
  art.summary["sweep"] = rows;

  // Least-squares slope of log error against log N; 1/sqrt(N) decay gives -0.5.
  std::optional<double> slope;
  const bool positive = std::all_of(sweep.begin(), sweep.end(), [](const SweepRow& r) { return r.mean_sup > 0.0; });
  if (sweep.size() >= 2 && positive) {
    double mx = 0.0, my = 0.0;
    for (const auto& r : sweep) {
      mx += std::log(r.N) / sweep.size();
      my += std::log(r.mean_sup) / sweep.size();
    }
    double sxy = 0.0, sxx = 0.0;
    for (const auto& r : sweep) {
      sxy += (std::log(r.N) - mx) * (std::log(r.mean_sup) - my);
      sxx += (std::log(r.N) - mx) * (std::log(r.N) - mx);
    }
    if (sxx > 0.0) slope = sxy / sxx;
  }
  if (slope) art.summary["log_log_slope"] = *slope;
  art.flush(out);

  for (const auto& r : sweep)
    out << "N = " << r.N << ": mean sup error " << format_number(r.mean_sup) << " (std error "
        << format_number(r.std_error) << ")\n";
  if (slope) out << "sup error against N: log-log slope " << format_number(*slope) << " (1/sqrt(N) is -0.5)\n";
  return 0;
}

// ---------------------------------------------------------------- wiring

void add_shared_options(CLI::App* sub, RunConfig& cfg) {
  sub->add_option("--model", cfg.model_path, "Model file")->required();
  sub->add_option("--grid", cfg.grid, "Time steps M")->check(CLI::PositiveNumber);
  sub->add_option("--out", cfg.out, "Output directory");
  sub->add_option("--tol", cfg.tol, "Tolerance")->check(CLI::PositiveNumber);
  sub->add_option("--seed", cfg.seed, "Random seed");
  sub->add_option("--N", cfg.N, "Population sizes, comma separated")->delimiter(',')->check(CLI::PositiveNumber);
  sub->add_option("--dt", cfg.dt, "Simulation step (default T/4000)")->check(CLI::NonNegativeNumber);
  sub->add_flag("--dense", cfg.dense, "Integrate every player of the N-player system");
  sub->add_option("--stride", cfg.stride, "Keep every stride-th node in the output")->check(CLI::PositiveNumber);
}

int dispatch(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  ModelParams raw;
  try {
    raw = read_model_file(cfg.model_path);
  } catch (const Error& e) {
    const std::string what = e.what();
    throw Error(e.kind(), "--model: " + what.substr(to_string(e.kind()).size() + 2));
  }
  const ValidatedModel m = validate_model(std::move(raw));

  Artifacts art(cfg.out);
  art.summary["command"] = cfg.command + (cfg.method.empty() ? "" : " " + cfg.method);
  art.summary["model"] = cfg.model_path;
  art.summary["grid"] = cfg.grid;
  art.summary["horizon"] = m.params().T;

  if (cfg.command == "solve") {
    if (cfg.method == "nce") return solve_nce_cmd(m, cfg, art, out, err);
    if (cfg.method == "master") return solve_master_cmd(m, cfg, art, out, err);
    if (cfg.method == "lambda") return solve_lambda_cmd(m, cfg, art, out, err);
    return solve_finite_n_cmd(m, cfg, art, out, err);
  }
  if (cfg.command == "compare") {
    if (cfg.grid2) art.summary["grid2"] = *cfg.grid2;
    if (cfg.method == "nce-master") return compare_nce_master_cmd(m, cfg, art, out, err);
    if (cfg.method == "lambda-phi") return compare_lambda_phi_cmd(m, cfg, art, out, err);
    return compare_finite_structure_cmd(m, cfg, art, out, err);
  }
  if (cfg.command == "check-solvability") return check_solvability_cmd(m, cfg, art, out);
  return simulate_cmd(m, cfg, art, out, err);
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  RunConfig cfg;
  CLI::App app{"Solvers for linear-quadratic mean field games with a major player", "mfg"};
  app.require_subcommand(1);

  auto* solve = app.add_subcommand("solve", "Solve one system and write its paths");
  solve->add_option("method", cfg.method, "nce | master | lambda | finite-n")
      ->required()
      ->check(CLI::IsMember({"nce", "master", "lambda", "finite-n"}));
  add_shared_options(solve, cfg);

  auto* compare = app.add_subcommand("compare", "Solve two ways and report the discrepancy");
  compare->add_option("pair", cfg.method, "nce-master | lambda-phi | finite-structure")
      ->required()
      ->check(CLI::IsMember({"nce-master", "lambda-phi", "finite-structure"}));
  add_shared_options(compare, cfg);
  compare->add_option("--grid2", cfg.grid2, "Time steps of the second solver (default --grid)")
      ->check(CLI::PositiveNumber);

  auto* check = app.add_subcommand("check-solvability", "Solve the N-player systems and the limiting system");
  add_shared_options(check, cfg);

  auto* simulate = app.add_subcommand("simulate", "Monte Carlo simulation of the closed loop");
  add_shared_options(simulate, cfg);
  simulate->add_option("--law", cfg.law, "Feedback law: nce | master")->check(CLI::IsMember({"nce", "master"}));
  simulate->add_option("--replications", cfg.replications, "Independent replications")
      ->check(CLI::PositiveNumber);
  simulate->add_option("--type-counts", cfg.type_counts, "Players per type, comma separated")->delimiter(',');
  simulate->add_option("--max-players", cfg.max_players, "Minor players written to the trajectory file")
      ->check(CLI::NonNegativeNumber);
  simulate->add_flag("--empirical-feedback", cfg.empirical_feedback,
                     "Feed the empirical type means to the controls");
  solve->add_option("--residual-samples", cfg.residual_samples, "Master residual checks (solve master)")
      ->check(CLI::NonNegativeNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }
  for (auto* sub : app.get_subcommands()) cfg.command = sub->get_name();

  try {
    return dispatch(cfg, out, err);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace mfg::cli
