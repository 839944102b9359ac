#pragma once

// Engine dispatch and CSV output.
//
// CSV columns: time, one column per observable (trajectory runs add a
// <label>_se column after each), trace, purity. Numbers are printed with 17
// significant digits so that they re-read to the same doubles.
//
// Exit codes: 0 success/pass, 1 comparison failed, 2 configuration error,
// 3 numerical invariant breach.

#include <cstdio>
#include <fstream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "qfb/collision.hpp"
#include "qfb/config.hpp"
#include "qfb/error.hpp"
#include "qfb/liouville.hpp"
#include "qfb/trajectory.hpp"

namespace qfb {

enum ExitCode : int { kExitOk = 0, kExitCompareFail = 1, kExitConfig = 2, kExitNumerical = 3 };

inline std::string format_number(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

class CsvWriter {
 public:
  explicit CsvWriter(const std::vector<std::string>& header) {
    for (size_t i = 0; i < header.size(); ++i) out_ << (i ? "," : "") << header[i];
    out_ << '\n';
  }

  void row(const std::vector<double>& values) {
    for (size_t i = 0; i < values.size(); ++i) out_ << (i ? "," : "") << format_number(values[i]);
    out_ << '\n';
  }

  std::string str() const { return out_.str(); }

 private:
  std::ostringstream out_;
};

struct RunOutput {
  int exit_code = kExitOk;
  std::string csv;
  std::string summary;  // human-readable line(s) for the error stream
};

namespace detail {

inline std::vector<std::string> state_header(const SystemModel& model, bool with_se) {
  std::vector<std::string> h{"time"};
  for (const auto& obs : model.observables) {
    h.push_back(obs.label);
    if (with_se) h.push_back(obs.label + "_se");
  }
  h.push_back("trace");
  h.push_back("purity");
  return h;
}

inline std::string series_csv(const SystemModel& model, const TimeSeries& series) {
  CsvWriter csv(state_header(model, false));
  for (size_t r = 0; r < series.times.size(); ++r) {
    const Operator& rho = series.states[r].op();
    std::vector<double> row{series.times[r]};
    for (const auto& obs : model.observables) row.push_back(expectation(obs.op, rho).real());
    row.push_back(rho.trace().real());
    row.push_back(purity(rho));
    csv.row(row);
  }
  return csv.str();
}

inline DensityMatrix initial_density(const InitialState& init) {
  if (const auto* psi = std::get_if<StateVector>(&init)) return DensityMatrix::pure(*psi);
  return std::get<DensityMatrix>(init);
}

inline std::string pass_word(bool pass) { return pass ? "PASS" : "FAIL"; }

inline std::string report_line(const std::string& name, const ComparisonReport& rep) {
  return name + " " + pass_word(rep.pass) + " (worst |diff|/band = " +
         format_number(rep.worst_ratio) + ")";
}

}  // namespace detail

inline RunOutput run_master(const RunConfig& cfg) {
  const Superoperator l = build_feedback_liouvillian(cfg.model);
  const TimeSeries series = evolve(l, detail::initial_density(cfg.initial), cfg.integration);
  return {kExitOk, detail::series_csv(cfg.model, series), "master: done"};
}

inline RunOutput run_trajectories(const RunConfig& cfg) {
  const EnsembleResult ens =
      ensemble_average(cfg.model, FeedbackConfig::with_delay(cfg.tau), cfg.integration,
                       cfg.initial, *cfg.n_traj, cfg.master_seed, cfg.threads);
  CsvWriter csv(detail::state_header(cfg.model, true));
  for (size_t r = 0; r < ens.times.size(); ++r) {
    std::vector<double> row{ens.times[r]};
    for (size_t j = 0; j < ens.labels.size(); ++j) {
      row.push_back(ens.mean[r][j]);
      row.push_back(ens.standard_error[r][j]);
    }
    row.push_back(ens.mean_state[r].trace().real());
    row.push_back(purity(ens.mean_state[r]));
    csv.row(row);
  }
  return {kExitOk, csv.str(), "trajectory: " + std::to_string(ens.n_traj) + " trajectories"};
}

inline RunOutput run_oracle_engine(const RunConfig& cfg) {
  const FieldDiscretization disc{cfg.integration.dt, *cfg.k, cfg.joint_cap};
  const OracleResult res = run_oracle(cfg.model, disc, detail::initial_density(cfg.initial),
                                      cfg.integration.t_final, cfg.integration.record_every);
  return {kExitOk, detail::series_csv(cfg.model, res.series),
          "oracle: max bin excitation " + format_number(res.max_bin_population)};
}

// Trajectories vs oracle always; with zero delay also trajectories vs master
// equation and oracle vs master equation. Every band includes
// discretization_allowance * dt.
inline RunOutput run_compare(const RunConfig& cfg) {
  const double dt = cfg.integration.dt;
  const double allowance = cfg.discretization_allowance * dt;
  const int k = *cfg.k;
  const FieldDiscretization disc{dt, k, cfg.joint_cap};
  const DensityMatrix rho0 = detail::initial_density(cfg.initial);

  const OracleResult oracle =
      run_oracle(cfg.model, disc, rho0, cfg.integration.t_final, cfg.integration.record_every);
  const auto oracle_values = observable_table(cfg.model, oracle.series);
  const EnsembleResult ens =
      ensemble_average(cfg.model, FeedbackConfig::with_delay(disc.tau()), cfg.integration,
                       cfg.initial, *cfg.n_traj, cfg.master_seed, cfg.threads);
  const ComparisonReport traj_oracle =
      compare_to_reference(ens, oracle_values, cfg.n_sigma, allowance);

  std::vector<std::string> header{"time"};
  const bool markovian = k == 0;
  for (const auto& label : ens.labels) {
    if (markovian) {
      header.push_back(label + "_traj_minus_me");
      header.push_back(label + "_traj_me_band");
      header.push_back(label + "_oracle_minus_me");
    }
    header.push_back(label + "_traj_minus_oracle");
    header.push_back(label + "_traj_oracle_band");
  }
  if (markovian) header.push_back("trace_distance_oracle_me");

  std::string summary;
  bool pass = traj_oracle.pass;
  CsvWriter csv(header);
  if (markovian) {
    const Superoperator l = build_feedback_liouvillian(cfg.model);
    const TimeSeries me = evolve(l, rho0, cfg.integration);
    const auto me_values = observable_table(cfg.model, me);
    const ComparisonReport traj_me = compare_to_reference(ens, me_values, cfg.n_sigma, allowance);
    bool oracle_me_pass = true;
    double oracle_me_worst = 0.0;
    for (size_t r = 0; r < me_values.size(); ++r) {
      std::vector<double> row{ens.times[r]};
      for (size_t j = 0; j < ens.labels.size(); ++j) {
        const double oracle_diff = oracle_values[r][j] - me_values[r][j];
        oracle_me_pass = oracle_me_pass && std::abs(oracle_diff) <= allowance;
        oracle_me_worst = std::max(oracle_me_worst, std::abs(oracle_diff));
        row.insert(row.end(), {traj_me.difference[r][j], traj_me.band[r][j], oracle_diff,
                               traj_oracle.difference[r][j], traj_oracle.band[r][j]});
      }
      row.push_back(trace_distance(oracle.series.states[r].op(), me.states[r].op()));
      csv.row(row);
    }
    summary += detail::report_line("traj_vs_me", traj_me) + "\n";
    summary += "oracle_vs_me " + detail::pass_word(oracle_me_pass) + " (max |diff| = " +
               format_number(oracle_me_worst) + ", allowance = " + format_number(allowance) +
               ")\n";
    pass = pass && traj_me.pass && oracle_me_pass;
  } else {
    for (size_t r = 0; r < oracle_values.size(); ++r) {
      std::vector<double> row{ens.times[r]};
      for (size_t j = 0; j < ens.labels.size(); ++j) {
        row.push_back(traj_oracle.difference[r][j]);
        row.push_back(traj_oracle.band[r][j]);
      }
      csv.row(row);
    }
  }
  summary += detail::report_line("traj_vs_oracle", traj_oracle) + "\n";
  summary += std::string("compare: ") + detail::pass_word(pass);
  return {pass ? kExitOk : kExitCompareFail, csv.str(), summary};
}

inline RunOutput execute(const RunConfig& cfg) {
  switch (cfg.engine) {
    case Engine::master: return run_master(cfg);
    case Engine::trajectory: return run_trajectories(cfg);
    case Engine::oracle: return run_oracle_engine(cfg);
    case Engine::compare: return run_compare(cfg);
  }
  return {};
}

// Runs the engine and writes the CSV only when the run completed. Errors are
// reported to err and mapped to exit codes.
inline int run(const RunConfig& cfg, std::ostream& err) {
  RunOutput out;
  try {
    out = execute(cfg);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const Error& e) {
    err << "numerical error: " << e.what() << '\n';
    return kExitNumerical;
  }
  std::ofstream file(cfg.output, std::ios::binary | std::ios::trunc);
  if (!file) {
    err << "config error: cannot open output '" << cfg.output << "'\n";
    return kExitConfig;
  }
  file << out.csv;
  if (!file.flush()) {
    err << "config error: failed writing '" << cfg.output << "'\n";
    return kExitConfig;
  }
  if (!out.summary.empty()) err << out.summary << '\n';
  return out.exit_code;
}

}  // namespace qfb
