#pragma once

// Time-bin collision model of a system radiating into a 1-D field with
// delayed photocurrent feedback.
//
// The field is cut into bins of length dt. Bin operators B = b sqrt(dt) are
// truncated to {|0>, |1>} and satisfy <0|[B, B^dag]|0> = 1. A step:
//   1. adjoin a fresh vacuum bin (newest);
//   2. system + newest bin: exp(-i dt H) exp(sqrt(dt) (B^dag c - c^dag B));
//   3. system + oldest bin (the one that interacted k steps ago):
//      exp(-i Z (x) B^dag B);
//   4. trace out the oldest bin.
// With k = 0 the same bin is used in 2 and 3.
//
// Joint states are density matrices on system (x) bins, system index most
// significant, bins ordered oldest to newest, newest in the least significant
// bit. The cost is exponential in k; this is a verification tool.

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "qfb/error.hpp"
#include "qfb/linalg.hpp"
#include "qfb/liouville.hpp"
#include "qfb/model.hpp"
#include "qfb/trajectory.hpp"

namespace qfb {

inline constexpr Index kDefaultJointCap = Index{1} << 14;

struct FieldDiscretization {
  double dt = 1e-3;
  int k = 0;  // delay in bins
  Index joint_cap = kDefaultJointCap;

  double tau() const { return static_cast<double>(k) * dt; }
};

// Bin annihilation operator on {|0>, |1>}.
inline Operator bin_lowering() {
  Operator b = Operator::Zero(2, 2);
  b(0, 1) = 1.0;
  return b;
}

inline Operator bin_number() { return bin_lowering().adjoint() * bin_lowering(); }

struct BinMoments {
  Complex b_bdag;        // <0|B B^dag|0>
  Complex bdag_b;        // <0|B^dag B|0>
  Complex b_b;           // <0|B B|0>
  Complex bdag_bdag;     // <0|B^dag B^dag|0>
};

inline BinMoments fresh_bin_moments() {
  const Operator b = bin_lowering();
  const Operator bd = b.adjoint();
  const StateVector vac = basis_vector(2, 0);
  return {expectation(Operator(b * bd), vac), expectation(Operator(bd * b), vac),
          expectation(Operator(b * b), vac), expectation(Operator(bd * bd), vac)};
}

// exp(-i dt H (x) I) exp(sqrt(dt) (c (x) B^dag - c^dag (x) B)) on system (x) bin.
inline Operator interaction_unitary(const SystemModel& model, double dt) {
  require_valid(model);
  if (!(dt > 0.0)) throw ConfigError("oracle: dt must be positive");
  const Operator id2 = identity(2);
  const Operator b = bin_lowering();
  const Operator exchange = std::sqrt(dt) * (kron(model.collapse, Operator(b.adjoint())) -
                                             kron(Operator(model.collapse.adjoint()), b));
  const Operator free = matrix_exp(-kI * dt * kron(model.hamiltonian, id2));
  return free * matrix_exp(exchange);
}

// exp(-i Z (x) n): identity when the bin is empty, exp(-iZ) on the system when
// it holds a photon.
inline Operator feedback_unitary(const SystemModel& model) {
  require_valid(model);
  return matrix_exp(-kI * kron(model.feedback_generator, bin_number()));
}

namespace detail {

// Joint index of (system s, bin bits).
inline Index joint_index(Index s, Index bits, int n_bins) { return (s << n_bins) | bits; }

// Indices of the (system, bin at bit position pos) subspace for each setting
// of the remaining bins; each inner vector is ordered like system (x) bin.
inline std::vector<std::vector<Index>> local_indices(Index dim, int n_bins, int pos) {
  std::vector<std::vector<Index>> out;
  const Index n_rest = Index{1} << (n_bins - 1);
  for (Index rest = 0; rest < n_rest; ++rest) {
    const Index low = rest & ((Index{1} << pos) - 1);
    const Index high = (rest >> pos) << (pos + 1);
    std::vector<Index> idx;
    idx.reserve(static_cast<size_t>(2 * dim));
    for (Index s = 0; s < dim; ++s) {
      for (Index b = 0; b < 2; ++b) idx.push_back(joint_index(s, high | (b << pos) | low, n_bins));
    }
    out.push_back(std::move(idx));
  }
  return out;
}

// rho <- U rho U^dag with U acting on the given index groups.
inline void apply_local(Operator& rho, const Operator& u,
                        const std::vector<std::vector<Index>>& groups) {
  for (const auto& idx : groups) rho(idx, Eigen::all) = (u * rho(idx, Eigen::all)).eval();
  const Operator ud = u.adjoint();
  for (const auto& idx : groups) rho(Eigen::all, idx) = (rho(Eigen::all, idx) * ud).eval();
}

}  // namespace detail

struct OracleResult {
  TimeSeries series;
  double max_bin_population = 0.0;  // oldest bin's |1> population before trace-out
  double max_emission_rate = 0.0;   // max_t <c^dag c>
};

inline OracleResult run_oracle(const SystemModel& model, const FieldDiscretization& disc,
                               const DensityMatrix& rho0, double t_final,
                               long record_every = 1) {
  require_valid(model);
  if (disc.k < 0) throw ConfigError("feedback.k: must be >= 0");
  if (rho0.dim() != model.dim) throw DimensionError("run_oracle: initial state dim");
  const IntegrationConfig cfg{disc.dt, t_final, record_every};
  const long n_steps = cfg.steps();
  const Index d = model.dim;
  const int window = disc.k + 1;
  if (disc.k > 40 || (d << window) > disc.joint_cap) {
    throw ConfigError("oracle: joint dimension D*2^(k+1) exceeds cap " +
                      std::to_string(disc.joint_cap));
  }

  const Operator u_int = interaction_unitary(model, disc.dt);
  const Operator u_fb = feedback_unitary(model);
  const auto newest = detail::local_indices(d, window, 0);
  const auto oldest = detail::local_indices(d, window, window - 1);
  const Operator cdc = model.collapse.adjoint() * model.collapse;

  // Index groups for tracing out the oldest bin and for the reduced state.
  const Index kept = d << disc.k;
  std::vector<Index> oldest_empty(static_cast<size_t>(kept)), oldest_full(oldest_empty.size());
  for (Index i = 0; i < kept; ++i) {
    const Index s = i >> disc.k;
    const Index rest = i & ((Index{1} << disc.k) - 1);
    oldest_empty[static_cast<size_t>(i)] = detail::joint_index(s, rest, window);
    oldest_full[static_cast<size_t>(i)] =
        detail::joint_index(s, (Index{1} << disc.k) | rest, window);
  }
  auto reduce = [&](const Operator& joint) {
    Operator out = Operator::Zero(d, d);
    const Index n_cfg = Index{1} << disc.k;
    for (Index bits = 0; bits < n_cfg; ++bits) {
      for (Index s = 0; s < d; ++s) {
        for (Index s2 = 0; s2 < d; ++s2) out(s, s2) += joint((s << disc.k) | bits, (s2 << disc.k) | bits);
      }
    }
    return out;
  };

  Operator vacuum = Operator::Zero(2, 2);
  vacuum(0, 0) = 1.0;
  Operator joint = rho0.op();
  for (int i = 0; i < disc.k; ++i) joint = kron(joint, vacuum);

  OracleResult out;
  out.series.times.push_back(0.0);
  out.series.states.push_back(rho0);
  Operator reduced = rho0.op();
  for (long step = 1; step <= n_steps; ++step) {
    out.max_emission_rate = std::max(out.max_emission_rate, expectation(cdc, reduced).real());
    joint = kron(joint, vacuum);
    detail::apply_local(joint, u_int, newest);
    detail::apply_local(joint, u_fb, oldest);

    const double drift = std::abs(joint.trace() - Complex(1.0));
    if (drift > 1e-10) {
      throw InvariantBreach("oracle: joint trace drifted by " + std::to_string(drift));
    }
    Operator traced = joint(oldest_empty, oldest_empty);
    const Operator full = joint(oldest_full, oldest_full);
    out.max_bin_population = std::max(out.max_bin_population, full.trace().real());
    traced += full;
    joint = std::move(traced);

    reduced = reduce(joint);
    if (step % record_every == 0) {
      const double t = static_cast<double>(step) * disc.dt;
      if (auto problem = DensityMatrix::check(reduced, {})) {
        throw InvariantBreach("oracle: reduced state at t=" + std::to_string(t) + ": " + *problem);
      }
      out.series.times.push_back(t);
      out.series.states.push_back(DensityMatrix::unchecked(reduced));
    }
  }

  if (out.max_bin_population > 10.0 * out.max_emission_rate * disc.dt + 1e-15) {
    throw InvariantBreach("oracle: bin excitation " + std::to_string(out.max_bin_population) +
                          " exceeds 10 <c^dag c>_max dt; two-level bin truncation broke down");
  }
  return out;
}

// Expectation values [record][observable] along a density-matrix series.
inline std::vector<std::vector<double>> observable_table(const SystemModel& model,
                                                         const TimeSeries& series) {
  std::vector<std::vector<double>> out;
  out.reserve(series.states.size());
  for (const auto& rho : series.states) {
    std::vector<double> row;
    for (const auto& obs : model.observables) row.push_back(expectation(obs.op, rho.op()).real());
    out.push_back(std::move(row));
  }
  return out;
}

// Per-observable, per-time agreement between an ensemble and a reference:
// pass iff |mean - reference| <= n_sigma * SE + allowance everywhere.
struct ComparisonReport {
  std::vector<std::string> labels;
  std::vector<double> times;
  std::vector<std::vector<double>> reference;
  std::vector<std::vector<double>> mean;
  std::vector<std::vector<double>> standard_error;
  std::vector<std::vector<double>> difference;  // mean - reference
  std::vector<std::vector<double>> band;
  double worst_ratio = 0.0;  // max |difference| / band
  bool pass = true;
};

inline ComparisonReport compare_to_reference(const EnsembleResult& ensemble,
                                             const std::vector<std::vector<double>>& reference,
                                             double n_sigma, double allowance) {
  if (reference.size() != ensemble.times.size()) {
    throw DimensionError("compare_to_reference: record count mismatch");
  }
  ComparisonReport rep;
  rep.labels = ensemble.labels;
  rep.times = ensemble.times;
  rep.reference = reference;
  rep.mean = ensemble.mean;
  rep.standard_error = ensemble.standard_error;
  for (size_t r = 0; r < reference.size(); ++r) {
    std::vector<double> diff_row, band_row;
    for (size_t j = 0; j < reference[r].size(); ++j) {
      const double se = std::isnan(ensemble.standard_error[r][j]) ? 0.0
                                                                  : ensemble.standard_error[r][j];
      const double diff = ensemble.mean[r][j] - reference[r][j];
      const double band = n_sigma * se + allowance;
      diff_row.push_back(diff);
      band_row.push_back(band);
      if (std::abs(diff) > band) rep.pass = false;
      if (band > 0.0) {
        rep.worst_ratio = std::max(rep.worst_ratio, std::abs(diff) / band);
      } else if (diff != 0.0) {
        rep.worst_ratio = std::numeric_limits<double>::infinity();
      }
    }
    rep.difference.push_back(std::move(diff_row));
    rep.band.push_back(std::move(band_row));
  }
  return rep;
}

// Averages delayed-feedback trajectories (tau = k dt) and checks them against
// the collision oracle within n_sigma standard errors plus allowance_c * dt.
inline ComparisonReport oracle_vs_delayed_trajectories(
    const SystemModel& model, const FieldDiscretization& disc, const StateVector& psi0,
    double t_final, long record_every, long n_traj, std::uint64_t master_seed,
    double allowance_c, double n_sigma = 5.0, unsigned threads = 0) {
  const OracleResult oracle =
      run_oracle(model, disc, DensityMatrix::pure(psi0), t_final, record_every);
  const IntegrationConfig cfg{disc.dt, t_final, record_every};
  const EnsembleResult ens = ensemble_average(model, FeedbackConfig::with_delay(disc.tau()), cfg,
                                              psi0, n_traj, master_seed, threads);
  return compare_to_reference(ens, observable_table(model, oracle.series), n_sigma,
                              allowance_c * disc.dt);
}

}  // namespace qfb
