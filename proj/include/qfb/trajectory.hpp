#pragma once

// Quantum-jump unraveling with photodetection feedback.
//
// Each step of length dt:
//   1. feedback unitaries exp(-iZ) due at or before the step start are
//      applied, oldest first;
//   2. with probability p = <psi|c^dag c|psi> dt a detection occurs. With zero
//      delay the state jumps with exp(-iZ) c; with delay tau it jumps with c
//      and exp(-iZ) is scheduled for tau later;
//   3. otherwise psi evolves with (I - i dt H - dt/2 c^dag c);
//   4. psi is renormalized and t advances by dt.
//
// A detection in the step [t, t+dt) is stamped at t+dt, the instant the
// jump has been applied, so its feedback fires at the step boundary
// t+dt+tau. This makes a delay of k steps act on the photon emitted k steps
// earlier, matching the collision model.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <deque>
#include <exception>
#include <limits>
#include <mutex>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include "qfb/error.hpp"
#include "qfb/linalg.hpp"
#include "qfb/liouville.hpp"
#include "qfb/model.hpp"
#include "qfb/rng.hpp"

namespace qfb {

inline constexpr double kMaxJumpProbability = 0.1;

struct JumpRecord {
  std::vector<double> detection_times;
  // Times at which feedback was applied. Feedback scheduled after the end of
  // the run is never applied, so this may be shorter than detection_times.
  std::vector<double> feedback_times;
  std::uint64_t seed = 0;

  friend bool operator==(const JumpRecord&, const JumpRecord&) = default;
};

// Operators needed by step(), precomputed once per (model, feedback, dt).
struct TrajectoryKernel {
  TrajectoryKernel(const SystemModel& model, const FeedbackConfig& fb, double dt)
      : feedback(fb), dt(dt) {
    require_valid(model);
    if (!(dt > 0.0)) throw ConfigError("integration.dt: must be positive");
    const Index d = model.dim;
    collapse = model.collapse;
    collapse_norm = model.collapse.adjoint() * model.collapse;
    feedback_unitary = matrix_exp(-kI * model.feedback_generator);
    markovian_jump = feedback_unitary * model.collapse;
    no_jump = identity(d) - kI * dt * model.hamiltonian - 0.5 * dt * collapse_norm;
  }

  FeedbackConfig feedback;
  double dt;
  Operator collapse;
  Operator collapse_norm;  // c^dag c
  Operator feedback_unitary;
  Operator markovian_jump;  // exp(-iZ) c
  Operator no_jump;
};

struct TrajectoryState {
  TrajectoryState(StateVector psi0, std::uint64_t seed) : psi(std::move(psi0)), rng(seed) {
    normalize(psi);
    scratch.resize(psi.size());
    record.seed = seed;
  }

  double time(double dt) const { return static_cast<double>(step) * dt; }

  StateVector psi;
  long step = 0;
  std::deque<double> pending;  // scheduled feedback times, non-decreasing
  Rng rng;
  JumpRecord record;
  StateVector scratch;
};

// One step using the supplied uniform draw u in [0, 1).
inline void step_with_draw(TrajectoryState& s, const TrajectoryKernel& k, double u) {
  const double t = s.time(k.dt);

  while (!s.pending.empty() && s.pending.front() <= t + 1e-9 * k.dt) {
    s.scratch.noalias() = k.feedback_unitary * s.psi;
    s.psi.swap(s.scratch);
    const double drift = std::abs(s.psi.norm() - 1.0);
    if (drift > 1e-12) {
      throw InvariantBreach("trajectory: feedback unitary changed the norm by " +
                            std::to_string(drift));
    }
    s.record.feedback_times.push_back(s.pending.front());
    s.pending.pop_front();
  }

  s.scratch.noalias() = k.collapse * s.psi;
  const double rate = s.scratch.squaredNorm();
  const double p = rate * k.dt;
  if (p > kMaxJumpProbability) {
    throw InvariantBreach("trajectory: jump probability " + std::to_string(p) + " at t=" +
                          std::to_string(t) + " exceeds " +
                          std::to_string(kMaxJumpProbability) + " (reduce dt)");
  }

  const double t_end = static_cast<double>(s.step + 1) * k.dt;
  if (u < p) {
    if (!(rate > 0.0)) throw InvariantBreach("trajectory: jump from a state with <c^dag c> = 0");
    s.record.detection_times.push_back(t_end);
    if (k.feedback.is_markovian()) {
      s.scratch.noalias() = k.markovian_jump * s.psi;
      s.record.feedback_times.push_back(t_end);
    } else {
      s.pending.push_back(t_end + k.feedback.delay());
    }
  } else {
    s.scratch.noalias() = k.no_jump * s.psi;
  }
  s.psi.swap(s.scratch);
  normalize(s.psi);
  ++s.step;
}

inline void step(TrajectoryState& s, const TrajectoryKernel& k) {
  step_with_draw(s, k, s.rng.uniform());
}

// Pure initial state, or a mixed one sampled per trajectory from its
// eigendecomposition (eigenvalues as probabilities, one uniform draw).
using InitialState = std::variant<StateVector, DensityMatrix>;

class InitialSampler {
 public:
  explicit InitialSampler(const InitialState& init) {
    if (const auto* psi = std::get_if<StateVector>(&init)) {
      StateVector v = *psi;
      normalize(v);
      states_.push_back(std::move(v));
      mixed_ = false;
      return;
    }
    const auto& rho = std::get<DensityMatrix>(init).op();
    Eigen::SelfAdjointEigenSolver<Operator> solver(0.5 * (rho + rho.adjoint()));
    double total = 0.0;
    for (Index i = 0; i < rho.rows(); ++i) {
      const double w = std::max(0.0, solver.eigenvalues()(i));
      if (w <= 0.0) continue;
      total += w;
      cumulative_.push_back(total);
      states_.push_back(solver.eigenvectors().col(i));
    }
    for (double& c : cumulative_) c /= total;
    mixed_ = true;
  }

  StateVector sample(Rng& rng) const {
    if (!mixed_) return states_.front();
    const double u = rng.uniform();
    const auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
    const auto idx = std::min<size_t>(static_cast<size_t>(it - cumulative_.begin()),
                                      states_.size() - 1);
    return states_[idx];
  }

  Index dim() const { return states_.front().size(); }

 private:
  std::vector<StateVector> states_;
  std::vector<double> cumulative_;
  bool mixed_ = false;
};

// Runs one trajectory, calling on_record(record_index, t, psi) at t = 0 and
// every cfg.record_every steps.
template <class OnRecord>
JumpRecord simulate_trajectory(const TrajectoryKernel& kernel, const InitialSampler& init,
                               const IntegrationConfig& cfg, std::uint64_t seed,
                               OnRecord&& on_record) {
  const long n_steps = cfg.steps();
  Rng rng(seed);
  TrajectoryState state(init.sample(rng), seed);
  state.rng = rng;
  long record_index = 0;
  on_record(record_index++, 0.0, state.psi);
  for (long i = 1; i <= n_steps; ++i) {
    step(state, kernel);
    if (i % cfg.record_every == 0) on_record(record_index++, state.time(kernel.dt), state.psi);
  }
  return std::move(state.record);
}

struct TrajectoryResult {
  std::vector<double> times;
  std::vector<StateVector> states;
  JumpRecord record;
};

inline TrajectoryResult run_trajectory(const SystemModel& model, const FeedbackConfig& fb,
                                       const IntegrationConfig& cfg, const InitialState& init,
                                       std::uint64_t seed) {
  const TrajectoryKernel kernel(model, fb, cfg.dt);
  const InitialSampler sampler(init);
  if (sampler.dim() != model.dim) throw DimensionError("run_trajectory: initial state dim");
  TrajectoryResult out;
  out.record = simulate_trajectory(kernel, sampler, cfg, seed,
                                   [&](long, double t, const StateVector& psi) {
                                     out.times.push_back(t);
                                     out.states.push_back(psi);
                                   });
  return out;
}

struct EnsembleResult {
  std::vector<std::string> labels;
  std::vector<double> times;
  std::vector<std::vector<double>> mean;            // [record][observable]
  std::vector<std::vector<double>> standard_error;  // NaN when n_traj == 1
  std::vector<Operator> mean_state;                 // ensemble-averaged |psi><psi|
  long n_traj = 0;
};

namespace detail {

// Running mean / sum of squared deviations for a fixed block of trajectories.
struct EnsembleAccumulator {
  long count = 0;
  std::vector<std::vector<double>> mean;
  std::vector<std::vector<double>> m2;
  std::vector<Operator> state_sum;

  EnsembleAccumulator(size_t n_records, size_t n_obs, Index dim)
      : mean(n_records, std::vector<double>(n_obs, 0.0)),
        m2(n_records, std::vector<double>(n_obs, 0.0)),
        state_sum(n_records, Operator::Zero(dim, dim)) {}

  // Chan et al. pairwise combination.
  void merge(const EnsembleAccumulator& o) {
    if (o.count == 0) return;
    const double n_a = static_cast<double>(count);
    const double n_b = static_cast<double>(o.count);
    const double n = n_a + n_b;
    for (size_t r = 0; r < mean.size(); ++r) {
      for (size_t j = 0; j < mean[r].size(); ++j) {
        const double delta = o.mean[r][j] - mean[r][j];
        mean[r][j] += delta * n_b / n;
        m2[r][j] += o.m2[r][j] + delta * delta * n_a * n_b / n;
      }
      state_sum[r] += o.state_sum[r];
    }
    count += o.count;
  }
};

}  // namespace detail

inline constexpr long kEnsembleBlockSize = 32;
inline constexpr long kEnsembleWaveBlocks = 16;

// Ensemble mean and standard error of every model observable. Trajectory i
// uses derive_seed(master_seed, i). Trajectories are grouped into fixed
// blocks of kEnsembleBlockSize and blocks are merged in index order, so the
// result is bit-identical for any thread count.
inline EnsembleResult ensemble_average(const SystemModel& model, const FeedbackConfig& fb,
                                       const IntegrationConfig& cfg, const InitialState& init,
                                       long n_traj, std::uint64_t master_seed,
                                       unsigned threads = 0) {
  if (n_traj < 1) throw ConfigError("n_traj: must be >= 1");
  const TrajectoryKernel kernel(model, fb, cfg.dt);
  const InitialSampler sampler(init);
  if (sampler.dim() != model.dim) throw DimensionError("ensemble_average: initial state dim");

  const long n_steps = cfg.steps();
  const size_t n_records = static_cast<size_t>(n_steps / cfg.record_every + 1);
  const size_t n_obs = model.observables.size();
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());

  auto run_block = [&](long block) {
    detail::EnsembleAccumulator acc(n_records, n_obs, model.dim);
    const long first = block * kEnsembleBlockSize;
    const long last = std::min(n_traj, first + kEnsembleBlockSize);
    for (long i = first; i < last; ++i) {
      const double n = static_cast<double>(++acc.count);
      simulate_trajectory(kernel, sampler, cfg, derive_seed(master_seed, static_cast<std::uint64_t>(i)),
                          [&](long r, double, const StateVector& psi) {
                            for (size_t j = 0; j < n_obs; ++j) {
                              const double x = expectation(model.observables[j].op, psi).real();
                              const double delta = x - acc.mean[r][j];
                              acc.mean[r][j] += delta / n;
                              acc.m2[r][j] += delta * (x - acc.mean[r][j]);
                            }
                            acc.state_sum[r] += psi * psi.adjoint();
                          });
    }
    return acc;
  };

  detail::EnsembleAccumulator total(n_records, n_obs, model.dim);
  const long n_blocks = (n_traj + kEnsembleBlockSize - 1) / kEnsembleBlockSize;
  for (long wave_start = 0; wave_start < n_blocks; wave_start += kEnsembleWaveBlocks) {
    const long wave_end = std::min(n_blocks, wave_start + kEnsembleWaveBlocks);
    std::vector<std::optional<detail::EnsembleAccumulator>> results(
        static_cast<size_t>(wave_end - wave_start));
    std::vector<std::exception_ptr> errors(results.size());
    std::atomic<long> next{wave_start};
    auto worker = [&] {
      for (long b = next++; b < wave_end; b = next++) {
        const auto slot = static_cast<size_t>(b - wave_start);
        try {
          results[slot].emplace(run_block(b));
        } catch (...) {
          errors[slot] = std::current_exception();
        }
      }
    };
    const unsigned n_workers =
        std::min<unsigned>(threads, static_cast<unsigned>(wave_end - wave_start));
    if (n_workers <= 1) {
      worker();
    } else {
      std::vector<std::thread> pool;
      for (unsigned w = 0; w < n_workers; ++w) pool.emplace_back(worker);
      for (auto& th : pool) th.join();
    }
    for (size_t slot = 0; slot < results.size(); ++slot) {
      if (errors[slot]) std::rethrow_exception(errors[slot]);
      total.merge(*results[slot]);
    }
  }

  EnsembleResult out;
  out.n_traj = n_traj;
  for (const auto& obs : model.observables) out.labels.push_back(obs.label);
  for (size_t r = 0; r < n_records; ++r) {
    out.times.push_back(static_cast<double>(static_cast<long>(r) * cfg.record_every) * cfg.dt);
  }
  out.mean = total.mean;
  out.standard_error.assign(n_records, std::vector<double>(n_obs));
  const double n = static_cast<double>(n_traj);
  for (size_t r = 0; r < n_records; ++r) {
    for (size_t j = 0; j < n_obs; ++j) {
      out.standard_error[r][j] = n_traj > 1
                                     ? std::sqrt(total.m2[r][j] / (n - 1.0) / n)
                                     : std::numeric_limits<double>::quiet_NaN();
    }
    out.mean_state.push_back(total.state_sum[r] / n);
  }
  return out;
}

}  // namespace qfb
