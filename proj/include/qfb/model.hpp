#pragma once

// Physical system under photodetection feedback: Hamiltonian H, collapse
// operator c (the system operator coupled to the output field), feedback
// generator Z (each detected photon applies exp(-iZ)), and labelled
// observables. Rates are in units of the decay rate; time in its inverse.

#include <charconv>
#include <cmath>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include "qfb/error.hpp"
#include "qfb/linalg.hpp"

namespace qfb {

struct Observable {
  std::string label;
  Operator op;
};

struct SystemModel {
  Index dim = 0;
  Operator hamiltonian;
  Operator collapse;
  Operator feedback_generator;
  std::vector<Observable> observables;
};

enum class FeedbackMode { markovian, delayed };

// Delay between a detection and the feedback unitary it triggers. The field
// speed enters only through this round-trip delay.
class FeedbackConfig {
 public:
  FeedbackConfig() = default;

  static FeedbackConfig markovian() { return FeedbackConfig(); }

  // tau == 0 gives markovian mode.
  static FeedbackConfig with_delay(double tau) {
    if (!(tau >= 0.0) || !std::isfinite(tau)) {
      throw ConfigError("feedback.tau: must be a finite non-negative number");
    }
    FeedbackConfig fb;
    fb.delay_ = tau;
    fb.mode_ = tau > 0.0 ? FeedbackMode::delayed : FeedbackMode::markovian;
    return fb;
  }

  double delay() const noexcept { return delay_; }
  FeedbackMode mode() const noexcept { return mode_; }
  bool is_markovian() const noexcept { return mode_ == FeedbackMode::markovian; }

 private:
  double delay_ = 0.0;
  FeedbackMode mode_ = FeedbackMode::markovian;
};

struct IntegrationConfig {
  double dt = 1e-3;
  double t_final = 1.0;
  long record_every = 1;

  // Number of steps; throws unless t_final is an integer multiple of dt.
  long steps() const {
    if (!(dt > 0.0) || !std::isfinite(dt)) throw ConfigError("integration.dt: must be positive");
    if (!(t_final > 0.0) || !std::isfinite(t_final)) {
      throw ConfigError("integration.t_final: must be positive");
    }
    if (dt > t_final) throw ConfigError("integration.dt: exceeds t_final");
    if (record_every < 1) throw ConfigError("integration.record_every: must be >= 1");
    const double ratio = t_final / dt;
    if (ratio > 1e15) throw ConfigError("integration: t_final/dt does not fit in an integer");
    const long n = std::lround(ratio);
    if (std::abs(static_cast<double>(n) - ratio) > 1e-9 * ratio) {
      throw ConfigError("integration.t_final: not an integer multiple of dt");
    }
    return n;
  }
};

// Shortest round-trip decimal with a guaranteed fractional part ("1.0", "0.3").
inline std::string format_defect(double x) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), x);
  std::string s(buf, res.ptr);
  if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
  return s;
}

// Empty iff the model is usable. Never throws.
inline std::vector<std::string> validate(const SystemModel& model) {
  std::vector<std::string> out;
  if (model.dim < 1) {
    out.push_back("dim must be >= 1, got " + std::to_string(model.dim));
    return out;
  }
  auto check_dim = [&](const Operator& op, const std::string& name) {
    if (op.rows() != model.dim || op.cols() != model.dim) {
      out.push_back(name + " has dimension " + std::to_string(op.rows()) + "x" +
                    std::to_string(op.cols()) + ", model dim is " + std::to_string(model.dim));
      return false;
    }
    if (!op.allFinite()) {
      out.push_back(name + " has non-finite entries");
      return false;
    }
    return true;
  };
  auto check_herm = [&](const Operator& op, const std::string& name) {
    const double d = hermitian_defect(op);
    if (d > 1e-12) out.push_back(name + " not Hermitian: defect " + format_defect(d));
  };
  if (check_dim(model.hamiltonian, "hamiltonian")) check_herm(model.hamiltonian, "hamiltonian");
  check_dim(model.collapse, "collapse");
  if (check_dim(model.feedback_generator, "feedback_generator")) {
    check_herm(model.feedback_generator, "feedback_generator");
  }
  for (const auto& obs : model.observables) {
    const std::string name = "observable '" + obs.label + "'";
    if (obs.label.empty()) out.push_back("observable with empty label");
    if (check_dim(obs.op, name)) check_herm(obs.op, name);
  }
  return out;
}

inline void require_valid(const SystemModel& model) {
  auto problems = validate(model);
  if (!problems.empty()) throw ConfigError(std::move(problems));
}

// Feedback generator for the two-level preset: zero, lambda*sigma_x,
// phi*sigma_z, or an explicit matrix.
struct NoFeedback {};
struct SigmaXFeedback {
  double lambda;
};
struct SigmaZFeedback {
  double phi;
};
using ZSpec = std::variant<NoFeedback, SigmaXFeedback, SigmaZFeedback, Operator>;

inline Operator build_generator(const ZSpec& spec, Index dim) {
  return std::visit(
      [dim](const auto& s) -> Operator {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, NoFeedback>) {
          return zero_operator(dim);
        } else if constexpr (std::is_same_v<T, SigmaXFeedback>) {
          return s.lambda * sigma_x();
        } else if constexpr (std::is_same_v<T, SigmaZFeedback>) {
          return s.phi * sigma_z();
        } else {
          return s;
        }
      },
      spec);
}

inline std::vector<Observable> two_level_observables() {
  return {{"sigma_z", sigma_z()},
          {"sigma_plus_sigma_minus", sigma_plus() * sigma_minus()},
          {"sigma_x", sigma_x()},
          {"sigma_y", sigma_y()}};
}

// Driven, decaying two-level system: H = (omega/2) sigma_x,
// c = sqrt(gamma) sigma_-, with sigma_- mapping |e> (index 0) to |g> (index 1).
inline SystemModel preset_two_level(double omega, double gamma, const ZSpec& z = NoFeedback{}) {
  if (!(gamma > 0.0)) throw ConfigError("model.gamma: must be positive");
  SystemModel m;
  m.dim = 2;
  m.hamiltonian = 0.5 * omega * sigma_x();
  m.collapse = std::sqrt(gamma) * sigma_minus();
  m.feedback_generator = build_generator(z, 2);
  if (m.feedback_generator.rows() != 2 || m.feedback_generator.cols() != 2) {
    throw ConfigError("model.Z: dimension " + std::to_string(m.feedback_generator.rows()) +
                      " does not match model dim 2");
  }
  const double defect = hermitian_defect(m.feedback_generator);
  if (defect > 1e-12) {
    throw ConfigError("model.Z: not Hermitian, defect " + format_defect(defect));
  }
  m.observables = two_level_observables();
  return m;
}

// Truncated lowering operator on Fock states |0>..|N-1> (index n = Fock n).
inline Operator lowering_operator(Index n) {
  Operator a = Operator::Zero(n, n);
  for (Index k = 1; k < n; ++k) a(k - 1, k) = std::sqrt(static_cast<double>(k));
  return a;
}

// Damped cavity with photon-number feedback: H = 0, c = sqrt(kappa) a,
// Z = chi a^dag a.
inline SystemModel preset_cavity(Index n, double kappa, double chi) {
  if (n < 2) throw ConfigError("model.N: must be >= 2");
  if (!(kappa > 0.0)) throw ConfigError("model.kappa: must be positive");
  const Operator a = lowering_operator(n);
  const Operator number = a.adjoint() * a;
  SystemModel m;
  m.dim = n;
  m.hamiltonian = zero_operator(n);
  m.collapse = std::sqrt(kappa) * a;
  m.feedback_generator = chi * number;
  m.observables = {{"photon_number", number}};
  return m;
}

// Reverses the index order: maps cavity Fock n to two-level index (N-1-n), so
// for N=2 Fock |1> <-> |e> and Fock |0> <-> |g>.
inline Operator reverse_basis(const Operator& op) {
  return op.colwise().reverse().rowwise().reverse();
}

}  // namespace qfb
