#pragma once

// Feedback master equation for zero delay,
//
//   drho/dt = -i[H, rho] + U c rho c^dag U^dag - 1/2 {c^dag c, rho},  U = exp(-iZ),
//
// i.e. a Lindblad equation whose single jump operator is exp(-iZ) c. Built
// as a dense D^2 x D^2 matrix acting on column-stacked density matrices.

#include <cmath>
#include <string>
#include <vector>

#include "qfb/error.hpp"
#include "qfb/linalg.hpp"
#include "qfb/model.hpp"

namespace qfb {

class Superoperator {
 public:
  Superoperator() = default;
  Superoperator(Index system_dim, Operator matrix)
      : system_dim_(system_dim), matrix_(std::move(matrix)) {
    if (matrix_.rows() != system_dim_ * system_dim_ || matrix_.cols() != matrix_.rows()) {
      throw DimensionError("superoperator: matrix is " + std::to_string(matrix_.rows()) + "x" +
                           std::to_string(matrix_.cols()) + ", expected D^2 x D^2 with D=" +
                           std::to_string(system_dim_));
    }
  }

  Index system_dim() const noexcept { return system_dim_; }
  const Operator& matrix() const noexcept { return matrix_; }

 private:
  Index system_dim_ = 0;
  Operator matrix_;
};

// max_j |(vec(I)^dag L)_j|; zero for a trace-preserving generator.
inline double trace_preservation_defect(const Superoperator& l) {
  const StateVector id = vectorize(identity(l.system_dim()));
  return (id.adjoint() * l.matrix()).cwiseAbs().maxCoeff();
}

// exp(-iZ) c
inline Operator feedback_jump_operator(const SystemModel& model) {
  require_valid(model);
  return matrix_exp(-kI * model.feedback_generator) * model.collapse;
}

inline Superoperator build_feedback_liouvillian(const SystemModel& model) {
  const Operator jump = feedback_jump_operator(model);
  const Index d = model.dim;
  const Operator id = identity(d);
  const Operator& h = model.hamiltonian;
  const Operator cdc = model.collapse.adjoint() * model.collapse;

  Operator l = -kI * (kron(id, h) - kron(h.transpose(), id));
  l += kron(jump.conjugate(), jump);
  l -= 0.5 * kron(id, cdc);
  l -= 0.5 * kron(cdc.transpose(), id);

  Superoperator out(d, std::move(l));
  const double defect = trace_preservation_defect(out);
  if (defect > 1e-12 * std::max(1.0, norm_1(out.matrix()))) {
    throw InvariantBreach("liouvillian: trace preservation defect " + std::to_string(defect));
  }
  return out;
}

inline void require_compatible(const Superoperator& l, const Operator& rho, const char* what) {
  if (rho.rows() != l.system_dim() || rho.cols() != l.system_dim()) {
    throw DimensionError(std::string(what) + ": operator dim " + std::to_string(rho.rows()) +
                         " vs superoperator system dim " + std::to_string(l.system_dim()));
  }
}

// drho/dt for the given state (traceless, not a density matrix).
inline Operator apply_liouvillian(const Superoperator& l, const Operator& rho) {
  require_compatible(l, rho, "apply_liouvillian");
  return unvectorize(l.matrix() * vectorize(rho));
}

inline Operator apply_liouvillian(const Superoperator& l, const DensityMatrix& rho) {
  return apply_liouvillian(l, rho.op());
}

struct TimeSeries {
  std::vector<double> times;
  std::vector<DensityMatrix> states;
};

// Tolerances checked on every recorded state of evolve().
inline constexpr DensityMatrix::Tolerance kEvolveTolerance{1e-10, 1e-8, 1e-6};

// Fixed-step classical RK4 on the vectorized equation. Records the initial
// state and every record_every steps thereafter.
inline TimeSeries evolve(const Superoperator& l, const DensityMatrix& rho0,
                         const IntegrationConfig& cfg) {
  require_compatible(l, rho0.op(), "evolve");
  const long n_steps = cfg.steps();
  const double dt = cfg.dt;
  const Operator& m = l.matrix();

  TimeSeries out;
  out.times.reserve(static_cast<size_t>(n_steps / cfg.record_every + 1));
  out.states.reserve(out.times.capacity());
  out.times.push_back(0.0);
  out.states.push_back(rho0);

  StateVector v = vectorize(rho0);
  StateVector k1(v.size()), k2(v.size()), k3(v.size()), k4(v.size()), tmp(v.size());
  for (long step = 1; step <= n_steps; ++step) {
    k1.noalias() = m * v;
    tmp = v + (0.5 * dt) * k1;
    k2.noalias() = m * tmp;
    tmp = v + (0.5 * dt) * k2;
    k3.noalias() = m * tmp;
    tmp = v + dt * k3;
    k4.noalias() = m * tmp;
    v += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);

    if (step % cfg.record_every == 0) {
      Operator rho = unvectorize(v);
      const double t = static_cast<double>(step) * dt;
      if (auto problem = DensityMatrix::check(rho, kEvolveTolerance)) {
        throw InvariantBreach("evolve: at t=" + std::to_string(t) + ": " + *problem +
                              " (dt too large?)");
      }
      out.times.push_back(t);
      out.states.push_back(DensityMatrix::unchecked(std::move(rho)));
    }
  }
  return out;
}

// Unique fixed point of the generator: smallest right singular vector,
// rescaled to unit trace and symmetrized. Multidimensional null spaces are
// reported as DegenerateSteadyState.
inline DensityMatrix steady_state(const Superoperator& l, double tolerance = 1e-8) {
  const NullSpace ns = null_space(l.matrix(), tolerance);
  if (ns.singular_values(0) > tolerance) {
    throw NoSteadyState("steady_state: smallest singular value " +
                        std::to_string(ns.singular_values(0)) + " exceeds tolerance");
  }
  if (ns.dimension() > 1) {
    throw DegenerateSteadyState("steady_state: null space has dimension " +
                                    std::to_string(ns.dimension()),
                                ns.dimension());
  }
  Operator rho = unvectorize(ns.vector);
  const Complex tr = rho.trace();
  if (std::abs(tr) < 1e-12) throw NoSteadyState("steady_state: null vector is traceless");
  rho /= tr;
  rho = (0.5 * (rho + rho.adjoint())).eval();
  const double residual = (l.matrix() * vectorize(rho)).norm();
  if (residual > tolerance) {
    throw NoSteadyState("steady_state: residual " + std::to_string(residual) +
                        " after normalization");
  }
  return DensityMatrix(std::move(rho));
}

// Conjugate transpose of the generator, i.e. the adjoint under the
// Hilbert-Schmidt inner product <A, B> = Tr(A^dag B).
inline Superoperator adjoint_liouvillian(const Superoperator& l) {
  return Superoperator(l.system_dim(), l.matrix().adjoint());
}

// Heisenberg-picture action L*(s) from the adjoint superoperator, satisfying
// Tr(s L(rho)) = Tr(L*(s) rho) for every s.
inline Operator apply_adjoint(const Superoperator& adjoint, const Operator& s) {
  require_compatible(adjoint, s, "apply_adjoint");
  return unvectorize(adjoint.matrix() * vectorize(Operator(s.adjoint()))).adjoint();
}

// i[H, s] + c^dag e^{iZ} s e^{-iZ} c - 1/2 {c^dag c, s}, assembled directly
// from the model.
inline Operator heisenberg_generator(const SystemModel& model, const Operator& s) {
  if (s.rows() != model.dim || s.cols() != model.dim) {
    throw DimensionError("heisenberg_generator: operator dim " + std::to_string(s.rows()) +
                         " vs model dim " + std::to_string(model.dim));
  }
  const Operator jump = feedback_jump_operator(model);
  const Operator cdc = model.collapse.adjoint() * model.collapse;
  return kI * commutator(model.hamiltonian, s) + jump.adjoint() * s * jump -
         0.5 * anticommutator(cdc, s);
}

// d<s>/dt in state rho.
inline Complex moment_rhs(const SystemModel& model, const Operator& s, const Operator& rho) {
  if (rho.rows() != model.dim || rho.cols() != model.dim) {
    throw DimensionError("moment_rhs: state dim " + std::to_string(rho.rows()) +
                         " vs model dim " + std::to_string(model.dim));
  }
  return expectation(heisenberg_generator(model, s), rho);
}

}  // namespace qfb
