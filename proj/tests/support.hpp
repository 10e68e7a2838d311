#pragma once

// Shared helpers for the unit tests: random states and central differences.

#include <Eigen/Core>

#include <functional>
#include <random>

#include "defvins/experiment.hpp"
#include "defvins/types.hpp"

namespace defvins::test {

inline Vector3d random_vec(std::mt19937& rng, double scale) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  return scale * Vector3d(u(rng), u(rng), u(rng));
}

inline RigidState random_state(std::mt19937& rng) {
  RigidState s;
  s.R = so3_exp(random_vec(rng, 1.0));
  s.v = random_vec(rng, 1.0);
  s.p = random_vec(rng, 2.0);
  return s;
}

/// Central difference of f(x + h e_j) over j.
inline MatrixXd numeric_jacobian(const std::function<VectorXd(const VectorXd&)>& f, int dim, double h = 1e-6) {
  const VectorXd f0 = f(VectorXd::Zero(dim));
  MatrixXd J(f0.size(), dim);
  for (int j = 0; j < dim; ++j) {
    VectorXd d = VectorXd::Zero(dim);
    d(j) = h;
    J.col(j) = (f(d) - f(-d)) / (2 * h);
  }
  return J;
}

/// Relative error with an absolute floor so that identically zero blocks
/// compare against noise rather than divide by zero.
inline double relative_error(const MatrixXd& analytic, const MatrixXd& numeric, double floor = 1e-6) {
  return (analytic - numeric).norm() / std::max(numeric.norm(), floor);
}

/// Ground-truth window over keyframes [first, first + n) with the nodes of
/// keyframe `first` as static landmarks and no node instances.
inline Segment rigid_window(const SimOutput& sim, int first, int n) {
  Segment seg = segment_at(sim, first, n, nullptr);
  for (std::size_t i = 0; i < sim.node_ids.size(); ++i) {
    seg.state.landmarks[sim.node_ids[i]] = sim.gt_nodes[static_cast<std::size_t>(first)][i];
  }
  for (auto& ns : seg.state.nodes) ns.clear();
  return seg;
}

inline SceneConfig scene(DeformationLevel level, std::uint64_t seed, bool noiseless) {
  SceneConfig c;
  c.level = level;
  c.seed = seed;
  c.noiseless = noiseless;
  return c;
}

}  // namespace defvins::test
