#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "shapecomp/mesh.hpp"
#include "shapecomp/vae.hpp"

namespace shapecomp {

// Element of SE(3); maps points by x -> R x + t.
struct RigidTransform {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  Eigen::Vector3d apply(const Eigen::Vector3d& p) const { return rotation * p + translation; }
  Eigen::Matrix3Xd apply(const Eigen::Matrix3Xd& pts) const {
    return (rotation * pts).colwise() + translation;
  }
  RigidTransform inverse() const {
    RigidTransform inv;
    inv.rotation = rotation.transpose();
    inv.translation = -(rotation.transpose() * translation);
    return inv;
  }
  // Orthogonality within 1e-9 and det +1; throws NumericError otherwise.
  void validate() const;
};

// Weighted Procrustes optimum (Kabsch): the returned transform minimizes
// sum_p w_p ||R y_p + t - x_p||^2 for source points y and target points x.
// Throws NumericError("degenerate configuration") when the weighted
// cross-covariance has rank < 2.
RigidTransform solve_rigid(const Eigen::Matrix3Xd& source, const Eigen::Matrix3Xd& target,
                           const std::vector<double>& weights = {});

// Extrinsic dissimilarity between corresponded full-shape vertices and the
// rigidly transformed partial points:
//   D = sqrt( sum_p (w_p * ||X_pi(p) - T y_p||)^2 )
// reducing to the plain Euclidean norm of the residual for unit weights.
double dissimilarity(const Mesh& full, const Eigen::Matrix3Xd& partial_points,
                     const Correspondence& corr, const RigidTransform& transform);

struct CompletionConfig {
  long max_iters = 600;
  double latent_lr = 0.1;
  int rigid_period = 10;

  // Correspondence refinement triggers: an objective plateau and/or a fixed
  // iteration. max_refinements caps how many times it fires.
  bool refine = false;
  int plateau_window = 50;
  double plateau_rel_improvement = 1e-3;
  long fixed_refine_iteration = -1;
  int max_refinements = 1;

  std::string init = "random-prior";  // "random-prior" | "zero" | "provided"
  Eigen::VectorXd init_z;
  bool use_confidence_weights = false;
  std::uint64_t seed = 0;

  void validate() const;
};

struct RigidStepRecord {
  long iteration = 0;
  double objective_before = 0.0;
  double objective_after = 0.0;
};

// Iteration 0 records the initial state (after the first rigid solve);
// subsequent rows follow each latent gradient step.
struct CompletionTrace {
  std::vector<double> seen_error;    // mean Euclidean over corresponded points
  std::vector<double> objective;     // the minimized dissimilarity D
  std::vector<double> unseen_error;  // empty unless ground truth was given
  std::vector<std::uint64_t> z_hash;
  std::vector<RigidTransform> transforms;
  std::vector<RigidStepRecord> rigid_steps;
  std::vector<long> refine_iterations;

  std::size_t length() const { return seen_error.size(); }
};

struct CompletionResult {
  Mesh completed;  // decoder (canonical) frame; map back with transform.inverse()
  Eigen::VectorXd latent;
  RigidTransform transform;  // partial frame -> canonical frame
  CompletionTrace trace;
  Correspondence final_corr;
  bool aborted = false;
};

// Alternating minimization of D(dec(z) Pi, T Y) over the latent vector z
// (plain gradient descent through the decoder) and the rigid transform T
// (closed-form Procrustes every rigid_period iterations). Optional ground
// truth (+ visibility mask) populates the trace's unseen error.
CompletionResult complete(const Eigen::Matrix3Xd& partial_points, const Correspondence& corr,
                          VaeModel& model, const CompletionConfig& config,
                          const Mesh* ground_truth = nullptr,
                          const std::vector<bool>* visibility_mask = nullptr);

// Euclidean closest-vertex reassignment of every partial point against the
// current completed shape; duplicate targets keep the nearer point.
Correspondence refine_correspondence(const Eigen::Matrix3Xd& partial_points,
                                     const Mesh& current_full, const RigidTransform& transform);

// Keeps pairs whose extrinsic residual to the completed shape is at most
// `threshold`; the result is a subset of the input.
Correspondence filter_correspondence(const Eigen::Matrix3Xd& partial_points,
                                     const Mesh& completed, const Correspondence& corr,
                                     const RigidTransform& transform, double threshold);

// Decoded arithmetic mean of the latent vectors.
Mesh fuse(const std::vector<Eigen::VectorXd>& latents, VaeModel& model);

// Mean Euclidean distance over corresponded points under a transform.
double mean_corresponded_distance(const Mesh& full, const Eigen::Matrix3Xd& partial_points,
                                  const Correspondence& corr, const RigidTransform& transform);

void write_trace_csv(const std::string& path, const CompletionTrace& trace);

}  // namespace shapecomp
