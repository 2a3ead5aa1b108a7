#include "shapecomp/completion.hpp"

#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <limits>

#include "shapecomp/errors.hpp"
#include "shapecomp/rng.hpp"

namespace shapecomp {

void RigidTransform::validate() const {
  const double ortho = (rotation.transpose() * rotation - Eigen::Matrix3d::Identity()).norm();
  if (ortho >= 1e-9) throw NumericError("rigid transform: rotation not orthogonal");
  if (rotation.determinant() <= 0.0) throw NumericError("rigid transform: reflection");
  if (!translation.allFinite() || !rotation.allFinite()) {
    throw NumericError("rigid transform: non-finite entries");
  }
}

RigidTransform solve_rigid(const Eigen::Matrix3Xd& source, const Eigen::Matrix3Xd& target,
                           const std::vector<double>& weights) {
  const Eigen::Index p = source.cols();
  if (p != target.cols()) throw DataError("solve_rigid: point count mismatch");
  if (p < 3) throw NumericError("solve_rigid: needs at least 3 points");
  if (!weights.empty() && static_cast<Eigen::Index>(weights.size()) != p) {
    throw DataError("solve_rigid: weight count mismatch");
  }

  double w_sum = 0.0;
  Eigen::Vector3d src_centroid = Eigen::Vector3d::Zero();
  Eigen::Vector3d tgt_centroid = Eigen::Vector3d::Zero();
  for (Eigen::Index i = 0; i < p; ++i) {
    const double w = weights.empty() ? 1.0 : weights[static_cast<std::size_t>(i)];
    w_sum += w;
    src_centroid += w * source.col(i);
    tgt_centroid += w * target.col(i);
  }
  if (w_sum <= 0.0) throw NumericError("solve_rigid: weights sum to zero");
  src_centroid /= w_sum;
  tgt_centroid /= w_sum;

  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  for (Eigen::Index i = 0; i < p; ++i) {
    const double w = weights.empty() ? 1.0 : weights[static_cast<std::size_t>(i)];
    cov += w * (source.col(i) - src_centroid) * (target.col(i) - tgt_centroid).transpose();
  }

  Eigen::JacobiSVD<Eigen::Matrix3d> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Eigen::Vector3d sv = svd.singularValues();
  if (!(sv[1] > 1e-12 * sv[0]) || sv[0] == 0.0) {
    throw NumericError("solve_rigid: degenerate configuration");
  }

  Eigen::Matrix3d d = Eigen::Matrix3d::Identity();
  d(2, 2) = (svd.matrixV() * svd.matrixU().transpose()).determinant() < 0.0 ? -1.0 : 1.0;

  RigidTransform out;
  out.rotation = svd.matrixV() * d * svd.matrixU().transpose();
  out.translation = tgt_centroid - out.rotation * src_centroid;
  return out;
}

double dissimilarity(const Mesh& full, const Eigen::Matrix3Xd& partial_points,
                     const Correspondence& corr, const RigidTransform& transform) {
  if (corr.pairs.empty()) throw DataError("dissimilarity: empty correspondence");
  corr.validate(static_cast<int>(partial_points.cols()), full.vertex_count());
  double acc = 0.0;
  for (std::size_t i = 0; i < corr.pairs.size(); ++i) {
    const auto& [pi, ri] = corr.pairs[i];
    const Eigen::Vector3d moved = transform.apply(partial_points.col(pi).eval());
    const double dist = (full.vertices.col(ri) - moved).norm();
    const double weighted = corr.weight(i) * dist;
    acc += weighted * weighted;
  }
  return std::sqrt(acc);
}

double mean_corresponded_distance(const Mesh& full, const Eigen::Matrix3Xd& partial_points,
                                  const Correspondence& corr, const RigidTransform& transform) {
  if (corr.pairs.empty()) throw DataError("mean_corresponded_distance: empty correspondence");
  double acc = 0.0;
  for (const auto& [pi, ri] : corr.pairs) {
    const Eigen::Vector3d moved = transform.apply(partial_points.col(pi).eval());
    acc += (full.vertices.col(ri) - moved).norm();
  }
  return acc / static_cast<double>(corr.pairs.size());
}

void CompletionConfig::validate() const {
  if (max_iters < 0) throw DataError("completion config: max_iters must be >= 0");
  if (!(latent_lr > 0.0)) throw DataError("completion config: latent learning rate must be > 0");
  if (rigid_period < 1) throw DataError("completion config: rigid_period must be >= 1");
  if (plateau_window < 1) throw DataError("completion config: plateau_window must be >= 1");
  if (init != "random-prior" && init != "zero" && init != "provided") {
    throw DataError("completion config: unknown init '" + init + "'");
  }
}

namespace {

std::uint64_t hash_vector(const Eigen::VectorXd& z) {
  std::uint64_t h = 1469598103934665603ULL;
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    std::uint64_t bits;
    const double v = z[i];
    static_assert(sizeof(bits) == sizeof(v));
    std::memcpy(&bits, &v, sizeof(bits));
    h ^= bits;
    h *= 1099511628211ULL;
  }
  return h;
}

// Decoder value and d(objective)/dz for the current (z, T, corr).
struct ObjectiveEval {
  Tensor decoded;       // N x 3
  double objective;     // weighted dissimilarity D
  Eigen::VectorXd grad; // zero when the objective has no gradient (D == 0)
};

ObjectiveEval eval_objective(VaeModel& model, Parameter& z_param,
                             const Eigen::Matrix3Xd& moved_partial, const Correspondence& corr,
                             bool use_weights) {
  Tape t;
  const auto z = t.param(z_param);
  const auto decoded = model.decode_nodes(t, z);

  std::vector<int> ref_idx;
  ref_idx.reserve(corr.pairs.size());
  Tensor target(corr.pairs.size(), 3);
  Tensor weight_col(corr.pairs.size(), 1);
  for (std::size_t i = 0; i < corr.pairs.size(); ++i) {
    ref_idx.push_back(corr.pairs[i].second);
    const Eigen::Vector3d q = moved_partial.col(corr.pairs[i].first);
    for (std::size_t k = 0; k < 3; ++k) target(i, k) = q[static_cast<Eigen::Index>(k)];
    weight_col[i] = use_weights ? corr.weight(i) : 1.0;
  }

  auto residual = t.sub(t.gather_rows(decoded, ref_idx), t.constant(std::move(target)));
  residual = t.mul_col(residual, t.constant(std::move(weight_col)));
  const auto objective = t.l2_norm(residual);

  z_param.zero_grad();
  t.backward(objective);

  ObjectiveEval out;
  out.decoded = t.value(decoded);
  out.objective = t.value(objective).scalar_value();
  out.grad = Eigen::Map<const Eigen::VectorXd>(z_param.grad.data(),
                                               static_cast<Eigen::Index>(z_param.grad.size()));
  return out;
}

}  // namespace

CompletionResult complete(const Eigen::Matrix3Xd& partial_points, const Correspondence& corr,
                          VaeModel& model, const CompletionConfig& config,
                          const Mesh* ground_truth, const std::vector<bool>* visibility_mask) {
  config.validate();
  if (corr.pairs.empty()) throw DataError("complete: empty correspondence");
  corr.validate(static_cast<int>(partial_points.cols()), model.reference().vertex_count());
  if (ground_truth) model.check_topology(*ground_truth);

  const int d = model.latent_dim();
  Rng rng(config.seed);
  Eigen::VectorXd z(d);
  if (config.init == "zero") {
    z.setZero();
  } else if (config.init == "provided") {
    if (config.init_z.size() != d) throw DataError("complete: init_z dimension mismatch");
    z = config.init_z;
  } else {
    z = sample_latent(d, rng);
  }

  Parameter z_param("z", Tensor(1, static_cast<std::size_t>(d)));
  auto sync_z = [&]() {
    for (int k = 0; k < d; ++k) z_param.value[static_cast<std::size_t>(k)] = z[k];
  };
  sync_z();

  CompletionResult result;
  result.final_corr = corr;
  RigidTransform transform;  // identity start

  auto record = [&](const Tensor& decoded, double objective) {
    Mesh current;
    current.vertices = vertices_from_features(decoded);
    current.faces = model.reference().faces;
    result.trace.objective.push_back(objective);
    result.trace.seen_error.push_back(
        mean_corresponded_distance(current, partial_points, result.final_corr, transform));
    if (ground_truth && visibility_mask) {
      const RigidTransform back = transform.inverse();
      double acc = 0.0;
      int count = 0;
      for (int v = 0; v < ground_truth->vertex_count(); ++v) {
        if ((*visibility_mask)[static_cast<std::size_t>(v)]) continue;
        const Eigen::Vector3d moved = back.apply(current.vertices.col(v).eval());
        acc += (moved - ground_truth->vertices.col(v)).norm();
        ++count;
      }
      result.trace.unseen_error.push_back(count > 0 ? acc / count
                                                    : std::numeric_limits<double>::quiet_NaN());
    }
    result.trace.z_hash.push_back(hash_vector(z));
    result.trace.transforms.push_back(transform);
  };

  const auto weights_for_rigid = [&]() {
    std::vector<double> w;
    if (config.use_confidence_weights && result.final_corr.weighted()) {
      w.reserve(result.final_corr.size());
      // The objective squares w_p inside the residual norm, so the
      // least-squares weight passed to Procrustes is w_p^2.
      for (double v : result.final_corr.weights) w.push_back(v * v);
    }
    return w;
  };

  auto rigid_step = [&](long iteration, const Tensor& decoded) {
    Mesh current;
    current.vertices = vertices_from_features(decoded);
    current.faces = model.reference().faces;
    Eigen::Matrix3Xd src(3, result.final_corr.size());
    Eigen::Matrix3Xd tgt(3, result.final_corr.size());
    for (std::size_t i = 0; i < result.final_corr.pairs.size(); ++i) {
      src.col(static_cast<Eigen::Index>(i)) =
          partial_points.col(result.final_corr.pairs[i].first);
      tgt.col(static_cast<Eigen::Index>(i)) = current.vertices.col(result.final_corr.pairs[i].second);
    }
    RigidStepRecord rec;
    rec.iteration = iteration;
    rec.objective_before = dissimilarity(current, partial_points, result.final_corr, transform);
    transform = solve_rigid(src, tgt, weights_for_rigid());
    rec.objective_after = dissimilarity(current, partial_points, result.final_corr, transform);
    result.trace.rigid_steps.push_back(rec);
  };

  int refinements = 0;
  long plateau_cooldown_until = 0;

  try {
    // Initial state: solve the rigid alignment once, then record.
    ObjectiveEval eval =
        eval_objective(model, z_param, transform.apply(partial_points), result.final_corr,
                       config.use_confidence_weights);
    rigid_step(0, eval.decoded);
    eval = eval_objective(model, z_param, transform.apply(partial_points), result.final_corr,
                          config.use_confidence_weights);
    record(eval.decoded, eval.objective);

    for (long iter = 1; iter <= config.max_iters; ++iter) {
      // Latent gradient step (plain gradient descent).
      z -= config.latent_lr * eval.grad;
      sync_z();

      eval = eval_objective(model, z_param, transform.apply(partial_points), result.final_corr,
                            config.use_confidence_weights);

      if (config.rigid_period > 0 && iter % config.rigid_period == 0) {
        rigid_step(iter, eval.decoded);
        eval = eval_objective(model, z_param, transform.apply(partial_points), result.final_corr,
                              config.use_confidence_weights);
      }

      // Correspondence refinement triggers.
      bool do_refine = false;
      if (config.refine && refinements < config.max_refinements) {
        if (config.fixed_refine_iteration >= 0 && iter == config.fixed_refine_iteration) {
          do_refine = true;
        } else if (config.fixed_refine_iteration < 0 && iter >= plateau_cooldown_until &&
                   static_cast<long>(result.trace.objective.size()) > config.plateau_window) {
          const double past =
              result.trace
                  .objective[result.trace.objective.size() - static_cast<std::size_t>(config.plateau_window) - 1];
          const double now = result.trace.objective.back();
          if (past > 0.0 && (past - now) / past < config.plateau_rel_improvement) do_refine = true;
        }
      }
      if (do_refine) {
        Mesh current;
        current.vertices = vertices_from_features(eval.decoded);
        current.faces = model.reference().faces;
        result.final_corr = refine_correspondence(partial_points, current, transform);
        ++refinements;
        plateau_cooldown_until = iter + config.plateau_window;
        result.trace.refine_iterations.push_back(iter);
        rigid_step(iter, eval.decoded);
        eval = eval_objective(model, z_param, transform.apply(partial_points), result.final_corr,
                              config.use_confidence_weights);
      }

      record(eval.decoded, eval.objective);
    }

    result.completed.vertices = vertices_from_features(eval.decoded);
    result.completed.faces = model.reference().faces;
  } catch (const NumericError&) {
    result.aborted = true;
    result.completed = model.decode(z);
  }

  result.latent = z;
  result.transform = transform;
  return result;
}

Correspondence refine_correspondence(const Eigen::Matrix3Xd& partial_points,
                                     const Mesh& current_full, const RigidTransform& transform) {
  const Eigen::Matrix3Xd moved = transform.apply(partial_points);
  const int p = static_cast<int>(partial_points.cols());
  const int n = current_full.vertex_count();

  // Nearest vertex per point; on a duplicate target the nearer point wins.
  std::vector<int> best_point_for_vertex(static_cast<std::size_t>(n), -1);
  std::vector<double> best_dist_for_vertex(static_cast<std::size_t>(n),
                                           std::numeric_limits<double>::infinity());
  for (int i = 0; i < p; ++i) {
    int nearest = -1;
    double nearest_dist = std::numeric_limits<double>::infinity();
    for (int v = 0; v < n; ++v) {
      const double dist = (current_full.vertices.col(v) - moved.col(i)).squaredNorm();
      if (dist < nearest_dist) {
        nearest_dist = dist;
        nearest = v;
      }
    }
    auto& holder = best_point_for_vertex[static_cast<std::size_t>(nearest)];
    auto& held_dist = best_dist_for_vertex[static_cast<std::size_t>(nearest)];
    if (nearest_dist < held_dist) {
      holder = i;
      held_dist = nearest_dist;
    }
  }

  Correspondence out;
  for (int v = 0; v < n; ++v) {
    if (best_point_for_vertex[static_cast<std::size_t>(v)] >= 0) {
      out.pairs.emplace_back(best_point_for_vertex[static_cast<std::size_t>(v)], v);
    }
  }
  std::sort(out.pairs.begin(), out.pairs.end());
  return out;
}

Correspondence filter_correspondence(const Eigen::Matrix3Xd& partial_points,
                                     const Mesh& completed, const Correspondence& corr,
                                     const RigidTransform& transform, double threshold) {
  Correspondence out;
  for (std::size_t i = 0; i < corr.pairs.size(); ++i) {
    const auto& [pi, ri] = corr.pairs[i];
    const Eigen::Vector3d moved = transform.apply(partial_points.col(pi).eval());
    if ((completed.vertices.col(ri) - moved).norm() <= threshold) {
      out.pairs.push_back(corr.pairs[i]);
      if (corr.weighted()) out.weights.push_back(corr.weights[i]);
    }
  }
  return out;
}

Mesh fuse(const std::vector<Eigen::VectorXd>& latents, VaeModel& model) {
  if (latents.empty()) throw DataError("fuse: empty latent list");
  Eigen::VectorXd mean = latents[0];
  for (std::size_t i = 1; i < latents.size(); ++i) {
    if (latents[i].size() != mean.size()) throw DataError("fuse: latent dimension mismatch");
    mean += latents[i];
  }
  mean /= static_cast<double>(latents.size());
  return model.decode(mean);
}

void write_trace_csv(const std::string& path, const CompletionTrace& trace) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open '" + path + "' for writing");
  out << std::setprecision(17);
  out << "iteration,seen_error,objective,unseen_error\n";
  for (std::size_t i = 0; i < trace.length(); ++i) {
    out << i << ',' << trace.seen_error[i] << ',' << trace.objective[i] << ',';
    if (i < trace.unseen_error.size()) out << trace.unseen_error[i];
    out << '\n';
  }
}

}  // namespace shapecomp
