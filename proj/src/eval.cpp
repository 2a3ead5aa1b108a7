#include "shapecomp/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <map>
#include <queue>
#include <set>

#include "shapecomp/errors.hpp"

namespace shapecomp {

CompletionScore score(const Mesh& completed, const Mesh& ground_truth,
                      const std::vector<bool>& mask) {
  if (completed.vertex_count() != ground_truth.vertex_count()) {
    throw DataError("score: vertex count mismatch");
  }
  if (static_cast<int>(mask.size()) != ground_truth.vertex_count()) {
    throw DataError("score: mask length mismatch");
  }

  CompletionScore s;
  double seen_acc = 0.0, unseen_acc = 0.0, total_acc = 0.0;
  for (int v = 0; v < ground_truth.vertex_count(); ++v) {
    const double d = (completed.vertices.col(v) - ground_truth.vertices.col(v)).norm();
    total_acc += d;
    if (mask[static_cast<std::size_t>(v)]) {
      seen_acc += d;
      ++s.seen_count;
    } else {
      unseen_acc += d;
      ++s.unseen_count;
    }
  }
  s.err_total = total_acc / ground_truth.vertex_count();
  if (s.seen_count > 0) s.err_seen = seen_acc / s.seen_count;
  if (s.unseen_count > 0) s.err_unseen = unseen_acc / s.unseen_count;

  const double gt_vol = signed_volume(ground_truth);
  if (!is_watertight(ground_truth)) {
    std::cerr << "warning: score: ground truth is not watertight, volume error is nominal\n";
  }
  s.vol_err_pct = gt_vol != 0.0
                      ? std::abs(signed_volume(completed) - gt_vol) / std::abs(gt_vol) * 100.0
                      : std::numeric_limits<double>::quiet_NaN();

  const double radius = shape_radius(ground_truth);
  if (radius > 0.0) {
    s.err_total_radius_pct = s.err_total / radius * 100.0;
    if (s.err_seen) s.err_seen_radius_pct = *s.err_seen / radius * 100.0;
    if (s.err_unseen) s.err_unseen_radius_pct = *s.err_unseen / radius * 100.0;
  }
  return s;
}

NnCompletion nn_baseline(const PartialShape& partial, const std::vector<Mesh>& training_set) {
  if (training_set.empty()) throw DataError("nn_baseline: empty training set");
  if (partial.ground_truth_corr.pairs.empty()) {
    throw DataError("nn_baseline: missing ground-truth correspondence");
  }

  NnCompletion best;
  best.aligned_mean_distance = std::numeric_limits<double>::infinity();
  RigidTransform best_transform;

  const auto& pairs = partial.ground_truth_corr.pairs;
  Eigen::Matrix3Xd src(3, static_cast<Eigen::Index>(pairs.size()));
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    src.col(static_cast<Eigen::Index>(i)) = partial.points.col(pairs[i].first);
  }

  for (std::size_t shape_idx = 0; shape_idx < training_set.size(); ++shape_idx) {
    const Mesh& shape = training_set[shape_idx];
    Eigen::Matrix3Xd tgt(3, static_cast<Eigen::Index>(pairs.size()));
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      tgt.col(static_cast<Eigen::Index>(i)) = shape.vertices.col(pairs[i].second);
    }
    const RigidTransform t = solve_rigid(src, tgt);
    double acc = 0.0;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      acc += (tgt.col(static_cast<Eigen::Index>(i)) -
              t.apply(src.col(static_cast<Eigen::Index>(i)).eval()))
                 .norm();
    }
    const double mean = acc / static_cast<double>(pairs.size());
    if (mean < best.aligned_mean_distance) {
      best.aligned_mean_distance = mean;
      best.train_index = static_cast<int>(shape_idx);
      best_transform = t;
    }
  }

  // Bring the winning shape into the partial's frame.
  const Mesh& winner = training_set[static_cast<std::size_t>(best.train_index)];
  best.completed.vertices = best_transform.inverse().apply(winner.vertices);
  best.completed.faces = winner.faces;
  return best;
}

std::vector<double> geodesic_distances(const Mesh& mesh, int source) {
  const int n = mesh.vertex_count();
  if (source < 0 || source >= n) throw DataError("geodesic_distances: source out of range");

  std::vector<std::vector<std::pair<int, double>>> adj(static_cast<std::size_t>(n));
  auto add_edge = [&](int a, int b) {
    const double len = (mesh.vertices.col(a) - mesh.vertices.col(b)).norm();
    adj[static_cast<std::size_t>(a)].emplace_back(b, len);
    adj[static_cast<std::size_t>(b)].emplace_back(a, len);
  };
  std::set<std::pair<int, int>> seen;
  for (const auto& [a, b, c] : mesh.faces) {
    for (auto [u, v] : {std::pair{a, b}, std::pair{b, c}, std::pair{a, c}}) {
      if (seen.insert(std::minmax(u, v)).second) add_edge(u, v);
    }
  }

  std::vector<double> dist(static_cast<std::size_t>(n), std::numeric_limits<double>::infinity());
  dist[static_cast<std::size_t>(source)] = 0.0;
  using Entry = std::pair<double, int>;
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> queue;
  queue.emplace(0.0, source);
  while (!queue.empty()) {
    const auto [d, u] = queue.top();
    queue.pop();
    if (d > dist[static_cast<std::size_t>(u)]) continue;
    for (const auto& [v, len] : adj[static_cast<std::size_t>(u)]) {
      const double nd = d + len;
      if (nd < dist[static_cast<std::size_t>(v)]) {
        dist[static_cast<std::size_t>(v)] = nd;
        queue.emplace(nd, v);
      }
    }
  }
  return dist;
}

std::vector<double> correspondence_quality_curve(const Correspondence& corr,
                                                 const Correspondence& ground_truth,
                                                 const Mesh& mesh,
                                                 const std::vector<double>& thresholds) {
  std::map<int, int> truth;
  for (const auto& [p, r] : ground_truth.pairs) truth[p] = r;

  const double radius = shape_radius(mesh);
  if (!(radius > 0.0)) throw DataError("quality curve: degenerate shape radius");

  // One Dijkstra per distinct true vertex.
  std::map<int, std::vector<double>> dist_from_true;
  std::vector<double> errors;
  errors.reserve(corr.pairs.size());
  for (const auto& [p, r_assigned] : corr.pairs) {
    const auto it = truth.find(p);
    if (it == truth.end()) {
      throw DataError("quality curve: pair has no ground-truth counterpart");
    }
    auto [cache_it, fresh] = dist_from_true.try_emplace(it->second);
    if (fresh) cache_it->second = geodesic_distances(mesh, it->second);
    errors.push_back(cache_it->second[static_cast<std::size_t>(r_assigned)] / radius);
  }

  std::vector<double> curve;
  curve.reserve(thresholds.size());
  for (double tau : thresholds) {
    std::size_t count = 0;
    for (double e : errors) {
      if (e <= tau) ++count;
    }
    curve.push_back(errors.empty() ? 0.0
                                   : static_cast<double>(count) / static_cast<double>(errors.size()));
  }
  return curve;
}

namespace {

std::vector<double> resample(const std::vector<double>& values, std::size_t target) {
  if (values.size() == target || values.empty()) return values;
  std::vector<double> out(target);
  const double scale = static_cast<double>(values.size() - 1) / static_cast<double>(target - 1);
  for (std::size_t i = 0; i < target; ++i) {
    const double x = static_cast<double>(i) * scale;
    const std::size_t lo = static_cast<std::size_t>(std::floor(x));
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    const double frac = x - static_cast<double>(lo);
    out[i] = values[lo] * (1.0 - frac) + values[hi] * frac;
  }
  return out;
}

}  // namespace

ConvergenceReport convergence_report(const std::vector<CompletionTrace>& traces,
                                     int refinement_window) {
  if (traces.empty()) throw DataError("convergence_report: no traces");

  std::size_t grid = std::numeric_limits<std::size_t>::max();
  for (const auto& t : traces) grid = std::min(grid, t.length());
  if (grid < 1) throw DataError("convergence_report: empty trace");

  ConvergenceReport report;
  report.mean_seen.assign(grid, 0.0);
  bool have_unseen = true;
  for (const auto& t : traces) have_unseen = have_unseen && t.unseen_error.size() == t.length();
  if (have_unseen) report.mean_unseen.assign(grid, 0.0);

  int improved = 0, improvable = 0;
  for (const auto& t : traces) {
    const auto seen = resample(t.seen_error, grid);
    for (std::size_t i = 0; i < grid; ++i) report.mean_seen[i] += seen[i] / traces.size();
    if (have_unseen) {
      const auto unseen = resample(t.unseen_error, grid);
      for (std::size_t i = 0; i < grid; ++i) report.mean_unseen[i] += unseen[i] / traces.size();
      if (std::isfinite(t.unseen_error.front()) && std::isfinite(t.unseen_error.back())) {
        ++improvable;
        if (t.unseen_error.back() < t.unseen_error.front()) ++improved;
      }
    }
  }
  if (improvable > 0) {
    report.endpoint_improved_fraction = static_cast<double>(improved) / improvable;
  }

  double largest_drop = 0.0;
  for (std::size_t i = 1; i < grid; ++i) {
    const double drop = report.mean_seen[i - 1] - report.mean_seen[i];
    if (drop > largest_drop) {
      largest_drop = drop;
      report.largest_drop_iteration = static_cast<long>(i);
    }
  }

  double drop_acc = 0.0;
  int drop_count = 0;
  for (const auto& t : traces) {
    for (long refine_iter : t.refine_iterations) {
      const long lo = refine_iter - refinement_window;
      const long hi = refine_iter + refinement_window;
      if (lo < 0 || hi >= static_cast<long>(t.length())) continue;
      double before = 0.0, after = 0.0;
      for (long i = lo; i < refine_iter; ++i) before += t.seen_error[static_cast<std::size_t>(i)];
      for (long i = refine_iter + 1; i <= hi; ++i) after += t.seen_error[static_cast<std::size_t>(i)];
      drop_acc += after / refinement_window - before / refinement_window;
      ++drop_count;
    }
  }
  if (drop_count > 0) report.refinement_drop = drop_acc / drop_count;

  return report;
}

void write_score_csv(const std::string& path, const std::vector<std::string>& case_ids,
                     const std::vector<std::string>& methods,
                     const std::vector<CompletionScore>& scores,
                     const std::vector<double>& runtimes_ms) {
  if (case_ids.size() != scores.size() || methods.size() != scores.size() ||
      runtimes_ms.size() != scores.size()) {
    throw DataError("write_score_csv: column length mismatch");
  }
  std::ofstream out(path);
  if (!out) throw DataError("cannot open '" + path + "' for writing");
  out << std::setprecision(12);
  out << "case_id,method,err_seen,err_unseen,err_total,vol_err_pct,runtime_ms\n";
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const auto& s = scores[i];
    out << case_ids[i] << ',' << methods[i] << ',';
    if (s.err_seen) out << *s.err_seen;
    out << ',';
    if (s.err_unseen) out << *s.err_unseen;
    out << ',' << s.err_total << ',' << s.vol_err_pct << ',' << runtimes_ms[i] << '\n';
  }
}

}  // namespace shapecomp
