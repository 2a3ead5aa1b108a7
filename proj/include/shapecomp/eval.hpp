#pragma once

#include <optional>
#include <string>
#include <vector>

#include "shapecomp/completion.hpp"
#include "shapecomp/mesh.hpp"
#include "shapecomp/partiality.hpp"

namespace shapecomp {

// Per-vertex Euclidean errors aggregated over the seen/unseen partition,
// plus whole-shape relative volume error and radius-normalized variants.
struct CompletionScore {
  std::optional<double> err_seen;
  std::optional<double> err_unseen;
  double err_total = 0.0;
  double vol_err_pct = 0.0;
  std::optional<double> err_seen_radius_pct;
  std::optional<double> err_unseen_radius_pct;
  double err_total_radius_pct = 0.0;
  int seen_count = 0;
  int unseen_count = 0;
};

// Both meshes share the reference topology and frame; mask marks the seen
// vertices. Volume error is normalized by the ground-truth volume and
// computed on the whole shape.
CompletionScore score(const Mesh& completed, const Mesh& ground_truth,
                      const std::vector<bool>& mask);

struct NnCompletion {
  Mesh completed;  // best training shape mapped into the partial's frame
  int train_index = -1;
  double aligned_mean_distance = 0.0;
};

// Nearest-neighbor completion: rigidly aligns the partial scan to the
// corresponding region of every training shape (ground-truth pairs) and
// returns the shape with the lowest mean Euclidean distance.
NnCompletion nn_baseline(const PartialShape& partial, const std::vector<Mesh>& training_set);

// Dijkstra over the edge graph with Euclidean edge lengths.
std::vector<double> geodesic_distances(const Mesh& mesh, int source);

// Fraction of pairs whose geodesic distance between assigned and true
// reference vertex, normalized by shape radius, is <= tau; one value per
// threshold, non-decreasing.
std::vector<double> correspondence_quality_curve(const Correspondence& corr,
                                                 const Correspondence& ground_truth,
                                                 const Mesh& mesh,
                                                 const std::vector<double>& thresholds);

struct ConvergenceReport {
  std::vector<double> mean_seen;
  std::vector<double> mean_unseen;
  double endpoint_improved_fraction = 0.0;  // unseen end < unseen start
  long largest_drop_iteration = -1;         // steepest single-step drop of mean seen error
  // Mean seen error over the window after refinement minus before; present
  // when any trace recorded a refinement.
  std::optional<double> refinement_drop;
};

// Traces of different lengths are linearly resampled to the shortest grid.
ConvergenceReport convergence_report(const std::vector<CompletionTrace>& traces,
                                     int refinement_window = 20);

void write_score_csv(const std::string& path, const std::vector<std::string>& case_ids,
                     const std::vector<std::string>& methods,
                     const std::vector<CompletionScore>& scores,
                     const std::vector<double>& runtimes_ms);

}  // namespace shapecomp
