#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "shapecomp/mesh.hpp"

namespace shapecomp {

// One pose + subject sample of the synthetic deformable family.
struct PoseParams {
  double bend = 0.0;
  double twist = 0.0;
  double bulge = 0.0;
  double radius_scale = 1.0;
  double length_scale = 1.0;
};

struct ShapeFamilyConfig {
  std::string template_kind = "cylinder";  // "cylinder" | "icosphere" | "file"
  std::string template_path;
  int cylinder_segments = 12;
  int cylinder_rings = 12;
  int icosphere_level = 2;

  int sample_count = 100;
  std::uint64_t seed = 0;

  // Pose parameter ranges.
  double bend_min = -1.0, bend_max = 1.0;
  double twist_min = -0.6, twist_max = 0.6;
  double bulge_min = 0.0, bulge_max = 0.35;
  // Subject (proportion) parameter ranges.
  double radius_scale_min = 0.85, radius_scale_max = 1.15;
  double length_scale_min = 0.9, length_scale_max = 1.1;

  // Structure-level holdout: the bend range and the radius-scale range are
  // split into `bands` equal intervals and whole bands go to the test split.
  int bands = 5;
  int held_out_bend_band = 2;     // -1 disables
  int held_out_subject_band = 2;  // -1 disables

  void validate() const;
};

struct ShapeFamily {
  Mesh reference;  // undeformed template
  std::vector<Mesh> train, test;
  std::vector<PoseParams> train_params, test_params;
};

// Closed tube along z in [-1, 1] with capped ends.
Mesh make_cylinder(int segments, int rings);
// Subdivided icosahedron projected to the unit sphere.
Mesh make_icosphere(int level);

// Bend (progressive rotation about x), twist (rotation about z), bulge
// (radial bump), and global proportions, applied to the template.
Mesh deform_template(const Mesh& tmpl, const PoseParams& pose);

ShapeFamily generate_family(const ShapeFamilyConfig& config);

// Partial observation of a reference-topology shape. `corr` is what a
// completion consumes; ground_truth_corr stays pristine for scoring.
struct PartialShape {
  Eigen::Matrix3Xd points;  // 3 x P
  Correspondence corr;
  Correspondence ground_truth_corr;
  std::vector<bool> visibility_mask;  // per reference vertex
  std::string provenance;             // JSON text: generator + parameters

  int point_count() const { return static_cast<int>(points.cols()); }
};

// Vertices with an unoccluded line of sight to the viewpoint (ray-triangle
// occlusion with a 1e-6 * radius end offset). Throws DataError when the
// viewpoint lies inside the mesh.
PartialShape virtual_scan(const Mesh& mesh, const Eigen::Vector3d& viewpoint);

// Removes vertices inside `count` axis-aligned rectangles in the dominant
// bounding-box plane, each w_frac x h_frac of the plane extents. Overlap is
// allowed; removing everything is an error.
PartialShape remove_patches(const Mesh& mesh, int count, double w_frac, double h_frac,
                            std::uint64_t seed);

// Keeps the non-negative side of a uniformly random plane through the
// vertex centroid (boundary ties go to the retained side).
PartialShape hyperplane_cut(const Mesh& mesh, std::uint64_t seed);
PartialShape hyperplane_cut_with_normal(const Mesh& mesh, const Eigen::Vector3d& normal);

// Randomly permutes the reference targets of ceil(fraction * P) uniformly
// chosen pairs among themselves; ground truth is left untouched.
PartialShape corrupt_correspondence(const PartialShape& partial, double fraction,
                                    std::uint64_t seed);

// PLY point set plus a JSON sidecar (correspondences, mask, provenance).
void save_partial(const PartialShape& partial, const std::string& base_path);
PartialShape load_partial(const std::string& base_path);

}  // namespace shapecomp
