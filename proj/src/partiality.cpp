#include "shapecomp/partiality.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>

#include <json.hpp>

#include "shapecomp/errors.hpp"
#include "shapecomp/mesh_io.hpp"
#include "shapecomp/rng.hpp"

namespace shapecomp {

void ShapeFamilyConfig::validate() const {
  if (sample_count < 1) throw DataError("family config: sample_count must be >= 1");
  if (bands < 1) throw DataError("family config: bands must be >= 1");
  if (template_kind != "cylinder" && template_kind != "icosphere" && template_kind != "file") {
    throw DataError("family config: unknown template '" + template_kind + "'");
  }
  for (auto [lo, hi] : {std::pair{bend_min, bend_max}, std::pair{twist_min, twist_max},
                        std::pair{bulge_min, bulge_max},
                        std::pair{radius_scale_min, radius_scale_max},
                        std::pair{length_scale_min, length_scale_max}}) {
    if (!(lo <= hi) || !std::isfinite(lo) || !std::isfinite(hi)) {
      throw DataError("family config: malformed parameter range");
    }
  }
}

Mesh make_cylinder(int segments, int rings) {
  if (segments < 3 || rings < 2) throw DataError("make_cylinder: need >= 3 segments, >= 2 rings");
  const int n = segments * rings + 2;
  Mesh mesh;
  mesh.vertices.resize(3, n);
  auto idx = [segments](int r, int k) { return r * segments + (k % segments); };
  for (int r = 0; r < rings; ++r) {
    const double z = -1.0 + 2.0 * r / (rings - 1);
    for (int k = 0; k < segments; ++k) {
      const double a = 2.0 * M_PI * k / segments;
      mesh.vertices.col(idx(r, k)) = Eigen::Vector3d(std::cos(a), std::sin(a), z);
    }
  }
  const int bottom = segments * rings;
  const int top = bottom + 1;
  mesh.vertices.col(bottom) = Eigen::Vector3d(0, 0, -1);
  mesh.vertices.col(top) = Eigen::Vector3d(0, 0, 1);

  for (int r = 0; r + 1 < rings; ++r) {
    for (int k = 0; k < segments; ++k) {
      const int a = idx(r, k), b = idx(r, k + 1), c = idx(r + 1, k + 1), d = idx(r + 1, k);
      mesh.faces.push_back({a, b, c});
      mesh.faces.push_back({a, c, d});
    }
  }
  for (int k = 0; k < segments; ++k) {
    mesh.faces.push_back({bottom, idx(0, k + 1), idx(0, k)});
    mesh.faces.push_back({top, idx(rings - 1, k), idx(rings - 1, k + 1)});
  }
  return mesh;
}

Mesh make_icosphere(int level) {
  if (level < 0) throw DataError("make_icosphere: negative level");
  const double phi = (1.0 + std::sqrt(5.0)) / 2.0;
  std::vector<Eigen::Vector3d> verts = {
      {-1, phi, 0}, {1, phi, 0},  {-1, -phi, 0}, {1, -phi, 0}, {0, -1, phi},  {0, 1, phi},
      {0, -1, -phi}, {0, 1, -phi}, {phi, 0, -1},  {phi, 0, 1},  {-phi, 0, -1}, {-phi, 0, 1}};
  for (auto& v : verts) v.normalize();
  std::vector<std::array<int, 3>> faces = {
      {0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11}, {1, 5, 9},  {5, 11, 4},
      {11, 10, 2}, {10, 7, 6}, {7, 1, 8},   {3, 9, 4},  {3, 4, 2},   {3, 2, 6},  {3, 6, 8},
      {3, 8, 9},  {4, 9, 5},  {2, 4, 11},  {6, 2, 10}, {8, 6, 7},   {9, 8, 1}};

  for (int pass = 0; pass < level; ++pass) {
    std::map<std::pair<int, int>, int> midpoint;
    auto mid = [&](int a, int b) {
      const auto key = std::minmax(a, b);
      if (auto it = midpoint.find(key); it != midpoint.end()) return it->second;
      const int id = static_cast<int>(verts.size());
      verts.push_back((verts[static_cast<std::size_t>(a)] + verts[static_cast<std::size_t>(b)]).normalized());
      midpoint.emplace(key, id);
      return id;
    };
    std::vector<std::array<int, 3>> next;
    next.reserve(faces.size() * 4);
    for (const auto& [a, b, c] : faces) {
      const int ab = mid(a, b), bc = mid(b, c), ca = mid(c, a);
      next.push_back({a, ab, ca});
      next.push_back({b, bc, ab});
      next.push_back({c, ca, bc});
      next.push_back({ab, bc, ca});
    }
    faces = std::move(next);
  }

  Mesh mesh;
  mesh.vertices.resize(3, static_cast<Eigen::Index>(verts.size()));
  for (std::size_t i = 0; i < verts.size(); ++i) mesh.vertices.col(static_cast<Eigen::Index>(i)) = verts[i];
  mesh.faces = std::move(faces);
  return mesh;
}

Mesh deform_template(const Mesh& tmpl, const PoseParams& pose) {
  Mesh out = tmpl;
  const double len = pose.length_scale;
  for (Eigen::Index i = 0; i < out.vertices.cols(); ++i) {
    Eigen::Vector3d v = out.vertices.col(i);

    // Subject proportions.
    v.x() *= pose.radius_scale;
    v.y() *= pose.radius_scale;
    v.z() *= len;

    const double t = len > 0.0 ? std::clamp(v.z() / len, -1.0, 1.0) : 0.0;

    // Radial bump around the waist.
    const double bump = 1.0 + pose.bulge * std::exp(-(t * t) / 0.2);
    v.x() *= bump;
    v.y() *= bump;

    // Twist about the axis.
    const double tw = pose.twist * t;
    const double x = v.x() * std::cos(tw) - v.y() * std::sin(tw);
    const double y = v.x() * std::sin(tw) + v.y() * std::cos(tw);
    v.x() = x;
    v.y() = y;

    // Progressive bend about x through the base; the quadratic ramp keeps
    // the lower half close to rigid.
    const double ramp = (t + 1.0) / 2.0;
    const double angle = pose.bend * ramp * ramp;
    const Eigen::Vector3d pivot(0.0, 0.0, -len);
    const Eigen::AngleAxisd rot(angle, Eigen::Vector3d::UnitX());
    v = pivot + rot * (v - pivot);

    out.vertices.col(i) = v;
  }
  return out;
}

ShapeFamily generate_family(const ShapeFamilyConfig& config) {
  config.validate();

  ShapeFamily family;
  if (config.template_kind == "cylinder") {
    family.reference = make_cylinder(config.cylinder_segments, config.cylinder_rings);
  } else if (config.template_kind == "icosphere") {
    family.reference = make_icosphere(config.icosphere_level);
  } else {
    family.reference = load_mesh(config.template_path);
  }

  auto band_of = [](double x, double lo, double hi, int bands) {
    if (hi <= lo) return 0;
    const int b = static_cast<int>(std::floor((x - lo) / (hi - lo) * bands));
    return std::clamp(b, 0, bands - 1);
  };

  Rng rng(config.seed);
  for (int i = 0; i < config.sample_count; ++i) {
    PoseParams pose;
    pose.bend = rng.uniform(config.bend_min, config.bend_max);
    pose.twist = rng.uniform(config.twist_min, config.twist_max);
    pose.bulge = rng.uniform(config.bulge_min, config.bulge_max);
    pose.radius_scale = rng.uniform(config.radius_scale_min, config.radius_scale_max);
    pose.length_scale = rng.uniform(config.length_scale_min, config.length_scale_max);

    const bool held_out =
        (config.held_out_bend_band >= 0 &&
         band_of(pose.bend, config.bend_min, config.bend_max, config.bands) ==
             config.held_out_bend_band) ||
        (config.held_out_subject_band >= 0 &&
         band_of(pose.radius_scale, config.radius_scale_min, config.radius_scale_max,
                 config.bands) == config.held_out_subject_band);

    Mesh shape = deform_template(family.reference, pose);
    if (held_out) {
      family.test.push_back(std::move(shape));
      family.test_params.push_back(pose);
    } else {
      family.train.push_back(std::move(shape));
      family.train_params.push_back(pose);
    }
  }
  return family;
}

namespace {

// Moller-Trumbore; returns the ray parameter for origin + t * dir, or a
// negative value on a miss.
double ray_triangle(const Eigen::Vector3d& origin, const Eigen::Vector3d& dir,
                    const Eigen::Vector3d& a, const Eigen::Vector3d& b, const Eigen::Vector3d& c) {
  constexpr double kTiny = 1e-14;
  const Eigen::Vector3d e1 = b - a;
  const Eigen::Vector3d e2 = c - a;
  const Eigen::Vector3d pvec = dir.cross(e2);
  const double det = e1.dot(pvec);
  if (std::abs(det) < kTiny) return -1.0;
  const double inv_det = 1.0 / det;
  const Eigen::Vector3d tvec = origin - a;
  const double u = tvec.dot(pvec) * inv_det;
  if (u < 0.0 || u > 1.0) return -1.0;
  const Eigen::Vector3d qvec = tvec.cross(e1);
  const double v = dir.dot(qvec) * inv_det;
  if (v < 0.0 || u + v > 1.0) return -1.0;
  return e2.dot(qvec) * inv_det;
}

bool point_inside_mesh(const Mesh& mesh, const Eigen::Vector3d& point) {
  // Parity test along an arbitrary direction unlikely to graze edges.
  const Eigen::Vector3d dir = Eigen::Vector3d(0.577215664, 0.301029995, 0.693147180).normalized();
  int hits = 0;
  for (const auto& [a, b, c] : mesh.faces) {
    const double t = ray_triangle(point, dir, mesh.vertices.col(a), mesh.vertices.col(b),
                                  mesh.vertices.col(c));
    if (t > 1e-12) ++hits;
  }
  return hits % 2 == 1;
}

PartialShape from_mask(const Mesh& mesh, const std::vector<bool>& mask, std::string provenance) {
  PartialShape out;
  out.visibility_mask = mask;
  const int kept = static_cast<int>(std::count(mask.begin(), mask.end(), true));
  out.points.resize(3, kept);
  int cursor = 0;
  for (int v = 0; v < mesh.vertex_count(); ++v) {
    if (!mask[static_cast<std::size_t>(v)]) continue;
    out.points.col(cursor) = mesh.vertices.col(v);
    out.ground_truth_corr.pairs.emplace_back(cursor, v);
    ++cursor;
  }
  out.corr = out.ground_truth_corr;
  out.provenance = std::move(provenance);
  return out;
}

}  // namespace

PartialShape virtual_scan(const Mesh& mesh, const Eigen::Vector3d& viewpoint) {
  mesh.validate();
  if (mesh.faces.empty()) throw DataError("virtual_scan: mesh has no faces");
  if (point_inside_mesh(mesh, viewpoint)) {
    throw DataError("virtual_scan: viewpoint inside mesh");
  }
  const double eps = 1e-6 * shape_radius(mesh);

  std::vector<bool> mask(static_cast<std::size_t>(mesh.vertex_count()), false);
  for (int v = 0; v < mesh.vertex_count(); ++v) {
    const Eigen::Vector3d target = mesh.vertices.col(v);
    const Eigen::Vector3d dir = target - viewpoint;
    const double dist = dir.norm();
    const double t_limit = 1.0 - (dist > 0.0 ? eps / dist : 0.0);
    bool occluded = false;
    for (const auto& [a, b, c] : mesh.faces) {
      const double t = ray_triangle(viewpoint, dir, mesh.vertices.col(a), mesh.vertices.col(b),
                                    mesh.vertices.col(c));
      if (t > 1e-9 && t < t_limit) {
        occluded = true;
        break;
      }
    }
    mask[static_cast<std::size_t>(v)] = !occluded;
  }

  nlohmann::json prov{{"generator", "virtual_scan"},
                      {"viewpoint", {viewpoint.x(), viewpoint.y(), viewpoint.z()}}};
  return from_mask(mesh, mask, prov.dump());
}

PartialShape remove_patches(const Mesh& mesh, int count, double w_frac, double h_frac,
                            std::uint64_t seed) {
  mesh.validate();
  if (count < 0) throw DataError("remove_patches: negative count");
  const Eigen::Vector3d lo = mesh.vertices.rowwise().minCoeff();
  const Eigen::Vector3d hi = mesh.vertices.rowwise().maxCoeff();
  const Eigen::Vector3d extent = hi - lo;
  if (extent.maxCoeff() <= 0.0) throw DataError("remove_patches: degenerate bounding box");

  // Dominant plane: the two axes with the largest extents.
  std::array<int, 3> order{0, 1, 2};
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    return extent[a] != extent[b] ? extent[a] > extent[b] : a < b;
  });
  const int ax0 = order[0], ax1 = order[1];
  const double w = w_frac * extent[ax0];
  const double h = h_frac * extent[ax1];

  Rng rng(seed);
  std::vector<bool> mask(static_cast<std::size_t>(mesh.vertex_count()), true);
  for (int patch = 0; patch < count; ++patch) {
    const double cx = rng.uniform(lo[ax0], hi[ax0]);
    const double cy = rng.uniform(lo[ax1], hi[ax1]);
    for (int v = 0; v < mesh.vertex_count(); ++v) {
      if (std::abs(mesh.vertices(ax0, v) - cx) <= w / 2 &&
          std::abs(mesh.vertices(ax1, v) - cy) <= h / 2) {
        mask[static_cast<std::size_t>(v)] = false;
      }
    }
  }

  const auto kept = std::count(mask.begin(), mask.end(), true);
  if (kept == 0) throw DataError("remove_patches: empty partial shape");
  if (kept < mesh.vertex_count() / 20) {
    std::cerr << "warning: remove_patches kept only " << kept << " of " << mesh.vertex_count()
              << " vertices\n";
  }

  nlohmann::json prov{{"generator", "remove_patches"},
                      {"count", count},
                      {"w_frac", w_frac},
                      {"h_frac", h_frac},
                      {"seed", seed}};
  return from_mask(mesh, mask, prov.dump());
}

PartialShape hyperplane_cut_with_normal(const Mesh& mesh, const Eigen::Vector3d& normal) {
  mesh.validate();
  if (mesh.vertex_count() < 2) throw DataError("hyperplane_cut: need at least 2 vertices");
  const Eigen::Vector3d n = normal.normalized();
  const Eigen::Vector3d centroid = mesh.vertices.rowwise().mean();
  std::vector<bool> mask(static_cast<std::size_t>(mesh.vertex_count()), false);
  for (int v = 0; v < mesh.vertex_count(); ++v) {
    mask[static_cast<std::size_t>(v)] = (mesh.vertices.col(v) - centroid).dot(n) >= 0.0;
  }
  nlohmann::json prov{{"generator", "hyperplane_cut"}, {"normal", {n.x(), n.y(), n.z()}}};
  return from_mask(mesh, mask, prov.dump());
}

PartialShape hyperplane_cut(const Mesh& mesh, std::uint64_t seed) {
  Rng rng(seed);
  Eigen::Vector3d n;
  do {
    n = Eigen::Vector3d(rng.normal(), rng.normal(), rng.normal());
  } while (n.norm() < 1e-12);
  return hyperplane_cut_with_normal(mesh, n);
}

PartialShape corrupt_correspondence(const PartialShape& partial, double fraction,
                                    std::uint64_t seed) {
  if (!(fraction >= 0.0 && fraction <= 1.0)) {
    throw DataError("corrupt_correspondence: fraction outside [0,1]");
  }
  PartialShape out = partial;
  const std::size_t p = out.corr.pairs.size();
  const std::size_t k = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(p)));
  if (k == 0) return out;

  Rng rng(seed);
  std::vector<std::size_t> slots(p);
  std::iota(slots.begin(), slots.end(), 0);
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j =
        static_cast<std::size_t>(rng.uniform_int(static_cast<int>(i), static_cast<int>(p) - 1));
    std::swap(slots[i], slots[j]);
  }
  slots.resize(k);

  std::vector<int> targets;
  targets.reserve(k);
  for (std::size_t s : slots) targets.push_back(out.corr.pairs[s].second);
  for (std::size_t i = k; i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(i) - 1));
    std::swap(targets[i - 1], targets[j]);
  }
  for (std::size_t i = 0; i < k; ++i) out.corr.pairs[slots[i]].second = targets[i];

  nlohmann::json prov{{"generator", "corrupt_correspondence"},
                      {"fraction", fraction},
                      {"seed", seed}};
  try {
    prov["base"] = nlohmann::json::parse(partial.provenance);
  } catch (const nlohmann::json::exception&) {
    prov["base"] = partial.provenance;
  }
  out.provenance = prov.dump();
  return out;
}

namespace {

nlohmann::json corr_to_json(const Correspondence& corr) {
  nlohmann::json j;
  nlohmann::json pairs = nlohmann::json::array();
  for (const auto& [p, r] : corr.pairs) pairs.push_back({p, r});
  j["pairs"] = std::move(pairs);
  j["weights"] = corr.weights;
  return j;
}

Correspondence corr_from_json(const nlohmann::json& j) {
  Correspondence corr;
  for (const auto& pair : j.at("pairs")) {
    corr.pairs.emplace_back(pair.at(0).get<int>(), pair.at(1).get<int>());
  }
  corr.weights = j.value("weights", std::vector<double>{});
  return corr;
}

}  // namespace

void save_partial(const PartialShape& partial, const std::string& base_path) {
  save_ply_points(partial.points, base_path + ".ply");
  nlohmann::json j;
  j["corr"] = corr_to_json(partial.corr);
  j["ground_truth_corr"] = corr_to_json(partial.ground_truth_corr);
  std::vector<int> mask;
  mask.reserve(partial.visibility_mask.size());
  for (bool b : partial.visibility_mask) mask.push_back(b ? 1 : 0);
  j["visibility_mask"] = std::move(mask);
  try {
    j["provenance"] = nlohmann::json::parse(partial.provenance);
  } catch (const nlohmann::json::exception&) {
    j["provenance"] = partial.provenance;
  }
  std::ofstream out(base_path + ".json");
  if (!out) throw DataError("cannot open '" + base_path + ".json' for writing");
  out << j << '\n';
}

PartialShape load_partial(const std::string& base_path) {
  PartialShape partial;
  partial.points = load_ply_points(base_path + ".ply");
  std::ifstream in(base_path + ".json");
  if (!in) throw DataError("cannot open '" + base_path + ".json' for reading");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("partial sidecar parse error: " + std::string(e.what()));
  }
  partial.corr = corr_from_json(j.at("corr"));
  partial.ground_truth_corr = corr_from_json(j.at("ground_truth_corr"));
  for (int b : j.at("visibility_mask").get<std::vector<int>>()) {
    partial.visibility_mask.push_back(b != 0);
  }
  partial.provenance = j.at("provenance").dump();
  return partial;
}

}  // namespace shapecomp
