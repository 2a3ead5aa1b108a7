// Independent reference implementations used as test oracles. Everything
// here recomputes results with plain loops, sharing no code with the
// implementation paths it checks.
#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <vector>

#include "shapecomp/layers.hpp"
#include "shapecomp/mesh.hpp"
#include "shapecomp/optim.hpp"
#include "shapecomp/rng.hpp"
#include "shapecomp/tape.hpp"

namespace shapecomp::testing {

// Central finite differences against tape gradients over every entry of
// every parameter. `build` assembles the scalar loss on a fresh tape using
// t.param(...) on exactly these parameters.
struct GradCheck {
  double max_rel_err = 0.0;
  double max_abs_err = 0.0;
};

template <typename BuildLoss>
GradCheck check_gradients(const std::vector<Parameter*>& params, BuildLoss build,
                          double h = 1e-5) {
  std::vector<Tensor> analytic;
  {
    for (Parameter* p : params) p->zero_grad();
    Tape t;
    const Tape::Id loss = build(t);
    t.backward(loss);
    for (Parameter* p : params) analytic.push_back(p->grad);
  }

  auto value_at = [&]() {
    Tape t;
    return t.value(build(t)).scalar_value();
  };

  GradCheck result;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Parameter* p = params[pi];
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double keep = p->value[i];
      p->value[i] = keep + h;
      const double plus = value_at();
      p->value[i] = keep - h;
      const double minus = value_at();
      p->value[i] = keep;
      const double numeric = (plus - minus) / (2.0 * h);
      const double a = analytic[pi][i];
      const double abs_err = std::abs(a - numeric);
      const double rel = abs_err / std::max(std::abs(a) + std::abs(numeric), 1e-6);
      result.max_abs_err = std::max(result.max_abs_err, abs_err);
      result.max_rel_err = std::max(result.max_rel_err, rel);
    }
    p->zero_grad();
  }
  return result;
}

// Straight-loop evaluation of the dynamic-filter convolution, written
// directly from the formula with no shared machinery.
inline Tensor conv_reference(const Tensor& x, const NeighborhoodGraph& graph, FeastConv& layer) {
  const int n = graph.vertex_count();
  const int m_count = layer.filters;
  const int in = layer.in_dim;
  const int out = layer.out_dim;
  Tensor y(static_cast<std::size_t>(n), static_cast<std::size_t>(out));

  for (int i = 0; i < n; ++i) {
    std::vector<int> patch = graph.neighbors[static_cast<std::size_t>(i)];
    if (layer.include_self) {
      bool has_self = false;
      for (int j : patch) has_self = has_self || j == i;
      if (!has_self) patch.push_back(i);
    }
    const double inv = 1.0 / static_cast<double>(patch.size());

    std::vector<double> acc(static_cast<std::size_t>(out), 0.0);
    for (int j : patch) {
      // q_m proportional to exp(u_m . (x_i - x_j) + c_m), normalized over m.
      std::vector<double> q(static_cast<std::size_t>(m_count), 0.0);
      double z = 0.0;
      for (int m = 0; m < m_count; ++m) {
        double logit = layer.offset.value(0, static_cast<std::size_t>(m));
        for (int k = 0; k < in; ++k) {
          logit += layer.direction.value(static_cast<std::size_t>(k), static_cast<std::size_t>(m)) *
                   (x(static_cast<std::size_t>(i), static_cast<std::size_t>(k)) -
                    x(static_cast<std::size_t>(j), static_cast<std::size_t>(k)));
        }
        q[static_cast<std::size_t>(m)] = std::exp(logit);
        z += q[static_cast<std::size_t>(m)];
      }
      for (int m = 0; m < m_count; ++m) {
        const double qm = q[static_cast<std::size_t>(m)] / z;
        for (int o = 0; o < out; ++o) {
          double wx = 0.0;
          for (int k = 0; k < in; ++k) {
            wx += layer.weight[static_cast<std::size_t>(m)].value(static_cast<std::size_t>(o),
                                                                  static_cast<std::size_t>(k)) *
                  x(static_cast<std::size_t>(j), static_cast<std::size_t>(k));
          }
          acc[static_cast<std::size_t>(o)] += qm * wx * inv;
        }
      }
    }
    for (int o = 0; o < out; ++o) {
      y(static_cast<std::size_t>(i), static_cast<std::size_t>(o)) =
          acc[static_cast<std::size_t>(o)] + layer.bias.value(0, static_cast<std::size_t>(o));
    }
  }
  return y;
}

// All-pairs shortest paths over the mesh edge graph (Floyd-Warshall),
// independent of the Dijkstra implementation.
inline std::vector<std::vector<double>> all_pairs_geodesics(const Mesh& mesh) {
  const int n = mesh.vertex_count();
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<std::vector<double>> d(static_cast<std::size_t>(n),
                                     std::vector<double>(static_cast<std::size_t>(n), inf));
  for (int i = 0; i < n; ++i) d[static_cast<std::size_t>(i)][static_cast<std::size_t>(i)] = 0.0;
  for (const auto& f : mesh.faces) {
    const int idx[3] = {f[0], f[1], f[2]};
    for (int a = 0; a < 3; ++a) {
      for (int b = a + 1; b < 3; ++b) {
        const double len = (mesh.vertices.col(idx[a]) - mesh.vertices.col(idx[b])).norm();
        auto& dab = d[static_cast<std::size_t>(idx[a])][static_cast<std::size_t>(idx[b])];
        auto& dba = d[static_cast<std::size_t>(idx[b])][static_cast<std::size_t>(idx[a])];
        dab = std::min(dab, len);
        dba = std::min(dba, len);
      }
    }
  }
  for (int k = 0; k < n; ++k) {
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        const double via = d[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)] +
                           d[static_cast<std::size_t>(k)][static_cast<std::size_t>(j)];
        if (via < d[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)]) {
          d[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = via;
        }
      }
    }
  }
  return d;
}

// Rejection-sampling volume for a convex mesh (inside = behind every face
// plane), sampled over the bounding box.
inline double monte_carlo_convex_volume(const Mesh& mesh, int samples, std::uint64_t seed) {
  const Eigen::Vector3d lo = mesh.vertices.rowwise().minCoeff();
  const Eigen::Vector3d hi = mesh.vertices.rowwise().maxCoeff();
  struct Plane {
    Eigen::Vector3d normal;
    double offset;
  };
  std::vector<Plane> planes;
  planes.reserve(mesh.faces.size());
  for (const auto& [a, b, c] : mesh.faces) {
    const Eigen::Vector3d va = mesh.vertices.col(a);
    const Eigen::Vector3d n =
        (mesh.vertices.col(b) - va).cross(mesh.vertices.col(c) - va).normalized();
    planes.push_back({n, n.dot(va)});
  }
  Rng rng(seed);
  int inside = 0;
  for (int s = 0; s < samples; ++s) {
    const Eigen::Vector3d p(rng.uniform(lo.x(), hi.x()), rng.uniform(lo.y(), hi.y()),
                            rng.uniform(lo.z(), hi.z()));
    bool in = true;
    for (const auto& plane : planes) {
      if (plane.normal.dot(p) > plane.offset) {
        in = false;
        break;
      }
    }
    if (in) ++inside;
  }
  const double box = (hi - lo).prod();
  return box * static_cast<double>(inside) / static_cast<double>(samples);
}

inline Tensor random_tensor(std::size_t rows, std::size_t cols, Rng& rng, double scale = 1.0) {
  Tensor t(rows, cols);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.normal() * scale;
  return t;
}

}  // namespace shapecomp::testing
