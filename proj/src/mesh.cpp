#include "shapecomp/mesh.hpp"

#include <algorithm>
#include <deque>
#include <iostream>
#include <set>
#include <string>

#include "shapecomp/errors.hpp"

namespace shapecomp {

void Mesh::validate() const {
  const int n = vertex_count();
  for (std::size_t f = 0; f < faces.size(); ++f) {
    const auto& [a, b, c] = faces[f];
    if (a < 0 || a >= n || b < 0 || b >= n || c < 0 || c >= n) {
      throw DataError("mesh: face " + std::to_string(f) + " references vertex out of range");
    }
    if (a == b || b == c || a == c) {
      throw DataError("mesh: degenerate face " + std::to_string(f));
    }
  }
  if (!vertices.allFinite()) {
    throw NumericError("mesh: non-finite vertex coordinates");
  }
}

std::size_t NeighborhoodGraph::directed_edge_count() const {
  std::size_t count = 0;
  for (const auto& list : neighbors) count += list.size();
  return count;
}

void Correspondence::validate(int partial_count, int reference_count) const {
  std::set<int> seen_partial, seen_reference;
  for (const auto& [p, r] : pairs) {
    if (p < 0 || p >= partial_count) {
      throw DataError("correspondence: partial index " + std::to_string(p) + " out of range");
    }
    if (r < 0 || r >= reference_count) {
      throw DataError("correspondence: reference index " + std::to_string(r) + " out of range");
    }
    if (!seen_partial.insert(p).second) {
      throw DataError("correspondence: duplicate partial index " + std::to_string(p));
    }
    if (!seen_reference.insert(r).second) {
      throw DataError("correspondence: duplicate reference index " + std::to_string(r));
    }
  }
  if (!weights.empty()) {
    if (weights.size() != pairs.size()) {
      throw DataError("correspondence: weight count does not match pair count");
    }
    for (double w : weights) {
      if (!(w >= 0.0 && w <= 1.0)) {
        throw DataError("correspondence: weight outside [0,1]");
      }
    }
  }
}

namespace {

std::vector<std::vector<int>> edge_adjacency(const Mesh& mesh) {
  std::vector<std::set<int>> adj(mesh.vertex_count());
  for (const auto& [a, b, c] : mesh.faces) {
    adj[a].insert(b);
    adj[a].insert(c);
    adj[b].insert(a);
    adj[b].insert(c);
    adj[c].insert(a);
    adj[c].insert(b);
  }
  std::vector<std::vector<int>> out(adj.size());
  for (std::size_t i = 0; i < adj.size(); ++i) out[i].assign(adj[i].begin(), adj[i].end());
  return out;
}

}  // namespace

NeighborhoodGraph build_neighborhoods(const Mesh& mesh, int ring, bool include_self) {
  mesh.validate();
  if (ring < 1) throw DataError("build_neighborhoods: ring must be >= 1");

  const int n = mesh.vertex_count();
  const auto one_ring = edge_adjacency(mesh);

  NeighborhoodGraph graph;
  graph.ring_order = ring;
  graph.includes_self = include_self;
  graph.neighbors.resize(n);

  int isolated = 0;
  std::vector<int> hop(n, -1);
  for (int v = 0; v < n; ++v) {
    if (one_ring[v].empty()) ++isolated;

    // BFS to `ring` hops over the edge graph.
    std::deque<int> frontier{v};
    hop[v] = 0;
    std::vector<int> touched{v};
    std::vector<int> members;
    while (!frontier.empty()) {
      const int u = frontier.front();
      frontier.pop_front();
      if (hop[u] == ring) continue;
      for (int w : one_ring[u]) {
        if (hop[w] < 0) {
          hop[w] = hop[u] + 1;
          touched.push_back(w);
          members.push_back(w);
          frontier.push_back(w);
        }
      }
    }
    for (int t : touched) hop[t] = -1;

    if (include_self) members.push_back(v);
    std::sort(members.begin(), members.end());
    graph.neighbors[v] = std::move(members);
  }

  if (isolated > 0) {
    std::cerr << "warning: neighborhood graph has " << isolated << " isolated vertices\n";
  }
  return graph;
}

std::vector<int> receptive_field(const NeighborhoodGraph& graph, int vertex, int depth) {
  const int n = graph.vertex_count();
  if (vertex < 0 || vertex >= n) throw DataError("receptive_field: vertex out of range");
  if (depth < 0) throw DataError("receptive_field: negative depth");

  std::vector<int> hop(n, -1);
  std::deque<int> frontier{vertex};
  hop[vertex] = 0;
  std::vector<int> field{vertex};
  while (!frontier.empty()) {
    const int u = frontier.front();
    frontier.pop_front();
    if (hop[u] == depth) continue;
    for (int w : graph.neighbors[u]) {
      if (hop[w] < 0) {
        hop[w] = hop[u] + 1;
        field.push_back(w);
        frontier.push_back(w);
      }
    }
  }
  std::sort(field.begin(), field.end());
  return field;
}

double shape_radius(const Mesh& mesh) {
  if (mesh.vertex_count() < 1) throw DataError("shape_radius: empty mesh");
  const Eigen::Vector3d centroid = mesh.vertices.rowwise().mean();
  return (mesh.vertices.colwise() - centroid).colwise().norm().maxCoeff();
}

double signed_volume(const Mesh& mesh) {
  double six_v = 0.0;
  for (const auto& [a, b, c] : mesh.faces) {
    six_v += mesh.vertices.col(a).dot(mesh.vertices.col(b).cross(mesh.vertices.col(c)));
  }
  return six_v / 6.0;
}

bool is_watertight(const Mesh& mesh) {
  // Count directed edges; watertight means each (a,b) is matched by exactly
  // one (b,a) and no directed edge repeats.
  std::set<std::pair<int, int>> directed;
  for (const auto& [a, b, c] : mesh.faces) {
    for (auto [u, v] : {std::pair{a, b}, std::pair{b, c}, std::pair{c, a}}) {
      if (!directed.insert({u, v}).second) return false;
    }
  }
  for (const auto& [u, v] : directed) {
    if (!directed.count({v, u})) return false;
  }
  return !mesh.faces.empty();
}

Eigen::Matrix3Xd select_vertices(const Mesh& mesh, const Correspondence& corr) {
  Eigen::Matrix3Xd out(3, corr.size());
  for (std::size_t i = 0; i < corr.pairs.size(); ++i) {
    out.col(i) = mesh.vertices.col(corr.pairs[i].second);
  }
  return out;
}

std::uint64_t topology_hash(const Mesh& mesh) {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](std::uint64_t v) {
    h ^= v;
    h *= 1099511628211ULL;
  };
  mix(static_cast<std::uint64_t>(mesh.vertex_count()));
  for (const auto& [a, b, c] : mesh.faces) {
    mix(static_cast<std::uint64_t>(a));
    mix(static_cast<std::uint64_t>(b));
    mix(static_cast<std::uint64_t>(c));
  }
  return h;
}

}  // namespace shapecomp
