#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <utility>
#include <vector>

namespace shapecomp {

// Fixed-topology triangle mesh. Vertices are stored one per column so a
// shape is its 3xN embedding; faces index into the columns.
struct Mesh {
  Eigen::Matrix3Xd vertices;
  std::vector<std::array<int, 3>> faces;

  int vertex_count() const { return static_cast<int>(vertices.cols()); }
  int face_count() const { return static_cast<int>(faces.size()); }

  // Throws DataError on out-of-range or degenerate faces, NumericError on
  // non-finite vertices.
  void validate() const;
};

// Per-vertex k-ring adjacency derived from the face edge graph. Neighbor
// lists are sorted and exclude the vertex itself unless includes_self is set
// at build time.
struct NeighborhoodGraph {
  int ring_order = 1;
  bool includes_self = false;
  std::vector<std::vector<int>> neighbors;

  int vertex_count() const { return static_cast<int>(neighbors.size()); }
  std::size_t directed_edge_count() const;
};

// Partial permutation mapping partial-shape point indices to reference
// vertices, optionally with per-pair confidence weights in [0,1].
struct Correspondence {
  std::vector<std::pair<int, int>> pairs;  // (partial_index, reference_index)
  std::vector<double> weights;             // empty means unweighted

  std::size_t size() const { return pairs.size(); }
  bool weighted() const { return !weights.empty(); }
  double weight(std::size_t i) const { return weights.empty() ? 1.0 : weights[i]; }
  void validate(int partial_count, int reference_count) const;
};

// k-fold closure of the edge adjacency (BFS hop count). Isolated vertices
// yield empty neighbor lists and a warning on stderr.
NeighborhoodGraph build_neighborhoods(const Mesh& mesh, int ring, bool include_self = false);

// Vertices reachable within `depth` hops of the graph, the vertex included.
std::vector<int> receptive_field(const NeighborhoodGraph& graph, int vertex, int depth);

// Maximum Euclidean distance from the vertex centroid to any vertex.
double shape_radius(const Mesh& mesh);

// Divergence-theorem signed volume, (1/6) sum of det[va vb vc]. Meaningful
// for closed consistently oriented meshes; check is_watertight separately.
double signed_volume(const Mesh& mesh);

// True when every undirected edge is shared by exactly two faces with
// opposite orientation.
bool is_watertight(const Mesh& mesh);

// Columns of the vertex matrix selected by the reference side of the pairs.
Eigen::Matrix3Xd select_vertices(const Mesh& mesh, const Correspondence& corr);

// FNV-1a over the face list and vertex count; identifies a topology.
std::uint64_t topology_hash(const Mesh& mesh);

}  // namespace shapecomp
