#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Geometry>
#include <algorithm>
#include <set>

#include "shapecomp/errors.hpp"
#include "shapecomp/mesh.hpp"
#include "shapecomp/partiality.hpp"
#include "support/oracles.hpp"

using namespace shapecomp;

namespace {

Mesh single_triangle() {
  Mesh m;
  m.vertices.resize(3, 3);
  m.vertices << 0, 1, 0, 0, 0, 1, 0, 0, 0;
  m.faces = {{0, 1, 2}};
  return m;
}

// Two triangles sharing an edge: a 4-vertex strip of diameter 2.
Mesh triangle_strip() {
  Mesh m;
  m.vertices.resize(3, 4);
  m.vertices << 0, 1, 1, 2, 0, 0, 1, 1, 0, 0, 0, 0;
  m.faces = {{0, 1, 2}, {1, 3, 2}};
  return m;
}

Mesh unit_cube() {
  Mesh m;
  m.vertices.resize(3, 8);
  int c = 0;
  for (int x = 0; x <= 1; ++x) {
    for (int y = 0; y <= 1; ++y) {
      for (int z = 0; z <= 1; ++z) {
        m.vertices.col(c++) = Eigen::Vector3d(x - 0.5, y - 0.5, z - 0.5);
      }
    }
  }
  // Columns are ordered (x,y,z) binary: 000,001,010,011,100,101,110,111.
  // Outward-oriented triangulation of the six sides.
  m.faces = {{0, 1, 3}, {0, 3, 2},  // x = -0.5, normal -x
             {4, 6, 7}, {4, 7, 5},  // x = +0.5
             {0, 4, 5}, {0, 5, 1},  // y = -0.5
             {2, 3, 7}, {2, 7, 6},  // y = +0.5
             {0, 2, 6}, {0, 6, 4},  // z = -0.5
             {1, 5, 7}, {1, 7, 3}}; // z = +0.5
  return m;
}

}  // namespace

TEST_CASE("triangle 1-ring is the complete graph") {
  const auto g = build_neighborhoods(single_triangle(), 1);
  CHECK(g.neighbors[0] == std::vector<int>{1, 2});
  CHECK(g.neighbors[1] == std::vector<int>{0, 2});
  CHECK(g.neighbors[2] == std::vector<int>{0, 1});
}

TEST_CASE("strip 2-ring closes the 4-vertex strip") {
  const auto g = build_neighborhoods(triangle_strip(), 2);
  for (int v = 0; v < 4; ++v) {
    CHECK(g.neighbors[v].size() == 3);  // everyone else
    for (int u = 0; u < 4; ++u) {
      if (u == v) continue;
      CHECK(std::count(g.neighbors[v].begin(), g.neighbors[v].end(), u) == 1);
    }
  }
}

TEST_CASE("icosphere level 1 degrees match brute-force edge enumeration") {
  const Mesh m = make_icosphere(1);
  REQUIRE(m.vertex_count() == 42);
  const auto g = build_neighborhoods(m, 1);

  // Oracle: enumerate undirected edges straight from the face list.
  std::set<std::pair<int, int>> edges;
  for (const auto& [a, b, c] : m.faces) {
    edges.insert(std::minmax(a, b));
    edges.insert(std::minmax(b, c));
    edges.insert(std::minmax(a, c));
  }
  std::vector<int> degree(42, 0);
  for (const auto& [a, b] : edges) {
    ++degree[a];
    ++degree[b];
  }
  for (int v = 0; v < 42; ++v) {
    CHECK(g.neighbors[v].size() == static_cast<std::size_t>(degree[v]));
    CHECK((degree[v] == 5 || degree[v] == 6));
  }
}

TEST_CASE("neighborhood symmetry holds for every graph") {
  for (const Mesh& m : {make_icosphere(1), make_cylinder(8, 6), triangle_strip()}) {
    for (int ring : {1, 2, 3}) {
      const auto g = build_neighborhoods(m, ring);
      for (int i = 0; i < g.vertex_count(); ++i) {
        for (int j : g.neighbors[i]) {
          const auto& back = g.neighbors[j];
          CHECK(std::count(back.begin(), back.end(), i) == 1);
        }
      }
    }
  }
}

TEST_CASE("receptive field basics and BFS oracle") {
  const auto tri = build_neighborhoods(single_triangle(), 1);
  CHECK(receptive_field(tri, 1, 0) == std::vector<int>{1});
  CHECK(receptive_field(tri, 0, 1) == std::vector<int>{0, 1, 2});

  const Mesh ico = make_icosphere(1);
  const auto g = build_neighborhoods(ico, 1);
  Rng rng(7);
  for (int trial = 0; trial < 5; ++trial) {
    const int v = rng.uniform_int(0, ico.vertex_count() - 1);
    // Independent BFS to depth 2.
    std::set<int> expect{v};
    for (int j : g.neighbors[v]) expect.insert(j);
    for (int j : g.neighbors[v]) {
      for (int k : g.neighbors[j]) expect.insert(k);
    }
    const auto field = receptive_field(g, v, 2);
    CHECK(field == std::vector<int>(expect.begin(), expect.end()));
  }
}

TEST_CASE("receptive field grows monotonically with depth") {
  const Mesh ico = make_icosphere(1);
  const auto g = build_neighborhoods(ico, 1);
  for (int v = 0; v < ico.vertex_count(); v += 5) {
    for (int d = 0; d < 4; ++d) {
      const auto small = receptive_field(g, v, d);
      const auto big = receptive_field(g, v, d + 1);
      CHECK(std::includes(big.begin(), big.end(), small.begin(), small.end()));
    }
  }
}

TEST_CASE("shape radius on known shapes") {
  CHECK(shape_radius(unit_cube()) == doctest::Approx(std::sqrt(3.0) / 2.0 * 1.0).epsilon(1e-12));

  Mesh point;
  point.vertices.resize(3, 1);
  point.vertices.col(0) = Eigen::Vector3d(4, 5, 6);
  CHECK(shape_radius(point) == 0.0);
}

TEST_CASE("shape radius matches brute-force scan on a random cloud") {
  Rng rng(11);
  Mesh m;
  m.vertices.resize(3, 100);
  for (int i = 0; i < 100; ++i) {
    m.vertices.col(i) = Eigen::Vector3d(rng.normal(), rng.normal(), rng.normal());
  }
  Eigen::Vector3d centroid = Eigen::Vector3d::Zero();
  for (int i = 0; i < 100; ++i) centroid += m.vertices.col(i);
  centroid /= 100.0;
  double best = 0.0;
  for (int i = 0; i < 100; ++i) best = std::max(best, (m.vertices.col(i) - centroid).norm());
  CHECK(shape_radius(m) == doctest::Approx(best).epsilon(1e-15));
}

TEST_CASE("shape radius is rigid-invariant") {
  const Mesh m = make_icosphere(1);
  const double r0 = shape_radius(m);
  Mesh moved = m;
  const Eigen::Matrix3d rot =
      Eigen::AngleAxisd(0.83, Eigen::Vector3d(1, 2, -1).normalized()).toRotationMatrix();
  moved.vertices = (rot * m.vertices).colwise() + Eigen::Vector3d(3, -1, 2);
  CHECK(std::abs(shape_radius(moved) - r0) < 1e-9);
}

TEST_CASE("signed volume of the unit cube and its mirror") {
  const Mesh cube = unit_cube();
  CHECK(signed_volume(cube) == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(is_watertight(cube));

  Mesh mirrored = cube;
  for (auto& f : mirrored.faces) std::swap(f[1], f[2]);
  CHECK(signed_volume(mirrored) == doctest::Approx(-1.0).epsilon(1e-9));
}

TEST_CASE("signed volume matches Monte-Carlo inside test on icosphere") {
  const Mesh ico = make_icosphere(2);
  const double mc = testing::monte_carlo_convex_volume(ico, 1000000, 99);
  const double v = signed_volume(ico);
  CHECK(std::abs(v - mc) / mc < 0.01);
}

TEST_CASE("signed volume transforms correctly") {
  const Mesh ico = make_icosphere(1);
  const double v0 = signed_volume(ico);

  Mesh moved = ico;
  const Eigen::Matrix3d rot =
      Eigen::AngleAxisd(1.2, Eigen::Vector3d(0, 1, 1).normalized()).toRotationMatrix();
  moved.vertices = (rot * ico.vertices).colwise() + Eigen::Vector3d(-2, 0.5, 7);
  CHECK(signed_volume(moved) == doctest::Approx(v0).epsilon(1e-9));

  Mesh scaled = ico;
  scaled.vertices = 1.7 * ico.vertices;
  CHECK(signed_volume(scaled) == doctest::Approx(v0 * 1.7 * 1.7 * 1.7).epsilon(1e-9));
}

TEST_CASE("watertightness detects open meshes") {
  Mesh open_mesh = make_icosphere(1);
  open_mesh.faces.pop_back();
  CHECK_FALSE(is_watertight(open_mesh));
  CHECK_FALSE(is_watertight(single_triangle()));
}

TEST_CASE("mesh validation rejects bad faces") {
  Mesh bad = single_triangle();
  bad.faces.push_back({0, 1, 5});
  CHECK_THROWS_AS(bad.validate(), DataError);

  Mesh degenerate = single_triangle();
  degenerate.faces.push_back({1, 1, 2});
  CHECK_THROWS_AS(degenerate.validate(), DataError);
}

TEST_CASE("correspondence invariants") {
  Correspondence corr;
  corr.pairs = {{0, 3}, {1, 4}, {2, 5}};
  corr.validate(3, 6);

  Correspondence dup_ref = corr;
  dup_ref.pairs.push_back({3, 3});
  CHECK_THROWS_AS(dup_ref.validate(4, 6), DataError);

  Correspondence dup_partial = corr;
  dup_partial.pairs.push_back({0, 1});
  CHECK_THROWS_AS(dup_partial.validate(3, 6), DataError);

  Correspondence weighted = corr;
  weighted.weights = {0.5, 1.0, 0.25};
  weighted.validate(3, 6);
  weighted.weights[1] = 1.5;
  CHECK_THROWS_AS(weighted.validate(3, 6), DataError);
}
