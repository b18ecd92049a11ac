#include <gtest/gtest.h>

#include <numeric>

#include "flowreg/evaluation.hpp"
#include "flowreg/fixtures.hpp"
#include "oracles.hpp"

using namespace flowreg;

namespace {

std::vector<std::size_t> identity_map(std::size_t n) {
  std::vector<std::size_t> m(n);
  std::iota(m.begin(), m.end(), 0);
  return m;
}

std::vector<std::size_t> random_map(std::size_t n, std::size_t range, Rng& rng) {
  std::vector<std::size_t> m(n);
  for (auto& v : m) v = static_cast<std::size_t>(rng.next() % range);
  return m;
}

TriMesh scaled(TriMesh mesh, double s) {
  for (auto& p : mesh.vertices) p *= s;
  return mesh;
}

}  // namespace

TEST(Dirichlet, ConstantMapIsZero) {
  const TriMesh mesh = fixtures::icosphere(1);
  EXPECT_EQ(dirichlet_energy(mesh, mesh, std::vector<std::size_t>(mesh.vertices.size(), 3)), 0.0);
}

TEST(Dirichlet, IdentityIsMeshEnergy) {
  const TriMesh mesh = fixtures::unit_square(3);
  double expected = 0.0;
  for (const auto& [e, w] : cotangent_weights(mesh)) {
    expected += w * (mesh.vertices[e.first] - mesh.vertices[e.second]).squaredNorm();
  }
  EXPECT_DOUBLE_EQ(dirichlet_energy(mesh, mesh, identity_map(mesh.vertices.size())), expected);
  // A flat mesh mapped to itself has energy equal to its area.
  EXPECT_NEAR(expected, 1.0, 1e-12);
}

TEST(Dirichlet, QuadraticInTargetScale) {
  const TriMesh mesh = fixtures::icosphere(1);
  Rng rng(1);
  const auto map = random_map(mesh.vertices.size(), mesh.vertices.size(), rng);
  const double e1 = dirichlet_energy(mesh, mesh, map);
  EXPECT_NEAR(dirichlet_energy(mesh, scaled(mesh, 2.0), map), 4.0 * e1, 1e-12 * e1);
}

TEST(Dirichlet, MatchesOracle) {
  Rng rng(2);
  const std::vector<TriMesh> meshes = {fixtures::icosphere(2), fixtures::box_mesh(1, 0.6, 0.4, 4, 3, 2), fixtures::bar_mesh(10)};
  for (const auto& mesh : meshes) {
    const TriMesh target = fixtures::icosphere(1, 1.5);
    const auto map = random_map(mesh.vertices.size(), target.vertices.size(), rng);
    const double e = dirichlet_energy(mesh, target, map);
    EXPECT_NEAR(e, oracle::dirichlet(mesh, target.vertices, map), 1e-12 * std::max(1.0, e));
    EXPECT_GE(e, 0.0);
  }
}

TEST(Dirichlet, ObtuseWeightsClamped) {
  // One very flat triangle pair gives a negative cotangent sum on the shared edge.
  const TriMesh mesh{{{0, 0, 0}, {2, 0, 0}, {1, 0.1, 0}, {1, -0.1, 0}}, {{0, 1, 2}, {1, 0, 3}}};
  const auto w = cotangent_weights(mesh);
  EXPECT_EQ(w.at({0, 1}), 0.0);
  for (const auto& [e, v] : w) EXPECT_GE(v, 0.0);
}

TEST(Dirichlet, RejectsBadMap) {
  const TriMesh mesh = fixtures::icosphere(1);
  try {
    dirichlet_energy(mesh, mesh, std::vector<std::size_t>(mesh.vertices.size(), mesh.vertices.size()));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InvalidArgument);
  }
  EXPECT_THROW(dirichlet_energy(mesh, mesh, std::vector<std::size_t>(3, 0)), Error);
}

TEST(Coverage, Examples) {
  EXPECT_DOUBLE_EQ(coverage(identity_map(10), 10), 1.0);
  EXPECT_DOUBLE_EQ(coverage(std::vector<std::size_t>(7, 2), 10), 0.1);
  EXPECT_DOUBLE_EQ(coverage(std::vector<std::size_t>{0, 2, 4, 6, 8, 0}, 10), 0.5);
  EXPECT_THROW(coverage(identity_map(3), 0), Error);
}

TEST(Coverage, MatchesOracle) {
  Rng rng(3);
  for (int k = 0; k < 10; ++k) {
    const auto map = random_map(500, 300, rng);
    const double c = coverage(map, 300);
    EXPECT_NEAR(c, oracle::coverage(map, 300), 1e-12);
    EXPECT_GE(c, 0.0);
    EXPECT_LE(c, 1.0);
  }
}

TEST(Landmarks, ExactMapIsZero) {
  const TriMesh mesh = fixtures::icosphere(1);
  const LandmarkSet lm{{{0, 0}, {5, 5}, {11, 11}}};
  EXPECT_EQ(landmark_error(identity_map(mesh.vertices.size()), mesh, mesh, lm), 0.0);
}

TEST(Landmarks, UnitSquareHandExample) {
  const TriMesh square = fixtures::unit_square(1);
  ASSERT_NEAR(surface_area(square), 1.0, 1e-15);
  // Vertex 0 sits at the origin and vertex 1 at (1, 0): one edge apart.
  std::vector<std::size_t> map = identity_map(4);
  map[0] = 0;
  const LandmarkSet lm{{{0, 1}}};
  EXPECT_DOUBLE_EQ(landmark_error(map, square, square, lm), 1.0);
}

TEST(Landmarks, ScaleInvariant) {
  const TriMesh mesh = fixtures::icosphere(2);
  Rng rng(4);
  const auto map = random_map(mesh.vertices.size(), mesh.vertices.size(), rng);
  const LandmarkSet lm{{{0, 3}, {10, 40}, {100, 7}}};
  const double e = landmark_error(map, mesh, mesh, lm);
  EXPECT_NEAR(landmark_error(map, mesh, scaled(mesh, 4.0), lm), e, 1e-12);
}

TEST(Landmarks, MatchesFloydWarshall) {
  Rng rng(5);
  const std::vector<TriMesh> meshes = {fixtures::icosphere(2), fixtures::box_mesh(1, 0.5, 0.3, 4, 2, 2)};
  for (const auto& mesh : meshes) {
    const auto map = random_map(mesh.vertices.size(), mesh.vertices.size(), rng);
    LandmarkSet lm;
    for (int k = 0; k < 20; ++k) lm.pairs.emplace_back(rng.next() % mesh.vertices.size(), rng.next() % mesh.vertices.size());
    EXPECT_NEAR(landmark_error(map, mesh, mesh, lm), oracle::landmark_error(map, mesh, lm.pairs), 1e-12);
    EXPECT_EQ(landmark_errors(map, mesh, mesh, lm).size(), 20u);
  }
}

TEST(Landmarks, DisconnectedAndEmpty) {
  // Two separate triangles.
  const TriMesh mesh{{{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {5, 0, 0}, {6, 0, 0}, {5, 1, 0}}, {{0, 1, 2}, {3, 4, 5}}};
  try {
    landmark_error(identity_map(6), mesh, mesh, LandmarkSet{{{0, 4}}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::UnreachableLandmark);
  }
  EXPECT_THROW(landmark_error(identity_map(6), mesh, mesh, LandmarkSet{}), Error);
}

TEST(Bijectivity, HandExample) {
  const PointCloud cloud = {{0, 0, 0}, {1, 0, 0}};
  const std::vector<std::size_t> m = {0, 0};
  EXPECT_DOUBLE_EQ(bijectivity(m, m, cloud, cloud), 0.5);
}

TEST(Bijectivity, InverseMapsAreZero) {
  const PointCloud cloud = fixtures::random_cloud(20, 1);
  EXPECT_EQ(bijectivity(identity_map(20), identity_map(20), cloud, cloud), 0.0);
  std::vector<std::size_t> fwd(20), back(20);
  for (std::size_t i = 0; i < 20; ++i) {
    fwd[i] = (i + 7) % 20;
    back[fwd[i]] = i;
  }
  EXPECT_EQ(bijectivity(fwd, back, cloud, fixtures::random_cloud(20, 2)), 0.0);
}

TEST(Bijectivity, SymmetricAndMatchesOracle) {
  Rng rng(6);
  for (int k = 0; k < 10; ++k) {
    const PointCloud s = fixtures::random_cloud(200, 10 + k);
    const PointCloud t = fixtures::random_cloud(150, 20 + k);
    const auto m12 = random_map(200, 150, rng);
    const auto m21 = random_map(150, 200, rng);
    const double b = bijectivity(m12, m21, s, t);
    EXPECT_NEAR(b, oracle::bijectivity(m12, m21, s, t), 1e-12);
    EXPECT_DOUBLE_EQ(bijectivity(m21, m12, t, s), b);
    EXPECT_GE(b, 0.0);
  }
}
