#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <set>

#include "flowreg/fixtures.hpp"
#include "flowreg/geometry.hpp"
#include "flowreg/point_ops.hpp"
#include "flowreg/spatial_index.hpp"
#include "oracles.hpp"

using namespace flowreg;

namespace {

// Grid-aligned points produce many exactly tied distances.
PointCloud lattice_cloud(int n) {
  PointCloud out;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      for (int k = 0; k < n; ++k) out.emplace_back(i, j, k);
    }
  }
  return out;
}

}  // namespace

TEST(Normalize, CenteredUnitSphereIsFixedPoint) {
  PointCloud cloud = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};
  const auto [out, tf] = normalize_to_unit_sphere(cloud);
  EXPECT_DOUBLE_EQ(tf.scale, 1.0);
  EXPECT_EQ(tf.translation(), Point3::Zero());
  for (std::size_t i = 0; i < cloud.size(); ++i) EXPECT_EQ(out[i], cloud[i]);
}

TEST(Normalize, SinglePointIsDegenerate) {
  const PointCloud cloud = {{5, 5, 5}};
  try {
    normalize_to_unit_sphere(cloud);
    FAIL() << "expected DegenerateExtent";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DegenerateExtent);
  }
}

TEST(Normalize, EmptyInput) {
  try {
    normalize_to_unit_sphere(PointCloud{});
    FAIL() << "expected EmptyGeometry";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptyGeometry);
  }
}

TEST(Normalize, TwoPointsHandComputed) {
  const PointCloud cloud = {{0, 0, 0}, {0, 0, 4}};
  const auto [out, tf] = normalize_to_unit_sphere(cloud);
  EXPECT_EQ(tf.center, Point3(0, 0, 2));
  EXPECT_DOUBLE_EQ(tf.scale, 0.5);
  EXPECT_EQ(out[0], Point3(0, 0, -1));
  EXPECT_EQ(out[1], Point3(0, 0, 1));
}

TEST(Normalize, InverseRoundTripAndUnitRadius) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    PointCloud cloud = fixtures::random_cloud(200, seed, 7.0);
    for (auto& p : cloud) p += Point3(30.0, -12.0, 5.0);
    const auto [out, tf] = normalize_to_unit_sphere(cloud);
    Point3 centroid = Point3::Zero();
    double radius = 0.0;
    for (const auto& p : out) {
      centroid += p;
      radius = std::max(radius, p.norm());
    }
    EXPECT_LT((centroid / static_cast<double>(out.size())).norm(), 1e-12);
    EXPECT_NEAR(radius, 1.0, 1e-12);
    const PointCloud back = tf.invert(out);
    for (std::size_t i = 0; i < cloud.size(); ++i) EXPECT_LT((back[i] - cloud[i]).norm(), 1e-12);
  }
}

TEST(Normalize, MeshKeepsTriangles) {
  const TriMesh mesh = fixtures::icosphere(1, 3.0);
  const auto [out, tf] = normalize_to_unit_sphere(mesh);
  EXPECT_EQ(out.triangles, mesh.triangles);
  EXPECT_NEAR(tf.scale, 1.0 / 3.0, 1e-12);
}

TEST(Validation, RejectsBadTriangles) {
  TriMesh mesh{{{0, 0, 0}, {1, 0, 0}, {0, 1, 0}}, {{0, 1, 3}}};
  EXPECT_THROW(validate_mesh(mesh), Error);
  mesh.triangles = {{0, 1, 1}};
  EXPECT_THROW(validate_mesh(mesh), Error);
  mesh.triangles = {{0, 1, 2}};
  EXPECT_NO_THROW(validate_mesh(mesh));
  mesh.vertices[0].x() = std::nan("");
  EXPECT_THROW(validate_mesh(mesh), Error);
}

TEST(KdTree, MatchesBruteForceWithTies) {
  const PointCloud lattice = lattice_cloud(6);
  const KdTree lattice_index(lattice);
  Rng rng(3);
  for (int q = 0; q < 500; ++q) {
    // Half-integer queries are equidistant to several lattice points.
    const Point3 query(std::round(rng.uniform(-1, 6) * 2) / 2, std::round(rng.uniform(-1, 6) * 2) / 2,
                       std::round(rng.uniform(-1, 6) * 2) / 2);
    const auto [idx, d] = oracle::nearest(lattice, query);
    const Neighbor nb = lattice_index.nearest(query);
    EXPECT_EQ(nb.index, idx);
    EXPECT_EQ(nb.sq_dist, d);
  }
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const PointCloud cloud = fixtures::random_cloud(500, seed);
    const KdTree index(cloud);
    const PointCloud queries = fixtures::random_cloud(200, seed + 100, 1.5);
    for (const auto& query : queries) {
      const auto [idx, d] = oracle::nearest(cloud, query);
      EXPECT_EQ(index.nearest(query).index, idx);
    }
  }
}

TEST(KdTree, KnnSortedAndExact) {
  const PointCloud cloud = fixtures::random_cloud(300, 9);
  const KdTree index(cloud);
  for (std::size_t i = 0; i < 50; ++i) {
    const auto got = index.knn(cloud[i], 7, i);
    std::vector<Neighbor> all;
    for (std::size_t j = 0; j < cloud.size(); ++j) {
      if (j != i) all.push_back({j, (cloud[j] - cloud[i]).squaredNorm()});
    }
    std::sort(all.begin(), all.end());
    ASSERT_EQ(got.size(), 7u);
    for (std::size_t k = 0; k < 7; ++k) EXPECT_EQ(got[k].index, all[k].index);
  }
}

TEST(KdTree, EmptyIndexThrows) {
  const KdTree index(PointCloud{});
  EXPECT_THROW(index.nearest(Point3::Zero()), Error);
}

TEST(Chamfer, HandExamples) {
  const PointCloud a = {{0, 0, 0}};
  const PointCloud b = {{1, 0, 0}};
  EXPECT_DOUBLE_EQ(chamfer_distance(a, b), 2.0);
  const PointCloud c = {{0, 0, 0}, {2, 0, 0}};
  EXPECT_DOUBLE_EQ(chamfer_distance(c, b), 2.0);
  EXPECT_EQ(chamfer_distance(c, c), 0.0);
}

TEST(Chamfer, EmptyThrows) {
  try {
    chamfer_distance(PointCloud{}, PointCloud{{0, 0, 0}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptyGeometry);
  }
}

TEST(Chamfer, SymmetricAndMatchesOracle) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const PointCloud a = fixtures::random_cloud(100 + 40 * seed, seed);
    const PointCloud b = fixtures::random_cloud(80 + 30 * seed, seed + 50);
    const double ab = chamfer_distance(a, b);
    EXPECT_EQ(ab, chamfer_distance(b, a));
    EXPECT_NEAR(ab, oracle::chamfer(a, b), 1e-12);
  }
}

TEST(Chamfer, ZeroIffMutualSubsets) {
  const PointCloud a = {{0, 0, 0}, {1, 0, 0}};
  const PointCloud b = {{1, 0, 0}, {0, 0, 0}, {0, 0, 0}};
  EXPECT_EQ(chamfer_distance(a, b), 0.0);
  const PointCloud c = {{0, 0, 0}};
  EXPECT_GT(chamfer_distance(a, c), 0.0);
}

TEST(Fps, ExhaustionAndSeed) {
  const PointCloud cloud = fixtures::random_cloud(40, 1);
  const auto all = farthest_point_sample(cloud, cloud.size(), 0);
  EXPECT_EQ(std::set<std::size_t>(all.begin(), all.end()).size(), cloud.size());
  EXPECT_EQ(farthest_point_sample(cloud, 1, 17), std::vector<std::size_t>{17});
}

TEST(Fps, SquareCorners) {
  const PointCloud square = {{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0}};
  const auto idx = farthest_point_sample(square, 2, 0);
  EXPECT_EQ(idx, (std::vector<std::size_t>{0, 2}));
  // (1,0) and (0,1) then tie; the lower index wins.
  EXPECT_EQ(farthest_point_sample(square, 3, 0)[2], 1u);
}

TEST(Fps, MatchesGreedyOracle) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const PointCloud cloud = seed % 2 ? fixtures::random_cloud(200, seed) : lattice_cloud(5);
    const std::size_t start = seed % cloud.size();
    EXPECT_EQ(farthest_point_sample(cloud, 60, start), oracle::fps(cloud, 60, start)) << "seed " << seed;
  }
}

TEST(Fps, RangeChecks) {
  const PointCloud cloud = fixtures::random_cloud(5, 0);
  for (std::size_t k : {std::size_t{0}, std::size_t{6}}) {
    try {
      farthest_point_sample(cloud, k, 0);
      FAIL();
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::InvalidArgument);
    }
  }
  EXPECT_THROW(farthest_point_sample(cloud, 2, 5), Error);
}

TEST(Outliers, UniformGridUnchanged) {
  const PointCloud grid = lattice_cloud(4);
  EXPECT_EQ(remove_outliers(grid, 1.01), grid);
}

TEST(Outliers, FarPointRemoved) {
  PointCloud line;
  for (int i = 0; i < 10; ++i) line.emplace_back(i, 0, 0);
  line.emplace_back(109, 0, 0);
  const PointCloud kept = remove_outliers(line, 3.0);
  ASSERT_EQ(kept.size(), 10u);
  for (int i = 0; i < 10; ++i) EXPECT_EQ(kept[static_cast<std::size_t>(i)], Point3(i, 0, 0));
}

TEST(Outliers, TwoPointsAndTooFew) {
  const PointCloud two = {{0, 0, 0}, {1, 0, 0}};
  EXPECT_EQ(remove_outliers(two, 3.0), two);
  try {
    remove_outliers(PointCloud{{0, 0, 0}}, 3.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InsufficientPoints);
  }
}

TEST(Outliers, MatchesOracle) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    PointCloud cloud = fixtures::random_cloud(300, seed);
    const PointCloud far = fixtures::random_cloud(10, seed + 9, 20.0);
    cloud.insert(cloud.end(), far.begin(), far.end());
    EXPECT_EQ(remove_outliers(cloud, 2.5), oracle::remove_outliers(cloud, 2.5));
  }
}

TEST(Colorize, Endpoints) {
  const PointCloud cloud = {{0, 0, -1}, {0, 0, 1}, {0, 0, 0}};
  const auto c = colorize_by_height(cloud);
  EXPECT_EQ(c[0], (Rgb8{0, 0, 0}));
  EXPECT_EQ(c[1], (Rgb8{255, 255, 255}));
  EXPECT_EQ(c[2], (Rgb8{127, 127, 255}));
}

TEST(Colorize, MatchesIntegerFormula) {
  const PointCloud cloud = fixtures::random_cloud(500, 4);
  double lo = 1e9, hi = -1e9;
  for (const auto& p : cloud) {
    lo = std::min(lo, p.z());
    hi = std::max(hi, p.z());
  }
  const auto colors = colorize_by_height(cloud);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto d = static_cast<long>(std::floor((cloud[i].z() - lo) / (hi - lo) * 65535.0));
    EXPECT_EQ(colors[i], (Rgb8{static_cast<std::uint8_t>(d / 256), static_cast<std::uint8_t>(d / 256),
                               static_cast<std::uint8_t>(d % 256)}));
  }
}

TEST(Colorize, FlatCloudIsDegenerate) {
  const PointCloud flat = {{0, 0, 1}, {1, 0, 1}};
  try {
    colorize_by_height(flat);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DegenerateExtent);
  }
}

TEST(Colorize, InvariantUnderRotationAboutZ) {
  const PointCloud cloud = fixtures::random_cloud(200, 8);
  const Eigen::Matrix3d rz = Eigen::AngleAxisd(0.7, Point3::UnitZ()).toRotationMatrix();
  PointCloud moved;
  for (const auto& p : cloud) moved.push_back(rz * p + Point3(3, -2, 0));
  EXPECT_EQ(colorize_by_height(cloud), colorize_by_height(moved));
}

TEST(Geodesic, HandExamples) {
  const TriMesh tri{{{0, 0, 0}, {1, 0, 0}, {0.5, std::sqrt(3.0) / 2, 0}}, {{0, 1, 2}}};
  EXPECT_NEAR(geodesic_distances(tri, 0)[1], 1.0, 1e-15);
  const TriMesh square{{{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0}}, {{0, 1, 2}, {0, 2, 3}}};
  const auto d = geodesic_distances(square, 0);
  EXPECT_DOUBLE_EQ(d[0], 0.0);
  EXPECT_DOUBLE_EQ(d[2], std::sqrt(2.0));
  EXPECT_THROW(geodesic_distances(square, 4), Error);
}

TEST(Geodesic, UnreachableIsInfinite) {
  const TriMesh two{{{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {5, 0, 0}, {6, 0, 0}, {5, 1, 0}}, {{0, 1, 2}, {3, 4, 5}}};
  EXPECT_TRUE(std::isinf(geodesic_distances(two, 0)[4]));
}

TEST(Geodesic, MatchesFloydWarshallAndTriangleInequality) {
  TriMesh mesh = fixtures::icosphere(2);
  Rng rng(5);
  for (auto& v : mesh.vertices) v *= 1.0 + 0.2 * rng.uniform();
  const auto all = oracle::floyd_warshall(mesh);
  for (std::size_t s = 0; s < mesh.vertices.size(); s += 7) {
    const auto d = geodesic_distances(mesh, s);
    for (std::size_t v = 0; v < d.size(); ++v) EXPECT_NEAR(d[v], all[s][v], 1e-9);
  }
  for (int k = 0; k < 2000; ++k) {
    const auto pick = [&] { return static_cast<std::size_t>(rng.uniform() * static_cast<double>(mesh.vertices.size())); };
    const std::size_t a = pick(), b = pick(), c = pick();
    EXPECT_LE(all[a][c], all[a][b] + all[b][c] + 1e-12);
  }
}

TEST(Area, HandExamplesAndScaling) {
  const TriMesh tri{{{0, 0, 0}, {1, 0, 0}, {0, 1, 0}}, {{0, 1, 2}}};
  EXPECT_DOUBLE_EQ(surface_area(tri), 0.5);
  const TriMesh square = fixtures::unit_square(1);
  EXPECT_DOUBLE_EQ(surface_area(square), 1.0);
  TriMesh mesh = fixtures::icosphere(2);
  const double a = surface_area(mesh);
  EXPECT_NEAR(a, oracle::area(mesh), 1e-12);
  for (auto& v : mesh.vertices) v *= 3.0;
  EXPECT_NEAR(surface_area(mesh), 9.0 * a, 1e-12);
}

TEST(Edges, UniqueAndSorted) {
  const TriMesh mesh = fixtures::icosphere(1);
  const auto edges = mesh_edges(mesh);
  // Closed genus-0 triangle mesh: E = 3F/2.
  EXPECT_EQ(edges.size(), mesh.triangles.size() * 3 / 2);
  for (const auto& [i, j] : edges) EXPECT_LT(i, j);
  EXPECT_TRUE(std::is_sorted(edges.begin(), edges.end()));
}

TEST(Fixtures, BoxIsClosedAndOutward) {
  const TriMesh box = fixtures::bar_mesh(8, 2, 0.4);
  EXPECT_NO_THROW(validate_mesh(box));
  // Euler characteristic of a sphere.
  const long v = static_cast<long>(box.vertices.size());
  const long e = static_cast<long>(mesh_edges(box).size());
  const long f = static_cast<long>(box.triangles.size());
  EXPECT_EQ(v - e + f, 2);
  double volume = 0.0;
  for (const auto& t : box.triangles) volume += box.vertices[t[0]].dot(box.vertices[t[1]].cross(box.vertices[t[2]])) / 6.0;
  EXPECT_NEAR(volume, 2.0 * 0.4 * 0.4, 1e-12);
  EXPECT_NEAR(surface_area(box), 2 * (2.0 * 0.4 * 2) + 2 * 0.4 * 0.4, 1e-12);
}
