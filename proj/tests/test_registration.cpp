#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "flowreg/fixtures.hpp"
#include "flowreg/registration.hpp"
#include "flowreg/synthetic.hpp"
#include "oracles.hpp"

using namespace flowreg;

namespace {

RegistrationConfig small_config(int iterations = 200) {
  RegistrationConfig c;
  c.iterations = iterations;
  c.mlp_hidden = {16, 16};
  c.ode_steps = 8;
  c.learning_rate = 1e-2;
  c.guidance_stride = 1;
  return c;
}

double normalized_chamfer(const RegistrationResult& r, const TriMesh& target) {
  return chamfer_distance(r.normalization.apply(r.registered.vertices), r.normalization.apply(target.vertices));
}

}  // namespace

TEST(Guidance, StrideSelection) {
  EXPECT_EQ(select_guidance_frames(10, 2), (std::vector<std::size_t>{2, 4, 6, 8}));
  EXPECT_EQ(select_guidance_frames(4, 1), (std::vector<std::size_t>{1, 2, 3, 4}));
  EXPECT_EQ(select_guidance_frames(4, 2), (std::vector<std::size_t>{2}));
  EXPECT_TRUE(select_guidance_frames(0, 2).empty());
  EXPECT_THROW(select_guidance_frames(3, 0), Error);
}

TEST(Guidance, EmptyListMeansDirectFlow) {
  const auto g = preprocess_guidance({}, 100, RegistrationConfig{});
  EXPECT_TRUE(g.empty());
}

TEST(Guidance, CleanFramesKeepTheirPoints) {
  const TriMesh sphere = fixtures::icosphere(2);
  RegistrationConfig c;
  c.guidance_stride = 1;
  const auto g = preprocess_guidance({sphere.vertices, sphere.vertices}, sphere.vertices.size(), c);
  ASSERT_EQ(g.size(), 2u);
  auto expected = sphere.vertices;
  const auto lex = [](const Point3& a, const Point3& b) {
    return std::lexicographical_compare(a.data(), a.data() + 3, b.data(), b.data() + 3);
  };
  std::sort(expected.begin(), expected.end(), lex);
  for (auto frame : g.frames) {
    std::sort(frame.begin(), frame.end(), lex);
    EXPECT_EQ(frame, expected);
  }
  EXPECT_DOUBLE_EQ(g.times[0], 0.5 - 0.5 / 3.0);
  EXPECT_DOUBLE_EQ(g.times[1], 0.5 - 1.0 / 3.0);
}

TEST(Guidance, InteriorAndOutliersRemoved) {
  const TriMesh sphere = fixtures::icosphere(3);
  PointCloud frame = sphere.vertices;
  const PointCloud interior = fixtures::ball_interior(200, 0.8, 3);
  frame.insert(frame.end(), interior.begin(), interior.end());
  for (int k = 0; k < 5; ++k) frame.emplace_back(5.0 + k, -4.0, 3.0 * k);
  const std::size_t source_size = 500;
  const auto g = preprocess_guidance({frame}, source_size, small_config());
  ASSERT_EQ(g.size(), 1u);
  ASSERT_EQ(g.frames[0].size(), source_size);
  std::size_t inner = 0;
  for (const auto& p : g.frames[0]) {
    EXPECT_LT(p.norm(), 1.0 + 1e-9);
    inner += p.norm() < 0.9;
  }
  EXPECT_LE(static_cast<double>(inner), 0.01 * source_size);
}

TEST(Guidance, CollapsedFrameIsDegenerate) {
  try {
    preprocess_guidance({PointCloud{{0, 0, 0}, {1, 0, 0}}}, 10, small_config());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DegenerateGuidance);
  }
}

TEST(Guidance, NoisyFramesRecoverTheBlend) {
  // Sample spacing (about 0.03) is close to sigma here. On much sparser bars
  // the noise alone puts the Chamfer distance near 6 sigma^2.
  const TriMesh bar = fixtures::bar_mesh(64, 12);
  SyntheticDeformation d;
  d.kind = DeformationKind::Bend;
  d.angle = 1.5;
  d.frames = 2;
  d.sigma = 0.02;
  d.interior_fraction = 0.2;
  d.seed = 4;
  const TriMesh target = apply_deformation(bar, d);
  std::vector<std::size_t> id(bar.vertices.size());
  for (std::size_t i = 0; i < id.size(); ++i) id[i] = i;
  const auto raw = synth_guidance(bar, target, id, d);
  SyntheticDeformation clean_spec = d;
  clean_spec.sigma = 0.0;
  clean_spec.interior_fraction = 0.0;
  const auto clean = synth_guidance(bar, target, id, clean_spec);
  const auto g = preprocess_guidance(raw, bar.vertices.size(), small_config());
  ASSERT_EQ(g.size(), 2u);
  for (std::size_t f = 0; f < 2; ++f) {
    EXPECT_LT(chamfer_distance(g.frames[f], clean[f]), 4.0 * d.sigma * d.sigma) << f;
  }
}

TEST(Nicp, AlreadyAlignedIsUnchanged) {
  const TriMesh sphere = fixtures::icosphere(2);
  const NeighborGraph g = NeighborGraph::from_mesh(sphere);
  const PointCloud out = nicp_refine(sphere.vertices, sphere.vertices, g);
  for (std::size_t i = 0; i < out.size(); ++i) EXPECT_LT((out[i] - sphere.vertices[i]).norm(), 1e-8);
  NicpOptions none;
  none.iterations = 0;
  PointCloud moved = sphere.vertices;
  for (auto& p : moved) p.x() += 0.3;
  EXPECT_EQ(nicp_refine(moved, sphere.vertices, g, none), moved);
}

TEST(Nicp, SmallOffsetMostlyRemoved) {
  const TriMesh sphere = fixtures::icosphere(2);
  const NeighborGraph g = NeighborGraph::from_mesh(sphere);
  PointCloud moved = sphere.vertices;
  for (auto& p : moved) p += Point3(0.01, 0.01, 0.01) / std::sqrt(3.0);
  std::vector<double> trace;
  const PointCloud out = nicp_refine(moved, sphere.vertices, g, {}, &trace);
  double before = 0.0, after = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    before += (moved[i] - sphere.vertices[i]).norm();
    after += (out[i] - sphere.vertices[i]).norm();
  }
  EXPECT_LE(after, 0.1 * before);
  for (std::size_t k = 1; k < trace.size(); ++k) EXPECT_LE(trace[k], trace[k - 1]);
}

TEST(Nicp, ChamferNeverIncreases) {
  const TriMesh bar = fixtures::bar_mesh();
  SyntheticDeformation d;
  d.kind = DeformationKind::Twist;
  d.angle = 1.0;
  const TriMesh target = apply_deformation(bar, d);
  std::vector<double> trace;
  nicp_refine(bar.vertices, target.vertices, NeighborGraph::from_mesh(bar), {}, &trace);
  ASSERT_GE(trace.size(), 2u);
  for (std::size_t k = 1; k < trace.size(); ++k) EXPECT_LE(trace[k], trace[k - 1]);
  EXPECT_LT(trace.back(), trace.front());
}

TEST(Correspondences, IdentityAndPermutation) {
  const PointCloud target = fixtures::random_cloud(30, 8);
  const auto id = extract_correspondences(target, target);
  for (std::size_t i = 0; i < target.size(); ++i) {
    EXPECT_EQ(id.map[i], i);
    EXPECT_EQ(id.distances[i], 0.0);
  }
  std::vector<std::size_t> perm(target.size());
  for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = (7 * i + 3) % perm.size();
  PointCloud shuffled;
  for (std::size_t i : perm) shuffled.push_back(target[i]);
  EXPECT_EQ(extract_correspondences(shuffled, target).map, perm);
}

TEST(Correspondences, MatchBruteForce) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const PointCloud src = fixtures::random_cloud(50, seed);
    const PointCloud tgt = fixtures::random_cloud(50, seed + 100);
    const auto m = extract_correspondences(src, tgt);
    for (std::size_t i = 0; i < src.size(); ++i) {
      const auto [idx, d] = oracle::nearest(tgt, src[i]);
      EXPECT_EQ(m.map[i], idx);
      EXPECT_NEAR(m.distances[i], std::sqrt(d), 1e-12);
    }
  }
}

TEST(Interpolate, EndpointsAndSemigroup) {
  const TriMesh sphere = fixtures::icosphere(1);
  const auto field = VelocityField::random({4, 16, 16, 3}, Activation::Tanh, 9, 1.0);
  const OdeConfig ode{0.0, 0.5, 32};
  EXPECT_EQ(interpolate_shape(field, sphere, 0.0, ode).vertices, sphere.vertices);
  const TriMesh full = interpolate_shape(field, sphere, 1.0, ode);
  EXPECT_EQ(full.triangles, sphere.triangles);
  EXPECT_EQ(full.vertices, integrate_flow(field, sphere.vertices, 0.5, 0.0, 32));

  const PointCloud a = advance_flow(field, sphere.vertices, 0.0, 0.25, ode);
  const PointCloud ab = advance_flow(field, a, 0.25, 0.75, ode);
  const PointCloud b = advance_flow(field, sphere.vertices, 0.0, 0.75, ode);
  for (std::size_t i = 0; i < b.size(); ++i) EXPECT_LT((ab[i] - b[i]).norm(), 1e-6);
  EXPECT_THROW(interpolate_shape(field, sphere, 1.5, ode), Error);
}

TEST(Interpolate, NormalizationRoundTrip) {
  const TriMesh sphere = fixtures::icosphere(1, 3.0);
  const auto field = VelocityField::random({4, 8, 3}, Activation::Tanh, 1);
  const NormalizeTransform tf = fit_unit_sphere(sphere.vertices);
  // A zero-output field leaves shapes in place regardless of the normalization.
  const TriMesh out = interpolate_shape(field, sphere, 0.5, {}, tf);
  for (std::size_t i = 0; i < out.vertices.size(); ++i) EXPECT_LT((out.vertices[i] - sphere.vertices[i]).norm(), 1e-12);
}

TEST(Registration, SelfRegistrationIsIdentity) {
  const TriMesh sphere = fixtures::icosphere(2, 2.0);
  const auto r = run_registration(sphere, sphere, {}, small_config(50));
  double mean = 0.0;
  for (std::size_t i = 0; i < sphere.vertices.size(); ++i) mean += (r.registered.vertices[i] - sphere.vertices[i]).norm();
  EXPECT_LT(mean / static_cast<double>(sphere.vertices.size()), 1e-2 * 2.0);
  EXPECT_EQ(r.registered.triangles, sphere.triangles);
  for (std::size_t i = 0; i < sphere.vertices.size(); ++i) EXPECT_EQ(r.correspondences.map[i], i);
}

TEST(Registration, SphereToEllipsoid) {
  const TriMesh sphere = fixtures::icosphere(2);
  SyntheticDeformation d;
  d.kind = DeformationKind::EllipsoidMorph;
  d.vector = Point3(1.0, 0.6, 0.6);
  const TriMesh ellipsoid = apply_deformation(sphere, d);
  auto c = small_config(600);
  c.mlp_hidden = {32, 32};
  const auto r = run_registration(sphere, ellipsoid, {}, c);
  EXPECT_LT(normalized_chamfer(r, ellipsoid), 1e-3);
  EXPECT_EQ(r.registered.triangles, sphere.triangles);
  EXPECT_EQ(r.history.size(), 600u);
  EXPECT_LT(r.final_loss.total, r.history.front().total);
  for (std::size_t j : r.correspondences.map) EXPECT_LT(j, ellipsoid.vertices.size());
}

TEST(Registration, DeterministicGivenSeed) {
  const TriMesh sphere = fixtures::icosphere(1);
  PointCloud moved = sphere.vertices;
  for (auto& p : moved) p += Point3(0.2, 0.1, 0);
  const TriMesh target{moved, sphere.triangles};
  auto c = small_config(60);
  c.seed = 17;
  const auto a = run_registration(sphere, target, {}, c);
  const auto b = run_registration(sphere, target, {}, c);
  EXPECT_EQ(a.registered.vertices, b.registered.vertices);
  EXPECT_EQ(a.correspondences.map, b.correspondences.map);
}

TEST(Registration, TranslationEquivariant) {
  const TriMesh bar = fixtures::bar_mesh(8);
  SyntheticDeformation d;
  d.kind = DeformationKind::Bend;
  d.angle = 1.0;
  d.frames = 2;
  const TriMesh target = apply_deformation(bar, d);
  std::vector<std::size_t> id(bar.vertices.size());
  for (std::size_t i = 0; i < id.size(); ++i) id[i] = i;
  const auto frames = synth_guidance(bar, target, id, d);
  const auto c = small_config(80);
  const auto base = run_registration(bar, target, frames, c);

  const Point3 shift(3.0, -1.0, 0.5);
  const auto moved = [&](PointCloud pts) {
    for (auto& p : pts) p += shift;
    return pts;
  };
  std::vector<PointCloud> moved_frames;
  for (const auto& f : frames) moved_frames.push_back(moved(f));
  const auto other = run_registration(TriMesh{moved(bar.vertices), bar.triangles},
                                      TriMesh{moved(target.vertices), target.triangles}, moved_frames, c);
  for (std::size_t i = 0; i < bar.vertices.size(); ++i) {
    EXPECT_LT((other.registered.vertices[i] - base.registered.vertices[i] - shift).norm(), 1e-4);
  }
  EXPECT_EQ(other.correspondences.map, base.correspondences.map);
}

TEST(Registration, PointCloudInputUsesKnnGraph) {
  const TriMesh sphere = fixtures::icosphere(2);
  PointCloud moved = sphere.vertices;
  for (auto& p : moved) p += Point3(0.1, 0, 0);
  const auto r = run_registration(TriMesh{sphere.vertices, {}}, TriMesh{moved, {}}, {}, small_config(100));
  EXPECT_TRUE(r.registered.triangles.empty());
  EXPECT_EQ(r.registered.vertices.size(), sphere.vertices.size());
}

TEST(Registration, RejectsEmptyShapes) {
  const TriMesh sphere = fixtures::icosphere(1);
  try {
    run_registration(TriMesh{}, sphere, {}, small_config());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptyGeometry);
  }
  RegistrationConfig bad = small_config();
  bad.iterations = 0;
  EXPECT_THROW(run_registration(sphere, sphere, {}, bad), Error);
}
