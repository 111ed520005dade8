#include <doctest.h>

#include <cmath>
#include <cstring>
#include <limits>

#include "glintkit/camera.h"
#include "glintkit/errors.h"
#include "test_util.h"

using namespace glintkit;
using glintkit::testing::random_rotation;
using glintkit::testing::random_unit;
using glintkit::testing::uniform;

namespace {

CentralIntrinsics small_intrinsics() {
  CentralIntrinsics k;
  k.fx = k.fy = 100;
  k.cx = k.cy = 80;
  k.width = 200;
  k.height = 200;
  return k;
}

CentralIntrinsics eye_camera_intrinsics() {
  CentralIntrinsics k;
  k.fx = k.fy = 180;
  k.cx = 79.5;
  k.cy = 59.5;
  k.width = 160;
  k.height = 120;
  return k;
}

bool same_bits(const Vec3& a, const Vec3& b) { return std::memcmp(a.data(), b.data(), sizeof(double) * 3) == 0; }

}  // namespace

TEST_CASE("unproject central pinhole") {
  const CameraModel cam(small_intrinsics(), Pose::identity());
  const Ray r0 = unproject(cam, {80, 80});
  CHECK(r0.origin == Vec3::Zero());
  CHECK(r0.direction == Vec3(0, 0, 1));
  const Ray r1 = unproject(cam, {180, 80});
  CHECK((r1.direction - Vec3(1, 0, 1) / std::sqrt(2.0)).norm() < 1e-15);
}

TEST_CASE("unproject rejects pixels outside the image") {
  const CameraModel cam(small_intrinsics(), Pose::identity());
  CHECK_THROWS_AS(unproject(cam, {-0.5, 10}), DomainError);
  CHECK_THROWS_AS(unproject(cam, {10, 199.5}), DomainError);
  CHECK_THROWS_AS(unproject(cam, {std::nan(""), 10}), DomainError);
  CHECK_NOTHROW(unproject(cam, {199, 199}));
}

TEST_CASE("generic grid reproduces stored rays at nodes") {
  const auto grid = make_generic_grid(eye_camera_intrinsics(), 0.08, 0.7);
  const CameraModel cam(grid, Pose::identity());
  for (int v : {0, 1, 37, 118, 119}) {
    for (int u : {0, 5, 80, 158, 159}) {
      const Ray r = camera_frame_ray(cam, Vec2(u, v));
      CHECK(same_bits(r.direction, grid->direction(u, v).normalized()));
      CHECK(same_bits(r.origin, grid->origin(u, v)));
    }
  }
}

TEST_CASE("generic grid rejects malformed payloads") {
  std::vector<Vec3> o(6, Vec3::Zero()), d(6, Vec3(0, 0, 1));
  CHECK_NOTHROW(GenericRayGrid(3, 2, o, d));
  CHECK_THROWS_AS(GenericRayGrid(1, 6, o, d), ValidationError);
  CHECK_THROWS_AS(GenericRayGrid(2, 2, o, d), ValidationError);
  auto bad = d;
  bad[3] = Vec3(0, 0, 1.001);
  CHECK_THROWS_AS(GenericRayGrid(3, 2, o, bad), ValidationError);
  auto nan = o;
  nan[0].x() = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(GenericRayGrid(3, 2, nan, d), ValidationError);
}

TEST_CASE("intrinsics and pose validation") {
  auto k = small_intrinsics();
  k.fx = 0;
  CHECK_THROWS_AS(CameraModel(k, Pose::identity()), ValidationError);
  k = small_intrinsics();
  k.cx = 250;
  CHECK_THROWS_AS(CameraModel(k, Pose::identity()), ValidationError);

  Pose mirror;
  mirror.R = Vec3(1, 1, -1).asDiagonal();
  CHECK_THROWS_AS(mirror.validate(), ValidationError);
  Pose skew;
  skew.R(0, 1) = 1e-3;
  CHECK_THROWS_AS(skew.validate(), ValidationError);
  CHECK_THROWS_AS(CameraModel(small_intrinsics(), skew), ValidationError);
}

TEST_CASE("look_at aims the optical axis at the target") {
  std::mt19937_64 rng(11);
  for (int i = 0; i < 200; ++i) {
    const Vec3 c(uniform(rng, -50, 50), uniform(rng, -50, 50), uniform(rng, -50, 50));
    const Vec3 t = c + uniform(rng, 5, 100) * random_unit(rng);
    const Pose p = Pose::look_at(c, t);
    CHECK_NOTHROW(p.validate());
    CHECK((p.R.col(2) - (t - c).normalized()).norm() < 1e-12);
    CHECK((p.T - c).norm() == 0);
  }
}

TEST_CASE("project central") {
  const CameraModel cam(small_intrinsics(), Pose::identity());
  const Projection p = project(cam, {0, 0, 100});
  CHECK(p.pixel == Vec2(80, 80));
  CHECK(p.residual_mm == 0);
  CHECK_THROWS_AS(project(cam, {0, 0, -100}), ProjectionError);
  CHECK_THROWS_AS(project(cam, {1, 0, 0}), ProjectionError);
  CHECK_THROWS_AS(project(cam, {0, std::nan(""), 10}), ProjectionError);
}

TEST_CASE("project inverts unproject: central camera, random poses") {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 1000; ++i) {
    Pose pose;
    pose.R = random_rotation(rng);
    pose.T = Vec3(uniform(rng, -40, 40), uniform(rng, -40, 40), uniform(rng, -40, 40));
    const CameraModel cam(small_intrinsics(), pose);
    const Vec2 px(uniform(rng, 0, 199), uniform(rng, 0, 199));
    const Ray r = unproject(cam, px);
    CHECK(std::abs(r.direction.norm() - 1) < 1e-9);
    const Projection p = project(cam, r.at(uniform(rng, 5, 100)));
    CHECK((p.pixel - px).norm() < 1e-6);
  }
}

TEST_CASE("project inverts unproject: non-central generic grid") {
  std::mt19937_64 rng(5);
  const auto grid = make_generic_grid(eye_camera_intrinsics(), 0.1, 0.8);
  double worst = 0;
  for (int i = 0; i < 1000; ++i) {
    Pose pose;
    pose.R = random_rotation(rng);
    pose.T = Vec3(uniform(rng, -40, 40), uniform(rng, -40, 40), uniform(rng, -40, 40));
    const CameraModel cam(grid, pose);
    const Vec2 px(uniform(rng, 0, 159), uniform(rng, 0, 119));
    const Ray r = unproject(cam, px);
    CHECK(std::abs(r.direction.norm() - 1) < 1e-9);
    const Projection p = project(cam, r.at(uniform(rng, 5, 100)));
    worst = std::max(worst, (p.pixel - px).norm());
    CHECK(p.residual_mm < 1e-5);
  }
  CHECK(worst < 0.1);
}

TEST_CASE("generic projection failures") {
  const CameraModel cam(make_generic_grid(eye_camera_intrinsics(), 0.0, 0.5), Pose::identity());
  CHECK_THROWS_AS(project(cam, {0, 0, -50}), ProjectionError);
  // Far outside the field of view: no ray passes near the point.
  CHECK_THROWS_AS(project(cam, {500, 0, 10}), ProjectionError);
  // A hint outside the image is ignored rather than trusted.
  const Vec3 x = unproject(cam, {40.25, 90.5}).at(30);
  CHECK((project(cam, x, Vec2(-10, -10)).pixel - Vec2(40.25, 90.5)).norm() < 1e-6);
}

TEST_CASE("pixel embedding modes") {
  CameraModel id(small_intrinsics(), Pose::identity());
  for (auto mode : {EmbeddingMode::kPaper, EmbeddingMode::kStandard}) {
    const auto e = pixel_embedding(id, {80, 80}, mode);
    CHECK(e.moment == Vec3::Zero());
    CHECK(e.direction == Vec3(0, 0, 1));
  }
  Pose shifted;
  shifted.T = Vec3(10, 0, 0);
  CameraModel cam(small_intrinsics(), shifted);
  CHECK(pixel_embedding(cam, {80, 80}, EmbeddingMode::kPaper).moment == Vec3(10, 0, 0));
  CHECK(pixel_embedding(cam, {80, 80}, EmbeddingMode::kStandard).moment == Vec3(0, -10, 0));
}

TEST_CASE("embedding properties over random cameras and pixels") {
  std::mt19937_64 rng(17);
  const auto grid = make_generic_grid(eye_camera_intrinsics(), -0.05, 1.2);
  for (int i = 0; i < 10000; ++i) {
    Pose pose;
    pose.R = random_rotation(rng);
    pose.T = Vec3(uniform(rng, -60, 60), uniform(rng, -60, 60), uniform(rng, -60, 60));
    const bool central = i % 2 == 0;
    const CameraModel cam = central ? CameraModel(eye_camera_intrinsics(), pose)
                                    : CameraModel(grid, pose);
    const Vec2 px(uniform(rng, 0, 159), uniform(rng, 0, 119));
    const auto std_e = pixel_embedding(cam, px, EmbeddingMode::kStandard);
    REQUIRE(std::abs(std_e.moment.dot(std_e.direction)) <= 1e-12);

    // Direct evaluation of {R[p x d] + T, R d} from the camera-frame ray.
    const Ray local = camera_frame_ray(cam, px);
    const auto literal = pixel_embedding(cam, px, EmbeddingMode::kPaper);
    const Vec3 moment = pose.R * local.origin.cross(local.direction) + pose.T;
    REQUIRE((literal.moment - moment).norm() == 0);
    REQUIRE((literal.direction - pose.R * local.direction).norm() == 0);
  }
}

TEST_CASE("epipolar samples in the same camera collapse to the source pixel") {
  const CameraModel cam(eye_camera_intrinsics(), Pose::look_at({3, -20, 18}, {0, 0, 6}));
  const Vec2 px(61.3, 44.8);
  const auto samples = epipolar_samples(cam, px, cam, {5, 80}, 16);
  REQUIRE(samples.size() == 16);
  for (const auto& s : samples) {
    REQUIRE(s.pixel);
    CHECK((*s.pixel - px).norm() < 1e-6);
  }
}

TEST_CASE("epipolar depths are uniform in inverse depth with exact endpoints") {
  const CameraModel cam(eye_camera_intrinsics(), Pose::identity());
  const auto s = epipolar_samples(cam, {80, 60}, cam, {10, 90}, 9);
  CHECK(s.front().depth == 10);
  CHECK(s.back().depth == 90);
  for (std::size_t k = 1; k < s.size(); ++k) {
    CHECK(s[k].depth > s[k - 1].depth);
    const double expect = 1.0 / (0.1 + (1.0 / 90 - 0.1) * k / 8.0);
    CHECK(std::abs(s[k].depth - expect) < 1e-12);
  }
}

TEST_CASE("epipolar sample at the true depth matches the projection") {
  const CameraModel a(eye_camera_intrinsics(), Pose::look_at({-10, -20, 18}, {0, 0, 35}));
  const CameraModel b(make_generic_grid(eye_camera_intrinsics(), 0.05, 0.6),
                      Pose::look_at({10, -20, 18}, {0, 0, 35}));
  const Vec2 px(83.1, 52.7);
  const auto samples = epipolar_samples(a, px, b, {12, 60}, 5);
  // Sample 2 lies at 1 / mean(1/12, 1/60) = 20 mm.
  const Vec3 point = unproject(a, px).at(samples[2].depth);
  REQUIRE(samples[2].pixel);
  CHECK((*samples[2].pixel - project(b, point).pixel).norm() < 1e-6);
  CHECK(distance_to_epipolar_curve(samples, project(b, point).pixel) < 1e-6);
}

TEST_CASE("epipolar samples behind the target camera are flagged") {
  // Camera B sits 30 mm along A's axis looking back toward A.
  const CameraModel a(eye_camera_intrinsics(), Pose::identity());
  const CameraModel b(eye_camera_intrinsics(), Pose::look_at({0, 1, 30}, {0, 0, 0}));
  const auto all = epipolar_samples(a, {79.5, 59.5}, b, {5, 25}, 6);
  const auto mixed = epipolar_samples(a, {79.5, 59.5}, b, {5, 60}, 6);
  for (const auto& s : all) CHECK(s.pixel.has_value());
  int invalid = 0;
  for (const auto& s : mixed) {
    if (s.depth >= 30) {
      CHECK_FALSE(s.pixel.has_value());
      ++invalid;
    } else {
      REQUIRE(s.pixel);
      CHECK((*s.pixel - project(b, s.point).pixel).norm() == 0);
    }
  }
  CHECK(invalid > 0);
}

TEST_CASE("epipolar argument errors") {
  const CameraModel cam(eye_camera_intrinsics(), Pose::identity());
  CHECK_THROWS_AS(epipolar_samples(cam, {1, 1}, cam, {5, 80}, 1), DomainError);
  CHECK_THROWS_AS(epipolar_samples(cam, {1, 1}, cam, {0, 80}, 4), DomainError);
  CHECK_THROWS_AS(epipolar_samples(cam, {1, 1}, cam, {80, 5}, 4), DomainError);
  CHECK_THROWS_AS(epipolar_samples(cam, {-1, 1}, cam, {5, 80}, 4), DomainError);
}

TEST_CASE("distance to an epipolar polyline") {
  std::vector<EpipolarSample> s(4);
  s[0].pixel = Vec2(0, 0);
  s[1].pixel = Vec2(10, 0);
  s[3].pixel = Vec2(20, 0);
  CHECK(distance_to_epipolar_curve(s, {5, 3}) == doctest::Approx(3));
  // The gap at index 2 breaks the polyline; (15, 0) is 5 px from both ends.
  CHECK(distance_to_epipolar_curve(s, {15, 0}) == doctest::Approx(5));
  CHECK(std::isinf(distance_to_epipolar_curve({}, {0, 0})));
}
