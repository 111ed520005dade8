#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "glintkit/errors.h"
#include "glintkit/eye.h"
#include "test_util.h"

using namespace glintkit;
using glintkit::testing::random_unit;
using glintkit::testing::uniform;

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

// Independent kappa construction: yaw about the eye-fixed up axis, then
// pitch about the yawed right axis.
Vec3 kappa_oracle(const Vec3& forward, double alpha_deg, double beta_deg, Side side) {
  const Vec3 up = (Vec3::UnitY() - forward.y() * forward).normalized();
  const double nasal = side == Side::kLeft ? 1 : -1;
  const Eigen::AngleAxisd yaw(nasal * alpha_deg * kDeg, up);
  const Vec3 right = yaw * up.cross(forward);
  const Eigen::AngleAxisd pitch(-beta_deg * kDeg, right);
  return pitch * (yaw * forward);
}

Vec3 gaze_dir(double yaw_deg, double pitch_deg) {
  return Vec3(std::cos(pitch_deg * kDeg) * std::sin(yaw_deg * kDeg), std::sin(pitch_deg * kDeg),
              std::cos(pitch_deg * kDeg) * std::cos(yaw_deg * kDeg));
}

// Calibration samples whose visual axes pass exactly through the targets.
std::vector<KappaSample> kappa_samples(const Kappa& k, int n, std::mt19937_64& rng,
                                       double noise_deg = 0) {
  std::vector<KappaSample> out;
  const Vec3 origin(k.side == Side::kLeft ? -32 : 32, 1, 12);
  for (int i = 0; i < n; ++i) {
    const Vec3 optical = gaze_dir(uniform(rng, -30, 30), uniform(rng, -30, 30));
    const GazeRay visual = apply_kappa({origin, optical, AxisKind::kOptical}, k);
    Vec3 observed = optical;
    if (noise_deg > 0) {
      std::normal_distribution<double> n01(0, noise_deg * kDeg);
      const Vec3 a = optical.cross(Vec3::UnitX()).normalized();
      const Vec3 b = optical.cross(a);
      const Vec3 tangent = n01(rng) * a + n01(rng) * b;
      observed = Eigen::AngleAxisd(tangent.norm(), tangent.normalized()) * optical;
    }
    out.push_back({{origin, observed, AxisKind::kOptical},
                   origin + uniform(rng, 900, 1500) * visual.direction});
  }
  return out;
}

}  // namespace

TEST_CASE("side names") {
  CHECK(to_string(Side::kLeft) == "left");
  CHECK(side_from_string("right") == Side::kRight);
  CHECK_THROWS_AS(side_from_string("centre"), DomainError);
}

TEST_CASE("optical axis runs from the eyeball centre through the cornea") {
  EyeParams e;
  e.p_e = {0, 0, 45};
  e.p_c = {0, 0, 39.7};
  const GazeRay g = optical_axis(e);
  CHECK(g.direction == Vec3(0, 0, -1));
  CHECK(g.origin == Vec3(0, 0, 39.7));
  CHECK(g.kind == AxisKind::kOptical);
  e.p_c = e.p_e;
  CHECK_THROWS_AS(optical_axis(e), DegenerateGeometryError);
}

TEST_CASE("eye parameter vector layout") {
  EyeParams e{{1, 2, 3}, 4, {5, 6, 7}, 8, {9, 10, 11}, 12};
  const auto v = e.as_vector();
  for (int i = 0; i < 12; ++i) CHECK(v[i] == i + 1);
}

TEST_CASE("apply_kappa conventions") {
  const GazeRay ahead{{1, 2, 3}, {0, 0, 1}, AxisKind::kOptical};
  const GazeRay same = apply_kappa(ahead, {0, 0, Side::kLeft});
  CHECK(same.direction == ahead.direction);
  CHECK(same.origin == ahead.origin);
  CHECK(same.kind == AxisKind::kVisual);

  CHECK((apply_kappa(ahead, {90, 0, Side::kLeft}).direction - Vec3(1, 0, 0)).norm() < 1e-15);
  CHECK((apply_kappa(ahead, {90, 0, Side::kRight}).direction - Vec3(-1, 0, 0)).norm() < 1e-15);
  CHECK((apply_kappa(ahead, {0, 90, Side::kRight}).direction - Vec3(0, 1, 0)).norm() < 1e-15);
  CHECK(apply_kappa(ahead, {5, 0, Side::kLeft}).direction.x() > 0);
  CHECK(apply_kappa(ahead, {5, 0, Side::kRight}).direction.x() < 0);
  CHECK(apply_kappa(ahead, {0, 3, Side::kLeft}).direction.y() > 0);
}

TEST_CASE("apply_kappa errors") {
  CHECK_THROWS_AS(apply_kappa({{0, 0, 0}, {0, 0, 1}, AxisKind::kVisual}, {1, 1, Side::kLeft}),
                  DomainError);
  CHECK_THROWS_AS(apply_kappa({{0, 0, 0}, {0, 1, 0}, AxisKind::kOptical}, {1, 1, Side::kLeft}),
                  DegenerateGeometryError);
}

TEST_CASE("apply_kappa matches an independent rotation construction") {
  std::mt19937_64 rng(21);
  for (int i = 0; i < 5000; ++i) {
    Vec3 f = random_unit(rng);
    if (std::abs(f.y()) > 0.95) continue;
    const Kappa k{uniform(rng, -15, 15), uniform(rng, -15, 15),
                  i % 2 ? Side::kLeft : Side::kRight};
    const Vec3 o(uniform(rng, -50, 50), uniform(rng, -50, 50), uniform(rng, -50, 50));
    const GazeRay v = apply_kappa({o, f, AxisKind::kOptical}, k);
    REQUIRE((v.direction - kappa_oracle(f, k.alpha_deg, k.beta_deg, k.side)).norm() < 1e-12);
    REQUIRE(v.origin == o);
    REQUIRE(std::abs(v.direction.norm() - 1) < 1e-15);
  }
}

TEST_CASE("estimate_kappa recovers zero kappa") {
  std::mt19937_64 rng(1);
  const auto s = kappa_samples({0, 0, Side::kLeft}, 9, rng);
  const KappaFit fit = estimate_kappa(s, Side::kLeft);
  CHECK(std::abs(fit.kappa.alpha_deg) < 1e-9);
  CHECK(std::abs(fit.kappa.beta_deg) < 1e-9);
  CHECK(fit.kappa.side == Side::kLeft);
}

TEST_CASE("estimate_kappa recovers a planted kappa from 9 noiseless samples") {
  for (Side side : {Side::kLeft, Side::kRight}) {
    std::mt19937_64 rng(2);
    const auto s = kappa_samples({5.0, 1.5, side}, 9, rng);
    const KappaFit fit = estimate_kappa(s, side);
    CHECK(std::abs(fit.kappa.alpha_deg - 5.0) < 1e-6);
    CHECK(std::abs(fit.kappa.beta_deg - 1.5) < 1e-6);
    CHECK(fit.rms_deg < 1e-6);
    CHECK(fit.iterations > 0);
  }
}

TEST_CASE("estimate_kappa inverts apply_kappa across the kappa range") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    const Side side = trial % 2 ? Side::kLeft : Side::kRight;
    const Kappa k{uniform(rng, -7, 7), uniform(rng, -7, 7), side};
    const auto s = kappa_samples(k, 2 + trial % 8, rng);
    const KappaFit fit = estimate_kappa(s, side);
    REQUIRE(std::abs(fit.kappa.alpha_deg - k.alpha_deg) < 1e-6);
    REQUIRE(std::abs(fit.kappa.beta_deg - k.beta_deg) < 1e-6);
  }
}

TEST_CASE("estimate_kappa with noisy optical axes") {
  std::mt19937_64 rng(4);
  std::vector<double> err;
  for (int trial = 0; trial < 200; ++trial) {
    const auto s = kappa_samples({5.0, 1.5, Side::kLeft}, 20, rng, 0.1);
    const KappaFit fit = estimate_kappa(s, Side::kLeft);
    err.push_back(std::hypot(fit.kappa.alpha_deg - 5.0, fit.kappa.beta_deg - 1.5));
  }
  std::nth_element(err.begin(), err.begin() + 100, err.end());
  CHECK(err[100] < 0.05);
}

TEST_CASE("estimate_kappa argument errors") {
  CHECK_THROWS_AS(estimate_kappa({}, Side::kLeft), DomainError);
  std::vector<KappaSample> visual{{{{0, 0, 0}, {0, 0, 1}, AxisKind::kVisual}, {0, 0, 100}}};
  CHECK_THROWS_AS(estimate_kappa(visual, Side::kLeft), DomainError);
  std::vector<KappaSample> coincident{{{{0, 0, 0}, {0, 0, 1}, AxisKind::kOptical}, {0, 0, 0}}};
  CHECK_THROWS_AS(estimate_kappa(coincident, Side::kLeft), DomainError);
}

TEST_CASE("fixation point at a known depth") {
  const GazeRay l{{-32, 0, 0}, {0, 0, 1}, AxisKind::kVisual};
  const GazeRay r{{32, 0, 0}, {0, 0, 1}, AxisKind::kVisual};
  CHECK(fixation_point(l, r, 1000) == Vec3(0, 0, 1000));
  CHECK_THROWS_AS(fixation_point(l, {{32, 0, 0}, {1, 0, 0}, AxisKind::kVisual}, 1000),
                  DegenerateGeometryError);
  CHECK_THROWS_AS(fixation_point(l, {{32, 0, 0}, {0, 0, 1}, AxisKind::kOptical}, 1000),
                  DomainError);
}

TEST_CASE("fixation point z equals the plane depth exactly") {
  std::mt19937_64 rng(8);
  for (int i = 0; i < 2000; ++i) {
    const GazeRay l{{uniform(rng, -40, -20), uniform(rng, -5, 5), uniform(rng, 5, 20)},
                    gaze_dir(uniform(rng, -30, 30), uniform(rng, -30, 30)), AxisKind::kVisual};
    const GazeRay r{{uniform(rng, 20, 40), uniform(rng, -5, 5), uniform(rng, 5, 20)},
                    gaze_dir(uniform(rng, -30, 30), uniform(rng, -30, 30)), AxisKind::kVisual};
    const double z = uniform(rng, 900, 1500);
    REQUIRE(fixation_point(l, r, z).z() == z);
  }
}

TEST_CASE("triangulated fixation") {
  const GazeRay l{{-32, 0, 0}, Vec3(32, 0, 1000).normalized(), AxisKind::kVisual};
  const GazeRay r{{32, 0, 0}, Vec3(-32, 0, 1000).normalized(), AxisKind::kVisual};
  CHECK((triangulate_fixation(l, r) - Vec3(0, 0, 1000)).norm() < 1e-9);
  CHECK_THROWS_AS(triangulate_fixation({{-32, 0, 0}, {0, 0, 1}}, {{32, 0, 0}, {0, 0, 1}}),
                  DegenerateGeometryError);

  std::mt19937_64 rng(9);
  for (int i = 0; i < 2000; ++i) {
    const Vec3 x(uniform(rng, -400, 400), uniform(rng, -300, 300), uniform(rng, 200, 2000));
    const Vec3 ol(uniform(rng, -40, -20), uniform(rng, -5, 5), uniform(rng, 0, 20));
    const Vec3 orr(uniform(rng, 20, 40), uniform(rng, -5, 5), uniform(rng, 0, 20));
    const GazeRay gl{ol, (x - ol).normalized(), AxisKind::kVisual};
    const GazeRay gr{orr, (x - orr).normalized(), AxisKind::kVisual};
    REQUIRE((triangulate_fixation(gl, gr) - x).norm() < 1e-9);
  }
}

TEST_CASE("convergence distance") {
  CHECK(convergence_distance({-32, 0, 0}, {32, 0, 0}, {0, 0, 1000}) == 1000);
  CHECK(convergence_distance({-32, 4, 2}, {32, -4, 6}, {0, 0, 4}) == 0);
  std::mt19937_64 rng(10);
  for (int i = 0; i < 1000; ++i) {
    const Vec3 a = 50 * random_unit(rng), b = 50 * random_unit(rng), t = 900 * random_unit(rng);
    const Vec3 m = 0.5 * (a + b);
    const double direct = std::sqrt((m - t).dot(m - t));
    REQUIRE(std::abs(convergence_distance(a, b, t) - direct) < 1e-9);
  }
}

TEST_CASE("diopter error") {
  CHECK(diopter_error(1000, 1250) == 0.2);
  CHECK(diopter_error(700, 700) == 0);
  CHECK(diopter_error(900, 1500) == doctest::Approx(0.4444).epsilon(1e-4));
  CHECK_THROWS_AS(diopter_error(0, 1000), DomainError);
  CHECK_THROWS_AS(diopter_error(1000, -1), DomainError);
  std::mt19937_64 rng(12);
  for (int i = 0; i < 1000; ++i) {
    const double a = uniform(rng, 100, 3000), b = uniform(rng, 100, 3000);
    REQUIRE(diopter_error(a, b) == diopter_error(b, a));
    REQUIRE(std::abs(diopter_error(a, b) - std::abs(1000 / a - 1000 / b)) < 1e-12);
    REQUIRE(diopter_error(a, b) > 0);
  }
}
