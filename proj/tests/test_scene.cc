#include <doctest.h>

#include <cmath>
#include <numbers>

#include "glintkit/errors.h"
#include "glintkit/scene.h"
#include "test_util.h"

using namespace glintkit;
using glintkit::testing::uniform;

namespace {

constexpr double kRadToDeg = 180.0 / std::numbers::pi;

SceneConfig collapsed() {
  SceneConfig cfg;
  cfg.yaw_deg = {0, 0};
  cfg.pitch_deg = {0, 0};
  cfg.depth_mm = {1000, 1000};
  cfg.kappa_alpha_deg = {5, 5};
  cfg.kappa_beta_deg = {1.5, 1.5};
  cfg.cornea_radius_mm = {7.8, 7.8};
  cfg.pivot_radius_mm = {5.3, 5.3};
  cfg.pupil_offset_mm = {4.2, 4.2};
  return cfg;
}

bool same_record(const SessionRecord& a, const SessionRecord& b) {
  if (a.subject != b.subject || a.frame != b.frame || a.group != b.group || a.split != b.split)
    return false;
  for (Side s : {Side::kLeft, Side::kRight}) {
    const auto &ga = a.observation(s).glints, &gb = b.observation(s).glints;
    if (ga.size() != gb.size()) return false;
    for (std::size_t i = 0; i < ga.size(); ++i) {
      if (ga[i].pixel != gb[i].pixel || ga[i].led_id != gb[i].led_id || ga[i].view != gb[i].view)
        return false;
    }
    if (a.truth->eye(s).eye.as_vector() != b.truth->eye(s).eye.as_vector()) return false;
  }
  return a.truth->target == b.truth->target;
}

}  // namespace

TEST_CASE("collapsed ranges give exact values") {
  std::mt19937_64 rng(1);
  const SceneConfig cfg = collapsed();
  const EyeDraw d = sample_eye_anatomy(cfg, Side::kRight, rng);
  CHECK(d.anatomy.cornea_radius == 7.8);
  CHECK(d.anatomy.pivot_radius == 5.3);
  CHECK(d.anatomy.pupil_offset == 4.2);
  CHECK(d.anatomy.pupil_radius == 2.0);
  CHECK(d.kappa.alpha_deg == 5);
  CHECK(d.kappa.beta_deg == 1.5);
  CHECK(d.kappa.side == Side::kRight);
  CHECK(sample_target(cfg, rng) == Vec3(0, 0, 1000));
}

TEST_CASE("anatomy draws are seeded and stay in range") {
  const SceneConfig cfg;
  std::mt19937_64 a(7), b(7);
  for (int i = 0; i < 10000; ++i) {
    const EyeDraw x = sample_eye_anatomy(cfg, Side::kLeft, a);
    const EyeDraw y = sample_eye_anatomy(cfg, Side::kLeft, b);
    REQUIRE(x.anatomy.cornea_radius == y.anatomy.cornea_radius);
    REQUIRE(x.kappa.beta_deg == y.kappa.beta_deg);
    REQUIRE(x.anatomy.cornea_radius >= 7.2);
    REQUIRE(x.anatomy.cornea_radius <= 8.4);
    REQUIRE(x.anatomy.pivot_radius >= 4.7);
    REQUIRE(x.anatomy.pivot_radius <= 6.0);
    REQUIRE(std::abs(x.kappa.alpha_deg) <= 7);
    REQUIRE(std::abs(x.kappa.beta_deg) <= 7);
  }
}

TEST_CASE("targets respect the gaze range and depth band") {
  const SceneConfig cfg;
  std::mt19937_64 rng(2);
  constexpr int kDraws = 100000, kBins = 10;
  std::vector<int> yaw_hist(kBins), pitch_hist(kBins);
  for (int i = 0; i < kDraws; ++i) {
    const Vec3 t = sample_target(cfg, rng);
    const double yaw = std::atan2(t.x(), t.z()) * kRadToDeg;
    const double pitch = std::atan2(t.y(), std::hypot(t.x(), t.z())) * kRadToDeg;
    REQUIRE(std::abs(yaw) <= 30 + 1e-9);
    REQUIRE(std::abs(pitch) <= 30 + 1e-9);
    REQUIRE(t.z() >= 900);
    REQUIRE(t.z() <= 1500);
    ++yaw_hist[std::min(kBins - 1, static_cast<int>((yaw + 30) / 60 * kBins))];
    ++pitch_hist[std::min(kBins - 1, static_cast<int>((pitch + 30) / 60 * kBins))];
  }
  const double expect = static_cast<double>(kDraws) / kBins;
  const double band = 3 * std::sqrt(kDraws * (1.0 / kBins) * (1 - 1.0 / kBins));
  for (int b = 0; b < kBins; ++b) {
    CHECK(std::abs(yaw_hist[b] - expect) <= band);
    CHECK(std::abs(pitch_hist[b] - expect) <= band);
  }
}

TEST_CASE("config validation") {
  SceneConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.yaw_deg = {10, -10};
  CHECK_THROWS_AS(cfg.validate(), DomainError);
  cfg = {};
  cfg.depth_mm = {0, 100};
  CHECK_THROWS_AS(cfg.validate(), DomainError);
  cfg = {};
  cfg.cornea_radius_mm = {-1, 8};
  CHECK_THROWS_AS(cfg.validate(), DomainError);
  cfg = {};
  cfg.glint_noise_px = -0.1;
  CHECK_THROWS_AS(cfg.validate(), DomainError);
  cfg = {};
  cfg.test_frames_per_target = 0;
  CHECK_THROWS_AS(cfg.validate(), DomainError);
  cfg = {};
  cfg.kappa_beta_deg = {0, std::nan("")};
  CHECK_THROWS_AS(cfg.validate(), DomainError);
}

TEST_CASE("posing without kappa points the optical axis at the target") {
  const Anatomy anat{7.8, 5.3, 4.2, 2.0};
  const Vec3 p_e(-32, 0, 0);
  const Vec3 target(-32, 0, 1000);
  const EyeParams e = pose_eye_at_target(anat, {0, 0, Side::kLeft}, p_e, target);
  const GazeRay g = optical_axis(e);
  CHECK((g.direction - Vec3(0, 0, 1)).norm() < 1e-15);
  CHECK((e.p_c - Vec3(-32, 0, 5.3)).norm() < 1e-12);
  CHECK((e.p_p - Vec3(-32, 0, 9.5)).norm() < 1e-12);
  CHECK(e.r_e == 5.3);
  CHECK(e.r_c == 7.8);
  CHECK(e.r_p == 2.0);
}

TEST_CASE("posed visual axes hit their targets") {
  std::mt19937_64 rng(3);
  const SceneConfig cfg;
  for (int i = 0; i < 2000; ++i) {
    const Side side = i % 2 ? Side::kLeft : Side::kRight;
    const EyeDraw d = sample_eye_anatomy(cfg, side, rng);
    const Vec3 p_e(side == Side::kLeft ? -32 : 32, uniform(rng, -1, 1), uniform(rng, -1, 1));
    const Vec3 target = sample_target(cfg, rng);
    const EyeParams e = pose_eye_at_target(d.anatomy, d.kappa, p_e, target);
    const GazeRay o = optical_axis(e);
    const GazeRay v = apply_kappa(o, d.kappa);
    const Vec3 rel = target - v.origin;
    REQUIRE((rel - rel.dot(v.direction) * v.direction).norm() < 1e-6);
    REQUIRE(rel.dot(v.direction) > 0);
    REQUIRE(std::abs((e.p_c - e.p_e).norm() - d.anatomy.pivot_radius) < 1e-12);
    REQUIRE((e.p_p - (e.p_c + 4.2 * o.direction)).norm() < 1e-12);
  }
}

TEST_CASE("posing errors") {
  const Anatomy anat{7.8, 5.3, 4.2, 2.0};
  CHECK_THROWS_AS(pose_eye_at_target(anat, {}, {1, 2, 3}, {1, 2, 3}), PosingError);
  CHECK_THROWS_AS(pose_eye_at_target(anat, {}, {0, 0, 0}, {0, 0, -500}), PosingError);
}

TEST_CASE("generate_session shapes and invariants") {
  const Rig rig = default_rig();
  SceneConfig cfg;
  cfg.seed = 4;
  const Session s = generate_session(rig, cfg, 2, 20, 50);
  REQUIRE(s.calibration.size() == 40);
  REQUIRE(s.test.size() == 50);
  for (std::size_t i = 0; i < s.calibration.size(); ++i) {
    CHECK(s.calibration[i].group == static_cast<int>(i / 2));
    CHECK(s.calibration[i].split == Split::kCalibration);
    CHECK(s.calibration[i].truth->target == s.calibration[i / 2 * 2].truth->target);
  }
  for (std::size_t i = 0; i < s.test.size(); ++i) {
    CHECK(s.test[i].group == static_cast<int>(20 + i));
    CHECK(s.test[i].frame == static_cast<int>(40 + i));
    CHECK(s.test[i].split == Split::kTest);
  }
  const EyeParams first_left = s.calibration[0].truth->left.eye;
  for (const auto* part : {&s.calibration, &s.test}) {
    for (const auto& r : *part) {
      const GroundTruth& gt = *r.truth;
      CHECK(r.subject == 2);
      // Anatomy is constant for a subject.
      CHECK((gt.left.eye.p_e - first_left.p_e).norm() == 0);
      CHECK(gt.left.eye.r_c == first_left.r_c);
      for (Side side : {Side::kLeft, Side::kRight}) {
        const EyeTruth& t = gt.eye(side);
        CHECK((t.optical.direction - (t.eye.p_c - t.eye.p_e).normalized()).norm() < 1e-15);
        const Vec3 rel = gt.target - t.visual.origin;
        CHECK((rel - rel.dot(t.visual.direction) * t.visual.direction).norm() < 1e-6);
        CHECK(r.observation(side).side == side);
        CHECK(r.observation(side).timestamp == r.frame);
        CHECK(r.observation(side).glints.size() >= 4);
        for (const auto& g : r.observation(side).glints) {
          const auto& cam = rig.side(side).cameras[g.view];
          const Led& led = *rig.side(side).find_led(*g.led_id);
          const auto sol = simulate_glint({t.eye.p_c, t.eye.r_c}, led, cam);
          REQUIRE(sol);
          CHECK(reflection_residual({t.eye.p_c, t.eye.r_c}, led, cam, *sol) < 1e-9);
        }
      }
      const Vec3 fix = fixation_point(gt.left.visual, gt.right.visual, gt.target.z());
      CHECK((fix - gt.target).norm() < 1e-6);
      const Vec3 mid = (gt.left.eye.p_c + gt.right.eye.p_c) / 2;
      CHECK(std::abs(gt.convergence - (mid - gt.target).norm()) < 1e-9);
    }
  }
}

TEST_CASE("generate_session is a deterministic function of its inputs") {
  const Rig rig = default_rig();
  SceneConfig cfg;
  cfg.seed = 5;
  cfg.test_frames_per_target = 3;
  const Session a = generate_session(rig, cfg, 1, 3, 2);
  const Session b = generate_session(rig, cfg, 1, 3, 2);
  REQUIRE(a.test.size() == 6);
  CHECK(a.test[0].group == a.test[2].group);
  CHECK(a.test[3].group == a.test[0].group + 1);
  for (std::size_t i = 0; i < a.calibration.size(); ++i) CHECK(same_record(a.calibration[i], b.calibration[i]));
  for (std::size_t i = 0; i < a.test.size(); ++i) CHECK(same_record(a.test[i], b.test[i]));

  cfg.seed = 6;
  const Session c = generate_session(rig, cfg, 1, 3, 2);
  CHECK(c.calibration[0].truth->target != a.calibration[0].truth->target);
  const Session d = generate_session(rig, cfg, 2, 3, 2);
  CHECK(d.calibration[0].truth->left.eye.p_e != c.calibration[0].truth->left.eye.p_e);
}

TEST_CASE("calibration budget") {
  const Rig rig = default_rig();
  const SceneConfig cfg;
  CHECK_THROWS_AS(generate_session(rig, cfg, 0, 21, 0), DomainError);
  CHECK(generate_session(rig, cfg, 0, 21, 0, true).calibration.size() == 42);
  CHECK_THROWS_AS(generate_session(rig, cfg, 0, -1, 0), DomainError);
  CHECK(generate_session(rig, cfg, 0, 0, 0).test.empty());
}

TEST_CASE("add_noise") {
  const Rig rig = default_rig();
  SceneConfig cfg;
  cfg.seed = 7;
  const Session s = generate_session(rig, cfg, 0, 20, 0);
  std::vector<FrameObservation> frames;
  for (const auto& r : s.calibration) {
    frames.push_back(r.left);
    frames.push_back(r.right);
  }

  std::mt19937_64 rng(1);
  const auto clean = add_noise(frames, 0.0, rng);
  for (std::size_t f = 0; f < frames.size(); ++f) {
    for (std::size_t i = 0; i < frames[f].glints.size(); ++i) {
      CHECK(clean[f].glints[i].pixel == frames[f].glints[i].pixel);
      CHECK_FALSE(clean[f].glints[i].led_id);
    }
  }

  // Repeat the frame set until 10^5 glints have been perturbed.
  double sum_u = 0, sum_v = 0, sq_u = 0, sq_v = 0;
  long n = 0;
  std::mt19937_64 a(2), b(2);
  while (n < 100000) {
    const auto noisy = add_noise(frames, 0.5, a);
    const auto twin = add_noise(frames, 0.5, b);
    for (std::size_t f = 0; f < frames.size(); ++f) {
      for (std::size_t i = 0; i < frames[f].glints.size(); ++i) {
        REQUIRE(noisy[f].glints[i].pixel == twin[f].glints[i].pixel);
        const Vec2 d = noisy[f].glints[i].pixel - frames[f].glints[i].pixel;
        sum_u += d.x();
        sum_v += d.y();
        sq_u += d.x() * d.x();
        sq_v += d.y() * d.y();
        ++n;
      }
    }
  }
  const double std_u = std::sqrt(sq_u / n - (sum_u / n) * (sum_u / n));
  const double std_v = std::sqrt(sq_v / n - (sum_v / n) * (sum_v / n));
  CHECK(std_u >= 0.45);
  CHECK(std_u <= 0.55);
  CHECK(std_v >= 0.45);
  CHECK(std_v <= 0.55);
  CHECK_THROWS_AS(add_noise(frames, -1, rng), DomainError);
}

TEST_CASE("record streams are independent per frame") {
  auto a = record_rng(1, 0, 0), b = record_rng(1, 0, 1), c = record_rng(1, 0, 0);
  const auto x = a(), y = b(), z = c();
  CHECK(x != y);
  CHECK(x == z);
  CHECK(record_rng(1, 1, 0)() != x);
  CHECK(record_rng(2, 0, 0)() != x);
}

TEST_CASE("default rig layout") {
  const Rig rig = default_rig();
  CHECK_NOTHROW(rig.validate());
  for (Side side : {Side::kLeft, Side::kRight}) {
    const RigSide& s = rig.side(side);
    CHECK(s.cameras.size() == 2);
    CHECK(s.leds.size() == 14);
    const double x0 = side == Side::kLeft ? -32 : 32;
    Vec3 mean = Vec3::Zero();
    for (const auto& led : s.leds) mean += led.position;
    mean /= 14;
    CHECK((mean - Vec3(x0, 0, 22)).norm() < 1e-12);
    for (const auto& cam : s.cameras) {
      CHECK(cam.is_central());
      CHECK(cam.width() == 640);
      CHECK(cam.height() == 480);
    }
  }
  CHECK(default_rig(70).right.leds[0].position.x() > rig.right.leds[0].position.x());
  CHECK_THROWS_AS(default_rig(0), DomainError);
  CHECK_THROWS_AS(default_rig(-3), DomainError);
}
