#include "glintkit/scene.h"

#include <Eigen/Geometry>
#include <cmath>
#include <numbers>
#include <string>

#include "glintkit/errors.h"

namespace glintkit {

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;
constexpr int kPoseMaxIterations = 50;
constexpr double kPoseMissTolerance = 1e-9;  // mm

void check_range(const Range& r, const char* name) {
  if (!r.valid() || !std::isfinite(r.lo) || !std::isfinite(r.hi)) {
    throw DomainError(std::string("invalid range for ") + name);
  }
}

EyeTruth truth_for(const EyeParams& eye, const Kappa& kappa) {
  EyeTruth t;
  t.eye = eye;
  t.kappa = kappa;
  t.optical = optical_axis(eye);
  t.visual = apply_kappa(t.optical, kappa);
  return t;
}

}  // namespace

double Range::sample(std::mt19937_64& rng) const {
  if (lo == hi) return lo;
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

void SceneConfig::validate() const {
  check_range(yaw_deg, "yaw");
  check_range(pitch_deg, "pitch");
  check_range(depth_mm, "depth");
  check_range(kappa_alpha_deg, "kappa alpha");
  check_range(kappa_beta_deg, "kappa beta");
  check_range(cornea_radius_mm, "corneal radius");
  check_range(pivot_radius_mm, "pivot radius");
  check_range(pupil_offset_mm, "pupil offset");
  if (!(depth_mm.lo > 0)) throw DomainError("target depth must be positive");
  if (!(cornea_radius_mm.lo > 0) || !(pivot_radius_mm.lo > 0) || !(pupil_radius_mm > 0)) {
    throw DomainError("anatomical radii must be positive");
  }
  if (!(glint_noise_px >= 0)) throw DomainError("glint noise must be non-negative");
  if (!(eye_center_jitter_mm >= 0)) throw DomainError("eye-centre jitter must be non-negative");
  if (test_frames_per_target < 1) throw DomainError("need at least one frame per test target");
}

EyeDraw sample_eye_anatomy(const SceneConfig& cfg, Side side, std::mt19937_64& rng) {
  EyeDraw d;
  d.anatomy.cornea_radius = cfg.cornea_radius_mm.sample(rng);
  d.anatomy.pivot_radius = cfg.pivot_radius_mm.sample(rng);
  d.anatomy.pupil_offset = cfg.pupil_offset_mm.sample(rng);
  d.anatomy.pupil_radius = cfg.pupil_radius_mm;
  d.kappa.alpha_deg = cfg.kappa_alpha_deg.sample(rng);
  d.kappa.beta_deg = cfg.kappa_beta_deg.sample(rng);
  d.kappa.side = side;
  return d;
}

Vec3 sample_target(const SceneConfig& cfg, std::mt19937_64& rng) {
  const double yaw = cfg.yaw_deg.sample(rng) * kDeg;
  const double pitch = cfg.pitch_deg.sample(rng) * kDeg;
  const double depth = cfg.depth_mm.sample(rng);
  const Vec3 dir(std::cos(pitch) * std::sin(yaw), std::sin(pitch),
                 std::cos(pitch) * std::cos(yaw));
  Vec3 p = dir * (depth / dir.z());
  p.z() = depth;
  return p;
}

EyeParams pose_eye_at_target(const Anatomy& anatomy, const Kappa& kappa,
                             const Vec3& p_e, const Vec3& target) {
  const Vec3 rel = target - p_e;
  if (!(rel.norm() > 1e-9)) throw PosingError("target coincides with the eyeball centre");
  if (!(rel.z() > 0)) throw PosingError("target is not in front of the eye");

  // Rotate the optical axis by the correction that maps the current visual
  // axis onto the direction to the target, until the visual ray hits it.
  Vec3 forward = rel.normalized();
  bool converged = false;
  Vec3 p_c;
  try {
    for (int it = 0; it < kPoseMaxIterations; ++it) {
      p_c = p_e + anatomy.pivot_radius * forward;
      const Vec3 visual = apply_kappa({p_c, forward, AxisKind::kOptical}, kappa).direction;
      const Vec3 to_target = target - p_c;
      const double miss = (to_target - to_target.dot(visual) * visual).norm();
      if (miss < kPoseMissTolerance && to_target.dot(visual) > 0) {
        converged = true;
        break;
      }
      const Eigen::Quaterniond q =
          Eigen::Quaterniond::FromTwoVectors(visual, to_target.normalized());
      forward = (q * forward).normalized();
    }
  } catch (const DegenerateGeometryError& e) {
    throw PosingError(std::string("eye posing failed: ") + e.what());
  }
  if (!converged) throw PosingError("eye posing did not converge");

  EyeParams eye;
  eye.p_e = p_e;
  eye.r_e = anatomy.pivot_radius;
  eye.p_c = p_c;
  eye.r_c = anatomy.cornea_radius;
  eye.p_p = p_c + anatomy.pupil_offset * forward;
  eye.r_p = anatomy.pupil_radius;
  return eye;
}

std::mt19937_64 record_rng(std::uint64_t seed, int subject, int frame) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed & 0xffffffffu),
                    static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(subject),
                    static_cast<std::uint32_t>(frame)};
  return std::mt19937_64(seq);
}

Session generate_session(const Rig& rig, const SceneConfig& cfg, int subject,
                         int n_calib, int n_test, bool allow_over_budget) {
  cfg.validate();
  if (n_calib < 0 || n_test < 0) throw DomainError("record counts must be non-negative");
  if (n_calib > kMaxCalibrationPoints && !allow_over_budget) {
    throw DomainError("calibration budget is " + std::to_string(kMaxCalibrationPoints) +
                      " points; got " + std::to_string(n_calib));
  }

  // Subject-level draws use frame slot -1; every record has its own stream.
  auto subject_rng = record_rng(cfg.seed, subject, -1);
  const EyeDraw left = sample_eye_anatomy(cfg, Side::kLeft, subject_rng);
  const EyeDraw right = sample_eye_anatomy(cfg, Side::kRight, subject_rng);
  const double j = cfg.eye_center_jitter_mm;
  const Range jitter{-j, j};
  auto jittered = [&](double x0) {
    return Vec3(x0 + jitter.sample(subject_rng), jitter.sample(subject_rng),
                jitter.sample(subject_rng));
  };
  const Vec3 p_e_left = jittered(-cfg.ipd_mm / 2);
  const Vec3 p_e_right = jittered(cfg.ipd_mm / 2);

  auto make_record = [&](int frame, int group, Split split, const Vec3& target) {
    SessionRecord rec;
    rec.subject = subject;
    rec.frame = frame;
    rec.group = group;
    rec.split = split;
    GroundTruth gt;
    gt.target = target;
    gt.left = truth_for(pose_eye_at_target(left.anatomy, left.kappa, p_e_left, target),
                        left.kappa);
    gt.right = truth_for(
        pose_eye_at_target(right.anatomy, right.kappa, p_e_right, target), right.kappa);
    gt.convergence = convergence_distance(gt.left.eye.p_c, gt.right.eye.p_c, target);
    rec.left = simulate_frame(gt.left.eye, rig.left, Side::kLeft, frame);
    rec.right = simulate_frame(gt.right.eye, rig.right, Side::kRight, frame);
    rec.truth = gt;
    return rec;
  };

  Session session;
  int frame = 0;
  for (int k = 0; k < n_calib; ++k) {
    auto rng = record_rng(cfg.seed, subject, frame);
    const Vec3 target = sample_target(cfg, rng);
    for (int rep = 0; rep < 2; ++rep) {
      session.calibration.push_back(make_record(frame++, k, Split::kCalibration, target));
    }
  }
  for (int k = 0; k < n_test; ++k) {
    auto rng = record_rng(cfg.seed, subject, frame);
    const Vec3 target = sample_target(cfg, rng);
    for (int rep = 0; rep < cfg.test_frames_per_target; ++rep) {
      session.test.push_back(make_record(frame++, n_calib + k, Split::kTest, target));
    }
  }
  return session;
}

std::vector<FrameObservation> add_noise(std::span<const FrameObservation> frames,
                                        double sigma_px, std::mt19937_64& rng) {
  if (!(sigma_px >= 0)) throw DomainError("noise level must be non-negative");
  std::vector<FrameObservation> out(frames.begin(), frames.end());
  std::optional<std::normal_distribution<double>> noise;
  if (sigma_px > 0) noise.emplace(0.0, sigma_px);
  for (auto& f : out) {
    for (auto& g : f.glints) {
      if (noise) {
        const double du = (*noise)(rng);
        const double dv = (*noise)(rng);
        g.pixel += Vec2(du, dv);
      }
      g.led_id.reset();
    }
  }
  return out;
}

Rig default_rig(double ipd_mm) {
  if (!(ipd_mm > 0)) throw DomainError("default_rig: IPD must be positive");
  CentralIntrinsics k;
  k.width = 640;
  k.height = 480;
  // 80 degree diagonal field of view.
  k.fx = k.fy = 400.0 / std::tan(40.0 * kDeg);
  k.cx = 319.5;
  k.cy = 239.5;

  auto make_side = [&](double x0) {
    RigSide side;
    const Vec3 aim(x0, 0.0, 6.0);
    side.cameras.emplace_back(k, Pose::look_at(Vec3(x0 - 10, -20, 18), aim));
    side.cameras.emplace_back(k, Pose::look_at(Vec3(x0 + 10, -20, 18), aim));
    constexpr int kLeds = 14;
    for (int i = 0; i < kLeds; ++i) {
      const double a = 2 * std::numbers::pi * (i + 0.5) / kLeds;
      side.leds.push_back({i, Vec3(x0 + 18.0 * std::cos(a), 15.0 * std::sin(a), 22.0)});
    }
    return side;
  };
  Rig rig;
  rig.left = make_side(-ipd_mm / 2);
  rig.right = make_side(ipd_mm / 2);
  return rig;
}

}  // namespace glintkit
