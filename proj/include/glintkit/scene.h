#pragma once

// Synthetic ground truth mirroring a head-mounted two-eye acquisition rig.

#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include "glintkit/eye.h"
#include "glintkit/glint.h"

namespace glintkit {

struct Range {
  double lo;
  double hi;

  bool valid() const { return lo <= hi; }
  double sample(std::mt19937_64& rng) const;
};

struct SceneConfig {
  Range yaw_deg{-30, 30};
  Range pitch_deg{-30, 30};
  Range depth_mm{900, 1500};
  Range kappa_alpha_deg{-7, 7};
  Range kappa_beta_deg{-7, 7};
  Range cornea_radius_mm{7.2, 8.4};
  Range pivot_radius_mm{4.7, 6.0};
  Range pupil_offset_mm{4.2, 4.2};
  double pupil_radius_mm = 2.0;
  double ipd_mm = 64.0;
  double eye_center_jitter_mm = 1.0;  // uniform, per axis
  double glint_noise_px = 0.0;
  int test_frames_per_target = 1;
  std::uint64_t seed = 0;

  void validate() const;
};

struct Anatomy {
  double cornea_radius;
  double pivot_radius;
  double pupil_offset;
  double pupil_radius;
};

struct EyeDraw {
  Anatomy anatomy;
  Kappa kappa;
};

/// Draws anatomy and kappa for one eye.
EyeDraw sample_eye_anatomy(const SceneConfig& cfg, Side side, std::mt19937_64& rng);

/// Target at uniform yaw/pitch (seen from the device origin) and uniform
/// z-depth.
Vec3 sample_target(const SceneConfig& cfg, std::mt19937_64& rng);

/// Rotates the eye about `p_e` until its visual axis passes through
/// `target`. Throws PosingError when the target is not in front of the eye
/// or the iteration does not converge.
EyeParams pose_eye_at_target(const Anatomy& anatomy, const Kappa& kappa,
                             const Vec3& p_e, const Vec3& target);

enum class Split { kCalibration, kTest };

struct EyeTruth {
  EyeParams eye;
  Kappa kappa;
  GazeRay optical;
  GazeRay visual;
};

struct GroundTruth {
  Vec3 target = Vec3::Zero();
  double convergence = 0;
  EyeTruth left;
  EyeTruth right;

  const EyeTruth& eye(Side s) const { return s == Side::kLeft ? left : right; }
};

/// One binocular frame: observations of both eyes plus optional truth.
struct SessionRecord {
  int subject = 0;
  int frame = 0;
  int group = 0;  // fixation-group id (one per target)
  Split split = Split::kTest;
  FrameObservation left;
  FrameObservation right;
  std::optional<GroundTruth> truth;

  const FrameObservation& observation(Side s) const {
    return s == Side::kLeft ? left : right;
  }
  FrameObservation& observation(Side s) { return s == Side::kLeft ? left : right; }
};

struct Session {
  std::vector<SessionRecord> calibration;
  std::vector<SessionRecord> test;
};

/// Default calibration budget per subject.
inline constexpr int kMaxCalibrationPoints = 20;

/// Noiseless session for one subject: fixed anatomy and kappa, `n_calib`
/// targets with two frames each and `n_test` test targets.
/// Throws DomainError for negative counts or n_calib above the budget
/// unless `allow_over_budget` is set.
Session generate_session(const Rig& rig, const SceneConfig& cfg, int subject,
                         int n_calib, int n_test, bool allow_over_budget = false);

/// Isotropic Gaussian pixel noise on every glint; LED identities removed.
std::vector<FrameObservation> add_noise(std::span<const FrameObservation> frames,
                                        double sigma_px, std::mt19937_64& rng);

/// Per-record generator: independent stream for (seed, subject, frame).
std::mt19937_64 record_rng(std::uint64_t seed, int subject, int frame);

/// Two-eye rig: per eye two 640x480 cameras below the lens barrel and a
/// ring of 14 LEDs, eyeball centres nominally at x = -/+ipd/2.
/// Throws DomainError for a non-positive IPD.
Rig default_rig(double ipd_mm = 64.0);

}  // namespace glintkit
