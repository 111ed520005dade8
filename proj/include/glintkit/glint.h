#pragma once

// Corneal glint geometry: forward specular simulation on the corneal sphere
// and the inverse annotation pipeline (glint/LED matching, cornea estimation,
// eyeball fitting).

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "glintkit/camera.h"
#include "glintkit/eye.h"

namespace glintkit {

struct Led {
  int id = 0;
  Vec3 position = Vec3::Zero();
};

/// Cameras and LEDs serving one eye, all in the device frame.
struct RigSide {
  std::vector<CameraModel> cameras;
  std::vector<Led> leds;

  /// Throws ValidationError on an empty camera list or duplicate LED ids.
  void validate() const;
  const Led* find_led(int id) const;
};

struct Rig {
  RigSide left;
  RigSide right;

  const RigSide& side(Side s) const { return s == Side::kLeft ? left : right; }
  void validate() const;
};

struct GlintObservation {
  int view = 0;
  Vec2 pixel = Vec2::Zero();
  std::optional<int> led_id;
};

struct FrameObservation {
  Side side = Side::kLeft;
  std::vector<GlintObservation> glints;
  int timestamp = 0;

  /// Throws ValidationError when an (view, led_id) pair repeats.
  void validate() const;
};

struct Cornea {
  Vec3 center;
  double radius;
};

struct GlintSolution {
  Vec3 specular_point;
  Vec2 pixel;
};

/// Mirror reflection of direction `d_in` about unit normal `n`.
Vec3 reflect(const Vec3& d_in, const Vec3& n);

/// Point on the corneal sphere where light from `led` reflects into `cam`,
/// and its pixel. Empty when no visible reflection exists (far hemisphere,
/// failed projection or residual above 1e-9 rad). Throws GeometryError when
/// the LED or the camera centre is inside the sphere.
std::optional<GlintSolution> simulate_glint(const Cornea& cornea, const Led& led,
                                            const CameraModel& cam);

/// Angle (rad) between the reflected LED ray at the solution's specular
/// point and the direction back along the camera ray of its pixel.
double reflection_residual(const Cornea& cornea, const Led& led,
                           const CameraModel& cam, const GlintSolution& sol);

/// One ground-truth glint per (view, LED) that is visible and in-bounds.
FrameObservation simulate_frame(const EyeParams& eye, const RigSide& rig,
                                Side side, int timestamp = 0);

struct SimulatedGlint {
  Vec2 pixel;
  int led_id;
};

struct GlintAssignment {
  /// LED id matched to each observed glint, empty when unassigned.
  std::vector<std::optional<int>> led_for_observed;
  /// Summed pixel distance over assigned pairs.
  double total_cost = 0;
  int assigned = 0;
};

/// Injective minimum-total-distance assignment of observed glints to
/// simulated glints. Pairs farther apart than `gate` pixels are never
/// assigned; the number of gated pairs is maximized first.
GlintAssignment match_glints(std::span<const SimulatedGlint> simulated,
                             std::span<const Vec2> observed, double gate);

struct CorneaOptions {
  std::optional<double> fixed_radius;  // mm; estimated jointly when empty
  std::optional<Vec3> init;            // corneal-centre initializer
  double gate_px = 2.0;
  bool multistart = true;
  double start_spread_mm = 5.0;        // multi-start grid half-width
  double nominal_radius = 7.8;
  int max_iterations = 200;
};

struct CorneaEstimate {
  Vec3 p_c = Vec3::Zero();
  double r_c = 0;
  /// LED id per observed glint (frame order), empty when unassigned.
  std::vector<std::optional<int>> assignment;
  double rms_residual = 0;  // px
  bool converged = false;
  int assigned = 0;
};

/// Corneal centre (and radius) whose simulated glints best match the
/// observed ones. Levenberg-Marquardt over the pixel residuals; the
/// glint-to-LED assignment is recomputed every iteration.
CorneaEstimate estimate_cornea(const FrameObservation& frame, const RigSide& rig,
                               const CorneaOptions& options = {});

struct SphereFit {
  Vec3 center;
  double radius;
  double rms;  // mm
};

/// Algebraic least-squares sphere followed by geometric refinement.
SphereFit fit_eyeball(std::span<const Vec3> points);

struct AnnotationOptions {
  double gate_px = 2.0;
  int alternations = 5;
  double pupil_offset = 4.2;   // mm from p_c along the optical axis
  double pupil_radius = 2.0;   // mm; not observable from glints
  double min_gaze_spread_deg = 2.0;
};

struct FrameAnnotation {
  int timestamp = 0;
  bool ok = false;
  std::string error;
  CorneaEstimate cornea;
  std::optional<EyeParams> eye;      // needs the eyeball fit
  std::optional<GazeRay> optical;
};

struct SequenceAnnotation {
  std::vector<FrameAnnotation> frames;
  double r_c = 0;
  std::optional<SphereFit> eyeball;  // p_e and the pivot radius
  bool partial = false;
  std::string note;
};

/// Multi-frame annotation of one eye: shared corneal radius, per-frame
/// corneal centres, eyeball fit, optical axes and pupil placement.
SequenceAnnotation annotate_sequence(std::span<const FrameObservation> frames,
                                     const RigSide& rig,
                                     const AnnotationOptions& options = {});

}  // namespace glintkit
