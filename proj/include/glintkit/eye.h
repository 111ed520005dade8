#pragma once

// Two-sphere eye state, gaze axes, kappa and vergence geometry.

#include <span>
#include <string_view>

#include "glintkit/camera.h"

namespace glintkit {

enum class Side { kLeft, kRight };

std::string_view to_string(Side side);
Side side_from_string(std::string_view name);

/// 12-value eye state, device frame, mm. r_e is the pivot radius |p_c - p_e|.
struct EyeParams {
  Vec3 p_e = Vec3::Zero();
  double r_e = 0;
  Vec3 p_c = Vec3::Zero();
  double r_c = 0;
  Vec3 p_p = Vec3::Zero();
  double r_p = 0;

  Eigen::Matrix<double, 12, 1> as_vector() const;
};

/// Angular offset of the visual axis from the optical axis, degrees.
///
/// alpha is applied first as a yaw about the eye-fixed up axis, beta second
/// as a pitch toward up. The eye-fixed frame has the optical direction as
/// forward and device +Y (projected orthogonal to forward) as up. Positive
/// alpha is nasal: toward +X for the left eye and toward -X for the right
/// eye. Positive beta is up for both eyes.
struct Kappa {
  double alpha_deg = 0;
  double beta_deg = 0;
  Side side = Side::kLeft;
};

enum class AxisKind { kOptical, kVisual };

struct GazeRay {
  Vec3 origin;
  Vec3 direction;
  AxisKind kind = AxisKind::kOptical;
};

GazeRay optical_axis(const EyeParams& eye);

GazeRay apply_kappa(const GazeRay& optical, const Kappa& kappa);

struct KappaSample {
  GazeRay optical;
  Vec3 target;
};

struct KappaFit {
  Kappa kappa;
  double rms_deg = 0;
  int iterations = 0;
};

/// Least-squares kappa from optical axes and fixated targets: minimizes the
/// summed squared angle between the kappa-rotated axes and the directions
/// toward the targets.
KappaFit estimate_kappa(std::span<const KappaSample> samples, Side side);

/// Binocular fixation point at a known depth: each visual axis is
/// intersected with the plane z = plane_z and the two points are averaged.
Vec3 fixation_point(const GazeRay& left, const GazeRay& right, double plane_z);

/// Midpoint of the shortest segment between two gaze lines.
Vec3 triangulate_fixation(const GazeRay& left, const GazeRay& right);

double convergence_distance(const Vec3& origin_left, const Vec3& origin_right,
                            const Vec3& target);

/// |1/D - 1/D_hat| in diopters for distances given in mm.
double diopter_error(double distance_mm, double estimate_mm);

}  // namespace glintkit
