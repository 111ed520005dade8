#include "glintkit/eye.h"

#include <Eigen/Dense>
#include <cmath>
#include <numbers>
#include <sstream>
#include <string>

#include "glintkit/errors.h"

namespace glintkit {

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;
constexpr int kKappaMaxIterations = 100;

Vec3 kappa_direction(const Vec3& forward, double alpha, double beta, Side side) {
  const Vec3 y = Vec3::UnitY();
  Vec3 up = y - y.dot(forward) * forward;
  const double n = up.norm();
  if (n < 1e-9) {
    throw DegenerateGeometryError(
        "optical axis is parallel to device +Y; kappa frame is undefined");
  }
  up /= n;
  const Vec3 right = up.cross(forward);
  const double nasal = side == Side::kLeft ? 1.0 : -1.0;
  const Vec3 yawed = std::cos(alpha) * forward + std::sin(alpha) * nasal * right;
  return std::cos(beta) * yawed + std::sin(beta) * up;
}

// Log map of `d` at the tangent space of unit `t`, in the basis (a, b).
// Its norm is exactly the angle between d and t.
Vec2 log_map(const Vec3& d, const Vec3& t, const Vec3& a, const Vec3& b) {
  const Vec3 v = d - d.dot(t) * t;
  const double s = v.norm();
  const double theta = std::atan2(s, d.dot(t));
  const double scale = s > 1e-300 ? theta / s : 1.0;
  return scale * Vec2(v.dot(a), v.dot(b));
}

}  // namespace

std::string_view to_string(Side side) {
  return side == Side::kLeft ? "left" : "right";
}

Side side_from_string(std::string_view name) {
  if (name == "left") return Side::kLeft;
  if (name == "right") return Side::kRight;
  throw DomainError("unknown eye side '" + std::string(name) + "'");
}

Eigen::Matrix<double, 12, 1> EyeParams::as_vector() const {
  Eigen::Matrix<double, 12, 1> e;
  e << p_e, r_e, p_c, r_c, p_p, r_p;
  return e;
}

GazeRay optical_axis(const EyeParams& eye) {
  const Vec3 axis = eye.p_c - eye.p_e;
  const double n = axis.norm();
  if (!(n > 1e-9)) {
    throw DegenerateGeometryError("eyeball and corneal centers coincide");
  }
  return {eye.p_c, axis / n, AxisKind::kOptical};
}

GazeRay apply_kappa(const GazeRay& optical, const Kappa& kappa) {
  if (optical.kind != AxisKind::kOptical) {
    throw DomainError("apply_kappa expects an optical axis");
  }
  return {optical.origin,
          kappa_direction(optical.direction, kappa.alpha_deg * kDeg,
                          kappa.beta_deg * kDeg, kappa.side),
          AxisKind::kVisual};
}

KappaFit estimate_kappa(std::span<const KappaSample> samples, Side side) {
  if (samples.empty()) throw DomainError("kappa estimation needs samples");

  struct Prepared {
    Vec3 forward, target_dir, a, b;
  };
  std::vector<Prepared> prep;
  prep.reserve(samples.size());
  for (const auto& s : samples) {
    if (s.optical.kind != AxisKind::kOptical) {
      throw DomainError("kappa samples must carry optical axes");
    }
    const Vec3 rel = s.target - s.optical.origin;
    if (!(rel.norm() > 1e-9)) {
      throw DomainError("kappa target coincides with the gaze origin");
    }
    Prepared p;
    p.forward = s.optical.direction;
    p.target_dir = rel.normalized();
    const Vec3 helper = std::abs(p.target_dir.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY();
    p.a = p.target_dir.cross(helper).normalized();
    p.b = p.target_dir.cross(p.a);
    prep.push_back(p);
  }

  const Eigen::Index m = static_cast<Eigen::Index>(2 * prep.size());
  auto residuals = [&](const Vec2& x) {
    Eigen::VectorXd r(m);
    for (std::size_t i = 0; i < prep.size(); ++i) {
      const auto& p = prep[i];
      const Vec3 d = kappa_direction(p.forward, x.x(), x.y(), side);
      r.segment<2>(2 * i) = log_map(d, p.target_dir, p.a, p.b);
    }
    return r;
  };

  Vec2 x(0, 0);
  Eigen::VectorXd r = residuals(x);
  double cost = r.squaredNorm();
  bool converged = false;
  int it = 0;
  for (; it < kKappaMaxIterations; ++it) {
    constexpr double h = 1e-7;
    Eigen::MatrixXd J(m, 2);
    for (int k = 0; k < 2; ++k) {
      Vec2 xp = x, xm = x;
      xp[k] += h;
      xm[k] -= h;
      J.col(k) = (residuals(xp) - residuals(xm)) / (2 * h);
    }
    const Eigen::Matrix2d JtJ = J.transpose() * J;
    if (std::abs(JtJ.determinant()) < 1e-30) {
      throw EstimationError("kappa is unobservable from these samples",
                            std::sqrt(cost / prep.size()) / kDeg);
    }
    Vec2 step = -JtJ.ldlt().solve(J.transpose() * r);
    // Backtrack until the cost does not increase.
    double t = 1.0;
    Eigen::VectorXd r_new;
    double cost_new = cost;
    for (int ls = 0; ls < 30; ++ls, t *= 0.5) {
      r_new = residuals(x + t * step);
      cost_new = r_new.squaredNorm();
      if (cost_new <= cost) break;
    }
    if (cost_new > cost) {
      converged = true;  // no descent left at machine precision
      break;
    }
    x += t * step;
    r = r_new;
    cost = cost_new;
    if ((t * step).norm() < 1e-13) {
      converged = true;
      ++it;
      break;
    }
  }

  const double rms_deg = std::sqrt(cost / prep.size()) / kDeg;
  if (!converged) {
    std::ostringstream os;
    os << "kappa estimation did not converge in " << kKappaMaxIterations
       << " iterations (rms " << rms_deg << " deg)";
    throw EstimationError(os.str(), rms_deg);
  }
  return {{x.x() / kDeg, x.y() / kDeg, side}, rms_deg, it};
}

Vec3 fixation_point(const GazeRay& left, const GazeRay& right, double plane_z) {
  if (left.kind != AxisKind::kVisual || right.kind != AxisKind::kVisual) {
    throw DomainError("fixation_point expects visual axes");
  }
  if (!(std::abs(left.direction.z()) > 1e-9) ||
      !(std::abs(right.direction.z()) > 1e-9)) {
    throw DegenerateGeometryError("gaze direction grazes the fixation plane");
  }
  const double s_l = (plane_z - left.origin.z()) / left.direction.z();
  const double s_r = (plane_z - right.origin.z()) / right.direction.z();
  Vec3 p = ((left.origin + s_l * left.direction) +
            (right.origin + s_r * right.direction)) / 2.0;
  // Both intersections lie on the plane; pin z against rounding.
  p.z() = plane_z;
  return p;
}

Vec3 triangulate_fixation(const GazeRay& left, const GazeRay& right) {
  const Vec3 d1 = left.direction.normalized();
  const Vec3 d2 = right.direction.normalized();
  const Vec3 n = d1.cross(d2);
  const double n2 = n.squaredNorm();
  if (std::sqrt(n2) < 1e-9) {
    throw DegenerateGeometryError("gaze rays are parallel");
  }
  // Closest-point parameters via triple products; avoids the 1 - cos^2
  // cancellation of the normal-equation form for nearly parallel rays.
  const Vec3 w = right.origin - left.origin;
  const double s = w.cross(d2).dot(n) / n2;
  const double t = w.cross(d1).dot(n) / n2;
  return ((left.origin + s * d1) + (right.origin + t * d2)) / 2.0;
}

double convergence_distance(const Vec3& origin_left, const Vec3& origin_right,
                            const Vec3& target) {
  return ((origin_left + origin_right) / 2.0 - target).norm();
}

double diopter_error(double distance_mm, double estimate_mm) {
  if (!(distance_mm > 0) || !(estimate_mm > 0)) {
    throw DomainError("diopter error needs positive distances");
  }
  return 1000.0 * std::abs(estimate_mm - distance_mm) / (distance_mm * estimate_mm);
}

}  // namespace glintkit
