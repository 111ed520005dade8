#include "glintkit/camera.h"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "glintkit/errors.h"

namespace glintkit {

namespace {

constexpr int kCoarseStride = 8;
constexpr int kProjectMaxIterations = 50;
constexpr double kProjectConvergedSq = 1e-10;  // mm^2

std::string pixel_str(const Vec2& p) {
  std::ostringstream os;
  os << "(" << p.x() << ", " << p.y() << ")";
  return os.str();
}

}  // namespace

Pose Pose::look_at(const Vec3& center, const Vec3& target, const Vec3& down) {
  const Vec3 z = (target - center).normalized();
  const Vec3 x = down.cross(z).normalized();
  const Vec3 y = z.cross(x);
  Pose pose;
  pose.R.col(0) = x;
  pose.R.col(1) = y;
  pose.R.col(2) = z;
  pose.T = center;
  return pose;
}

void Pose::validate(double tol) const {
  if (!R.allFinite() || !T.allFinite()) {
    throw ValidationError("pose contains non-finite values");
  }
  const double ortho = (R * R.transpose() - Mat3::Identity()).cwiseAbs().maxCoeff();
  if (ortho > tol) {
    std::ostringstream os;
    os << "rotation is not orthonormal (max |R R^T - I| = " << ortho << ")";
    throw ValidationError(os.str());
  }
  const double det = R.determinant();
  if (std::abs(det - 1.0) > tol) {
    std::ostringstream os;
    os << "rotation determinant is " << det << ", expected +1";
    throw ValidationError(os.str());
  }
}

void CentralIntrinsics::validate() const {
  if (!(fx > 0) || !(fy > 0)) throw ValidationError("focal lengths must be positive");
  if (width <= 0 || height <= 0) throw ValidationError("image size must be positive");
  if (!(cx >= 0 && cx < width) || !(cy >= 0 && cy < height)) {
    throw ValidationError("principal point outside the image");
  }
}

GenericRayGrid::GenericRayGrid(int width, int height, std::vector<Vec3> origins,
                               std::vector<Vec3> directions)
    : width_(width),
      height_(height),
      origins_(std::move(origins)),
      directions_(std::move(directions)) {
  if (width < 2 || height < 2) {
    throw ValidationError("ray grid needs at least 2x2 nodes");
  }
  const auto n = static_cast<std::size_t>(width) * height;
  if (origins_.size() != n || directions_.size() != n) {
    throw ValidationError("ray grid payload does not match its declared size");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!origins_[i].allFinite() || !directions_[i].allFinite()) {
      throw ValidationError("ray grid contains non-finite values");
    }
    if (std::abs(directions_[i].norm() - 1.0) > 1e-9) {
      std::ostringstream os;
      os << "ray grid direction at node " << i << " is not unit norm";
      throw ValidationError(os.str());
    }
  }
}

GenericRayGrid::Sample GenericRayGrid::interpolate(double u, double v) const {
  const int iu = std::clamp(static_cast<int>(std::floor(u)), 0, width_ - 2);
  const int iv = std::clamp(static_cast<int>(std::floor(v)), 0, height_ - 2);
  const double fu = u - iu;
  const double fv = v - iv;

  const Vec3& o00 = origin(iu, iv);
  const Vec3& o10 = origin(iu + 1, iv);
  const Vec3& o01 = origin(iu, iv + 1);
  const Vec3& o11 = origin(iu + 1, iv + 1);
  const Vec3& d00 = direction(iu, iv);
  const Vec3& d10 = direction(iu + 1, iv);
  const Vec3& d01 = direction(iu, iv + 1);
  const Vec3& d11 = direction(iu + 1, iv + 1);

  const double w00 = (1 - fu) * (1 - fv);
  const double w10 = fu * (1 - fv);
  const double w01 = (1 - fu) * fv;
  const double w11 = fu * fv;

  Sample s;
  s.origin = w00 * o00 + w10 * o10 + w01 * o01 + w11 * o11;
  s.direction = w00 * d00 + w10 * d10 + w01 * d01 + w11 * d11;
  s.d_origin_du = (1 - fv) * (o10 - o00) + fv * (o11 - o01);
  s.d_origin_dv = (1 - fu) * (o01 - o00) + fu * (o11 - o10);
  s.d_direction_du = (1 - fv) * (d10 - d00) + fv * (d11 - d01);
  s.d_direction_dv = (1 - fu) * (d01 - d00) + fu * (d11 - d10);
  return s;
}

CameraModel::CameraModel(CentralIntrinsics intrinsics, Pose pose)
    : intrinsics_(intrinsics), pose_(pose) {
  intrinsics.validate();
  pose_.validate();
}

CameraModel::CameraModel(std::shared_ptr<const GenericRayGrid> grid, Pose pose)
    : intrinsics_(std::move(grid)), pose_(pose) {
  if (!std::get<std::shared_ptr<const GenericRayGrid>>(intrinsics_)) {
    throw ValidationError("generic camera without a ray grid");
  }
  pose_.validate();
}

int CameraModel::width() const {
  return is_central() ? central().width : grid().width();
}

int CameraModel::height() const {
  return is_central() ? central().height : grid().height();
}

bool CameraModel::in_domain(const Vec2& pixel) const {
  return pixel.allFinite() && pixel.x() >= 0 && pixel.y() >= 0 &&
         pixel.x() <= width() - 1 && pixel.y() <= height() - 1;
}

Ray camera_frame_ray(const CameraModel& cam, const Vec2& pixel) {
  if (!cam.in_domain(pixel)) {
    throw DomainError("pixel " + pixel_str(pixel) + " outside the image domain");
  }
  if (cam.is_central()) {
    const auto& k = cam.central();
    const Vec3 d((pixel.x() - k.cx) / k.fx, (pixel.y() - k.cy) / k.fy, 1.0);
    return {Vec3::Zero(), d.normalized()};
  }
  const auto s = cam.grid().interpolate(pixel.x(), pixel.y());
  return {s.origin, s.direction.normalized()};
}

Ray unproject(const CameraModel& cam, const Vec2& pixel) {
  const Ray local = camera_frame_ray(cam, pixel);
  const Pose& pose = cam.pose();
  return {pose.R * local.origin + pose.T, pose.R * local.direction};
}

namespace {

Projection project_central(const CameraModel& cam, const Vec3& point) {
  const auto& k = cam.central();
  const Vec3 x = cam.pose().to_camera(point);
  if (!(x.z() > 1e-12)) {
    throw ProjectionError("point is behind the camera");
  }
  return {Vec2(k.fx * x.x() / x.z() + k.cx, k.fy * x.y() / x.z() + k.cy), 0.0};
}

// Point-to-ray residual r = d_hat x (X - o) and its 3x2 Jacobian in (u, v).
struct RayResidual {
  Vec3 r;
  Eigen::Matrix<double, 3, 2> J;
  double depth;  // (X - o) . d_hat
};

RayResidual ray_residual(const GenericRayGrid& grid, const Vec3& x, double u,
                         double v) {
  const auto s = grid.interpolate(u, v);
  const double norm = s.direction.norm();
  const Vec3 dh = s.direction / norm;
  const Vec3 rel = x - s.origin;
  RayResidual out;
  out.r = dh.cross(rel);
  out.depth = rel.dot(dh);
  const Vec3 dh_u = (s.d_direction_du - dh * dh.dot(s.d_direction_du)) / norm;
  const Vec3 dh_v = (s.d_direction_dv - dh * dh.dot(s.d_direction_dv)) / norm;
  out.J.col(0) = dh_u.cross(rel) - dh.cross(s.d_origin_du);
  out.J.col(1) = dh_v.cross(rel) - dh.cross(s.d_origin_dv);
  return out;
}

Vec2 coarse_seed(const GenericRayGrid& grid, const Vec3& x) {
  double best = std::numeric_limits<double>::infinity();
  Vec2 seed(0, 0);
  auto visit = [&](int u, int v) {
    const Vec3 rel = x - grid.origin(u, v);
    const Vec3& d = grid.direction(u, v);
    if (rel.dot(d) <= 0) return;
    const double dist = d.cross(rel).squaredNorm();
    if (dist < best) {
      best = dist;
      seed = Vec2(u, v);
    }
  };
  const int w = grid.width(), h = grid.height();
  for (int v = 0;; v = std::min(v + kCoarseStride, h - 1)) {
    for (int u = 0;; u = std::min(u + kCoarseStride, w - 1)) {
      visit(u, v);
      if (u == w - 1) break;
    }
    if (v == h - 1) break;
  }
  if (!std::isfinite(best)) {
    throw ProjectionError("point is behind every ray of the generic camera");
  }
  return seed;
}

Projection project_generic(const CameraModel& cam, const Vec3& point,
                           const std::optional<Vec2>& hint) {
  const auto& grid = cam.grid();
  const Vec3 x = cam.pose().to_camera(point);
  const double umax = grid.width() - 1, vmax = grid.height() - 1;

  Vec2 uv = (hint && cam.in_domain(*hint)) ? *hint : coarse_seed(grid, x);
  RayResidual cur = ray_residual(grid, x, uv.x(), uv.y());
  double cost = cur.r.squaredNorm();
  double lambda = 1e-6;

  // Damped Gauss-Newton on the squared point-to-ray distance.
  for (int it = 0; it < kProjectMaxIterations && cost > 1e-26; ++it) {
    const Eigen::Matrix2d JtJ = cur.J.transpose() * cur.J;
    const Vec2 g = cur.J.transpose() * cur.r;
    Eigen::Matrix2d A = JtJ;
    A.diagonal() *= (1.0 + lambda);
    A.diagonal().array() += 1e-18;
    const Vec2 step = -A.ldlt().solve(g);
    if (!step.allFinite()) break;
    Vec2 next = uv + step;
    next.x() = std::clamp(next.x(), 0.0, umax);
    next.y() = std::clamp(next.y(), 0.0, vmax);
    const RayResidual cand = ray_residual(grid, x, next.x(), next.y());
    const double cand_cost = cand.r.squaredNorm();
    if (cand_cost <= cost) {
      const double moved = (next - uv).norm();
      uv = next;
      cur = cand;
      cost = cand_cost;
      lambda = std::max(lambda * 0.1, 1e-12);
      if (moved < 1e-13) break;
    } else {
      lambda *= 10;
      if (lambda > 1e8) break;
    }
  }

  if (cur.depth <= 0) {
    throw ProjectionError("point is behind the camera");
  }
  if (cost > kProjectConvergedSq) {
    std::ostringstream os;
    os << "point outside ray-grid coverage (residual " << std::sqrt(cost)
       << " mm at pixel " << pixel_str(uv) << ")";
    throw ProjectionError(os.str());
  }
  return {uv, std::sqrt(cost)};
}

}  // namespace

Projection project(const CameraModel& cam, const Vec3& point,
                   const std::optional<Vec2>& hint) {
  if (!point.allFinite()) throw ProjectionError("non-finite point");
  return cam.is_central() ? project_central(cam, point)
                          : project_generic(cam, point, hint);
}

PixelEmbedding pixel_embedding(const CameraModel& cam, const Vec2& pixel,
                               EmbeddingMode mode) {
  const Ray local = camera_frame_ray(cam, pixel);
  const Pose& pose = cam.pose();
  const Vec3 dir = pose.R * local.direction;
  if (mode == EmbeddingMode::kPaper) {
    return {pose.R * local.origin.cross(local.direction) + pose.T, dir, mode};
  }
  const Vec3 origin = pose.R * local.origin + pose.T;
  return {origin.cross(dir), dir, mode};
}

std::vector<EpipolarSample> epipolar_samples(const CameraModel& cam_a,
                                             const Vec2& pixel,
                                             const CameraModel& cam_b,
                                             DepthRange depths, int count) {
  if (count < 2) throw DomainError("epipolar sampling needs at least 2 samples");
  if (!(depths.t_min > 0) || !(depths.t_min < depths.t_max) ||
      !std::isfinite(depths.t_max)) {
    throw DomainError("invalid depth range; need 0 < t_min < t_max");
  }
  const Ray ray = unproject(cam_a, pixel);
  const double w_near = 1.0 / depths.t_min;
  const double w_far = 1.0 / depths.t_max;

  std::vector<EpipolarSample> out;
  out.reserve(count);
  std::optional<Vec2> hint;
  for (int k = 0; k < count; ++k) {
    double t;
    if (k == 0) {
      t = depths.t_min;
    } else if (k == count - 1) {
      t = depths.t_max;
    } else {
      t = 1.0 / (w_near + (w_far - w_near) * k / (count - 1));
    }
    EpipolarSample s{t, ray.at(t), std::nullopt};
    try {
      const Projection p = project(cam_b, s.point, hint);
      if (cam_b.in_domain(p.pixel)) {
        s.pixel = p.pixel;
        hint = p.pixel;
      }
    } catch (const ProjectionError&) {
    }
    out.push_back(s);
  }
  return out;
}

double distance_to_epipolar_curve(const std::vector<EpipolarSample>& samples,
                                  const Vec2& pixel) {
  double best = std::numeric_limits<double>::infinity();
  const Vec2* prev = nullptr;
  for (const auto& s : samples) {
    if (!s.pixel) {
      prev = nullptr;
      continue;
    }
    const Vec2& cur = *s.pixel;
    best = std::min(best, (pixel - cur).norm());
    if (prev) {
      const Vec2 seg = cur - *prev;
      const double len2 = seg.squaredNorm();
      if (len2 > 0) {
        const double t = std::clamp((pixel - *prev).dot(seg) / len2, 0.0, 1.0);
        best = std::min(best, (pixel - (*prev + t * seg)).norm());
      }
    }
    prev = &cur;
  }
  return best;
}

std::shared_ptr<const GenericRayGrid> make_generic_grid(
    const CentralIntrinsics& base, double radial, double noncentral_mm) {
  base.validate();
  const int w = base.width, h = base.height;
  std::vector<Vec3> origins, directions;
  origins.reserve(static_cast<std::size_t>(w) * h);
  directions.reserve(static_cast<std::size_t>(w) * h);
  for (int v = 0; v < h; ++v) {
    for (int u = 0; u < w; ++u) {
      const double x = (u - base.cx) / base.fx;
      const double y = (v - base.cy) / base.fy;
      const double s = 1.0 + radial * (x * x + y * y);
      origins.emplace_back(noncentral_mm * x, noncentral_mm * y, 0.0);
      directions.push_back(Vec3(x * s, y * s, 1.0).normalized());
    }
  }
  return std::make_shared<const GenericRayGrid>(w, h, std::move(origins),
                                                std::move(directions));
}

}  // namespace glintkit
