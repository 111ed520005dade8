#pragma once

// Camera models in the device frame.
//
// Device frame: right-handed, +X to the user's right, +Y up, +Z toward the
// scene, millimetres. Camera frames follow the usual vision convention
// (x right in the image, y down, z along the optical axis). A Pose maps
// camera coordinates into the device frame: X_dev = R * X_cam + T.

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <memory>
#include <optional>
#include <variant>
#include <vector>

namespace glintkit {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

struct Pose {
  Mat3 R = Mat3::Identity();
  Vec3 T = Vec3::Zero();

  static Pose identity() { return {}; }

  /// Camera at `center` with its optical axis toward `target`. The image
  /// y axis points along `down` projected orthogonal to the optical axis.
  static Pose look_at(const Vec3& center, const Vec3& target,
                      const Vec3& down = Vec3(0, -1, 0));

  Vec3 to_device(const Vec3& p_cam) const { return R * p_cam + T; }
  Vec3 to_camera(const Vec3& p_dev) const { return R.transpose() * (p_dev - T); }

  /// Throws ValidationError unless R is a proper rotation within `tol`.
  void validate(double tol = 1e-9) const;
};

struct CentralIntrinsics {
  double fx = 0, fy = 0;
  double cx = 0, cy = 0;
  int width = 0, height = 0;

  void validate() const;
};

/// Per-pixel ray field of a non-central generic camera. Nodes sit on
/// integer pixel coordinates (u, v), u in [0, width-1], v in [0, height-1],
/// stored row-major. Origins are in mm, directions unit-norm, both in the
/// camera frame.
class GenericRayGrid {
 public:
  GenericRayGrid(int width, int height, std::vector<Vec3> origins,
                 std::vector<Vec3> directions);

  int width() const { return width_; }
  int height() const { return height_; }
  const Vec3& origin(int u, int v) const { return origins_[index(u, v)]; }
  const Vec3& direction(int u, int v) const { return directions_[index(u, v)]; }
  const std::vector<Vec3>& origins() const { return origins_; }
  const std::vector<Vec3>& directions() const { return directions_; }

  struct Sample {
    Vec3 origin;
    Vec3 direction;  // bilinear blend, not normalized
    Vec3 d_origin_du, d_origin_dv;
    Vec3 d_direction_du, d_direction_dv;
  };

  /// Bilinear interpolation with partial derivatives. Caller guarantees the
  /// pixel lies inside the grid.
  Sample interpolate(double u, double v) const;

 private:
  std::size_t index(int u, int v) const {
    return static_cast<std::size_t>(v) * width_ + u;
  }

  int width_;
  int height_;
  std::vector<Vec3> origins_;
  std::vector<Vec3> directions_;
};

/// Immutable camera: intrinsics variant plus camera-to-device pose. Ray
/// grids are shared, so copies are cheap.
class CameraModel {
 public:
  using Intrinsics =
      std::variant<CentralIntrinsics, std::shared_ptr<const GenericRayGrid>>;

  CameraModel(CentralIntrinsics intrinsics, Pose pose);
  CameraModel(std::shared_ptr<const GenericRayGrid> grid, Pose pose);

  const Pose& pose() const { return pose_; }
  const Intrinsics& intrinsics() const { return intrinsics_; }
  bool is_central() const {
    return std::holds_alternative<CentralIntrinsics>(intrinsics_);
  }
  const CentralIntrinsics& central() const {
    return std::get<CentralIntrinsics>(intrinsics_);
  }
  const GenericRayGrid& grid() const {
    return *std::get<std::shared_ptr<const GenericRayGrid>>(intrinsics_);
  }

  int width() const;
  int height() const;

  /// Image domain is [0, width-1] x [0, height-1].
  bool in_domain(const Vec2& pixel) const;

 private:
  Intrinsics intrinsics_;
  Pose pose_;
};

struct Ray {
  Vec3 origin;
  Vec3 direction;

  Vec3 at(double t) const { return origin + t * direction; }
};

/// Camera-frame ray (origin p, unit direction d) of a pixel, before the pose.
Ray camera_frame_ray(const CameraModel& cam, const Vec2& pixel);

/// Device-frame ray of a pixel. Throws DomainError outside the image.
Ray unproject(const CameraModel& cam, const Vec2& pixel);

struct Projection {
  Vec2 pixel;
  double residual_mm = 0;  // point-to-ray distance at `pixel`
};

/// Pixel whose ray passes through `point` (device frame). For generic
/// cameras `hint` replaces the coarse grid scan as the solver seed.
/// Throws ProjectionError for points behind the camera or outside the
/// ray-grid coverage.
Projection project(const CameraModel& cam, const Vec3& point,
                   const std::optional<Vec2>& hint = std::nullopt);

enum class EmbeddingMode {
  kPaper,     // {R[p x d] + T, R d}
  kStandard,  // geometric Pluecker pair ((R p + T) x R d, R d)
};

struct PixelEmbedding {
  Vec3 moment;
  Vec3 direction;
  EmbeddingMode mode;
};

PixelEmbedding pixel_embedding(const CameraModel& cam, const Vec2& pixel,
                               EmbeddingMode mode);

struct DepthRange {
  double t_min;
  double t_max;
};

struct EpipolarSample {
  double depth;                // distance along the source ray, mm
  Vec3 point;                  // device frame
  std::optional<Vec2> pixel;   // empty when invalid in the target view
};

/// Samples the source ray of `pixel` in `cam_a` at `count` depths spaced
/// uniformly in inverse depth (near to far) and projects them into `cam_b`.
std::vector<EpipolarSample> epipolar_samples(const CameraModel& cam_a,
                                             const Vec2& pixel,
                                             const CameraModel& cam_b,
                                             DepthRange depths, int count);

/// Distance from `pixel` to the polyline through consecutive valid samples.
/// Returns +inf when fewer than one valid sample exists.
double distance_to_epipolar_curve(const std::vector<EpipolarSample>& samples,
                                  const Vec2& pixel);

/// Ray grid of a pinhole camera with an added radial warp (`radial`, in
/// units of normalized radius squared) and a non-central origin shift of
/// `noncentral_mm` per unit normalized image coordinate.
std::shared_ptr<const GenericRayGrid> make_generic_grid(
    const CentralIntrinsics& base, double radial, double noncentral_mm);

}  // namespace glintkit
