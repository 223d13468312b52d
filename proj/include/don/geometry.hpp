#pragma once

#include <cmath>
#include <optional>
#include <string>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "don/error.hpp"

namespace don {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Pinhole calibration. Integer pixel (i, j) sits at continuous coordinate
/// (u = i, v = j); there is no half-pixel offset anywhere in the library.
struct CameraIntrinsics {
  double fx = 70.0;
  double fy = 70.0;
  double cx = 31.5;
  double cy = 31.5;
  int width = 64;
  int height = 64;

  void validate() const {
    if (!(fx > 0.0) || !(fy > 0.0)) {
      throw Error(Errc::InvalidArgument, "focal lengths must be positive");
    }
    if (width <= 0 || height <= 0) {
      throw Error(Errc::InvalidArgument, "image size must be positive");
    }
    if (!(cx >= 0.0 && cx < width) || !(cy >= 0.0 && cy < height)) {
      throw Error(Errc::InvalidArgument, "principal point outside the image");
    }
  }

  bool operator==(const CameraIntrinsics&) const = default;
};

struct PixelCoord {
  double u = 0.0;
  double v = 0.0;

  bool operator==(const PixelCoord&) const = default;
};

struct PixelIndex {
  int col = 0;
  int row = 0;

  bool operator==(const PixelIndex&) const = default;
};

inline double pixel_distance(PixelCoord a, PixelCoord b) { return std::hypot(a.u - b.u, a.v - b.v); }

/// Nearest raster cell with half-up ties; empty when that cell is off the grid.
inline std::optional<PixelIndex> nearest_pixel(PixelCoord px, int width, int height) {
  double fu = std::floor(px.u + 0.5);
  double fv = std::floor(px.v + 0.5);
  if (!(fu >= 0.0 && fv >= 0.0 && fu < width && fv < height)) return std::nullopt;
  return PixelIndex{static_cast<int>(fu), static_cast<int>(fv)};
}

inline std::optional<PixelIndex> nearest_pixel(PixelCoord px, const CameraIntrinsics& intr) {
  return nearest_pixel(px, intr.width, intr.height);
}

/// Rigid transform stored as world_from_camera: p_world = R * p_cam + t.
class Pose {
 public:
  static constexpr double kOrthonormalTol = 1e-9;

  Pose() : rotation_(Mat3::Identity()), translation_(Vec3::Zero()) {}

  Pose(const Mat3& rotation, const Vec3& translation)
      : rotation_(rotation), translation_(translation) {
    if (!is_rotation(rotation)) {
      throw Error(Errc::InvalidArgument, "pose rotation is not orthonormal with det +1");
    }
    if (!translation.allFinite()) throw Error(Errc::InvalidArgument, "pose translation not finite");
  }

  static Pose identity() { return Pose(); }

  static Pose from_translation(const Vec3& t) { return Pose(Mat3::Identity(), t); }

  /// Camera at `eye` with +z toward `target`, +x right and +y down in the image.
  static Pose look_at(const Vec3& eye, const Vec3& target, const Vec3& up = Vec3::UnitZ()) {
    Vec3 forward = (target - eye).normalized();
    Vec3 right = forward.cross(up);
    if (right.norm() < 1e-9) throw Error(Errc::InvalidArgument, "look_at direction parallel to up");
    right.normalize();
    Vec3 down = forward.cross(right);
    Mat3 r;
    r.col(0) = right;
    r.col(1) = down;
    r.col(2) = forward;
    return Pose(r, eye);
  }

  static bool is_rotation(const Mat3& r) {
    if (!r.allFinite()) return false;
    Mat3 err = r.transpose() * r - Mat3::Identity();
    if (err.cwiseAbs().maxCoeff() >= kOrthonormalTol) return false;
    return r.determinant() > 0.0;
  }

  const Mat3& rotation() const noexcept { return rotation_; }
  const Vec3& translation() const noexcept { return translation_; }

  Pose inverse() const {
    Pose inv;
    inv.rotation_ = rotation_.transpose();
    inv.translation_ = -(inv.rotation_ * translation_);
    return inv;
  }

  /// (this * other)(p) == this(other(p)).
  Pose operator*(const Pose& other) const {
    Pose out;
    out.rotation_ = rotation_ * other.rotation_;
    out.translation_ = rotation_ * other.translation_ + translation_;
    return out;
  }

  Vec3 apply(const Vec3& p) const { return rotation_ * p + translation_; }

  bool operator==(const Pose& o) const {
    return rotation_ == o.rotation_ && translation_ == o.translation_;
  }

 private:
  Mat3 rotation_;
  Vec3 translation_;
};

inline Vec3 transform(const Pose& pose, const Vec3& point) { return pose.apply(point); }

inline PixelCoord project(const Vec3& point_cam, const CameraIntrinsics& intr) {
  if (!(point_cam.z() > 0.0)) {
    throw Error(Errc::NonPositiveDepth, "cannot project point with z = " + std::to_string(point_cam.z()));
  }
  return {intr.fx * point_cam.x() / point_cam.z() + intr.cx,
          intr.fy * point_cam.y() / point_cam.z() + intr.cy};
}

inline Vec3 unproject(PixelCoord px, double depth, const CameraIntrinsics& intr) {
  if (!(depth > 0.0)) {
    throw Error(Errc::NonPositiveDepth, "cannot unproject with depth " + std::to_string(depth));
  }
  return {(px.u - intr.cx) * depth / intr.fx, (px.v - intr.cy) * depth / intr.fy, depth};
}

inline PixelCoord to_coord(PixelIndex p) { return {static_cast<double>(p.col), static_cast<double>(p.row)}; }

/// Square image with focal length set from a horizontal field of view.
inline CameraIntrinsics intrinsics_from_fov(int width, int height, double hfov_rad) {
  CameraIntrinsics intr;
  intr.width = width;
  intr.height = height;
  intr.fx = intr.fy = 0.5 * width / std::tan(0.5 * hfov_rad);
  intr.cx = 0.5 * (width - 1);
  intr.cy = 0.5 * (height - 1);
  return intr;
}

}  // namespace don
