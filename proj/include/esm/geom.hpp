#pragma once

#include <Eigen/Dense>

#include "esm/core.hpp"

namespace esm {

constexpr double kPi = 3.14159265358979323846;

using Mat6 = Eigen::Matrix<double, 6, 6>;
using Vec6 = Eigen::Matrix<double, 6, 1>;

/// Axis-angle rotation: direction = axis, magnitude = angle in radians.
struct RotVec {
    Eigen::Vector3d r{Eigen::Vector3d::Zero()};

    RotVec() = default;
    explicit RotVec(const Eigen::Vector3d& v) : r(v) {}
    RotVec(double x, double y, double z) : r(x, y, z) {}

    double angle() const { return r.norm(); }

    /// Same rotation with magnitude folded into [0, pi].
    RotVec canonical() const;
};

/// 6-DOF pose: translation (meters) + rotation vector.
struct Pose6 {
    Eigen::Vector3d t{Eigen::Vector3d::Zero()};
    RotVec r;

    Pose6() = default;
    Pose6(const Eigen::Vector3d& t_, const RotVec& r_) : t(t_), r(r_) {}

    Vec6 vec() const {
        Vec6 v;
        v << t, r.r;
        return v;
    }
    static Pose6 from_vec(const Vec6& v) { return {v.head<3>(), RotVec(v.tail<3>())}; }
};

/// Rigid transform x -> R x + t.
struct Transform {
    Eigen::Matrix3d R{Eigen::Matrix3d::Identity()};
    Eigen::Vector3d t{Eigen::Vector3d::Zero()};

    Eigen::Vector3d apply(const Eigen::Vector3d& p) const { return R * p + t; }
    static Transform identity() { return {}; }
};

/// Pinhole camera parameters. Pixel (u, v) with u along width.
struct Intrinsics {
    double fx = 0, fy = 0, cx = 0, cy = 0;
    int width = 0, height = 0;

    void validate() const;

    /// Symmetric pinhole from a horizontal field of view (degrees).
    static Intrinsics from_fov(int width, int height, double fov_x_deg);
};

/// (phi, theta, d): polar angle in [0, pi] measured from +z, azimuth in
/// [-pi, pi) measured from +x toward +y, radial depth in meters.
struct PolarCoord {
    double phi = 0, theta = 0, d = 0;
};

// Rodrigues exponential map; series expansion below |r| = 1e-8.
Eigen::Matrix3d rotvec_to_matrix(const RotVec& r);

// Log map (inverse of rotvec_to_matrix), canonical magnitude in [0, pi].
RotVec matrix_to_rotvec(const Eigen::Matrix3d& R);

// Right Jacobian of SO(3): Exp(r + dr) = Exp(r) Exp(J_r(r) dr).
Eigen::Matrix3d so3_right_jacobian(const Eigen::Vector3d& r);

Transform pose_to_transform(const Pose6& p);
Pose6 transform_to_pose(const Transform& T);
Transform compose(const Transform& a, const Transform& b);
Transform invert(const Transform& a);

// f_p. Agent frame is x-forward, y-left, z-up; throws on the zero vector.
PolarCoord cartesian_to_polar(const Eigen::Vector3d& p);
Eigen::Vector3d polar_to_cartesian(const PolarCoord& pc);

/// Per-pixel (phi, theta) angles of an equirectangular ego-sphere image at
/// uniform pixels-per-radian. Pixel centers sit at half-integer offsets so
/// the theta = -pi seam and the poles stay off-grid.
struct SphereGrid {
    int h = 0, w = 0;
    double k_ppr = 0;  // pixels per radian, h/pi = w/(2 pi)
    Image angles;      // h x w x 2: [phi, theta]

    double phi(int i) const { return angles(i, 0, 0); }
    double theta(int j) const { return angles(0, j, 1); }
};

// Requires w_s = 2 h_s (full sphere).
SphereGrid sphere_grid(int h_s, int w_s);

inline double pixels_per_radian(int h_s) { return h_s / kPi; }

// Continuous ego-sphere pixel coordinates of a polar direction.
inline double phi_to_pix(double phi, double k_ppr) { return phi * k_ppr - 0.5; }
inline double theta_to_pix(double theta, double k_ppr) { return (theta + kPi) * k_ppr - 0.5; }

/// Rotation taking pinhole-camera axes (z-forward, x-right, y-down) to
/// agent/body axes (x-forward, y-left, z-up).
Eigen::Matrix3d camera_alignment();

}  // namespace esm
