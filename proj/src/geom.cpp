#include "esm/geom.hpp"

#include <cmath>

namespace esm {

namespace {
Eigen::Matrix3d skew(const Eigen::Vector3d& a) {
    Eigen::Matrix3d S;
    S << 0, -a.z(), a.y(), a.z(), 0, -a.x(), -a.y(), a.x(), 0;
    return S;
}
}  // namespace

RotVec RotVec::canonical() const {
    double a = r.norm();
    if (a <= kPi) return *this;
    // r and r (1 - 2 pi / |r|) are the same rotation; fold until <= pi.
    double folded = std::fmod(a, 2.0 * kPi);
    if (folded > kPi) folded -= 2.0 * kPi;
    return RotVec(r * (folded / a));
}

Eigen::Matrix3d rotvec_to_matrix(const RotVec& rv) {
    const Eigen::Vector3d& r = rv.r;
    double a2 = r.squaredNorm();
    Eigen::Matrix3d K = skew(r);
    if (a2 < 1e-16) {  // |r| < 1e-8: second-order series, avoids 0/0
        return Eigen::Matrix3d::Identity() + K + 0.5 * K * K;
    }
    double a = std::sqrt(a2);
    return Eigen::Matrix3d::Identity() + (std::sin(a) / a) * K +
           ((1.0 - std::cos(a)) / a2) * K * K;
}

RotVec matrix_to_rotvec(const Eigen::Matrix3d& R) {
    Eigen::AngleAxisd aa(R);
    RotVec rv(aa.angle() * aa.axis());
    return rv.canonical();
}

Eigen::Matrix3d so3_right_jacobian(const Eigen::Vector3d& r) {
    double a2 = r.squaredNorm();
    Eigen::Matrix3d K = skew(r);
    if (a2 < 1e-16) {
        return Eigen::Matrix3d::Identity() - 0.5 * K + (1.0 / 6.0) * K * K;
    }
    double a = std::sqrt(a2);
    return Eigen::Matrix3d::Identity() - ((1.0 - std::cos(a)) / a2) * K +
           ((a - std::sin(a)) / (a2 * a)) * K * K;
}

Transform pose_to_transform(const Pose6& p) {
    return {rotvec_to_matrix(p.r), p.t};
}

Pose6 transform_to_pose(const Transform& T) {
    return {T.t, matrix_to_rotvec(T.R)};
}

Transform compose(const Transform& a, const Transform& b) {
    return {a.R * b.R, a.R * b.t + a.t};
}

Transform invert(const Transform& a) {
    Eigen::Matrix3d Rt = a.R.transpose();
    return {Rt, -(Rt * a.t)};
}

PolarCoord cartesian_to_polar(const Eigen::Vector3d& p) {
    double d = p.norm();
    if (d <= 0.0) throw input_error("degenerate point at origin");
    PolarCoord pc;
    pc.d = d;
    double cz = p.z() / d;
    pc.phi = std::acos(std::clamp(cz, -1.0, 1.0));
    // theta at the poles defined as 0 (atan2(0,0) = 0).
    pc.theta = std::atan2(p.y(), p.x());
    if (pc.theta >= kPi) pc.theta -= 2.0 * kPi;  // keep [-pi, pi)
    return pc;
}

Eigen::Vector3d polar_to_cartesian(const PolarCoord& pc) {
    double sp = std::sin(pc.phi);
    return {pc.d * sp * std::cos(pc.theta), pc.d * sp * std::sin(pc.theta),
            pc.d * std::cos(pc.phi)};
}

void Intrinsics::validate() const {
    if (!(fx > 0) || !(fy > 0)) throw input_error("intrinsics: focal lengths must be positive");
    if (width <= 0 || height <= 0) throw input_error("intrinsics: empty image");
    if (!(cx >= 0 && cx < width) || !(cy >= 0 && cy < height))
        throw input_error("intrinsics: principal point outside image");
}

Intrinsics Intrinsics::from_fov(int width, int height, double fov_x_deg) {
    Intrinsics in;
    in.width = width;
    in.height = height;
    in.cx = (width - 1) / 2.0;
    in.cy = (height - 1) / 2.0;
    double half = 0.5 * fov_x_deg * kPi / 180.0;
    in.fx = (width / 2.0) / std::tan(half);
    in.fy = in.fx;  // square pixels
    return in;
}

SphereGrid sphere_grid(int h_s, int w_s) {
    if (h_s <= 0 || w_s != 2 * h_s) throw input_error("non-uniform angular resolution");
    SphereGrid g;
    g.h = h_s;
    g.w = w_s;
    g.k_ppr = pixels_per_radian(h_s);
    g.angles = Image(h_s, w_s, 2);
    for (int i = 0; i < h_s; ++i) {
        double phi = (i + 0.5) / g.k_ppr;
        for (int j = 0; j < w_s; ++j) {
            g.angles(i, j, 0) = phi;
            g.angles(i, j, 1) = (j + 0.5) / g.k_ppr - kPi;
        }
    }
    return g;
}

Eigen::Matrix3d camera_alignment() {
    // cam z -> agent x, cam x -> agent -y, cam y -> agent -z
    Eigen::Matrix3d A;
    A << 0, 0, 1, -1, 0, 0, 0, -1, 0;
    return A;
}

}  // namespace esm
