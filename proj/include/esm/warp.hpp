#pragma once

#include <cstdint>
#include <vector>

#include "esm/core.hpp"
#include "esm/geom.hpp"
#include "esm/state.hpp"

namespace esm {

/// Unordered post-warp points in target polar coordinates, with continuous
/// target pixel coordinates, carried features and per-point variances
/// (depth first, then features). Struct-of-arrays; all vectors share one
/// length. src_index keys deterministic tie-breaking in the depth buffer.
struct ScatteredPoints {
    std::vector<double> phi, theta, depth;
    std::vector<double> pix_x, pix_y;  // continuous target pixel coords (col, row)
    std::vector<double> feat;          // size() * n
    std::vector<double> var;           // size() * (1+n)
    std::vector<int64_t> src_index;
    int n = 0;

    size_t size() const { return depth.size(); }
    void reserve(size_t m);
    /// Concatenate, offsetting the other set's src indices by src_offset.
    void append(const ScatteredPoints& o, int64_t src_offset);
};

/// d-depth and pose partial derivatives of a projected radial depth:
/// j_d = dd~/dd, g_p = dd~/d(tx,ty,tz,rx,ry,rz) at the measured pose.
struct DepthJacobian {
    double j_d = 0;
    Vec6 g_p = Vec6::Zero();
};

// Projective source: point = R(r) * A * ray * d + t with A the camera
// alignment and ray = K^-1 (u, v, 1). Pose derivatives are taken with
// respect to the raw 6-vector coordinates, so the rotation block carries
// the SO(3) right Jacobian.
DepthJacobian depth_jacobian_projective(const Eigen::Vector3d& ray, double depth,
                                        const Pose6& cam_pose);

// Omni source: point = R(r_u)^T (dir * d - t_u). The radial depth equals
// |dir * d - t_u|, independent of the rotation, so the rotation block is
// exactly zero.
DepthJacobian depth_jacobian_omni(const Eigen::Vector3d& dir, double depth,
                                  const Eigen::Vector3d& trans_incr);

// sigma~^2 = j_d^2 sigma_d^2 + g_p^T P g_p, floored at a tiny positive
// value so downstream inverse-variance weights stay finite.
double propagate_depth_variance(const DepthJacobian& jac, double depth_var, const Mat6& pose_cov);

struct UnprojectResult {
    Image xyz;                   // h x w x 3, camera frame
    std::vector<uint8_t> valid;  // h*w, false where depth = 0
};

// K^-1 (pc * d) per pixel.
UnprojectResult unproject(const ProjectiveFrame& frame);

// Eq. of the projective-to-omni forward warp: unproject, transform by
// cam_to_agent (must equal pose_to_transform(frame.pose) composed with
// camera_alignment()), convert to polar, attach propagated variances.
// Pixels with zero depth or uninformative variance are culled.
ScatteredPoints warp_projective(const ProjectiveFrame& frame, const Transform& cam_to_agent,
                                double k_ppr, double prior_var);

// Re-express already-scattered polar points in a new agent frame; motion
// maps new-frame coordinates to old-frame coordinates (pose of the new
// frame in the old one). Used for the omni-to-omni warp and round-trip
// checks. Degenerate points (radius ~ 0 after the move) are culled.
ScatteredPoints warp_polar_points(const ScatteredPoints& pts, const Transform& motion,
                                  const Mat6& pose_cov, double k_ppr);

// Informative state pixels as scattered points (identity placement).
ScatteredPoints extract_state_points(const EgosphereState& state, double prior_var);

// Omni-to-omni warp of the whole belief under an agent motion increment.
ScatteredPoints warp_omni(const EgosphereState& state, const Transform& motion,
                          const Mat6& pose_cov, double prior_var);

}  // namespace esm
