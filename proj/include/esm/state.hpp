#pragma once

#include <cstdint>
#include <vector>

#include "esm/core.hpp"
#include "esm/geom.hpp"

namespace esm {

/// Fixed parameters of the ego-sphere filter. Every output records the
/// snapshot used so runs stay reproducible.
struct EsmConfig {
    int h_s = 90;
    int w_s = 180;
    int n = 3;                        // feature channels
    double prior_depth = 0.0;         // "depth unknown" encoding
    double prior_var = 1e4;           // uninformative variance sentinel, m^2
    double dup_var_threshold = 1.0;   // depth-buffer admission gate, m^2
    double rel_depth_threshold = 0.05;  // fusion gate, fraction of the larger depth
    int smooth_patch = 3;             // N of the NxN variance-weighted smoother

    void validate() const;
    double k_ppr() const { return pixels_per_radian(h_s); }
};

/// The filter belief: an equirectangular ego-sphere image of angles, depth
/// and features plus per-pixel diagonal variances for depth and features.
/// Channel layout: mean = [phi, theta, depth, f0..f(n-1)],
/// var = [depth, f0..f(n-1)]. Angle channels always equal sphere_grid.
struct EgosphereState {
    Image mean;  // h x w x (2+1+n)
    Image var;   // h x w x (1+n)
    int n = 0;
    int64_t frame_id = 0;

    int h() const { return mean.h(); }
    int w() const { return mean.w(); }
};

/// Prior belief: grid angles, prior depth, zero features, prior variance.
EgosphereState new_state(const EsmConfig& cfg);

/// One depth + feature measurement from a pinhole camera, with per-pixel
/// variances, the measured camera pose (agent frame, x-forward body axes)
/// and its 6x6 covariance. Depth 0 marks an invalid pixel and must carry
/// variance at or above the prior sentinel.
struct ProjectiveFrame {
    Image depth;     // h x w x 1, meters (z-depth)
    Image features;  // h x w x n
    Image var;       // h x w x (1+n)
    Intrinsics intrinsics;
    Pose6 pose;
    Mat6 pose_cov = Mat6::Zero();

    int n() const { return features.c(); }
    void validate(double prior_var) const;
};

/// Incremental agent motion u_t (frame t-1 agent -> frame t agent) with
/// covariance over its (translation, rotation-vector) coordinates.
struct PoseIncrement {
    Pose6 u;
    Mat6 cov = Mat6::Zero();
};

/// Raise masked pixels to the uninformative prior variance (all 1+n
/// channels); used to hide the robot's own body from the filter.
ProjectiveFrame apply_mask(const ProjectiveFrame& frame, const std::vector<uint8_t>& mask,
                           double prior_var);

}  // namespace esm
