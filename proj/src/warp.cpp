#include "esm/warp.hpp"

#include <cmath>

#include "esm/parallel.hpp"

namespace esm {

namespace {
constexpr double kMinDepth = 1e-12;  // cull radius for degenerate points
constexpr double kMinVar = 1e-12;    // variance floor after propagation
}  // namespace

void ScatteredPoints::reserve(size_t m) {
    phi.reserve(m);
    theta.reserve(m);
    depth.reserve(m);
    pix_x.reserve(m);
    pix_y.reserve(m);
    feat.reserve(m * n);
    var.reserve(m * (1 + n));
    src_index.reserve(m);
}

void ScatteredPoints::append(const ScatteredPoints& o, int64_t src_offset) {
    if (o.n != n) throw input_error("scatter append: feature channel mismatch");
    phi.insert(phi.end(), o.phi.begin(), o.phi.end());
    theta.insert(theta.end(), o.theta.begin(), o.theta.end());
    depth.insert(depth.end(), o.depth.begin(), o.depth.end());
    pix_x.insert(pix_x.end(), o.pix_x.begin(), o.pix_x.end());
    pix_y.insert(pix_y.end(), o.pix_y.begin(), o.pix_y.end());
    feat.insert(feat.end(), o.feat.begin(), o.feat.end());
    var.insert(var.end(), o.var.begin(), o.var.end());
    for (int64_t s : o.src_index) src_index.push_back(s + src_offset);
}

DepthJacobian depth_jacobian_projective(const Eigen::Vector3d& ray, double depth,
                                        const Pose6& cam_pose) {
    DepthJacobian out;
    Eigen::Matrix3d A = camera_alignment();
    Eigen::Matrix3d R = rotvec_to_matrix(cam_pose.r);
    Eigen::Vector3d s = A * (ray * depth);    // point in body axes at the camera origin
    Eigen::Vector3d X = R * s + cam_pose.t;   // point in agent frame
    double dt = X.norm();
    if (dt < kMinDepth) return out;           // degenerate, caller culls
    Eigen::Vector3d Xhat = X / dt;
    out.j_d = Xhat.dot(R * (A * ray));
    out.g_p.head<3>() = Xhat;
    // d(R(r) s)/dr = -R [s]x J_r(r)
    Eigen::Matrix3d sx;
    sx << 0, -s.z(), s.y(), s.z(), 0, -s.x(), -s.y(), s.x(), 0;
    out.g_p.tail<3>() = -(Xhat.transpose() * R * sx * so3_right_jacobian(cam_pose.r.r)).transpose();
    return out;
}

DepthJacobian depth_jacobian_omni(const Eigen::Vector3d& dir, double depth,
                                  const Eigen::Vector3d& trans_incr) {
    DepthJacobian out;
    Eigen::Vector3d Y = dir * depth - trans_incr;  // old-frame offset; rotation drops out of |Y|
    double dt = Y.norm();
    if (dt < kMinDepth) return out;
    Eigen::Vector3d Yhat = Y / dt;
    out.j_d = Yhat.dot(dir);
    out.g_p.head<3>() = -Yhat;
    // g_p rotation block is identically zero: rotations preserve radii.
    return out;
}

double propagate_depth_variance(const DepthJacobian& jac, double depth_var, const Mat6& pose_cov) {
    double v = jac.j_d * jac.j_d * depth_var + jac.g_p.dot(pose_cov * jac.g_p);
    return v > kMinVar ? v : kMinVar;
}

UnprojectResult unproject(const ProjectiveFrame& frame) {
    const Intrinsics& in = frame.intrinsics;
    UnprojectResult out;
    out.xyz = Image(in.height, in.width, 3);
    out.valid.assign(static_cast<size_t>(in.height) * in.width, 0);
    for (int v = 0; v < in.height; ++v) {
        for (int u = 0; u < in.width; ++u) {
            double d = frame.depth(v, u, 0);
            if (d <= 0.0) continue;
            out.xyz(v, u, 0) = (u - in.cx) / in.fx * d;
            out.xyz(v, u, 1) = (v - in.cy) / in.fy * d;
            out.xyz(v, u, 2) = d;
            out.valid[static_cast<size_t>(v) * in.width + u] = 1;
        }
    }
    return out;
}

namespace {

// One warped point, or invalid. Shared by the projective and omni paths.
struct WarpSlot {
    double phi, theta, depth, pix_x, pix_y;
    double var_d;
    uint8_t ok = 0;
};

// Compact valid slots in source order so output is schedule-independent.
ScatteredPoints pack(const std::vector<WarpSlot>& slots, int n,
                     const std::vector<const double*>& feat_rows,
                     const std::vector<const double*>& fvar_rows) {
    ScatteredPoints out;
    out.n = n;
    size_t count = 0;
    for (const auto& s : slots) count += s.ok;
    out.reserve(count);
    for (size_t p = 0; p < slots.size(); ++p) {
        const WarpSlot& s = slots[p];
        if (!s.ok) continue;
        out.phi.push_back(s.phi);
        out.theta.push_back(s.theta);
        out.depth.push_back(s.depth);
        out.pix_x.push_back(s.pix_x);
        out.pix_y.push_back(s.pix_y);
        out.var.push_back(s.var_d);
        const double* fv = fvar_rows[p];
        for (int k = 0; k < n; ++k) out.var.push_back(fv[k]);
        const double* f = feat_rows[p];
        for (int k = 0; k < n; ++k) out.feat.push_back(f[k]);
        out.src_index.push_back(static_cast<int64_t>(p));
    }
    return out;
}

}  // namespace

ScatteredPoints warp_projective(const ProjectiveFrame& frame, const Transform& cam_to_agent,
                                double k_ppr, double prior_var) {
    const Intrinsics& in = frame.intrinsics;
    const int w = in.width, h = in.height, n = frame.features.c();
    const int64_t npx = static_cast<int64_t>(h) * w;

    const Eigen::Matrix3d A = camera_alignment();
    const Eigen::Matrix3d Rb = rotvec_to_matrix(frame.pose.r);  // body rotation, Jacobian anchor
    const Eigen::Matrix3d Jr = so3_right_jacobian(frame.pose.r.r);
    const bool has_pose_cov = frame.pose_cov.cwiseAbs().maxCoeff() > 0.0;

    std::vector<WarpSlot> slots(npx);
    std::vector<const double*> feat_rows(npx), fvar_rows(npx);

    parallel_for(npx, [&](int64_t lo, int64_t hi) {
        for (int64_t p = lo; p < hi; ++p) {
            int v = static_cast<int>(p / w), u = static_cast<int>(p % w);
            feat_rows[p] = n > 0 ? frame.features.px(v, u).data() : nullptr;
            fvar_rows[p] = n > 0 ? frame.var.px(v, u).data() + 1 : nullptr;
            double d = frame.depth(v, u, 0);
            double vd = frame.var(v, u, 0);
            if (d <= 0.0 || vd >= prior_var) continue;  // invalid or uninformative

            Eigen::Vector3d ray((u - in.cx) / in.fx, (v - in.cy) / in.fy, 1.0);
            Eigen::Vector3d X = cam_to_agent.apply(ray * d);
            double dt = X.norm();
            if (dt < kMinDepth) continue;

            WarpSlot& slot = slots[p];
            double cz = std::clamp(X.z() / dt, -1.0, 1.0);
            slot.phi = std::acos(cz);
            slot.theta = std::atan2(X.y(), X.x());
            if (slot.theta >= kPi) slot.theta -= 2.0 * kPi;
            slot.depth = dt;
            slot.pix_x = theta_to_pix(slot.theta, k_ppr);
            slot.pix_y = phi_to_pix(slot.phi, k_ppr);

            Eigen::Vector3d Xhat = X / dt;
            DepthJacobian jac;
            jac.j_d = Xhat.dot(cam_to_agent.R * ray);
            if (has_pose_cov) {
                Eigen::Vector3d s = A * (ray * d);  // point in body axes
                jac.g_p.head<3>() = Xhat;
                Eigen::Matrix3d sx;
                sx << 0, -s.z(), s.y(), s.z(), 0, -s.x(), -s.y(), s.x(), 0;
                jac.g_p.tail<3>() = -(Xhat.transpose() * Rb * sx * Jr).transpose();
                slot.var_d = propagate_depth_variance(jac, vd, frame.pose_cov);
            } else {
                double pv = jac.j_d * jac.j_d * vd;
                slot.var_d = pv > kMinVar ? pv : kMinVar;
            }
            slot.ok = 1;
        }
    });
    return pack(slots, n, feat_rows, fvar_rows);
}

ScatteredPoints warp_polar_points(const ScatteredPoints& pts, const Transform& motion,
                                  const Mat6& pose_cov, double k_ppr) {
    const int64_t m = static_cast<int64_t>(pts.size());
    const int n = pts.n;
    const Eigen::Matrix3d Rt = motion.R.transpose();
    const bool has_pose_cov = pose_cov.cwiseAbs().maxCoeff() > 0.0;

    std::vector<WarpSlot> slots(m);
    std::vector<const double*> feat_rows(m), fvar_rows(m);

    parallel_for(m, [&](int64_t lo, int64_t hi) {
        for (int64_t p = lo; p < hi; ++p) {
            feat_rows[p] = n > 0 ? pts.feat.data() + p * n : nullptr;
            fvar_rows[p] = n > 0 ? pts.var.data() + p * (1 + n) + 1 : nullptr;

            double sp = std::sin(pts.phi[p]);
            Eigen::Vector3d dir(sp * std::cos(pts.theta[p]), sp * std::sin(pts.theta[p]),
                                std::cos(pts.phi[p]));
            Eigen::Vector3d Y = dir * pts.depth[p] - motion.t;  // old frame
            Eigen::Vector3d X = Rt * Y;                         // new frame
            double dt = X.norm();
            if (dt < kMinDepth) continue;

            WarpSlot& slot = slots[p];
            double cz = std::clamp(X.z() / dt, -1.0, 1.0);
            slot.phi = std::acos(cz);
            slot.theta = std::atan2(X.y(), X.x());
            if (slot.theta >= kPi) slot.theta -= 2.0 * kPi;
            slot.depth = dt;
            slot.pix_x = theta_to_pix(slot.theta, k_ppr);
            slot.pix_y = phi_to_pix(slot.phi, k_ppr);

            double dvar = pts.var[p * (1 + n)];
            Eigen::Vector3d Yhat = Y / dt;  // |Y| = |X|
            double jd = Yhat.dot(dir);
            double pv = jd * jd * dvar;
            if (has_pose_cov) {
                DepthJacobian jac;
                jac.j_d = jd;
                jac.g_p.head<3>() = -Yhat;
                pv = propagate_depth_variance(jac, dvar, pose_cov);
            }
            slot.var_d = pv > kMinVar ? pv : kMinVar;
            slot.ok = 1;
        }
    });

    ScatteredPoints out = pack(slots, n, feat_rows, fvar_rows);
    // keep original source identities for tie-breaking
    for (size_t k = 0; k < out.src_index.size(); ++k)
        out.src_index[k] = pts.src_index[out.src_index[k]];
    return out;
}

ScatteredPoints extract_state_points(const EgosphereState& state, double prior_var) {
    const int h = state.h(), w = state.w(), n = state.n;
    ScatteredPoints out;
    out.n = n;
    out.reserve(static_cast<size_t>(h) * w);
    for (int i = 0; i < h; ++i) {
        for (int j = 0; j < w; ++j) {
            double vd = state.var(i, j, 0);
            double d = state.mean(i, j, 2);
            if (vd >= prior_var || d <= kMinDepth) continue;
            out.phi.push_back(state.mean(i, j, 0));
            out.theta.push_back(state.mean(i, j, 1));
            out.depth.push_back(d);
            out.pix_x.push_back(static_cast<double>(j));
            out.pix_y.push_back(static_cast<double>(i));
            for (int k = 0; k < 1 + n; ++k) out.var.push_back(state.var(i, j, k));
            for (int k = 0; k < n; ++k) out.feat.push_back(state.mean(i, j, 3 + k));
            out.src_index.push_back(static_cast<int64_t>(i) * w + j);
        }
    }
    return out;
}

ScatteredPoints warp_omni(const EgosphereState& state, const Transform& motion,
                          const Mat6& pose_cov, double prior_var) {
    return warp_polar_points(extract_state_points(state, prior_var), motion, pose_cov,
                             pixels_per_radian(state.h()));
}

}  // namespace esm
