#include "esm/state.hpp"

#include <cmath>

namespace esm {

void EsmConfig::validate() const {
    if (h_s <= 0 || w_s != 2 * h_s) throw input_error("config: non-uniform angular resolution");
    if (n < 0) throw input_error("config: negative feature channel count");
    if (!(prior_var > dup_var_threshold) || !(dup_var_threshold > 0))
        throw input_error("config: need prior_var > dup_var_threshold > 0");
    if (!(rel_depth_threshold > 0 && rel_depth_threshold < 1))
        throw input_error("config: rel_depth_threshold outside (0, 1)");
    if (smooth_patch < 1 || smooth_patch % 2 == 0)
        throw input_error("config: smooth_patch must be odd and >= 1");
    if (!(prior_depth >= 0) || !std::isfinite(prior_depth))
        throw input_error("config: prior_depth must be finite and >= 0");
}

EgosphereState new_state(const EsmConfig& cfg) {
    cfg.validate();
    EgosphereState s;
    s.n = cfg.n;
    s.frame_id = 0;
    s.mean = Image(cfg.h_s, cfg.w_s, 2 + 1 + cfg.n);
    s.var = Image(cfg.h_s, cfg.w_s, 1 + cfg.n, cfg.prior_var);
    SphereGrid grid = sphere_grid(cfg.h_s, cfg.w_s);
    for (int i = 0; i < cfg.h_s; ++i) {
        for (int j = 0; j < cfg.w_s; ++j) {
            s.mean(i, j, 0) = grid.angles(i, j, 0);
            s.mean(i, j, 1) = grid.angles(i, j, 1);
            s.mean(i, j, 2) = cfg.prior_depth;
        }
    }
    return s;
}

void ProjectiveFrame::validate(double prior_var) const {
    intrinsics.validate();
    int h = intrinsics.height, w = intrinsics.width;
    if (depth.h() != h || depth.w() != w || depth.c() != 1)
        throw input_error("frame: depth shape mismatch");
    if (features.h() != h || features.w() != w)
        throw input_error("frame: feature shape mismatch");
    if (var.h() != h || var.w() != w || var.c() != 1 + features.c())
        throw input_error("frame: variance shape mismatch");
    if (((pose_cov - pose_cov.transpose()).cwiseAbs().maxCoeff()) > 1e-9)
        throw input_error("frame: pose covariance not symmetric");
    for (int i = 0; i < h; ++i) {
        for (int j = 0; j < w; ++j) {
            double d = depth(i, j, 0);
            if (!(d >= 0) || !std::isfinite(d)) throw input_error("frame: negative or non-finite depth");
            for (int k = 0; k < var.c(); ++k)
                if (!(var(i, j, k) > 0)) throw input_error("frame: non-positive variance");
            // invalid depth must be uninformative
            if (d == 0.0 && var(i, j, 0) < prior_var)
                throw input_error("frame: zero depth with informative variance");
        }
    }
}

ProjectiveFrame apply_mask(const ProjectiveFrame& frame, const std::vector<uint8_t>& mask,
                           double prior_var) {
    size_t npx = static_cast<size_t>(frame.depth.h()) * frame.depth.w();
    if (mask.size() != npx) throw input_error("apply_mask: mask shape mismatch");
    ProjectiveFrame out = frame;
    int w = frame.depth.w();
    for (size_t p = 0; p < npx; ++p) {
        if (!mask[p]) continue;
        int i = static_cast<int>(p) / w, j = static_cast<int>(p) % w;
        for (int k = 0; k < out.var.c(); ++k) out.var(i, j, k) = prior_var;
    }
    return out;
}

}  // namespace esm
