#include "esm/fuse.hpp"

#include <cmath>
#include <map>
#include <memory>
#include <mutex>

#include "esm/parallel.hpp"

namespace esm {

namespace {

// Grids are deterministic per shape; hot paths share one copy.
const SphereGrid& shared_sphere_grid(int h_s, int w_s) {
    static std::mutex mtx;
    static std::map<std::pair<int, int>, std::unique_ptr<SphereGrid>> cache;
    std::lock_guard<std::mutex> lock(mtx);
    auto& slot = cache[{h_s, w_s}];
    if (!slot) slot = std::make_unique<SphereGrid>(sphere_grid(h_s, w_s));
    return *slot;
}

Observation empty_observation(const EsmConfig& cfg) {
    Observation obs;
    obs.n = cfg.n;
    obs.mean = Image(cfg.h_s, cfg.w_s, 2 + 1 + cfg.n);
    obs.var = Image(cfg.h_s, cfg.w_s, 1 + cfg.n, cfg.prior_var);
    obs.dpc = Image(cfg.h_s, cfg.w_s, 2);
    obs.hit.assign(static_cast<size_t>(cfg.h_s) * cfg.w_s, 0);
    const SphereGrid& grid = shared_sphere_grid(cfg.h_s, cfg.w_s);
    for (int i = 0; i < cfg.h_s; ++i) {
        for (int j = 0; j < cfg.w_s; ++j) {
            obs.mean(i, j, 0) = grid.angles(i, j, 0);
            obs.mean(i, j, 1) = grid.angles(i, j, 1);
            obs.mean(i, j, 2) = cfg.prior_depth;
        }
    }
    return obs;
}

}  // namespace

Observation quantize_scatter(const ScatteredPoints& pts, const EsmConfig& cfg) {
    cfg.validate();
    if (pts.n != cfg.n) throw input_error("quantize: feature channel mismatch");
    Observation obs = empty_observation(cfg);
    const int h = cfg.h_s, w = cfg.w_s, n = cfg.n;
    const double thr = cfg.dup_var_threshold;

    // winner index per pixel, -1 = none
    std::vector<int64_t> win(static_cast<size_t>(h) * w, -1);

    auto better = [&](size_t a, size_t b) {  // total order; true if a beats b
        double va = pts.var[a * (1 + n)], vb = pts.var[b * (1 + n)];
        bool qa = va < thr, qb = vb < thr;
        if (qa != qb) return qa;
        if (qa) {  // both certain enough: closest depth first
            if (pts.depth[a] != pts.depth[b]) return pts.depth[a] < pts.depth[b];
        } else {  // neither qualifies: most certain first
            if (va != vb) return va < vb;
        }
        return pts.src_index[a] < pts.src_index[b];
    };

    const size_t m = pts.size();
    for (size_t p = 0; p < m; ++p) {
        if (pts.phi[p] < 0.0 || pts.phi[p] > kPi) continue;
        if (pts.var[p * (1 + n)] >= cfg.prior_var) continue;  // uninformative, cannot claim a hit
        int64_t i = std::llround(pts.pix_y[p]);
        int64_t j = std::llround(pts.pix_x[p]);
        if (i < 0) i = 0;
        if (i >= h) i = h - 1;  // pole rows absorb the half-pixel overshoot
        j = ((j % w) + w) % w;  // azimuth seam wraps
        size_t cell = static_cast<size_t>(i) * w + j;
        if (win[cell] < 0 || better(p, static_cast<size_t>(win[cell]))) win[cell] = static_cast<int64_t>(p);
    }

    for (int i = 0; i < h; ++i) {
        for (int j = 0; j < w; ++j) {
            size_t cell = static_cast<size_t>(i) * w + j;
            if (win[cell] < 0) continue;
            size_t p = static_cast<size_t>(win[cell]);
            obs.hit[cell] = 1;
            obs.mean(i, j, 2) = pts.depth[p];
            for (int k = 0; k < n; ++k) obs.mean(i, j, 3 + k) = pts.feat[p * n + k];
            for (int k = 0; k < 1 + n; ++k) obs.var(i, j, k) = pts.var[p * (1 + n) + k];
            obs.dpc(i, j, 0) = std::abs(pts.pix_x[p] - std::llround(pts.pix_x[p]));
            obs.dpc(i, j, 1) = std::abs(pts.pix_y[p] - std::llround(pts.pix_y[p]));
        }
    }
    return obs;
}

FuseBranch fuse_pixel(std::span<const double> prior_mean, std::span<const double> prior_var,
                      std::span<const double> obs_mean, std::span<const double> obs_var,
                      const EsmConfig& cfg, std::span<double> post_mean,
                      std::span<double> post_var) {
    const size_t c = prior_mean.size();
    double db = prior_mean[0], dh = obs_mean[0];
    double dmax = std::max(db, dh);
    double rel = dmax > 0.0 ? std::abs(db - dh) / dmax : 0.0;

    if (rel <= cfg.rel_depth_threshold) {
        for (size_t k = 0; k < c; ++k) {
            double g = prior_var[k] / (prior_var[k] + obs_var[k]);
            post_mean[k] = prior_mean[k] + g * (obs_mean[k] - prior_mean[k]);
            post_var[k] = (1.0 - g) * prior_var[k];
        }
        return FuseBranch::kFilter;
    }

    // depth buffer: closer branch wins if certain enough, else more certain
    bool qb = prior_var[0] < cfg.dup_var_threshold;
    bool qh = obs_var[0] < cfg.dup_var_threshold;
    bool take_obs;
    if (qb != qh) {
        take_obs = qh;
    } else if (qb) {
        take_obs = dh < db;
    } else {
        take_obs = obs_var[0] < prior_var[0];
    }
    const auto& mean = take_obs ? obs_mean : prior_mean;
    const auto& var = take_obs ? obs_var : prior_var;
    for (size_t k = 0; k < c; ++k) {
        post_mean[k] = mean[k];
        post_var[k] = var[k];
    }
    return take_obs ? FuseBranch::kTakeObservation : FuseBranch::kTakePrior;
}

Image smooth(const Image& mean, const Image& var, int N) {
    if (N < 1 || N % 2 == 0) throw input_error("smooth: patch size must be odd and >= 1");
    const int h = mean.h(), w = mean.w();
    const int nval = var.c();  // channels carrying variance: depth + features
    const int off = mean.c() - nval;
    const int r = N / 2;
    Image out = mean;
    if (N == 1) return out;

    parallel_for(h, [&](int64_t lo, int64_t hi) {
        for (int i = static_cast<int>(lo); i < hi; ++i) {
            for (int j = 0; j < w; ++j) {
                for (int k = 0; k < nval; ++k) {
                    double num = 0.0, den = 0.0;
                    for (int di = -r; di <= r; ++di) {
                        int ii = std::clamp(i + di, 0, h - 1);
                        for (int dj = -r; dj <= r; ++dj) {
                            int jj = (((j + dj) % w) + w) % w;
                            double wgt = 1.0 / var(ii, jj, k);
                            num += mean(ii, jj, off + k) * wgt;
                            den += wgt;
                        }
                    }
                    out(i, j, off + k) = num / den;
                }
            }
        }
    });
    return out;
}

void quantization_noise(const Image& smoothed_mean, Image& var, const Image& dpc) {
    const int h = var.h(), w = var.w(), nval = var.c();
    const int off = smoothed_mean.c() - nval;
    if (smoothed_mean.h() != h || smoothed_mean.w() != w || dpc.h() != h || dpc.w() != w ||
        dpc.c() != 2)
        throw input_error("quantization_noise: shape mismatch");

    parallel_for(h, [&](int64_t lo, int64_t hi) {
        for (int i = static_cast<int>(lo); i < hi; ++i) {
            for (int j = 0; j < w; ++j) {
                double dx = dpc(i, j, 0), dy = dpc(i, j, 1);
                if (dx == 0.0 && dy == 0.0) continue;
                int jl = (j - 1 + w) % w, jr = (j + 1) % w;
                for (int k = 0; k < nval; ++k) {
                    double gx = 0.5 * (smoothed_mean(i, jr, off + k) - smoothed_mean(i, jl, off + k));
                    double gy;
                    if (i == 0)
                        gy = smoothed_mean(1, j, off + k) - smoothed_mean(0, j, off + k);
                    else if (i == h - 1)
                        gy = smoothed_mean(h - 1, j, off + k) - smoothed_mean(h - 2, j, off + k);
                    else
                        gy = 0.5 * (smoothed_mean(i + 1, j, off + k) - smoothed_mean(i - 1, j, off + k));
                    var(i, j, k) += std::abs(gx) * dx + std::abs(gy) * dy;
                }
            }
        }
    });
}

EgosphereState esm_step(const EgosphereState& state, const PoseIncrement& inc,
                        const std::vector<ProjectiveFrame>& frames, const EsmConfig& cfg) {
    cfg.validate();
    if (state.n != cfg.n || state.h() != cfg.h_s || state.w() != cfg.w_s)
        throw input_error("esm_step: state does not match config");
    for (const auto& f : frames) {
        if (f.n() != cfg.n) throw input_error("esm_step: frame feature channels differ from state");
        f.validate(cfg.prior_var);
    }

    // motion: reproject the previous belief into the new agent frame
    Transform motion = pose_to_transform(inc.u);
    Observation pred = quantize_scatter(warp_omni(state, motion, inc.cov, cfg.prior_var), cfg);

    // observation: all sensors scattered into one joint depth buffer
    ScatteredPoints all;
    all.n = cfg.n;
    int64_t src_offset = 0;
    for (const auto& f : frames) {
        Transform cam_to_agent =
            compose(pose_to_transform(f.pose), Transform{camera_alignment(), Eigen::Vector3d::Zero()});
        all.append(warp_projective(f, cam_to_agent, cfg.k_ppr(), cfg.prior_var), src_offset);
        src_offset += static_cast<int64_t>(f.intrinsics.height) * f.intrinsics.width;
    }
    Observation obs = quantize_scatter(all, cfg);

    // update: gated per-pixel fusion over the observed support
    EgosphereState post;
    post.n = cfg.n;
    post.frame_id = state.frame_id + 1;
    post.mean = pred.mean;  // angle channels already the exact grid
    post.var = pred.var;
    Image dpc(cfg.h_s, cfg.w_s, 2);
    std::vector<uint8_t> hole(pred.hit.size(), 0);

    const int h = cfg.h_s, w = cfg.w_s;
    parallel_for(h, [&](int64_t lo, int64_t hi) {
        for (int i = static_cast<int>(lo); i < hi; ++i) {
            for (int j = 0; j < w; ++j) {
                size_t cell = static_cast<size_t>(i) * w + j;
                bool hp = pred.hit[cell], ho = obs.hit[cell];
                if (!hp && !ho) {  // no information: stays at prior sentinel
                    hole[cell] = 1;
                    continue;
                }
                auto pm = std::span<const double>(pred.mean.px(i, j)).subspan(2);
                auto om = std::span<const double>(obs.mean.px(i, j)).subspan(2);
                auto post_m = post.mean.px(i, j).subspan(2);
                FuseBranch br = fuse_pixel(pm, pred.var.px(i, j), om, obs.var.px(i, j), cfg,
                                           post_m, post.var.px(i, j));
                // rounding distances feeding the noise model: winner's for a
                // replacement, conservative max when both contributed
                double px, py;
                if (br == FuseBranch::kFilter) {
                    px = std::max(pred.dpc(i, j, 0), obs.dpc(i, j, 0));
                    py = std::max(pred.dpc(i, j, 1), obs.dpc(i, j, 1));
                } else if (br == FuseBranch::kTakeObservation) {
                    px = obs.dpc(i, j, 0);
                    py = obs.dpc(i, j, 1);
                } else {
                    px = pred.dpc(i, j, 0);
                    py = pred.dpc(i, j, 1);
                }
                dpc(i, j, 0) = px;
                dpc(i, j, 1) = py;
            }
        }
    });

    // Quantization holes take the patch-smoothed value but keep prior
    // variance, so the fill stays local to this step: the next warp culls
    // them and the belief at observed pixels is never blurred. Values are
    // computed from the pre-fill image so the result is order-independent.
    const int rad = cfg.smooth_patch / 2;
    const int nval = 1 + cfg.n;
    std::vector<size_t> hole_cells;
    for (size_t cell = 0; cell < hole.size(); ++cell)
        if (hole[cell]) hole_cells.push_back(cell);
    std::vector<double> fill(hole_cells.size() * nval);
    parallel_for(static_cast<int64_t>(hole_cells.size()), [&](int64_t lo, int64_t hi) {
        for (int64_t q = lo; q < hi; ++q) {
            int i = static_cast<int>(hole_cells[q] / w), j = static_cast<int>(hole_cells[q] % w);
            for (int k = 0; k < nval; ++k) {
                double num = 0.0, den = 0.0;
                for (int di = -rad; di <= rad; ++di) {
                    int ii = std::clamp(i + di, 0, h - 1);
                    for (int dj = -rad; dj <= rad; ++dj) {
                        int jj = (((j + dj) % w) + w) % w;
                        double wgt = 1.0 / post.var(ii, jj, k);
                        num += post.mean(ii, jj, 2 + k) * wgt;
                        den += wgt;
                    }
                }
                fill[q * nval + k] = num / den;
            }
        }
    });
    for (size_t q = 0; q < hole_cells.size(); ++q) {
        int i = static_cast<int>(hole_cells[q] / w), j = static_cast<int>(hole_cells[q] % w);
        for (int k = 0; k < nval; ++k) post.mean(i, j, 2 + k) = fill[q * nval + k];
    }
    quantization_noise(post.mean, post.var, dpc);
    return post;
}

}  // namespace esm
