#pragma once

#include <span>
#include <vector>

#include "esm/core.hpp"
#include "esm/state.hpp"
#include "esm/warp.hpp"

namespace esm {

/// A quantized scatter rendered onto the ego-sphere grid: per-pixel mean
/// and variance in state layout, a hit mask, and the sub-pixel rounding
/// distances (x = azimuth axis, y = polar axis) of each winning point.
/// Non-hit pixels sit at the prior sentinel.
struct Observation {
    Image mean;  // h x w x (2+1+n)
    Image var;   // h x w x (1+n)
    Image dpc;   // h x w x 2, zero where no hit
    std::vector<uint8_t> hit;
    int n = 0;

    int h() const { return mean.h(); }
    int w() const { return mean.w(); }
};

/// Round scattered points to integer pixels (theta seam wraps, phi out of
/// range culled) and resolve duplicates with a variance-conditioned depth
/// buffer: among candidates with depth variance below dup_var_threshold the
/// closest wins; if none qualify the lowest-variance candidate wins; ties
/// fall to the lowest src_index.
Observation quantize_scatter(const ScatteredPoints& pts, const EsmConfig& cfg);

enum class FuseBranch {
    kFilter,           // gated per-channel Kalman update
    kTakePrior,        // prior replaced the pixel wholesale
    kTakeObservation,  // observation replaced the pixel wholesale
};

/// Per-pixel update over (1+n) channels [depth, features...]. Within the
/// relative depth gate each channel fuses independently with scalar gain
/// k = prior/(prior+obs); outside it the closer branch with sufficiently
/// low depth variance replaces the pixel, falling back to the
/// lower-variance branch when neither qualifies.
FuseBranch fuse_pixel(std::span<const double> prior_mean, std::span<const double> prior_var,
                      std::span<const double> obs_mean, std::span<const double> obs_var,
                      const EsmConfig& cfg, std::span<double> post_mean,
                      std::span<double> post_var);

/// Variance-weighted NxN patch mean of depth and feature channels
/// (azimuth wraps, polar rows clamp). Angle channels and the variance
/// image are left untouched, so holes keep prior variance.
Image smooth(const Image& mean, const Image& var, int N);

/// Inflate variances by |G_x| dpc_x + |G_y| dpc_y per channel, where G is
/// the central-difference gradient of the smoothed mean (one-sided at
/// polar edges, wrapped in azimuth). Pixels with zero dpc are unchanged.
void quantization_noise(const Image& smoothed_mean, Image& var, const Image& dpc);

/// One full filter step: motion prediction (omni warp + scatter),
/// observation (projective warps scattered jointly), gated per-pixel
/// fusion, visual hole filling from the patch smoother, quantization-noise
/// inflation. Pixels untouched by both scatters reset to the prior
/// sentinel; holes keep prior variance so the fill never re-enters later
/// projections.
EgosphereState esm_step(const EgosphereState& state, const PoseIncrement& inc,
                        const std::vector<ProjectiveFrame>& frames, const EsmConfig& cfg);

}  // namespace esm
