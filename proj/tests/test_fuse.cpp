#include <doctest.h>

#include <random>

#include "esm/fuse.hpp"
#include "esm/scene.hpp"
#include "oracles.hpp"

using namespace esm;

namespace {

EsmConfig cfg_90(int n = 1) {
    EsmConfig cfg;
    cfg.h_s = 90;
    cfg.w_s = 180;
    cfg.n = n;
    return cfg;
}

// one hand-placed point
void push_point(ScatteredPoints& pts, const EsmConfig& cfg, double pix_x, double pix_y, double d,
                double var_d, int64_t src, double feat = 0.5, double feat_var = 0.01) {
    double phi = (pix_y + 0.5) / cfg.k_ppr();
    double theta = (pix_x + 0.5) / cfg.k_ppr() - kPi;
    pts.n = cfg.n;
    pts.phi.push_back(phi);
    pts.theta.push_back(theta);
    pts.depth.push_back(d);
    pts.pix_x.push_back(pix_x);
    pts.pix_y.push_back(pix_y);
    pts.var.push_back(var_d);
    for (int k = 0; k < cfg.n; ++k) pts.var.push_back(feat_var);
    for (int k = 0; k < cfg.n; ++k) pts.feat.push_back(feat);
    pts.src_index.push_back(src);
}

}  // namespace

TEST_CASE("quantize_scatter: exact pixel center, zero rounding distance") {
    EsmConfig cfg = cfg_90();
    ScatteredPoints pts;
    push_point(pts, cfg, 40.0, 30.0, 2.0, 0.1, 0);
    Observation obs = quantize_scatter(pts, cfg);
    CHECK(obs.hit[30 * 180 + 40] == 1);
    CHECK(obs.mean(30, 40, 2) == 2.0);
    CHECK(obs.dpc(30, 40, 0) == 0.0);
    CHECK(obs.dpc(30, 40, 1) == 0.0);
    int hits = 0;
    for (auto h : obs.hit) hits += h;
    CHECK(hits == 1);
}

TEST_CASE("quantize_scatter: certain duplicates resolve to the closest depth") {
    EsmConfig cfg = cfg_90();
    ScatteredPoints pts;
    push_point(pts, cfg, 40.2, 30.1, 2.0, 0.1, 0, 0.2);
    push_point(pts, cfg, 39.8, 29.9, 5.0, 0.1, 1, 0.8);
    Observation obs = quantize_scatter(pts, cfg);
    CHECK(obs.mean(30, 40, 2) == 2.0);
    CHECK(obs.mean(30, 40, 3) == 0.2);
    CHECK(obs.dpc(30, 40, 0) == doctest::Approx(0.2));
    CHECK(obs.dpc(30, 40, 1) == doctest::Approx(0.1));
}

TEST_CASE("quantize_scatter: uncertain close depth loses to certain far depth") {
    EsmConfig cfg = cfg_90();
    ScatteredPoints pts;
    push_point(pts, cfg, 40.0, 30.0, 2.0, 10.0 * cfg.dup_var_threshold, 0, 0.2);
    push_point(pts, cfg, 40.0, 30.0, 5.0, 0.1, 1, 0.8);
    Observation obs = quantize_scatter(pts, cfg);
    CHECK(obs.mean(30, 40, 2) == 5.0);
    CHECK(obs.var(30, 40, 0) == 0.1);
}

TEST_CASE("quantize_scatter: no qualifying candidate keeps the most certain") {
    EsmConfig cfg = cfg_90();
    ScatteredPoints pts;
    push_point(pts, cfg, 40.0, 30.0, 2.0, 8.0, 0);
    push_point(pts, cfg, 40.0, 30.0, 5.0, 3.0, 1);
    Observation obs = quantize_scatter(pts, cfg);
    CHECK(obs.mean(30, 40, 2) == 5.0);  // lower variance wins
    CHECK(obs.var(30, 40, 0) == 3.0);
}

TEST_CASE("quantize_scatter: exact ties break to the lowest source index") {
    EsmConfig cfg = cfg_90();
    ScatteredPoints pts;
    push_point(pts, cfg, 40.0, 30.0, 2.0, 0.1, 7, 0.7);
    push_point(pts, cfg, 40.0, 30.0, 2.0, 0.1, 3, 0.3);
    Observation obs = quantize_scatter(pts, cfg);
    CHECK(obs.mean(30, 40, 3) == 0.3);
}

TEST_CASE("quantize_scatter wraps the azimuth seam") {
    EsmConfig cfg = cfg_90();
    ScatteredPoints pts;
    // pix_x just past the last column rounds to w and wraps to column 0
    push_point(pts, cfg, 179.6, 30.0, 2.0, 0.1, 0);
    Observation obs = quantize_scatter(pts, cfg);
    CHECK(obs.hit[30 * 180 + 0] == 1);
    CHECK(obs.dpc(30, 0, 0) == doctest::Approx(0.4));
}

TEST_CASE("quantize_scatter: a point at sentinel variance cannot claim a hit") {
    EsmConfig cfg = cfg_90();
    ScatteredPoints pts;
    // variance blown past the prior (e.g. by a huge pose covariance)
    push_point(pts, cfg, 40.0, 30.0, 2.0, cfg.prior_var, 0);
    Observation obs = quantize_scatter(pts, cfg);
    CHECK(obs.hit[30 * 180 + 40] == 0);
    CHECK(obs.var(30, 40, 0) == cfg.prior_var);
}

TEST_CASE("quantize_scatter: non-hit pixels sit at the prior sentinel") {
    EsmConfig cfg = cfg_90();
    ScatteredPoints pts;
    pts.n = cfg.n;
    Observation obs = quantize_scatter(pts, cfg);
    for (int i = 0; i < cfg.h_s; ++i)
        for (int j = 0; j < cfg.w_s; ++j) {
            CHECK(obs.var(i, j, 0) == cfg.prior_var);
            CHECK(obs.mean(i, j, 2) == cfg.prior_depth);
        }
}

TEST_CASE("fuse_pixel: symmetric average within the gate") {
    EsmConfig cfg = cfg_90(0);
    double pm[1] = {2.0}, pv[1] = {0.1}, om[1] = {2.02}, ov[1] = {0.1};
    double post_m[1], post_v[1];
    FuseBranch br = fuse_pixel(pm, pv, om, ov, cfg, post_m, post_v);
    CHECK(br == FuseBranch::kFilter);
    CHECK(post_m[0] == doctest::Approx(2.01));
    CHECK(post_v[0] == doctest::Approx(0.05));
}

TEST_CASE("fuse_pixel: prior-variance observation is uninformative") {
    EsmConfig cfg = cfg_90(0);
    double pm[1] = {5.0}, pv[1] = {0.01};
    double om[1] = {5.1}, ov[1] = {cfg.prior_var};  // within gate, sentinel variance
    double post_m[1], post_v[1];
    fuse_pixel(pm, pv, om, ov, cfg, post_m, post_v);
    CHECK(post_m[0] == doctest::Approx(5.0).epsilon(1e-5));
    CHECK(post_v[0] == doctest::Approx(0.01).epsilon(1e-5));
}

TEST_CASE("fuse_pixel: out-of-gate replacement acts as a depth buffer") {
    EsmConfig cfg = cfg_90(1);
    double pm[2] = {5.0, 0.9}, pv[2] = {0.1, 0.1};
    double om[2] = {2.0, 0.1}, ov[2] = {0.1, 0.2};
    double post_m[2], post_v[2];
    FuseBranch br = fuse_pixel(pm, pv, om, ov, cfg, post_m, post_v);
    CHECK(br == FuseBranch::kTakeObservation);
    CHECK(post_m[0] == 2.0);  // wholesale, all channels
    CHECK(post_m[1] == 0.1);
    CHECK(post_v[0] == 0.1);
    CHECK(post_v[1] == 0.2);
}

TEST_CASE("fuse_pixel: out-of-gate with uncertain closer branch keeps the certain far one") {
    EsmConfig cfg = cfg_90(0);
    double pm[1] = {5.0}, pv[1] = {0.1};
    double om[1] = {2.0}, ov[1] = {10.0};  // closer but unqualified
    double post_m[1], post_v[1];
    FuseBranch br = fuse_pixel(pm, pv, om, ov, cfg, post_m, post_v);
    CHECK(br == FuseBranch::kTakePrior);
    CHECK(post_m[0] == 5.0);
}

TEST_CASE("fuse_pixel: neither qualified falls back to the lower variance") {
    EsmConfig cfg = cfg_90(0);
    double pm[1] = {5.0}, pv[1] = {7.0};
    double om[1] = {2.0}, ov[1] = {4.0};
    double post_m[1], post_v[1];
    FuseBranch br = fuse_pixel(pm, pv, om, ov, cfg, post_m, post_v);
    CHECK(br == FuseBranch::kTakeObservation);
    CHECK(post_v[0] == 4.0);
}

TEST_CASE("fuse_pixel gain stays in [0,1] and contracts variance on the filter branch") {
    std::mt19937_64 rng(31);
    std::uniform_real_distribution<double> var_d(1e-4, 10.0);
    std::uniform_real_distribution<double> depth_d(1.0, 2.0);
    EsmConfig cfg = cfg_90(0);
    cfg.rel_depth_threshold = 0.9;
    for (int k = 0; k < 500; ++k) {
        double pm[1] = {depth_d(rng)}, pv[1] = {var_d(rng)};
        double om[1] = {depth_d(rng)}, ov[1] = {var_d(rng)};
        double post_m[1], post_v[1];
        FuseBranch br = fuse_pixel(pm, pv, om, ov, cfg, post_m, post_v);
        if (br != FuseBranch::kFilter) continue;
        CHECK(post_v[0] <= std::min(pv[0], ov[0]) + 1e-15);
        CHECK(post_v[0] > 0);
        CHECK(post_m[0] >= std::min(pm[0], om[0]) - 1e-15);
        CHECK(post_m[0] <= std::max(pm[0], om[0]) + 1e-15);
    }
}

TEST_CASE("smooth: constant image is a fixed point") {
    Image mean(8, 16, 3, 2.5);
    Image var(8, 16, 1, 0.1);
    Image out = smooth(mean, var, 3);
    for (double v : out.data()) CHECK(v == doctest::Approx(2.5).epsilon(1e-14));
}

TEST_CASE("smooth: a prior-variance hole fills from its neighbors") {
    EsmConfig cfg = cfg_90(0);
    Image mean(9, 18, 3, 0.0);
    Image var(9, 18, 1, cfg.prior_var);
    for (int di = -1; di <= 1; ++di)
        for (int dj = -1; dj <= 1; ++dj)
            if (di != 0 || dj != 0) {
                mean(4 + di, 9 + dj, 2) = 4.0;
                var(4 + di, 9 + dj, 0) = 0.01;
            }
    Image out = smooth(mean, var, 3);
    // direct patch-formula evaluation: 8 neighbors at weight 100, hole at 1e-4
    double expect = (8 * 100.0 * 4.0) / (8 * 100.0 + 1e-4);
    CHECK(out(4, 9, 2) == doctest::Approx(expect).epsilon(1e-12));
    CHECK(out(4, 9, 2) == doctest::Approx(4.0).epsilon(1e-5));
    CHECK(var(4, 9, 0) == cfg.prior_var);  // variance image untouched
}

TEST_CASE("smooth equals the brute-force double loop bitwise") {
    std::mt19937_64 rng(32);
    std::uniform_real_distribution<double> val(0.0, 8.0);
    std::uniform_real_distribution<double> var_d(1e-4, 1e4);
    for (int trial = 0; trial < 5; ++trial) {
        Image mean(45, 90, 4, 0.0);
        Image var(45, 90, 2, 1.0);
        for (size_t k = 0; k < mean.size(); ++k) mean.data()[k] = val(rng);
        for (size_t k = 0; k < var.size(); ++k) var.data()[k] = var_d(rng);
        Image fast = smooth(mean, var, 3);
        Image slow = oracle::brute_force_smooth(mean, var, 3);
        CHECK(fast.data() == slow.data());
    }
}

TEST_CASE("smoothed values stay inside their neighborhood hull") {
    std::mt19937_64 rng(33);
    std::uniform_real_distribution<double> val(0.0, 8.0);
    std::uniform_real_distribution<double> var_d(1e-4, 10.0);
    Image mean(16, 32, 3, 0.0);
    Image var(16, 32, 1, 1.0);
    for (size_t k = 0; k < mean.size(); ++k) mean.data()[k] = val(rng);
    for (size_t k = 0; k < var.size(); ++k) var.data()[k] = var_d(rng);
    Image out = smooth(mean, var, 3);
    for (int i = 0; i < 16; ++i) {
        for (int j = 0; j < 32; ++j) {
            double lo = 1e300, hi = -1e300;
            for (int di = -1; di <= 1; ++di)
                for (int dj = -1; dj <= 1; ++dj) {
                    int ii = std::clamp(i + di, 0, 15);
                    int jj = (j + dj + 32) % 32;
                    lo = std::min(lo, mean(ii, jj, 2));
                    hi = std::max(hi, mean(ii, jj, 2));
                }
            CHECK(out(i, j, 2) >= lo - 1e-12);
            CHECK(out(i, j, 2) <= hi + 1e-12);
        }
    }
}

TEST_CASE("quantization_noise: flat image and exact landings change nothing") {
    Image mean(8, 16, 3, 3.0);
    Image var(8, 16, 1, 0.1);
    Image dpc(8, 16, 2, 0.3);
    Image var_before = var;
    quantization_noise(mean, var, dpc);  // constant image, zero gradient
    CHECK(var.data() == var_before.data());

    std::mt19937_64 rng(34);
    std::uniform_real_distribution<double> val(0.0, 8.0);
    for (size_t k = 0; k < mean.size(); ++k) mean.data()[k] = val(rng);
    Image dpc0(8, 16, 2, 0.0);  // exact landings
    quantization_noise(mean, var, dpc0);
    CHECK(var.data() == var_before.data());
}

TEST_CASE("quantization_noise: azimuth ramp adds gradient times rounding distance") {
    Image mean(8, 16, 3, 0.0);
    for (int i = 0; i < 8; ++i)
        for (int j = 0; j < 16; ++j) mean(i, j, 2) = 0.1 * j;  // 0.1 m per pixel in theta
    Image var(8, 16, 1, 0.2);
    Image dpc(8, 16, 2, 0.0);
    dpc(4, 8, 0) = 0.5;
    quantization_noise(mean, var, dpc);
    CHECK(var(4, 8, 0) == doctest::Approx(0.2 + 0.1 * 0.5));
    CHECK(var(4, 7, 0) == 0.2);
}

TEST_CASE("variance never decreases through smooth plus quantization noise") {
    std::mt19937_64 rng(35);
    std::uniform_real_distribution<double> val(0.5, 8.0);
    std::uniform_real_distribution<double> var_d(1e-4, 10.0);
    std::uniform_real_distribution<double> dpc_d(0.0, 0.5);
    Image mean(16, 32, 3, 0.0);
    Image var(16, 32, 1, 1.0);
    Image dpc(16, 32, 2, 0.0);
    for (size_t k = 0; k < mean.size(); ++k) mean.data()[k] = val(rng);
    for (size_t k = 0; k < var.size(); ++k) var.data()[k] = var_d(rng);
    for (size_t k = 0; k < dpc.data().size(); ++k) dpc.data()[k] = dpc_d(rng);
    Image var_before = var;
    Image smoothed = smooth(mean, var, 3);
    quantization_noise(smoothed, var, dpc);
    for (size_t k = 0; k < var.size(); ++k) CHECK(var.data()[k] >= var_before.data()[k]);
}

TEST_CASE("esm_step: identity step leaves a constant-depth belief untouched") {
    EsmConfig cfg = cfg_90(2);
    EgosphereState s = new_state(cfg);
    for (int i = 0; i < cfg.h_s; ++i)
        for (int j = 0; j < cfg.w_s; ++j) {
            s.mean(i, j, 2) = 5.0;
            s.mean(i, j, 3) = 0.25;
            s.mean(i, j, 4) = 0.75;
            s.var(i, j, 0) = 0.01;
            s.var(i, j, 1) = 0.02;
            s.var(i, j, 2) = 0.03;
        }
    EgosphereState out = esm_step(s, PoseIncrement{}, {}, cfg);
    CHECK(out.frame_id == s.frame_id + 1);
    for (int i = 0; i < cfg.h_s; ++i) {
        for (int j = 0; j < cfg.w_s; ++j) {
            CHECK(out.mean(i, j, 0) == s.mean(i, j, 0));  // angles exact
            CHECK(out.mean(i, j, 1) == s.mean(i, j, 1));
            for (int k = 2; k < 5; ++k) CHECK(std::abs(out.mean(i, j, k) - s.mean(i, j, k)) < 1e-9);
            for (int k = 0; k < 3; ++k) CHECK(std::abs(out.var(i, j, k) - s.var(i, j, k)) < 1e-9);
        }
    }
}

TEST_CASE("esm_step: repeated stationary observation contracts variance like a scalar filter") {
    EsmConfig cfg = cfg_90(3);
    // constant-range enclosure so smoothing and quantization noise stay silent
    SyntheticScene scene;
    scene.primitives.push_back(Primitive::sphere({0, 0, 0}, 3.0, {0.4, 0.5, 0.6}));

    const double noise_var = 1e-2;  // declared sensor variance
    Intrinsics intr = Intrinsics::from_fov(24, 24, 20.0);
    EgosphereState state = new_state(cfg);
    for (int step = 1; step <= 10; ++step) {
        RenderOptions ro;
        ProjectiveFrame frame = render_projective(scene, Pose6{}, intr, ro, cfg.prior_var);
        for (int v = 0; v < intr.height; ++v)
            for (int u = 0; u < intr.width; ++u) frame.var(v, u, 0) = noise_var;
        state = esm_step(state, PoseIncrement{}, {frame}, cfg);

        double expect = 1.0 / (1.0 / cfg.prior_var + step / noise_var);
        int checked = 0;
        for (int i = 0; i < cfg.h_s; ++i)
            for (int j = 0; j < cfg.w_s; ++j)
                if (state.var(i, j, 0) < 1.0) {
                    CHECK(state.var(i, j, 0) == doctest::Approx(expect).epsilon(0.10));
                    ++checked;
                }
        CHECK(checked > 20);
    }
}

TEST_CASE("esm_step: holes fill visually but keep the prior variance") {
    EsmConfig cfg = cfg_90(1);
    SyntheticScene scene;
    scene.primitives.push_back(Primitive::sphere({0, 0, 0}, 3.0, {0.8, 0.8, 0.8}));
    // a narrow camera hits a small patch of ego pixels; everything around
    // the observed cone is a hole
    Intrinsics intr = Intrinsics::from_fov(16, 16, 30.0);
    RenderOptions ro;
    ProjectiveFrame full = render_projective(scene, Pose6{}, intr, ro, cfg.prior_var);
    ProjectiveFrame frame;
    frame.intrinsics = intr;
    frame.depth = full.depth;
    frame.features = Image(16, 16, 1, 0.8);
    frame.var = Image(16, 16, 2, 1e-6);
    EgosphereState state = esm_step(new_state(cfg), PoseIncrement{}, {frame}, cfg);

    int filled_holes = 0, informative = 0;
    for (int i = 0; i < cfg.h_s; ++i) {
        for (int j = 0; j < cfg.w_s; ++j) {
            if (state.var(i, j, 0) < cfg.prior_var) {
                ++informative;
                CHECK(state.mean(i, j, 2) == doctest::Approx(3.0).epsilon(1e-9));
                continue;
            }
            // holes bordering the cone acquire a visual value near the wall
            if (state.mean(i, j, 2) > 2.5) {
                ++filled_holes;
                CHECK(state.var(i, j, 0) == cfg.prior_var);
            }
        }
    }
    CHECK(informative > 20);
    CHECK(filled_holes > 0);
}

TEST_CASE("esm_step rejects mismatched feature channels") {
    EsmConfig cfg = cfg_90(2);
    EgosphereState s = new_state(cfg);
    std::mt19937_64 rng(36);
    ProjectiveFrame f = oracle::random_frame(rng, 4, 4, 3, cfg.prior_var);  // n=3 vs state n=2
    CHECK_THROWS_AS(esm_step(s, PoseIncrement{}, {f}, cfg), input_error);
}

TEST_CASE("esm_step output always satisfies the state invariants") {
    std::mt19937_64 rng(37);
    EsmConfig cfg = cfg_90(2);
    SphereGrid grid = sphere_grid(cfg.h_s, cfg.w_s);
    EgosphereState state = new_state(cfg);
    for (int step = 0; step < 4; ++step) {
        ProjectiveFrame f = oracle::random_frame(rng, 8, 8, 2, cfg.prior_var);
        f.pose = oracle::random_pose(rng, 0.5, 1.0);
        f.pose_cov = Mat6::Identity() * 1e-6;
        PoseIncrement inc;
        inc.u = oracle::random_pose(rng, 0.2, 0.5);
        inc.cov = Mat6::Identity() * 1e-6;
        state = esm_step(state, inc, {f}, cfg);
        for (int i = 0; i < cfg.h_s; ++i) {
            for (int j = 0; j < cfg.w_s; ++j) {
                CHECK(state.mean(i, j, 0) == grid.angles(i, j, 0));
                CHECK(state.mean(i, j, 1) == grid.angles(i, j, 1));
                for (int k = 0; k < 3; ++k) {
                    CHECK(state.var(i, j, k) > 0);
                    CHECK(std::isfinite(state.var(i, j, k)));
                }
                CHECK(std::isfinite(state.mean(i, j, 2)));
                CHECK(state.mean(i, j, 2) >= 0);
            }
        }
    }
}

TEST_CASE("esm_step accepts several sensors in one observation") {
    EsmConfig cfg = cfg_90(3);
    SyntheticScene scene;
    scene.primitives.push_back(Primitive::sphere({0, 0, 0}, 4.0, {0.2, 0.6, 0.9}));
    Intrinsics intr = Intrinsics::from_fov(16, 16, 60.0);
    RenderOptions ro;

    ProjectiveFrame fwd = render_projective(scene, Pose6{}, intr, ro, cfg.prior_var);
    Pose6 back_pose({0, 0, 0}, RotVec(0, 0, kPi));
    ProjectiveFrame back = render_projective(scene, back_pose, intr, ro, cfg.prior_var);
    back.pose = back_pose;

    EgosphereState state = new_state(cfg);
    state = esm_step(state, PoseIncrement{}, {fwd, back}, cfg);
    int hits_fwd = 0, hits_back = 0;
    for (int i = 0; i < cfg.h_s; ++i)
        for (int j = 0; j < cfg.w_s; ++j)
            if (state.var(i, j, 0) < 1.0) {
                if (std::abs(state.mean(i, j, 1)) < kPi / 4) ++hits_fwd;
                if (std::abs(state.mean(i, j, 1)) > 3 * kPi / 4) ++hits_back;
            }
    CHECK(hits_fwd > 10);
    CHECK(hits_back > 10);
}
