#include "esm/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <new>
#include <random>
#include <sstream>

#include <json.hpp>

namespace esm {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string step_name(int k, const char* suffix) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "step_%05d.%s", k, suffix);
    return buf;
}

PoseIncrement increment_between(const Pose6& prev, const Pose6& cur, double inc_var) {
    PoseIncrement inc;
    inc.u = transform_to_pose(compose(invert(pose_to_transform(prev)), pose_to_transform(cur)));
    if (inc_var > 0) inc.cov = Mat6::Identity() * inc_var;
    return inc;
}

}  // namespace

ReplayReport replay(const fs::path& seq_dir, const fs::path& out_dir, const ReplayOptions& opts) {
    Sequence seq = load_sequence(seq_dir);
    EsmConfig cfg = seq.manifest().cfg;
    if (opts.mem_h) {
        cfg.h_s = *opts.mem_h;
        cfg.w_s = 2 * *opts.mem_h;
    }
    cfg.validate();
    if (opts.frame_skip < 1) throw input_error("replay: frame skip must be >= 1");
    fs::create_directories(out_dir);

    ReplayReport report;
    EgosphereState state = new_state(cfg);
    const auto& poses = seq.poses();
    int prev_used = -1;
    for (int i = 0; i < seq.frame_count(); i += opts.frame_skip) {
        ProjectiveFrame frame = seq.frame(i);
        PoseIncrement inc;
        if (prev_used >= 0)
            inc = increment_between(poses[prev_used], poses[i], seq.manifest().pose_increment_var);
        auto t0 = Clock::now();
        state = esm_step(state, inc, {frame}, cfg);
        report.step_ms.push_back(seconds_since(t0) * 1e3);

        write_tensor(out_dir / step_name(report.steps, "mean.tensor"), state.mean);
        write_tensor(out_dir / step_name(report.steps, "var.tensor"), state.var);
        write_preview_ppm(out_dir / step_name(report.steps, "preview.ppm"), state,
                          opts.preview_depth_max);
        if (opts.write_ply)
            write_pointcloud_ply(out_dir / step_name(report.steps, "ply"), state, cfg.prior_var);
        ++report.steps;
        prev_used = i;
    }

    write_state(out_dir / "final.state.tensor", state, cfg);
    for (double ms : report.step_ms) report.total_seconds += ms * 1e-3;
    report.fps = report.total_seconds > 0 ? report.steps / report.total_seconds : 0.0;
    report.final_checksum = state_checksum(state);
    report.final_state = std::move(state);

    nlohmann::json j;
    j["steps"] = report.steps;
    j["fps"] = report.fps;
    j["total_seconds"] = report.total_seconds;
    j["step_ms"] = report.step_ms;
    j["final_checksum"] = report.final_checksum;
    j["frame_skip"] = opts.frame_skip;
    j["esm_config"] = {{"h_s", cfg.h_s},
                       {"w_s", cfg.w_s},
                       {"n", cfg.n},
                       {"prior_depth", cfg.prior_depth},
                       {"prior_var", cfg.prior_var},
                       {"dup_var_threshold", cfg.dup_var_threshold},
                       {"rel_depth_threshold", cfg.rel_depth_threshold},
                       {"smooth_patch", cfg.smooth_patch}};
    std::ofstream rep(out_dir / "report.json");
    if (!rep) throw input_error("replay: cannot write report");
    rep << j.dump(2) << "\n";
    return report;
}

void synth(const SyntheticScene& scene, const fs::path& out_dir, const SynthOptions& opts) {
    scene.validate();
    opts.cfg.validate();
    opts.intrinsics.validate();
    Trajectory traj = make_trajectory(opts.traj, opts.params);
    fs::create_directories(out_dir);

    SequenceManifest m;
    m.frame_count = static_cast<int>(traj.poses.size());
    m.n = 3;
    m.intrinsics = opts.intrinsics;
    m.camera_offset = traj.camera_offset;
    m.default_depth_var = std::max(opts.depth_noise_std * opts.depth_noise_std, opts.var_floor);
    m.default_feature_var = opts.var_floor;
    m.pose_increment_var = 2.0 * opts.pose_noise_std * opts.pose_noise_std;
    m.seed = opts.params.seed;
    m.cfg = opts.cfg;
    m.cfg.n = 3;

    std::vector<std::pair<int64_t, Pose6>> measured;
    std::mt19937_64 rng(opts.params.seed ^ 0xd1b54a32d192ed03ull);
    std::normal_distribution<double> gauss(0.0, opts.pose_noise_std);
    for (int k = 0; k < m.frame_count; ++k) {
        Transform cam_world =
            compose(pose_to_transform(traj.poses[k]), pose_to_transform(traj.camera_offset));
        RenderOptions ro;
        ro.depth_noise_std = opts.depth_noise_std;
        ro.var_floor = opts.var_floor;
        ro.seed = opts.params.seed + static_cast<uint64_t>(k);
        ProjectiveFrame frame =
            render_projective(scene, transform_to_pose(cam_world), opts.intrinsics, ro, m.cfg.prior_var);
        save_frame(out_dir, k, frame);

        Pose6 measured_pose = traj.poses[k];
        if (opts.pose_noise_std > 0) {
            Vec6 v = measured_pose.vec();
            for (int c = 0; c < 6; ++c) v[c] += gauss(rng);
            measured_pose = Pose6::from_vec(v);
        }
        measured.push_back({k, measured_pose});
    }
    write_trajectory(out_dir / "traj.txt", measured);
    write_manifest(out_dir / "manifest.json", m);
    save_scene(out_dir / "scene.json", scene);
}

std::vector<Resolution> default_mono_resolutions() {
    return {{60, 80}, {120, 160}, {240, 320}, {480, 640}, {960, 1280}};
}

std::vector<Resolution> default_mem_resolutions() {
    return {{45, 90}, {90, 180}, {180, 360}, {360, 720}, {720, 1440}, {1440, 2880}};
}

double reference_cpu_fps(const Resolution& mono, const Resolution& mem) {
    static const double table[6][5] = {
        {245.4, 162.6, 83.7, 24.4, 6.3},  // 45x90
        {140.1, 126.5, 70.8, 23.3, 6.1},  // 90x180
        {63.9, 64.0, 47.5, 19.2, 5.8},    // 180x360
        {16.3, 14.3, 14.5, 11.1, 4.7},    // 360x720
        {3.9, 3.7, 3.6, 3.6, 2.7},        // 720x1440
        {1.1, 1.1, 1.0, 1.0, 0.9},        // 1440x2880
    };
    auto monos = default_mono_resolutions();
    auto mems = default_mem_resolutions();
    int ci = -1, ri = -1;
    for (size_t k = 0; k < monos.size(); ++k)
        if (monos[k].h == mono.h && monos[k].w == mono.w) ci = static_cast<int>(k);
    for (size_t k = 0; k < mems.size(); ++k)
        if (mems[k].h == mem.h && mems[k].w == mem.w) ri = static_cast<int>(k);
    return (ci >= 0 && ri >= 0) ? table[ri][ci] : 0.0;
}

std::vector<BenchCell> bench(const BenchOptions& opts) {
    if (opts.steps < 1) throw input_error("bench: need at least one step");
    std::vector<Resolution> monos =
        opts.mono_list.empty() ? default_mono_resolutions() : opts.mono_list;
    std::vector<Resolution> mems = opts.mem_list.empty() ? default_mem_resolutions() : opts.mem_list;
    if (monos.empty() || mems.empty()) throw input_error("bench: empty resolution list");

    SyntheticScene scene = make_demo_scene();
    TrajectoryParams tp;
    tp.steps = opts.steps;
    tp.seed = opts.seed;
    tp.orbit_radius = 1.0;
    Trajectory traj = make_trajectory(TrajKind::kOrbit, tp);

    std::vector<BenchCell> cells;
    for (const Resolution& mono : monos) {
        // frames are independent of the memory resolution; render once
        Intrinsics intr = Intrinsics::from_fov(mono.w, mono.h, 90.0);
        std::vector<ProjectiveFrame> frames;
        frames.reserve(opts.steps);
        for (int k = 0; k < opts.steps; ++k) {
            Transform cam_world = pose_to_transform(traj.poses[k]);
            RenderOptions ro;
            ro.seed = opts.seed + static_cast<uint64_t>(k);
            frames.push_back(
                render_projective(scene, transform_to_pose(cam_world), intr, ro, EsmConfig{}.prior_var));
        }

        for (const Resolution& mem : mems) {
            BenchCell cell;
            cell.mono = mono;
            cell.mem = mem;
            cell.steps = opts.steps;
            cell.ref_fps = reference_cpu_fps(mono, mem);
            try {
                EsmConfig cfg;
                cfg.h_s = mem.h;
                cfg.w_s = mem.w;
                cfg.n = 3;
                EgosphereState state = new_state(cfg);
                auto t0 = Clock::now();
                for (int k = 0; k < opts.steps; ++k) {
                    PoseIncrement inc;
                    if (k > 0) inc = increment_between(traj.poses[k - 1], traj.poses[k], 0.0);
                    state = esm_step(state, inc, {frames[k]}, cfg);
                }
                double dt = seconds_since(t0);
                cell.fps = dt > 0 ? opts.steps / dt : 0.0;
                cell.checksum = state_checksum(state);
            } catch (const std::bad_alloc&) {
                cell.oom = true;  // reported as "-" in the table
            }
            cells.push_back(cell);
        }
    }
    return cells;
}

void write_bench_csv(const fs::path& path, const std::vector<BenchCell>& cells) {
    std::ofstream out(path);
    if (!out) throw input_error("bench: cannot write " + path.string());
    out << "mono_h,mono_w,mem_h,mem_w,steps,fps,ref_cpu_fps,checksum\n";
    out.precision(6);
    for (const auto& c : cells) {
        out << c.mono.h << "," << c.mono.w << "," << c.mem.h << "," << c.mem.w << "," << c.steps
            << ",";
        if (c.oom)
            out << "-";
        else
            out << c.fps;
        out << "," << c.ref_fps << ",";
        if (c.oom)
            out << "-";
        else {
            char buf[20];
            std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(c.checksum));
            out << buf;
        }
        out << "\n";
    }
}

std::string bench_table(const std::vector<BenchCell>& cells) {
    // group axes preserving first-seen order
    std::vector<Resolution> monos, mems;
    auto find = [](std::vector<Resolution>& v, const Resolution& r) {
        for (size_t k = 0; k < v.size(); ++k)
            if (v[k].h == r.h && v[k].w == r.w) return static_cast<int>(k);
        v.push_back(r);
        return static_cast<int>(v.size() - 1);
    };
    for (const auto& c : cells) {
        find(monos, c.mono);
        find(mems, c.mem);
    }
    std::ostringstream os;
    os << "fps, measured (published CPU reference)\n";
    os << std::setw(12) << "mem \\ mono";
    for (const auto& m : monos) os << std::setw(16) << (std::to_string(m.h) + "x" + std::to_string(m.w));
    os << "\n";
    for (const auto& mem : mems) {
        os << std::setw(12) << (std::to_string(mem.h) + "x" + std::to_string(mem.w));
        for (const auto& mono : monos) {
            const BenchCell* cell = nullptr;
            for (const auto& c : cells)
                if (c.mono.h == mono.h && c.mono.w == mono.w && c.mem.h == mem.h && c.mem.w == mem.w)
                    cell = &c;
            std::ostringstream v;
            if (!cell)
                v << "";
            else if (cell->oom)
                v << "-";
            else {
                v.precision(1);
                v << std::fixed << cell->fps;
                if (cell->ref_fps > 0) v << " (" << std::fixed << cell->ref_fps << ")";
            }
            os << std::setw(16) << v.str();
        }
        os << "\n";
    }
    return os.str();
}

Resolution parse_resolution(const std::string& text) {
    Resolution r;
    char sep;
    std::istringstream ls(text);
    if (!(ls >> r.h >> sep >> r.w) || (sep != 'x' && sep != 'X') || r.h <= 0 || r.w <= 0)
        throw input_error("bad resolution (expected HxW): " + text);
    return r;
}

}  // namespace esm
