#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "esm/fuse.hpp"
#include "esm/io.hpp"
#include "esm/scene.hpp"

namespace esm {

struct ReplayOptions {
    std::optional<int> mem_h;  // override the manifest's ego-sphere height
    int frame_skip = 1;
    bool write_ply = false;
    double preview_depth_max = 10.0;
};

struct ReplayReport {
    int steps = 0;
    double total_seconds = 0.0;
    double fps = 0.0;
    std::vector<double> step_ms;
    uint64_t final_checksum = 0;
    EgosphereState final_state;
};

/// Run the filter over a sequence directory, writing per-step mean/var
/// tensors, previews, the final combined state and a run report.
ReplayReport replay(const std::filesystem::path& seq_dir, const std::filesystem::path& out_dir,
                    const ReplayOptions& opts);

struct SynthOptions {
    TrajKind traj = TrajKind::kSpin;
    TrajectoryParams params;
    Intrinsics intrinsics;          // default: 64x64, 90 deg FOV
    double depth_noise_std = 0.0;
    double pose_noise_std = 0.0;
    double var_floor = 1e-6;
    EsmConfig cfg;

    SynthOptions() { intrinsics = Intrinsics::from_fov(64, 64, 90.0); }
};

/// Render a scene along a trajectory into an on-disk sequence.
void synth(const SyntheticScene& scene, const std::filesystem::path& out_dir,
           const SynthOptions& opts);

struct Resolution {
    int h = 0, w = 0;
};

struct BenchCell {
    Resolution mono, mem;
    int steps = 0;
    double fps = 0.0;
    double ref_fps = 0.0;  // published CPU reference for this grid cell, 0 if none
    uint64_t checksum = 0;
    bool oom = false;
};

struct BenchOptions {
    std::vector<Resolution> mono_list;  // empty = full reference grid
    std::vector<Resolution> mem_list;
    int steps = 3;
    uint64_t seed = 1;
};

// Reference grid axes and the published CPU throughput table they map to.
std::vector<Resolution> default_mono_resolutions();
std::vector<Resolution> default_mem_resolutions();
double reference_cpu_fps(const Resolution& mono, const Resolution& mem);

std::vector<BenchCell> bench(const BenchOptions& opts);
void write_bench_csv(const std::filesystem::path& path, const std::vector<BenchCell>& cells);
std::string bench_table(const std::vector<BenchCell>& cells);

Resolution parse_resolution(const std::string& text);  // "HxW"

}  // namespace esm
