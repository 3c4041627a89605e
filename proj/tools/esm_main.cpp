// esm: egospheric spatial memory engine CLI.
//
// Subcommands: replay, synth, bench, avoid, render, traj-convert.
// Exit codes: 0 success, 1 input error, 2 runtime error.

#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "esm/avoid.hpp"
#include "esm/io.hpp"
#include "esm/parallel.hpp"
#include "esm/pipeline.hpp"

namespace {

int run(int argc, char** argv) {
    CLI::App app{"esm - egospheric spatial memory engine"};
    app.require_subcommand(1);

    int threads = 0;
    app.add_option("--threads", threads, "worker threads (0 = auto; env ESM_THREADS also honored)");

    // replay
    auto* replay_cmd = app.add_subcommand("replay", "run the filter over a recorded sequence");
    std::string seq_dir, replay_out, mem_str;
    int frame_skip = 1;
    bool ply = false;
    double preview_depth_max = 10.0;
    replay_cmd->add_option("--seq", seq_dir, "sequence directory")->required();
    replay_cmd->add_option("--mem", mem_str, "ego-sphere resolution HxW (default: manifest)");
    replay_cmd->add_option("--out", replay_out, "output directory")->required();
    replay_cmd->add_option("--frame-skip", frame_skip, "use every k-th frame");
    replay_cmd->add_flag("--ply", ply, "also write per-step point clouds");
    replay_cmd->add_option("--depth-max", preview_depth_max, "preview grayscale depth range");

    // synth
    auto* synth_cmd = app.add_subcommand("synth", "render a synthetic scene into a sequence");
    std::string scene_file, traj_name = "spin", synth_out, res_str = "64x64";
    int steps = 36;
    uint64_t seed = 0;
    double fov = 90.0, noise = 0.0, pose_noise = 0.0;
    double spin_step = 10.0, orbit_radius = 1.0;
    synth_cmd->add_option("--scene", scene_file, "scene JSON (default: built-in demo scene)");
    synth_cmd->add_option("--traj", traj_name, "trajectory kind: spin|orbit|walk");
    synth_cmd->add_option("--steps", steps, "number of frames");
    synth_cmd->add_option("--seed", seed, "random seed");
    synth_cmd->add_option("--out", synth_out, "output sequence directory")->required();
    synth_cmd->add_option("--res", res_str, "camera resolution HxW");
    synth_cmd->add_option("--fov", fov, "horizontal field of view, degrees");
    synth_cmd->add_option("--noise", noise, "depth noise standard deviation, meters");
    synth_cmd->add_option("--pose-noise", pose_noise, "trajectory noise std per pose coordinate");
    synth_cmd->add_option("--spin-step", spin_step, "spin: yaw degrees per step");
    synth_cmd->add_option("--orbit-radius", orbit_radius, "orbit: circle radius, meters");

    // bench
    auto* bench_cmd = app.add_subcommand("bench", "resolution-grid throughput benchmark");
    std::string bench_out = "bench.csv";
    int bench_steps = 3;
    std::vector<std::string> mono_list, mem_list;
    bench_cmd->add_option("--out", bench_out, "CSV output path");
    bench_cmd->add_option("--steps", bench_steps, "filter steps per grid cell");
    bench_cmd->add_option("--mono", mono_list, "camera resolutions HxW (default: full grid)");
    bench_cmd->add_option("--mem", mem_list, "memory resolutions HxW (default: full grid)");

    // avoid
    auto* avoid_cmd = app.add_subcommand("avoid", "obstacle-avoidance velocity from a saved state");
    std::string state_file;
    double radius = 0.2, vmax = 1.0;
    std::vector<double> exclude;
    avoid_cmd->add_option("--state", state_file, "state tensor file")->required();
    avoid_cmd->add_option("--radius", radius, "collision bubble radius R, meters");
    avoid_cmd->add_option("--vmax", vmax, "velocity magnitude cap, m/s");
    avoid_cmd->add_option("--exclude", exclude, "exclusion sphere: x y z radius (agent frame)")
        ->expected(4);

    // render
    auto* render_cmd = app.add_subcommand("render", "export a saved state as image or point cloud");
    std::string render_state, render_out;
    double render_depth_max = 10.0;
    render_cmd->add_option("--state", render_state, "state tensor file")->required();
    render_cmd->add_option("--out", render_out, "output path (.ppm preview or .ply point cloud)")
        ->required();
    render_cmd->add_option("--depth-max", render_depth_max, "preview grayscale depth range");

    // traj-convert
    auto* conv_cmd = app.add_subcommand("traj-convert", "convert TUM timestamp/quaternion lines");
    std::string conv_in, conv_out;
    conv_cmd->add_option("--in", conv_in, "TUM trajectory file")->required();
    conv_cmd->add_option("--out", conv_out, "native trajectory file")->required();

    CLI11_PARSE(app, argc, argv);
    if (threads > 0) esm::set_thread_count(threads);

    if (replay_cmd->parsed()) {
        esm::ReplayOptions opts;
        if (!mem_str.empty()) {
            esm::Resolution r = esm::parse_resolution(mem_str);
            if (r.w != 2 * r.h) throw esm::input_error("--mem must be HxW with W = 2H");
            opts.mem_h = r.h;
        }
        opts.frame_skip = frame_skip;
        opts.write_ply = ply;
        opts.preview_depth_max = preview_depth_max;
        esm::ReplayReport rep = esm::replay(seq_dir, replay_out, opts);
        std::cout << "replayed " << rep.steps << " steps in " << rep.total_seconds << " s ("
                  << rep.fps << " fps), outputs in " << replay_out << "\n";
    } else if (synth_cmd->parsed()) {
        esm::SyntheticScene scene =
            scene_file.empty() ? esm::make_demo_scene() : esm::load_scene(scene_file);
        esm::SynthOptions opts;
        opts.traj = esm::traj_kind_from_string(traj_name);
        opts.params.steps = steps;
        opts.params.seed = seed;
        opts.params.spin_step_deg = spin_step;
        opts.params.orbit_radius = orbit_radius;
        esm::Resolution r = esm::parse_resolution(res_str);
        opts.intrinsics = esm::Intrinsics::from_fov(r.w, r.h, fov);
        opts.depth_noise_std = noise;
        opts.pose_noise_std = pose_noise;
        esm::synth(scene, synth_out, opts);
        std::cout << "wrote " << steps << "-frame sequence to " << synth_out << "\n";
    } else if (bench_cmd->parsed()) {
        esm::BenchOptions opts;
        opts.steps = bench_steps;
        for (const auto& s : mono_list) opts.mono_list.push_back(esm::parse_resolution(s));
        for (const auto& s : mem_list) opts.mem_list.push_back(esm::parse_resolution(s));
        auto cells = esm::bench(opts);
        esm::write_bench_csv(bench_out, cells);
        std::cout << esm::bench_table(cells) << "wrote " << cells.size() << " cells to "
                  << bench_out << "\n";
    } else if (avoid_cmd->parsed()) {
        auto [state, cfg] = esm::read_state(state_file);
        esm::AvoidanceConfig acfg;
        acfg.bubble_radius = radius;
        acfg.v_max = vmax;
        acfg.dup_var_threshold = cfg.dup_var_threshold;
        if (!exclude.empty()) {
            acfg.exclusion = esm::ExclusionSphere{{exclude[0], exclude[1], exclude[2]}, exclude[3]};
        }
        Eigen::Vector3d v = esm::avoidance_vector(state, acfg);
        std::cout.precision(9);
        std::cout << v.x() << " " << v.y() << " " << v.z() << "\n";
    } else if (render_cmd->parsed()) {
        auto [state, cfg] = esm::read_state(render_state);
        std::string ext = std::filesystem::path(render_out).extension().string();
        if (ext == ".ppm") {
            esm::write_preview_ppm(render_out, state, render_depth_max);
        } else if (ext == ".ply") {
            esm::write_pointcloud_ply(render_out, state, cfg.prior_var);
        } else {
            throw esm::input_error("render: output must end in .ppm or .ply");
        }
        std::cout << "wrote " << render_out << "\n";
    } else if (conv_cmd->parsed()) {
        esm::convert_tum_trajectory(conv_in, conv_out);
        std::cout << "wrote " << conv_out << "\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const esm::input_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "runtime error: " << e.what() << "\n";
        return 2;
    }
}
