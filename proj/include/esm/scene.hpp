#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include "esm/core.hpp"
#include "esm/geom.hpp"
#include "esm/state.hpp"

namespace esm {

/// Analytic scene primitive with exact ray intersections. Color doubles as
/// the feature payload for RGB (n = 3) runs.
struct Primitive {
    enum class Kind { kSphere, kBox, kPlane };
    Kind kind = Kind::kSphere;
    Eigen::Vector3d a{Eigen::Vector3d::Zero()};  // center | min corner | point
    Eigen::Vector3d b{Eigen::Vector3d::Zero()};  // unused | max corner | unit normal
    double radius = 1.0;
    Eigen::Vector3d color{0.5, 0.5, 0.5};

    static Primitive sphere(const Eigen::Vector3d& center, double radius,
                            const Eigen::Vector3d& color);
    static Primitive box(const Eigen::Vector3d& mn, const Eigen::Vector3d& mx,
                         const Eigen::Vector3d& color);
    static Primitive plane(const Eigen::Vector3d& point, const Eigen::Vector3d& normal,
                           const Eigen::Vector3d& color);
    void validate() const;
};

struct SyntheticScene {
    std::vector<Primitive> primitives;
    void validate() const;
};

struct RayHit {
    double depth = std::numeric_limits<double>::infinity();
    int primitive = -1;

    bool miss() const { return primitive < 0; }
};

/// Nearest positive intersection along a unit ray, world frame.
RayHit raycast(const SyntheticScene& scene, const Eigen::Vector3d& origin,
               const Eigen::Vector3d& dir);

struct RenderOptions {
    double depth_noise_std = 0.0;  // additive Gaussian on the z-depth channel
    double pose_noise_std = 0.0;   // additive Gaussian on all 6 pose coordinates
    double var_floor = 1e-6;       // variance written for noise-free channels
    uint64_t seed = 0;
};

/// Ray-cast a pinhole view from a camera body pose (x-forward axes) in the
/// world frame. The returned frame's pose is the measured (possibly
/// noise-perturbed) pose; the exact one is written to true_pose when given.
/// Misses carry zero depth at prior variance.
ProjectiveFrame render_projective(const SyntheticScene& scene, const Pose6& cam_pose,
                                  const Intrinsics& intr, const RenderOptions& opts,
                                  double prior_var, Pose6* true_pose = nullptr);

/// Exact ego-sphere ground truth: one ray per pixel center from the agent
/// origin. Misses stay at the prior.
EgosphereState render_ground_truth_egosphere(const SyntheticScene& scene, const Pose6& agent_pose,
                                             const EsmConfig& cfg, double var_floor = 1e-6);

struct Trajectory {
    std::vector<Pose6> poses;  // agent in world, one per step
    Pose6 camera_offset;       // camera body in agent frame, fixed
};

enum class TrajKind { kSpin, kOrbit, kRandomWalk };

struct TrajectoryParams {
    int steps = 36;
    uint64_t seed = 0;
    double spin_step_deg = 10.0;    // spin: yaw per step
    double orbit_radius = 1.0;      // orbit: circle radius, one lap, facing center
    double walk_step = 0.05;        // random-walk: max translation per axis per step
    double walk_max_angle_deg = 5;  // random-walk: max rotation per step
    double walk_bound = 2.0;        // random-walk: |position| clamp per axis
};

Trajectory make_trajectory(TrajKind kind, const TrajectoryParams& params);

TrajKind traj_kind_from_string(const std::string& name);

// Scene description file: JSON {"primitives": [...]}; schema in README.
SyntheticScene load_scene(const std::filesystem::path& path);
void save_scene(const std::filesystem::path& path, const SyntheticScene& scene);

/// Closed box room with a few colored objects; the default demo/bench scene.
SyntheticScene make_demo_scene();

}  // namespace esm
