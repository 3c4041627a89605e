#include "esm/scene.hpp"

#include <cmath>
#include <fstream>
#include <random>

#include <json.hpp>

#include "esm/parallel.hpp"

namespace esm {

namespace {
constexpr double kRayEps = 1e-9;
}

Primitive Primitive::sphere(const Eigen::Vector3d& center, double radius,
                            const Eigen::Vector3d& color) {
    Primitive p;
    p.kind = Kind::kSphere;
    p.a = center;
    p.radius = radius;
    p.color = color;
    return p;
}

Primitive Primitive::box(const Eigen::Vector3d& mn, const Eigen::Vector3d& mx,
                         const Eigen::Vector3d& color) {
    Primitive p;
    p.kind = Kind::kBox;
    p.a = mn;
    p.b = mx;
    p.color = color;
    return p;
}

Primitive Primitive::plane(const Eigen::Vector3d& point, const Eigen::Vector3d& normal,
                           const Eigen::Vector3d& color) {
    Primitive p;
    p.kind = Kind::kPlane;
    p.a = point;
    p.b = normal.normalized();
    p.color = color;
    return p;
}

void Primitive::validate() const {
    switch (kind) {
        case Kind::kSphere:
            if (!(radius > 0)) throw input_error("scene: sphere radius must be positive");
            break;
        case Kind::kBox:
            if (!(a.x() < b.x() && a.y() < b.y() && a.z() < b.z()))
                throw input_error("scene: box min corner must be below max corner");
            break;
        case Kind::kPlane:
            if (std::abs(b.norm() - 1.0) > 1e-9) throw input_error("scene: plane normal not unit");
            break;
    }
    for (int k = 0; k < 3; ++k)
        if (!(color[k] >= 0 && color[k] <= 1)) throw input_error("scene: color outside [0,1]");
}

void SyntheticScene::validate() const {
    for (const auto& p : primitives) p.validate();
}

namespace {

double hit_sphere(const Primitive& s, const Eigen::Vector3d& o, const Eigen::Vector3d& d) {
    Eigen::Vector3d oc = o - s.a;
    double b = d.dot(oc);
    double c = oc.squaredNorm() - s.radius * s.radius;
    double disc = b * b - c;
    if (disc < 0) return -1;
    double sq = std::sqrt(disc);
    double t0 = -b - sq, t1 = -b + sq;
    if (t0 > kRayEps) return t0;
    if (t1 > kRayEps) return t1;  // origin inside
    return -1;
}

double hit_box(const Primitive& bx, const Eigen::Vector3d& o, const Eigen::Vector3d& d) {
    double tmin = -std::numeric_limits<double>::infinity();
    double tmax = std::numeric_limits<double>::infinity();
    for (int k = 0; k < 3; ++k) {
        if (d[k] == 0.0) {
            if (o[k] < bx.a[k] || o[k] > bx.b[k]) return -1;
            continue;
        }
        double inv = 1.0 / d[k];
        double t0 = (bx.a[k] - o[k]) * inv;
        double t1 = (bx.b[k] - o[k]) * inv;
        if (t0 > t1) std::swap(t0, t1);
        tmin = std::max(tmin, t0);
        tmax = std::min(tmax, t1);
        if (tmin > tmax) return -1;
    }
    if (tmin > kRayEps) return tmin;
    if (tmax > kRayEps) return tmax;  // origin inside
    return -1;
}

double hit_plane(const Primitive& pl, const Eigen::Vector3d& o, const Eigen::Vector3d& d) {
    double denom = d.dot(pl.b);
    if (std::abs(denom) < 1e-15) return -1;
    double t = (pl.a - o).dot(pl.b) / denom;
    return t > kRayEps ? t : -1;
}

}  // namespace

RayHit raycast(const SyntheticScene& scene, const Eigen::Vector3d& origin,
               const Eigen::Vector3d& dir) {
    if (std::abs(dir.norm() - 1.0) > 1e-9) throw input_error("raycast: direction not unit length");
    RayHit hit;
    for (size_t k = 0; k < scene.primitives.size(); ++k) {
        const Primitive& p = scene.primitives[k];
        double t = -1;
        switch (p.kind) {
            case Primitive::Kind::kSphere: t = hit_sphere(p, origin, dir); break;
            case Primitive::Kind::kBox: t = hit_box(p, origin, dir); break;
            case Primitive::Kind::kPlane: t = hit_plane(p, origin, dir); break;
        }
        if (t > 0 && t < hit.depth) {
            hit.depth = t;
            hit.primitive = static_cast<int>(k);
        }
    }
    return hit;
}

ProjectiveFrame render_projective(const SyntheticScene& scene, const Pose6& cam_pose,
                                  const Intrinsics& intr, const RenderOptions& opts,
                                  double prior_var, Pose6* true_pose) {
    intr.validate();
    scene.validate();
    const int w = intr.width, h = intr.height, n = 3;
    ProjectiveFrame frame;
    frame.intrinsics = intr;
    frame.depth = Image(h, w, 1);
    frame.features = Image(h, w, n);
    frame.var = Image(h, w, 1 + n, prior_var);

    const Eigen::Matrix3d A = camera_alignment();
    const Eigen::Matrix3d Rwb = rotvec_to_matrix(cam_pose.r);
    const Eigen::Vector3d origin = cam_pose.t;
    const double depth_var = std::max(opts.depth_noise_std * opts.depth_noise_std, opts.var_floor);

    parallel_for(static_cast<int64_t>(h) * w, [&](int64_t lo, int64_t hi) {
        for (int64_t p = lo; p < hi; ++p) {
            int v = static_cast<int>(p / w), u = static_cast<int>(p % w);
            Eigen::Vector3d ray((u - intr.cx) / intr.fx, (v - intr.cy) / intr.fy, 1.0);
            double norm = ray.norm();
            Eigen::Vector3d dir = Rwb * (A * (ray / norm));
            RayHit hit = raycast(scene, origin, dir);
            if (hit.miss()) continue;  // zero depth at prior variance
            frame.depth(v, u, 0) = hit.depth / norm;  // range back to z-depth
            const Eigen::Vector3d& col = scene.primitives[hit.primitive].color;
            for (int k = 0; k < n; ++k) {
                frame.features(v, u, k) = col[k];
                frame.var(v, u, 1 + k) = opts.var_floor;
            }
            frame.var(v, u, 0) = depth_var;
        }
    });

    // noise drawn serially in pixel order so renders are seed-reproducible
    if (opts.depth_noise_std > 0) {
        std::mt19937_64 rng(opts.seed);
        std::normal_distribution<double> gauss(0.0, opts.depth_noise_std);
        for (int v = 0; v < h; ++v)
            for (int u = 0; u < w; ++u)
                if (frame.depth(v, u, 0) > 0)
                    frame.depth(v, u, 0) = std::max(1e-6, frame.depth(v, u, 0) + gauss(rng));
    }

    if (true_pose) *true_pose = cam_pose;
    frame.pose = cam_pose;
    if (opts.pose_noise_std > 0) {
        std::mt19937_64 rng(opts.seed ^ 0x9e3779b97f4a7c15ull);
        std::normal_distribution<double> gauss(0.0, opts.pose_noise_std);
        Vec6 v = cam_pose.vec();
        for (int k = 0; k < 6; ++k) v[k] += gauss(rng);
        frame.pose = Pose6::from_vec(v);
        frame.pose_cov = Mat6::Identity() * (opts.pose_noise_std * opts.pose_noise_std);
    }
    return frame;
}

EgosphereState render_ground_truth_egosphere(const SyntheticScene& scene, const Pose6& agent_pose,
                                             const EsmConfig& cfg, double var_floor) {
    scene.validate();
    EgosphereState s = new_state(cfg);
    const Eigen::Matrix3d Rwa = rotvec_to_matrix(agent_pose.r);
    const int h = cfg.h_s, w = cfg.w_s, n = cfg.n;

    parallel_for(h, [&](int64_t lo, int64_t hi) {
        for (int i = static_cast<int>(lo); i < hi; ++i) {
            for (int j = 0; j < w; ++j) {
                PolarCoord pc{s.mean(i, j, 0), s.mean(i, j, 1), 1.0};
                Eigen::Vector3d dir = Rwa * polar_to_cartesian(pc);
                RayHit hit = raycast(scene, agent_pose.t, dir);
                if (hit.miss()) continue;
                s.mean(i, j, 2) = hit.depth;
                s.var(i, j, 0) = var_floor;
                const Eigen::Vector3d& col = scene.primitives[hit.primitive].color;
                for (int k = 0; k < n; ++k) {
                    s.mean(i, j, 3 + k) = k < 3 ? col[k] : 0.0;
                    s.var(i, j, 1 + k) = var_floor;
                }
            }
        }
    });
    return s;
}

Trajectory make_trajectory(TrajKind kind, const TrajectoryParams& params) {
    if (params.steps < 1) throw input_error("trajectory: need at least one step");
    Trajectory traj;
    traj.poses.reserve(params.steps);
    switch (kind) {
        case TrajKind::kSpin: {
            double step = params.spin_step_deg * kPi / 180.0;
            for (int k = 0; k < params.steps; ++k)
                traj.poses.push_back({Eigen::Vector3d::Zero(), RotVec(0, 0, k * step)});
            break;
        }
        case TrajKind::kOrbit: {
            for (int k = 0; k < params.steps; ++k) {
                double alpha = 2.0 * kPi * k / params.steps;
                Eigen::Vector3d pos(params.orbit_radius * std::cos(alpha),
                                    params.orbit_radius * std::sin(alpha), 0.0);
                traj.poses.push_back({pos, RotVec(0, 0, alpha + kPi)});  // face the center
            }
            break;
        }
        case TrajKind::kRandomWalk: {
            std::mt19937_64 rng(params.seed);
            std::uniform_real_distribution<double> uni(-1.0, 1.0);
            Pose6 cur;
            for (int k = 0; k < params.steps; ++k) {
                traj.poses.push_back(cur);
                Eigen::Vector3d dt(uni(rng), uni(rng), uni(rng));
                dt *= params.walk_step;
                Eigen::Vector3d axis(uni(rng), uni(rng), uni(rng));
                if (axis.norm() < 1e-9) axis = Eigen::Vector3d::UnitZ();
                axis.normalize();
                double ang = std::abs(uni(rng)) * params.walk_max_angle_deg * kPi / 180.0;
                cur.t = (cur.t + dt).cwiseMax(-params.walk_bound).cwiseMin(params.walk_bound);
                cur.r = matrix_to_rotvec(rotvec_to_matrix(cur.r) * rotvec_to_matrix(RotVec(axis * ang)));
            }
            break;
        }
    }
    return traj;
}

TrajKind traj_kind_from_string(const std::string& name) {
    if (name == "spin") return TrajKind::kSpin;
    if (name == "orbit") return TrajKind::kOrbit;
    if (name == "walk" || name == "random-walk") return TrajKind::kRandomWalk;
    throw input_error("unknown trajectory kind: " + name);
}

namespace {

Eigen::Vector3d vec3_from_json(const nlohmann::json& j) {
    if (!j.is_array() || j.size() != 3) throw input_error("scene: expected a 3-element array");
    return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

}  // namespace

SyntheticScene load_scene(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw input_error("scene: cannot open " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw input_error("scene: parse error in " + path.string() + ": " + e.what());
    }
    SyntheticScene scene;
    if (!j.contains("primitives") || !j["primitives"].is_array())
        throw input_error("scene: missing \"primitives\" list");
    for (const auto& pj : j["primitives"]) {
        std::string kind = pj.at("kind").get<std::string>();
        Eigen::Vector3d color = pj.contains("color") ? vec3_from_json(pj["color"])
                                                     : Eigen::Vector3d(0.5, 0.5, 0.5);
        if (kind == "sphere") {
            scene.primitives.push_back(Primitive::sphere(vec3_from_json(pj.at("center")),
                                                         pj.at("radius").get<double>(), color));
        } else if (kind == "box") {
            scene.primitives.push_back(
                Primitive::box(vec3_from_json(pj.at("min")), vec3_from_json(pj.at("max")), color));
        } else if (kind == "plane") {
            scene.primitives.push_back(Primitive::plane(vec3_from_json(pj.at("point")),
                                                        vec3_from_json(pj.at("normal")), color));
        } else {
            throw input_error("scene: unknown primitive kind: " + kind);
        }
    }
    scene.validate();
    return scene;
}

void save_scene(const std::filesystem::path& path, const SyntheticScene& scene) {
    nlohmann::json j;
    j["primitives"] = nlohmann::json::array();
    for (const auto& p : scene.primitives) {
        nlohmann::json pj;
        pj["color"] = {p.color.x(), p.color.y(), p.color.z()};
        switch (p.kind) {
            case Primitive::Kind::kSphere:
                pj["kind"] = "sphere";
                pj["center"] = {p.a.x(), p.a.y(), p.a.z()};
                pj["radius"] = p.radius;
                break;
            case Primitive::Kind::kBox:
                pj["kind"] = "box";
                pj["min"] = {p.a.x(), p.a.y(), p.a.z()};
                pj["max"] = {p.b.x(), p.b.y(), p.b.z()};
                break;
            case Primitive::Kind::kPlane:
                pj["kind"] = "plane";
                pj["point"] = {p.a.x(), p.a.y(), p.a.z()};
                pj["normal"] = {p.b.x(), p.b.y(), p.b.z()};
                break;
        }
        j["primitives"].push_back(pj);
    }
    std::ofstream out(path);
    if (!out) throw input_error("scene: cannot write " + path.string());
    out << j.dump(2) << "\n";
}

SyntheticScene make_demo_scene() {
    SyntheticScene scene;
    scene.primitives.push_back(Primitive::box({-4, -4, -2.5}, {4, 4, 2.5}, {0.75, 0.72, 0.65}));
    scene.primitives.push_back(Primitive::sphere({2.5, 1.5, 0.2}, 0.5, {0.9, 0.1, 0.1}));
    scene.primitives.push_back(Primitive::sphere({-2.0, 2.2, -0.5}, 0.4, {0.1, 0.2, 0.9}));
    scene.primitives.push_back(Primitive::sphere({-2.4, -2.0, 0.8}, 0.6, {0.9, 0.8, 0.1}));
    scene.primitives.push_back(Primitive::box({1.2, -2.8, -1.2}, {2.2, -1.8, 0.2}, {0.1, 0.8, 0.2}));
    scene.primitives.push_back(Primitive::box({-3.2, -0.6, -0.8}, {-2.4, 0.6, 0.9}, {0.8, 0.2, 0.8}));
    return scene;
}

}  // namespace esm
