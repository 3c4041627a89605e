#pragma once

#include <optional>

#include "esm/geom.hpp"
#include "esm/state.hpp"

namespace esm {

struct ExclusionSphere {
    Eigen::Vector3d center{Eigen::Vector3d::Zero()};  // agent frame
    double radius = 0.0;
};

struct AvoidanceConfig {
    double bubble_radius = 0.2;  // R, collision bubble around the agent
    double v_max = 1.0;
    double dup_var_threshold = 1.0;  // only pixels this certain repel
    std::optional<ExclusionSphere> exclusion;

    void validate() const;
};

/// |v_a| = min(1e-3 / max(d_closest - R, 1e-12)^2, v_max).
double avoidance_speed(double d_closest, const AvoidanceConfig& cfg);

/// Repulsive velocity away from the closest sufficiently certain depth
/// pixel outside the exclusion sphere; zero when nothing qualifies.
Eigen::Vector3d avoidance_vector(const EgosphereState& state, const AvoidanceConfig& cfg);

}  // namespace esm
