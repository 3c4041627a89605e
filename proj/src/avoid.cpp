#include "esm/avoid.hpp"

#include <cmath>

namespace esm {

void AvoidanceConfig::validate() const {
    if (!(bubble_radius > 0)) throw input_error("avoid: bubble radius must be positive");
    if (!(v_max > 0)) throw input_error("avoid: v_max must be positive");
    if (exclusion && !(exclusion->radius >= 0))
        throw input_error("avoid: exclusion radius must be non-negative");
}

double avoidance_speed(double d_closest, const AvoidanceConfig& cfg) {
    double gap = std::max(d_closest - cfg.bubble_radius, 1e-12);
    return std::min(1e-3 / (gap * gap), cfg.v_max);
}

Eigen::Vector3d avoidance_vector(const EgosphereState& state, const AvoidanceConfig& cfg) {
    cfg.validate();
    int best_i = -1, best_j = -1;
    double best_d = std::numeric_limits<double>::infinity();
    for (int i = 0; i < state.h(); ++i) {
        for (int j = 0; j < state.w(); ++j) {
            if (state.var(i, j, 0) >= cfg.dup_var_threshold) continue;
            double d = state.mean(i, j, 2);
            if (d <= 0 || d >= best_d) continue;
            if (cfg.exclusion) {
                Eigen::Vector3d p = polar_to_cartesian(
                    {state.mean(i, j, 0), state.mean(i, j, 1), d});
                if ((p - cfg.exclusion->center).norm() < cfg.exclusion->radius) continue;
            }
            best_d = d;
            best_i = i;
            best_j = j;
        }
    }
    if (best_i < 0) return Eigen::Vector3d::Zero();
    Eigen::Vector3d dir = polar_to_cartesian({state.mean(best_i, best_j, 0),
                                              state.mean(best_i, best_j, 1), 1.0});
    return -avoidance_speed(best_d, cfg) * dir;
}

}  // namespace esm
