#pragma once

#include "toolplay/scene.hpp"

namespace toolplay {

struct Trajectory {
    std::vector<Pose> poses;          // Tool in World
    std::vector<double> timestamps;   // seconds, strictly increasing
};

// Kinematic tool update with speed clamp, then the task's quasi-static rule.
// dt must be in (0, 0.1].
SceneState step(const Scene& scene, const SceneState& state, const Pose& tool_pose_cmd,
                double dt);

// Scripted play demonstration: waypoints joined by minimum-jerk time scaling,
// sampled at `rate_hz`. Solves the task under step() for the randomized
// placement of `seed`. Throws PlanFailure when the placement is unreachable.
Trajectory scripted_demo(const Scene& scene, std::uint64_t seed, double rate_hz = 10.0);

// Sinusoid-plus-smooth-noise perturbation schedules (base and camera shake).
struct PerturbSpec {
    double amplitude = 0.0;      // meters, translational
    double rot_amplitude = 0.0;  // radians, rotational (camera shake)
    double freq_hz = 1.0;
    Vec3 axis = Vec3(1, 0, 0);   // translation direction / rotation axis
    double noise_sigma = 0.0;    // meters (or radians for rotation)
    std::uint64_t seed = 0;
};

// World->Base pose at time t. Identity at zero amplitude.
Pose perturb_base(const PerturbSpec& schedule, double t);

// Local pose delta to append to a camera extrinsic at time t.
Pose perturb_camera(const PerturbSpec& schedule, double t);

// Minimum-jerk position fraction s(tau), tau in [0,1].
inline double min_jerk(double tau) {
    double t3 = tau * tau * tau;
    return t3 * (10.0 - 15.0 * tau + 6.0 * tau * tau);
}

// Tool tilt: angle between the tool's local z axis and world vertical.
inline double tool_tilt(const Pose& tool_world) {
    Vec3 z = tool_world.rotation.rotate(Vec3(0, 0, 1));
    return std::acos(std::clamp(z.z(), -1.0, 1.0));
}

}  // namespace toolplay
