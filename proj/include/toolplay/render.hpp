#pragma once

#include "toolplay/image.hpp"
#include "toolplay/scene.hpp"

namespace toolplay {

struct RenderOutput {
    ImageRgb8 rgb;
    DepthMap depth;       // z-depth in meters, 0 = no hit
    InstanceMap instance; // kBackgroundId = background
};

// Nearest-hit ray cast with Lambertian shading from a fixed directional
// light. Deterministic for fixed inputs.
RenderOutput render(const std::vector<Primitive>& world_prims, const CameraModel& camera);

inline RenderOutput render(const Scene& scene, const SceneState& state,
                           const CameraModel& camera) {
    return render(instantiate(scene, state), camera);
}

// Ray cast a single world-frame ray; returns hit distance along dir (not
// z-depth) and instance id, or false on miss.
bool raycast(const std::vector<Primitive>& world_prims, const Vec3& origin, const Vec3& dir,
             double& t_hit, int& instance_id, Vec3& normal);

// True when `point` is visible from the camera (not occluded by anything
// nearer along the line of sight, within `tol` meters).
bool point_visible(const std::vector<Primitive>& world_prims, const CameraModel& camera,
                   const Vec3& point_world, double tol = 2e-3);

extern const Vec3 kBackgroundColor;  // [0,1]

}  // namespace toolplay
