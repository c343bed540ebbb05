#pragma once

#include <string>
#include <vector>

#include "toolplay/camera.hpp"
#include "toolplay/geometry.hpp"

namespace toolplay {

enum class Shape { Sphere, Box, Capsule, Plane, Disk };

// Instance id ranges; masking removes everything in the embodiment band.
constexpr int kBackgroundId = -1;
constexpr int kTableId = 0;
constexpr int kFiducialId0 = 1;  // 1..3
constexpr int kObjectIdBase = 10;
constexpr int kToolIdBase = 20;
constexpr int kEmbodimentIdBase = 30;

inline bool is_embodiment_id(int id) { return id >= kEmbodimentIdBase; }

struct Primitive {
    Shape shape = Shape::Sphere;
    // size semantics: Sphere {r}, Box {hx,hy,hz}, Capsule {r, half_len (z)},
    // Plane {hx,hy} rectangle in local xy, Disk {r} in local xy
    Vec3 size = Vec3::Ones();
    Vec3 albedo = Vec3(0.7, 0.7, 0.7);  // RGB in [0,1]
    int instance_id = 0;
    Pose local;  // pose within owning frame (World for static primitives)
};

struct ToolModel {
    std::string name;
    std::vector<Primitive> primitives;       // rigid in the Tool frame
    std::vector<Vec3> model_points;          // >= 8 labeled surface points, Tool frame
    Vec3 tip = Vec3::Zero();                 // Tool frame
};

enum class TaskKind { Hammer, Scoop, Flip };
enum class EmbodimentKind { Hand, Robot, None };

struct TaskSpec {
    TaskKind kind = TaskKind::Hammer;
    // placement randomization: object xy uniform in center +- half_range (Task frame)
    Eigen::Vector2d placement_center = Eigen::Vector2d::Zero();
    Eigen::Vector2d placement_half_range = Eigen::Vector2d(0.04, 0.04);
    // hammer
    double nail_height = 0.03;      // m above table
    double eps_hit = 0.015;         // tip-to-nail-tip distance for a qualifying hit
    double v_min = 0.25;            // m/s downward at contact
    double sink_per_hit = 0.01;
    double sink_target = 0.005;
    // scoop
    double ball_radius = 0.012;
    double scoop_capture_radius = 0.025;
    double scoop_level_tilt = 0.6;  // rad, max tool tilt while carrying
    Eigen::Vector2d bowl_center = Eigen::Vector2d(0.10, -0.08);  // Task frame
    double bowl_radius = 0.045;
    // flip
    double v_flip = 0.5;            // m/s upward
    double flip_tilt_min = 0.15;    // rad
    double flip_tilt_max = 0.6;
    double demo_duration = 3.0;     // s budget per episode
};

struct Scene {
    std::vector<Primitive> statics;  // table, fiducials (World frame poses)
    ToolModel tool;
    TaskSpec task;
    EmbodimentKind embodiment = EmbodimentKind::Hand;
    double gravity = 9.81;
    std::uint64_t seed = 0;

    Pose t_task_world;                 // Task expressed in World (parent World, child Task)
    std::vector<Vec3> fiducial_model;  // 3 non-collinear points, Task frame
    Vec3 robot_base = Vec3(0, -0.45, 0);  // World, nominal base anchor

    std::vector<CameraModel> demo_cameras;  // two views for data collection
    CameraModel deploy_camera;
    Vec3 look_at_point = Vec3::Zero();  // scene center for camera aiming
    Pose tool_home;                     // World, demo/deploy start pose
};

// Per-step dynamic state. Quasi-static task rules; see sim.hpp.
struct SceneState {
    Pose tool_world = Pose::identity();  // parent World, child Tool
    Vec3 tip_velocity = Vec3::Zero();    // World, from the last step
    double time = 0.0;
    // hammer
    Vec3 nail_pos = Vec3::Zero();  // World, base of nail on the table
    double nail_sunk = 0.0;
    // scoop
    Vec3 ball_pos = Vec3::Zero();  // World, center
    bool ball_carried = false;
    // flip
    bool flipped = false;
    bool dropped = false;
    bool success = false;
};

// Scene builders for the three default tasks. Camera resolution selects the
// demo profile (480x640 default, 120x160 for fast CI).
Scene make_scene(TaskKind kind, EmbodimentKind embodiment, std::uint64_t seed,
                 int cam_height = 480, int cam_width = 640);

// Randomized initial state (object placement + tool home pose).
SceneState initial_state(const Scene& scene, std::uint64_t seed);

// Ground-truth nail tip position in World for the current state.
Vec3 nail_tip_world(const Scene& scene, const SceneState& state);

// Fiducial triad centers in World.
std::vector<Vec3> fiducial_world(const Scene& scene);

// Flattened world-frame primitive list for the current state: statics + tool
// + task objects + embodiment proxy. `base_shift` displaces the robot anchor
// (base perturbation) when the embodiment is a robot.
std::vector<Primitive> instantiate(const Scene& scene, const SceneState& state,
                                   const Vec3& base_shift = Vec3::Zero());

// Embodiment proxy primitives only (hand blob or robot link chain), world frame.
// `base_shift` displaces the robot anchor (base perturbation).
std::vector<Primitive> embodiment_primitives(const Scene& scene, const SceneState& state,
                                             const Vec3& base_shift = Vec3::Zero());

// Success predicate: pure function of the final state (and trajectory history
// folded into it). Frame-invariant by construction.
bool task_success(const Scene& scene, const SceneState& state);

}  // namespace toolplay
