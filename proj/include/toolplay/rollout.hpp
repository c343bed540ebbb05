#pragma once

#include <functional>

#include "toolplay/policy.hpp"

namespace toolplay {

struct DeploymentConfig {
    Pose t_eef_tool = Pose::make(Rotation::identity(), Vec3::Zero(), FrameId::tool(),
                                 FrameId::eef());
    PerturbSpec base_perturb;    // World-frame base drift
    PerturbSpec camera_perturb;  // deploy-camera shake
    Vec3 camera_offset = Vec3::Zero();  // deploy-camera displacement (re-aimed)
    bool masking = true;
    std::string variant = "full";  // training-variant id (VA/RC/masking)
    double control_rate_hz = 10.0;  // [5, 30]
    int step_budget = 60;
    int execute_horizon = 8;  // actions executed per replan (predict n_act)
    SamplerSpec sampler;
};

struct EpisodeRecord {
    std::uint64_t seed = 0;
    bool success = false;
    int steps_used = 0;
    double time_to_success = -1.0;  // seconds; -1 on failure
    int waypoints = 0;              // commanded setpoints (replans * horizon)
    std::vector<Vec3> eef_path;     // World, one sample per control tick
    std::vector<Vec3> base_path;    // World, one sample per control tick
};

struct RolloutReport {
    std::vector<EpisodeRecord> episodes;
    double success_rate = 0.0;
    std::uint64_t config_hash = 0;
};

// Action source: (obs window at policy resolution, normalized previous
// commanded action, per-replan seed) -> n_act Tool-in-Task poses.
using ActionSource =
    std::function<std::vector<Pose>(const std::vector<ImageRgb8>&, const Vec9&, std::uint64_t)>;

// Wraps a trained net (images resized to net resolution by the caller).
ActionSource policy_action_source(const PolicyNet& net, const NormStats& stats,
                                  SamplerSpec sampler);

// Ground-truth grip offset between the Tool frame and the robot flange (EEF).
Pose gt_eef_tool();

// One-time hand-eye step: estimates T_eef^tool by observing the robot-mounted
// tool with the deploy camera and combining with the exact T_eef^base from
// forward kinematics. Zero noise recovers gt_eef_tool() exactly.
Pose calibrate_eef_tool(const Scene& scene, const SceneState& state, double noise_sigma,
                        std::uint64_t seed);

// Closed loop: render deploy camera (offset + shake) -> mask embodiment ->
// sample actions -> command EEF in the Base frame with T_task^base held at
// the control tick -> step. NaN commands abort the episode as a failure.
EpisodeRecord run_episode(const Scene& scene, std::uint64_t seed, const ActionSource& policy,
                          int obs_w, int obs_h, int n_obs, const NormStats& stats,
                          const DeploymentConfig& cfg);

RolloutReport run_suite(const Scene& scene, const std::vector<std::uint64_t>& seeds,
                        const ActionSource& policy, int obs_w, int obs_h, int n_obs,
                        const NormStats& stats, const DeploymentConfig& cfg);

// CSV (one row per episode) + summary text file under `dir`.
void write_report(const std::string& dir, const RolloutReport& report);

// (std dev of EEF World position) / (std dev of base World position) over a
// hold phase. Throws LengthMismatch / DomainError (static base).
double stabilization_metric(const std::vector<Vec3>& eef_path,
                            const std::vector<Vec3>& base_path);

std::uint64_t config_hash(const DeploymentConfig& cfg);

struct AblationVariant {
    std::string name;
    std::string checkpoint_path;
    bool masking = true;
};

struct AblationCell {
    Eigen::Vector2d offset = Eigen::Vector2d::Zero();  // camera XY displacement, m
    double success_rate = 0.0;
    bool working = false;  // success rate >= 0.5
};

struct AblationRow {
    std::string variant;
    std::vector<AblationCell> cells;
    int working_cells = 0;
};

// One checkpoint per variant; each cell evaluates `seeds` episodes with the
// deploy camera displaced by the cell offset. Throws MissingCheckpoint.
std::vector<AblationRow> ablate(const std::vector<AblationVariant>& variants,
                                const std::vector<Eigen::Vector2d>& offsets,
                                const Scene& scene, const std::vector<std::uint64_t>& seeds,
                                const DeploymentConfig& cfg);

void write_ablation(const std::string& path, const std::vector<AblationRow>& rows);

}  // namespace toolplay
