#pragma once

#include "toolplay/rollout.hpp"

namespace toolplay {

// Pipeline configuration, one section per stage plus globals. Parsed from a
// JSON file; unknown keys and type mismatches throw ConfigError.
struct SceneSection {
    TaskKind task = TaskKind::Hammer;
    int cam_height = 120, cam_width = 160;
};

struct CameraSection {
    int obs_width = 48, obs_height = 48;    // policy observation resolution
    double pose_noise_sigma = 0.0;          // tool-pose estimator noise (collect)
    double pointmap_noise_sigma = 0.0;      // calibration pointmap noise (collect)
};

struct ReconSection {
    int matches = 600;
    double outlier_frac = 0.1;
    double noise_sigma = 0.001;
    RansacParams ransac;
};

struct AugmentSection {
    bool enabled = true;
    int views = 2;               // novel streams per episode
    double cap_deg = 15.0;
    double radial_jitter = 0.10;
    int knn = 8;
    int stride = 2;              // pixel stride of the per-step backprojection
};

struct PolicySection {
    int n_obs = 2, n_act = 16;
    int c1 = 8, c2 = 16, c3 = 32;
    int embed = 128, hidden = 256, t_embed = 32;
    int diffusion_steps = 100;
    int steps = 1500, batch = 32;
    double lr = 1e-3, crop_frac = 0.9;
    bool lr_decay = false;
    int checkpoint_every = 0;
};

struct VariantSection {
    std::string name;
    std::string checkpoint;  // relative to output_root unless absolute
    bool masking = true;
};

struct RolloutSection {
    int episodes = 20;
    double control_rate_hz = 10.0;
    int step_budget = 60;
    int execute_horizon = 8;
    bool masking = true;
    std::string sampler = "ddim";
    int sampler_steps = 16;
    double base_amplitude = 0.0, base_freq_hz = 1.0, base_noise_sigma = 0.0;
    double camera_amplitude = 0.0, camera_rot_amplitude = 0.0, camera_freq_hz = 1.0;
    Vec3 camera_offset = Vec3::Zero();
    double eef_calib_noise_sigma = 0.0;
    int grid_n = 5;              // ablation camera-offset grid (grid_n x grid_n)
    double grid_extent = 0.04;   // meters, per-axis half range
    std::vector<VariantSection> variants;  // ablate; empty = trained checkpoint
};

struct PipelineConfig {
    std::uint64_t seed = 0;
    std::string output_root = "out";
    SceneSection scene;
    CameraSection camera;
    ReconSection reconstruction;
    AugmentSection augmentation;
    PolicySection policy;
    RolloutSection rollout;
};

// Overrides are dotted "section.key=value" pairs applied before validation;
// values are parsed as JSON literals, falling back to plain strings.
PipelineConfig parse_config(const std::string& json_text,
                            const std::vector<std::string>& overrides = {});
PipelineConfig load_config(const std::string& path,
                           const std::vector<std::string>& overrides = {});

// On-disk layout under output_root.
struct Artifacts {
    std::string root;

    std::string episodes_root() const { return root + "/episodes"; }
    std::string index() const { return episodes_root() + "/index.txt"; }
    std::string episode(int i) const;
    std::string recon_root() const { return root + "/recon"; }
    std::string recon_points(int i) const;
    std::string recon_meta(int i) const;
    std::string aug_root() const { return root + "/aug"; }
    std::string aug_index() const { return aug_root() + "/index.txt"; }
    std::string aug_episode(int i, int view) const;
    std::string policy_root() const { return root + "/policy"; }
    std::string checkpoint() const { return policy_root() + "/policy.ckpt"; }
    std::string loss_csv() const { return policy_root() + "/loss.csv"; }
    std::string eval_root() const { return root + "/eval"; }
    std::string ablation_csv() const { return root + "/ablate/table.csv"; }
};
inline Artifacts artifacts(const PipelineConfig& cfg) { return Artifacts{cfg.output_root}; }

// Stages. Every stage is deterministic in (config, seed) and idempotent:
// re-running overwrites byte-identical artifacts. `dry_run` validates the
// config and required inputs without writing. Missing upstream artifacts
// throw MissingArtifact/MissingCheckpoint with the expected path.
void cmd_collect(const PipelineConfig& cfg, int n_episodes, int jobs = 1, bool dry_run = false);
void cmd_reconstruct(const PipelineConfig& cfg, int jobs = 1, bool dry_run = false);
void cmd_augment(const PipelineConfig& cfg, int jobs = 1, bool dry_run = false);
void cmd_train(const PipelineConfig& cfg, bool dry_run = false);
void cmd_eval(const PipelineConfig& cfg, int jobs = 1, bool dry_run = false);
void cmd_ablate(const PipelineConfig& cfg, bool dry_run = false);

// Shared by cmd_eval/cmd_ablate: deploy scene + DeploymentConfig from the
// rollout section (t_eef_tool calibrated once against the deploy scene).
Scene deploy_scene(const PipelineConfig& cfg);
DeploymentConfig deployment_config(const PipelineConfig& cfg, const Scene& scene);

// Full argv-level entry point used by the `toolplay` binary. Exit codes:
// 0 ok, 2 config error, 3 missing artifact, 4 stage failure.
int run_cli(int argc, const char* const* argv);

}  // namespace toolplay
