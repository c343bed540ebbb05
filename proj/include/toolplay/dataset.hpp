#pragma once

#include <string>

#include "toolplay/perception.hpp"
#include "toolplay/sim.hpp"

namespace toolplay {

using Vec9 = Eigen::Matrix<double, 9, 1>;

// 9-dim action vector: translation + rot6d of a Tool-in-Task pose.
Vec9 action_vec(const Pose& t_tool_task);
Pose action_pose(const Vec9& v);  // decodes rot6d (Gram-Schmidt), Task -> Tool

struct Frame {
    ImageRgb8 rgb;       // masked observation at the policy resolution
    int camera_id = 0;
    double timestamp = 0;
};

struct Episode {
    std::vector<std::vector<Frame>> steps;  // one frame per camera per step
    std::vector<Pose> actions;              // Tool in Task, one per step
    std::vector<Pose> gt_poses;             // simulator truth, evaluation only
    bool gt_success = false;
    bool augmented = false;                 // provenance: demo vs synthesized view
    std::uint64_t seed = 0;
    TaskKind task = TaskKind::Hammer;
    double fov_x_deg = 55.0;
    int obs_width = 128, obs_height = 128;

    size_t length() const { return steps.size(); }
};

struct RecordOptions {
    double pose_noise_sigma = 0.0;  // tool-pose estimator noise
    std::uint64_t noise_seed = 0;
    int obs_width = 128, obs_height = 128;
    RansacParams ransac;
    TrackGate gate;
};

// Replays the demo through step(), renders + masks every camera per step,
// estimates the tool pose from the first camera and labels actions in the
// Task frame via t_camera_task[0]. Throws PlanFailure when the demo does
// not end in task success.
Episode record_episode(const Scene& scene, std::uint64_t demo_seed, const Trajectory& demo,
                       const std::vector<CameraModel>& cameras,
                       const std::vector<Pose>& t_camera_task,
                       const RecordOptions& opts = {});

// One derived episode per novel camera stream; actions copied verbatim,
// provenance marked augmented. novel[c][i] replaces step i's frames.
std::vector<Episode> merge_augmented(const Episode& base,
                                     const std::vector<std::vector<Frame>>& novel);

struct NormStats {
    Vec9 min = Vec9::Zero(), max = Vec9::Zero();
    std::array<bool, 9> degenerate{};  // max - min below tolerance; pinned to midpoint
};

NormStats fit_norm(const std::vector<Episode>& episodes);
Vec9 normalize(const NormStats& stats, const Vec9& a);    // [-1, 1] per dimension
Vec9 denormalize(const NormStats& stats, const Vec9& n);

struct Chunk {
    std::vector<ImageRgb8> obs;     // n_obs cropped images, oldest first
    std::vector<Vec9> obs_actions;  // normalized action at each obs step (proprio)
    std::vector<Vec9> actions;      // n_act normalized future actions
    int episode = 0, camera = 0, start = 0;  // provenance for tests
};

struct ChunkOptions {
    int n_obs = 2;
    int n_act = 16;
    double crop_frac = 0.9;  // random_crop size fraction; 1 disables cropping
};

// Uniform over (episode, camera, valid start); horizons past the episode end
// appear only for episodes shorter than n_obs + n_act and repeat the last
// action. Deterministic per seed.
std::vector<Chunk> sample_chunks(const std::vector<Episode>& episodes, const NormStats& stats,
                                 int batch, std::uint64_t seed, const ChunkOptions& opts = {});

// On-disk container: directory with `manifest`, frames/NNNNN_camK.png,
// actions.bin and gt.bin (7 little-endian doubles per step each).
void write_episode(const Episode& ep, const std::string& dir);
Episode read_episode(const std::string& dir);

struct DatasetIndex {
    std::vector<std::string> dirs;    // episode directories, relative to root
    std::vector<std::string> splits;  // "train" or "eval", parallel to dirs
};

void write_index(const std::string& path, const DatasetIndex& index);
DatasetIndex read_index(const std::string& path);

}  // namespace toolplay
