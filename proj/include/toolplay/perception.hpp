#pragma once

#include "toolplay/reconstruction.hpp"

namespace toolplay {

// Which pixels count as embodiment. Ground-truth mode uses the renderer's
// instance ids; external mode accepts a per-frame mask (nonzero = embodiment)
// so a learned segmenter can be plugged in.
struct SegmentationSource {
    enum class Mode { GroundTruth, External };
    Mode mode = Mode::GroundTruth;
    const Plane<std::uint8_t>* external_mask = nullptr;  // required in External mode
};

struct MaskedObservation {
    ImageRgb8 rgb;           // policy resolution (default 128x128)
    ImageRgb8 full_rgb;      // masked image at the source resolution
    std::string fill_mode;   // "background_plate" or "external_mask"
};

// Replace embodiment pixels with the background plate (same camera, same
// state, embodiment removed), then downsample to the policy resolution.
MaskedObservation mask_embodiment(const RenderOutput& render, const SegmentationSource& seg,
                                  const ImageRgb8& background_plate, int out_width = 128,
                                  int out_height = 128);

struct ToolPoseEstimate {
    Pose t_tool_camera;      // parent Camera(i), child Tool
    double residual_rms = 0; // meters, over inlier model points
    int inlier_count = 0;
    double timestamp = 0;    // seconds
    bool held = false;       // tracker rejected this frame and held the previous
};

// Pose-estimator analog: locates the tool's labeled model points (ray-cast
// visibility against the full scene, ground-truth depth plus isotropic
// noise), then rigidly aligns them to the canonical model inside RANSAC.
ToolPoseEstimate estimate_tool_pose(const std::vector<Primitive>& world_prims,
                                    const CameraModel& camera, const ToolModel& tool,
                                    const Pose& tool_world, double noise_sigma,
                                    std::uint64_t seed, const RansacParams& ransac,
                                    double timestamp = 0.0);

struct TrackGate {
    double max_trans = 0.05;  // meters per update
    double max_rot = 0.5;     // radians per update
    double alpha = 1.0;       // exponential smoothing toward the new estimate
};

// Temporal gate: hold the previous estimate when the new one jumps beyond
// the gate, otherwise blend prev -> next by alpha (1 = pass-through).
ToolPoseEstimate track_tool(const ToolPoseEstimate& prev, const ToolPoseEstimate& next,
                            const TrackGate& gate);

// Per-frame task-frame action labels: T_tool^task = T_camera^task T_tool^camera.
std::vector<Pose> label_actions(const std::vector<ToolPoseEstimate>& estimates,
                                const Pose& t_camera_task);

}  // namespace toolplay
