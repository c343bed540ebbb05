#include "toolplay/perception.hpp"

#include <cmath>

#include "toolplay/rng.hpp"

namespace toolplay {

MaskedObservation mask_embodiment(const RenderOutput& render, const SegmentationSource& seg,
                                  const ImageRgb8& background_plate, int out_width,
                                  int out_height) {
    const int w = render.rgb.width, h = render.rgb.height;
    if (background_plate.width != w || background_plate.height != h)
        throw MissingPlate("mask_embodiment: plate resolution mismatch");
    if (seg.mode == SegmentationSource::Mode::External) {
        if (!seg.external_mask || seg.external_mask->width != w ||
            seg.external_mask->height != h)
            throw MissingPlate("mask_embodiment: external mask missing or wrong size");
    }

    MaskedObservation out;
    out.full_rgb = render.rgb;
    out.fill_mode = seg.mode == SegmentationSource::Mode::GroundTruth ? "background_plate"
                                                                      : "external_mask";
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            bool emb = seg.mode == SegmentationSource::Mode::GroundTruth
                           ? is_embodiment_id(render.instance.at(x, y))
                           : seg.external_mask->at(x, y) != 0;
            if (!emb) continue;
            const std::uint8_t* p = background_plate.px(x, y);
            out.full_rgb.set(x, y, p[0], p[1], p[2]);
        }
    }
    out.rgb = (out_width == w && out_height == h) ? out.full_rgb
                                                  : resize_bilinear(out.full_rgb, out_width,
                                                                    out_height);
    return out;
}

ToolPoseEstimate estimate_tool_pose(const std::vector<Primitive>& world_prims,
                                    const CameraModel& camera, const ToolModel& tool,
                                    const Pose& tool_world, double noise_sigma,
                                    std::uint64_t seed, const RansacParams& ransac,
                                    double timestamp) {
    Rng rng(derive_seed(seed, "toolpose"));
    Pose cam_from_world = inverse(camera.pose);

    std::vector<Vec3> model, obs;  // canonical model point, observed camera-frame point
    for (const Vec3& mp : tool.model_points) {
        Vec3 pw = tool_world.transform_point(mp);
        if (!point_visible(world_prims, camera, pw)) continue;
        Vec3 noise(rng.normal(0, noise_sigma), rng.normal(0, noise_sigma),
                   rng.normal(0, noise_sigma));
        model.push_back(mp);
        obs.push_back(cam_from_world.transform_point(pw) + noise);
    }
    if (model.size() < 3)
        throw TooFewVisiblePoints("estimate_tool_pose: only " + std::to_string(model.size()) +
                                  " model points visible");

    Rng ransac_rng(derive_seed(ransac.seed, "toolpose-ransac"));
    const size_t m = model.size();
    std::vector<int> best;
    for (int it = 0; it < ransac.iters; ++it) {
        size_t a = ransac_rng.uniform_index(m), b = ransac_rng.uniform_index(m),
               c = ransac_rng.uniform_index(m);
        if (a == b || b == c || a == c) continue;
        SimilarityTransform hyp;
        try {
            hyp = umeyama({model[a], model[b], model[c]}, {obs[a], obs[b], obs[c]}, false);
        } catch (const DegenerateConfiguration&) {
            continue;
        }
        std::vector<int> inl;
        for (size_t i = 0; i < m; ++i)
            if ((hyp.apply(model[i]) - obs[i]).norm() <= ransac.inlier_tol)
                inl.push_back(static_cast<int>(i));
        if (inl.size() > best.size()) best = std::move(inl);
    }
    if (best.size() < 3) throw AlignmentFailure("estimate_tool_pose: no 3-point consensus");

    std::vector<Vec3> src, dst;
    for (int i : best) {
        src.push_back(model[i]);
        dst.push_back(obs[i]);
    }
    SimilarityTransform fit = umeyama(src, dst, false);

    ToolPoseEstimate est;
    est.t_tool_camera = Pose::make(fit.rotation, fit.translation,
                                   camera.pose.child_frame, FrameId::tool());
    double ss = 0;
    for (size_t i = 0; i < src.size(); ++i) ss += (fit.apply(src[i]) - dst[i]).squaredNorm();
    est.residual_rms = std::sqrt(ss / static_cast<double>(src.size()));
    est.inlier_count = static_cast<int>(best.size());
    est.timestamp = timestamp;
    return est;
}

ToolPoseEstimate track_tool(const ToolPoseEstimate& prev, const ToolPoseEstimate& next,
                            const TrackGate& gate) {
    if (next.timestamp <= prev.timestamp)
        throw DomainError("track_tool: timestamps not increasing");
    double dt_trans =
        (next.t_tool_camera.translation - prev.t_tool_camera.translation).norm();
    double dt_rot =
        geodesic_distance(prev.t_tool_camera.rotation, next.t_tool_camera.rotation);
    if (dt_trans > gate.max_trans || dt_rot > gate.max_rot) {
        ToolPoseEstimate held = prev;
        held.timestamp = next.timestamp;
        held.held = true;
        return held;
    }
    ToolPoseEstimate out = next;
    if (gate.alpha < 1.0)
        out.t_tool_camera = interpolate(prev.t_tool_camera, next.t_tool_camera, gate.alpha);
    out.held = false;
    return out;
}

std::vector<Pose> label_actions(const std::vector<ToolPoseEstimate>& estimates,
                                const Pose& t_camera_task) {
    std::vector<Pose> out;
    out.reserve(estimates.size());
    for (const auto& e : estimates)
        out.push_back(tool_pose_in_task(t_camera_task, e.t_tool_camera));
    return out;
}

}  // namespace toolplay
