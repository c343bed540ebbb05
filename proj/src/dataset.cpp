#include "toolplay/dataset.hpp"

#include <array>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "toolplay/png_io.hpp"
#include "toolplay/rng.hpp"
#include "toolplay/view_aug.hpp"

namespace fs = std::filesystem;

namespace toolplay {

Vec9 action_vec(const Pose& t_tool_task) {
    Vec9 v;
    v.head<3>() = t_tool_task.translation;
    v.tail<6>() = Rot6d::encode(t_tool_task.rotation).v;
    return v;
}

Pose action_pose(const Vec9& v) {
    Rot6d r;
    r.v = v.tail<6>();
    return Pose::make(r.decode(), v.head<3>(), FrameId::task(), FrameId::tool());
}

Episode record_episode(const Scene& scene, std::uint64_t demo_seed, const Trajectory& demo,
                       const std::vector<CameraModel>& cameras,
                       const std::vector<Pose>& t_camera_task, const RecordOptions& opts) {
    if (demo.poses.empty()) throw EmptyDataset("record_episode: empty demo");
    if (cameras.empty() || cameras.size() != t_camera_task.size())
        throw LengthMismatch("record_episode: cameras/calibrations mismatch");

    Scene plate_scene = scene;
    plate_scene.embodiment = EmbodimentKind::None;

    Episode ep;
    ep.seed = demo_seed;
    ep.task = scene.task.kind;
    ep.obs_width = opts.obs_width;
    ep.obs_height = opts.obs_height;

    SceneState st = initial_state(scene, demo_seed);
    std::vector<ToolPoseEstimate> ests;
    SegmentationSource seg;
    for (size_t i = 0; i < demo.poses.size(); ++i) {
        if (i > 0) st = step(scene, st, demo.poses[i], demo.timestamps[i] - st.time);

        auto prims = instantiate(scene, st);
        auto plate_prims = instantiate(plate_scene, st);
        std::vector<Frame> frames;
        for (const CameraModel& cam : cameras) {
            RenderOutput r = render(prims, cam);
            ImageRgb8 plate = render(plate_prims, cam).rgb;
            MaskedObservation obs =
                mask_embodiment(r, seg, plate, opts.obs_width, opts.obs_height);
            Frame f;
            f.rgb = std::move(obs.rgb);
            f.camera_id = cam.pose.child_frame.index;
            f.timestamp = demo.timestamps[i];
            frames.push_back(std::move(f));
        }
        ep.steps.push_back(std::move(frames));

        ToolPoseEstimate est = estimate_tool_pose(
            prims, cameras[0], scene.tool, st.tool_world, opts.pose_noise_sigma,
            derive_seed(opts.noise_seed, "record", i), opts.ransac, demo.timestamps[i]);
        if (!ests.empty()) est = track_tool(ests.back(), est, opts.gate);
        ests.push_back(est);
        ep.gt_poses.push_back(compose(inverse(scene.t_task_world), st.tool_world));
    }
    ep.actions = label_actions(ests, t_camera_task[0]);
    ep.gt_success = st.success;
    if (!st.success) throw PlanFailure("record_episode: demo did not solve the task");
    return ep;
}

std::vector<Episode> merge_augmented(const Episode& base,
                                     const std::vector<std::vector<Frame>>& novel) {
    std::vector<Episode> out;
    for (const auto& stream : novel) {
        if (stream.size() != base.steps.size())
            throw LengthMismatch("merge_augmented: stream length != base episode");
        Episode ep = base;
        ep.augmented = true;
        for (size_t i = 0; i < stream.size(); ++i) ep.steps[i] = {stream[i]};
        out.push_back(std::move(ep));
    }
    return out;
}

NormStats fit_norm(const std::vector<Episode>& episodes) {
    NormStats stats;
    bool first = true;
    for (const Episode& ep : episodes) {
        for (const Pose& a : ep.actions) {
            Vec9 v = action_vec(a);
            if (first) {
                stats.min = stats.max = v;
                first = false;
            } else {
                stats.min = stats.min.cwiseMin(v);
                stats.max = stats.max.cwiseMax(v);
            }
        }
    }
    if (first) throw EmptyDataset("fit_norm: no actions");
    for (int d = 0; d < 9; ++d) stats.degenerate[d] = stats.max[d] - stats.min[d] < 1e-12;
    return stats;
}

Vec9 normalize(const NormStats& stats, const Vec9& a) {
    Vec9 out;
    for (int d = 0; d < 9; ++d)
        out[d] = stats.degenerate[d]
                     ? 0.0
                     : 2.0 * (a[d] - stats.min[d]) / (stats.max[d] - stats.min[d]) - 1.0;
    return out;
}

Vec9 denormalize(const NormStats& stats, const Vec9& n) {
    Vec9 out;
    for (int d = 0; d < 9; ++d)
        out[d] = stats.degenerate[d]
                     ? 0.5 * (stats.min[d] + stats.max[d])
                     : stats.min[d] + 0.5 * (n[d] + 1.0) * (stats.max[d] - stats.min[d]);
    return out;
}

std::vector<Chunk> sample_chunks(const std::vector<Episode>& episodes, const NormStats& stats,
                                 int batch, std::uint64_t seed, const ChunkOptions& opts) {
    if (episodes.empty()) throw EmptyDataset("sample_chunks: no episodes");
    struct Stream {
        int episode, camera, starts;
    };
    std::vector<Stream> streams;
    size_t total = 0;
    for (size_t e = 0; e < episodes.size(); ++e) {
        const Episode& ep = episodes[e];
        int len = static_cast<int>(ep.length());
        if (len < opts.n_obs) continue;
        int starts = std::max(1, len - opts.n_obs - opts.n_act + 1);
        for (size_t c = 0; c < ep.steps[0].size(); ++c) {
            streams.push_back({static_cast<int>(e), static_cast<int>(c), starts});
            total += starts;
        }
    }
    if (total == 0) throw EmptyDataset("sample_chunks: no episode long enough");

    Rng rng(derive_seed(seed, "chunks"));
    std::vector<Chunk> out;
    out.reserve(batch);
    for (int b = 0; b < batch; ++b) {
        size_t draw = rng.uniform_index(total);
        const Stream* st = nullptr;
        for (const Stream& s : streams) {
            if (draw < static_cast<size_t>(s.starts)) {
                st = &s;
                break;
            }
            draw -= s.starts;
        }
        const Episode& ep = episodes[st->episode];
        int len = static_cast<int>(ep.length());
        Chunk ch;
        ch.episode = st->episode;
        ch.camera = st->camera;
        ch.start = static_cast<int>(draw);
        for (int j = 0; j < opts.n_obs; ++j) {
            int idx = std::min(ch.start + j, len - 1);
            const ImageRgb8& img = ep.steps[idx][st->camera].rgb;
            if (opts.crop_frac < 1.0) {
                int cw = static_cast<int>(std::lround(opts.crop_frac * img.width));
                int chh = static_cast<int>(std::lround(opts.crop_frac * img.height));
                ch.obs.push_back(random_crop(img, cw, chh,
                                             derive_seed(seed, "crop",
                                                         static_cast<std::uint64_t>(b) *
                                                                 opts.n_obs +
                                                             j)));
            } else {
                ch.obs.push_back(img);
            }
            ch.obs_actions.push_back(normalize(stats, action_vec(ep.actions[idx])));
        }
        int t = ch.start + opts.n_obs - 1;  // last observed step
        for (int j = 1; j <= opts.n_act; ++j) {
            int idx = std::min(t + j, len - 1);  // repeat last action when short
            ch.actions.push_back(normalize(stats, action_vec(ep.actions[idx])));
        }
        out.push_back(std::move(ch));
    }
    return out;
}

namespace {

const char* task_name(TaskKind k) {
    switch (k) {
        case TaskKind::Hammer: return "hammer";
        case TaskKind::Scoop: return "scoop";
        case TaskKind::Flip: return "flip";
    }
    return "hammer";
}

TaskKind task_from(const std::string& s) {
    if (s == "hammer") return TaskKind::Hammer;
    if (s == "scoop") return TaskKind::Scoop;
    if (s == "flip") return TaskKind::Flip;
    throw MissingArtifact("unknown task name: " + s);
}

void write_poses(const std::string& path, const std::vector<Pose>& poses) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw MissingArtifact("cannot write " + path);
    for (const Pose& p : poses) {
        auto a = p.serialize();
        f.write(reinterpret_cast<const char*>(a.data()), sizeof(double) * 7);
    }
}

std::vector<Pose> read_poses(const std::string& path, size_t n) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw MissingArtifact("cannot read " + path);
    std::vector<Pose> out;
    for (size_t i = 0; i < n; ++i) {
        std::array<double, 7> a;
        f.read(reinterpret_cast<char*>(a.data()), sizeof(double) * 7);
        if (!f) throw MissingArtifact("truncated pose file " + path);
        out.push_back(Pose::deserialize(a, FrameId::task(), FrameId::tool()));
    }
    return out;
}

}  // namespace

void write_episode(const Episode& ep, const std::string& dir) {
    fs::create_directories(fs::path(dir) / "frames");
    std::ofstream mf(fs::path(dir) / "manifest");
    if (!mf) throw MissingArtifact("cannot write manifest in " + dir);
    mf.precision(17);
    mf << "format = 1\n";
    mf << "seed = " << ep.seed << "\n";
    mf << "task = " << task_name(ep.task) << "\n";
    mf << "steps = " << ep.steps.size() << "\n";
    mf << "fov_x_deg = " << ep.fov_x_deg << "\n";
    mf << "obs_width = " << ep.obs_width << "\n";
    mf << "obs_height = " << ep.obs_height << "\n";
    mf << "augmented = " << (ep.augmented ? 1 : 0) << "\n";
    mf << "gt_success = " << (ep.gt_success ? 1 : 0) << "\n";
    mf << "cameras =";
    if (!ep.steps.empty())
        for (const Frame& f : ep.steps[0]) mf << ' ' << f.camera_id;
    mf << "\ntimestamps =";
    for (const auto& s : ep.steps) mf << ' ' << s[0].timestamp;
    mf << "\n";

    char name[64];
    for (size_t i = 0; i < ep.steps.size(); ++i) {
        for (const Frame& f : ep.steps[i]) {
            std::snprintf(name, sizeof(name), "%05zu_cam%d.png", i, f.camera_id);
            write_png((fs::path(dir) / "frames" / name).string(), f.rgb);
        }
    }
    write_poses((fs::path(dir) / "actions.bin").string(), ep.actions);
    write_poses((fs::path(dir) / "gt.bin").string(), ep.gt_poses);
}

Episode read_episode(const std::string& dir) {
    std::ifstream mf(fs::path(dir) / "manifest");
    if (!mf) throw MissingArtifact("cannot read manifest in " + dir);
    Episode ep;
    size_t steps = 0;
    std::vector<int> camera_ids;
    std::vector<double> timestamps;
    std::string line;
    while (std::getline(mf, line)) {
        std::istringstream ls(line);
        std::string key, eq;
        if (!(ls >> key >> eq) || eq != "=") continue;
        if (key == "seed") ls >> ep.seed;
        else if (key == "task") { std::string t; ls >> t; ep.task = task_from(t); }
        else if (key == "steps") ls >> steps;
        else if (key == "fov_x_deg") ls >> ep.fov_x_deg;
        else if (key == "obs_width") ls >> ep.obs_width;
        else if (key == "obs_height") ls >> ep.obs_height;
        else if (key == "augmented") { int v; ls >> v; ep.augmented = v != 0; }
        else if (key == "gt_success") { int v; ls >> v; ep.gt_success = v != 0; }
        else if (key == "cameras") { int id; while (ls >> id) camera_ids.push_back(id); }
        else if (key == "timestamps") { double t; while (ls >> t) timestamps.push_back(t); }
    }
    if (timestamps.size() != steps) throw MissingArtifact("manifest timestamps mismatch in " + dir);

    char name[64];
    for (size_t i = 0; i < steps; ++i) {
        std::vector<Frame> frames;
        for (int id : camera_ids) {
            std::snprintf(name, sizeof(name), "%05zu_cam%d.png", i, id);
            Frame f;
            f.rgb = read_png((fs::path(dir) / "frames" / name).string());
            f.camera_id = id;
            f.timestamp = timestamps[i];
            frames.push_back(std::move(f));
        }
        ep.steps.push_back(std::move(frames));
    }
    ep.actions = read_poses((fs::path(dir) / "actions.bin").string(), steps);
    ep.gt_poses = read_poses((fs::path(dir) / "gt.bin").string(), steps);
    return ep;
}

void write_index(const std::string& path, const DatasetIndex& index) {
    if (index.dirs.size() != index.splits.size())
        throw LengthMismatch("write_index: dirs/splits mismatch");
    std::ofstream f(path);
    if (!f) throw MissingArtifact("cannot write " + path);
    for (size_t i = 0; i < index.dirs.size(); ++i)
        f << index.dirs[i] << ' ' << index.splits[i] << '\n';
}

DatasetIndex read_index(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw MissingArtifact("cannot read " + path);
    DatasetIndex idx;
    std::string dir, split;
    while (f >> dir >> split) {
        idx.dirs.push_back(dir);
        idx.splits.push_back(split);
    }
    return idx;
}

}  // namespace toolplay
