#include "toolplay/pipeline.hpp"

#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "json.hpp"
#include "toolplay/render.hpp"
#include "toolplay/rng.hpp"
#include "toolplay/view_aug.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace toolplay {

namespace {

[[noreturn]] void bad(const std::string& msg) { throw ConfigError("config: " + msg); }

void check_keys(const json& obj, const std::string& prefix,
                std::initializer_list<const char*> allowed) {
    if (!obj.is_object()) bad(prefix.empty() ? "root must be an object" : prefix + " must be an object");
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        bool ok = false;
        for (const char* a : allowed)
            if (it.key() == a) { ok = true; break; }
        if (!ok) bad("unknown key " + (prefix.empty() ? it.key() : prefix + "." + it.key()));
    }
}

double num(const json& obj, const char* key, double dflt, const std::string& prefix) {
    if (!obj.contains(key)) return dflt;
    const json& v = obj.at(key);
    if (!v.is_number()) bad(prefix + key + " must be a number");
    return v.get<double>();
}

int integer(const json& obj, const char* key, int dflt, const std::string& prefix) {
    if (!obj.contains(key)) return dflt;
    const json& v = obj.at(key);
    if (!v.is_number_integer()) bad(prefix + key + " must be an integer");
    return v.get<int>();
}

bool boolean(const json& obj, const char* key, bool dflt, const std::string& prefix) {
    if (!obj.contains(key)) return dflt;
    const json& v = obj.at(key);
    if (!v.is_boolean()) bad(prefix + key + " must be a boolean");
    return v.get<bool>();
}

std::string str(const json& obj, const char* key, const std::string& dflt,
                const std::string& prefix) {
    if (!obj.contains(key)) return dflt;
    const json& v = obj.at(key);
    if (!v.is_string()) bad(prefix + key + " must be a string");
    return v.get<std::string>();
}

TaskKind parse_task(const std::string& name) {
    if (name == "hammer") return TaskKind::Hammer;
    if (name == "scoop") return TaskKind::Scoop;
    if (name == "flip") return TaskKind::Flip;
    bad("scene.task must be one of hammer|scoop|flip, got '" + name + "'");
}

void apply_override(json& root, const std::string& kv) {
    size_t eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) bad("--set expects key=value, got '" + kv + "'");
    std::string path = kv.substr(0, eq), value = kv.substr(eq + 1);
    json parsed;
    try {
        parsed = json::parse(value);
    } catch (const json::parse_error&) {
        parsed = value;  // bare strings need no quoting
    }
    json* cur = &root;
    size_t pos = 0;
    for (;;) {
        size_t dot = path.find('.', pos);
        std::string tok = path.substr(pos, dot - pos);
        if (tok.empty()) bad("--set key has an empty path segment: '" + path + "'");
        if (dot == std::string::npos) {
            (*cur)[tok] = parsed;
            return;
        }
        if (cur->contains(tok) && !(*cur)[tok].is_object())
            bad("--set path " + path + " descends into a non-object");
        cur = &(*cur)[tok];
        pos = dot + 1;
    }
}

PipelineConfig from_json(const json& j) {
    check_keys(j, "", {"seed", "output_root", "scene", "camera", "reconstruction",
                       "augmentation", "policy", "rollout"});
    PipelineConfig cfg;
    if (j.contains("seed")) {
        const json& v = j.at("seed");
        if (!v.is_number_integer() || v.get<long long>() < 0)
            bad("seed must be a non-negative integer");
        cfg.seed = v.get<std::uint64_t>();
    }
    cfg.output_root = str(j, "output_root", cfg.output_root, "");

    json empty = json::object();
    const json& sc = j.contains("scene") ? j.at("scene") : empty;
    check_keys(sc, "scene", {"task", "cam_height", "cam_width"});
    cfg.scene.task = parse_task(str(sc, "task", "hammer", "scene."));
    cfg.scene.cam_height = integer(sc, "cam_height", cfg.scene.cam_height, "scene.");
    cfg.scene.cam_width = integer(sc, "cam_width", cfg.scene.cam_width, "scene.");
    if (cfg.scene.cam_height < 16 || cfg.scene.cam_width < 16)
        bad("scene camera resolution must be at least 16x16");

    const json& ca = j.contains("camera") ? j.at("camera") : empty;
    check_keys(ca, "camera",
               {"obs_width", "obs_height", "pose_noise_sigma", "pointmap_noise_sigma"});
    cfg.camera.obs_width = integer(ca, "obs_width", cfg.camera.obs_width, "camera.");
    cfg.camera.obs_height = integer(ca, "obs_height", cfg.camera.obs_height, "camera.");
    cfg.camera.pose_noise_sigma = num(ca, "pose_noise_sigma", 0.0, "camera.");
    cfg.camera.pointmap_noise_sigma = num(ca, "pointmap_noise_sigma", 0.0, "camera.");
    if (cfg.camera.obs_width < 8 || cfg.camera.obs_height < 8)
        bad("camera observation resolution must be at least 8x8");
    if (cfg.camera.pose_noise_sigma < 0 || cfg.camera.pointmap_noise_sigma < 0)
        bad("camera noise sigmas must be non-negative");

    const json& re = j.contains("reconstruction") ? j.at("reconstruction") : empty;
    check_keys(re, "reconstruction",
               {"matches", "outlier_frac", "noise_sigma", "ransac_iters", "inlier_tol"});
    cfg.reconstruction.matches = integer(re, "matches", cfg.reconstruction.matches, "reconstruction.");
    cfg.reconstruction.outlier_frac =
        num(re, "outlier_frac", cfg.reconstruction.outlier_frac, "reconstruction.");
    cfg.reconstruction.noise_sigma =
        num(re, "noise_sigma", cfg.reconstruction.noise_sigma, "reconstruction.");
    cfg.reconstruction.ransac.iters =
        integer(re, "ransac_iters", cfg.reconstruction.ransac.iters, "reconstruction.");
    cfg.reconstruction.ransac.inlier_tol =
        num(re, "inlier_tol", cfg.reconstruction.ransac.inlier_tol, "reconstruction.");
    if (cfg.reconstruction.matches < 3) bad("reconstruction.matches must be at least 3");
    if (cfg.reconstruction.outlier_frac < 0 || cfg.reconstruction.outlier_frac >= 1)
        bad("reconstruction.outlier_frac must be in [0, 1)");
    if (cfg.reconstruction.ransac.iters < 1) bad("reconstruction.ransac_iters must be positive");

    const json& au = j.contains("augmentation") ? j.at("augmentation") : empty;
    check_keys(au, "augmentation",
               {"enabled", "views", "cap_deg", "radial_jitter", "knn", "stride"});
    cfg.augmentation.enabled = boolean(au, "enabled", cfg.augmentation.enabled, "augmentation.");
    cfg.augmentation.views = integer(au, "views", cfg.augmentation.views, "augmentation.");
    cfg.augmentation.cap_deg = num(au, "cap_deg", cfg.augmentation.cap_deg, "augmentation.");
    cfg.augmentation.radial_jitter =
        num(au, "radial_jitter", cfg.augmentation.radial_jitter, "augmentation.");
    cfg.augmentation.knn = integer(au, "knn", cfg.augmentation.knn, "augmentation.");
    cfg.augmentation.stride = integer(au, "stride", cfg.augmentation.stride, "augmentation.");
    if (cfg.augmentation.views < 1) bad("augmentation.views must be positive");
    if (cfg.augmentation.knn < 1) bad("augmentation.knn must be positive");
    if (cfg.augmentation.stride < 1) bad("augmentation.stride must be positive");

    const json& po = j.contains("policy") ? j.at("policy") : empty;
    check_keys(po, "policy",
               {"n_obs", "n_act", "c1", "c2", "c3", "embed", "hidden", "t_embed",
                "diffusion_steps", "steps", "batch", "lr", "lr_decay", "crop_frac",
                "checkpoint_every"});
    cfg.policy.n_obs = integer(po, "n_obs", cfg.policy.n_obs, "policy.");
    cfg.policy.n_act = integer(po, "n_act", cfg.policy.n_act, "policy.");
    cfg.policy.c1 = integer(po, "c1", cfg.policy.c1, "policy.");
    cfg.policy.c2 = integer(po, "c2", cfg.policy.c2, "policy.");
    cfg.policy.c3 = integer(po, "c3", cfg.policy.c3, "policy.");
    cfg.policy.embed = integer(po, "embed", cfg.policy.embed, "policy.");
    cfg.policy.hidden = integer(po, "hidden", cfg.policy.hidden, "policy.");
    cfg.policy.t_embed = integer(po, "t_embed", cfg.policy.t_embed, "policy.");
    cfg.policy.diffusion_steps = integer(po, "diffusion_steps", cfg.policy.diffusion_steps, "policy.");
    cfg.policy.steps = integer(po, "steps", cfg.policy.steps, "policy.");
    cfg.policy.batch = integer(po, "batch", cfg.policy.batch, "policy.");
    cfg.policy.lr = num(po, "lr", cfg.policy.lr, "policy.");
    cfg.policy.lr_decay = boolean(po, "lr_decay", cfg.policy.lr_decay, "policy.");
    cfg.policy.crop_frac = num(po, "crop_frac", cfg.policy.crop_frac, "policy.");
    cfg.policy.checkpoint_every = integer(po, "checkpoint_every", 0, "policy.");
    if (cfg.policy.n_obs < 1 || cfg.policy.n_act < 1) bad("policy.n_obs/n_act must be positive");
    if (cfg.policy.steps < 1 || cfg.policy.batch < 1) bad("policy.steps/batch must be positive");
    if (cfg.policy.diffusion_steps < 1) bad("policy.diffusion_steps must be positive");
    if (cfg.policy.lr < 0) bad("policy.lr must be non-negative");
    if (cfg.policy.crop_frac <= 0 || cfg.policy.crop_frac > 1)
        bad("policy.crop_frac must be in (0, 1]");

    const json& ro = j.contains("rollout") ? j.at("rollout") : empty;
    check_keys(ro, "rollout",
               {"episodes", "control_rate_hz", "step_budget", "execute_horizon", "masking",
                "sampler", "sampler_steps", "base_amplitude", "base_freq_hz", "base_noise_sigma",
                "camera_amplitude", "camera_rot_amplitude", "camera_freq_hz", "camera_offset",
                "eef_calib_noise_sigma", "grid_n", "grid_extent", "variants"});
    RolloutSection& rs = cfg.rollout;
    rs.episodes = integer(ro, "episodes", rs.episodes, "rollout.");
    rs.control_rate_hz = num(ro, "control_rate_hz", rs.control_rate_hz, "rollout.");
    rs.step_budget = integer(ro, "step_budget", rs.step_budget, "rollout.");
    rs.execute_horizon = integer(ro, "execute_horizon", rs.execute_horizon, "rollout.");
    rs.masking = boolean(ro, "masking", rs.masking, "rollout.");
    rs.sampler = str(ro, "sampler", rs.sampler, "rollout.");
    rs.sampler_steps = integer(ro, "sampler_steps", rs.sampler_steps, "rollout.");
    rs.base_amplitude = num(ro, "base_amplitude", 0.0, "rollout.");
    rs.base_freq_hz = num(ro, "base_freq_hz", rs.base_freq_hz, "rollout.");
    rs.base_noise_sigma = num(ro, "base_noise_sigma", 0.0, "rollout.");
    rs.camera_amplitude = num(ro, "camera_amplitude", 0.0, "rollout.");
    rs.camera_rot_amplitude = num(ro, "camera_rot_amplitude", 0.0, "rollout.");
    rs.camera_freq_hz = num(ro, "camera_freq_hz", rs.camera_freq_hz, "rollout.");
    rs.eef_calib_noise_sigma = num(ro, "eef_calib_noise_sigma", 0.0, "rollout.");
    rs.grid_n = integer(ro, "grid_n", rs.grid_n, "rollout.");
    rs.grid_extent = num(ro, "grid_extent", rs.grid_extent, "rollout.");
    if (ro.contains("camera_offset")) {
        const json& v = ro.at("camera_offset");
        if (!v.is_array() || v.size() != 3 || !v[0].is_number() || !v[1].is_number() ||
            !v[2].is_number())
            bad("rollout.camera_offset must be an array of 3 numbers");
        rs.camera_offset = Vec3(v[0].get<double>(), v[1].get<double>(), v[2].get<double>());
    }
    if (ro.contains("variants")) {
        const json& v = ro.at("variants");
        if (!v.is_array()) bad("rollout.variants must be an array");
        for (const json& item : v) {
            check_keys(item, "rollout.variants[]", {"name", "checkpoint", "masking"});
            VariantSection vs;
            vs.name = str(item, "name", "", "rollout.variants[].");
            vs.checkpoint = str(item, "checkpoint", "", "rollout.variants[].");
            vs.masking = boolean(item, "masking", true, "rollout.variants[].");
            if (vs.name.empty() || vs.checkpoint.empty())
                bad("rollout.variants entries need name and checkpoint");
            rs.variants.push_back(std::move(vs));
        }
    }
    if (rs.episodes < 0) bad("rollout.episodes must be non-negative");
    if (rs.control_rate_hz < 5.0 || rs.control_rate_hz > 30.0)
        bad("rollout.control_rate_hz must be in [5, 30]");
    if (rs.step_budget < 1) bad("rollout.step_budget must be positive");
    if (rs.execute_horizon < 1 || rs.execute_horizon > cfg.policy.n_act)
        bad("rollout.execute_horizon must be in [1, policy.n_act]");
    if (rs.sampler != "ddim" && rs.sampler != "ddpm")
        bad("rollout.sampler must be ddim or ddpm, got '" + rs.sampler + "'");
    if (rs.sampler_steps < 1) bad("rollout.sampler_steps must be positive");
    if (rs.grid_n < 1) bad("rollout.grid_n must be positive");
    if (rs.grid_extent < 0) bad("rollout.grid_extent must be non-negative");
    return cfg;
}

std::string name_indexed(const char* prefix, int i, const char* suffix = "") {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%s%05d%s", prefix, i, suffix);
    return buf;
}

// Episode-level parallelism with deterministic slot assignment; the first
// worker exception is rethrown after all threads join.
void parallel_for(int n, int jobs, const std::function<void(int)>& fn) {
    jobs = std::max(1, std::min(jobs, n));
    if (jobs <= 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<int> next{0};
    std::mutex mu;
    std::exception_ptr err;
    std::vector<std::thread> pool;
    for (int w = 0; w < jobs; ++w)
        pool.emplace_back([&] {
            for (;;) {
                int i = next.fetch_add(1);
                if (i >= n) return;
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lk(mu);
                    if (!err) err = std::current_exception();
                    return;
                }
            }
        });
    for (auto& t : pool) t.join();
    if (err) std::rethrow_exception(err);
}

DatasetIndex read_index_checked(const std::string& path) {
    if (!fs::exists(path)) throw MissingArtifact("expected dataset index at " + path);
    return read_index(path);
}

std::vector<Pose> calibrate_demo_cameras(const Scene& scene, const SceneState& st0,
                                         double noise_sigma, std::uint64_t seed) {
    std::vector<Vec3> fid = fiducial_world(scene);
    std::vector<Pose> calib;
    for (size_t k = 0; k < scene.demo_cameras.size(); ++k) {
        const CameraModel& cam = scene.demo_cameras[k];
        RenderOutput r = render(scene, st0, cam);
        PointMap pm = synth_pointmap(r, cam, noise_sigma, derive_seed(seed, "calib", k), 1.0, fid);
        calib.push_back(camera_to_task(pm, scene.fiducial_model));
    }
    return calib;
}

// Replays a recorded episode's demo and emits `views` temporally consistent
// novel streams: per step, the embodiment-free render from demo camera 0 is
// backprojected to a metric cloud, splatted, and re-rendered from novel
// viewpoints sampled once per episode.
std::vector<std::vector<Frame>> novel_streams(const PipelineConfig& cfg, const Episode& ep) {
    Scene scene = make_scene(ep.task, EmbodimentKind::Hand, ep.seed, cfg.scene.cam_height,
                             cfg.scene.cam_width);
    Trajectory demo = scripted_demo(scene, ep.seed);
    Scene plate_scene = scene;
    plate_scene.embodiment = EmbodimentKind::None;
    const CameraModel& cam0 = scene.demo_cameras[0];

    CameraModel base = cam0;  // novel cameras live in camera 0's frame
    base.pose = Pose::make(Rotation::identity(), Vec3::Zero(), cam0.pose.parent_frame,
                           cam0.pose.child_frame);
    Vec3 look_at = inverse(cam0.pose).transform_point(scene.look_at_point);
    NovelViewSpec spec;
    spec.cap_deg = cfg.augmentation.cap_deg;
    spec.radial_jitter = cfg.augmentation.radial_jitter;
    spec.count = cfg.augmentation.views;
    spec.seed = derive_seed(ep.seed, "novel");
    std::vector<CameraModel> cams = sample_novel_cameras(base, look_at, spec);

    std::vector<std::vector<Frame>> streams(cams.size());
    SceneState st = initial_state(scene, ep.seed);
    int stride = cfg.augmentation.stride;
    for (size_t i = 0; i < demo.poses.size(); ++i) {
        if (i > 0) st = step(scene, st, demo.poses[i], demo.timestamps[i] - st.time);
        RenderOutput r = render(instantiate(plate_scene, st), cam0);
        FusedCloud cloud;
        for (int y = 0; y < r.depth.height; y += stride)
            for (int x = 0; x < r.depth.width; x += stride) {
                float d = r.depth.at(x, y);
                if (d <= 0) continue;
                cloud.points.push_back(cam0.backproject(x + 0.5, y + 0.5, d));
                const std::uint8_t* px = r.rgb.px(x, y);
                cloud.colors.push_back(Vec3(px[0], px[1], px[2]) / 255.0);
                cloud.source_view.push_back(0);
            }
        std::vector<Splat> splats = cloud_to_splats(cloud, cfg.augmentation.knn);
        for (size_t v = 0; v < cams.size(); ++v) {
            SplatRender sr = render_splats(splats, cams[v]);
            Frame f;
            f.rgb = resize_bilinear(sr.rgb, ep.obs_width, ep.obs_height);
            f.camera_id = 100 + static_cast<int>(v);
            f.timestamp = demo.timestamps[i];
            streams[v].push_back(std::move(f));
        }
    }
    return streams;
}

std::vector<Episode> load_training_set(const PipelineConfig& cfg, const Artifacts& art) {
    DatasetIndex index = read_index_checked(art.index());
    std::vector<Episode> episodes;
    for (const std::string& d : index.dirs)
        episodes.push_back(read_episode(art.episodes_root() + "/" + d));
    if (cfg.augmentation.enabled) {
        DatasetIndex aug = read_index_checked(art.aug_index());
        for (const std::string& d : aug.dirs)
            episodes.push_back(read_episode(art.aug_root() + "/" + d));
    }
    return episodes;
}

NetConfig net_config(const PipelineConfig& cfg) {
    NetConfig nc;
    nc.obs_w = cfg.camera.obs_width;
    nc.obs_h = cfg.camera.obs_height;
    nc.n_obs = cfg.policy.n_obs;
    nc.n_act = cfg.policy.n_act;
    nc.c1 = cfg.policy.c1;
    nc.c2 = cfg.policy.c2;
    nc.c3 = cfg.policy.c3;
    nc.embed = cfg.policy.embed;
    nc.hidden = cfg.policy.hidden;
    nc.t_embed = cfg.policy.t_embed;
    nc.T = cfg.policy.diffusion_steps;
    return nc;
}

std::string resolve_path(const PipelineConfig& cfg, const std::string& p) {
    return fs::path(p).is_absolute() ? p : cfg.output_root + "/" + p;
}

}  // namespace

std::string Artifacts::episode(int i) const {
    return episodes_root() + "/" + name_indexed("ep_", i);
}
std::string Artifacts::recon_points(int i) const {
    return recon_root() + "/" + name_indexed("ep_", i, ".points.txt");
}
std::string Artifacts::recon_meta(int i) const {
    return recon_root() + "/" + name_indexed("ep_", i, ".meta.txt");
}
std::string Artifacts::aug_episode(int i, int view) const {
    return aug_root() + "/" + name_indexed("ep_", i) + "_v" + std::to_string(view);
}

PipelineConfig parse_config(const std::string& json_text,
                            const std::vector<std::string>& overrides) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::parse_error& e) {
        bad(std::string("invalid JSON: ") + e.what());
    }
    for (const std::string& kv : overrides) apply_override(j, kv);
    return from_json(j);
}

PipelineConfig load_config(const std::string& path, const std::vector<std::string>& overrides) {
    std::ifstream f(path);
    if (!f) bad("cannot open " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return parse_config(ss.str(), overrides);
}

void cmd_collect(const PipelineConfig& cfg, int n_episodes, int jobs, bool dry_run) {
    if (n_episodes < 0) throw ConfigError("collect: episode count must be non-negative");
    Artifacts art = artifacts(cfg);
    if (dry_run) return;  // no upstream inputs beyond the validated config

    // Placement seeds whose scripted demo solves the task; unreachable
    // placements are skipped deterministically.
    std::vector<std::uint64_t> seeds;
    for (std::uint64_t attempt = 0; static_cast<int>(seeds.size()) < n_episodes; ++attempt) {
        if (attempt >= 20ull * static_cast<std::uint64_t>(n_episodes) + 100)
            throw PlanFailure("collect: too many unreachable placements");
        std::uint64_t s = derive_seed(cfg.seed, "collect", attempt);
        Scene scene = make_scene(cfg.scene.task, EmbodimentKind::Hand, s, cfg.scene.cam_height,
                                 cfg.scene.cam_width);
        try {
            scripted_demo(scene, s);
        } catch (const PlanFailure&) {
            continue;
        }
        seeds.push_back(s);
    }

    fs::create_directories(art.episodes_root());
    parallel_for(n_episodes, jobs, [&](int i) {
        std::uint64_t s = seeds[i];
        Scene scene = make_scene(cfg.scene.task, EmbodimentKind::Hand, s, cfg.scene.cam_height,
                                 cfg.scene.cam_width);
        Trajectory demo = scripted_demo(scene, s);
        SceneState st0 = initial_state(scene, s);
        std::vector<Pose> calib =
            calibrate_demo_cameras(scene, st0, cfg.camera.pointmap_noise_sigma, s);
        RecordOptions opts;
        opts.pose_noise_sigma = cfg.camera.pose_noise_sigma;
        opts.noise_seed = s;
        opts.obs_width = cfg.camera.obs_width;
        opts.obs_height = cfg.camera.obs_height;
        opts.ransac = cfg.reconstruction.ransac;
        opts.ransac.seed = derive_seed(s, "track");
        Episode ep = record_episode(scene, s, demo, scene.demo_cameras, calib, opts);
        write_episode(ep, art.episode(i));
    });

    DatasetIndex index;
    for (int i = 0; i < n_episodes; ++i) {
        index.dirs.push_back(name_indexed("ep_", i));
        index.splits.push_back("train");
    }
    write_index(art.index(), index);
}

void cmd_reconstruct(const PipelineConfig& cfg, int jobs, bool dry_run) {
    Artifacts art = artifacts(cfg);
    DatasetIndex index = read_index_checked(art.index());
    if (dry_run) return;
    fs::create_directories(art.recon_root());
    parallel_for(static_cast<int>(index.dirs.size()), jobs, [&](int i) {
        Episode ep = read_episode(art.episodes_root() + "/" + index.dirs[i]);
        Scene scene = make_scene(ep.task, EmbodimentKind::Hand, ep.seed, cfg.scene.cam_height,
                                 cfg.scene.cam_width);
        SceneState st0 = initial_state(scene, ep.seed);
        std::vector<Vec3> fid = fiducial_world(scene);
        PointMap pm[2];
        for (int k = 0; k < 2; ++k)
            pm[k] = synth_pointmap(render(scene, st0, scene.demo_cameras[k]),
                                   scene.demo_cameras[k], cfg.reconstruction.noise_sigma,
                                   derive_seed(ep.seed, "pm", k), std::nullopt, fid);
        std::vector<Correspondence> ms =
            match(pm[0], pm[1], cfg.reconstruction.matches, cfg.reconstruction.outlier_frac,
                  derive_seed(ep.seed, "match"));
        RansacParams rp = cfg.reconstruction.ransac;
        rp.seed = derive_seed(ep.seed, "align");
        FusedCloud cloud = align_views(pm[0], pm[1], ms, rp, scene.fiducial_model);
        export_cloud(cloud, art.recon_points(i), art.recon_meta(i));
    });
}

void cmd_augment(const PipelineConfig& cfg, int jobs, bool dry_run) {
    Artifacts art = artifacts(cfg);
    if (!cfg.augmentation.enabled) {
        if (dry_run) return;
        fs::create_directories(art.aug_root());
        write_index(art.aug_index(), DatasetIndex{});
        return;
    }
    DatasetIndex index = read_index_checked(art.index());
    for (size_t i = 0; i < index.dirs.size(); ++i)
        if (!fs::exists(art.recon_meta(static_cast<int>(i))))
            throw MissingArtifact("expected reconstruction at " +
                                  art.recon_meta(static_cast<int>(i)));
    if (dry_run) return;

    fs::create_directories(art.aug_root());
    parallel_for(static_cast<int>(index.dirs.size()), jobs, [&](int i) {
        Episode ep = read_episode(art.episodes_root() + "/" + index.dirs[i]);
        std::vector<std::vector<Frame>> streams = novel_streams(cfg, ep);
        std::vector<Episode> derived = merge_augmented(ep, streams);
        for (size_t v = 0; v < derived.size(); ++v)
            write_episode(derived[v], art.aug_episode(i, static_cast<int>(v)));
    });

    DatasetIndex aug;
    for (size_t i = 0; i < index.dirs.size(); ++i)
        for (int v = 0; v < cfg.augmentation.views; ++v) {
            aug.dirs.push_back(name_indexed("ep_", static_cast<int>(i)) + "_v" +
                               std::to_string(v));
            aug.splits.push_back("train");
        }
    write_index(art.aug_index(), aug);
}

void cmd_train(const PipelineConfig& cfg, bool dry_run) {
    Artifacts art = artifacts(cfg);
    if (dry_run) {
        read_index_checked(art.index());
        if (cfg.augmentation.enabled) read_index_checked(art.aug_index());
        return;
    }
    std::vector<Episode> episodes = load_training_set(cfg, art);
    NormStats stats = fit_norm(episodes);

    TrainConfig tc;
    tc.steps = cfg.policy.steps;
    tc.batch = cfg.policy.batch;
    tc.lr = cfg.policy.lr;
    tc.cosine_lr_decay = cfg.policy.lr_decay;
    tc.seed = derive_seed(cfg.seed, "train");
    tc.chunk.n_obs = cfg.policy.n_obs;
    tc.chunk.n_act = cfg.policy.n_act;
    tc.chunk.crop_frac = cfg.policy.crop_frac;
    tc.checkpoint_every = cfg.policy.checkpoint_every;
    tc.checkpoint_prefix = art.policy_root() + "/policy";

    fs::create_directories(art.policy_root());
    std::vector<std::pair<int, double>> curve;
    TrainState ts = train(episodes, stats, net_config(cfg), tc, &curve);
    save_checkpoint(art.checkpoint(), ts.net, ts.stats);
    write_loss_csv(art.loss_csv(), curve);
}

Scene deploy_scene(const PipelineConfig& cfg) {
    return make_scene(cfg.scene.task, EmbodimentKind::Robot, derive_seed(cfg.seed, "deploy-scene"),
                      cfg.scene.cam_height, cfg.scene.cam_width);
}

DeploymentConfig deployment_config(const PipelineConfig& cfg, const Scene& scene) {
    const RolloutSection& rs = cfg.rollout;
    DeploymentConfig dc;
    dc.base_perturb.amplitude = rs.base_amplitude;
    dc.base_perturb.freq_hz = rs.base_freq_hz;
    dc.base_perturb.noise_sigma = rs.base_noise_sigma;
    dc.base_perturb.seed = derive_seed(cfg.seed, "base-perturb");
    dc.camera_perturb.amplitude = rs.camera_amplitude;
    dc.camera_perturb.rot_amplitude = rs.camera_rot_amplitude;
    dc.camera_perturb.freq_hz = rs.camera_freq_hz;
    dc.camera_perturb.seed = derive_seed(cfg.seed, "camera-perturb");
    dc.camera_offset = rs.camera_offset;
    dc.masking = rs.masking;
    dc.control_rate_hz = rs.control_rate_hz;
    dc.step_budget = rs.step_budget;
    dc.execute_horizon = rs.execute_horizon;
    dc.sampler.kind = rs.sampler == "ddpm" ? SamplerSpec::Kind::DDPM : SamplerSpec::Kind::DDIM;
    dc.sampler.steps = rs.sampler_steps;
    dc.sampler.seed = derive_seed(cfg.seed, "sampler");
    std::uint64_t hs = derive_seed(cfg.seed, "handeye");
    dc.t_eef_tool =
        calibrate_eef_tool(scene, initial_state(scene, hs), rs.eef_calib_noise_sigma, hs);
    return dc;
}

void cmd_eval(const PipelineConfig& cfg, int jobs, bool dry_run) {
    Artifacts art = artifacts(cfg);
    if (!fs::exists(art.checkpoint()))
        throw MissingCheckpoint("expected policy checkpoint at " + art.checkpoint());
    if (dry_run) return;

    auto [net, stats] = load_checkpoint(art.checkpoint());
    Scene scene = deploy_scene(cfg);
    DeploymentConfig dc = deployment_config(cfg, scene);
    ActionSource source = policy_action_source(net, stats, dc.sampler);

    int n = cfg.rollout.episodes;
    if (n < 1) throw EmptyDataset("eval: no episodes requested");
    std::vector<std::uint64_t> seeds;
    for (int i = 0; i < n; ++i) seeds.push_back(derive_seed(cfg.seed, "eval", i));

    RolloutReport report;
    report.episodes.resize(n);
    parallel_for(n, jobs, [&](int i) {
        report.episodes[i] = run_episode(scene, seeds[i], source, net.cfg.obs_w, net.cfg.obs_h,
                                         net.cfg.n_obs, stats, dc);
    });
    int wins = 0;
    for (const EpisodeRecord& r : report.episodes) wins += r.success ? 1 : 0;
    report.success_rate = static_cast<double>(wins) / n;
    report.config_hash = config_hash(dc);
    write_report(art.eval_root(), report);
}

void cmd_ablate(const PipelineConfig& cfg, bool dry_run) {
    Artifacts art = artifacts(cfg);
    std::vector<AblationVariant> variants;
    if (cfg.rollout.variants.empty()) {
        variants.push_back({"policy", art.checkpoint(), cfg.rollout.masking});
    } else {
        for (const VariantSection& vs : cfg.rollout.variants)
            variants.push_back({vs.name, resolve_path(cfg, vs.checkpoint), vs.masking});
    }
    for (const AblationVariant& v : variants)
        if (!fs::exists(v.checkpoint_path))
            throw MissingCheckpoint("expected checkpoint at " + v.checkpoint_path);
    if (dry_run) return;

    int n = cfg.rollout.grid_n;
    double ext = cfg.rollout.grid_extent;
    std::vector<Eigen::Vector2d> offsets;
    for (int iy = 0; iy < n; ++iy)
        for (int ix = 0; ix < n; ++ix) {
            double fx = n == 1 ? 0.0 : -ext + 2.0 * ext * ix / (n - 1);
            double fy = n == 1 ? 0.0 : -ext + 2.0 * ext * iy / (n - 1);
            offsets.push_back(Eigen::Vector2d(fx, fy));
        }

    Scene scene = deploy_scene(cfg);
    DeploymentConfig dc = deployment_config(cfg, scene);
    std::vector<std::uint64_t> seeds;
    for (int i = 0; i < cfg.rollout.episodes; ++i)
        seeds.push_back(derive_seed(cfg.seed, "ablate", i));

    std::vector<AblationRow> rows = ablate(variants, offsets, scene, seeds, dc);
    fs::create_directories(fs::path(art.ablation_csv()).parent_path());
    write_ablation(art.ablation_csv(), rows);
}

int run_cli(int argc, const char* const* argv) {
    CLI::App app{"tool-play pipeline: scripted play -> reconstruction -> view "
                 "augmentation -> diffusion policy -> deployment"};
    app.require_subcommand(1);

    std::string config_path;
    std::uint64_t seed = 0;
    int jobs = 1;
    bool dry_run = false;
    std::vector<std::string> sets;
    int episodes = 40;

    app.add_option("--config", config_path, "pipeline config file (JSON)")->required();
    CLI::Option* seed_opt = app.add_option("--seed", seed, "override the global seed");
    app.add_option("--jobs", jobs, "episode-level parallelism")->check(CLI::PositiveNumber);
    app.add_flag("--dry-run", dry_run, "validate config and inputs without writing");
    app.add_option("--set", sets, "override a config key, e.g. --set policy.lr=0.01");

    CLI::App* c_collect = app.add_subcommand("collect", "record scripted play demonstrations");
    c_collect->add_option("--episodes", episodes, "number of demonstrations");
    CLI::App* c_recon = app.add_subcommand("reconstruct", "two-view fusion per episode");
    CLI::App* c_augment = app.add_subcommand("augment", "novel-view data augmentation");
    CLI::App* c_train = app.add_subcommand("train", "train the diffusion policy");
    CLI::App* c_eval = app.add_subcommand("eval", "closed-loop policy evaluation");
    CLI::App* c_ablate = app.add_subcommand("ablate", "camera-offset ablation grid");
    for (CLI::App* sub : {c_collect, c_recon, c_augment, c_train, c_eval, c_ablate})
        sub->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        PipelineConfig cfg = load_config(config_path, sets);
        if (seed_opt->count() > 0) cfg.seed = seed;
        if (c_collect->parsed()) cmd_collect(cfg, episodes, jobs, dry_run);
        else if (c_recon->parsed()) cmd_reconstruct(cfg, jobs, dry_run);
        else if (c_augment->parsed()) cmd_augment(cfg, jobs, dry_run);
        else if (c_train->parsed()) cmd_train(cfg, dry_run);
        else if (c_eval->parsed()) cmd_eval(cfg, jobs, dry_run);
        else if (c_ablate->parsed()) cmd_ablate(cfg, dry_run);
        return 0;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const MissingArtifact& e) {
        std::cerr << "missing artifact: " << e.what() << "\n";
        return 3;
    } catch (const MissingCheckpoint& e) {
        std::cerr << "missing artifact: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "stage failure: " << e.what() << "\n";
        return 4;
    }
}

}  // namespace toolplay
