#include "toolplay/rollout.hpp"

#include <deque>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "toolplay/render.hpp"
#include "toolplay/rng.hpp"

namespace fs = std::filesystem;

namespace toolplay {

namespace {

CameraModel deployed_camera(const Scene& scene, const DeploymentConfig& cfg, double t) {
    CameraModel cam = scene.deploy_camera;
    if (cfg.camera_offset.norm() > 0) {
        const Vec3 eye0 = cam.pose.translation;
        const Vec3 eye = eye0 + cfg.camera_offset;
        const Vec3 f0 = (scene.look_at_point - eye0).normalized();
        const Vec3 f1 = (scene.look_at_point - eye).normalized();
        const Rotation realign(Eigen::Quaterniond::FromTwoVectors(f0, f1));
        cam.pose = Pose::make(realign * cam.pose.rotation, eye, cam.pose.parent_frame,
                              cam.pose.child_frame);
    }
    const Pose shake = perturb_camera(cfg.camera_perturb, t);
    if (shake.translation.norm() > 0 || shake.rotation.angle_to(Rotation::identity()) > 0) {
        const FrameId child = cam.pose.child_frame;
        const Pose local = Pose::make(shake.rotation, shake.translation, child, child);
        cam.pose = compose(cam.pose, local);
        cam.pose.child_frame = child;
    }
    return cam;
}

void check_config(const DeploymentConfig& cfg) {
    if (cfg.control_rate_hz < 5.0 || cfg.control_rate_hz > 30.0)
        throw DomainError("rollout: control rate outside [5, 30] Hz");
    if (cfg.step_budget < 1 || cfg.execute_horizon < 1)
        throw ConfigError("rollout: step budget and execute horizon must be positive");
}

bool finite_pose(const Pose& p) {
    return p.translation.allFinite() && std::isfinite(p.rotation.w()) &&
           std::isfinite(p.rotation.x()) && std::isfinite(p.rotation.y()) &&
           std::isfinite(p.rotation.z());
}

}  // namespace

ActionSource policy_action_source(const PolicyNet& net, const NormStats& stats,
                                  SamplerSpec sampler) {
    const PolicyNet* np = &net;
    return [np, stats, sampler](const std::vector<ImageRgb8>& window, const Vec9& prev,
                                std::uint64_t seed) {
        SamplerSpec spec = sampler;
        spec.seed = seed;
        return sample_actions(*np, stats, window, prev, spec);
    };
}

Pose gt_eef_tool() {
    return Pose::make(Rotation::identity(), Vec3(0, 0, -0.12), FrameId::tool(), FrameId::eef());
}

Pose calibrate_eef_tool(const Scene& scene, const SceneState& state, double noise_sigma,
                        std::uint64_t seed) {
    const auto prims = instantiate(scene, state);
    RansacParams ransac;
    ransac.seed = derive_seed(seed, "eef-calib");
    const ToolPoseEstimate est = estimate_tool_pose(prims, scene.deploy_camera, scene.tool,
                                                    state.tool_world, noise_sigma, seed, ransac);
    // Camera extrinsics are surveyed exactly; T_eef^world comes from exact
    // forward kinematics of the mount, so the only error is the vision side.
    const Pose tool_world_hat = compose(scene.deploy_camera.pose, est.t_tool_camera);
    const Pose eef_world = compose(state.tool_world, gt_eef_tool());
    return compose(inverse(tool_world_hat), eef_world);
}

EpisodeRecord run_episode(const Scene& scene, std::uint64_t seed, const ActionSource& policy,
                          int obs_w, int obs_h, int n_obs, const NormStats& stats,
                          const DeploymentConfig& cfg) {
    check_config(cfg);
    if (n_obs < 1) throw ConfigError("rollout: n_obs must be positive");

    Scene plate_scene = scene;
    plate_scene.embodiment = EmbodimentKind::None;
    SegmentationSource seg;

    SceneState st = initial_state(scene, seed);
    const double dt = 1.0 / cfg.control_rate_hz;

    EpisodeRecord rec;
    rec.seed = seed;

    std::deque<ImageRgb8> window;
    auto observe = [&] {
        const Vec3 shift = perturb_base(cfg.base_perturb, st.time).translation;
        const CameraModel cam = deployed_camera(scene, cfg, st.time);
        const RenderOutput r = render(instantiate(scene, st, shift), cam);
        ImageRgb8 obs;
        if (cfg.masking) {
            const ImageRgb8 plate = render(instantiate(plate_scene, st, shift), cam).rgb;
            obs = mask_embodiment(r, seg, plate, obs_w, obs_h).rgb;
        } else {
            obs = resize_bilinear(r.rgb, obs_w, obs_h);
        }
        window.push_back(std::move(obs));
        while (static_cast<int>(window.size()) < n_obs) window.push_back(window.back());
        while (static_cast<int>(window.size()) > n_obs) window.pop_front();
    };
    observe();

    Vec9 prev = normalize(stats, action_vec(compose(inverse(scene.t_task_world), st.tool_world)));

    int replan = 0;
    bool done = st.success;
    while (!done && rec.steps_used < cfg.step_budget) {
        const std::vector<ImageRgb8> obs_vec(window.begin(), window.end());
        const std::vector<Pose> actions =
            policy(obs_vec, prev, derive_seed(seed, "replan", replan));
        ++replan;

        const int exec = std::min<int>(cfg.execute_horizon, static_cast<int>(actions.size()));
        if (exec == 0) break;
        for (int j = 0; j < exec && rec.steps_used < cfg.step_budget; ++j) {
            const Pose& act = actions[j];
            const double t_tick = st.time;
            // T_task^base held at the control tick; the base keeps moving
            // underneath until the command is realized at tick + dt.
            const Pose t_task_base =
                compose(inverse(perturb_base(cfg.base_perturb, t_tick)), scene.t_task_world);
            const Pose eef_cmd = eef_command_in_base(t_task_base, act, cfg.t_eef_tool);
            const Pose world_cmd =
                compose(compose(perturb_base(cfg.base_perturb, t_tick + dt), eef_cmd),
                        inverse(cfg.t_eef_tool));
            if (!finite_pose(act) || !finite_pose(world_cmd)) {
                rec.success = false;
                return rec;  // controller NaN aborts as failure
            }
            st = step(scene, st, world_cmd, dt);
            ++rec.steps_used;
            ++rec.waypoints;
            rec.eef_path.push_back(compose(st.tool_world, cfg.t_eef_tool).translation);
            rec.base_path.push_back(scene.robot_base +
                                    perturb_base(cfg.base_perturb, st.time).translation);
            prev = normalize(stats, action_vec(act));
            if (st.success) {
                done = true;
                rec.time_to_success = st.time;
                break;
            }
            observe();
        }
    }
    rec.success = st.success;
    return rec;
}

RolloutReport run_suite(const Scene& scene, const std::vector<std::uint64_t>& seeds,
                        const ActionSource& policy, int obs_w, int obs_h, int n_obs,
                        const NormStats& stats, const DeploymentConfig& cfg) {
    if (seeds.empty()) throw EmptyDataset("run_suite: no seeds");
    RolloutReport report;
    report.config_hash = config_hash(cfg);
    int successes = 0;
    for (std::uint64_t s : seeds) {
        report.episodes.push_back(run_episode(scene, s, policy, obs_w, obs_h, n_obs, stats, cfg));
        if (report.episodes.back().success) ++successes;
    }
    report.success_rate = static_cast<double>(successes) / seeds.size();
    return report;
}

void write_report(const std::string& dir, const RolloutReport& report) {
    fs::create_directories(dir);
    std::ofstream csv(fs::path(dir) / "episodes.csv");
    if (!csv) throw MissingArtifact("write_report: cannot open episodes.csv");
    csv << "seed,success,steps_used,time_to_success,waypoints\n";
    for (const EpisodeRecord& e : report.episodes) {
        csv << e.seed << "," << (e.success ? 1 : 0) << "," << e.steps_used << ","
            << e.time_to_success << "," << e.waypoints << "\n";
    }
    std::ofstream summary(fs::path(dir) / "summary.txt");
    if (!summary) throw MissingArtifact("write_report: cannot open summary.txt");
    summary << "episodes: " << report.episodes.size() << "\n"
            << "success_rate: " << report.success_rate << "\n"
            << "config_hash: " << std::hex << report.config_hash << std::dec << "\n";
}

double stabilization_metric(const std::vector<Vec3>& eef_path,
                            const std::vector<Vec3>& base_path) {
    if (eef_path.size() != base_path.size())
        throw LengthMismatch("stabilization_metric: path lengths differ");
    if (eef_path.size() < 2) throw LengthMismatch("stabilization_metric: need >= 2 samples");

    auto spread = [](const std::vector<Vec3>& path) {
        Vec3 mean = Vec3::Zero();
        for (const Vec3& p : path) mean += p;
        mean /= static_cast<double>(path.size());
        double acc = 0;
        for (const Vec3& p : path) acc += (p - mean).squaredNorm();
        return std::sqrt(acc / static_cast<double>(path.size()));
    };
    const double base = spread(base_path);
    if (base < 1e-12) throw DomainError("stabilization_metric: static base");
    return spread(eef_path) / base;
}

std::uint64_t config_hash(const DeploymentConfig& cfg) {
    std::ostringstream os;
    os.precision(17);
    for (double d : cfg.t_eef_tool.serialize()) os << d << "|";
    for (const PerturbSpec* s : {&cfg.base_perturb, &cfg.camera_perturb}) {
        os << s->amplitude << "|" << s->rot_amplitude << "|" << s->freq_hz << "|"
           << s->axis.transpose() << "|" << s->noise_sigma << "|" << s->seed << "|";
    }
    os << cfg.camera_offset.transpose() << "|" << cfg.masking << "|" << cfg.variant << "|"
       << cfg.control_rate_hz << "|" << cfg.step_budget << "|" << cfg.execute_horizon << "|"
       << static_cast<int>(cfg.sampler.kind) << "|" << cfg.sampler.steps << "|"
       << cfg.sampler.seed;

    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : os.str()) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

std::vector<AblationRow> ablate(const std::vector<AblationVariant>& variants,
                                const std::vector<Eigen::Vector2d>& offsets,
                                const Scene& scene, const std::vector<std::uint64_t>& seeds,
                                const DeploymentConfig& cfg) {
    if (seeds.empty()) throw EmptyDataset("ablate: no seeds");
    std::vector<AblationRow> rows;
    for (const AblationVariant& variant : variants) {
        auto [net, stats] = load_checkpoint(variant.checkpoint_path);
        const ActionSource policy = policy_action_source(net, stats, cfg.sampler);

        AblationRow row;
        row.variant = variant.name;
        for (const Eigen::Vector2d& off : offsets) {
            DeploymentConfig cell_cfg = cfg;
            cell_cfg.masking = variant.masking;
            cell_cfg.variant = variant.name;
            cell_cfg.camera_offset = Vec3(off.x(), off.y(), 0.0);

            int successes = 0;
            for (std::uint64_t s : seeds) {
                const EpisodeRecord rec = run_episode(scene, s, policy, net.cfg.obs_w,
                                                      net.cfg.obs_h, net.cfg.n_obs, stats,
                                                      cell_cfg);
                if (rec.success) ++successes;
            }
            AblationCell cell;
            cell.offset = off;
            cell.success_rate = static_cast<double>(successes) / seeds.size();
            cell.working = cell.success_rate >= 0.5;
            if (cell.working) ++row.working_cells;
            row.cells.push_back(cell);
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

void write_ablation(const std::string& path, const std::vector<AblationRow>& rows) {
    std::ofstream os(path);
    if (!os) throw MissingArtifact("write_ablation: cannot open " + path);
    os << "variant,offset_x,offset_y,success_rate,working\n";
    for (const AblationRow& row : rows) {
        for (const AblationCell& cell : row.cells) {
            os << row.variant << "," << cell.offset.x() << "," << cell.offset.y() << ","
               << cell.success_rate << "," << (cell.working ? 1 : 0) << "\n";
        }
    }
}

}  // namespace toolplay
