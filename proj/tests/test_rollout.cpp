#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <memory>

#include "toolplay/rollout.hpp"
#include "toolplay/rng.hpp"

#include "test_helpers.hpp"

using namespace toolplay;
using namespace toolplay::testing;

namespace {

NormStats wide_stats() {
    NormStats stats;
    stats.min = Vec9::Constant(-2.0);
    stats.max = Vec9::Constant(2.0);
    return stats;
}

// Replays the scripted demo's Task-frame labels, advancing by the executed
// horizon on every replan.
ActionSource scripted_source(const Scene& scene, const Trajectory& demo, int n_act,
                             int horizon) {
    auto labels = std::make_shared<std::vector<Pose>>();
    for (const Pose& p : demo.poses) labels->push_back(compose(inverse(scene.t_task_world), p));
    auto cursor = std::make_shared<size_t>(1);  // poses[0] is the home pose
    return [labels, cursor, n_act, horizon](const std::vector<ImageRgb8>&, const Vec9&,
                                            std::uint64_t) {
        std::vector<Pose> out;
        for (int j = 0; j < n_act; ++j) {
            const size_t idx = std::min(*cursor + j, labels->size() - 1);
            out.push_back((*labels)[idx]);
        }
        *cursor = std::min(*cursor + static_cast<size_t>(horizon), labels->size() - 1);
        return out;
    };
}

// Holds a single Task-frame pose forever (stateless, deterministic).
ActionSource hold_source(const Pose& t_tool_task, int n_act) {
    return [t_tool_task, n_act](const std::vector<ImageRgb8>&, const Vec9&, std::uint64_t) {
        return std::vector<Pose>(n_act, t_tool_task);
    };
}

struct RobotSetup {
    Scene scene;
    explicit RobotSetup(std::uint64_t seed = 3)
        : scene(make_scene(TaskKind::Hammer, EmbodimentKind::Robot, seed, 120, 160)) {}
};

}  // namespace

TEST_CASE("compensation identity: live base pose cancels exactly") {
    RobotSetup s;
    PerturbSpec base;
    base.amplitude = 0.03;
    base.freq_hz = 0.7;
    base.axis = Vec3(1, 0.4, 0).normalized();
    base.noise_sigma = 0.002;
    base.seed = 9;

    Rng rng(5);
    const Pose eef = gt_eef_tool();
    for (int i = 0; i < 50; ++i) {
        const double t = rng.uniform(0.0, 5.0);
        const Pose act = random_pose(rng, FrameId::task(), FrameId::tool());
        const Pose t_task_base =
            compose(inverse(perturb_base(base, t)), s.scene.t_task_world);
        const Pose cmd_base = eef_command_in_base(t_task_base, act, eef);
        const Pose world_cmd =
            compose(compose(perturb_base(base, t), cmd_base), inverse(eef));
        const Pose direct = compose(s.scene.t_task_world, act);
        CHECK((world_cmd.translation - direct.translation).norm() < 1e-9);
        CHECK(geodesic_distance(world_cmd.rotation, direct.rotation) < 1e-9);
    }
}

TEST_CASE("identity hand-eye offset: commanded EEF equals the predicted tool pose") {
    RobotSetup s;
    Rng rng(11);
    const Pose eef_id = Pose::make(Rotation::identity(), Vec3::Zero(), FrameId::tool(),
                                   FrameId::eef());
    const Pose t_task_base = compose(inverse(perturb_base({}, 0.0)), s.scene.t_task_world);
    for (int i = 0; i < 20; ++i) {
        const Pose act = random_pose(rng, FrameId::task(), FrameId::tool());
        const Pose cmd = eef_command_in_base(t_task_base, act, eef_id);
        const Pose want = compose(t_task_base, act);
        CHECK(cmd.parent_frame == FrameId::base());
        CHECK(cmd.child_frame == FrameId::eef());
        CHECK((cmd.translation - want.translation).norm() < 1e-12);
        CHECK(geodesic_distance(cmd.rotation, want.rotation) < 1e-12);
    }
}

TEST_CASE("hand-eye calibration: noiseless estimate recovers the grip offset") {
    RobotSetup s;
    const SceneState st = initial_state(s.scene, 3);
    const Pose est = calibrate_eef_tool(s.scene, st, 0.0, 7);
    const Pose gt = gt_eef_tool();
    CHECK(est.parent_frame == FrameId::tool());
    CHECK(est.child_frame == FrameId::eef());
    CHECK((est.translation - gt.translation).norm() < 1e-6);
    CHECK(geodesic_distance(est.rotation, gt.rotation) < 1e-6);

    const Pose noisy = calibrate_eef_tool(s.scene, st, 0.001, 7);
    CHECK((noisy.translation - gt.translation).norm() < 0.02);
}

TEST_CASE("scripted replay policy solves its own seed") {
    RobotSetup s;
    const Trajectory demo = scripted_demo(s.scene, 3);

    DeploymentConfig cfg;
    cfg.t_eef_tool = gt_eef_tool();
    cfg.control_rate_hz = 10.0;
    cfg.step_budget = 40;
    cfg.execute_horizon = 8;
    const EpisodeRecord rec = run_episode(s.scene, 3, scripted_source(s.scene, demo, 16, 8),
                                          48, 48, 2, wide_stats(), cfg);
    CHECK(rec.success);
    CHECK(rec.steps_used <= cfg.step_budget);
    CHECK(rec.time_to_success > 0.0);
    CHECK(rec.eef_path.size() == static_cast<size_t>(rec.steps_used));
    CHECK(rec.base_path.size() == static_cast<size_t>(rec.steps_used));
}

TEST_CASE("budget monotonicity: success at B implies success at larger budgets") {
    RobotSetup s;
    const Trajectory demo = scripted_demo(s.scene, 3);
    DeploymentConfig cfg;
    cfg.t_eef_tool = gt_eef_tool();
    cfg.step_budget = 35;
    const EpisodeRecord a = run_episode(s.scene, 3, scripted_source(s.scene, demo, 16, 8),
                                        48, 48, 2, wide_stats(), cfg);
    cfg.step_budget = 60;
    const EpisodeRecord b = run_episode(s.scene, 3, scripted_source(s.scene, demo, 16, 8),
                                        48, 48, 2, wide_stats(), cfg);
    REQUIRE(a.success);
    CHECK(b.success);
    CHECK(a.steps_used == b.steps_used);  // terminates at first success
}

TEST_CASE("NaN action aborts the episode as a failure, without throwing") {
    RobotSetup s;
    const ActionSource nan_policy = [](const std::vector<ImageRgb8>&, const Vec9&,
                                       std::uint64_t) {
        Pose p = Pose::make(Rotation::identity(), Vec3(0, 0, std::nan("")), FrameId::task(),
                            FrameId::tool());
        return std::vector<Pose>(16, p);
    };
    DeploymentConfig cfg;
    const EpisodeRecord rec = run_episode(s.scene, 3, nan_policy, 48, 48, 2, wide_stats(), cfg);
    CHECK(!rec.success);
    CHECK(rec.steps_used == 0);
}

TEST_CASE("run_episode validates the control rate") {
    RobotSetup s;
    const Trajectory demo = scripted_demo(s.scene, 3);
    DeploymentConfig cfg;
    cfg.control_rate_hz = 4.0;
    CHECK_THROWS_AS(run_episode(s.scene, 3, scripted_source(s.scene, demo, 16, 8), 48, 48, 2,
                                wide_stats(), cfg),
                    DomainError);
    cfg.control_rate_hz = 31.0;
    CHECK_THROWS_AS(run_episode(s.scene, 3, scripted_source(s.scene, demo, 16, 8), 48, 48, 2,
                                wide_stats(), cfg),
                    DomainError);
}

TEST_CASE("run_suite: deterministic, recountable, empty seed list rejected") {
    RobotSetup s;
    const SceneState st = initial_state(s.scene, 1);
    const Pose hold = compose(inverse(s.scene.t_task_world), st.tool_world);

    DeploymentConfig cfg;
    cfg.step_budget = 8;
    cfg.execute_horizon = 4;
    const std::vector<std::uint64_t> seeds = {1, 2, 3};

    const RolloutReport a =
        run_suite(s.scene, seeds, hold_source(hold, 16), 32, 32, 2, wide_stats(), cfg);
    const RolloutReport b =
        run_suite(s.scene, seeds, hold_source(hold, 16), 32, 32, 2, wide_stats(), cfg);
    REQUIRE(a.episodes.size() == 3);
    CHECK(a.config_hash == b.config_hash);

    int successes = 0;
    for (size_t i = 0; i < a.episodes.size(); ++i) {
        const EpisodeRecord &ea = a.episodes[i], &eb = b.episodes[i];
        CHECK(ea.success == eb.success);
        CHECK(ea.steps_used == eb.steps_used);
        REQUIRE(ea.eef_path.size() == eb.eef_path.size());
        for (size_t j = 0; j < ea.eef_path.size(); ++j)
            CHECK((ea.eef_path[j] - eb.eef_path[j]).norm() == 0.0);
        if (ea.success) ++successes;
    }
    CHECK(a.success_rate == doctest::Approx(successes / 3.0));

    CHECK_THROWS_AS(
        run_suite(s.scene, {}, hold_source(hold, 16), 32, 32, 2, wide_stats(), cfg),
        EmptyDataset);
}

TEST_CASE("report files: CSV row per episode plus summary") {
    RobotSetup s;
    const SceneState st = initial_state(s.scene, 1);
    const Pose hold = compose(inverse(s.scene.t_task_world), st.tool_world);
    DeploymentConfig cfg;
    cfg.step_budget = 4;
    const RolloutReport report =
        run_suite(s.scene, {1, 2}, hold_source(hold, 16), 32, 32, 2, wide_stats(), cfg);

    const auto dir = std::filesystem::temp_directory_path() / "toolplay_rollout_report";
    std::filesystem::remove_all(dir);
    write_report(dir.string(), report);
    std::ifstream csv(dir / "episodes.csv");
    std::string line;
    int rows = 0;
    while (std::getline(csv, line)) ++rows;
    CHECK(rows == 3);  // header + 2 episodes
    CHECK(std::filesystem::exists(dir / "summary.txt"));
    std::filesystem::remove_all(dir);
}

TEST_CASE("stabilization metric: held EEF -> 0, rigidly coupled EEF -> 1") {
    std::vector<Vec3> base, held, coupled;
    for (int i = 0; i < 40; ++i) {
        const Vec3 b(0.02 * std::sin(0.3 * i), 0, 0);
        base.push_back(b);
        held.push_back(Vec3(0.5, 0.1, 0.3));
        coupled.push_back(Vec3(0.5, 0.1, 0.3) + b);
    }
    CHECK(stabilization_metric(held, base) < 1e-12);
    CHECK(stabilization_metric(coupled, base) == doctest::Approx(1.0).epsilon(1e-12));

    CHECK_THROWS_AS(stabilization_metric(held, std::vector<Vec3>(held.begin(), held.end() - 1)),
                    LengthMismatch);
    CHECK_THROWS_AS(stabilization_metric(held, std::vector<Vec3>(held.size(), Vec3::Zero())),
                    DomainError);
}

TEST_CASE("base sinusoid hold: task-space compensation keeps the ratio <= 0.3") {
    RobotSetup s;
    const SceneState st = initial_state(s.scene, 1);
    const Pose hold = compose(inverse(s.scene.t_task_world), st.tool_world);

    DeploymentConfig cfg;
    cfg.t_eef_tool = gt_eef_tool();
    cfg.base_perturb.amplitude = 0.02;
    cfg.base_perturb.freq_hz = 0.5;
    cfg.base_perturb.axis = Vec3(1, 0, 0);
    cfg.control_rate_hz = 20.0;
    cfg.step_budget = 60;  // 3 s hold
    const EpisodeRecord rec =
        run_episode(s.scene, 1, hold_source(hold, 16), 32, 32, 2, wide_stats(), cfg);
    REQUIRE(rec.eef_path.size() == 60);
    const double ratio = stabilization_metric(rec.eef_path, rec.base_path);
    CHECK(ratio <= 0.3);
    CHECK(ratio > 0.0);
}

TEST_CASE("config hash changes when any deployment field changes") {
    const DeploymentConfig base;
    const std::uint64_t h0 = config_hash(base);

    DeploymentConfig c = base;
    c.control_rate_hz = 12.0;
    CHECK(config_hash(c) != h0);
    c = base;
    c.step_budget = 61;
    CHECK(config_hash(c) != h0);
    c = base;
    c.masking = false;
    CHECK(config_hash(c) != h0);
    c = base;
    c.variant = "no-va";
    CHECK(config_hash(c) != h0);
    c = base;
    c.base_perturb.amplitude = 0.01;
    CHECK(config_hash(c) != h0);
    c = base;
    c.camera_perturb.rot_amplitude = 0.01;
    CHECK(config_hash(c) != h0);
    c = base;
    c.camera_offset = Vec3(0.02, 0, 0);
    CHECK(config_hash(c) != h0);
    c = base;
    c.t_eef_tool = gt_eef_tool();
    CHECK(config_hash(c) != h0);
    c = base;
    c.sampler.steps = 8;
    CHECK(config_hash(c) != h0);
    c = base;
    c.execute_horizon = 4;
    CHECK(config_hash(c) != h0);
    CHECK(config_hash(base) == h0);  // stable for identical configs
}

TEST_CASE("ablate: identical checkpoints give identical rows; missing checkpoint throws") {
    RobotSetup s;
    NetConfig ncfg;
    ncfg.obs_w = 8;
    ncfg.obs_h = 8;
    ncfg.n_obs = 1;
    ncfg.n_act = 4;
    ncfg.c1 = 2;
    ncfg.c2 = 3;
    ncfg.c3 = 4;
    ncfg.embed = 8;
    ncfg.hidden = 10;
    ncfg.t_embed = 8;
    ncfg.T = 10;
    const PolicyNet net(ncfg, 1);

    const auto dir = std::filesystem::temp_directory_path() / "toolplay_ablate";
    std::filesystem::create_directories(dir);
    const std::string ckpt = (dir / "net.ckpt").string();
    save_checkpoint(ckpt, net, wide_stats());

    DeploymentConfig cfg;
    cfg.step_budget = 4;
    cfg.execute_horizon = 2;
    const std::vector<Eigen::Vector2d> offsets = {{0.0, 0.0}, {0.05, 0.0}};

    const auto rows = ablate({{"a", ckpt, true}, {"b", ckpt, true}}, offsets, s.scene, {1}, cfg);
    REQUIRE(rows.size() == 2);
    REQUIRE(rows[0].cells.size() == 2);
    for (size_t c = 0; c < rows[0].cells.size(); ++c) {
        CHECK(rows[0].cells[c].success_rate == rows[1].cells[c].success_rate);
        CHECK(rows[0].cells[c].working == rows[1].cells[c].working);
    }
    CHECK(rows[0].working_cells == rows[1].working_cells);

    const std::string table = (dir / "table.csv").string();
    write_ablation(table, rows);
    CHECK(std::filesystem::exists(table));

    CHECK_THROWS_AS(ablate({{"x", (dir / "missing.ckpt").string(), true}}, offsets, s.scene,
                           {1}, cfg),
                    MissingCheckpoint);
    std::filesystem::remove_all(dir);
}
