#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "toolplay/policy.hpp"
#include "toolplay/rng.hpp"

#include "test_helpers.hpp"

using namespace toolplay;
using namespace toolplay::testing;

namespace {

NetConfig reduced_config() {
    NetConfig cfg;
    cfg.obs_w = 8;
    cfg.obs_h = 8;
    cfg.n_obs = 1;
    cfg.n_act = 2;
    cfg.c1 = 2;
    cfg.c2 = 3;
    cfg.c3 = 4;
    cfg.embed = 8;
    cfg.hidden = 10;
    cfg.t_embed = 8;
    cfg.T = 10;
    return cfg;
}

ImageRgb8 random_image(int w, int h, Rng& rng) {
    ImageRgb8 img(w, h);
    for (auto& v : img.data) v = static_cast<std::uint8_t>(rng.engine()());
    return img;
}

Chunk random_chunk(const NetConfig& cfg, Rng& rng) {
    Chunk c;
    for (int i = 0; i < cfg.n_obs; ++i) c.obs.push_back(random_image(cfg.obs_w, cfg.obs_h, rng));
    for (int i = 0; i < cfg.n_obs; ++i) {
        Vec9 a;
        for (int d = 0; d < 9; ++d) a[d] = rng.uniform(-1, 1);
        c.obs_actions.push_back(a);
    }
    for (int i = 0; i < cfg.n_act; ++i) {
        Vec9 a;
        for (int d = 0; d < 9; ++d) a[d] = rng.uniform(-1, 1);
        c.actions.push_back(a);
    }
    return c;
}

// Re-derives the (t, eps) draws the loss makes for sample i.
std::pair<int, Eigen::VectorXd> loss_draw(const NetConfig& cfg, std::uint64_t seed, size_t i) {
    Rng rng(derive_seed(seed, "loss", i));
    const int t = 1 + static_cast<int>(rng.uniform_index(cfg.T));
    Eigen::VectorXd eps(cfg.act_dim());
    for (int d = 0; d < cfg.act_dim(); ++d) eps[d] = rng.normal();
    return {t, eps};
}

Episode constant_obs_episode(const NetConfig& cfg, int len, std::uint64_t seed) {
    Rng rng(seed);
    Episode ep;
    ep.seed = seed;
    ep.obs_width = cfg.obs_w;
    ep.obs_height = cfg.obs_h;
    const ImageRgb8 frame = random_image(cfg.obs_w, cfg.obs_h, rng);
    for (int i = 0; i < len; ++i) {
        Frame f;
        f.rgb = frame;
        f.timestamp = 0.1 * i;
        ep.steps.push_back({f});
        Pose p = random_pose(rng, FrameId::task(), FrameId::tool());
        ep.actions.push_back(p);
        ep.gt_poses.push_back(p);
    }
    ep.gt_success = true;
    return ep;
}

bool params_equal(const PolicyNet& a, const PolicyNet& b) {
    auto pa = a.params(), pb = b.params();
    if (pa.size() != pb.size()) return false;
    for (size_t i = 0; i < pa.size(); ++i) {
        if (pa[i]->name != pb[i]->name || pa[i]->v != pb[i]->v) return false;
    }
    return true;
}

}  // namespace

TEST_CASE("cosine schedule: alpha_bar starts at 1, strictly decreases, beta in (0,1)") {
    const NoiseSchedule s = NoiseSchedule::cosine(100);
    REQUIRE(s.alpha_bar.size() == 101);
    CHECK(s.alpha_bar[0] == 1.0);
    CHECK(s.alpha_bar[0] >= 0.999);
    for (int t = 1; t <= 100; ++t) {
        CHECK(s.alpha_bar[t] < s.alpha_bar[t - 1]);
        CHECK(s.beta[t] > 0.0);
        CHECK(s.beta[t] < 1.0);
        CHECK(s.alpha_bar[t] == doctest::Approx(s.alpha_bar[t - 1] * s.alpha[t]).epsilon(1e-12));
    }
    CHECK(s.alpha_bar[100] < 1e-3);  // terminal state is essentially pure noise
    CHECK_THROWS_AS(NoiseSchedule::cosine(0), ConfigError);
}

TEST_CASE("forward_diffuse: identity at t=0 and closed form at arbitrary t") {
    const NoiseSchedule s = NoiseSchedule::cosine(100);
    Rng rng(7);
    Eigen::VectorXd a0(12), eps(12);
    for (int i = 0; i < 12; ++i) {
        a0[i] = rng.uniform(-1, 1);
        eps[i] = rng.normal();
    }
    CHECK((forward_diffuse(a0, 0, eps, s) - a0).norm() == 0.0);
    const int t = 37;
    const Eigen::VectorXd want =
        std::sqrt(s.alpha_bar[t]) * a0 + std::sqrt(1.0 - s.alpha_bar[t]) * eps;
    CHECK((forward_diffuse(a0, t, eps, s) - want).norm() < 1e-15);
    CHECK_THROWS_AS(forward_diffuse(a0, 101, eps, s), DomainError);
    CHECK_THROWS_AS(forward_diffuse(a0, t, eps.head(5).eval(), s), ShapeMismatch);
}

TEST_CASE("loss gradients match central finite differences on a ~1e3-param net") {
    const NetConfig cfg = reduced_config();
    PolicyNet net(cfg, 11);
    REQUIRE(net.param_count() > 900);
    REQUIRE(net.param_count() < 2500);

    Rng rng(21);
    std::vector<Chunk> batch = {random_chunk(cfg, rng), random_chunk(cfg, rng)};
    const std::uint64_t seed = 5;

    loss(net, batch, seed);
    std::vector<std::vector<double>> analytic;
    for (const Tensor* t : net.params()) analytic.push_back(t->g);

    const double h = 1e-5;
    auto params = net.params();
    double worst = 0.0;
    for (size_t p = 0; p < params.size(); ++p) {
        for (size_t i = 0; i < params[p]->size(); ++i) {
            const double save = params[p]->v[i];
            params[p]->v[i] = save + h;
            const double lp = loss(net, batch, seed);
            params[p]->v[i] = save - h;
            const double lm = loss(net, batch, seed);
            params[p]->v[i] = save;
            const double fd = (lp - lm) / (2.0 * h);
            const double an = analytic[p][i];
            const double rel = std::abs(fd - an) / std::max(1e-6, std::abs(fd) + std::abs(an));
            worst = std::max(worst, rel);
        }
    }
    CHECK(worst <= 1e-4);
}

TEST_CASE("loss oracle: exact-noise override gives 0, zero override gives mean ||eps||^2") {
    const NetConfig cfg = reduced_config();
    PolicyNet net(cfg, 3);
    Rng rng(9);
    std::vector<Chunk> batch = {random_chunk(cfg, rng), random_chunk(cfg, rng),
                                random_chunk(cfg, rng)};
    const std::uint64_t seed = 17;

    const double zero = loss(net, batch, seed,
                             [](size_t, const Eigen::VectorXd& eps) { return eps; });
    CHECK(zero == 0.0);

    const double at_zero = loss(net, batch, seed, [&](size_t, const Eigen::VectorXd&) {
        return Eigen::VectorXd::Zero(cfg.act_dim()).eval();
    });
    double want = 0.0;
    for (size_t i = 0; i < batch.size(); ++i) want += loss_draw(cfg, seed, i).second.squaredNorm();
    want /= static_cast<double>(batch.size());
    CHECK(at_zero == doctest::Approx(want).epsilon(1e-12));

    CHECK_THROWS_AS(loss(net, {}, seed), EmptyDataset);
}

TEST_CASE("loss: non-finite parameters raise NonFiniteLoss") {
    const NetConfig cfg = reduced_config();
    PolicyNet net(cfg, 3);
    net.fc4_b.v[0] = std::numeric_limits<double>::infinity();
    Rng rng(9);
    std::vector<Chunk> batch = {random_chunk(cfg, rng)};
    CHECK_THROWS_AS(loss(net, batch, 1), NonFiniteLoss);
}

TEST_CASE("encode_obs: 128-dim deterministic embedding, shape errors rejected") {
    NetConfig cfg;  // defaults: 48x48, n_obs 2, embed 128
    PolicyNet net(cfg, 2);
    Rng rng(4);
    std::vector<ImageRgb8> window = {random_image(48, 48, rng), random_image(48, 48, rng)};
    const Eigen::VectorXd e1 = net.encode_obs(window);
    const Eigen::VectorXd e2 = net.encode_obs(window);
    CHECK(e1.size() == 128);
    CHECK((e1 - e2).norm() == 0.0);

    CHECK_THROWS_AS(net.encode_obs({window[0]}), ShapeMismatch);
    std::vector<ImageRgb8> bad = {random_image(48, 48, rng), random_image(32, 48, rng)};
    CHECK_THROWS_AS(net.encode_obs(bad), ShapeMismatch);
}

TEST_CASE("encode_obs: all-zero and all-one frames produce different embeddings") {
    const NetConfig cfg = reduced_config();
    PolicyNet net(cfg, 8);
    const Eigen::VectorXd zero = net.encode_obs({ImageRgb8(cfg.obs_w, cfg.obs_h, 0)});
    const Eigen::VectorXd one = net.encode_obs({ImageRgb8(cfg.obs_w, cfg.obs_h, 255)});
    CHECK((zero - one).norm() > 1e-6);
}

TEST_CASE("sampling from an untrained net is deterministic per seed") {
    const NetConfig cfg = reduced_config();
    PolicyNet net(cfg, 13);
    Rng rng(1);
    std::vector<ImageRgb8> window = {random_image(cfg.obs_w, cfg.obs_h, rng)};
    const Vec9 proprio = Vec9::Zero();
    SamplerSpec spec;
    spec.seed = 9;
    const Eigen::VectorXd a = sample_chunk_norm(net, window, proprio, spec);
    const Eigen::VectorXd b = sample_chunk_norm(net, window, proprio, spec);
    CHECK(a.allFinite());
    CHECK((a - b).norm() == 0.0);
    spec.seed = 10;
    CHECK((a - sample_chunk_norm(net, window, proprio, spec)).norm() > 0.0);
}

TEST_CASE("short training run reduces the loss for at least 80% of seeds") {
    const NetConfig cfg = reduced_config();
    int improved = 0;
    const int kSeeds = 10;
    for (int s = 0; s < kSeeds; ++s) {
        std::vector<Episode> eps = {constant_obs_episode(cfg, 6, 100 + s)};
        const NormStats stats = fit_norm(eps);
        TrainConfig tc;
        tc.steps = 200;
        tc.batch = 8;
        tc.seed = 1000 + s;
        tc.chunk.crop_frac = 1.0;
        std::vector<std::pair<int, double>> curve;
        train(eps, stats, cfg, tc, &curve);
        double head = 0.0, tail = 0.0;
        for (int i = 0; i < 5; ++i) {
            head += curve[i].second;
            tail += curve[curve.size() - 1 - i].second;
        }
        if (tail < head) ++improved;
    }
    CHECK(improved >= 8);
}

TEST_CASE("train: lr=0 leaves parameters bit-identical to the seeded init") {
    const NetConfig cfg = reduced_config();
    std::vector<Episode> eps = {constant_obs_episode(cfg, 6, 31)};
    const NormStats stats = fit_norm(eps);

    TrainConfig tc;
    tc.steps = 5;
    tc.batch = 4;
    tc.lr = 0.0;
    tc.seed = 123;
    tc.chunk.crop_frac = 1.0;
    const TrainState state = train(eps, stats, cfg, tc);
    const PolicyNet fresh(cfg, derive_seed(tc.seed, "policy-init"));
    CHECK(params_equal(state.net, fresh));
}

TEST_CASE("train: deterministic per seed, different seeds diverge") {
    const NetConfig cfg = reduced_config();
    std::vector<Episode> eps = {constant_obs_episode(cfg, 6, 31)};
    const NormStats stats = fit_norm(eps);

    TrainConfig tc;
    tc.steps = 10;
    tc.batch = 4;
    tc.seed = 77;
    tc.chunk.crop_frac = 1.0;

    std::vector<std::pair<int, double>> curve_a, curve_b, curve_c;
    const TrainState a = train(eps, stats, cfg, tc, &curve_a);
    const TrainState b = train(eps, stats, cfg, tc, &curve_b);
    CHECK(params_equal(a.net, b.net));
    REQUIRE(curve_a.size() == curve_b.size());
    for (size_t i = 0; i < curve_a.size(); ++i) CHECK(curve_a[i].second == curve_b[i].second);

    tc.seed = 78;
    const TrainState c = train(eps, stats, cfg, tc, &curve_c);
    CHECK(!params_equal(a.net, c.net));
    CHECK_THROWS_AS(train({}, stats, cfg, tc), EmptyDataset);
}

namespace {

struct OverfitSetup {
    NetConfig cfg;
    std::vector<Episode> eps;
    NormStats stats;
    Eigen::VectorXd target;  // normalized chunk at the single valid start
    std::vector<ImageRgb8> window;
    Vec9 proprio;
    std::vector<std::pair<int, double>> curve;  // before `state`: train() fills it
    TrainState state;

    OverfitSetup() : cfg(overfit_config()), eps{constant_obs_episode(cfg, 3, 31)},
                     stats(fit_norm(eps)), state(make_state()) {
        target.resize(cfg.act_dim());
        for (int j = 0; j < cfg.n_act; ++j) {
            target.segment<9>(9 * j) = normalize(stats, action_vec(eps[0].actions[1 + j]));
        }
        window = {eps[0].steps[0][0].rgb};
        proprio = normalize(stats, action_vec(eps[0].actions[0]));
    }

    static NetConfig overfit_config() {
        NetConfig cfg = reduced_config();
        cfg.hidden = 32;  // width above act_dim so the identity map is representable
        return cfg;
    }

    TrainState make_state() {
        TrainConfig tc;
        tc.steps = 12000;
        tc.batch = 16;
        tc.seed = 5;
        tc.cosine_lr_decay = true;  // anneal out the SGD noise floor
        tc.chunk.crop_frac = 1.0;
        return train(eps, stats, cfg, tc, &curve);
    }
};

}  // namespace

TEST_CASE("overfit one chunk: loss decreases and DDIM samples land within 0.05") {
    OverfitSetup s;

    double head = 0.0, tail = 0.0;
    for (int i = 0; i < 10; ++i) {
        head += s.curve[i].second;
        tail += s.curve[s.curve.size() - 1 - i].second;
    }
    CHECK(tail < 0.2 * head);

    SamplerSpec spec;
    spec.kind = SamplerSpec::Kind::DDIM;
    spec.steps = 16;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        spec.seed = seed;
        const Eigen::VectorXd got = sample_chunk_norm(s.state.net, s.window, s.proprio, spec);
        CHECK((got - s.target).cwiseAbs().maxCoeff() < 0.05);
    }

    // Deterministic sampler: same seed, same chunk, bitwise.
    spec.seed = 2;
    const Eigen::VectorXd x1 = sample_chunk_norm(s.state.net, s.window, s.proprio, spec);
    const Eigen::VectorXd x2 = sample_chunk_norm(s.state.net, s.window, s.proprio, spec);
    CHECK((x1 - x2).norm() == 0.0);
}

TEST_CASE("overfit one chunk: stochastic sampler also concentrates near the target") {
    OverfitSetup s;
    SamplerSpec spec;
    spec.kind = SamplerSpec::Kind::DDPM;
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        spec.seed = seed;
        const Eigen::VectorXd got = sample_chunk_norm(s.state.net, s.window, s.proprio, spec);
        CHECK(got.allFinite());
        CHECK((got - s.target).cwiseAbs().maxCoeff() < 0.25);
    }
}

TEST_CASE("sample_actions: n_act proper rotations labeled Task -> Tool") {
    OverfitSetup s;
    SamplerSpec spec;
    spec.seed = 1;
    const std::vector<Pose> acts =
        sample_actions(s.state.net, s.stats, s.window, s.proprio, spec);
    REQUIRE(static_cast<int>(acts.size()) == s.cfg.n_act);
    for (const Pose& p : acts) {
        CHECK(p.parent_frame == FrameId::task());
        CHECK(p.child_frame == FrameId::tool());
        const Mat3 R = p.rotation.matrix();
        CHECK(R.determinant() == doctest::Approx(1.0).epsilon(1e-9));
        CHECK((R * R.transpose() - Mat3::Identity()).norm() < 1e-9);
    }
    // Samples decode to poses near the overfit targets.
    for (int j = 0; j < s.cfg.n_act; ++j) {
        const Pose& want = s.eps[0].actions[1 + j];
        CHECK((acts[j].translation - want.translation).norm() < 0.02);
        CHECK(geodesic_distance(acts[j].rotation, want.rotation) < 0.2);
    }
}

TEST_CASE("checkpoint: round trip is bitwise and missing/corrupt files throw") {
    const NetConfig cfg = reduced_config();
    PolicyNet net(cfg, 19);
    NormStats stats;
    Rng rng(2);
    for (int i = 0; i < 9; ++i) {
        stats.min[i] = rng.uniform(-1, 0);
        stats.max[i] = rng.uniform(0, 1);
    }
    stats.degenerate[4] = true;

    const auto dir = std::filesystem::temp_directory_path() / "toolplay_policy_test";
    std::filesystem::create_directories(dir);
    const std::string path = (dir / "net.ckpt").string();
    save_checkpoint(path, net, stats);

    auto [loaded, lstats] = load_checkpoint(path);
    CHECK(params_equal(net, loaded));
    CHECK(loaded.cfg.obs_w == cfg.obs_w);
    CHECK(loaded.cfg.n_act == cfg.n_act);
    CHECK(loaded.cfg.T == cfg.T);
    CHECK(lstats.min == stats.min);
    CHECK(lstats.max == stats.max);
    CHECK(lstats.degenerate == stats.degenerate);

    // Identical behavior, not just identical bits.
    Rng irng(6);
    std::vector<ImageRgb8> window = {random_image(cfg.obs_w, cfg.obs_h, irng)};
    Eigen::VectorXd a_t(cfg.act_dim());
    for (int i = 0; i < cfg.act_dim(); ++i) a_t[i] = irng.normal();
    Vec9 proprio;
    for (int i = 0; i < 9; ++i) proprio[i] = irng.uniform(-1, 1);
    const Eigen::VectorXd y1 = net.denoise(a_t, 3, window, proprio);
    const Eigen::VectorXd y2 = loaded.denoise(a_t, 3, window, proprio);
    CHECK((y1 - y2).norm() == 0.0);

    CHECK_THROWS_AS(load_checkpoint((dir / "nope.ckpt").string()), MissingCheckpoint);
    const std::string bad = (dir / "bad.ckpt").string();
    std::ofstream(bad) << "not a checkpoint";
    CHECK_THROWS_AS(load_checkpoint(bad), MissingCheckpoint);
    std::filesystem::remove_all(dir);
}

TEST_CASE("loss curve CSV: header plus one row per step") {
    const auto dir = std::filesystem::temp_directory_path() / "toolplay_policy_csv";
    std::filesystem::create_directories(dir);
    const std::string path = (dir / "loss.csv").string();
    write_loss_csv(path, {{0, 1.5}, {1, 0.75}, {2, 0.5}});

    std::ifstream is(path);
    std::string line;
    std::vector<std::string> lines;
    while (std::getline(is, line)) lines.push_back(line);
    REQUIRE(lines.size() == 4);
    CHECK(lines[0] == "step,loss");
    CHECK(lines[1].rfind("0,", 0) == 0);
    CHECK(lines[3].rfind("2,", 0) == 0);
    std::filesystem::remove_all(dir);
}
