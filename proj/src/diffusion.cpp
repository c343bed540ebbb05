#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>

#include "toolplay/policy.hpp"
#include "toolplay/rng.hpp"

namespace toolplay {

namespace {
constexpr double kX0Clamp = 1.5;
constexpr char kMagic[8] = {'T', 'P', 'P', 'O', 'L', 'C', 'K', '1'};
constexpr std::uint32_t kVersion = 1;
}  // namespace

NoiseSchedule NoiseSchedule::cosine(int T) {
    if (T < 1) throw ConfigError("NoiseSchedule: T must be positive");
    NoiseSchedule s;
    s.T = T;
    const double shift = 0.008;
    auto f = [&](int t) {
        const double u = (static_cast<double>(t) / T + shift) / (1.0 + shift);
        const double c = std::cos(u * M_PI / 2.0);
        return c * c;
    };
    // beta from the squared-cosine profile, clipped away from 1; alpha_bar is
    // then the cumulative product so the three stay exactly consistent.
    s.alpha_bar.assign(T + 1, 1.0);
    s.alpha.assign(T + 1, 1.0);
    s.beta.assign(T + 1, 0.0);
    double prev = 1.0;
    for (int t = 1; t <= T; ++t) {
        double beta = 1.0 - f(t) / f(t - 1);
        beta = std::min(std::max(beta, 1e-8), 0.999);
        s.beta[t] = beta;
        s.alpha[t] = 1.0 - beta;
        prev *= s.alpha[t];
        s.alpha_bar[t] = prev;
    }
    return s;
}

Eigen::VectorXd forward_diffuse(const Eigen::VectorXd& a0, int t, const Eigen::VectorXd& eps,
                                const NoiseSchedule& schedule) {
    if (t < 0 || t > schedule.T) throw DomainError("forward_diffuse: t out of range");
    if (a0.size() != eps.size()) throw ShapeMismatch("forward_diffuse: a0/eps size mismatch");
    const double ab = schedule.alpha_bar[t];
    return std::sqrt(ab) * a0 + std::sqrt(1.0 - ab) * eps;
}

TrainState::TrainState(const NetConfig& cfg, std::uint64_t seed) : net(cfg, seed) {
    for (const Tensor* t : net.params()) {
        m.emplace_back(t->size(), 0.0);
        v.emplace_back(t->size(), 0.0);
    }
}

namespace {

// Global-norm gradient clipping: the epsilon-MSE objective amplifies head
// errors by 1/sqrt(1 - alpha_bar_t) at small t, so per-batch gradients are
// heavy-tailed and occasionally explosive.
void clip_gradients(TrainState& state, double max_norm) {
    if (max_norm <= 0.0) return;
    auto params = state.net.params();
    double sq = 0.0;
    for (const Tensor* t : params)
        for (double g : t->g) sq += g * g;
    const double norm = std::sqrt(sq);
    if (norm <= max_norm) return;
    const double scale = max_norm / norm;
    for (Tensor* t : params)
        for (double& g : t->g) g *= scale;
}

void adam_step(TrainState& state, const TrainConfig& cfg, double lr) {
    state.step += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
    auto params = state.net.params();
    for (size_t p = 0; p < params.size(); ++p) {
        Tensor& t = *params[p];
        std::vector<double>& m = state.m[p];
        std::vector<double>& v = state.v[p];
        for (size_t i = 0; i < t.size(); ++i) {
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * t.g[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * t.g[i] * t.g[i];
            t.v[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + cfg.adam_eps);
        }
    }
}

}  // namespace

TrainState train(const std::vector<Episode>& episodes, const NormStats& stats,
                 const NetConfig& cfg, const TrainConfig& config,
                 std::vector<std::pair<int, double>>* loss_curve) {
    if (episodes.empty()) throw EmptyDataset("train: no episodes");
    if (config.steps < 1 || config.batch < 1) throw ConfigError("train: invalid steps/batch");

    TrainState state(cfg, derive_seed(config.seed, "policy-init"));
    state.stats = stats;

    ChunkOptions chunk = config.chunk;
    chunk.n_obs = cfg.n_obs;
    chunk.n_act = cfg.n_act;

    for (int step = 0; step < config.steps; ++step) {
        const std::vector<Chunk> batch = sample_chunks(
            episodes, stats, config.batch, derive_seed(config.seed, "batch", step), chunk);
        const double value = loss(state.net, batch, derive_seed(config.seed, "noise", step));
        clip_gradients(state, config.max_grad_norm);
        double lr = config.lr;
        if (config.cosine_lr_decay)
            lr *= 0.5 * (1.0 + std::cos(M_PI * static_cast<double>(step) / config.steps));
        adam_step(state, config, lr);
        if (loss_curve) loss_curve->emplace_back(step, value);
        if (config.checkpoint_every > 0 && !config.checkpoint_prefix.empty() &&
            (step + 1) % config.checkpoint_every == 0) {
            save_checkpoint(config.checkpoint_prefix + "_" + std::to_string(step + 1) + ".ckpt",
                            state.net, state.stats);
        }
    }
    return state;
}

Eigen::VectorXd sample_chunk_norm(const PolicyNet& net, const std::vector<ImageRgb8>& window,
                                  const Vec9& proprio, const SamplerSpec& spec) {
    const NoiseSchedule& sch = net.schedule;
    const int D = net.cfg.act_dim();
    const Eigen::VectorXd embed = net.encode_obs(window);

    auto eps_hat_at = [&](const Eigen::VectorXd& x, int t) {
        PolicyNet::Cache cache;
        return const_cast<PolicyNet&>(net).mlp_forward(x, t, embed, proprio, cache);
    };
    auto x0_from = [&](const Eigen::VectorXd& x, const Eigen::VectorXd& eps_hat,
                       int t) -> Eigen::VectorXd {
        const double ab = sch.alpha_bar[t];
        Eigen::VectorXd x0 = (x - std::sqrt(1.0 - ab) * eps_hat) / std::sqrt(ab);
        return x0.cwiseMax(-kX0Clamp).cwiseMin(kX0Clamp);
    };

    Rng rng(derive_seed(spec.seed, "sample"));
    Eigen::VectorXd x(D);
    for (int d = 0; d < D; ++d) x[d] = rng.normal();

    if (spec.kind == SamplerSpec::Kind::DDPM) {
        for (int t = sch.T; t >= 1; --t) {
            const Eigen::VectorXd eps_hat = eps_hat_at(x, t);
            const Eigen::VectorXd x0 = x0_from(x, eps_hat, t);
            const double ab = sch.alpha_bar[t], ab_prev = sch.alpha_bar[t - 1];
            const double beta = sch.beta[t], alpha = sch.alpha[t];
            Eigen::VectorXd mean = (std::sqrt(ab_prev) * beta / (1.0 - ab)) * x0 +
                                   (std::sqrt(alpha) * (1.0 - ab_prev) / (1.0 - ab)) * x;
            if (t > 1) {
                const double sigma = std::sqrt(beta * (1.0 - ab_prev) / (1.0 - ab));
                for (int d = 0; d < D; ++d) mean[d] += sigma * rng.normal();
            }
            x = mean;
        }
        return x;
    }

    // Deterministic (eta = 0) sampling over an evenly spaced timestep
    // subsequence ending at 0.
    const int S = std::max(1, std::min(spec.steps, sch.T));
    for (int i = S; i >= 1; --i) {
        const int t = static_cast<int>(std::lround(static_cast<double>(sch.T) * i / S));
        const int t_prev = static_cast<int>(std::lround(static_cast<double>(sch.T) * (i - 1) / S));
        const Eigen::VectorXd eps_hat = eps_hat_at(x, t);
        const Eigen::VectorXd x0 = x0_from(x, eps_hat, t);
        const double ab_prev = sch.alpha_bar[t_prev];
        x = std::sqrt(ab_prev) * x0 + std::sqrt(1.0 - ab_prev) * eps_hat;
    }
    return x;
}

std::vector<Pose> sample_actions(const PolicyNet& net, const NormStats& stats,
                                 const std::vector<ImageRgb8>& window, const Vec9& proprio,
                                 const SamplerSpec& spec) {
    const Eigen::VectorXd chunk = sample_chunk_norm(net, window, proprio, spec);
    std::vector<Pose> out;
    out.reserve(net.cfg.n_act);
    for (int j = 0; j < net.cfg.n_act; ++j) {
        const Vec9 norm = chunk.segment<9>(9 * j);
        out.push_back(action_pose(denormalize(stats, norm)));
    }
    return out;
}

namespace {

void put_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(b), 4);
}

void put_f64(std::ostream& os, double d) {
    std::uint64_t v;
    std::memcpy(&v, &d, 8);
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(b), 8);
}

std::uint32_t get_u32(std::istream& is) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4)) {
        throw MissingCheckpoint("checkpoint: truncated file");
    }
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
}

double get_f64(std::istream& is) {
    unsigned char b[8];
    if (!is.read(reinterpret_cast<char*>(b), 8)) {
        throw MissingCheckpoint("checkpoint: truncated file");
    }
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    double d;
    std::memcpy(&d, &v, 8);
    return d;
}

}  // namespace

void save_checkpoint(const std::string& path, const PolicyNet& net, const NormStats& stats) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw MissingArtifact("save_checkpoint: cannot open " + path);
    os.write(kMagic, 8);
    put_u32(os, kVersion);
    const NetConfig& c = net.cfg;
    for (int v : {c.obs_w, c.obs_h, c.n_obs, c.n_act, c.c1, c.c2, c.c3, c.embed, c.hidden,
                  c.t_embed, c.T}) {
        put_u32(os, static_cast<std::uint32_t>(v));
    }
    for (int i = 0; i < 9; ++i) put_f64(os, stats.min[i]);
    for (int i = 0; i < 9; ++i) put_f64(os, stats.max[i]);
    for (int i = 0; i < 9; ++i) os.put(stats.degenerate[i] ? 1 : 0);

    const auto params = net.params();
    put_u32(os, static_cast<std::uint32_t>(params.size()));
    for (const Tensor* t : params) {
        put_u32(os, static_cast<std::uint32_t>(t->name.size()));
        os.write(t->name.data(), static_cast<std::streamsize>(t->name.size()));
        put_u32(os, static_cast<std::uint32_t>(t->shape.size()));
        for (int d : t->shape) put_u32(os, static_cast<std::uint32_t>(d));
        for (double w : t->v) put_f64(os, w);
    }
    if (!os) throw MissingArtifact("save_checkpoint: write failed for " + path);
}

std::pair<PolicyNet, NormStats> load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw MissingCheckpoint("load_checkpoint: cannot open " + path);
    char magic[8];
    if (!is.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0) {
        throw MissingCheckpoint("load_checkpoint: bad magic in " + path);
    }
    if (get_u32(is) != kVersion) {
        throw MissingCheckpoint("load_checkpoint: unsupported version in " + path);
    }
    NetConfig c;
    c.obs_w = static_cast<int>(get_u32(is));
    c.obs_h = static_cast<int>(get_u32(is));
    c.n_obs = static_cast<int>(get_u32(is));
    c.n_act = static_cast<int>(get_u32(is));
    c.c1 = static_cast<int>(get_u32(is));
    c.c2 = static_cast<int>(get_u32(is));
    c.c3 = static_cast<int>(get_u32(is));
    c.embed = static_cast<int>(get_u32(is));
    c.hidden = static_cast<int>(get_u32(is));
    c.t_embed = static_cast<int>(get_u32(is));
    c.T = static_cast<int>(get_u32(is));

    NormStats stats;
    for (int i = 0; i < 9; ++i) stats.min[i] = get_f64(is);
    for (int i = 0; i < 9; ++i) stats.max[i] = get_f64(is);
    for (int i = 0; i < 9; ++i) {
        const int ch = is.get();
        if (ch == EOF) throw MissingCheckpoint("load_checkpoint: truncated file");
        stats.degenerate[i] = ch != 0;
    }

    PolicyNet net(c, 0);
    auto params = net.params();
    const std::uint32_t count = get_u32(is);
    if (count != params.size()) {
        throw MissingCheckpoint("load_checkpoint: tensor count mismatch in " + path);
    }
    for (std::uint32_t k = 0; k < count; ++k) {
        const std::uint32_t name_len = get_u32(is);
        std::string name(name_len, '\0');
        if (!is.read(name.data(), name_len)) {
            throw MissingCheckpoint("load_checkpoint: truncated file");
        }
        Tensor* target = nullptr;
        for (Tensor* t : params) {
            if (t->name == name) {
                target = t;
                break;
            }
        }
        if (!target) throw MissingCheckpoint("load_checkpoint: unknown tensor " + name);
        const std::uint32_t ndim = get_u32(is);
        std::vector<int> shape(ndim);
        size_t n = 1;
        for (std::uint32_t d = 0; d < ndim; ++d) {
            shape[d] = static_cast<int>(get_u32(is));
            n *= static_cast<size_t>(shape[d]);
        }
        if (shape != target->shape || n != target->size()) {
            throw MissingCheckpoint("load_checkpoint: shape mismatch for " + name);
        }
        for (size_t i = 0; i < n; ++i) target->v[i] = get_f64(is);
    }
    return {std::move(net), stats};
}

void write_loss_csv(const std::string& path, const std::vector<std::pair<int, double>>& curve) {
    std::ofstream os(path);
    if (!os) throw MissingArtifact("write_loss_csv: cannot open " + path);
    os << "step,loss\n" << std::setprecision(17);
    for (const auto& [step, value] : curve) os << step << "," << value << "\n";
    if (!os) throw MissingArtifact("write_loss_csv: write failed for " + path);
}

}  // namespace toolplay
