#pragma once

#include <functional>

#include "toolplay/dataset.hpp"

namespace toolplay {

// Squared-cosine forward-process schedule; alpha_bar[0] = 1 by construction
// and alpha_bar is strictly decreasing over t = 0..T.
struct NoiseSchedule {
    int T = 100;
    std::vector<double> alpha_bar;  // size T+1
    std::vector<double> alpha;      // size T+1, alpha[t] = alpha_bar[t]/alpha_bar[t-1]
    std::vector<double> beta;       // size T+1, beta[t] = 1 - alpha[t]

    static NoiseSchedule cosine(int T = 100);
};

// a_t = sqrt(alpha_bar_t) a0 + sqrt(1 - alpha_bar_t) eps
Eigen::VectorXd forward_diffuse(const Eigen::VectorXd& a0, int t, const Eigen::VectorXd& eps,
                                const NoiseSchedule& schedule);

struct NetConfig {
    int obs_w = 48, obs_h = 48;
    int n_obs = 2, n_act = 16;
    int c1 = 8, c2 = 16, c3 = 32;  // encoder stage widths (3x3 convs, stride 2)
    int embed = 128;               // observation embedding
    int hidden = 256;              // denoiser MLP width
    int t_embed = 32;              // sinusoidal timestep embedding
    int T = 100;                   // diffusion steps

    int act_dim() const { return n_act * 9; }
    int in_channels() const { return 3 * n_obs; }
};

struct Tensor {
    std::string name;
    std::vector<int> shape;
    std::vector<double> v, g;

    size_t size() const { return v.size(); }
};

// Conv encoder + MLP denoiser with hand-written reverse-mode gradients.
// tanh activations throughout (smooth, so finite-difference checks are exact
// to O(h^2)). All math in 64-bit floats, single-threaded and deterministic.
class PolicyNet {
public:
    NetConfig cfg;
    NoiseSchedule schedule;

    PolicyNet(const NetConfig& cfg, std::uint64_t seed);

    std::vector<Tensor*> params();
    std::vector<const Tensor*> params() const;
    size_t param_count() const;
    void zero_grad();

    // observation window -> 128-dim embedding (images at cfg resolution,
    // [0,1] scaling applied internally). Throws ShapeMismatch.
    Eigen::VectorXd encode_obs(const std::vector<ImageRgb8>& window) const;

    // eps_hat(a_t, t, obs window, proprio). Forward only.
    Eigen::VectorXd denoise(const Eigen::VectorXd& a_t, int t,
                            const std::vector<ImageRgb8>& window,
                            const Vec9& proprio) const;

    Tensor conv1_w, conv1_b, conv2_w, conv2_b, conv3_w, conv3_b;
    Tensor proj_w, proj_b;
    Tensor fc1_w, fc1_b, fc2_w, fc2_b, fc3_w, fc3_b, fc4_w, fc4_b;

    struct Cache;  // per-sample activations for backward
    Eigen::VectorXd encoder_forward(const std::vector<ImageRgb8>& window, Cache& cache) const;
    void encoder_backward(const Cache& cache, const Eigen::VectorXd& d_embed);
    Eigen::VectorXd mlp_forward(const Eigen::VectorXd& a_t, int t,
                                const Eigen::VectorXd& obs_embed, const Vec9& proprio,
                                Cache& cache) const;
    Eigen::VectorXd mlp_backward(const Cache& cache, const Eigen::VectorXd& d_eps);
};

struct PolicyNet::Cache {
    std::vector<double> x0, a1, a2, a3;  // encoder activations (post-tanh)
    Eigen::VectorXd flat, mlp_in, in2, in3, in4, h1, h2, h3;
    double head_coeff = 1.0;  // d eps_hat / d (MLP head output)
};

// Optional denoiser override for oracle-injection tests: maps (sample index,
// drawn eps) -> eps_hat.
using DenoiserOverride =
    std::function<Eigen::VectorXd(size_t, const Eigen::VectorXd&)>;

// Per-sample draws are Rng(derive_seed(seed, "loss", i)): first t uniform in
// [1, T], then act_dim standard normals. Returns mean over the batch of
// ||eps - eps_hat||^2 and accumulates parameter gradients.
double loss(PolicyNet& net, const std::vector<Chunk>& batch, std::uint64_t seed,
            const DenoiserOverride& override_fn = nullptr);

struct TrainConfig {
    int steps = 1500;
    int batch = 32;
    double lr = 1e-3, beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
    double max_grad_norm = 10.0;  // global-norm gradient clip; <= 0 disables
    bool cosine_lr_decay = false;  // lr * 0.5 (1 + cos(pi step/steps))
    std::uint64_t seed = 0;
    ChunkOptions chunk;
    int checkpoint_every = 0;  // 0 = only the loss curve
    std::string checkpoint_prefix;
};

struct TrainState {
    PolicyNet net;
    NormStats stats;
    std::vector<std::vector<double>> m, v;  // Adam moments, parallel to params()
    long step = 0;

    TrainState(const NetConfig& cfg, std::uint64_t seed);
};

TrainState train(const std::vector<Episode>& episodes, const NormStats& stats,
                 const NetConfig& cfg, const TrainConfig& config,
                 std::vector<std::pair<int, double>>* loss_curve = nullptr);

struct SamplerSpec {
    enum class Kind { DDPM, DDIM };
    Kind kind = Kind::DDIM;
    int steps = 16;  // DDIM subsequence length (DDPM always walks all T)
    std::uint64_t seed = 0;
};

// Reverse diffusion from unit Gaussian noise; returns the normalized chunk
// (x0 estimates clamped to [-1.5, 1.5]).
Eigen::VectorXd sample_chunk_norm(const PolicyNet& net, const std::vector<ImageRgb8>& window,
                                  const Vec9& proprio, const SamplerSpec& spec);

// Denormalized, rot6d-decoded n_act Tool-in-Task poses.
std::vector<Pose> sample_actions(const PolicyNet& net, const NormStats& stats,
                                 const std::vector<ImageRgb8>& window, const Vec9& proprio,
                                 const SamplerSpec& spec);

// Checkpoint: magic + version + NetConfig header + NormStats + named f64
// tensors, all little-endian.
void save_checkpoint(const std::string& path, const PolicyNet& net, const NormStats& stats);
std::pair<PolicyNet, NormStats> load_checkpoint(const std::string& path);

void write_loss_csv(const std::string& path, const std::vector<std::pair<int, double>>& curve);

}  // namespace toolplay
