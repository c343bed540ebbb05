#include <cmath>

#include "toolplay/policy.hpp"
#include "toolplay/rng.hpp"

namespace toolplay {

namespace {

void init_tensor(Tensor& t, const std::string& name, std::vector<int> shape, int fan_in,
                 Rng& rng) {
    t.name = name;
    t.shape = std::move(shape);
    size_t n = 1;
    for (int d : t.shape) n *= static_cast<size_t>(d);
    t.v.resize(n);
    t.g.assign(n, 0.0);
    // LeCun uniform (variance 1/fan_in): preserves activation scale through
    // the tanh stack so the observation embedding is not drowned out by the
    // unit-scale noisy-chunk input.
    const double s = std::sqrt(3.0 / std::max(1, fan_in));
    for (double& w : t.v) w = rng.uniform(-s, s);
}

// Output spatial size of a 3x3 / stride-2 / pad-1 convolution.
int half(int n) { return (n - 1) / 2 + 1; }

struct ConvDims {
    int in_c, in_h, in_w, out_c, out_h, out_w;
};

void conv_forward(const ConvDims& d, const std::vector<double>& x, const Tensor& w,
                  const Tensor& b, std::vector<double>& out) {
    out.assign(static_cast<size_t>(d.out_c) * d.out_h * d.out_w, 0.0);
    for (int oc = 0; oc < d.out_c; ++oc) {
        for (int oy = 0; oy < d.out_h; ++oy) {
            for (int ox = 0; ox < d.out_w; ++ox) {
                double s = b.v[oc];
                for (int ic = 0; ic < d.in_c; ++ic) {
                    const double* wp = &w.v[((static_cast<size_t>(oc) * d.in_c + ic) * 9)];
                    const double* xp = &x[static_cast<size_t>(ic) * d.in_h * d.in_w];
                    for (int ky = 0; ky < 3; ++ky) {
                        const int iy = oy * 2 + ky - 1;
                        if (iy < 0 || iy >= d.in_h) continue;
                        for (int kx = 0; kx < 3; ++kx) {
                            const int ix = ox * 2 + kx - 1;
                            if (ix < 0 || ix >= d.in_w) continue;
                            s += wp[ky * 3 + kx] * xp[iy * d.in_w + ix];
                        }
                    }
                }
                out[(static_cast<size_t>(oc) * d.out_h + oy) * d.out_w + ox] = std::tanh(s);
            }
        }
    }
}

// dy is the gradient w.r.t. the post-tanh output `y`; dx may be null for the
// first layer.
void conv_backward(const ConvDims& d, const std::vector<double>& x, const std::vector<double>& y,
                   const std::vector<double>& dy, Tensor& w, Tensor& b, std::vector<double>* dx) {
    if (dx) dx->assign(x.size(), 0.0);
    for (int oc = 0; oc < d.out_c; ++oc) {
        for (int oy = 0; oy < d.out_h; ++oy) {
            for (int ox = 0; ox < d.out_w; ++ox) {
                const size_t oi = (static_cast<size_t>(oc) * d.out_h + oy) * d.out_w + ox;
                const double dpre = dy[oi] * (1.0 - y[oi] * y[oi]);
                if (dpre == 0.0) continue;
                b.g[oc] += dpre;
                for (int ic = 0; ic < d.in_c; ++ic) {
                    double* gw = &w.g[((static_cast<size_t>(oc) * d.in_c + ic) * 9)];
                    const double* wp = &w.v[((static_cast<size_t>(oc) * d.in_c + ic) * 9)];
                    const double* xp = &x[static_cast<size_t>(ic) * d.in_h * d.in_w];
                    double* dxp = dx ? &(*dx)[static_cast<size_t>(ic) * d.in_h * d.in_w] : nullptr;
                    for (int ky = 0; ky < 3; ++ky) {
                        const int iy = oy * 2 + ky - 1;
                        if (iy < 0 || iy >= d.in_h) continue;
                        for (int kx = 0; kx < 3; ++kx) {
                            const int ix = ox * 2 + kx - 1;
                            if (ix < 0 || ix >= d.in_w) continue;
                            gw[ky * 3 + kx] += dpre * xp[iy * d.in_w + ix];
                            if (dxp) dxp[iy * d.in_w + ix] += dpre * wp[ky * 3 + kx];
                        }
                    }
                }
            }
        }
    }
}

Eigen::VectorXd timestep_embedding(int t, int dim, int T) {
    Eigen::VectorXd e(dim);
    const int half_dim = dim / 2;
    const double pos = static_cast<double>(t) / static_cast<double>(T);
    for (int i = 0; i < half_dim; ++i) {
        const double freq =
            std::exp(std::log(1000.0) * static_cast<double>(i) / std::max(1, half_dim - 1));
        e[2 * i] = std::sin(pos * freq);
        e[2 * i + 1] = std::cos(pos * freq);
    }
    return e;
}

Eigen::VectorXd linear_tanh(const Tensor& w, const Tensor& b, const Eigen::VectorXd& x,
                            bool activate) {
    const int out = b.shape[0];
    const int in = static_cast<int>(x.size());
    Eigen::VectorXd y(out);
    for (int o = 0; o < out; ++o) {
        double s = b.v[o];
        const double* wp = &w.v[static_cast<size_t>(o) * in];
        for (int i = 0; i < in; ++i) s += wp[i] * x[i];
        y[o] = activate ? std::tanh(s) : s;
    }
    return y;
}

// Backward through a linear(+tanh) layer; returns dx. `y` must be the
// post-activation output that linear_tanh produced.
Eigen::VectorXd linear_backward(Tensor& w, Tensor& b, const Eigen::VectorXd& x,
                                const Eigen::VectorXd& y, const Eigen::VectorXd& dy,
                                bool activate) {
    const int out = b.shape[0];
    const int in = static_cast<int>(x.size());
    Eigen::VectorXd dx = Eigen::VectorXd::Zero(in);
    for (int o = 0; o < out; ++o) {
        const double dpre = activate ? dy[o] * (1.0 - y[o] * y[o]) : dy[o];
        if (dpre == 0.0) continue;
        b.g[o] += dpre;
        double* gw = &w.g[static_cast<size_t>(o) * in];
        const double* wp = &w.v[static_cast<size_t>(o) * in];
        for (int i = 0; i < in; ++i) {
            gw[i] += dpre * x[i];
            dx[i] += dpre * wp[i];
        }
    }
    return dx;
}

}  // namespace

PolicyNet::PolicyNet(const NetConfig& c, std::uint64_t seed) : cfg(c) {
    if (c.obs_w < 8 || c.obs_h < 8 || c.n_obs < 1 || c.n_act < 1 || c.T < 1 ||
        c.t_embed % 2 != 0) {
        throw ConfigError("PolicyNet: invalid network configuration");
    }
    schedule = NoiseSchedule::cosine(c.T);

    const int h1 = half(c.obs_h), w1 = half(c.obs_w);
    const int h2 = half(h1), w2 = half(w1);
    const int h3 = half(h2), w3 = half(w2);
    const int flat = c.c3 * h3 * w3;
    const int cond = c.t_embed + c.embed + 9;
    const int mlp_in = c.act_dim() + cond;

    Rng rng(derive_seed(seed, "policy-init"));
    init_tensor(conv1_w, "conv1.w", {c.c1, c.in_channels(), 3, 3}, c.in_channels() * 9, rng);
    init_tensor(conv1_b, "conv1.b", {c.c1}, c.in_channels() * 9, rng);
    init_tensor(conv2_w, "conv2.w", {c.c2, c.c1, 3, 3}, c.c1 * 9, rng);
    init_tensor(conv2_b, "conv2.b", {c.c2}, c.c1 * 9, rng);
    init_tensor(conv3_w, "conv3.w", {c.c3, c.c2, 3, 3}, c.c2 * 9, rng);
    init_tensor(conv3_b, "conv3.b", {c.c3}, c.c2 * 9, rng);
    init_tensor(proj_w, "proj.w", {c.embed, flat}, flat, rng);
    init_tensor(proj_b, "proj.b", {c.embed}, flat, rng);
    init_tensor(fc1_w, "fc1.w", {c.hidden, mlp_in}, mlp_in, rng);
    init_tensor(fc1_b, "fc1.b", {c.hidden}, mlp_in, rng);
    init_tensor(fc2_w, "fc2.w", {c.hidden, c.hidden + cond}, c.hidden + cond, rng);
    init_tensor(fc2_b, "fc2.b", {c.hidden}, c.hidden + cond, rng);
    init_tensor(fc3_w, "fc3.w", {c.hidden, c.hidden + cond}, c.hidden + cond, rng);
    init_tensor(fc3_b, "fc3.b", {c.hidden}, c.hidden + cond, rng);
    init_tensor(fc4_w, "fc4.w", {c.act_dim(), c.hidden + cond}, c.hidden + cond, rng);
    init_tensor(fc4_b, "fc4.b", {c.act_dim()}, c.hidden + cond, rng);
}

std::vector<Tensor*> PolicyNet::params() {
    return {&conv1_w, &conv1_b, &conv2_w, &conv2_b, &conv3_w, &conv3_b, &proj_w, &proj_b,
            &fc1_w,   &fc1_b,   &fc2_w,   &fc2_b,   &fc3_w,   &fc3_b,   &fc4_w,  &fc4_b};
}

std::vector<const Tensor*> PolicyNet::params() const {
    auto mut = const_cast<PolicyNet*>(this)->params();
    return std::vector<const Tensor*>(mut.begin(), mut.end());
}

size_t PolicyNet::param_count() const {
    size_t n = 0;
    for (const Tensor* t : params()) n += t->size();
    return n;
}

void PolicyNet::zero_grad() {
    for (Tensor* t : params()) std::fill(t->g.begin(), t->g.end(), 0.0);
}

Eigen::VectorXd PolicyNet::encoder_forward(const std::vector<ImageRgb8>& window,
                                           Cache& cache) const {
    if (static_cast<int>(window.size()) != cfg.n_obs) {
        throw ShapeMismatch("encode_obs: expected " + std::to_string(cfg.n_obs) + " frames, got " +
                            std::to_string(window.size()));
    }
    for (const ImageRgb8& img : window) {
        if (img.width != cfg.obs_w || img.height != cfg.obs_h) {
            throw ShapeMismatch("encode_obs: frame is " + std::to_string(img.width) + "x" +
                                std::to_string(img.height) + ", expected " +
                                std::to_string(cfg.obs_w) + "x" + std::to_string(cfg.obs_h));
        }
    }

    const int H = cfg.obs_h, W = cfg.obs_w;
    cache.x0.assign(static_cast<size_t>(cfg.in_channels()) * H * W, 0.0);
    for (int f = 0; f < cfg.n_obs; ++f) {
        for (int y = 0; y < H; ++y) {
            for (int x = 0; x < W; ++x) {
                const std::uint8_t* p = window[f].px(x, y);
                for (int c = 0; c < 3; ++c) {
                    cache.x0[((static_cast<size_t>(f) * 3 + c) * H + y) * W + x] = p[c] / 255.0;
                }
            }
        }
    }

    const int h1 = half(H), w1 = half(W), h2 = half(h1), w2 = half(w1), h3 = half(h2),
              w3 = half(w2);
    conv_forward({cfg.in_channels(), H, W, cfg.c1, h1, w1}, cache.x0, conv1_w, conv1_b, cache.a1);
    conv_forward({cfg.c1, h1, w1, cfg.c2, h2, w2}, cache.a1, conv2_w, conv2_b, cache.a2);
    conv_forward({cfg.c2, h2, w2, cfg.c3, h3, w3}, cache.a2, conv3_w, conv3_b, cache.a3);

    cache.flat = Eigen::Map<const Eigen::VectorXd>(cache.a3.data(),
                                                   static_cast<Eigen::Index>(cache.a3.size()));
    return linear_tanh(proj_w, proj_b, cache.flat, false);
}

void PolicyNet::encoder_backward(const Cache& cache, const Eigen::VectorXd& d_embed) {
    Eigen::VectorXd y_unused;  // projection is linear, `y` ignored
    Eigen::VectorXd d_flat =
        linear_backward(proj_w, proj_b, cache.flat, y_unused, d_embed, false);

    const int H = cfg.obs_h, W = cfg.obs_w;
    const int h1 = half(H), w1 = half(W), h2 = half(h1), w2 = half(w1), h3 = half(h2),
              w3 = half(w2);
    std::vector<double> d3(d_flat.data(), d_flat.data() + d_flat.size());
    std::vector<double> d2, d1;
    conv_backward({cfg.c2, h2, w2, cfg.c3, h3, w3}, cache.a2, cache.a3, d3, conv3_w, conv3_b, &d2);
    conv_backward({cfg.c1, h1, w1, cfg.c2, h2, w2}, cache.a1, cache.a2, d2, conv2_w, conv2_b, &d1);
    conv_backward({cfg.in_channels(), H, W, cfg.c1, h1, w1}, cache.x0, cache.a1, d1, conv1_w,
                  conv1_b, nullptr);
}

Eigen::VectorXd PolicyNet::mlp_forward(const Eigen::VectorXd& a_t, int t,
                                       const Eigen::VectorXd& obs_embed, const Vec9& proprio,
                                       Cache& cache) const {
    if (a_t.size() != cfg.act_dim()) {
        throw ShapeMismatch("denoise: action chunk has dim " + std::to_string(a_t.size()) +
                            ", expected " + std::to_string(cfg.act_dim()));
    }
    if (t < 1 || t > cfg.T) throw DomainError("denoise: t out of range");
    const Eigen::VectorXd te = timestep_embedding(t, cfg.t_embed, cfg.T);
    // The conditioning vector feeds every layer, not just the first: the
    // noisy-chunk pathway otherwise dominates early training and the
    // observation embedding never develops gradient pressure.
    const int cond = cfg.t_embed + cfg.embed + 9;
    cache.mlp_in.resize(cfg.act_dim() + cond);
    cache.mlp_in << a_t, te, obs_embed, proprio;
    cache.h1 = linear_tanh(fc1_w, fc1_b, cache.mlp_in, true);
    cache.in2.resize(cfg.hidden + cond);
    cache.in2 << cache.h1, te, obs_embed, proprio;
    cache.h2 = linear_tanh(fc2_w, fc2_b, cache.in2, true);
    cache.in3.resize(cfg.hidden + cond);
    cache.in3 << cache.h2, te, obs_embed, proprio;
    cache.h3 = linear_tanh(fc3_w, fc3_b, cache.in3, true);
    cache.in4.resize(cfg.hidden + cond);
    cache.in4 << cache.h3, te, obs_embed, proprio;
    // The head predicts v = sqrt(ab) eps - sqrt(1-ab) a0, from which
    // eps_hat = sqrt(ab) v_hat + sqrt(1-ab) a_t. Unlike a clean-chunk head,
    // which reweights the eps MSE by ab/(1-ab) and concentrates the gradient
    // budget at small t (where a_t already reveals the chunk and the policy
    // comes out image-blind), the v target keeps the conditioning signal at
    // mid t. Unlike a direct eps head, recovering the clean chunk during
    // sampling needs no 1/sqrt(ab) division, so v_hat errors at large t do
    // not blow up the first sampler steps.
    const Eigen::VectorXd head = linear_tanh(fc4_w, fc4_b, cache.in4, false);
    const double ab = schedule.alpha_bar[t];
    cache.head_coeff = std::sqrt(ab);
    return std::sqrt(ab) * head + std::sqrt(1.0 - ab) * a_t;
}

Eigen::VectorXd PolicyNet::mlp_backward(const Cache& cache, const Eigen::VectorXd& d_eps) {
    Eigen::VectorXd y_unused;
    const Eigen::VectorXd d_head = cache.head_coeff * d_eps;
    Eigen::VectorXd d_embed = Eigen::VectorXd::Zero(cfg.embed);
    auto take_cond = [&](const Eigen::VectorXd& din, int lead) {
        d_embed += din.segment(lead + cfg.t_embed, cfg.embed);
        return din.head(lead);
    };
    Eigen::VectorXd d4 = linear_backward(fc4_w, fc4_b, cache.in4, y_unused, d_head, false);
    Eigen::VectorXd d3 = linear_backward(fc3_w, fc3_b, cache.in3, cache.h3,
                                         take_cond(d4, cfg.hidden), true);
    Eigen::VectorXd d2 = linear_backward(fc2_w, fc2_b, cache.in2, cache.h2,
                                         take_cond(d3, cfg.hidden), true);
    Eigen::VectorXd din = linear_backward(fc1_w, fc1_b, cache.mlp_in, cache.h1,
                                          take_cond(d2, cfg.hidden), true);
    take_cond(din, cfg.act_dim());
    return d_embed;
}

Eigen::VectorXd PolicyNet::encode_obs(const std::vector<ImageRgb8>& window) const {
    Cache cache;
    return encoder_forward(window, cache);
}

Eigen::VectorXd PolicyNet::denoise(const Eigen::VectorXd& a_t, int t,
                                   const std::vector<ImageRgb8>& window,
                                   const Vec9& proprio) const {
    Cache cache;
    const Eigen::VectorXd embed = encoder_forward(window, cache);
    return mlp_forward(a_t, t, embed, proprio, cache);
}

double loss(PolicyNet& net, const std::vector<Chunk>& batch, std::uint64_t seed,
            const DenoiserOverride& override_fn) {
    if (batch.empty()) throw EmptyDataset("loss: empty batch");
    net.zero_grad();

    const int D = net.cfg.act_dim();
    double total = 0.0;
    for (size_t i = 0; i < batch.size(); ++i) {
        const Chunk& chunk = batch[i];
        if (static_cast<int>(chunk.actions.size()) != net.cfg.n_act) {
            throw ShapeMismatch("loss: chunk has " + std::to_string(chunk.actions.size()) +
                                " actions, expected " + std::to_string(net.cfg.n_act));
        }
        Eigen::VectorXd a0(D), eps(D);
        for (int j = 0; j < net.cfg.n_act; ++j) a0.segment<9>(9 * j) = chunk.actions[j];

        Rng rng(derive_seed(seed, "loss", i));
        const int t = 1 + static_cast<int>(rng.uniform_index(net.cfg.T));
        for (int d = 0; d < D; ++d) eps[d] = rng.normal();

        const Eigen::VectorXd a_t = forward_diffuse(a0, t, eps, net.schedule);
        const Vec9 proprio = chunk.obs_actions.empty() ? Vec9(Vec9::Zero())
                                                       : chunk.obs_actions.back();

        Eigen::VectorXd eps_hat;
        PolicyNet::Cache cache;
        const bool through_net = !override_fn;
        if (through_net) {
            const Eigen::VectorXd embed = net.encoder_forward(chunk.obs, cache);
            eps_hat = net.mlp_forward(a_t, t, embed, proprio, cache);
        } else {
            eps_hat = override_fn(i, eps);
        }

        const Eigen::VectorXd r = eps_hat - eps;
        total += r.squaredNorm();

        if (through_net) {
            const Eigen::VectorXd d_eps = (2.0 / static_cast<double>(batch.size())) * r;
            const Eigen::VectorXd d_embed = net.mlp_backward(cache, d_eps);
            net.encoder_backward(cache, d_embed);
        }
    }

    const double value = total / static_cast<double>(batch.size());
    if (!std::isfinite(value)) throw NonFiniteLoss("loss: non-finite value");
    return value;
}

}  // namespace toolplay
