#include "dsu.hpp"

#include <cmath>

namespace afnet::nn {

namespace {

void instance_stats(const Tensor& x, std::vector<double>& mu, std::vector<double>& sigma) {
    const std::size_t batch = x.shape[0], ch = x.shape[1], len = x.shape[2];
    mu.assign(batch * ch, 0.0);
    sigma.assign(batch * ch, 0.0);
    for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t c = 0; c < ch; ++c) {
            double m = 0.0;
            for (std::size_t l = 0; l < len; ++l) m += x.at3(b, c, l);
            m /= static_cast<double>(len);
            double v = 0.0;
            for (std::size_t l = 0; l < len; ++l) {
                const double d = x.at3(b, c, l) - m;
                v += d * d;
            }
            v /= static_cast<double>(len);
            mu[b * ch + c] = m;
            sigma[b * ch + c] = std::sqrt(v);
        }
}

// population std of per-instance statistics across the batch, per channel
void batch_spread(const std::vector<double>& stat, std::size_t batch, std::size_t ch,
                  std::vector<double>& out) {
    out.assign(ch, 0.0);
    for (std::size_t c = 0; c < ch; ++c) {
        double m = 0.0;
        for (std::size_t b = 0; b < batch; ++b) m += stat[b * ch + c];
        m /= static_cast<double>(batch);
        double v = 0.0;
        for (std::size_t b = 0; b < batch; ++b) {
            const double d = stat[b * ch + c] - m;
            v += d * d;
        }
        out[c] = std::sqrt(v / static_cast<double>(batch));
    }
}

} // namespace

Tensor DsuLayer::forward(const Tensor& x, Mode mode, Rng& rng) {
    if (x.shape.size() != 3) throw RuntimeError("dsu: expected (batch, ch, len) input");
    if (mode == Mode::Eval || !rng.bernoulli(cfg.apply_prob)) {
        identity_ = true;
        return x;
    }
    const std::size_t batch = x.shape[0], ch = x.shape[1];
    if (batch < 2) throw RuntimeError("dsu: active forward needs batch >= 2");
    instance_stats(x, mu_, sigma_);
    batch_spread(mu_, batch, ch, scale_mu_);
    batch_spread(sigma_, batch, ch, scale_sigma_);
    eps_mu_.assign(batch * ch, 0.0);
    eps_sigma_.assign(batch * ch, 0.0);
    for (auto& e : eps_mu_) e = rng.normal();
    for (auto& e : eps_sigma_) e = rng.normal();
    return perturb(x);
}

Tensor DsuLayer::forward_frozen(const Tensor& x,
                                const std::vector<double>& eps_mu,
                                const std::vector<double>& eps_sigma,
                                const std::vector<double>& scale_mu,
                                const std::vector<double>& scale_sigma) {
    instance_stats(x, mu_, sigma_);
    eps_mu_ = eps_mu;
    eps_sigma_ = eps_sigma;
    scale_mu_ = scale_mu;
    scale_sigma_ = scale_sigma;
    return perturb(x);
}

Tensor DsuLayer::perturb(const Tensor& x) {
    identity_ = false;
    x_cache_ = x;
    const std::size_t batch = x.shape[0], ch = x.shape[1], len = x.shape[2];
    gamma_tilde_.assign(batch * ch, 0.0);
    Tensor y(x.shape);
    for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t c = 0; c < ch; ++c) {
            const std::size_t i = b * ch + c;
            const double gt = sigma_[i] + eps_sigma_[i] * scale_sigma_[c];
            const double bt = mu_[i] + eps_mu_[i] * scale_mu_[c];
            gamma_tilde_[i] = gt;
            const double inv = 1.0 / (sigma_[i] + cfg.eps);
            for (std::size_t l = 0; l < len; ++l)
                y.at3(b, c, l) = gt * (x.at3(b, c, l) - mu_[i]) * inv + bt;
        }
    return y;
}

Tensor DsuLayer::backward(const Tensor& grad_out) {
    if (identity_) return grad_out;
    const Tensor& x = x_cache_;
    const std::size_t batch = x.shape[0], ch = x.shape[1], len = x.shape[2];
    const double n = static_cast<double>(len);
    Tensor gx(x.shape);
    // Noise draws and batch-spread scales are constants of the draw; mu and
    // sigma carry gradient.
    for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t c = 0; c < ch; ++c) {
            const std::size_t i = b * ch + c;
            const double inv = 1.0 / (sigma_[i] + cfg.eps);
            // d(sigma)/dx needs 1/sigma itself, not the stabilized inverse
            const double inv_sigma = sigma_[i] > 0.0 ? 1.0 / sigma_[i] : inv;
            const double gt = gamma_tilde_[i];
            double sum_g = 0.0, sum_g_xhat = 0.0;
            for (std::size_t l = 0; l < len; ++l) {
                const double g = grad_out.at3(b, c, l);
                sum_g += g;
                sum_g_xhat += g * (x.at3(b, c, l) - mu_[i]) * inv;
            }
            const double d_mu = sum_g * (1.0 - gt * inv);
            const double d_sigma = sum_g_xhat * (1.0 - gt * inv);
            for (std::size_t l = 0; l < len; ++l) {
                const double xc = x.at3(b, c, l) - mu_[i];
                gx.at3(b, c, l) = grad_out.at3(b, c, l) * gt * inv + d_mu / n +
                                  d_sigma * xc * inv_sigma / n;
            }
        }
    return gx;
}

} // namespace afnet::nn
