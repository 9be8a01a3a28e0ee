#ifndef AFNET_DSU_HPP
#define AFNET_DSU_HPP

#include "layers.hpp"

namespace afnet::nn {

struct DsuConfig {
    double apply_prob = 0.5;
    double eps = 1e-6;
};

// Feature-statistics perturbation layer. At train time, with probability
// apply_prob (one Bernoulli draw per forward call), each instance's
// per-channel mean and std over the length axis are replaced by Gaussian
// resamples whose spread is the batch-level std of those statistics.
// Eval mode and the untaken branch are the exact identity.
class DsuLayer {
public:
    explicit DsuLayer(DsuConfig cfg = {}) : cfg(cfg) {}

    Tensor forward(const Tensor& x, Mode mode, Rng& rng); // (B, C, L)
    Tensor backward(const Tensor& grad_out);

    // Test hook: runs the perturbation branch with injected noise and frozen
    // batch-uncertainty scales, so finite differences see the same function
    // the backward pass differentiates.
    Tensor forward_frozen(const Tensor& x,
                          const std::vector<double>& eps_mu,
                          const std::vector<double>& eps_sigma,
                          const std::vector<double>& scale_mu,
                          const std::vector<double>& scale_sigma);

    DsuConfig cfg;

private:
    Tensor perturb(const Tensor& x);

    bool identity_ = true;
    Tensor x_cache_;
    // per (b,c), saved by the perturbation branch
    std::vector<double> mu_, sigma_, gamma_tilde_;
    std::vector<double> eps_mu_, eps_sigma_;     // per (b,c)
    std::vector<double> scale_mu_, scale_sigma_; // per c
};

} // namespace afnet::nn

#endif
