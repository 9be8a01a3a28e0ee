#ifndef AFNET_LAYERS_HPP
#define AFNET_LAYERS_HPP

#include <string>
#include <vector>

#include "tensor.hpp"

namespace afnet::nn {

enum class Mode { Train, Eval };

// One named parameter (or non-trainable buffer, e.g. batchnorm running
// stats). Serialization walks these in declaration order.
struct ParamSlot {
    std::string name;
    std::string kind;
    Tensor* value = nullptr;
    Tensor* grad = nullptr; // null for buffers
    bool trainable = true;
};

// 1-D cross-correlation (no kernel flip), zero padding.
class Conv1d {
public:
    Conv1d(std::size_t in_ch, std::size_t out_ch, std::size_t kernel,
           std::size_t stride, std::size_t padding, Rng& init);

    Tensor forward(const Tensor& x); // (B, in_ch, L) -> (B, out_ch, L')
    Tensor backward(const Tensor& grad_out);
    void collect(std::vector<ParamSlot>& out, const std::string& prefix);
    std::size_t out_len(std::size_t in_len) const;

    Tensor weight; // (out_ch, in_ch, kernel)
    Tensor bias;   // (out_ch)
    Tensor grad_weight, grad_bias;
    std::size_t in_ch, out_ch, kernel, stride, padding;

private:
    Tensor x_cache_;
};

// Batch normalization over (B, C, L) or (B, C); statistics per channel.
class BatchNorm {
public:
    explicit BatchNorm(std::size_t channels, double eps = 1e-5, double momentum = 0.1);

    Tensor forward(const Tensor& x, Mode mode);
    Tensor backward(const Tensor& grad_out);
    void collect(std::vector<ParamSlot>& out, const std::string& prefix);

    Tensor gamma, beta, running_mean, running_var;
    Tensor grad_gamma, grad_beta;
    double eps, momentum;

private:
    Tensor xhat_cache_;
    std::vector<double> inv_std_cache_;
    Mode mode_cache_ = Mode::Train;
    std::size_t channels_;
};

class Relu {
public:
    Tensor forward(const Tensor& x);
    Tensor backward(const Tensor& grad_out);
private:
    Tensor x_cache_;
};

class LeakyRelu {
public:
    explicit LeakyRelu(double slope = 0.01) : slope(slope) {}
    Tensor forward(const Tensor& x);
    Tensor backward(const Tensor& grad_out);
    double slope;
private:
    Tensor x_cache_;
};

class Sigmoid {
public:
    Tensor forward(const Tensor& x);
    Tensor backward(const Tensor& grad_out);
private:
    Tensor y_cache_;
};

class TanhLayer {
public:
    Tensor forward(const Tensor& x);
    Tensor backward(const Tensor& grad_out);
private:
    Tensor y_cache_;
};

// Max pooling; padding positions count as -inf. Ties route gradient to the
// first index.
class MaxPool1d {
public:
    MaxPool1d(std::size_t kernel, std::size_t stride, std::size_t padding = 0)
        : kernel(kernel), stride(stride), padding(padding) {}

    Tensor forward(const Tensor& x); // (B, C, L) -> (B, C, L')
    Tensor backward(const Tensor& grad_out);
    std::size_t out_len(std::size_t in_len) const;

    std::size_t kernel, stride, padding;

private:
    std::vector<std::size_t> argmax_;
    std::vector<std::size_t> in_shape_;
};

class Dense {
public:
    Dense(std::size_t in_dim, std::size_t out_dim, Rng& init);

    Tensor forward(const Tensor& x); // (B, in) -> (B, out)
    Tensor backward(const Tensor& grad_out);
    void collect(std::vector<ParamSlot>& out, const std::string& prefix);

    Tensor weight; // (out, in)
    Tensor bias;   // (out)
    Tensor grad_weight, grad_bias;
    std::size_t in_dim, out_dim;

private:
    Tensor x_cache_;
};

// Inverted dropout: survivors scaled by 1/(1-rate) at train time.
class Dropout {
public:
    explicit Dropout(double rate) : rate(rate) {}
    Tensor forward(const Tensor& x, Mode mode, Rng& rng);
    Tensor backward(const Tensor& grad_out);
    double rate;
private:
    std::vector<double> mask_;
    bool identity_ = true;
};

// Single-direction GRU. Gate order is fixed: update z, reset r, candidate.
// h_t = (1-z) * candidate + z * h_{t-1}; zero initial state.
class Gru {
public:
    Gru(std::size_t input_dim, std::size_t hidden_dim, Rng& init);

    Tensor forward(const Tensor& x); // (B, T, I) -> (B, T, H)
    // Returns grad wrt x; accumulates parameter grads (BPTT).
    Tensor backward(const Tensor& grad_out);
    void collect(std::vector<ParamSlot>& out, const std::string& prefix);

    // input-path weights (H, I), hidden-path weights (H, H), biases (H)
    Tensor wz, wr, wc, uz, ur, uc, bz, br, bc, cz, cr, cc;
    Tensor gwz, gwr, gwc, guz, gur, guc, gbz, gbr, gbc, gcz, gcr, gcc;
    std::size_t input_dim, hidden_dim;

private:
    Tensor x_cache_;
    std::vector<Tensor> z_, r_, cand_, h_, uch_; // per step caches
};

// Bidirectional GRU: output (B, T, 2H) = [forward ; reversed-time backward].
class BiGru {
public:
    BiGru(std::size_t input_dim, std::size_t hidden_dim, Rng& init);

    Tensor forward(const Tensor& x);
    Tensor backward(const Tensor& grad_out);
    void collect(std::vector<ParamSlot>& out, const std::string& prefix);

    Gru fwd, bwd;
};

// Weighted binary cross-entropy. Probabilities are clamped to
// [1e-7, 1-1e-7]; the training path works on logits for stability.
double weighted_bce(const Tensor& probs, const Tensor& targets, double pos_weight);
double weighted_bce_logits(const Tensor& logits, const Tensor& targets, double pos_weight);
Tensor weighted_bce_logits_grad(const Tensor& logits, const Tensor& targets, double pos_weight);

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

class Adam {
public:
    explicit Adam(AdamConfig cfg = {}) : cfg(cfg) {}
    // Applies one update to every trainable slot and zeroes its gradient.
    void step(std::vector<ParamSlot>& slots);
    AdamConfig cfg;
private:
    std::vector<std::vector<double>> m_, v_;
    long t_ = 0;
};

void zero_grads(std::vector<ParamSlot>& slots);
std::size_t count_trainable(const std::vector<ParamSlot>& slots);

// Single-file format: u64 little-endian JSON header length, JSON header
// (slot names/kinds/shapes), then f32 blobs in declaration order.
void save_params(const std::vector<ParamSlot>& slots, const std::string& path);
void load_params(std::vector<ParamSlot>& slots, const std::string& path);

} // namespace afnet::nn

#endif
