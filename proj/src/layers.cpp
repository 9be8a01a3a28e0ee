#include "layers.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include "json.hpp"

namespace afnet::nn {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRow = Eigen::Map<RowMat>;
using CMapRow = Eigen::Map<const RowMat>;

// ---------------------------------------------------------------- Conv1d

Conv1d::Conv1d(std::size_t in_ch, std::size_t out_ch, std::size_t kernel,
               std::size_t stride, std::size_t padding, Rng& init)
    : weight({out_ch, in_ch, kernel}),
      bias({out_ch}),
      grad_weight({out_ch, in_ch, kernel}),
      grad_bias({out_ch}),
      in_ch(in_ch), out_ch(out_ch), kernel(kernel), stride(stride), padding(padding) {
    const double sd = std::sqrt(2.0 / static_cast<double>(in_ch * kernel));
    for (auto& w : weight.data) w = init.normal(0.0, sd);
}

std::size_t Conv1d::out_len(std::size_t in_len) const {
    const long n = (static_cast<long>(in_len) + 2 * static_cast<long>(padding) -
                    static_cast<long>(kernel)) / static_cast<long>(stride) + 1;
    if (n < 1) throw RuntimeError("conv1d: output length < 1");
    return static_cast<std::size_t>(n);
}

namespace {

// cols(in_ch*kernel, out_len), column-major
void im2col(const Tensor& x, std::size_t b, std::size_t kernel, std::size_t stride,
            std::size_t padding, std::size_t lout, Eigen::MatrixXd& cols) {
    const std::size_t cin = x.shape[1], lin = x.shape[2];
    cols.resize(static_cast<long>(cin * kernel), static_cast<long>(lout));
    for (std::size_t t = 0; t < lout; ++t) {
        for (std::size_t c = 0; c < cin; ++c) {
            for (std::size_t k = 0; k < kernel; ++k) {
                const long idx = static_cast<long>(t * stride + k) - static_cast<long>(padding);
                double v = 0.0;
                if (idx >= 0 && idx < static_cast<long>(lin)) v = x.at3(b, c, static_cast<std::size_t>(idx));
                cols(static_cast<long>(c * kernel + k), static_cast<long>(t)) = v;
            }
        }
    }
}

} // namespace

Tensor Conv1d::forward(const Tensor& x) {
    if (x.shape.size() != 3 || x.shape[1] != in_ch)
        throw RuntimeError("conv1d: input shape mismatch");
    const std::size_t batch = x.shape[0], lout = out_len(x.shape[2]);
    Tensor y({batch, out_ch, lout});
    CMapRow w(weight.data.data(), static_cast<long>(out_ch), static_cast<long>(in_ch * kernel));
    Eigen::MatrixXd cols;
    for (std::size_t b = 0; b < batch; ++b) {
        im2col(x, b, kernel, stride, padding, lout, cols);
        MapRow yb(&y.data[b * out_ch * lout], static_cast<long>(out_ch), static_cast<long>(lout));
        yb.noalias() = w * cols;
        for (std::size_t c = 0; c < out_ch; ++c) yb.row(static_cast<long>(c)).array() += bias(c);
    }
    x_cache_ = x;
    return y;
}

Tensor Conv1d::backward(const Tensor& grad_out) {
    const Tensor& x = x_cache_;
    const std::size_t batch = x.shape[0], lin = x.shape[2], lout = grad_out.shape[2];
    Tensor gx(x.shape);
    CMapRow w(weight.data.data(), static_cast<long>(out_ch), static_cast<long>(in_ch * kernel));
    MapRow gw(grad_weight.data.data(), static_cast<long>(out_ch), static_cast<long>(in_ch * kernel));
    Eigen::MatrixXd cols, dcols;
    for (std::size_t b = 0; b < batch; ++b) {
        CMapRow gy(&grad_out.data[b * out_ch * lout], static_cast<long>(out_ch), static_cast<long>(lout));
        im2col(x, b, kernel, stride, padding, lout, cols);
        gw.noalias() += gy * cols.transpose();
        for (std::size_t c = 0; c < out_ch; ++c) grad_bias(c) += gy.row(static_cast<long>(c)).sum();
        dcols.noalias() = w.transpose() * gy;
        // col2im
        for (std::size_t t = 0; t < lout; ++t) {
            for (std::size_t c = 0; c < in_ch; ++c) {
                for (std::size_t k = 0; k < kernel; ++k) {
                    const long idx = static_cast<long>(t * stride + k) - static_cast<long>(padding);
                    if (idx >= 0 && idx < static_cast<long>(lin))
                        gx.at3(b, c, static_cast<std::size_t>(idx)) +=
                            dcols(static_cast<long>(c * kernel + k), static_cast<long>(t));
                }
            }
        }
    }
    return gx;
}

void Conv1d::collect(std::vector<ParamSlot>& out, const std::string& prefix) {
    out.push_back({prefix + ".weight", "conv1d", &weight, &grad_weight, true});
    out.push_back({prefix + ".bias", "conv1d", &bias, &grad_bias, true});
}

// -------------------------------------------------------------- BatchNorm

BatchNorm::BatchNorm(std::size_t channels, double eps, double momentum)
    : gamma({channels}), beta({channels}), running_mean({channels}), running_var({channels}),
      grad_gamma({channels}), grad_beta({channels}), eps(eps), momentum(momentum),
      channels_(channels) {
    for (auto& g : gamma.data) g = 1.0;
    for (auto& v : running_var.data) v = 1.0;
}

Tensor BatchNorm::forward(const Tensor& x, Mode mode) {
    const bool has_len = x.shape.size() == 3;
    if ((has_len ? x.shape[1] : x.shape[1]) != channels_)
        throw RuntimeError("batchnorm: channel mismatch");
    const std::size_t batch = x.shape[0];
    const std::size_t len = has_len ? x.shape[2] : 1;
    const std::size_t n = batch * len;
    Tensor y(x.shape);
    mode_cache_ = mode;
    inv_std_cache_.assign(channels_, 0.0);
    if (mode == Mode::Train) {
        xhat_cache_ = Tensor(x.shape);
        for (std::size_t c = 0; c < channels_; ++c) {
            double mean = 0.0;
            for (std::size_t b = 0; b < batch; ++b)
                for (std::size_t l = 0; l < len; ++l)
                    mean += x.data[(b * channels_ + c) * len + l];
            mean /= static_cast<double>(n);
            double var = 0.0;
            for (std::size_t b = 0; b < batch; ++b)
                for (std::size_t l = 0; l < len; ++l) {
                    const double d = x.data[(b * channels_ + c) * len + l] - mean;
                    var += d * d;
                }
            var /= static_cast<double>(n);
            const double inv = 1.0 / std::sqrt(var + eps);
            inv_std_cache_[c] = inv;
            for (std::size_t b = 0; b < batch; ++b)
                for (std::size_t l = 0; l < len; ++l) {
                    const std::size_t i = (b * channels_ + c) * len + l;
                    xhat_cache_.data[i] = (x.data[i] - mean) * inv;
                    y.data[i] = gamma(c) * xhat_cache_.data[i] + beta(c);
                }
            running_mean(c) = (1.0 - momentum) * running_mean(c) + momentum * mean;
            running_var(c) = (1.0 - momentum) * running_var(c) + momentum * var;
        }
    } else {
        xhat_cache_ = Tensor(x.shape);
        for (std::size_t c = 0; c < channels_; ++c) {
            const double inv = 1.0 / std::sqrt(running_var(c) + eps);
            inv_std_cache_[c] = inv;
            for (std::size_t b = 0; b < batch; ++b)
                for (std::size_t l = 0; l < len; ++l) {
                    const std::size_t i = (b * channels_ + c) * len + l;
                    xhat_cache_.data[i] = (x.data[i] - running_mean(c)) * inv;
                    y.data[i] = gamma(c) * xhat_cache_.data[i] + beta(c);
                }
        }
    }
    return y;
}

Tensor BatchNorm::backward(const Tensor& grad_out) {
    const std::size_t batch = grad_out.shape[0];
    const std::size_t len = grad_out.shape.size() == 3 ? grad_out.shape[2] : 1;
    const std::size_t n = batch * len;
    Tensor gx(grad_out.shape);
    if (mode_cache_ == Mode::Eval) {
        // running stats are constants here, so only the affine path remains
        for (std::size_t c = 0; c < channels_; ++c) {
            const double scale = gamma(c) * inv_std_cache_[c];
            for (std::size_t b = 0; b < batch; ++b)
                for (std::size_t l = 0; l < len; ++l) {
                    const std::size_t i = (b * channels_ + c) * len + l;
                    grad_gamma(c) += grad_out.data[i] * xhat_cache_.data[i];
                    grad_beta(c) += grad_out.data[i];
                    gx.data[i] = grad_out.data[i] * scale;
                }
        }
        return gx;
    }
    for (std::size_t c = 0; c < channels_; ++c) {
        double sum_gy = 0.0, sum_gy_xhat = 0.0;
        for (std::size_t b = 0; b < batch; ++b)
            for (std::size_t l = 0; l < len; ++l) {
                const std::size_t i = (b * channels_ + c) * len + l;
                sum_gy += grad_out.data[i];
                sum_gy_xhat += grad_out.data[i] * xhat_cache_.data[i];
            }
        grad_gamma(c) += sum_gy_xhat;
        grad_beta(c) += sum_gy;
        const double scale = gamma(c) * inv_std_cache_[c] / static_cast<double>(n);
        for (std::size_t b = 0; b < batch; ++b)
            for (std::size_t l = 0; l < len; ++l) {
                const std::size_t i = (b * channels_ + c) * len + l;
                gx.data[i] = scale * (static_cast<double>(n) * grad_out.data[i] - sum_gy -
                                      xhat_cache_.data[i] * sum_gy_xhat);
            }
    }
    return gx;
}

void BatchNorm::collect(std::vector<ParamSlot>& out, const std::string& prefix) {
    out.push_back({prefix + ".gamma", "batchnorm", &gamma, &grad_gamma, true});
    out.push_back({prefix + ".beta", "batchnorm", &beta, &grad_beta, true});
    out.push_back({prefix + ".running_mean", "batchnorm", &running_mean, nullptr, false});
    out.push_back({prefix + ".running_var", "batchnorm", &running_var, nullptr, false});
}

// ------------------------------------------------------------ activations

Tensor Relu::forward(const Tensor& x) {
    x_cache_ = x;
    Tensor y(x.shape);
    for (std::size_t i = 0; i < x.size(); ++i) y.data[i] = x.data[i] > 0.0 ? x.data[i] : 0.0;
    return y;
}

Tensor Relu::backward(const Tensor& grad_out) {
    Tensor gx(grad_out.shape);
    for (std::size_t i = 0; i < grad_out.size(); ++i)
        gx.data[i] = x_cache_.data[i] > 0.0 ? grad_out.data[i] : 0.0;
    return gx;
}

Tensor LeakyRelu::forward(const Tensor& x) {
    x_cache_ = x;
    Tensor y(x.shape);
    for (std::size_t i = 0; i < x.size(); ++i)
        y.data[i] = x.data[i] > 0.0 ? x.data[i] : slope * x.data[i];
    return y;
}

Tensor LeakyRelu::backward(const Tensor& grad_out) {
    Tensor gx(grad_out.shape);
    for (std::size_t i = 0; i < grad_out.size(); ++i)
        gx.data[i] = x_cache_.data[i] > 0.0 ? grad_out.data[i] : slope * grad_out.data[i];
    return gx;
}

Tensor Sigmoid::forward(const Tensor& x) {
    Tensor y(x.shape);
    for (std::size_t i = 0; i < x.size(); ++i) y.data[i] = 1.0 / (1.0 + std::exp(-x.data[i]));
    y_cache_ = y;
    return y;
}

Tensor Sigmoid::backward(const Tensor& grad_out) {
    Tensor gx(grad_out.shape);
    for (std::size_t i = 0; i < grad_out.size(); ++i) {
        const double s = y_cache_.data[i];
        gx.data[i] = grad_out.data[i] * s * (1.0 - s);
    }
    return gx;
}

Tensor TanhLayer::forward(const Tensor& x) {
    Tensor y(x.shape);
    for (std::size_t i = 0; i < x.size(); ++i) y.data[i] = std::tanh(x.data[i]);
    y_cache_ = y;
    return y;
}

Tensor TanhLayer::backward(const Tensor& grad_out) {
    Tensor gx(grad_out.shape);
    for (std::size_t i = 0; i < grad_out.size(); ++i) {
        const double t = y_cache_.data[i];
        gx.data[i] = grad_out.data[i] * (1.0 - t * t);
    }
    return gx;
}

// -------------------------------------------------------------- MaxPool1d

std::size_t MaxPool1d::out_len(std::size_t in_len) const {
    const long n = (static_cast<long>(in_len) + 2 * static_cast<long>(padding) -
                    static_cast<long>(kernel)) / static_cast<long>(stride) + 1;
    if (n < 1) throw RuntimeError("maxpool1d: output length < 1");
    return static_cast<std::size_t>(n);
}

Tensor MaxPool1d::forward(const Tensor& x) {
    const std::size_t batch = x.shape[0], ch = x.shape[1], lin = x.shape[2];
    const std::size_t lout = out_len(lin);
    Tensor y({batch, ch, lout});
    in_shape_ = x.shape;
    argmax_.assign(batch * ch * lout, 0);
    for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t c = 0; c < ch; ++c)
            for (std::size_t t = 0; t < lout; ++t) {
                double best = -std::numeric_limits<double>::infinity();
                std::size_t best_idx = 0;
                for (std::size_t k = 0; k < kernel; ++k) {
                    const long idx = static_cast<long>(t * stride + k) - static_cast<long>(padding);
                    if (idx < 0 || idx >= static_cast<long>(lin)) continue;
                    const double v = x.at3(b, c, static_cast<std::size_t>(idx));
                    if (v > best) { best = v; best_idx = static_cast<std::size_t>(idx); }
                }
                y.at3(b, c, t) = best;
                argmax_[(b * ch + c) * lout + t] = best_idx;
            }
    return y;
}

Tensor MaxPool1d::backward(const Tensor& grad_out) {
    const std::size_t batch = grad_out.shape[0], ch = grad_out.shape[1], lout = grad_out.shape[2];
    Tensor gx(in_shape_);
    for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t c = 0; c < ch; ++c)
            for (std::size_t t = 0; t < lout; ++t)
                gx.at3(b, c, argmax_[(b * ch + c) * lout + t]) += grad_out.at3(b, c, t);
    return gx;
}

// ------------------------------------------------------------------ Dense

Dense::Dense(std::size_t in_dim, std::size_t out_dim, Rng& init)
    : weight({out_dim, in_dim}), bias({out_dim}),
      grad_weight({out_dim, in_dim}), grad_bias({out_dim}),
      in_dim(in_dim), out_dim(out_dim) {
    const double sd = std::sqrt(2.0 / static_cast<double>(in_dim));
    for (auto& w : weight.data) w = init.normal(0.0, sd);
}

Tensor Dense::forward(const Tensor& x) {
    if (x.shape.size() != 2 || x.shape[1] != in_dim)
        throw RuntimeError("dense: input shape mismatch");
    const std::size_t batch = x.shape[0];
    Tensor y({batch, out_dim});
    CMapRow xm(x.data.data(), static_cast<long>(batch), static_cast<long>(in_dim));
    CMapRow wm(weight.data.data(), static_cast<long>(out_dim), static_cast<long>(in_dim));
    MapRow ym(y.data.data(), static_cast<long>(batch), static_cast<long>(out_dim));
    ym.noalias() = xm * wm.transpose();
    for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t o = 0; o < out_dim; ++o) y.at2(b, o) += bias(o);
    x_cache_ = x;
    return y;
}

Tensor Dense::backward(const Tensor& grad_out) {
    const std::size_t batch = grad_out.shape[0];
    Tensor gx({batch, in_dim});
    CMapRow gym(grad_out.data.data(), static_cast<long>(batch), static_cast<long>(out_dim));
    CMapRow xm(x_cache_.data.data(), static_cast<long>(batch), static_cast<long>(in_dim));
    CMapRow wm(weight.data.data(), static_cast<long>(out_dim), static_cast<long>(in_dim));
    MapRow gwm(grad_weight.data.data(), static_cast<long>(out_dim), static_cast<long>(in_dim));
    MapRow gxm(gx.data.data(), static_cast<long>(batch), static_cast<long>(in_dim));
    gwm.noalias() += gym.transpose() * xm;
    for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t o = 0; o < out_dim; ++o) grad_bias(o) += grad_out.at2(b, o);
    gxm.noalias() = gym * wm;
    return gx;
}

void Dense::collect(std::vector<ParamSlot>& out, const std::string& prefix) {
    out.push_back({prefix + ".weight", "dense", &weight, &grad_weight, true});
    out.push_back({prefix + ".bias", "dense", &bias, &grad_bias, true});
}

// ---------------------------------------------------------------- Dropout

Tensor Dropout::forward(const Tensor& x, Mode mode, Rng& rng) {
    if (mode == Mode::Eval || rate <= 0.0) {
        identity_ = true;
        return x;
    }
    identity_ = false;
    const double keep = 1.0 - rate;
    mask_.assign(x.size(), 0.0);
    Tensor y(x.shape);
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (rng.uniform() >= rate) {
            mask_[i] = 1.0 / keep;
            y.data[i] = x.data[i] * mask_[i];
        }
    }
    return y;
}

Tensor Dropout::backward(const Tensor& grad_out) {
    if (identity_) return grad_out;
    Tensor gx(grad_out.shape);
    for (std::size_t i = 0; i < grad_out.size(); ++i) gx.data[i] = grad_out.data[i] * mask_[i];
    return gx;
}

// -------------------------------------------------------------------- GRU

Gru::Gru(std::size_t input_dim, std::size_t hidden_dim, Rng& init)
    : wz({hidden_dim, input_dim}), wr({hidden_dim, input_dim}), wc({hidden_dim, input_dim}),
      uz({hidden_dim, hidden_dim}), ur({hidden_dim, hidden_dim}), uc({hidden_dim, hidden_dim}),
      bz({hidden_dim}), br({hidden_dim}), bc({hidden_dim}),
      cz({hidden_dim}), cr({hidden_dim}), cc({hidden_dim}),
      gwz({hidden_dim, input_dim}), gwr({hidden_dim, input_dim}), gwc({hidden_dim, input_dim}),
      guz({hidden_dim, hidden_dim}), gur({hidden_dim, hidden_dim}), guc({hidden_dim, hidden_dim}),
      gbz({hidden_dim}), gbr({hidden_dim}), gbc({hidden_dim}),
      gcz({hidden_dim}), gcr({hidden_dim}), gcc({hidden_dim}),
      input_dim(input_dim), hidden_dim(hidden_dim) {
    const double sw = 1.0 / std::sqrt(static_cast<double>(input_dim));
    const double su = 1.0 / std::sqrt(static_cast<double>(hidden_dim));
    for (Tensor* t : {&wz, &wr, &wc}) for (auto& v : t->data) v = init.normal(0.0, sw);
    for (Tensor* t : {&uz, &ur, &uc}) for (auto& v : t->data) v = init.normal(0.0, su);
}

namespace {
inline double sigm(double v) { return 1.0 / (1.0 + std::exp(-v)); }
}

Tensor Gru::forward(const Tensor& x) {
    if (x.shape.size() != 3 || x.shape[2] != input_dim)
        throw RuntimeError("gru: input shape mismatch");
    const std::size_t batch = x.shape[0], steps = x.shape[1];
    const std::size_t H = hidden_dim;
    x_cache_ = x;
    z_.assign(steps, Tensor({batch, H}));
    r_.assign(steps, Tensor({batch, H}));
    cand_.assign(steps, Tensor({batch, H}));
    h_.assign(steps, Tensor({batch, H}));
    uch_.assign(steps, Tensor({batch, H}));
    Tensor out({batch, steps, H});
    Tensor hprev({batch, H});

    CMapRow wzm(wz.data.data(), (long)H, (long)input_dim), wrm(wr.data.data(), (long)H, (long)input_dim),
        wcm(wc.data.data(), (long)H, (long)input_dim);
    CMapRow uzm(uz.data.data(), (long)H, (long)H), urm(ur.data.data(), (long)H, (long)H),
        ucm(uc.data.data(), (long)H, (long)H);

    Eigen::MatrixXd xt((long)batch, (long)input_dim);
    for (std::size_t t = 0; t < steps; ++t) {
        for (std::size_t b = 0; b < batch; ++b)
            for (std::size_t i = 0; i < input_dim; ++i)
                xt((long)b, (long)i) = x.data[(b * steps + t) * input_dim + i];
        CMapRow hp(hprev.data.data(), (long)batch, (long)H);
        Eigen::MatrixXd az = xt * wzm.transpose() + hp * uzm.transpose();
        Eigen::MatrixXd ar = xt * wrm.transpose() + hp * urm.transpose();
        Eigen::MatrixXd uh = hp * ucm.transpose();
        Eigen::MatrixXd axc = xt * wcm.transpose();
        for (std::size_t b = 0; b < batch; ++b)
            for (std::size_t j = 0; j < H; ++j) {
                const double zv = sigm(az((long)b, (long)j) + bz(j) + cz(j));
                const double rv = sigm(ar((long)b, (long)j) + br(j) + cr(j));
                const double uchv = uh((long)b, (long)j) + cc(j);
                const double cv = std::tanh(axc((long)b, (long)j) + bc(j) + rv * uchv);
                const double hv = (1.0 - zv) * cv + zv * hprev.at2(b, j);
                z_[t].at2(b, j) = zv;
                r_[t].at2(b, j) = rv;
                uch_[t].at2(b, j) = uchv;
                cand_[t].at2(b, j) = cv;
                h_[t].at2(b, j) = hv;
                out.data[(b * steps + t) * H + j] = hv;
            }
        hprev = h_[t];
    }
    return out;
}

Tensor Gru::backward(const Tensor& grad_out) {
    const std::size_t batch = x_cache_.shape[0], steps = x_cache_.shape[1];
    const std::size_t H = hidden_dim;
    Tensor gx(x_cache_.shape);
    Tensor dh_next({batch, H});

    CMapRow wzm(wz.data.data(), (long)H, (long)input_dim), wrm(wr.data.data(), (long)H, (long)input_dim),
        wcm(wc.data.data(), (long)H, (long)input_dim);
    CMapRow uzm(uz.data.data(), (long)H, (long)H), urm(ur.data.data(), (long)H, (long)H),
        ucm(uc.data.data(), (long)H, (long)H);
    MapRow gwzm(gwz.data.data(), (long)H, (long)input_dim), gwrm(gwr.data.data(), (long)H, (long)input_dim),
        gwcm(gwc.data.data(), (long)H, (long)input_dim);
    MapRow guzm(guz.data.data(), (long)H, (long)H), gurm(gur.data.data(), (long)H, (long)H),
        gucm(guc.data.data(), (long)H, (long)H);

    Eigen::MatrixXd daz((long)batch, (long)H), dar((long)batch, (long)H), dac((long)batch, (long)H),
        dacr((long)batch, (long)H), xt((long)batch, (long)input_dim), hprev((long)batch, (long)H);

    for (std::size_t t = steps; t-- > 0;) {
        for (std::size_t b = 0; b < batch; ++b)
            for (std::size_t i = 0; i < input_dim; ++i)
                xt((long)b, (long)i) = x_cache_.data[(b * steps + t) * input_dim + i];
        for (std::size_t b = 0; b < batch; ++b)
            for (std::size_t j = 0; j < H; ++j)
                hprev((long)b, (long)j) = t == 0 ? 0.0 : h_[t - 1].at2(b, j);

        for (std::size_t b = 0; b < batch; ++b)
            for (std::size_t j = 0; j < H; ++j) {
                const double dh = grad_out.data[(b * steps + t) * H + j] + dh_next.at2(b, j);
                const double zv = z_[t].at2(b, j), rv = r_[t].at2(b, j), cv = cand_[t].at2(b, j);
                const double dz = dh * (hprev((long)b, (long)j) - cv) * zv * (1.0 - zv);
                const double dc = dh * (1.0 - zv) * (1.0 - cv * cv);
                const double dr = dc * uch_[t].at2(b, j) * rv * (1.0 - rv);
                daz((long)b, (long)j) = dz;
                dar((long)b, (long)j) = dr;
                dac((long)b, (long)j) = dc;
                dacr((long)b, (long)j) = dc * rv;
                dh_next.at2(b, j) = dh * zv; // partial; matrix terms added below
            }

        gwzm.noalias() += daz.transpose() * xt;
        gwrm.noalias() += dar.transpose() * xt;
        gwcm.noalias() += dac.transpose() * xt;
        guzm.noalias() += daz.transpose() * hprev;
        gurm.noalias() += dar.transpose() * hprev;
        gucm.noalias() += dacr.transpose() * hprev;
        for (std::size_t b = 0; b < batch; ++b)
            for (std::size_t j = 0; j < H; ++j) {
                gbz(j) += daz((long)b, (long)j); gcz(j) += daz((long)b, (long)j);
                gbr(j) += dar((long)b, (long)j); gcr(j) += dar((long)b, (long)j);
                gbc(j) += dac((long)b, (long)j); gcc(j) += dacr((long)b, (long)j);
            }

        Eigen::MatrixXd dxt = daz * wzm + dar * wrm + dac * wcm;
        Eigen::MatrixXd dhp = daz * uzm + dar * urm + dacr * ucm;
        for (std::size_t b = 0; b < batch; ++b) {
            for (std::size_t i = 0; i < input_dim; ++i)
                gx.data[(b * steps + t) * input_dim + i] = dxt((long)b, (long)i);
            for (std::size_t j = 0; j < H; ++j)
                dh_next.at2(b, j) += dhp((long)b, (long)j);
        }
    }
    return gx;
}

void Gru::collect(std::vector<ParamSlot>& out, const std::string& prefix) {
    const char* names[] = {"wz", "wr", "wc", "uz", "ur", "uc", "bz", "br", "bc", "cz", "cr", "cc"};
    Tensor* vals[] = {&wz, &wr, &wc, &uz, &ur, &uc, &bz, &br, &bc, &cz, &cr, &cc};
    Tensor* grads[] = {&gwz, &gwr, &gwc, &guz, &gur, &guc, &gbz, &gbr, &gbc, &gcz, &gcr, &gcc};
    for (int i = 0; i < 12; ++i)
        out.push_back({prefix + "." + names[i], "gru", vals[i], grads[i], true});
}

// ------------------------------------------------------------------ BiGru

BiGru::BiGru(std::size_t input_dim, std::size_t hidden_dim, Rng& init)
    : fwd(input_dim, hidden_dim, init), bwd(input_dim, hidden_dim, init) {}

namespace {
Tensor reverse_time(const Tensor& x) {
    const std::size_t batch = x.shape[0], steps = x.shape[1], feat = x.shape[2];
    Tensor y(x.shape);
    for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t t = 0; t < steps; ++t)
            for (std::size_t f = 0; f < feat; ++f)
                y.data[(b * steps + t) * feat + f] = x.data[(b * steps + (steps - 1 - t)) * feat + f];
    return y;
}
} // namespace

Tensor BiGru::forward(const Tensor& x) {
    const std::size_t batch = x.shape[0], steps = x.shape[1];
    const std::size_t H = fwd.hidden_dim;
    Tensor hf = fwd.forward(x);
    Tensor hb = bwd.forward(reverse_time(x));
    Tensor out({batch, steps, 2 * H});
    for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t t = 0; t < steps; ++t)
            for (std::size_t j = 0; j < H; ++j) {
                out.data[(b * steps + t) * 2 * H + j] = hf.data[(b * steps + t) * H + j];
                out.data[(b * steps + t) * 2 * H + H + j] =
                    hb.data[(b * steps + (steps - 1 - t)) * H + j];
            }
    return out;
}

Tensor BiGru::backward(const Tensor& grad_out) {
    const std::size_t batch = grad_out.shape[0], steps = grad_out.shape[1];
    const std::size_t H = fwd.hidden_dim;
    Tensor gf({batch, steps, H}), gb({batch, steps, H});
    for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t t = 0; t < steps; ++t)
            for (std::size_t j = 0; j < H; ++j) {
                gf.data[(b * steps + t) * H + j] = grad_out.data[(b * steps + t) * 2 * H + j];
                gb.data[(b * steps + (steps - 1 - t)) * H + j] =
                    grad_out.data[(b * steps + t) * 2 * H + H + j];
            }
    Tensor gx = fwd.backward(gf);
    Tensor gxr = bwd.backward(gb);
    Tensor gxr_fixed = reverse_time(gxr);
    for (std::size_t i = 0; i < gx.size(); ++i) gx.data[i] += gxr_fixed.data[i];
    return gx;
}

void BiGru::collect(std::vector<ParamSlot>& out, const std::string& prefix) {
    fwd.collect(out, prefix + ".fwd");
    bwd.collect(out, prefix + ".bwd");
}

// ------------------------------------------------------------------- loss

namespace {
constexpr double kProbClamp = 1e-7;
inline double clampp(double p) { return std::min(1.0 - kProbClamp, std::max(kProbClamp, p)); }
}

double weighted_bce(const Tensor& probs, const Tensor& targets, double pos_weight) {
    if (probs.size() != targets.size()) throw RuntimeError("weighted_bce: size mismatch");
    if (probs.size() == 0) throw RuntimeError("weighted_bce: empty input");
    double acc = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        const double p = clampp(probs.data[i]);
        const double y = targets.data[i];
        acc += pos_weight * y * std::log(p) + (1.0 - y) * std::log(1.0 - p);
    }
    return -acc / static_cast<double>(probs.size());
}

double weighted_bce_logits(const Tensor& logits, const Tensor& targets, double pos_weight) {
    Tensor probs(logits.shape);
    for (std::size_t i = 0; i < logits.size(); ++i) probs.data[i] = sigm(logits.data[i]);
    return weighted_bce(probs, targets, pos_weight);
}

Tensor weighted_bce_logits_grad(const Tensor& logits, const Tensor& targets, double pos_weight) {
    Tensor g(logits.shape);
    const double n = static_cast<double>(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i) {
        const double p = sigm(logits.data[i]);
        const double y = targets.data[i];
        g.data[i] = (pos_weight * y * (p - 1.0) + (1.0 - y) * p) / n;
    }
    return g;
}

// ------------------------------------------------------------------- Adam

void Adam::step(std::vector<ParamSlot>& slots) {
    std::size_t n_train = 0;
    for (auto& s : slots) if (s.trainable) ++n_train;
    if (m_.size() != n_train) {
        m_.clear(); v_.clear();
        for (auto& s : slots)
            if (s.trainable) {
                m_.emplace_back(s.value->size(), 0.0);
                v_.emplace_back(s.value->size(), 0.0);
            }
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t_));
    std::size_t k = 0;
    for (auto& s : slots) {
        if (!s.trainable) continue;
        auto& m = m_[k];
        auto& v = v_[k];
        for (std::size_t i = 0; i < s.value->size(); ++i) {
            const double g = s.grad->data[i];
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            s.value->data[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
            s.grad->data[i] = 0.0;
        }
        ++k;
    }
}

void zero_grads(std::vector<ParamSlot>& slots) {
    for (auto& s : slots)
        if (s.grad) std::fill(s.grad->data.begin(), s.grad->data.end(), 0.0);
}

std::size_t count_trainable(const std::vector<ParamSlot>& slots) {
    std::size_t n = 0;
    for (auto& s : slots)
        if (s.trainable) n += s.value->size();
    return n;
}

// ---------------------------------------------------------- serialization

void save_params(const std::vector<ParamSlot>& slots, const std::string& path) {
    nlohmann::json header = nlohmann::json::array();
    for (const auto& s : slots) {
        header.push_back({{"name", s.name}, {"kind", s.kind},
                          {"shape", s.value->shape}, {"trainable", s.trainable}});
    }
    const std::string hs = nlohmann::json{{"layers", header}}.dump();
    std::ofstream f(path, std::ios::binary);
    if (!f) throw RuntimeError("cannot open for write: " + path);
    const std::uint64_t n = hs.size();
    f.write(reinterpret_cast<const char*>(&n), 8);
    f.write(hs.data(), static_cast<std::streamsize>(hs.size()));
    std::vector<float> buf;
    for (const auto& s : slots) {
        buf.assign(s.value->data.begin(), s.value->data.end());
        f.write(reinterpret_cast<const char*>(buf.data()),
                static_cast<std::streamsize>(buf.size() * sizeof(float)));
    }
    if (!f) throw RuntimeError("write failed: " + path);
}

void load_params(std::vector<ParamSlot>& slots, const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ConfigError("cannot open for read: " + path);
    std::uint64_t n = 0;
    f.read(reinterpret_cast<char*>(&n), 8);
    std::string hs(n, '\0');
    f.read(hs.data(), static_cast<std::streamsize>(n));
    if (!f) throw ConfigError("truncated parameter file: " + path);
    const auto header = nlohmann::json::parse(hs);
    const auto& layers = header.at("layers");
    if (layers.size() != slots.size())
        throw ConfigError("parameter file layer count mismatch: " + path);
    std::vector<float> buf;
    for (std::size_t i = 0; i < slots.size(); ++i) {
        const auto& e = layers[i];
        if (e.at("name").get<std::string>() != slots[i].name)
            throw ConfigError("parameter name mismatch at " + slots[i].name);
        const auto shape = e.at("shape").get<std::vector<std::size_t>>();
        if (shape != slots[i].value->shape)
            throw ConfigError("parameter shape mismatch at " + slots[i].name);
        buf.assign(slots[i].value->size(), 0.0f);
        f.read(reinterpret_cast<char*>(buf.data()),
               static_cast<std::streamsize>(buf.size() * sizeof(float)));
        if (!f) throw ConfigError("truncated parameter blob at " + slots[i].name);
        for (std::size_t j = 0; j < buf.size(); ++j) slots[i].value->data[j] = buf[j];
    }
}

} // namespace afnet::nn
