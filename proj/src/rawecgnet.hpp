#ifndef AFNET_RAWECGNET_HPP
#define AFNET_RAWECGNET_HPP

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "dsu.hpp"
#include "layers.hpp"
#include "windowing.hpp"

namespace afnet::model {

struct ModelSpec {
    std::size_t n_res_blocks = 7;
    std::size_t n_shrink_blocks = 4;
    std::size_t n_dense_blocks = 3;
    std::size_t base_channels = 16;
    std::size_t kernel_size = 9;
    nn::DsuConfig dsu;
    std::size_t context_p = 3, context_s = 3; // preceding/succeeding windows
    std::size_t gru_hidden = 64;
    double dropout_rate = 0.2;
    std::size_t dense_width = 1280;
    bool use_bigru = true;
    bool use_dsu = true;
    bool multi_lead_training = true;

    void validate() const;
    // key=value overrides, e.g. "base_channels=8,use_dsu=false"; unknown keys
    // are rejected.
    void apply_overrides(const std::string& overrides);
};

struct TrainConfig {
    double lr = 1e-3;
    std::size_t batch_size = 32;
    std::size_t max_epochs = 50;
    std::size_t patience = 5;
    double pos_batch_fraction = 0.25; // class-rebalanced sampling
    std::optional<double> pos_weight; // default: #neg/#pos on the train split
};

// conv-BN-ReLU x2, stride-2 on the first conv; shortcut is a stride-2 max
// pool with zero-padded extra channels.
class ResBlock {
public:
    ResBlock(std::size_t in_ch, std::size_t out_ch, std::size_t kernel, Rng& init);
    nn::Tensor forward(const nn::Tensor& x, nn::Mode mode);
    nn::Tensor backward(const nn::Tensor& grad_out);
    void collect(std::vector<nn::ParamSlot>& out, const std::string& prefix);

private:
    nn::Conv1d conv1_, conv2_;
    nn::BatchNorm bn1_, bn2_;
    nn::Relu relu_mid_, relu_out_;
    nn::MaxPool1d pool_;
    std::size_t in_ch_, out_ch_;
};

class ShrinkBlock {
public:
    ShrinkBlock(std::size_t in_ch, std::size_t kernel, Rng& init);
    nn::Tensor forward(const nn::Tensor& x, nn::Mode mode);
    nn::Tensor backward(const nn::Tensor& grad_out);
    void collect(std::vector<nn::ParamSlot>& out, const std::string& prefix);

private:
    nn::Conv1d conv_;
    nn::BatchNorm bn_;
    nn::Relu relu_;
};

class DenseBlock {
public:
    DenseBlock(std::size_t in_dim, std::size_t out_dim, double dropout_rate, Rng& init);
    nn::Tensor forward(const nn::Tensor& x, nn::Mode mode, Rng& rng);
    nn::Tensor backward(const nn::Tensor& grad_out);
    void collect(std::vector<nn::ParamSlot>& out, const std::string& prefix);
    std::size_t out_dim;

private:
    nn::Dense dense_;
    nn::BatchNorm bn_;
    nn::LeakyRelu act_;
    nn::Dropout drop_;
};

// Step-1 network: ResNet stack (DSU after each block when enabled), shrink
// blocks, flatten, dense blocks. The last dense-block activation is the
// window embedding; a single-unit head drives step-1 training only.
class Encoder {
public:
    Encoder(const ModelSpec& spec, Rng& init);

    struct Output {
        nn::Tensor embedding; // (B, d)
        nn::Tensor logit;     // (B)
    };
    Output forward(const nn::Tensor& x, nn::Mode mode, Rng& rng); // x: (B,1,6000)
    // Either gradient may be null.
    void backward(const nn::Tensor* grad_embedding, const nn::Tensor* grad_logit);

    void collect(std::vector<nn::ParamSlot>& out);
    std::size_t embedding_dim() const { return embedding_dim_; }
    std::size_t dsu_layer_count() const { return dsu_.size(); }

private:
    std::vector<ResBlock> res_;
    std::vector<nn::DsuLayer> dsu_;
    std::vector<ShrinkBlock> shrink_;
    std::vector<DenseBlock> dense_;
    std::unique_ptr<nn::Dense> head_;
    std::vector<std::size_t> flat_shape_; // (B, C, L) before flatten
    std::size_t embedding_dim_ = 0;
};

// Step-2 network. BiGRU over the context sequence, center output through
// BN-LReLU-dropout-dense(1); without the BiGRU, the same stack runs on the
// center embedding directly.
class ContextHead {
public:
    ContextHead(const ModelSpec& spec, std::size_t embedding_dim, Rng& init);

    nn::Tensor forward(const nn::Tensor& emb_seq, nn::Mode mode, Rng& rng); // (B,T,d) -> (B)
    nn::Tensor backward(const nn::Tensor& grad_logit);
    void collect(std::vector<nn::ParamSlot>& out);
    bool has_bigru() const { return gru_ != nullptr; }

private:
    std::unique_ptr<nn::BiGru> gru_;
    nn::BatchNorm bn_;
    nn::LeakyRelu act_;
    nn::Dropout drop_;
    std::unique_ptr<nn::Dense> out_;
    std::size_t steps_ = 0, center_ = 0, feat_ = 0;
};

struct TrainMeta {
    std::uint64_t seed = 0;
    std::size_t step1_epochs = 0, step2_epochs = 0;
    double pos_weight = 1.0;
};

class RawEcgNet {
public:
    RawEcgNet(const ModelSpec& spec, std::uint64_t seed);

    ModelSpec spec;
    Encoder encoder;
    ContextHead head;
    double threshold = 0.5;
    TrainMeta meta;

    std::vector<nn::ParamSlot> encoder_slots();
    std::vector<nn::ParamSlot> head_slots();
    std::vector<nn::ParamSlot> all_slots();
    std::size_t param_count();

    // Checkpoint directory: params.bin + model.json sidecar.
    void save(const std::string& dir) const;
    static RawEcgNet load(const std::string& dir);
};

// Per-window z-score input normalization; windows stacked into (B,1,6000).
nn::Tensor windows_to_input(const std::vector<const win::Window*>& batch);

struct EpochLog {
    double train_loss = 0.0;
    double val_loss = 0.0;
};

// Step 1: encoder + step-1 head on 30-s windows, weighted BCE, early stop on
// validation loss. Caller applies training-set exclusion beforehand.
std::vector<EpochLog> train_step1(RawEcgNet& model, const std::vector<win::Window>& train,
                                  const std::vector<win::Window>& val, const TrainConfig& cfg,
                                  Rng& rng);

// One recording-lead's windows in temporal order; centers with eligible=false
// (noisy at train time) are skipped as training targets but still provide
// context. Edge context replicates the boundary window.
struct WindowSequence {
    std::vector<const win::Window*> windows;
    std::vector<bool> eligible;
};

// Step 2: trains the context head on frozen-encoder embeddings.
std::vector<EpochLog> train_step2(RawEcgNet& model, const std::vector<WindowSequence>& train,
                                  const std::vector<WindowSequence>& val, const TrainConfig& cfg,
                                  Rng& rng);

// Eval-mode embeddings for a sequence of windows, batched.
std::vector<std::vector<double>> embed_windows(RawEcgNet& model,
                                               const std::vector<const win::Window*>& windows);

// Eval-mode center probabilities for every window of a sequence.
std::vector<double> sequence_probs(RawEcgNet& model, const std::vector<const win::Window*>& windows);

// F1-maximizing threshold over midpoints of sorted unique probabilities plus
// {0,1}; ties resolve to the lowest candidate.
double select_threshold(const std::vector<double>& probs, const std::vector<bool>& targets);

// Full eval pipeline on one recording lead; no window exclusion.
std::vector<win::IntervalPrediction> predict_recording(const io::EcgRecording& rec,
                                                       const std::string& lead,
                                                       RawEcgNet& model);

} // namespace afnet::model

#endif
