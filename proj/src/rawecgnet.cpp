#include "rawecgnet.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "json.hpp"

namespace fs = std::filesystem;

namespace afnet::model {

using nn::Mode;
using nn::Tensor;

// ---------------------------------------------------------------- ModelSpec

void ModelSpec::validate() const {
    if (n_res_blocks == 0 || n_dense_blocks == 0) throw ConfigError("spec: block counts must be positive");
    if (base_channels == 0) throw ConfigError("spec: base_channels must be positive");
    if (kernel_size < 3 || kernel_size % 2 == 0) throw ConfigError("spec: kernel_size must be odd and >= 3");
    if (dropout_rate < 0.0 || dropout_rate >= 1.0) throw ConfigError("spec: dropout_rate out of [0,1)");
    if (dsu.apply_prob < 0.0 || dsu.apply_prob > 1.0) throw ConfigError("spec: dsu apply_prob out of [0,1]");
    if (gru_hidden == 0 || dense_width == 0) throw ConfigError("spec: widths must be positive");
    // channel halving across shrink blocks must keep >= 1 channel
    std::size_t ch = base_channels;
    for (std::size_t i = 1; i < n_res_blocks; ++i)
        if (i % 2 == 1) ch *= 2;
    for (std::size_t i = 0; i < n_shrink_blocks; ++i) {
        if (ch < 2) throw ConfigError("spec: shrink blocks exhaust channels");
        ch /= 2;
    }
    std::size_t w = dense_width;
    for (std::size_t i = 1; i < n_dense_blocks; ++i) {
        if (w < 2) throw ConfigError("spec: dense blocks exhaust width");
        w /= 2;
    }
}

namespace {
bool parse_bool(const std::string& v, const std::string& key) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError("bad boolean for " + key + ": " + v);
}
} // namespace

void ModelSpec::apply_overrides(const std::string& overrides) {
    std::size_t pos = 0;
    while (pos < overrides.size()) {
        auto end = overrides.find(',', pos);
        if (end == std::string::npos) end = overrides.size();
        const std::string kv = overrides.substr(pos, end - pos);
        pos = end + 1;
        if (kv.empty()) continue;
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw ConfigError("override must be key=value: " + kv);
        const std::string k = kv.substr(0, eq), v = kv.substr(eq + 1);
        if (k == "base_channels") base_channels = std::stoul(v);
        else if (k == "kernel_size") kernel_size = std::stoul(v);
        else if (k == "dense_width") dense_width = std::stoul(v);
        else if (k == "gru_hidden") gru_hidden = std::stoul(v);
        else if (k == "context_p") context_p = std::stoul(v);
        else if (k == "context_s") context_s = std::stoul(v);
        else if (k == "dropout_rate") dropout_rate = std::stod(v);
        else if (k == "dsu_apply_prob") dsu.apply_prob = std::stod(v);
        else if (k == "use_bigru") use_bigru = parse_bool(v, k);
        else if (k == "use_dsu") use_dsu = parse_bool(v, k);
        else if (k == "multi_lead_training") multi_lead_training = parse_bool(v, k);
        else throw ConfigError("unknown spec override: " + k);
    }
    validate();
}

static void to_json(nlohmann::json& j, const ModelSpec& s) {
    j = {{"n_res_blocks", s.n_res_blocks}, {"n_shrink_blocks", s.n_shrink_blocks},
         {"n_dense_blocks", s.n_dense_blocks}, {"base_channels", s.base_channels},
         {"kernel_size", s.kernel_size}, {"dsu_apply_prob", s.dsu.apply_prob},
         {"dsu_eps", s.dsu.eps}, {"context_p", s.context_p}, {"context_s", s.context_s},
         {"gru_hidden", s.gru_hidden}, {"dropout_rate", s.dropout_rate},
         {"dense_width", s.dense_width}, {"use_bigru", s.use_bigru}, {"use_dsu", s.use_dsu},
         {"multi_lead_training", s.multi_lead_training}};
}

static void from_json(const nlohmann::json& j, ModelSpec& s) {
    j.at("n_res_blocks").get_to(s.n_res_blocks);
    j.at("n_shrink_blocks").get_to(s.n_shrink_blocks);
    j.at("n_dense_blocks").get_to(s.n_dense_blocks);
    j.at("base_channels").get_to(s.base_channels);
    j.at("kernel_size").get_to(s.kernel_size);
    j.at("dsu_apply_prob").get_to(s.dsu.apply_prob);
    j.at("dsu_eps").get_to(s.dsu.eps);
    j.at("context_p").get_to(s.context_p);
    j.at("context_s").get_to(s.context_s);
    j.at("gru_hidden").get_to(s.gru_hidden);
    j.at("dropout_rate").get_to(s.dropout_rate);
    j.at("dense_width").get_to(s.dense_width);
    j.at("use_bigru").get_to(s.use_bigru);
    j.at("use_dsu").get_to(s.use_dsu);
    j.at("multi_lead_training").get_to(s.multi_lead_training);
}

// ----------------------------------------------------------------- ResBlock

ResBlock::ResBlock(std::size_t in_ch, std::size_t out_ch, std::size_t kernel, Rng& init)
    : conv1_(in_ch, out_ch, kernel, 2, (kernel - 1) / 2, init),
      conv2_(out_ch, out_ch, kernel, 1, (kernel - 1) / 2, init),
      bn1_(out_ch), bn2_(out_ch),
      pool_(3, 2, 1),
      in_ch_(in_ch), out_ch_(out_ch) {}

Tensor ResBlock::forward(const Tensor& x, Mode mode) {
    Tensor y = bn2_.forward(conv2_.forward(relu_mid_.forward(bn1_.forward(conv1_.forward(x), mode))), mode);
    Tensor sc = pool_.forward(x);
    // zero-pad shortcut channels up to out_ch
    const std::size_t batch = y.shape[0], len = y.shape[2];
    for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t c = 0; c < in_ch_; ++c)
            for (std::size_t l = 0; l < len; ++l)
                y.at3(b, c, l) += sc.at3(b, c, l);
    return relu_out_.forward(y);
}

Tensor ResBlock::backward(const Tensor& grad_out) {
    Tensor g = relu_out_.backward(grad_out);
    // shortcut branch: only the first in_ch channels carry gradient
    const std::size_t batch = g.shape[0], len = g.shape[2];
    Tensor gsc({batch, in_ch_, g.shape[2]});
    for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t c = 0; c < in_ch_; ++c)
            for (std::size_t l = 0; l < len; ++l)
                gsc.at3(b, c, l) = g.at3(b, c, l);
    Tensor gx = conv1_.backward(bn1_.backward(relu_mid_.backward(conv2_.backward(bn2_.backward(g)))));
    Tensor gx_sc = pool_.backward(gsc);
    for (std::size_t i = 0; i < gx.size(); ++i) gx.data[i] += gx_sc.data[i];
    return gx;
}

void ResBlock::collect(std::vector<nn::ParamSlot>& out, const std::string& prefix) {
    conv1_.collect(out, prefix + ".conv1");
    bn1_.collect(out, prefix + ".bn1");
    conv2_.collect(out, prefix + ".conv2");
    bn2_.collect(out, prefix + ".bn2");
}

// -------------------------------------------------------------- ShrinkBlock

ShrinkBlock::ShrinkBlock(std::size_t in_ch, std::size_t kernel, Rng& init)
    : conv_(in_ch, in_ch / 2, kernel, 1, (kernel - 1) / 2, init), bn_(in_ch / 2) {}

Tensor ShrinkBlock::forward(const Tensor& x, Mode mode) {
    return relu_.forward(bn_.forward(conv_.forward(x), mode));
}

Tensor ShrinkBlock::backward(const Tensor& grad_out) {
    return conv_.backward(bn_.backward(relu_.backward(grad_out)));
}

void ShrinkBlock::collect(std::vector<nn::ParamSlot>& out, const std::string& prefix) {
    conv_.collect(out, prefix + ".conv");
    bn_.collect(out, prefix + ".bn");
}

// --------------------------------------------------------------- DenseBlock

DenseBlock::DenseBlock(std::size_t in_dim, std::size_t out, double dropout_rate, Rng& init)
    : out_dim(out), dense_(in_dim, out, init), bn_(out), drop_(dropout_rate) {}

Tensor DenseBlock::forward(const Tensor& x, Mode mode, Rng& rng) {
    return drop_.forward(act_.forward(bn_.forward(dense_.forward(x), mode)), mode, rng);
}

Tensor DenseBlock::backward(const Tensor& grad_out) {
    return dense_.backward(bn_.backward(act_.backward(drop_.backward(grad_out))));
}

void DenseBlock::collect(std::vector<nn::ParamSlot>& out, const std::string& prefix) {
    dense_.collect(out, prefix + ".dense");
    bn_.collect(out, prefix + ".bn");
}

// ------------------------------------------------------------------ Encoder

Encoder::Encoder(const ModelSpec& spec, Rng& init) {
    spec.validate();
    std::size_t ch = 1, next = spec.base_channels;
    std::size_t len = win::kWindowSamples;
    for (std::size_t i = 0; i < spec.n_res_blocks; ++i) {
        res_.emplace_back(ch, next, spec.kernel_size, init);
        len = (len - 1) / 2 + 1; // stride-2 with same-padding
        ch = next;
        if ((i + 1) % 2 == 1 && i + 1 < spec.n_res_blocks) next = ch * 2;
    }
    if (spec.use_dsu)
        for (std::size_t i = 0; i < spec.n_res_blocks; ++i) dsu_.emplace_back(spec.dsu);
    for (std::size_t i = 0; i < spec.n_shrink_blocks; ++i) {
        shrink_.emplace_back(ch, spec.kernel_size, init);
        ch /= 2;
    }
    flat_shape_ = {0, ch, len};
    std::size_t width = ch * len;
    std::size_t w = spec.dense_width;
    for (std::size_t i = 0; i < spec.n_dense_blocks; ++i) {
        dense_.emplace_back(width, w, spec.dropout_rate, init);
        width = w;
        w = std::max<std::size_t>(1, w / 2);
    }
    embedding_dim_ = width;
    head_ = std::make_unique<nn::Dense>(width, 1, init);
}

Encoder::Output Encoder::forward(const Tensor& x, Mode mode, Rng& rng) {
    if (x.shape.size() != 3 || x.shape[1] != 1 || x.shape[2] != win::kWindowSamples)
        throw ConfigError("encoder: input must be (batch, 1, 6000)");
    Tensor h = x;
    for (std::size_t i = 0; i < res_.size(); ++i) {
        h = res_[i].forward(h, mode);
        if (!dsu_.empty()) h = dsu_[i].forward(h, mode, rng);
    }
    for (auto& s : shrink_) h = s.forward(h, mode);
    flat_shape_ = h.shape;
    h.shape = {h.shape[0], h.shape[1] * h.shape[2]};
    for (auto& d : dense_) h = d.forward(h, mode, rng);
    Tensor logit2 = head_->forward(h);
    Tensor logit({logit2.shape[0]});
    for (std::size_t b = 0; b < logit.size(); ++b) logit(b) = logit2.at2(b, 0);
    return {std::move(h), std::move(logit)};
}

void Encoder::backward(const Tensor* grad_embedding, const Tensor* grad_logit) {
    Tensor g;
    if (grad_logit) {
        Tensor gl({grad_logit->size(), 1});
        for (std::size_t b = 0; b < grad_logit->size(); ++b) gl.at2(b, 0) = (*grad_logit)(b);
        g = head_->backward(gl);
    }
    if (grad_embedding) {
        if (g.size() == 0) g = *grad_embedding;
        else for (std::size_t i = 0; i < g.size(); ++i) g.data[i] += grad_embedding->data[i];
    }
    if (g.size() == 0) throw RuntimeError("encoder backward: no gradient given");
    for (auto it = dense_.rbegin(); it != dense_.rend(); ++it) g = it->backward(g);
    g.shape = flat_shape_;
    for (auto it = shrink_.rbegin(); it != shrink_.rend(); ++it) g = it->backward(g);
    for (std::size_t i = res_.size(); i-- > 0;) {
        if (!dsu_.empty()) g = dsu_[i].backward(g);
        g = res_[i].backward(g);
    }
}

void Encoder::collect(std::vector<nn::ParamSlot>& out) {
    for (std::size_t i = 0; i < res_.size(); ++i) res_[i].collect(out, "res" + std::to_string(i));
    for (std::size_t i = 0; i < shrink_.size(); ++i) shrink_[i].collect(out, "shrink" + std::to_string(i));
    for (std::size_t i = 0; i < dense_.size(); ++i) dense_[i].collect(out, "dense" + std::to_string(i));
    head_->collect(out, "step1_head");
}

// -------------------------------------------------------------- ContextHead

ContextHead::ContextHead(const ModelSpec& spec, std::size_t embedding_dim, Rng& init)
    : bn_(spec.use_bigru ? 2 * spec.gru_hidden : embedding_dim),
      drop_(spec.dropout_rate),
      steps_(spec.context_p + 1 + spec.context_s),
      center_(spec.context_p),
      feat_(spec.use_bigru ? 2 * spec.gru_hidden : embedding_dim) {
    if (spec.use_bigru)
        gru_ = std::make_unique<nn::BiGru>(embedding_dim, spec.gru_hidden, init);
    out_ = std::make_unique<nn::Dense>(feat_, 1, init);
}

Tensor ContextHead::forward(const Tensor& emb_seq, Mode mode, Rng& rng) {
    if (emb_seq.shape.size() != 3 || emb_seq.shape[1] != steps_)
        throw ConfigError("context head: time dimension must be p+1+s");
    const std::size_t batch = emb_seq.shape[0];
    Tensor center({batch, feat_});
    if (gru_) {
        Tensor g = gru_->forward(emb_seq);
        for (std::size_t b = 0; b < batch; ++b)
            for (std::size_t f = 0; f < feat_; ++f)
                center.at2(b, f) = g.data[(b * steps_ + center_) * feat_ + f];
    } else {
        const std::size_t d = emb_seq.shape[2];
        for (std::size_t b = 0; b < batch; ++b)
            for (std::size_t f = 0; f < d; ++f)
                center.at2(b, f) = emb_seq.data[(b * steps_ + center_) * d + f];
    }
    Tensor h = out_->forward(drop_.forward(act_.forward(bn_.forward(center, mode)), mode, rng));
    Tensor logit({batch});
    for (std::size_t b = 0; b < batch; ++b) logit(b) = h.at2(b, 0);
    return logit;
}

Tensor ContextHead::backward(const Tensor& grad_logit) {
    const std::size_t batch = grad_logit.size();
    Tensor gl({batch, 1});
    for (std::size_t b = 0; b < batch; ++b) gl.at2(b, 0) = grad_logit(b);
    Tensor gc = bn_.backward(act_.backward(drop_.backward(out_->backward(gl))));
    if (gru_) {
        Tensor gg({batch, steps_, feat_});
        for (std::size_t b = 0; b < batch; ++b)
            for (std::size_t f = 0; f < feat_; ++f)
                gg.data[(b * steps_ + center_) * feat_ + f] = gc.at2(b, f);
        return gru_->backward(gg);
    }
    const std::size_t d = gc.shape[1];
    Tensor gx({batch, steps_, d});
    for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t f = 0; f < d; ++f)
            gx.data[(b * steps_ + center_) * d + f] = gc.at2(b, f);
    return gx;
}

void ContextHead::collect(std::vector<nn::ParamSlot>& out) {
    if (gru_) gru_->collect(out, "head.bigru");
    bn_.collect(out, "head.bn");
    out_->collect(out, "head.out");
}

// ---------------------------------------------------------------- RawEcgNet

namespace {
std::size_t embedding_dim_for(const ModelSpec& spec) {
    std::size_t w = spec.dense_width;
    for (std::size_t i = 1; i < spec.n_dense_blocks; ++i) w = std::max<std::size_t>(1, w / 2);
    return w;
}
} // namespace

RawEcgNet::RawEcgNet(const ModelSpec& spec_in, std::uint64_t seed)
    : spec(spec_in),
      encoder([&] { Rng r = Rng::split(seed, 1); return Encoder(spec_in, r); }()),
      head([&] { Rng r = Rng::split(seed, 2);
                 return ContextHead(spec_in, embedding_dim_for(spec_in), r); }()) {
    meta.seed = seed;
}

std::vector<nn::ParamSlot> RawEcgNet::encoder_slots() {
    std::vector<nn::ParamSlot> s;
    encoder.collect(s);
    return s;
}

std::vector<nn::ParamSlot> RawEcgNet::head_slots() {
    std::vector<nn::ParamSlot> s;
    head.collect(s);
    return s;
}

std::vector<nn::ParamSlot> RawEcgNet::all_slots() {
    std::vector<nn::ParamSlot> s;
    encoder.collect(s);
    head.collect(s);
    return s;
}

std::size_t RawEcgNet::param_count() { return nn::count_trainable(all_slots()); }

void RawEcgNet::save(const std::string& dir) const {
    fs::create_directories(dir);
    auto& self = const_cast<RawEcgNet&>(*this);
    nn::save_params(self.all_slots(), (fs::path(dir) / "params.bin").string());
    nlohmann::json j;
    to_json(j["spec"], spec);
    j["threshold"] = threshold;
    j["seed"] = meta.seed;
    j["step1_epochs"] = meta.step1_epochs;
    j["step2_epochs"] = meta.step2_epochs;
    j["pos_weight"] = meta.pos_weight;
    std::ofstream f(fs::path(dir) / "model.json");
    if (!f) throw RuntimeError("cannot write model.json in " + dir);
    f << j.dump(2) << "\n";
}

RawEcgNet RawEcgNet::load(const std::string& dir) {
    std::ifstream f(fs::path(dir) / "model.json");
    if (!f) throw ConfigError("missing model.json in " + dir);
    nlohmann::json j;
    f >> j;
    ModelSpec spec;
    from_json(j.at("spec"), spec);
    RawEcgNet model(spec, j.at("seed").get<std::uint64_t>());
    model.threshold = j.at("threshold").get<double>();
    model.meta.step1_epochs = j.value("step1_epochs", 0);
    model.meta.step2_epochs = j.value("step2_epochs", 0);
    model.meta.pos_weight = j.value("pos_weight", 1.0);
    auto slots = model.all_slots();
    nn::load_params(slots, (fs::path(dir) / "params.bin").string());
    return model;
}

// ----------------------------------------------------------------- training

Tensor windows_to_input(const std::vector<const win::Window*>& batch) {
    Tensor x({batch.size(), 1, win::kWindowSamples});
    for (std::size_t b = 0; b < batch.size(); ++b) {
        const auto& s = batch[b]->samples;
        if (s.size() != win::kWindowSamples) throw ConfigError("window sample count != 6000");
        double mean = 0.0;
        for (float v : s) mean += v;
        mean /= static_cast<double>(s.size());
        double var = 0.0;
        for (float v : s) { const double d = v - mean; var += d * d; }
        var /= static_cast<double>(s.size());
        const double inv = 1.0 / (std::sqrt(var) + 1e-6);
        for (std::size_t i = 0; i < s.size(); ++i)
            x.at3(b, 0, i) = (s[i] - mean) * inv;
    }
    return x;
}

namespace {

std::vector<std::vector<double>> snapshot(const std::vector<nn::ParamSlot>& slots) {
    std::vector<std::vector<double>> out;
    out.reserve(slots.size());
    for (const auto& s : slots) out.push_back(s.value->data);
    return out;
}

void restore(std::vector<nn::ParamSlot>& slots, const std::vector<std::vector<double>>& snap) {
    for (std::size_t i = 0; i < slots.size(); ++i) slots[i].value->data = snap[i];
}

double default_pos_weight(std::size_t n_pos, std::size_t n_neg) {
    if (n_pos == 0 || n_neg == 0) return 1.0;
    return static_cast<double>(n_neg) / static_cast<double>(n_pos);
}

// class-rebalanced batch indices sampled with replacement
std::vector<std::size_t> sample_batch(const std::vector<std::size_t>& pos,
                                      const std::vector<std::size_t>& neg,
                                      std::size_t batch_size, double pos_fraction, Rng& rng) {
    std::vector<std::size_t> idx;
    idx.reserve(batch_size);
    std::size_t n_pos = pos.empty() ? 0
        : static_cast<std::size_t>(std::lround(pos_fraction * static_cast<double>(batch_size)));
    if (neg.empty()) n_pos = batch_size;
    for (std::size_t i = 0; i < n_pos; ++i) idx.push_back(pos[rng.integer(pos.size())]);
    while (idx.size() < batch_size) idx.push_back(neg[rng.integer(neg.size())]);
    return idx;
}

} // namespace

std::vector<EpochLog> train_step1(RawEcgNet& model, const std::vector<win::Window>& train,
                                  const std::vector<win::Window>& val, const TrainConfig& cfg,
                                  Rng& rng) {
    if (train.empty()) throw ConfigError("train_step1: empty training set");
    if (cfg.batch_size < 2) throw ConfigError("train_step1: batch size must be >= 2");
    std::vector<std::size_t> pos, neg;
    for (std::size_t i = 0; i < train.size(); ++i)
        (train[i].target ? pos : neg).push_back(i);
    const double pw = cfg.pos_weight.value_or(default_pos_weight(pos.size(), neg.size()));
    model.meta.pos_weight = pw;

    auto slots = model.encoder_slots();
    nn::Adam adam({cfg.lr});
    Rng dummy(0);

    auto eval_loss = [&](const std::vector<win::Window>& set) {
        double total = 0.0;
        std::size_t count = 0;
        for (std::size_t off = 0; off < set.size(); off += 64) {
            std::vector<const win::Window*> chunk;
            Tensor y({std::min<std::size_t>(64, set.size() - off)});
            for (std::size_t i = 0; i < y.size(); ++i) {
                chunk.push_back(&set[off + i]);
                y(i) = set[off + i].target ? 1.0 : 0.0;
            }
            auto out = model.encoder.forward(windows_to_input(chunk), Mode::Eval, dummy);
            total += nn::weighted_bce_logits(out.logit, y, pw) * static_cast<double>(chunk.size());
            count += chunk.size();
        }
        return count > 0 ? total / static_cast<double>(count) : 0.0;
    };

    std::vector<EpochLog> logs;
    double best = std::numeric_limits<double>::infinity();
    std::vector<std::vector<double>> best_snap = snapshot(slots);
    std::size_t stale = 0;
    const std::size_t n_batches = std::max<std::size_t>(1, train.size() / cfg.batch_size);
    for (std::size_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        double train_loss = 0.0;
        for (std::size_t b = 0; b < n_batches; ++b) {
            const auto idx = sample_batch(pos, neg, cfg.batch_size, cfg.pos_batch_fraction, rng);
            std::vector<const win::Window*> batch;
            Tensor y({idx.size()});
            for (std::size_t i = 0; i < idx.size(); ++i) {
                batch.push_back(&train[idx[i]]);
                y(i) = train[idx[i]].target ? 1.0 : 0.0;
            }
            auto out = model.encoder.forward(windows_to_input(batch), Mode::Train, rng);
            train_loss += nn::weighted_bce_logits(out.logit, y, pw);
            const Tensor g = nn::weighted_bce_logits_grad(out.logit, y, pw);
            nn::zero_grads(slots);
            model.encoder.backward(nullptr, &g);
            adam.step(slots);
        }
        train_loss /= static_cast<double>(n_batches);
        const double val_loss = val.empty() ? train_loss : eval_loss(val);
        logs.push_back({train_loss, val_loss});
        if (val_loss < best - 1e-9) {
            best = val_loss;
            best_snap = snapshot(slots);
            stale = 0;
        } else if (++stale >= cfg.patience) {
            break;
        }
    }
    restore(slots, best_snap);
    model.meta.step1_epochs = logs.size();
    return logs;
}

std::vector<std::vector<double>> embed_windows(RawEcgNet& model,
                                               const std::vector<const win::Window*>& windows) {
    Rng dummy(0);
    std::vector<std::vector<double>> out;
    out.reserve(windows.size());
    for (std::size_t off = 0; off < windows.size(); off += 32) {
        std::vector<const win::Window*> chunk(
            windows.begin() + static_cast<long>(off),
            windows.begin() + static_cast<long>(std::min(windows.size(), off + 32)));
        auto res = model.encoder.forward(windows_to_input(chunk), Mode::Eval, dummy);
        const std::size_t d = res.embedding.shape[1];
        for (std::size_t b = 0; b < chunk.size(); ++b)
            out.emplace_back(res.embedding.data.begin() + static_cast<long>(b * d),
                             res.embedding.data.begin() + static_cast<long>((b + 1) * d));
    }
    return out;
}

namespace {

// context rows for one center, with edge replication
void fill_context(Tensor& x, std::size_t row, const std::vector<std::vector<double>>& emb,
                  std::size_t center, std::size_t p, std::size_t s) {
    const std::size_t steps = p + 1 + s;
    const std::size_t d = emb.front().size();
    const long n = static_cast<long>(emb.size());
    for (std::size_t t = 0; t < steps; ++t) {
        long j = static_cast<long>(center) - static_cast<long>(p) + static_cast<long>(t);
        j = std::max(0L, std::min(n - 1, j));
        for (std::size_t f = 0; f < d; ++f)
            x.data[(row * steps + t) * d + f] = emb[static_cast<std::size_t>(j)][f];
    }
}

struct SeqEmbeddings {
    std::vector<std::vector<std::vector<double>>> per_seq;
    std::vector<std::pair<std::size_t, std::size_t>> centers; // (seq, idx)
    std::vector<bool> center_targets;
};

SeqEmbeddings embed_sequences(RawEcgNet& model, const std::vector<WindowSequence>& seqs,
                              bool only_eligible) {
    SeqEmbeddings out;
    for (std::size_t s = 0; s < seqs.size(); ++s) {
        const auto& seq = seqs[s];
        if (seq.windows.empty()) throw ConfigError("train_step2: empty window sequence");
        out.per_seq.push_back(embed_windows(model, seq.windows));
        for (std::size_t i = 0; i < seq.windows.size(); ++i) {
            if (only_eligible && !seq.eligible.empty() && !seq.eligible[i]) continue;
            out.centers.emplace_back(s, i);
            out.center_targets.push_back(seq.windows[i]->target);
        }
    }
    return out;
}

} // namespace

std::vector<EpochLog> train_step2(RawEcgNet& model, const std::vector<WindowSequence>& train,
                                  const std::vector<WindowSequence>& val, const TrainConfig& cfg,
                                  Rng& rng) {
    if (train.empty()) throw ConfigError("train_step2: no training sequences");
    const std::size_t p = model.spec.context_p, s = model.spec.context_s;
    const std::size_t steps = p + 1 + s;
    const std::size_t d = model.encoder.embedding_dim();

    SeqEmbeddings tr = embed_sequences(model, train, true);
    if (tr.centers.empty()) throw ConfigError("train_step2: no eligible training centers");
    SeqEmbeddings va = val.empty() ? SeqEmbeddings{} : embed_sequences(model, val, true);

    std::vector<std::size_t> pos, neg;
    for (std::size_t i = 0; i < tr.centers.size(); ++i)
        (tr.center_targets[i] ? pos : neg).push_back(i);
    const double pw = cfg.pos_weight.value_or(model.meta.pos_weight);

    auto slots = model.head_slots();
    nn::Adam adam({cfg.lr});
    Rng dummy(0);

    auto eval_loss = [&](const SeqEmbeddings& se) {
        double total = 0.0;
        std::size_t count = 0;
        for (std::size_t off = 0; off < se.centers.size(); off += 64) {
            const std::size_t bs = std::min<std::size_t>(64, se.centers.size() - off);
            Tensor x({bs, steps, d}), y({bs});
            for (std::size_t i = 0; i < bs; ++i) {
                const auto [sq, ci] = se.centers[off + i];
                fill_context(x, i, se.per_seq[sq], ci, p, s);
                y(i) = se.center_targets[off + i] ? 1.0 : 0.0;
            }
            const Tensor logit = model.head.forward(x, Mode::Eval, dummy);
            total += nn::weighted_bce_logits(logit, y, pw) * static_cast<double>(bs);
            count += bs;
        }
        return count > 0 ? total / static_cast<double>(count) : 0.0;
    };

    std::vector<EpochLog> logs;
    double best = std::numeric_limits<double>::infinity();
    std::vector<std::vector<double>> best_snap = snapshot(slots);
    std::size_t stale = 0;
    const std::size_t n_batches = std::max<std::size_t>(1, tr.centers.size() / cfg.batch_size);
    for (std::size_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        double train_loss = 0.0;
        for (std::size_t b = 0; b < n_batches; ++b) {
            const auto idx = sample_batch(pos, neg, cfg.batch_size, cfg.pos_batch_fraction, rng);
            Tensor x({idx.size(), steps, d}), y({idx.size()});
            for (std::size_t i = 0; i < idx.size(); ++i) {
                const auto [sq, ci] = tr.centers[idx[i]];
                fill_context(x, i, tr.per_seq[sq], ci, p, s);
                y(i) = tr.center_targets[idx[i]] ? 1.0 : 0.0;
            }
            const Tensor logit = model.head.forward(x, Mode::Train, rng);
            train_loss += nn::weighted_bce_logits(logit, y, pw);
            const Tensor g = nn::weighted_bce_logits_grad(logit, y, pw);
            nn::zero_grads(slots);
            model.head.backward(g);
            adam.step(slots);
        }
        train_loss /= static_cast<double>(n_batches);
        const double val_loss = va.centers.empty() ? train_loss : eval_loss(va);
        logs.push_back({train_loss, val_loss});
        if (val_loss < best - 1e-9) {
            best = val_loss;
            best_snap = snapshot(slots);
            stale = 0;
        } else if (++stale >= cfg.patience) {
            break;
        }
    }
    restore(slots, best_snap);
    model.meta.step2_epochs = logs.size();
    return logs;
}

std::vector<double> sequence_probs(RawEcgNet& model,
                                   const std::vector<const win::Window*>& windows) {
    if (windows.empty()) return {};
    const auto emb = embed_windows(model, windows);
    const std::size_t p = model.spec.context_p, s = model.spec.context_s;
    const std::size_t steps = p + 1 + s;
    const std::size_t d = model.encoder.embedding_dim();
    Rng dummy(0);
    std::vector<double> probs;
    probs.reserve(windows.size());
    for (std::size_t off = 0; off < windows.size(); off += 64) {
        const std::size_t bs = std::min<std::size_t>(64, windows.size() - off);
        Tensor x({bs, steps, d});
        for (std::size_t i = 0; i < bs; ++i) fill_context(x, i, emb, off + i, p, s);
        const Tensor logit = model.head.forward(x, Mode::Eval, dummy);
        for (std::size_t i = 0; i < bs; ++i) probs.push_back(1.0 / (1.0 + std::exp(-logit(i))));
    }
    return probs;
}

double select_threshold(const std::vector<double>& probs, const std::vector<bool>& targets) {
    if (probs.size() != targets.size()) throw ConfigError("select_threshold: size mismatch");
    const std::size_t n_pos = static_cast<std::size_t>(
        std::count(targets.begin(), targets.end(), true));
    if (n_pos == 0) return 1.0; // predict nothing

    std::vector<double> uniq(probs);
    std::sort(uniq.begin(), uniq.end());
    uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
    std::vector<double> candidates = {0.0, 1.0};
    for (std::size_t i = 0; i + 1 < uniq.size(); ++i)
        candidates.push_back((uniq[i] + uniq[i + 1]) / 2.0);
    std::sort(candidates.begin(), candidates.end());

    double best_t = 1.0, best_f1 = -1.0;
    for (const double t : candidates) {
        std::size_t tp = 0, fp = 0, fn = 0;
        for (std::size_t i = 0; i < probs.size(); ++i) {
            const bool pred = probs[i] >= t;
            if (pred && targets[i]) ++tp;
            else if (pred && !targets[i]) ++fp;
            else if (!pred && targets[i]) ++fn;
        }
        const double f1 = tp > 0
            ? 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn)
            : 0.0;
        if (f1 > best_f1) { best_f1 = f1; best_t = t; }
    }
    return best_t;
}

std::vector<win::IntervalPrediction> predict_recording(const io::EcgRecording& rec,
                                                       const std::string& lead,
                                                       RawEcgNet& model) {
    const io::EcgRecording r200 =
        rec.fs_hz == win::kTargetFsHz ? rec : win::resample_recording(rec);
    const auto windows = win::segment(r200, lead); // no exclusion at test time
    std::vector<const win::Window*> ptrs;
    for (const auto& w : windows) ptrs.push_back(&w);
    const auto probs = sequence_probs(model, ptrs);
    std::vector<win::IntervalPrediction> out;
    out.reserve(windows.size());
    for (std::size_t i = 0; i < windows.size(); ++i)
        out.push_back({windows[i].start_s, windows[i].end_s, probs[i],
                       probs[i] >= model.threshold});
    return out;
}

} // namespace afnet::model
