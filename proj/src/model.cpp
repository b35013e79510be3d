#include "mvcc/model.hpp"

#include <algorithm>
#include <cmath>

#include "mvcc/checkpoint.hpp"

namespace mvcc {

void ModelConfig::validate() const {
    if (image_size < 1 || patch_stride < 1 || image_size % patch_stride != 0) {
        throw ConfigError("image size " + std::to_string(image_size) +
                          " is not a multiple of patch stride " + std::to_string(patch_stride));
    }
    if (heads < 1 || channels < heads || channels % heads != 0) {
        throw ConfigError("channels " + std::to_string(channels) + " not divisible by " +
                          std::to_string(heads) + " heads");
    }
    if (decoder_width < heads || decoder_width % heads != 0) {
        throw ConfigError("decoder width " + std::to_string(decoder_width) +
                          " not divisible by " + std::to_string(heads) + " heads");
    }
    if (encoder_blocks < 0 || decoder_layers < 1) {
        throw ConfigError("invalid block counts: encoder " + std::to_string(encoder_blocks) +
                          ", decoder " + std::to_string(decoder_layers));
    }
    if (vocab_size < 5) {
        throw ConfigError("vocab size " + std::to_string(vocab_size) +
                          " leaves no room beyond reserved ids");
    }
    if (max_caption_len < 2) {
        throw ConfigError("max caption length must be at least 2");
    }
    if (lora_rank < 1 || lora_rank > channels) {
        throw ConfigError("lora rank " + std::to_string(lora_rank) + " outside [1, " +
                          std::to_string(channels) + "]");
    }
    if (lora_alpha <= 0.0) {
        throw ConfigError("lora alpha must be positive");
    }
}

Tensor ParamStore::add(const std::string& name, Tensor t) {
    if (index_.count(name)) throw ConfigError("duplicate parameter '" + name + "'");
    index_[name] = items_.size();
    items_.emplace_back(name, t);
    return t;
}

Tensor& ParamStore::at(const std::string& name) {
    const auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("unknown parameter '" + name + "'");
    return items_[it->second].second;
}

const Tensor& ParamStore::at(const std::string& name) const {
    const auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("unknown parameter '" + name + "'");
    return items_[it->second].second;
}

Tensor apply_lora(Tape& tape, const Tensor& w, const Tensor& a, const Tensor& b, double alpha,
                  int rank) {
    if (rank < 1 || rank > w.dim(1)) {
        throw ConfigError("lora rank " + std::to_string(rank) + " exceeds weight width " +
                          std::to_string(w.dim(1)));
    }
    if (a.dim(0) != w.dim(0) || a.dim(1) != rank || b.dim(0) != rank || b.dim(1) != w.dim(1)) {
        throw ShapeError("lora adapter shapes " + shape_str(a.shape()) + ", " +
                         shape_str(b.shape()) + " do not fit weight " + shape_str(w.shape()));
    }
    return add(tape, w, scale(tape, matmul(tape, a, b), alpha / rank));
}

// ---- construction ----------------------------------------------------------

Model::Model(ModelConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    register_params();
}

Model::Model(ModelConfig cfg, Rng& rng) : Model(std::move(cfg)) {
    init_values(rng);
}

void Model::register_params() {
    const int c = cfg_.channels;
    const int d = cfg_.decoder_width;
    const int patch_dim = cfg_.patch_stride * cfg_.patch_stride * 3;

    auto frozen = [&](const std::string& name, Shape shape) {
        params_.add(name, Tensor::zeros(std::move(shape), false));
    };
    auto trainable = [&](const std::string& name, Shape shape) {
        params_.add(name, Tensor::zeros(std::move(shape), true));
    };
    auto attn = [&](const std::string& prefix, int width, auto& owner) {
        owner(prefix + ".Wq", {width, width});
        owner(prefix + ".bq", {width});
        owner(prefix + ".Wk", {width, width});
        owner(prefix + ".bk", {width});
        owner(prefix + ".Wv", {width, width});
        owner(prefix + ".bv", {width});
        owner(prefix + ".Wo", {width, width});
        owner(prefix + ".bo", {width});
    };
    auto norm = [&](const std::string& prefix, int width, auto& owner) {
        owner(prefix + ".g", {width});
        owner(prefix + ".b", {width});
    };
    auto mlp = [&](const std::string& prefix, int width, auto& owner) {
        owner(prefix + ".W1", {width, 4 * width});
        owner(prefix + ".b1", {4 * width});
        owner(prefix + ".W2", {4 * width, width});
        owner(prefix + ".b2", {width});
    };

    frozen("encoder.patch.W", {patch_dim, c});
    frozen("encoder.patch.b", {c});
    frozen("encoder.pos", {cfg_.tokens_per_frame(), c});
    frozen("encoder.temp", {2, c});
    for (int i = 0; i < cfg_.encoder_blocks; ++i) {
        const std::string p = "encoder.block" + std::to_string(i);
        norm(p + ".ln1", c, frozen);
        attn(p + ".attn", c, frozen);
        norm(p + ".ln2", c, frozen);
        mlp(p + ".ffn", c, frozen);
    }
    if (cfg_.encoder_blocks > 0) {
        for (const char* t : {"q", "k", "v"}) {
            trainable(std::string("lora.") + t + ".A", {c, cfg_.lora_rank});
            trainable(std::string("lora.") + t + ".B", {cfg_.lora_rank, c});
        }
    }
    trainable("projector.W", {c, d});
    trainable("projector.b", {d});
    trainable("embed.tok", {cfg_.vocab_size, d});
    trainable("embed.pos", {cfg_.max_caption_len, d});
    for (int i = 0; i < cfg_.decoder_layers; ++i) {
        const std::string p = "decoder.layer" + std::to_string(i);
        norm(p + ".ln1", d, trainable);
        attn(p + ".self", d, trainable);
        norm(p + ".ln2", d, trainable);
        attn(p + ".cross", d, trainable);
        norm(p + ".ln3", d, trainable);
        mlp(p + ".ffn", d, trainable);
    }
    norm("decoder.ln_f", d, trainable);
    trainable("head.W", {d, cfg_.vocab_size});
    trainable("head.b", {cfg_.vocab_size});
}

void Model::init_values(Rng& rng) {
    for (auto& [name, t] : params_.items()) {
        const bool is_gain = name.size() >= 2 && (name.ends_with(".g"));
        const bool is_bias = name.ends_with(".b") || name.ends_with(".b1") ||
                             name.ends_with(".b2") || name.ends_with(".bq") ||
                             name.ends_with(".bk") || name.ends_with(".bv") ||
                             name.ends_with(".bo");
        const bool is_lora_b = name.starts_with("lora.") && name.ends_with(".B");
        auto v = t.values();
        if (is_gain) {
            std::fill(v.begin(), v.end(), 1.0);
        } else if (is_bias || is_lora_b) {
            std::fill(v.begin(), v.end(), 0.0);
        } else {
            for (double& x : v) x = rng.gaussian(0.0, 0.02);
        }
    }
}

Model::AttnWeights Model::attn_weights(const std::string& prefix) const {
    return {params_.at(prefix + ".Wq"), params_.at(prefix + ".bq"), params_.at(prefix + ".Wk"),
            params_.at(prefix + ".bk"), params_.at(prefix + ".Wv"), params_.at(prefix + ".bv"),
            params_.at(prefix + ".Wo"), params_.at(prefix + ".bo")};
}

// ---- forward ---------------------------------------------------------------

Tensor Model::patchify(Tape& tape, const Image& a, const Image& b) const {
    const int size = cfg_.image_size;
    for (const Image* img : {&a, &b}) {
        if (img->height != size || img->width != size || img->channels != 3) {
            throw ConfigError("image " + std::to_string(img->height) + "x" +
                              std::to_string(img->width) + "x" + std::to_string(img->channels) +
                              " does not match model input " + std::to_string(size) + "x" +
                              std::to_string(size) + "x3");
        }
    }
    const int s = cfg_.patch_stride;
    const int g = cfg_.grid();
    const int hw = cfg_.tokens_per_frame();
    const int patch_dim = s * s * 3;

    const Tensor& pos = params_.at("encoder.pos");
    const Tensor& temp = params_.at("encoder.temp");

    std::vector<Tensor> frames;
    for (int f = 0; f < 2; ++f) {
        const Image& img = f == 0 ? a : b;
        Tensor patches = Tensor::zeros({hw, patch_dim});
        auto pv = patches.values();
        for (int py = 0; py < g; ++py) {
            for (int px = 0; px < g; ++px) {
                double* row = pv.data() + static_cast<std::size_t>(py * g + px) * patch_dim;
                for (int dy = 0; dy < s; ++dy) {
                    for (int dx = 0; dx < s; ++dx) {
                        for (int ch = 0; ch < 3; ++ch) {
                            row[(dy * s + dx) * 3 + ch] = img.at(py * s + dy, px * s + dx, ch);
                        }
                    }
                }
            }
        }
        Tensor tok = add_rowvec(tape, matmul(tape, patches, params_.at("encoder.patch.W")),
                                params_.at("encoder.patch.b"));
        tok = add(tape, tok, pos);
        tok = add_rowvec(tape, tok, slice_rows(tape, temp, f, 1));
        frames.push_back(tok);
    }
    return concat_rows(tape, frames[0], frames[1]);
}

Tensor Model::mha(Tape& tape, const AttnWeights& w, const Tensor& q_in, const Tensor& kv_in,
                  const std::vector<std::uint8_t>* allowed) const {
    const int dm = q_in.dim(1);
    const int dh = dm / cfg_.heads;
    Tensor q = add_rowvec(tape, matmul(tape, q_in, w.wq), w.bq);
    Tensor k = add_rowvec(tape, matmul(tape, kv_in, w.wk), w.bk);
    Tensor v = add_rowvec(tape, matmul(tape, kv_in, w.wv), w.bv);
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
    std::vector<Tensor> heads_out;
    heads_out.reserve(static_cast<std::size_t>(cfg_.heads));
    for (int h = 0; h < cfg_.heads; ++h) {
        Tensor qh = slice_cols(tape, q, h * dh, dh);
        Tensor kh = slice_cols(tape, k, h * dh, dh);
        Tensor vh = slice_cols(tape, v, h * dh, dh);
        Tensor scores = scale(tape, matmul(tape, qh, transpose(tape, kh)), inv_sqrt);
        Tensor att = allowed ? masked_softmax(tape, scores, *allowed) : softmax(tape, scores);
        heads_out.push_back(matmul(tape, att, vh));
    }
    return add_rowvec(tape, matmul(tape, concat_cols(tape, heads_out), w.wo), w.bo);
}

Tensor Model::ffn(Tape& tape, const Tensor& x, const std::string& prefix) const {
    Tensor h = add_rowvec(tape, matmul(tape, x, params_.at(prefix + ".W1")),
                          params_.at(prefix + ".b1"));
    h = gelu(tape, h);
    return add_rowvec(tape, matmul(tape, h, params_.at(prefix + ".W2")),
                      params_.at(prefix + ".b2"));
}

Tensor Model::encoder_block(Tape& tape, Tensor x, int index) const {
    const std::string p = "encoder.block" + std::to_string(index);
    Tensor h = layer_norm(tape, x, params_.at(p + ".ln1.g"), params_.at(p + ".ln1.b"), 1e-5);
    AttnWeights w = attn_weights(p + ".attn");
    if (lora_enabled_ && index == cfg_.encoder_blocks - 1) {
        w.wq = apply_lora(tape, w.wq, params_.at("lora.q.A"), params_.at("lora.q.B"),
                          cfg_.lora_alpha, cfg_.lora_rank);
        w.wk = apply_lora(tape, w.wk, params_.at("lora.k.A"), params_.at("lora.k.B"),
                          cfg_.lora_alpha, cfg_.lora_rank);
        w.wv = apply_lora(tape, w.wv, params_.at("lora.v.A"), params_.at("lora.v.B"),
                          cfg_.lora_alpha, cfg_.lora_rank);
    }
    x = add(tape, x, mha(tape, w, h, h, nullptr));
    Tensor h2 = layer_norm(tape, x, params_.at(p + ".ln2.g"), params_.at(p + ".ln2.b"), 1e-5);
    return add(tape, x, ffn(tape, h2, p + ".ffn"));
}

Tensor Model::encode(Tape& tape, const Tensor& tokens) const {
    const int expect = 2 * cfg_.tokens_per_frame();
    if (tokens.rank() != 2 || tokens.dim(0) != expect || tokens.dim(1) != cfg_.channels) {
        throw ShapeError("encode: expected [" + std::to_string(expect) + "x" +
                         std::to_string(cfg_.channels) + "] tokens, got " +
                         shape_str(tokens.shape()));
    }
    Tensor x = tokens;
    for (int i = 0; i < cfg_.encoder_blocks; ++i) x = encoder_block(tape, x, i);
    return x;
}

std::pair<Tensor, Tensor> Model::encode_frames_from_tokens(Tape& tape,
                                                           const Tensor& tokens) const {
    const int hw = cfg_.tokens_per_frame();
    Tensor enc = encode(tape, tokens);
    Tensor f1 = slice_rows(tape, enc, 0, hw);
    Tensor f2 = slice_rows(tape, enc, hw, hw);
    const Tensor& pw = params_.at("projector.W");
    const Tensor& pb = params_.at("projector.b");
    return {add_rowvec(tape, matmul(tape, f1, pw), pb),
            add_rowvec(tape, matmul(tape, f2, pw), pb)};
}

std::pair<Tensor, Tensor> Model::encode_frames(Tape& tape, const Image& a, const Image& b) const {
    return encode_frames_from_tokens(tape, patchify(tape, a, b));
}

Tensor Model::build_memory(Tape& tape, const Image& a, const Image& b,
                           const std::vector<std::uint8_t>& coarse_flat, MaskMode mode) const {
    return build_memory_from_tokens(tape, patchify(tape, a, b), coarse_flat, mode);
}

Tensor Model::build_memory_from_tokens(Tape& tape, const Tensor& tokens,
                                       const std::vector<std::uint8_t>& coarse_flat,
                                       MaskMode mode) const {
    auto [f1, f2] = encode_frames_from_tokens(tape, tokens);
    return filter_tokens(tape, f1, f2, coarse_flat, mode);
}

Tensor Model::decode_forward(Tape& tape, const Tensor& memory,
                             const std::vector<int>& input_ids) const {
    if (memory.rank() != 2 || memory.dim(1) != cfg_.decoder_width) {
        throw ShapeError("decode_forward: memory " + shape_str(memory.shape()) +
                         " does not match decoder width " + std::to_string(cfg_.decoder_width));
    }
    if (memory.dim(0) < 1) {
        throw ContractError("decode_forward: degenerate empty memory");
    }
    const int t_len = static_cast<int>(input_ids.size());
    if (t_len < 1 || t_len > cfg_.max_caption_len) {
        throw ContractError("decoder input length " + std::to_string(t_len) + " outside [1, " +
                            std::to_string(cfg_.max_caption_len) + "]");
    }
    for (int id : input_ids) {
        if (id < 0 || id >= cfg_.vocab_size) {
            throw ContractError("token id " + std::to_string(id) + " outside vocabulary of size " +
                                std::to_string(cfg_.vocab_size));
        }
    }
    Tensor x = add(tape, gather_rows(tape, params_.at("embed.tok"), input_ids),
                   slice_rows(tape, params_.at("embed.pos"), 0, t_len));
    for (int i = 0; i < cfg_.decoder_layers; ++i) {
        x = decoder_layer(tape, x, memory, i);
    }
    Tensor xf = layer_norm(tape, x, params_.at("decoder.ln_f.g"), params_.at("decoder.ln_f.b"),
                           1e-5);
    return add_rowvec(tape, matmul(tape, xf, params_.at("head.W")), params_.at("head.b"));
}

Tensor Model::decoder_layer(Tape& tape, Tensor x, const Tensor& memory, int index) const {
    const std::string p = "decoder.layer" + std::to_string(index);
    const int t_len = x.dim(0);
    std::vector<std::uint8_t> causal(static_cast<std::size_t>(t_len) * t_len, 0);
    for (int i = 0; i < t_len; ++i) {
        for (int j = 0; j <= i; ++j) causal[static_cast<std::size_t>(i) * t_len + j] = 1;
    }
    Tensor h = layer_norm(tape, x, params_.at(p + ".ln1.g"), params_.at(p + ".ln1.b"), 1e-5);
    x = add(tape, x, mha(tape, attn_weights(p + ".self"), h, h, &causal));
    Tensor h2 = layer_norm(tape, x, params_.at(p + ".ln2.g"), params_.at(p + ".ln2.b"), 1e-5);
    x = add(tape, x, mha(tape, attn_weights(p + ".cross"), h2, memory, nullptr));
    Tensor h3 = layer_norm(tape, x, params_.at(p + ".ln3.g"), params_.at(p + ".ln3.b"), 1e-5);
    return add(tape, x, ffn(tape, h3, p + ".ffn"));
}

Tensor Model::caption_loss(Tape& tape, const Tensor& memory,
                           const std::vector<int>& caption_ids) const {
    const int keep = std::min(static_cast<int>(caption_ids.size()), cfg_.max_caption_len - 1);
    std::vector<int> input = {Vocabulary::kBos};
    std::vector<int> target;
    for (int i = 0; i < keep; ++i) {
        input.push_back(caption_ids[static_cast<std::size_t>(i)]);
        target.push_back(caption_ids[static_cast<std::size_t>(i)]);
    }
    target.push_back(Vocabulary::kEos);
    Tensor logits = decode_forward(tape, memory, input);
    return cross_entropy_rows(tape, logits, target, Vocabulary::kPad);
}

std::vector<int> Model::greedy_decode(const Tensor& memory) const {
    Tape quiet;
    quiet.set_recording(false);
    std::vector<int> input = {Vocabulary::kBos};
    std::vector<int> out;
    while (static_cast<int>(input.size()) < cfg_.max_caption_len) {
        Tensor logits = decode_forward(quiet, memory, input);
        const int t_last = logits.dim(0) - 1;
        const auto lv = logits.values();
        const double* row = lv.data() + static_cast<std::size_t>(t_last) * cfg_.vocab_size;
        int best = 0;
        for (int k = 1; k < cfg_.vocab_size; ++k) {
            if (row[k] > row[best]) best = k;
        }
        if (best == Vocabulary::kEos) break;
        out.push_back(best);
        input.push_back(best);
    }
    return out;
}

// ---- serialization ---------------------------------------------------------

namespace {
constexpr std::uint32_t kModelMetaVersion = 1;
}

void Model::save(const std::string& path) const {
    std::vector<std::pair<std::string, Tensor>> tensors = params_.items();
    Tensor meta = Tensor::from(
        {12}, {static_cast<double>(kModelMetaVersion), static_cast<double>(cfg_.image_size),
               static_cast<double>(cfg_.patch_stride), static_cast<double>(cfg_.channels),
               static_cast<double>(cfg_.encoder_blocks), static_cast<double>(cfg_.heads),
               static_cast<double>(cfg_.decoder_layers), static_cast<double>(cfg_.decoder_width),
               static_cast<double>(cfg_.vocab_size), static_cast<double>(cfg_.max_caption_len),
               static_cast<double>(cfg_.lora_rank), cfg_.lora_alpha});
    tensors.emplace_back("meta.config", meta);
    save_checkpoint(path, tensors);
}

Model Model::load(const std::string& path) {
    auto tensors = load_checkpoint(path);
    const Tensor* meta = nullptr;
    for (const auto& [name, t] : tensors) {
        if (name == "meta.config") meta = &t;
    }
    if (!meta || meta->size() != 12) {
        throw ConfigError("checkpoint '" + path + "' lacks a model description");
    }
    const auto mv = meta->values();
    if (static_cast<std::uint32_t>(mv[0]) != kModelMetaVersion) {
        throw ConfigError("checkpoint '" + path + "' has unsupported model version " +
                          std::to_string(mv[0]));
    }
    ModelConfig cfg;
    cfg.image_size = static_cast<int>(mv[1]);
    cfg.patch_stride = static_cast<int>(mv[2]);
    cfg.channels = static_cast<int>(mv[3]);
    cfg.encoder_blocks = static_cast<int>(mv[4]);
    cfg.heads = static_cast<int>(mv[5]);
    cfg.decoder_layers = static_cast<int>(mv[6]);
    cfg.decoder_width = static_cast<int>(mv[7]);
    cfg.vocab_size = static_cast<int>(mv[8]);
    cfg.max_caption_len = static_cast<int>(mv[9]);
    cfg.lora_rank = static_cast<int>(mv[10]);
    cfg.lora_alpha = mv[11];

    Model model(cfg);
    std::size_t matched = 0;
    for (const auto& [name, t] : tensors) {
        if (name == "meta.config") continue;
        if (!model.params_.contains(name)) {
            throw ConfigError("checkpoint '" + path + "' holds unexpected tensor '" + name + "'");
        }
        Tensor& dst = model.params_.at(name);
        if (dst.shape() != t.shape()) {
            throw ConfigError("checkpoint '" + path + "' tensor '" + name + "' has shape " +
                              shape_str(t.shape()) + ", expected " + shape_str(dst.shape()));
        }
        std::copy(t.values().begin(), t.values().end(), dst.values().begin());
        ++matched;
    }
    if (matched != model.params_.items().size()) {
        throw ConfigError("checkpoint '" + path + "' is missing " +
                          std::to_string(model.params_.items().size() - matched) +
                          " model tensors");
    }
    return model;
}

}  // namespace mvcc
