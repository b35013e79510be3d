#pragma once

#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "mvcc/image.hpp"
#include "mvcc/mask.hpp"
#include "mvcc/rng.hpp"
#include "mvcc/tensor.hpp"
#include "mvcc/vocab.hpp"

namespace mvcc {

struct ModelConfig {
    int image_size = 64;
    int patch_stride = 16;
    int channels = 64;       // encoder token width
    int encoder_blocks = 2;
    int heads = 4;
    int decoder_layers = 2;
    int decoder_width = 64;
    int vocab_size = 5;
    int max_caption_len = 12;
    int lora_rank = 4;
    double lora_alpha = 4.0;

    int grid() const { return image_size / patch_stride; }  // h == w
    int tokens_per_frame() const { return grid() * grid(); }
    void validate() const;  // throws ConfigError
};

// Ordered named parameters; insertion order defines checkpoint layout.
class ParamStore {
public:
    Tensor add(const std::string& name, Tensor t);
    Tensor& at(const std::string& name);
    const Tensor& at(const std::string& name) const;
    bool contains(const std::string& name) const { return index_.count(name) > 0; }
    std::vector<std::pair<std::string, Tensor>>& items() { return items_; }
    const std::vector<std::pair<std::string, Tensor>>& items() const { return items_; }

private:
    std::vector<std::pair<std::string, Tensor>> items_;
    std::unordered_map<std::string, std::size_t> index_;
};

// W + (alpha/rank) * A*B with W excluded from training. Throws ConfigError
// when the adapter rank exceeds the weight width.
Tensor apply_lora(Tape& tape, const Tensor& w, const Tensor& a, const Tensor& b, double alpha,
                  int rank);

// Two-frame joint-attention encoder with LoRA on the last block, linear
// projector, and a causal cross-attending caption decoder.
class Model {
public:
    Model(ModelConfig cfg, Rng& rng);

    const ModelConfig& config() const { return cfg_; }
    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }

    // Enabled by default; the adapter-free path exists for equivalence tests.
    void set_lora_enabled(bool on) { lora_enabled_ = on; }

    // [2hw, c] tokens: per-patch linear map + spatial position + frame embedding.
    Tensor patchify(Tape& tape, const Image& a, const Image& b) const;
    // N joint-attention blocks over the 2hw sequence.
    Tensor encode(Tape& tape, const Tensor& tokens) const;
    // Per-frame projected grids [hw, decoder_width] each.
    std::pair<Tensor, Tensor> encode_frames(Tape& tape, const Image& a, const Image& b) const;
    std::pair<Tensor, Tensor> encode_frames_from_tokens(Tape& tape, const Tensor& tokens) const;
    // Full visual path: patchify, encode, project, mask-filter, concatenate.
    Tensor build_memory(Tape& tape, const Image& a, const Image& b,
                        const std::vector<std::uint8_t>& coarse_flat, MaskMode mode) const;
    // Same path starting from cached patchify output (patchify weights are
    // frozen, so tokens can be computed once per pair and reused).
    Tensor build_memory_from_tokens(Tape& tape, const Tensor& tokens,
                                    const std::vector<std::uint8_t>& coarse_flat,
                                    MaskMode mode) const;

    // input_ids: decoder input sequence (BOS-leading); returns [T, K] logits.
    Tensor decode_forward(Tape& tape, const Tensor& memory,
                          const std::vector<int>& input_ids) const;
    // Teacher-forced mean cross-entropy against caption ids (no BOS/EOS).
    Tensor caption_loss(Tape& tape, const Tensor& memory,
                        const std::vector<int>& caption_ids) const;
    // Greedy argmax decoding from BOS; stops at EOS or the length limit.
    // Returns generated ids without BOS/EOS. Ties pick the smallest id.
    std::vector<int> greedy_decode(const Tensor& memory) const;

    void save(const std::string& path) const;
    static Model load(const std::string& path);

private:
    struct AttnWeights {
        Tensor wq, bq, wk, bk, wv, bv, wo, bo;
    };

    explicit Model(ModelConfig cfg);  // params registered, values unset

    void register_params();
    void init_values(Rng& rng);
    AttnWeights attn_weights(const std::string& prefix) const;
    Tensor mha(Tape& tape, const AttnWeights& w, const Tensor& q_in, const Tensor& kv_in,
               const std::vector<std::uint8_t>* allowed) const;
    Tensor ffn(Tape& tape, const Tensor& x, const std::string& prefix) const;
    Tensor encoder_block(Tape& tape, Tensor x, int index) const;
    Tensor decoder_layer(Tape& tape, Tensor x, const Tensor& memory, int index) const;

    ModelConfig cfg_;
    ParamStore params_;
    bool lora_enabled_ = true;
};

}  // namespace mvcc
