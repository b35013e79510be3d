#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mvcc/model.hpp"

namespace mvcc {

// Training/inference run description. Every field has a default, so a minimal
// JSON config is {"dataset": "..."}.
struct RunConfig {
    ModelConfig model;
    double lr = 3e-4;
    int epochs = 20;
    int batch_size = 16;
    std::uint64_t seed = 0;
    int min_word_freq = 1;
    std::string mask_source = "oracle";  // oracle | file | baseline | none
    std::string mask_mode = "zero";      // zero | drop
    std::string downsample = "any";      // any | nearest
    double baseline_threshold = 0.2;
    int baseline_min_blob = 8;
    std::string dataset;
    std::string image_root;      // default: the dataset file's directory
    std::string checkpoint_out = "model.ckpt";
    std::string log_out;         // default: <checkpoint_out>.log.jsonl

    void validate() const;
    MaskMode mode() const;
    static RunConfig from_json(const std::string& text);
    static RunConfig from_json_file(const std::string& path);
};

struct EpochRecord {
    int epoch = 0;  // 1-based
    double mean_loss = 0.0;
    double val_bleu4 = 0.0;
};

struct TrainResult {
    std::vector<EpochRecord> epochs;
    int best_epoch = 0;
    double best_bleu4 = 0.0;
    std::string checkpoint_path;
    std::string vocab_path;
    std::string log_path;
};

// Trains per the config, writes the best-validation-BLEU-4 checkpoint (with
// its vocabulary sidecar) and a JSON-lines log. Fully determined by
// (config, seed, dataset bytes).
TrainResult train_run(const RunConfig& cfg);

struct CaptionRequest {
    std::string checkpoint;
    std::string image_a;
    std::string image_b;
    std::string mask = "none";  // none | baseline | path to a PGM mask
    std::string mask_mode = "zero";
    std::string downsample = "any";
    double baseline_threshold = 0.2;
    int baseline_min_blob = 8;
};

// Loads the checkpoint and vocabulary, builds the coarse mask from the
// requested source (full-resolution masks are downsampled, coarse h-by-w
// masks are used as-is), and returns the greedy caption.
std::string run_caption(const CaptionRequest& req);

}  // namespace mvcc
