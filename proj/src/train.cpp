#include "mvcc/train.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "mvcc/dataset.hpp"
#include "mvcc/metrics.hpp"
#include "mvcc/optim.hpp"
#include "mvcc/vocab.hpp"

namespace mvcc {

namespace {

void check_keys(const nlohmann::json& j, std::initializer_list<const char*> known,
                const std::string& scope) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (std::find_if(known.begin(), known.end(), [&](const char* k) {
                return it.key() == k;
            }) == known.end()) {
            throw ConfigError("unknown config key '" + scope + it.key() + "'");
        }
    }
}

template <typename T>
void read_field(const nlohmann::json& j, const char* key, T& out) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw ConfigError(std::string("config field '") + key + "' has the wrong type");
    }
}

bool one_of(const std::string& v, std::initializer_list<const char*> allowed) {
    return std::find_if(allowed.begin(), allowed.end(), [&](const char* a) {
               return v == a;
           }) != allowed.end();
}

std::vector<std::uint8_t> coarse_mask_for(const Image& a, const Image& b, const Instance& inst,
                                          const RunConfig& cfg) {
    const int g = cfg.model.grid();
    const int hw = cfg.model.tokens_per_frame();
    if (cfg.mask_source == "none") {
        return std::vector<std::uint8_t>(static_cast<std::size_t>(hw), 1);
    }
    Mask full = cfg.mask_source == "baseline"
                    ? diff_cd_baseline(a, b, cfg.baseline_threshold, cfg.baseline_min_blob)
                    : load_instance_mask(inst, cfg.model.image_size, cfg.model.image_size);
    Mask coarse = cfg.downsample == "nearest" ? downsample_nearest(full, g, g)
                                              : downsample_any(full, g, g);
    std::vector<std::uint8_t> flat = coarse.values;
    if (cfg.mode() == MaskMode::drop && coarse.popcount() == 0) {
        std::fill(flat.begin(), flat.end(), 1);
    }
    return flat;
}

struct Sample {
    Tensor tokens;  // cached patchify output (frozen weights)
    std::vector<std::uint8_t> coarse;
    std::vector<std::vector<int>> caption_ids;
    std::vector<Caption> caption_tokens;
};

double validation_bleu4(const Model& model, const Vocabulary& vocab,
                        const std::vector<Sample>& samples, const std::vector<int>& val_idx,
                        MaskMode mode) {
    std::vector<Caption> cands;
    std::vector<RefSet> refs;
    Tape quiet;
    quiet.set_recording(false);
    for (int idx : val_idx) {
        const Sample& s = samples[static_cast<std::size_t>(idx)];
        Tensor memory = model.build_memory_from_tokens(quiet, s.tokens, s.coarse, mode);
        Caption words;
        for (int id : model.greedy_decode(memory)) {
            if (id >= 4) words.push_back(vocab.word(id));
        }
        cands.push_back(std::move(words));
        refs.push_back(s.caption_tokens);
    }
    return bleu(cands, refs)[3];
}

}  // namespace

void RunConfig::validate() const {
    model.validate();
    if (!(lr > 0.0)) throw ConfigError("lr must be positive");
    if (epochs < 1) throw ConfigError("epochs must be at least 1");
    if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
    if (min_word_freq < 1) throw ConfigError("min_word_freq must be at least 1");
    if (!one_of(mask_source, {"oracle", "file", "baseline", "none"})) {
        throw ConfigError("mask_source '" + mask_source +
                          "' is not one of oracle, file, baseline, none");
    }
    if (!one_of(mask_mode, {"zero", "drop"})) {
        throw ConfigError("mask_mode '" + mask_mode + "' is not one of zero, drop");
    }
    if (!one_of(downsample, {"any", "nearest"})) {
        throw ConfigError("downsample '" + downsample + "' is not one of any, nearest");
    }
    if (!(baseline_threshold > 0.0 && baseline_threshold < 1.0)) {
        throw ConfigError("baseline_threshold must lie in (0, 1)");
    }
    if (baseline_min_blob < 0) throw ConfigError("baseline_min_blob must be non-negative");
    if (dataset.empty()) throw ConfigError("config is missing the dataset path");
    if (checkpoint_out.empty()) throw ConfigError("checkpoint_out must not be empty");
}

MaskMode RunConfig::mode() const {
    return mask_mode == "drop" ? MaskMode::drop : MaskMode::zero;
}

RunConfig RunConfig::from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw ConfigError("config root must be a JSON object");
    check_keys(j,
               {"model", "lr", "epochs", "batch_size", "seed", "min_word_freq", "mask_source",
                "mask_mode", "downsample", "baseline_threshold", "baseline_min_blob", "dataset",
                "image_root", "checkpoint_out", "log_out"},
               "");
    RunConfig cfg;
    if (j.contains("model")) {
        const nlohmann::json& m = j.at("model");
        if (!m.is_object()) throw ConfigError("config field 'model' must be an object");
        check_keys(m,
                   {"image_size", "patch_stride", "channels", "encoder_blocks", "heads",
                    "decoder_layers", "decoder_width", "vocab_size", "max_caption_len",
                    "lora_rank", "lora_alpha"},
                   "model.");
        read_field(m, "image_size", cfg.model.image_size);
        read_field(m, "patch_stride", cfg.model.patch_stride);
        read_field(m, "channels", cfg.model.channels);
        read_field(m, "encoder_blocks", cfg.model.encoder_blocks);
        read_field(m, "heads", cfg.model.heads);
        read_field(m, "decoder_layers", cfg.model.decoder_layers);
        read_field(m, "decoder_width", cfg.model.decoder_width);
        read_field(m, "vocab_size", cfg.model.vocab_size);
        read_field(m, "max_caption_len", cfg.model.max_caption_len);
        read_field(m, "lora_rank", cfg.model.lora_rank);
        read_field(m, "lora_alpha", cfg.model.lora_alpha);
    }
    read_field(j, "lr", cfg.lr);
    read_field(j, "epochs", cfg.epochs);
    read_field(j, "batch_size", cfg.batch_size);
    read_field(j, "seed", cfg.seed);
    read_field(j, "min_word_freq", cfg.min_word_freq);
    read_field(j, "mask_source", cfg.mask_source);
    read_field(j, "mask_mode", cfg.mask_mode);
    read_field(j, "downsample", cfg.downsample);
    read_field(j, "baseline_threshold", cfg.baseline_threshold);
    read_field(j, "baseline_min_blob", cfg.baseline_min_blob);
    read_field(j, "dataset", cfg.dataset);
    read_field(j, "image_root", cfg.image_root);
    read_field(j, "checkpoint_out", cfg.checkpoint_out);
    read_field(j, "log_out", cfg.log_out);
    return cfg;
}

RunConfig RunConfig::from_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    return from_json(buf.str());
}

TrainResult train_run(const RunConfig& cfg) {
    cfg.validate();
    const std::string image_root =
        cfg.image_root.empty()
            ? std::filesystem::path(cfg.dataset).parent_path().string()
            : cfg.image_root;
    const std::vector<Instance> instances = load_dataset(cfg.dataset, image_root);

    std::vector<int> train_idx, val_idx;
    for (std::size_t i = 0; i < instances.size(); ++i) {
        if (instances[i].split == "train") train_idx.push_back(static_cast<int>(i));
        if (instances[i].split == "val") val_idx.push_back(static_cast<int>(i));
    }
    if (train_idx.empty()) throw IngestionError("dataset has no training instances");
    if (val_idx.empty()) val_idx = train_idx;

    std::vector<std::string> train_captions;
    for (int i : train_idx) {
        for (const std::string& c : instances[static_cast<std::size_t>(i)].captions) {
            train_captions.push_back(c);
        }
    }
    const Vocabulary vocab = Vocabulary::build(train_captions, cfg.min_word_freq);

    ModelConfig mc = cfg.model;
    mc.vocab_size = vocab.size();
    mc.validate();
    Rng init_rng(cfg.seed, "init");
    Model model(mc, init_rng);

    std::vector<Sample> samples(instances.size());
    {
        Tape quiet;
        quiet.set_recording(false);
        for (std::size_t i = 0; i < instances.size(); ++i) {
            const Instance& inst = instances[i];
            if (inst.split != "train" && inst.split != "val") continue;
            const Image a = read_image(inst.img_a);
            const Image b = read_image(inst.img_b);
            for (const Image* img : {&a, &b}) {
                if (img->height != mc.image_size || img->width != mc.image_size ||
                    img->channels != 3) {
                    throw IngestionError("instance '" + inst.id + "' image is " +
                                         std::to_string(img->height) + "x" +
                                         std::to_string(img->width) + "x" +
                                         std::to_string(img->channels) + ", expected " +
                                         std::to_string(mc.image_size) + "x" +
                                         std::to_string(mc.image_size) + "x3");
                }
            }
            Sample& s = samples[i];
            s.tokens = model.patchify(quiet, a, b);
            s.coarse = coarse_mask_for(a, b, inst, cfg);
            for (const std::string& c : inst.captions) {
                s.caption_ids.push_back(vocab.encode(c));
                s.caption_tokens.push_back(tokenize(c));
            }
        }
    }

    std::vector<std::pair<std::string, Tensor>> trainable;
    for (const auto& [name, t] : model.params().items()) {
        if (t.requires_grad()) trainable.emplace_back(name, t);
    }
    AdamState adam;
    adam.config.lr = cfg.lr;

    Rng order_rng(cfg.seed, "order");
    Rng caption_rng(cfg.seed, "caption");
    const MaskMode mode = cfg.mode();

    TrainResult result;
    result.checkpoint_path = cfg.checkpoint_out;
    result.vocab_path = cfg.checkpoint_out + ".vocab.json";
    result.log_path = cfg.log_out.empty() ? cfg.checkpoint_out + ".log.jsonl" : cfg.log_out;
    result.best_bleu4 = -1.0;

    std::vector<int> order = train_idx;
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        order_rng.shuffle(order);
        double loss_sum = 0.0;
        int steps = 0;
        for (std::size_t start = 0; start < order.size();
             start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t stop =
                std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
            Tape tape;
            Tensor batch_loss;
            for (std::size_t k = start; k < stop; ++k) {
                const Sample& s = samples[static_cast<std::size_t>(order[k])];
                const std::size_t pick = caption_rng.below(s.caption_ids.size());
                Tensor memory = model.build_memory_from_tokens(tape, s.tokens, s.coarse, mode);
                Tensor loss = model.caption_loss(tape, memory, s.caption_ids[pick]);
                batch_loss = batch_loss.defined() ? add(tape, batch_loss, loss) : loss;
            }
            batch_loss = scale(tape, batch_loss, 1.0 / static_cast<double>(stop - start));
            const double loss_value = batch_loss.item();
            if (!std::isfinite(loss_value)) {
                throw NumericError("non-finite loss at epoch " + std::to_string(epoch) +
                                   ", step " + std::to_string(steps + 1));
            }
            for (auto& [name, t] : trainable) t.zero_grad();
            backward(batch_loss, tape);
            try {
                adam_step(trainable, adam);
            } catch (const NumericError& e) {
                throw NumericError(std::string(e.what()) + " at epoch " +
                                   std::to_string(epoch) + ", step " + std::to_string(steps + 1));
            }
            loss_sum += loss_value;
            ++steps;
        }

        EpochRecord rec;
        rec.epoch = epoch;
        rec.mean_loss = loss_sum / static_cast<double>(steps);
        rec.val_bleu4 = validation_bleu4(model, vocab, samples, val_idx, mode);
        result.epochs.push_back(rec);
        if (rec.val_bleu4 > result.best_bleu4) {
            result.best_bleu4 = rec.val_bleu4;
            result.best_epoch = epoch;
            model.save(result.checkpoint_path);
            vocab.save(result.vocab_path);
        }
    }

    std::ofstream log(result.log_path);
    if (!log) throw IngestionError("cannot write training log '" + result.log_path + "'");
    for (const EpochRecord& rec : result.epochs) {
        nlohmann::ordered_json j;
        j["epoch"] = rec.epoch;
        j["mean_loss"] = rec.mean_loss;
        j["val_bleu4"] = rec.val_bleu4;
        log << j.dump() << "\n";
    }
    nlohmann::ordered_json best;
    best["best_epoch"] = result.best_epoch;
    best["best_val_bleu4"] = result.best_bleu4;
    log << best.dump() << "\n";
    return result;
}

std::string run_caption(const CaptionRequest& req) {
    if (!one_of(req.mask_mode, {"zero", "drop"})) {
        throw ConfigError("mask_mode '" + req.mask_mode + "' is not one of zero, drop");
    }
    if (!one_of(req.downsample, {"any", "nearest"})) {
        throw ConfigError("downsample '" + req.downsample + "' is not one of any, nearest");
    }
    const Model model = Model::load(req.checkpoint);
    const Vocabulary vocab = Vocabulary::load(req.checkpoint + ".vocab.json");
    if (vocab.size() != model.config().vocab_size) {
        throw ConfigError("vocabulary size " + std::to_string(vocab.size()) +
                          " does not match checkpoint vocab_size " +
                          std::to_string(model.config().vocab_size));
    }
    const Image a = read_image(req.image_a);
    const Image b = read_image(req.image_b);
    const int g = model.config().grid();
    const int hw = model.config().tokens_per_frame();

    std::vector<std::uint8_t> coarse;
    if (req.mask == "none") {
        coarse.assign(static_cast<std::size_t>(hw), 1);
    } else {
        Mask full;
        if (req.mask == "baseline") {
            full = diff_cd_baseline(a, b, req.baseline_threshold, req.baseline_min_blob);
        } else {
            full = mask_from_image(read_image(req.mask));
        }
        if (full.height == g && full.width == g) {
            coarse = full.values;
        } else if (full.height == model.config().image_size &&
                   full.width == model.config().image_size) {
            coarse = (req.downsample == "nearest" ? downsample_nearest(full, g, g)
                                                  : downsample_any(full, g, g))
                         .values;
        } else {
            throw IngestionError("mask is " + std::to_string(full.height) + "x" +
                                 std::to_string(full.width) + ", expected full " +
                                 std::to_string(model.config().image_size) + "x" +
                                 std::to_string(model.config().image_size) + " or coarse " +
                                 std::to_string(g) + "x" + std::to_string(g));
        }
    }
    const MaskMode mode = req.mask_mode == "drop" ? MaskMode::drop : MaskMode::zero;
    if (mode == MaskMode::drop &&
        std::all_of(coarse.begin(), coarse.end(), [](std::uint8_t v) { return v == 0; })) {
        std::fill(coarse.begin(), coarse.end(), 1);
    }

    Tape quiet;
    quiet.set_recording(false);
    Tensor memory = model.build_memory(quiet, a, b, coarse, mode);
    return vocab.decode(model.greedy_decode(memory));
}

}  // namespace mvcc
