#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstdint>
#include <string>
#include <vector>

#include "mvcc/dataset.hpp"
#include "mvcc/errors.hpp"
#include "mvcc/image.hpp"
#include "mvcc/mask.hpp"
#include "mvcc/metrics.hpp"
#include "mvcc/train.hpp"
#include "mvcc/vocab.hpp"

namespace py = pybind11;

namespace {

py::dict report_dict(const mvcc::MetricReport& report) {
    py::dict out;
    out["instances"] = report.instances;
    out["bleu1"] = report.bleu1;
    out["bleu2"] = report.bleu2;
    out["bleu3"] = report.bleu3;
    out["bleu4"] = report.bleu4;
    out["meteor"] = report.meteor;
    out["rouge_l"] = report.rouge_l;
    out["cider_d"] = report.cider_d;
    return out;
}

py::dict result_dict(const mvcc::TrainResult& result) {
    py::list epochs;
    for (const mvcc::EpochRecord& rec : result.epochs) {
        py::dict e;
        e["epoch"] = rec.epoch;
        e["mean_loss"] = rec.mean_loss;
        e["val_bleu4"] = rec.val_bleu4;
        epochs.append(e);
    }
    py::dict out;
    out["best_epoch"] = result.best_epoch;
    out["best_val_bleu4"] = result.best_bleu4;
    out["checkpoint"] = result.checkpoint_path;
    out["vocab"] = result.vocab_path;
    out["log"] = result.log_path;
    out["epochs"] = epochs;
    return out;
}

}  // namespace

PYBIND11_MODULE(_mvcc_core, m) {
    m.doc() = "change captioning on bi-temporal image pairs";

    py::register_exception<mvcc::ConfigError>(m, "ConfigError");
    py::register_exception<mvcc::IngestionError>(m, "IngestionError");
    py::register_exception<mvcc::NumericError>(m, "NumericError");

    m.def(
        "generate_dataset",
        [](const std::string& out_dir, int n, std::uint64_t seed, int image_size,
           bool distractors) {
            mvcc::GenConfig cfg;
            cfg.out_dir = out_dir;
            cfg.n = n;
            cfg.seed = seed;
            cfg.image_size = image_size;
            cfg.distractors = distractors;
            mvcc::generate_dataset(cfg);
        },
        py::arg("out_dir"), py::arg("n") = 100, py::arg("seed") = 0,
        py::arg("image_size") = 64, py::arg("distractors") = true,
        py::call_guard<py::gil_scoped_release>(),
        "Write a synthetic bi-temporal dataset (images/, masks/, annotations.jsonl).");

    m.def(
        "train",
        [](const std::string& config_path) {
            return result_dict(mvcc::train_run(mvcc::RunConfig::from_json_file(config_path)));
        },
        py::arg("config_path"),
        "Train per a JSON run config; returns the per-epoch log and best-checkpoint info.");

    m.def(
        "train_config_text",
        [](const std::string& config_json) {
            return result_dict(mvcc::train_run(mvcc::RunConfig::from_json(config_json)));
        },
        py::arg("config_json"), "Same as train(), taking the config JSON text directly.");

    m.def(
        "caption",
        [](const std::string& checkpoint, const std::string& image_a,
           const std::string& image_b, const std::string& mask, const std::string& mask_mode,
           const std::string& downsample) {
            mvcc::CaptionRequest req;
            req.checkpoint = checkpoint;
            req.image_a = image_a;
            req.image_b = image_b;
            req.mask = mask;
            req.mask_mode = mask_mode;
            req.downsample = downsample;
            return mvcc::run_caption(req);
        },
        py::arg("checkpoint"), py::arg("image_a"), py::arg("image_b"),
        py::arg("mask") = "none", py::arg("mask_mode") = "zero",
        py::arg("downsample") = "any", py::call_guard<py::gil_scoped_release>(),
        "Greedy caption for one image pair ('none', 'baseline', or a mask file path).");

    m.def(
        "evaluate",
        [](const std::vector<std::string>& candidates,
           const std::vector<std::vector<std::string>>& references) {
            return report_dict(mvcc::evaluate_corpus(candidates, references));
        },
        py::arg("candidates"), py::arg("references"),
        "Score candidate captions against reference sets; all metrics x100.");

    m.def(
        "evaluate_files",
        [](const std::string& candidates_path, const std::string& references_path) {
            const auto candidates = mvcc::load_candidate_lines(candidates_path);
            const auto refs = mvcc::load_references(references_path);
            return report_dict(mvcc::evaluate_corpus(candidates, refs.refs));
        },
        py::arg("candidates_path"), py::arg("references_path"),
        "evaluate() over a candidates text file and a references JSONL file.");

    m.def("tokenize", &mvcc::tokenize, py::arg("text"),
          "Caption tokenization: lowercase, whitespace split, strip terminal punctuation.");

    m.def(
        "bleu",
        [](const std::vector<mvcc::Caption>& cands, const std::vector<mvcc::RefSet>& refs) {
            const auto values = mvcc::bleu(cands, refs);
            return std::vector<double>(values.begin(), values.end());
        },
        py::arg("candidates"), py::arg("references"),
        "Corpus BLEU-1..4 (x100) over pre-tokenized captions.");

    m.def("rouge_l", &mvcc::rouge_l, py::arg("candidates"), py::arg("references"));
    m.def("cider_d", &mvcc::cider_d, py::arg("candidates"), py::arg("references"));
    m.def("meteor_simplified", &mvcc::meteor_simplified, py::arg("candidates"),
          py::arg("references"));

    m.def(
        "diff_cd_mask",
        [](const std::string& image_a, const std::string& image_b, double threshold,
           int min_blob) {
            const mvcc::Mask mask = mvcc::diff_cd_baseline(
                mvcc::read_image(image_a), mvcc::read_image(image_b), threshold, min_blob);
            std::vector<std::vector<int>> rows(static_cast<std::size_t>(mask.height));
            for (int y = 0; y < mask.height; ++y) {
                rows[static_cast<std::size_t>(y)].reserve(static_cast<std::size_t>(mask.width));
                for (int x = 0; x < mask.width; ++x) {
                    rows[static_cast<std::size_t>(y)].push_back(mask.at(y, x));
                }
            }
            return rows;
        },
        py::arg("image_a"), py::arg("image_b"), py::arg("threshold") = 0.2,
        py::arg("min_blob") = 8, "Baseline change-detector mask as a list of 0/1 rows.");
}
