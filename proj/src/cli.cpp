#include "mvcc/cli.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <cstdlib>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mvcc/dataset.hpp"
#include "mvcc/errors.hpp"
#include "mvcc/metrics.hpp"
#include "mvcc/train.hpp"

namespace mvcc {
namespace {

// MVCC_THREADS caps worker threads. The pipeline runs on one thread, which
// satisfies any valid cap, so the value is only validated here.
void validate_thread_cap() {
    const char* raw = std::getenv("MVCC_THREADS");
    if (raw == nullptr) return;
    const std::string text(raw);
    const bool digits =
        !text.empty() && std::all_of(text.begin(), text.end(), [](unsigned char c) {
            return std::isdigit(c) != 0;
        });
    unsigned long long cap = 0;
    if (digits) {
        try {
            cap = std::stoull(text);
        } catch (const std::exception&) {
            cap = 0;
        }
    }
    if (cap < 1) {
        throw ConfigError("MVCC_THREADS must be a positive integer, got '" + text + "'");
    }
}

}  // namespace

int cli_main(int argc, char** argv) {
    CLI::App app{"change captioning on bi-temporal image pairs"};
    app.require_subcommand(1);

    GenConfig gen;
    std::string distractors = "on";
    CLI::App* gen_cmd = app.add_subcommand("gen-data", "generate a synthetic dataset");
    gen_cmd->add_option("--out", gen.out_dir, "output directory")->required();
    gen_cmd->add_option("--n", gen.n, "number of instances")->check(CLI::PositiveNumber);
    gen_cmd->add_option("--seed", gen.seed, "generator seed");
    gen_cmd->add_option("--distractors", distractors, "change-free noise fields")
        ->check(CLI::IsMember({"on", "off"}));

    std::string config_path;
    CLI::App* train_cmd = app.add_subcommand("train", "train per a JSON run config");
    train_cmd->add_option("--config", config_path, "run config path")->required();

    CaptionRequest req;
    std::vector<std::string> pair;
    CLI::App* caption_cmd = app.add_subcommand("caption", "caption one image pair");
    caption_cmd->add_option("--checkpoint", req.checkpoint, "model checkpoint")->required();
    caption_cmd->add_option("--pair", pair, "before and after images")->expected(2)->required();
    caption_cmd->add_option("--mask", req.mask, "none, baseline, or a mask file");
    caption_cmd->add_option("--mask-mode", req.mask_mode, "zero or drop")
        ->check(CLI::IsMember({"zero", "drop"}));
    caption_cmd->add_option("--downsample", req.downsample, "any or nearest")
        ->check(CLI::IsMember({"any", "nearest"}));

    std::string candidates_path;
    std::string references_path;
    std::string report_out;
    CLI::App* eval_cmd = app.add_subcommand("eval", "score candidate captions");
    eval_cmd->add_option("--candidates", candidates_path, "one caption per line")->required();
    eval_cmd->add_option("--references", references_path, "JSON lines of {id, refs}")
        ->required();
    eval_cmd->add_option("--out", report_out, "also write the report to this path");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        validate_thread_cap();
        if (gen_cmd->parsed()) {
            gen.distractors = distractors == "on";
            generate_dataset(gen);
            std::printf("wrote %d instances under %s\n", gen.n, gen.out_dir.c_str());
        } else if (train_cmd->parsed()) {
            const RunConfig cfg = RunConfig::from_json_file(config_path);
            const TrainResult result = train_run(cfg);
            std::printf("best epoch %d, val BLEU-4 %.6f\n", result.best_epoch,
                        result.best_bleu4);
            std::printf("checkpoint %s\n", result.checkpoint_path.c_str());
            std::printf("log %s\n", result.log_path.c_str());
        } else if (caption_cmd->parsed()) {
            req.image_a = pair[0];
            req.image_b = pair[1];
            std::printf("%s\n", run_caption(req).c_str());
        } else {
            const std::vector<std::string> candidates = load_candidate_lines(candidates_path);
            const ReferenceFile refs = load_references(references_path);
            const MetricReport report = evaluate_corpus(candidates, refs.refs);
            if (!report_out.empty()) {
                write_report(report_out, report);
            }
            std::printf("%s\n", report.to_json().c_str());
        }
        return 0;
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const IngestionError& e) {
        std::fprintf(stderr, "ingestion error: %s\n", e.what());
        return 3;
    } catch (const NumericError& e) {
        std::fprintf(stderr, "numeric failure: %s\n", e.what());
        return 4;
    }
}

}  // namespace mvcc
