#pragma once

#include <array>
#include <string>
#include <vector>

#include "mvcc/errors.hpp"

namespace mvcc {

using Caption = std::vector<std::string>;
using RefSet = std::vector<Caption>;

// All scores reported x100 (CIDEr-D raw range [0,10] maps to [0,1000]).
struct MetricReport {
    double bleu1 = 0.0;
    double bleu2 = 0.0;
    double bleu3 = 0.0;
    double bleu4 = 0.0;
    double meteor = 0.0;
    double rouge_l = 0.0;
    double cider_d = 0.0;
    int instances = 0;

    std::string to_json() const;
    static MetricReport from_json(const std::string& text);
};

// Corpus BLEU-1..4: clipped n-gram precision with brevity penalty against the
// closest reference length (ties pick the shorter reference).
std::array<double, 4> bleu(const std::vector<Caption>& candidates,
                           const std::vector<RefSet>& references);

// LCS F-measure, beta = 1.2, max over references, mean over corpus.
double rouge_l(const std::vector<Caption>& candidates, const std::vector<RefSet>& references);

// tf-idf n-gram cosine (n = 1..4) with reference-clipped candidate counts and
// a Gaussian length penalty (sigma = 6); warns when the corpus is too small
// for meaningful IDF.
double cider_d(const std::vector<Caption>& candidates, const std::vector<RefSet>& references);

// Exact-match leftmost-greedy alignment, F = 10PR/(R+9P), chunk penalty
// 0.5*(chunks/matches)^3, max over references, mean over corpus.
double meteor_simplified(const std::vector<Caption>& candidates,
                         const std::vector<RefSet>& references);

// Tokenizes raw strings and produces the full report.
MetricReport evaluate_corpus(const std::vector<std::string>& candidates,
                             const std::vector<std::vector<std::string>>& references);

// One caption per line.
std::vector<std::string> load_candidate_lines(const std::string& path);

struct ReferenceFile {
    std::vector<std::string> ids;
    std::vector<std::vector<std::string>> refs;
};

// JSON lines, one {"id": ..., "refs": [...]} object per instance.
ReferenceFile load_references(const std::string& path);

void write_report(const std::string& path, const MetricReport& report);

}  // namespace mvcc
