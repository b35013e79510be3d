#include "mvcc/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "mvcc/vocab.hpp"

namespace mvcc {

namespace {

constexpr int kMaxN = 4;
constexpr double kCiderSigma = 6.0;

using NgramCounts = std::map<std::string, int>;

void check_corpus(const std::vector<Caption>& candidates,
                  const std::vector<RefSet>& references) {
    if (candidates.empty()) throw ContractError("empty candidate corpus");
    if (candidates.size() != references.size()) {
        throw ContractError("corpus has " + std::to_string(candidates.size()) +
                            " candidates but " + std::to_string(references.size()) +
                            " reference sets");
    }
    for (std::size_t i = 0; i < references.size(); ++i) {
        if (references[i].empty()) {
            throw ContractError("instance " + std::to_string(i) + " has no references");
        }
    }
}

std::string join_ngram(const Caption& tokens, std::size_t begin, int n) {
    std::string key = tokens[begin];
    for (int j = 1; j < n; ++j) {
        key.push_back('\x1f');
        key += tokens[begin + static_cast<std::size_t>(j)];
    }
    return key;
}

NgramCounts count_ngrams(const Caption& tokens, int n) {
    NgramCounts counts;
    if (static_cast<int>(tokens.size()) < n) return counts;
    for (std::size_t i = 0; i + static_cast<std::size_t>(n) <= tokens.size(); ++i) {
        ++counts[join_ngram(tokens, i, n)];
    }
    return counts;
}

int lcs_length(const Caption& a, const Caption& b) {
    const std::size_t m = a.size(), n = b.size();
    std::vector<int> prev(n + 1, 0), cur(n + 1, 0);
    for (std::size_t i = 1; i <= m; ++i) {
        for (std::size_t j = 1; j <= n; ++j) {
            cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
        }
        std::swap(prev, cur);
    }
    return prev[n];
}

}  // namespace

std::array<double, 4> bleu(const std::vector<Caption>& candidates,
                           const std::vector<RefSet>& references) {
    check_corpus(candidates, references);
    std::array<double, kMaxN> clipped{}, total{};
    double c_total = 0.0, r_total = 0.0;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        const Caption& cand = candidates[i];
        const int c_len = static_cast<int>(cand.size());
        int r_eff = static_cast<int>(references[i][0].size());
        for (const Caption& ref : references[i]) {
            const int r_len = static_cast<int>(ref.size());
            const int cur = std::abs(r_len - c_len), best = std::abs(r_eff - c_len);
            if (cur < best || (cur == best && r_len < r_eff)) r_eff = r_len;
        }
        c_total += c_len;
        r_total += r_eff;
        for (int n = 1; n <= kMaxN; ++n) {
            NgramCounts cand_counts = count_ngrams(cand, n);
            NgramCounts ref_max;
            for (const Caption& ref : references[i]) {
                for (const auto& [key, count] : count_ngrams(ref, n)) {
                    ref_max[key] = std::max(ref_max[key], count);
                }
            }
            for (const auto& [key, count] : cand_counts) {
                const auto it = ref_max.find(key);
                if (it != ref_max.end()) clipped[n - 1] += std::min(count, it->second);
            }
            total[n - 1] += std::max(0, c_len - n + 1);
        }
    }
    const double bp =
        c_total == 0.0 ? 0.0 : (c_total > r_total ? 1.0 : std::exp(1.0 - r_total / c_total));
    std::array<double, 4> out{};
    double log_sum = 0.0;
    bool degenerate = false;
    for (int n = 1; n <= kMaxN; ++n) {
        const double p = total[n - 1] > 0.0 ? clipped[n - 1] / total[n - 1] : 0.0;
        if (p <= 0.0) degenerate = true;
        if (!degenerate) log_sum += std::log(p);
        out[n - 1] = degenerate ? 0.0 : 100.0 * bp * std::exp(log_sum / n);
    }
    return out;
}

double rouge_l(const std::vector<Caption>& candidates, const std::vector<RefSet>& references) {
    check_corpus(candidates, references);
    constexpr double beta2 = 1.2 * 1.2;
    double sum = 0.0;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        double best = 0.0;
        for (const Caption& ref : references[i]) {
            if (candidates[i].empty() || ref.empty()) continue;
            const int lcs = lcs_length(candidates[i], ref);
            if (lcs == 0) continue;
            const double p = static_cast<double>(lcs) / static_cast<double>(candidates[i].size());
            const double r = static_cast<double>(lcs) / static_cast<double>(ref.size());
            best = std::max(best, (1.0 + beta2) * r * p / (r + beta2 * p));
        }
        sum += best;
    }
    return 100.0 * sum / static_cast<double>(candidates.size());
}

double meteor_simplified(const std::vector<Caption>& candidates,
                         const std::vector<RefSet>& references) {
    check_corpus(candidates, references);
    double sum = 0.0;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        const Caption& cand = candidates[i];
        double best = 0.0;
        for (const Caption& ref : references[i]) {
            std::vector<int> align;
            std::vector<char> used(ref.size(), 0);
            for (const std::string& word : cand) {
                for (std::size_t j = 0; j < ref.size(); ++j) {
                    if (!used[j] && ref[j] == word) {
                        used[j] = 1;
                        align.push_back(static_cast<int>(j));
                        break;
                    }
                }
            }
            const int m = static_cast<int>(align.size());
            if (m == 0) continue;
            const double p = static_cast<double>(m) / static_cast<double>(cand.size());
            const double r = static_cast<double>(m) / static_cast<double>(ref.size());
            const double f = 10.0 * p * r / (r + 9.0 * p);
            int chunks = 1;
            for (std::size_t k = 1; k < align.size(); ++k) {
                if (align[k] != align[k - 1] + 1) ++chunks;
            }
            const double ratio = static_cast<double>(chunks) / static_cast<double>(m);
            best = std::max(best, f * (1.0 - 0.5 * ratio * ratio * ratio));
        }
        sum += best;
    }
    return 100.0 * sum / static_cast<double>(candidates.size());
}

double cider_d(const std::vector<Caption>& candidates, const std::vector<RefSet>& references) {
    check_corpus(candidates, references);
    const std::size_t n_inst = candidates.size();
    if (n_inst < 2) {
        std::fprintf(stderr,
                     "warning: cider_d over %zu instance(s) has degenerate IDF; score is 0\n",
                     n_inst);
    }
    std::array<NgramCounts, kMaxN> df;
    for (const RefSet& refs : references) {
        std::array<NgramCounts, kMaxN> seen;
        for (const Caption& ref : refs) {
            for (int n = 1; n <= kMaxN; ++n) {
                for (const auto& [key, count] : count_ngrams(ref, n)) seen[n - 1][key] = 1;
            }
        }
        for (int n = 0; n < kMaxN; ++n) {
            for (const auto& [key, one] : seen[n]) df[n][key] += one;
        }
    }
    const double log_n = std::log(static_cast<double>(n_inst));
    auto tfidf = [&](const Caption& tokens) {
        std::array<std::map<std::string, double>, kMaxN> vec;
        for (int n = 1; n <= kMaxN; ++n) {
            for (const auto& [key, count] : count_ngrams(tokens, n)) {
                const auto it = df[n - 1].find(key);
                const double doc_freq = it == df[n - 1].end() ? 0.0 : it->second;
                vec[n - 1][key] = count * (log_n - std::log(std::max(1.0, doc_freq)));
            }
        }
        return vec;
    };
    auto norm_of = [](const std::array<std::map<std::string, double>, kMaxN>& vec) {
        std::array<double, kMaxN> out{};
        for (int n = 0; n < kMaxN; ++n) {
            double s = 0.0;
            for (const auto& [key, v] : vec[n]) s += v * v;
            out[n] = std::sqrt(s);
        }
        return out;
    };

    double corpus = 0.0;
    for (std::size_t i = 0; i < n_inst; ++i) {
        const auto cand_vec = tfidf(candidates[i]);
        const auto cand_norm = norm_of(cand_vec);
        const double cand_len = static_cast<double>(candidates[i].size());
        std::array<double, kMaxN> acc{};
        for (const Caption& ref : references[i]) {
            const auto ref_vec = tfidf(ref);
            const auto ref_norm = norm_of(ref_vec);
            const double delta = cand_len - static_cast<double>(ref.size());
            const double len_penalty =
                std::exp(-delta * delta / (2.0 * kCiderSigma * kCiderSigma));
            for (int n = 0; n < kMaxN; ++n) {
                double dot = 0.0;
                for (const auto& [key, cv] : cand_vec[n]) {
                    const auto it = ref_vec[n].find(key);
                    if (it != ref_vec[n].end()) dot += std::min(cv, it->second) * it->second;
                }
                if (cand_norm[n] != 0.0 && ref_norm[n] != 0.0) {
                    dot /= cand_norm[n] * ref_norm[n];
                }
                acc[n] += dot * len_penalty;
            }
        }
        double inst = 0.0;
        for (int n = 0; n < kMaxN; ++n) {
            inst += acc[n] / static_cast<double>(references[i].size());
        }
        corpus += 10.0 * inst / kMaxN;
    }
    return 100.0 * corpus / static_cast<double>(n_inst);
}

MetricReport evaluate_corpus(const std::vector<std::string>& candidates,
                             const std::vector<std::vector<std::string>>& references) {
    if (candidates.size() != references.size()) {
        throw IngestionError("corpus mismatch: " + std::to_string(candidates.size()) +
                             " candidates vs " + std::to_string(references.size()) +
                             " reference sets");
    }
    std::vector<Caption> cand_tokens;
    cand_tokens.reserve(candidates.size());
    for (const std::string& c : candidates) cand_tokens.push_back(tokenize(c));
    std::vector<RefSet> ref_tokens;
    ref_tokens.reserve(references.size());
    for (const auto& refs : references) {
        RefSet set;
        set.reserve(refs.size());
        for (const std::string& r : refs) set.push_back(tokenize(r));
        ref_tokens.push_back(std::move(set));
    }

    MetricReport report;
    const auto b = bleu(cand_tokens, ref_tokens);
    report.bleu1 = b[0];
    report.bleu2 = b[1];
    report.bleu3 = b[2];
    report.bleu4 = b[3];
    report.meteor = meteor_simplified(cand_tokens, ref_tokens);
    report.rouge_l = rouge_l(cand_tokens, ref_tokens);
    report.cider_d = cider_d(cand_tokens, ref_tokens);
    report.instances = static_cast<int>(candidates.size());
    return report;
}

std::string MetricReport::to_json() const {
    nlohmann::ordered_json j;
    j["instances"] = instances;
    j["bleu1"] = bleu1;
    j["bleu2"] = bleu2;
    j["bleu3"] = bleu3;
    j["bleu4"] = bleu4;
    j["meteor"] = meteor;
    j["rouge_l"] = rouge_l;
    j["cider_d"] = cider_d;
    return j.dump(2);
}

MetricReport MetricReport::from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw IngestionError(std::string("malformed metric report: ") + e.what());
    }
    MetricReport r;
    try {
        r.instances = j.at("instances").get<int>();
        r.bleu1 = j.at("bleu1").get<double>();
        r.bleu2 = j.at("bleu2").get<double>();
        r.bleu3 = j.at("bleu3").get<double>();
        r.bleu4 = j.at("bleu4").get<double>();
        r.meteor = j.at("meteor").get<double>();
        r.rouge_l = j.at("rouge_l").get<double>();
        r.cider_d = j.at("cider_d").get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw IngestionError(std::string("incomplete metric report: ") + e.what());
    }
    return r;
}

std::vector<std::string> load_candidate_lines(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IngestionError("cannot open candidate file '" + path + "'");
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        lines.push_back(line);
    }
    return lines;
}

ReferenceFile load_references(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IngestionError("cannot open reference file '" + path + "'");
    ReferenceFile out;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw IngestionError("reference line " + std::to_string(line_no) +
                                 " is not valid JSON: " + e.what());
        }
        if (!j.is_object() || !j.contains("id") || !j["id"].is_string() ||
            !j.contains("refs") || !j["refs"].is_array() || j["refs"].empty()) {
            throw IngestionError("reference line " + std::to_string(line_no) +
                                 " must be {\"id\": ..., \"refs\": [...]} with >= 1 refs");
        }
        std::vector<std::string> refs;
        for (const auto& r : j["refs"]) {
            if (!r.is_string()) {
                throw IngestionError("reference line " + std::to_string(line_no) +
                                     " holds a non-string ref");
            }
            refs.push_back(r.get<std::string>());
        }
        out.ids.push_back(j["id"].get<std::string>());
        out.refs.push_back(std::move(refs));
    }
    return out;
}

void write_report(const std::string& path, const MetricReport& report) {
    std::ofstream out(path);
    if (!out) throw IngestionError("cannot write report '" + path + "'");
    out << report.to_json() << "\n";
}

}  // namespace mvcc
