#pragma once

// Brute-force reference implementations of the caption metrics, written
// independently of src/metrics.cpp. Quadratic scans instead of count maps;
// recursive LCS instead of the rolling table. Ground truth for equivalence
// tests, frozen.

#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <vector>

namespace oracle {

using Words = std::vector<std::string>;
using Ngram = std::vector<std::string>;

inline std::vector<Ngram> all_ngrams(const Words& w, int n) {
    std::vector<Ngram> out;
    for (int i = 0; i + n <= static_cast<int>(w.size()); ++i) {
        out.emplace_back(w.begin() + i, w.begin() + i + n);
    }
    return out;
}

inline int count_occurrences(const std::vector<Ngram>& haystack, const Ngram& needle) {
    int c = 0;
    for (const Ngram& g : haystack) {
        if (g == needle) ++c;
    }
    return c;
}

inline std::vector<Ngram> distinct(const std::vector<Ngram>& grams) {
    std::vector<Ngram> out;
    for (const Ngram& g : grams) {
        if (std::find(out.begin(), out.end(), g) == out.end()) out.push_back(g);
    }
    return out;
}

inline std::array<double, 4> bleu(const std::vector<Words>& cands,
                                  const std::vector<std::vector<Words>>& refs) {
    double clipped[4] = {0, 0, 0, 0}, total[4] = {0, 0, 0, 0};
    double c_sum = 0, r_sum = 0;
    for (std::size_t i = 0; i < cands.size(); ++i) {
        const int c_len = static_cast<int>(cands[i].size());
        int best_len = static_cast<int>(refs[i][0].size());
        for (const Words& r : refs[i]) {
            const int r_len = static_cast<int>(r.size());
            if (std::abs(r_len - c_len) < std::abs(best_len - c_len) ||
                (std::abs(r_len - c_len) == std::abs(best_len - c_len) && r_len < best_len)) {
                best_len = r_len;
            }
        }
        c_sum += c_len;
        r_sum += best_len;
        for (int n = 1; n <= 4; ++n) {
            const std::vector<Ngram> cand_grams = all_ngrams(cands[i], n);
            for (const Ngram& g : distinct(cand_grams)) {
                int best_ref = 0;
                for (const Words& r : refs[i]) {
                    best_ref = std::max(best_ref, count_occurrences(all_ngrams(r, n), g));
                }
                clipped[n - 1] += std::min(count_occurrences(cand_grams, g), best_ref);
            }
            total[n - 1] += static_cast<double>(cand_grams.size());
        }
    }
    double bp = 1.0;
    if (c_sum == 0.0) {
        bp = 0.0;
    } else if (c_sum <= r_sum) {
        bp = std::exp(1.0 - r_sum / c_sum);
    }
    std::array<double, 4> out{};
    for (int n = 1; n <= 4; ++n) {
        double geo = 1.0;
        bool zero = false;
        for (int k = 1; k <= n; ++k) {
            const double p = total[k - 1] > 0 ? clipped[k - 1] / total[k - 1] : 0.0;
            if (p == 0.0) zero = true;
            geo *= std::pow(p, 1.0 / n);
        }
        out[n - 1] = zero ? 0.0 : 100.0 * bp * geo;
    }
    return out;
}

inline int lcs_recursive(const Words& a, const Words& b, std::size_t i, std::size_t j,
                         std::vector<int>& memo) {
    if (i == a.size() || j == b.size()) return 0;
    int& slot = memo[i * b.size() + j];
    if (slot >= 0) return slot;
    if (a[i] == b[j]) {
        slot = 1 + lcs_recursive(a, b, i + 1, j + 1, memo);
    } else {
        slot = std::max(lcs_recursive(a, b, i + 1, j, memo),
                        lcs_recursive(a, b, i, j + 1, memo));
    }
    return slot;
}

inline double rouge_l(const std::vector<Words>& cands,
                      const std::vector<std::vector<Words>>& refs) {
    const double b2 = 1.44;
    double acc = 0.0;
    for (std::size_t i = 0; i < cands.size(); ++i) {
        double best = 0.0;
        for (const Words& r : refs[i]) {
            if (cands[i].empty() || r.empty()) continue;
            std::vector<int> memo(cands[i].size() * r.size(), -1);
            const int l = lcs_recursive(cands[i], r, 0, 0, memo);
            if (l == 0) continue;
            const double prec = double(l) / double(cands[i].size());
            const double rec = double(l) / double(r.size());
            best = std::max(best, (1 + b2) * rec * prec / (rec + b2 * prec));
        }
        acc += best;
    }
    return 100.0 * acc / double(cands.size());
}

inline double meteor(const std::vector<Words>& cands,
                     const std::vector<std::vector<Words>>& refs) {
    double acc = 0.0;
    for (std::size_t i = 0; i < cands.size(); ++i) {
        double best = 0.0;
        for (const Words& r : refs[i]) {
            std::vector<int> matched_ref;
            std::vector<bool> taken(r.size(), false);
            for (const std::string& w : cands[i]) {
                int pick = -1;
                for (std::size_t j = 0; j < r.size(); ++j) {
                    if (!taken[j] && r[j] == w) {
                        pick = static_cast<int>(j);
                        break;
                    }
                }
                if (pick >= 0) {
                    taken[static_cast<std::size_t>(pick)] = true;
                    matched_ref.push_back(pick);
                }
            }
            const double m = static_cast<double>(matched_ref.size());
            if (m == 0.0) continue;
            const double prec = m / double(cands[i].size());
            const double rec = m / double(r.size());
            const double fmean = 10.0 * prec * rec / (rec + 9.0 * prec);
            double chunks = 1.0;
            for (std::size_t k = 1; k < matched_ref.size(); ++k) {
                if (matched_ref[k] - matched_ref[k - 1] != 1) chunks += 1.0;
            }
            const double frag = chunks / m;
            best = std::max(best, fmean * (1.0 - 0.5 * frag * frag * frag));
        }
        acc += best;
    }
    return 100.0 * acc / double(cands.size());
}

inline double cider_d(const std::vector<Words>& cands,
                      const std::vector<std::vector<Words>>& refs) {
    const std::size_t n_docs = cands.size();
    auto doc_freq = [&](const Ngram& g, int n) {
        int df = 0;
        for (const std::vector<Words>& rset : refs) {
            bool present = false;
            for (const Words& r : rset) {
                if (count_occurrences(all_ngrams(r, n), g) > 0) present = true;
            }
            if (present) ++df;
        }
        return df;
    };
    auto weight = [&](const std::vector<Ngram>& grams, const Ngram& g, int n) {
        const double tf = count_occurrences(grams, g);
        const double df = doc_freq(g, n);
        return tf * (std::log(double(n_docs)) - std::log(std::max(1.0, df)));
    };
    auto norm = [&](const std::vector<Ngram>& grams, int n) {
        double s = 0.0;
        for (const Ngram& g : distinct(grams)) {
            const double w = weight(grams, g, n);
            s += w * w;
        }
        return std::sqrt(s);
    };

    double corpus = 0.0;
    for (std::size_t i = 0; i < n_docs; ++i) {
        double inst = 0.0;
        for (int n = 1; n <= 4; ++n) {
            const std::vector<Ngram> cg = all_ngrams(cands[i], n);
            const double cn = norm(cg, n);
            double over_refs = 0.0;
            for (const Words& r : refs[i]) {
                const std::vector<Ngram> rg = all_ngrams(r, n);
                const double rn = norm(rg, n);
                double dot = 0.0;
                for (const Ngram& g : distinct(cg)) {
                    dot += std::min(weight(cg, g, n), weight(rg, g, n)) * weight(rg, g, n);
                }
                if (cn > 0.0 && rn > 0.0) dot /= cn * rn;
                const double d = double(cands[i].size()) - double(r.size());
                over_refs += dot * std::exp(-d * d / 72.0);
            }
            inst += over_refs / double(refs[i].size());
        }
        corpus += 10.0 * inst / 4.0;
    }
    return 100.0 * corpus / double(n_docs);
}

}  // namespace oracle
