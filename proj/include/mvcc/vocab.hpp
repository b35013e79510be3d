#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "mvcc/errors.hpp"

namespace mvcc {

// Shared caption tokenization: lowercase, split on whitespace, strip terminal
// punctuation from each token. Tokens emptied by stripping are dropped.
std::vector<std::string> tokenize(const std::string& text);

class Vocabulary {
public:
    static constexpr int kPad = 0;
    static constexpr int kBos = 1;
    static constexpr int kEos = 2;
    static constexpr int kUnk = 3;

    // Deterministic construction from caption strings: tokens with count >=
    // min_freq enter the table sorted by (frequency desc, word asc).
    static Vocabulary build(const std::vector<std::string>& captions, int min_freq = 1);

    int size() const { return static_cast<int>(words_.size()); }
    int id(const std::string& word) const;  // kUnk when absent
    const std::string& word(int id) const;  // throws ContractError when out of range

    std::vector<int> encode(const std::string& caption) const;      // no BOS/EOS
    std::string decode(const std::vector<int>& ids) const;          // skips reserved ids

    void save(const std::string& path) const;
    static Vocabulary load(const std::string& path);

private:
    std::vector<std::string> words_;
    std::unordered_map<std::string, int> index_;
};

}  // namespace mvcc
