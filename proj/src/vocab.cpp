#include "mvcc/vocab.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

namespace mvcc {

std::vector<std::string> tokenize(const std::string& text) {
    std::vector<std::string> tokens;
    std::istringstream in(text);
    std::string raw;
    while (in >> raw) {
        std::string tok;
        tok.reserve(raw.size());
        for (char ch : raw) {
            tok.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
        }
        while (!tok.empty()) {
            const char last = tok.back();
            if (last == '.' || last == ',' || last == '!' || last == '?' || last == ';' ||
                last == ':') {
                tok.pop_back();
            } else {
                break;
            }
        }
        if (!tok.empty()) tokens.push_back(std::move(tok));
    }
    return tokens;
}

Vocabulary Vocabulary::build(const std::vector<std::string>& captions, int min_freq) {
    std::map<std::string, int> counts;
    for (const std::string& caption : captions) {
        for (const std::string& tok : tokenize(caption)) counts[tok] += 1;
    }
    if (counts.empty()) throw IngestionError("cannot build a vocabulary from an empty corpus");

    std::vector<std::pair<std::string, int>> ranked(counts.begin(), counts.end());
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });

    Vocabulary v;
    v.words_ = {"<pad>", "<bos>", "<eos>", "<unk>"};
    for (const auto& [word, count] : ranked) {
        if (count >= min_freq) v.words_.push_back(word);
    }
    for (int i = 0; i < static_cast<int>(v.words_.size()); ++i) v.index_[v.words_[i]] = i;
    return v;
}

int Vocabulary::id(const std::string& word) const {
    const auto it = index_.find(word);
    return it == index_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::word(int id) const {
    if (id < 0 || id >= size()) {
        throw ContractError("vocabulary id " + std::to_string(id) + " outside table of size " +
                            std::to_string(size()));
    }
    return words_[static_cast<std::size_t>(id)];
}

std::vector<int> Vocabulary::encode(const std::string& caption) const {
    std::vector<int> ids;
    for (const std::string& tok : tokenize(caption)) ids.push_back(id(tok));
    return ids;
}

std::string Vocabulary::decode(const std::vector<int>& ids) const {
    std::string out;
    for (int i : ids) {
        if (i == kPad || i == kBos || i == kEos) continue;
        if (!out.empty()) out.push_back(' ');
        out += word(i);
    }
    return out;
}

void Vocabulary::save(const std::string& path) const {
    nlohmann::json j;
    j["words"] = words_;
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw IngestionError("cannot open '" + path + "' for writing");
    f << j.dump(2) << "\n";
}

Vocabulary Vocabulary::load(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IngestionError("cannot open vocabulary '" + path + "'");
    nlohmann::json j;
    try {
        f >> j;
    } catch (const nlohmann::json::exception& e) {
        throw IngestionError("malformed vocabulary '" + path + "': " + e.what());
    }
    Vocabulary v;
    if (!j.contains("words") || !j["words"].is_array() || j["words"].size() < 4) {
        throw IngestionError("vocabulary '" + path + "' lacks a words table");
    }
    v.words_ = j["words"].get<std::vector<std::string>>();
    for (int i = 0; i < static_cast<int>(v.words_.size()); ++i) v.index_[v.words_[i]] = i;
    return v;
}

}  // namespace mvcc
