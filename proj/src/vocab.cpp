#include "wr/vocab.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>

namespace wr {

std::vector<std::string> tokenize(const std::string& text) {
    std::vector<std::string> out;
    std::string word;
    auto flush = [&] {
        if (!word.empty()) {
            out.push_back(word);
            word.clear();
        }
    };
    for (unsigned char c : text) {
        if (std::isspace(c)) {
            flush();
        } else if (std::ispunct(c)) {
            flush();
            out.push_back(std::string(1, static_cast<char>(c)));
        } else {
            word.push_back(static_cast<char>(std::tolower(c)));
        }
    }
    flush();
    return out;
}

std::string detokenize(const std::vector<std::string>& words) {
    std::string out;
    for (size_t i = 0; i < words.size(); ++i) {
        if (i > 0) out.push_back(' ');
        out += words[i];
    }
    return out;
}

const char* Vocab::reserved_name(int64_t id) {
    static const char* names[kNumReserved] = {"[PAD]", "[BOS]", "[EOS]", "[CLS]", "[UNK]"};
    if (id < 0 || id >= kNumReserved)
        throw ValidationError("reserved_name: id " + std::to_string(id) + " is not reserved");
    return names[id];
}

void Vocab::push_token(const std::string& tok, int64_t line_for_errors) {
    const std::string where =
        line_for_errors > 0 ? " (line " + std::to_string(line_for_errors) + ")" : "";
    if (tok.empty()) throw ValidationError("vocab: empty token" + where);
    for (unsigned char c : tok)
        if (std::isspace(c))
            throw ValidationError("vocab: token '" + tok + "' contains whitespace" + where);
    for (int64_t r = 0; r < kNumReserved; ++r)
        if (tok == reserved_name(r))
            throw ValidationError("vocab: reserved token '" + tok + "' in token list" + where);
    if (ids_.count(tok))
        throw ValidationError("vocab: duplicate token '" + tok + "'" + where);
    ids_[tok] = kNumReserved + static_cast<int64_t>(tokens_.size());
    tokens_.push_back(tok);
}

Vocab Vocab::build(const std::vector<std::string>& texts, int64_t min_freq) {
    if (min_freq < 1) throw ValidationError("vocab: min_freq must be >= 1");
    // std::map keeps ties lexicographic without a second sort key pass
    std::map<std::string, int64_t> freq;
    for (const auto& text : texts)
        for (const auto& w : tokenize(text)) ++freq[w];
    if (freq.empty()) throw ValidationError("vocab: corpus has no tokens");

    std::vector<std::pair<std::string, int64_t>> entries(freq.begin(), freq.end());
    std::stable_sort(entries.begin(), entries.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });

    Vocab v;
    for (const auto& [tok, n] : entries)
        if (n >= min_freq) v.push_token(tok, 0);
    return v;
}

Vocab Vocab::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("vocab: cannot open '" + path + "'");
    Vocab v;
    std::string line;
    int64_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        v.push_token(line, lineno);
    }
    if (v.tokens_.empty()) throw ValidationError("vocab: '" + path + "' is empty");
    return v;
}

void Vocab::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw ValidationError("vocab: cannot write '" + path + "'");
    for (const auto& tok : tokens_) out << tok << '\n';
    if (!out) throw ValidationError("vocab: failed writing '" + path + "'");
}

int64_t Vocab::id_of(const std::string& word) const {
    auto it = ids_.find(word);
    return it == ids_.end() ? kUnkId : it->second;
}

const std::string& Vocab::token_of(int64_t id) const {
    if (id >= 0 && id < kNumReserved) {
        if (reserved_cache_.empty())
            for (int64_t r = 0; r < kNumReserved; ++r) reserved_cache_.push_back(reserved_name(r));
        return reserved_cache_[id];
    }
    const int64_t idx = id - kNumReserved;
    if (idx < 0 || idx >= static_cast<int64_t>(tokens_.size()))
        throw ValidationError("vocab: id " + std::to_string(id) + " out of range for size " +
                              std::to_string(size()));
    return tokens_[idx];
}

std::vector<int64_t> Vocab::encode(const std::string& text) const {
    std::vector<int64_t> ids;
    for (const auto& w : tokenize(text)) ids.push_back(id_of(w));
    return ids;
}

std::string Vocab::decode(const std::vector<int64_t>& ids) const {
    std::vector<std::string> words;
    words.reserve(ids.size());
    for (int64_t id : ids) words.push_back(token_of(id));
    return detokenize(words);
}

}  // namespace wr
