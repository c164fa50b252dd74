#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "wr/error.hpp"

// Word-level vocabulary with a fixed reserved block. Reserved ids never
// move; file format is one non-reserved token per line, so
// id = line_number - 1 + kNumReserved.

namespace wr {

inline constexpr int64_t kPadId = 0;
inline constexpr int64_t kBosId = 1;
inline constexpr int64_t kEosId = 2;
inline constexpr int64_t kClsId = 3;
inline constexpr int64_t kUnkId = 4;
inline constexpr int64_t kNumReserved = 5;

inline bool is_special_id(int64_t id) { return id >= 0 && id < kNumReserved; }

// lowercase, punctuation characters split off as single-char tokens,
// whitespace separates words
std::vector<std::string> tokenize(const std::string& text);

// space-join; inverse of tokenize for normalized in-vocab text
std::string detokenize(const std::vector<std::string>& words);

class Vocab {
public:
    static const char* reserved_name(int64_t id);

    // tokens ordered by (frequency desc, lexicographic asc); tokens below
    // min_freq are dropped and will map to [UNK]
    static Vocab build(const std::vector<std::string>& texts, int64_t min_freq);

    static Vocab load(const std::string& path);
    void save(const std::string& path) const;

    int64_t size() const { return kNumReserved + static_cast<int64_t>(tokens_.size()); }

    // [UNK] for out-of-vocabulary words
    int64_t id_of(const std::string& word) const;
    const std::string& token_of(int64_t id) const;

    std::vector<int64_t> encode(const std::string& text) const;
    std::string decode(const std::vector<int64_t>& ids) const;

private:
    void push_token(const std::string& tok, int64_t line_for_errors);

    std::vector<std::string> tokens_;
    std::unordered_map<std::string, int64_t> ids_;
    mutable std::vector<std::string> reserved_cache_;
};

}  // namespace wr
