#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "wr/error.hpp"
#include "wr/rng.hpp"
#include "wr/vocab.hpp"

// Dataset types and loaders. Token sequences here are raw word ids; the
// [BOS]/[EOS] framing for decoder targets is added by the training layer.

namespace wr {

// one sentence of context and the sentence that follows it
struct PretrainPair {
    std::vector<int64_t> context;
    std::vector<int64_t> continuation;
};

struct Triple {
    std::vector<int64_t> context;  // 1..5 sentences, flattened
    std::vector<int64_t> positive;
    std::vector<std::vector<int64_t>> negatives;
    std::string source_id;
};

// text-side mirror of Triple, used by generators and file I/O
struct RawTriple {
    std::vector<std::string> context_sentences;
    std::string positive;
    std::vector<std::string> negatives;
    std::string source_id;
};

struct SyntheticData {
    std::vector<RawTriple> triples;
    std::vector<std::string> stories;  // one blank-line-separated block each
};

// stories -> blocks of sentences; one story per blank-line-separated block
std::vector<std::vector<std::string>> read_story_blocks(const std::string& path);

// splits a story into sentences on {. ! ?} followed by whitespace
std::vector<std::string> split_sentences(const std::string& story);

// n sentences -> n-1 overlapping (sentence, next sentence) pairs; pairs
// with a side longer than max_side_len tokens are dropped and counted
std::vector<PretrainPair> split_into_pairs(const std::vector<std::string>& sentences,
                                           const Vocab& vocab, int64_t max_side_len,
                                           int64_t* dropped);

// full pretraining load: story blocks -> token pairs
std::vector<PretrainPair> load_pretrain_pairs(const std::string& path, const Vocab& vocab,
                                              int64_t max_side_len, int64_t* dropped);

// line-delimited JSON triples; validates every record, errors carry line numbers
std::vector<RawTriple> load_raw_triples(const std::string& path);
void save_raw_triples(const std::string& path, const std::vector<RawTriple>& triples);

std::vector<Triple> tokenize_triples(const std::vector<RawTriple>& raw, const Vocab& vocab);

// gives each triple m negatives sampled uniformly without replacement from
// positives of other source_ids
void fabricate_negatives(std::vector<RawTriple>& triples, int64_t m, Rng& rng);

// trims sequences to a model window: contexts keep their final max_len
// tokens, continuations their first max_len - 2 so the [BOS]/[EOS] frame
// still fits; returns how many sequences were cut
int64_t fit_triples_to_window(std::vector<Triple>& triples, int64_t max_len);

// template-generated stories over disjoint topic lexicons; positives share
// topic words with their context, negatives never do
SyntheticData gen_synthetic(int64_t topics, int64_t stories_per_topic, Rng& rng);

// keyword list per generator topic, index-aligned with the topic order used
// by gen_synthetic; topic t's source_ids start with topic_names()[t] + "_"
const std::vector<std::string>& topic_names();
const std::vector<std::vector<std::string>>& topic_keywords();

// right-padded id matrix plus 0/1 mask, both batch_size x max_len
struct PaddedBatch {
    std::vector<std::vector<int64_t>> rows;
    std::vector<std::vector<uint8_t>> mask;
};

PaddedBatch pad_batch(const std::vector<std::vector<int64_t>>& seqs, int64_t pad_id);

}  // namespace wr
