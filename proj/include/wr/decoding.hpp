#pragma once

#include <cstdint>
#include <vector>

#include "wr/error.hpp"
#include "wr/model.hpp"
#include "wr/ops.hpp"
#include "wr/vocab.hpp"

// Greedy decoding with a duplication-count penalty: candidate scores are
// p(word) / (1 + k * count_word), never renormalized (argmax is scale-free).

namespace wr {

struct DecodeConfig {
    double k = 5.0;       // 0 disables the penalty
    int64_t max_len = 64; // emitted continuation length cap, [EOS] included
    int64_t eos_id = kEosId;

    void validate() const {
        if (k < 0.0) throw ValidationError("decode config: k must be nonnegative");
        if (max_len <= 0) throw ValidationError("decode config: max_len must be positive");
    }
};

template <typename T>
std::vector<T> penalize(const std::vector<T>& p, const std::vector<int64_t>& counts, double k) {
    if (p.size() != counts.size())
        throw ValidationError("penalize: probability and count vectors differ in length");
    if (k < 0.0) throw ValidationError("penalize: k must be nonnegative");
    std::vector<T> scores(p.size());
    for (size_t i = 0; i < p.size(); ++i) {
        if (counts[i] < 0) throw ValidationError("penalize: negative count at id " +
                                                 std::to_string(i));
        scores[i] = static_cast<T>(p[i] / (1.0 + k * static_cast<double>(counts[i])));
    }
    return scores;
}

// argmax over scores with [UNK] barred; exact ties go to the lowest id
template <typename T>
int64_t argmax_skip_unk(const std::vector<T>& scores) {
    if (scores.size() <= static_cast<size_t>(kUnkId))
        throw ValidationError("argmax_skip_unk: score vector smaller than reserved block");
    int64_t best = -1;
    for (int64_t id = 0; id < static_cast<int64_t>(scores.size()); ++id) {
        if (id == kUnkId) continue;
        if (best < 0 || scores[id] > scores[best]) best = id;
    }
    return best;
}

// Emits a continuation for x_tokens, starting from a [BOS] prefix. Counts
// cover only emitted non-special tokens; [UNK] is never emitted; ties go to
// the lowest id. The result carries eos_id at most once, as its final token.
template <typename T>
std::vector<int64_t> greedy_decode(Model<T>& model, const std::vector<int64_t>& x_tokens,
                                   const DecodeConfig& cfg) {
    cfg.validate();
    typename Tape<T>::Pause pause;

    // decoding is deterministic: dropout stays off even mid-training
    struct EvalGuard {
        Model<T>& m;
        bool was;
        explicit EvalGuard(Model<T>& model) : m(model), was(model.training()) {
            m.set_training(false);
        }
        ~EvalGuard() { m.set_training(was); }
    } eval_guard(model);

    // the model caps sequences at max_len; the prefix holds [BOS] plus the
    // continuation, and next_logits appends one placeholder on top
    const int64_t limit =
        std::min<int64_t>(cfg.max_len, model.config().max_len - 2);
    if (limit <= 0) throw ValidationError("greedy_decode: model max_len leaves no room");

    Tensor<T> memory = model.encode(x_tokens);
    std::vector<int64_t> prefix{kBosId};
    std::vector<int64_t> counts(model.config().vocab_size, 0);
    std::vector<int64_t> out;

    while (static_cast<int64_t>(out.size()) < limit) {
        Tensor<T> logits = model.next_logits(memory, prefix);
        Tensor<T> probs = softmax(logits, -1);
        std::vector<T> scores = penalize(probs.value(), counts, cfg.k);
        const int64_t best = argmax_skip_unk(scores);

        out.push_back(best);
        if (best == cfg.eos_id) break;
        if (!is_special_id(best)) ++counts[best];
        prefix.push_back(best);
    }
    return out;
}

}  // namespace wr
