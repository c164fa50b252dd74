#pragma once

#include <cstdint>
#include <set>
#include <vector>

#include "wr/data.hpp"
#include "wr/decoding.hpp"
#include "wr/error.hpp"
#include "wr/model.hpp"
#include "wr/ops.hpp"
#include "wr/vocab.hpp"

// Training objectives. Scalars come back as graph tensors so callers can
// run backward on any component; item() extracts plain numbers.

namespace wr {

struct WRLossConfig {
    double lambda = 1.0;  // weight on the cross-entropy term
    double margin = 1.0;  // the triplet hinge hard-codes 1; kept visible, not tunable
    DecodeConfig decode;  // settings for the greedy decode that builds the anchor

    void validate() const {
        if (lambda < 0.0) throw ValidationError("wr loss config: lambda must be nonnegative");
        if (margin != 1.0) throw ValidationError("wr loss config: margin is fixed at 1.0");
        decode.validate();
    }
};

template <typename T>
struct LossBreakdown {
    Tensor<T> total;
    Tensor<T> ce;
    Tensor<T> triplet;
    Tensor<T> d_pos;
    Tensor<T> d_neg;
    std::vector<int64_t> anchor_tokens;  // the decoded Ŷ actually used
};

// mean negative log-likelihood over unmasked positions; logits row i scores
// targets[i]
template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, const std::vector<int64_t>& targets,
                        const std::vector<uint8_t>& pad_mask) {
    if (logits.rank() != 2) throw ValidationError("cross_entropy: logits must be 2-d");
    const int64_t t = logits.dim(0);
    if (static_cast<int64_t>(targets.size()) != t || static_cast<int64_t>(pad_mask.size()) != t)
        throw ValidationError("cross_entropy: targets/mask length must equal logits rows");
    int64_t real = 0;
    std::vector<T> maskv(t);
    for (int64_t i = 0; i < t; ++i) {
        maskv[i] = pad_mask[i] ? T(1) : T(0);
        real += pad_mask[i] ? 1 : 0;
    }
    if (real == 0) throw ValidationError("cross_entropy: every position is masked");

    Tensor<T> lp = log_softmax(logits, -1);
    Tensor<T> picked = pick(lp, targets);
    Tensor<T> masked = mul(picked, Tensor<T>::from({t}, std::move(maskv)));
    return neg(div(sum(masked), static_cast<T>(real)));
}

template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, const std::vector<int64_t>& targets) {
    return cross_entropy(logits, targets,
                         std::vector<uint8_t>(targets.size(), uint8_t(1)));
}

// d = (|x||y| - x.y) / (2 |x||y|), the (1 - cos)/2 distance in [0,1]
template <typename T>
Tensor<T> cosine_distance(const Tensor<T>& x, const Tensor<T>& y) {
    if (x.rank() != 1 || y.rank() != 1 || x.dim(0) != y.dim(0))
        throw ValidationError("cosine_distance: inputs must be equal-length vectors");
    Tensor<T> nx2 = sum(mul(x, x));
    Tensor<T> ny2 = sum(mul(y, y));
    if (nx2.item() == T(0) || ny2.item() == T(0))
        throw ComputeError("cosine_distance: zero-norm representation");
    Tensor<T> norms = mul(sqrt(nx2), sqrt(ny2));
    Tensor<T> dot = sum(mul(x, y));
    return div(sub(norms, dot), mul(norms, T(2)));
}

// max(0, margin + d(a,pos) - d(a,neg)); subgradient at the hinge is 0
template <typename T>
Tensor<T> triplet_cos(const Tensor<T>& a, const Tensor<T>& pos, const Tensor<T>& neg,
                      T margin = T(1)) {
    Tensor<T> d_pos = cosine_distance(a, pos);
    Tensor<T> d_neg = cosine_distance(a, neg);
    return relu(add(sub(d_pos, d_neg), margin));
}

namespace detail {

// end positions i (0-based) whose n-gram y[i-n+1..i] already occurred as an
// earlier window
inline std::vector<int64_t> repeated_ngram_ends(const std::vector<int64_t>& y, int n) {
    std::vector<int64_t> ends;
    std::set<std::vector<int64_t>> seen;
    for (int64_t i = n - 1; i < static_cast<int64_t>(y.size()); ++i) {
        std::vector<int64_t> gram(y.begin() + (i - n + 1), y.begin() + i + 1);
        if (!seen.insert(gram).second) ends.push_back(i);
    }
    return ends;
}

}  // namespace detail

// sequence-level unlikelihood: mean of -log(1 - p(y_i)) over positions whose
// trailing n-gram is a repeat; 0 when nothing repeats
template <typename T>
Tensor<T> ul_loss(const Tensor<T>& logits, const std::vector<int64_t>& y_tokens, int n = 4) {
    if (n < 1) throw ValidationError("ul_loss: n must be >= 1");
    if (logits.rank() != 2 || logits.dim(0) != static_cast<int64_t>(y_tokens.size()))
        throw ValidationError("ul_loss: logits rows must equal target length");

    std::vector<int64_t> penalized = detail::repeated_ngram_ends(y_tokens, n);
    if (penalized.empty()) return Tensor<T>::scalar(T(0));

    std::vector<int64_t> their_targets;
    for (int64_t i : penalized) their_targets.push_back(y_tokens[i]);

    Tensor<T> probs = softmax(logits, -1);
    Tensor<T> p = pick(rows(probs, penalized), their_targets);
    Tensor<T> one_minus = sub(T(1), clamp_max(p, T(1) - T(1e-7)));
    return neg(mean(log(one_minus)));
}

// variant with unlikely candidates taken from a negative example: every
// position penalizes every distinct non-special negative token
template <typename T>
Tensor<T> ul_loss_negative_tokens(const Tensor<T>& logits, const std::vector<int64_t>& y_tokens,
                                  const std::vector<int64_t>& negative_tokens) {
    if (logits.rank() != 2 || logits.dim(0) != static_cast<int64_t>(y_tokens.size()))
        throw ValidationError("ul_loss: logits rows must equal target length");
    std::set<int64_t> cands;
    for (int64_t c : negative_tokens)
        if (!is_special_id(c)) cands.insert(c);
    if (cands.empty()) return Tensor<T>::scalar(T(0));

    const int64_t t = logits.dim(0);
    Tensor<T> probs = softmax(logits, -1);
    Tensor<T> acc = Tensor<T>::scalar(T(0));
    for (int64_t c : cands) {
        Tensor<T> p = pick(probs, std::vector<int64_t>(t, c));
        acc = add(acc, sum(log(sub(T(1), clamp_max(p, T(1) - T(1e-7))))));
    }
    return neg(div(acc, static_cast<T>(t * static_cast<int64_t>(cands.size()))));
}

// teacher-forced mean NLL of y_words followed by [EOS]; the [BOS] row of
// the shifted decoder pass is excluded from the mean
template <typename T>
Tensor<T> sequence_ce(Model<T>& model, const Tensor<T>& memory,
                      const std::vector<int64_t>& y_words) {
    if (y_words.empty()) throw ValidationError("sequence_ce: empty target sequence");
    std::vector<int64_t> y_full;
    y_full.reserve(y_words.size() + 2);
    y_full.push_back(kBosId);
    y_full.insert(y_full.end(), y_words.begin(), y_words.end());
    y_full.push_back(kEosId);

    Tensor<T> logits = model.decode_teacher_forced(memory, y_full);
    std::vector<uint8_t> mask(y_full.size(), uint8_t(1));
    mask[0] = 0;
    return cross_entropy(logits, y_full, mask);
}

// Deterministic core of the combined loss: the anchor token sequence and
// the chosen negative are fixed by the caller, so the value is a smooth
// function of the parameters and finite differences apply.
template <typename T>
LossBreakdown<T> wr_loss_with_anchor(Model<T>& model, const std::vector<int64_t>& context,
                                     const std::vector<int64_t>& positive,
                                     const std::vector<int64_t>& negative,
                                     const std::vector<int64_t>& anchor_tokens,
                                     const WRLossConfig& cfg) {
    cfg.validate();
    if (positive.empty()) throw ValidationError("wr_loss: empty positive continuation");
    if (negative.empty()) throw ValidationError("wr_loss: empty negative continuation");
    if (anchor_tokens.empty()) throw ValidationError("wr_loss: empty anchor sequence");

    Tensor<T> memory = model.encode(context);
    Tensor<T> ce = sequence_ce(model, memory, positive);

    Tensor<T> a = model.represent_with_memory(memory, anchor_tokens, kClsId);
    Tensor<T> pos = model.represent_with_memory(memory, positive, kClsId);
    Tensor<T> neg_rep = model.represent_with_memory(memory, negative, kClsId);

    LossBreakdown<T> out;
    out.d_pos = cosine_distance(a, pos);
    out.d_neg = cosine_distance(a, neg_rep);
    out.triplet = relu(add(sub(out.d_pos, out.d_neg), static_cast<T>(cfg.margin)));
    out.ce = ce;
    out.total = add(mul(ce, static_cast<T>(cfg.lambda)), out.triplet);
    out.anchor_tokens = anchor_tokens;
    return out;
}

// Full combined loss for one triple. The greedy decode that produces the
// anchor is forward-only; gradient reaches the anchor branch through the
// representation pass that re-reads the decoded tokens. The single rng draw
// picks the negative.
template <typename T>
LossBreakdown<T> wr_loss(Model<T>& model, const Triple& triple, Rng& rng,
                         const WRLossConfig& cfg) {
    cfg.validate();
    if (triple.negatives.empty()) throw ValidationError("wr_loss: triple has no negatives");

    const size_t pick = static_cast<size_t>(rng.below(triple.negatives.size()));

    std::vector<int64_t> anchor = greedy_decode(model, triple.context, cfg.decode);
    if (!anchor.empty() && anchor.back() == cfg.decode.eos_id) anchor.pop_back();
    // a model that emits [EOS] immediately still needs a nonempty anchor
    if (anchor.empty()) anchor.push_back(cfg.decode.eos_id);

    return wr_loss_with_anchor(model, triple.context, triple.positive, triple.negatives[pick],
                               anchor, cfg);
}

}  // namespace wr
