#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "wr/data.hpp"
#include "wr/decoding.hpp"
#include "wr/error.hpp"
#include "wr/losses.hpp"
#include "wr/model.hpp"
#include "wr/vocab.hpp"

// Automatic metrics over decoded continuations plus the representation
// preference probe that stands in for human pairwise judgments.

namespace wr {

// clipped unigram precision times brevity penalty, scaled to [0,100]
double bleu1(const std::vector<int64_t>& hypothesis, const std::vector<int64_t>& reference);

// fraction of n-gram windows whose gram already occurred earlier; 0 when
// the sequence holds fewer than n tokens
double repeated_ngram_rate(const std::vector<int64_t>& tokens, int n = 4);

// unique n-grams over total n-grams across the whole corpus; 0 when no
// sequence is long enough to hold a window
double distinct_n(const std::vector<std::vector<int64_t>>& corpus, int n);

struct ExampleEval {
    std::string context;
    std::string reference;
    std::string hypothesis;
    double bleu1{0.0};
    double repeated4_rate{0.0};
};

struct EvalReport {
    std::vector<ExampleEval> examples;
    double mean_bleu1{0.0};
    double mean_repeated4_rate{0.0};
    double distinct1{0.0};
    double distinct2{0.0};
    double preference_accuracy{0.0};
    int64_t n{0};
};

nlohmann::json example_eval_to_json(const ExampleEval& e);
std::string eval_summary_table(const EvalReport& r);

// strips a trailing [EOS] so metrics see only the emitted words
inline std::vector<int64_t> continuation_tokens(std::vector<int64_t> decoded, int64_t eos_id) {
    if (!decoded.empty() && decoded.back() == eos_id) decoded.pop_back();
    return decoded;
}

// fraction of triples whose anchor sits strictly closer to the positive
// than to every negative; distance ties count against the model
template <typename T>
double preference_accuracy(Model<T>& model, const std::vector<Triple>& triples,
                           const DecodeConfig& cfg = {}) {
    if (triples.empty()) throw ValidationError("preference_accuracy: empty dataset");
    cfg.validate();

    const bool was_training = model.training();
    model.set_training(false);
    typename Tape<T>::Pause pause;

    int64_t wins = 0;
    for (const auto& t : triples) {
        if (t.negatives.empty())
            throw ValidationError("preference_accuracy: triple from source '" + t.source_id +
                                  "' has no negatives");
        std::vector<int64_t> anchor =
            continuation_tokens(greedy_decode(model, t.context, cfg), cfg.eos_id);
        if (anchor.empty()) anchor.push_back(cfg.eos_id);

        Tensor<T> memory = model.encode(t.context);
        Tensor<T> a = model.represent_with_memory(memory, anchor, kClsId);
        Tensor<T> pos = model.represent_with_memory(memory, t.positive, kClsId);
        const T d_pos = cosine_distance(a, pos).item();

        bool all_beaten = true;
        for (const auto& n : t.negatives) {
            Tensor<T> neg = model.represent_with_memory(memory, n, kClsId);
            if (!(d_pos < cosine_distance(a, neg).item())) {
                all_beaten = false;
                break;
            }
        }
        if (all_beaten) ++wins;
    }

    model.set_training(was_training);
    return static_cast<double>(wins) / static_cast<double>(triples.size());
}

// decodes every context and scores the hypotheses against the positives
template <typename T>
EvalReport evaluate_model(Model<T>& model, const std::vector<Triple>& triples,
                          const Vocab& vocab, const DecodeConfig& cfg = {}) {
    if (triples.empty()) throw ValidationError("evaluate_model: empty dataset");
    cfg.validate();

    const bool was_training = model.training();
    model.set_training(false);

    EvalReport report;
    report.n = static_cast<int64_t>(triples.size());
    std::vector<std::vector<int64_t>> hypotheses;
    double bleu_sum = 0.0, rep_sum = 0.0;
    for (const auto& t : triples) {
        std::vector<int64_t> hyp =
            continuation_tokens(greedy_decode(model, t.context, cfg), cfg.eos_id);
        hypotheses.push_back(hyp);

        ExampleEval e;
        e.context = vocab.decode(t.context);
        e.reference = vocab.decode(t.positive);
        e.hypothesis = vocab.decode(hyp);
        e.bleu1 = bleu1(hyp, t.positive);
        e.repeated4_rate = repeated_ngram_rate(hyp, 4);
        bleu_sum += e.bleu1;
        rep_sum += e.repeated4_rate;
        report.examples.push_back(std::move(e));
    }

    report.mean_bleu1 = bleu_sum / static_cast<double>(triples.size());
    report.mean_repeated4_rate = rep_sum / static_cast<double>(triples.size());
    report.distinct1 = distinct_n(hypotheses, 1);
    report.distinct2 = distinct_n(hypotheses, 2);
    report.preference_accuracy = preference_accuracy(model, triples, cfg);

    model.set_training(was_training);
    return report;
}

}  // namespace wr
