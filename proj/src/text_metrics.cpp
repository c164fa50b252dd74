#include "wr/eval.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

namespace wr {

double bleu1(const std::vector<int64_t>& hypothesis, const std::vector<int64_t>& reference) {
    if (reference.empty()) throw ValidationError("bleu1: empty reference");
    if (hypothesis.empty()) return 0.0;

    std::map<int64_t, int64_t> ref_counts;
    for (int64_t w : reference) ++ref_counts[w];

    std::map<int64_t, int64_t> hyp_counts;
    for (int64_t w : hypothesis) ++hyp_counts[w];

    int64_t clipped = 0;
    for (const auto& [w, c] : hyp_counts) {
        auto it = ref_counts.find(w);
        if (it != ref_counts.end()) clipped += std::min(c, it->second);
    }

    const double h = static_cast<double>(hypothesis.size());
    const double r = static_cast<double>(reference.size());
    const double precision = static_cast<double>(clipped) / h;
    const double brevity = h >= r ? 1.0 : std::exp(1.0 - r / h);
    return 100.0 * precision * brevity;
}

double repeated_ngram_rate(const std::vector<int64_t>& tokens, int n) {
    if (n < 1) throw ValidationError("repeated_ngram_rate: n must be >= 1");
    const int64_t windows = static_cast<int64_t>(tokens.size()) - n + 1;
    if (windows <= 0) return 0.0;
    const int64_t repeats =
        static_cast<int64_t>(detail::repeated_ngram_ends(tokens, n).size());
    return static_cast<double>(repeats) / static_cast<double>(windows);
}

double distinct_n(const std::vector<std::vector<int64_t>>& corpus, int n) {
    if (n < 1) throw ValidationError("distinct_n: n must be >= 1");
    if (corpus.empty()) throw ValidationError("distinct_n: empty corpus");

    std::set<std::vector<int64_t>> unique;
    int64_t total = 0;
    for (const auto& seq : corpus) {
        for (int64_t i = 0; i + n <= static_cast<int64_t>(seq.size()); ++i) {
            unique.insert(std::vector<int64_t>(seq.begin() + i, seq.begin() + i + n));
            ++total;
        }
    }
    if (total == 0) return 0.0;
    return static_cast<double>(unique.size()) / static_cast<double>(total);
}

nlohmann::json example_eval_to_json(const ExampleEval& e) {
    return nlohmann::json{{"context", e.context},
                          {"reference", e.reference},
                          {"hypothesis", e.hypothesis},
                          {"bleu1", e.bleu1},
                          {"repeated4_rate", e.repeated4_rate}};
}

std::string eval_summary_table(const EvalReport& r) {
    std::ostringstream out;
    out.setf(std::ios::fixed);
    out.precision(4);
    out << "metric                 value\n"
        << "---------------------  --------\n"
        << "examples               " << r.n << "\n"
        << "mean bleu1             " << r.mean_bleu1 << "\n"
        << "mean repeated-4 rate   " << r.mean_repeated4_rate << "\n"
        << "distinct-1             " << r.distinct1 << "\n"
        << "distinct-2             " << r.distinct2 << "\n"
        << "preference accuracy    " << r.preference_accuracy << "\n";
    return out.str();
}

}  // namespace wr
