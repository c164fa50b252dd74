#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "wr/decoding.hpp"
#include "wr/losses.hpp"
#include "wr/model.hpp"

using namespace wr;

namespace {

ModelConfig tiny_config() {
    ModelConfig cfg;
    cfg.vocab_size = 30;
    cfg.d_model = 16;
    cfg.n_heads = 2;
    cfg.n_enc_layers = 1;
    cfg.n_dec_layers = 1;
    cfg.d_ffn = 32;
    cfg.max_len = 32;
    cfg.dropout = 0.1;
    cfg.seed = 11;
    return cfg;
}

}  // namespace

TEST_CASE("penalize leaves uncounted tokens alone and divides counted ones") {
    std::vector<double> p{0.5, 0.3, 0.2};

    auto plain = penalize(p, {0, 0, 0}, 5.0);
    CHECK(plain == p);

    // k=5: one prior emission divides by 6, two divide by 11
    auto once = penalize(p, {1, 0, 0}, 5.0);
    CHECK(once[0] == doctest::Approx(0.5 / 6.0).epsilon(1e-12));
    CHECK(once[1] == 0.3);

    auto twice = penalize(p, {2, 0, 0}, 5.0);
    CHECK(twice[0] == doctest::Approx(0.5 / 11.0).epsilon(1e-12));
}

TEST_CASE("penalize validates its inputs") {
    std::vector<double> p{0.5, 0.5};
    CHECK_THROWS_AS(penalize(p, {0, 0, 0}, 5.0), ValidationError);
    CHECK_THROWS_AS(penalize(p, {0, -1}, 5.0), ValidationError);
    CHECK_THROWS_AS(penalize(p, {0, 0}, -0.5), ValidationError);
}

TEST_CASE("penalized score strictly decreases with count for k > 0") {
    std::vector<double> p{0.4};
    double prev = penalize(p, {0}, 5.0)[0];
    for (int64_t c = 1; c <= 6; ++c) {
        double cur = penalize(p, {c}, 5.0)[0];
        CHECK(cur < prev);
        prev = cur;
    }
}

TEST_CASE("penalize keeps the argmax under positive rescaling") {
    Rng rng(7);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> p(12);
        std::vector<int64_t> counts(12);
        for (auto& v : p) v = rng.uniform(0.01, 1.0);
        for (auto& c : counts) c = static_cast<int64_t>(rng.below(4));
        const double scale = rng.uniform(0.1, 9.0);

        std::vector<double> scaled = p;
        for (auto& v : scaled) v *= scale;

        auto a = penalize(p, counts, 5.0);
        auto b = penalize(scaled, counts, 5.0);
        auto am = std::max_element(a.begin(), a.end()) - a.begin();
        auto bm = std::max_element(b.begin(), b.end()) - b.begin();
        CHECK(am == bm);
    }
}

TEST_CASE("repeat emission needs p(top)/6 to stay above the runner-up") {
    // k=5 after one emission of token 0
    std::vector<int64_t> counts{1, 0};

    // 0.9/6 = 0.15 beats 0.05: token 0 repeats
    auto keep = penalize(std::vector<double>{0.9, 0.05}, counts, 5.0);
    CHECK(argmax_skip_unk(std::vector<double>{keep[0], keep[1], 0, 0, 0}) == 0);

    // 0.9/6 = 0.15 loses to 0.2: runner-up takes over
    auto flip = penalize(std::vector<double>{0.9, 0.2}, counts, 5.0);
    CHECK(argmax_skip_unk(std::vector<double>{flip[0], flip[1], 0, 0, 0}) == 1);
}

TEST_CASE("argmax skips [UNK] and breaks exact ties toward the lowest id") {
    std::vector<double> scores{0.1, 0.5, 0.5, 0.2, 0.9, 0.5};
    // id 4 is [UNK]; the 0.5 tie resolves to id 1
    CHECK(argmax_skip_unk(scores) == 1);

    std::vector<double> unk_top{0.0, 0.0, 0.0, 0.0, 1.0, 0.3};
    CHECK(argmax_skip_unk(unk_top) == 5);

    CHECK_THROWS_AS(argmax_skip_unk(std::vector<double>{1.0, 2.0}), ValidationError);
}

TEST_CASE("decode config validation") {
    DecodeConfig bad_k;
    bad_k.k = -1.0;
    CHECK_THROWS_AS(bad_k.validate(), ValidationError);

    DecodeConfig bad_len;
    bad_len.max_len = 0;
    CHECK_THROWS_AS(bad_len.validate(), ValidationError);
}

TEST_CASE("greedy decode output respects the structural contract") {
    Model<double> model(tiny_config());
    model.set_training(false);
    std::vector<int64_t> x{5, 9, 14, 7};

    DecodeConfig cfg;
    cfg.max_len = 12;
    auto out = greedy_decode(model, x, cfg);

    REQUIRE(!out.empty());
    CHECK(static_cast<int64_t>(out.size()) <= cfg.max_len);
    for (size_t i = 0; i < out.size(); ++i) {
        CHECK(out[i] >= 0);
        CHECK(out[i] < tiny_config().vocab_size);
        CHECK(out[i] != kUnkId);
        // [EOS] may appear only as the final token
        if (out[i] == kEosId) CHECK(i + 1 == out.size());
    }
}

TEST_CASE("greedy decode is deterministic and ignores training mode") {
    Model<double> model(tiny_config());
    std::vector<int64_t> x{3, 8, 21};
    DecodeConfig cfg;

    model.set_training(false);
    auto a = greedy_decode(model, x, cfg);
    auto b = greedy_decode(model, x, cfg);
    CHECK(a == b);

    // dropout is forced off inside the decode loop
    model.set_training(true);
    auto c = greedy_decode(model, x, cfg);
    CHECK(a == c);
    CHECK(model.training());
}

TEST_CASE("k == 0 reduces to plain greedy argmax over next-token probabilities") {
    Model<double> model(tiny_config());
    model.set_training(false);
    std::vector<int64_t> x{12, 4, 19, 2, 6};

    DecodeConfig cfg;
    cfg.k = 0.0;
    cfg.max_len = 10;
    auto out = greedy_decode(model, x, cfg);

    // replay the loop with no penalty machinery at all
    Tape<double>::Pause pause;
    Tensor<double> memory = model.encode(x);
    std::vector<int64_t> prefix{kBosId};
    std::vector<int64_t> expect;
    while (static_cast<int64_t>(expect.size()) < cfg.max_len) {
        Tensor<double> probs = softmax(model.next_logits(memory, prefix), -1);
        int64_t best = argmax_skip_unk(probs.value());
        expect.push_back(best);
        if (best == kEosId) break;
        prefix.push_back(best);
    }
    CHECK(out == expect);
}

TEST_CASE("decode length is capped by what the model can hold") {
    ModelConfig mc = tiny_config();
    mc.max_len = 12;
    Model<double> model(mc);
    model.set_training(false);

    DecodeConfig cfg;
    cfg.max_len = 128;  // far beyond the model window
    auto out = greedy_decode(model, std::vector<int64_t>{5, 6}, cfg);
    CHECK(static_cast<int64_t>(out.size()) <= mc.max_len - 2);
}

TEST_CASE("duplication penalty never increases the worst unigram count") {
    // random-init models drift toward repetitive argmax loops often enough
    // for a paired comparison to be meaningful
    int64_t worse = 0;
    const int trials = 12;
    for (int t = 0; t < trials; ++t) {
        ModelConfig mc = tiny_config();
        mc.seed = 100 + t;
        Model<double> model(mc);
        model.set_training(false);
        std::vector<int64_t> x{5 + t % 7, 9, static_cast<int64_t>(6 + t % 11)};

        DecodeConfig plain;
        plain.k = 0.0;
        plain.max_len = 16;
        DecodeConfig pen = plain;
        pen.k = 5.0;

        auto max_count = [&](const std::vector<int64_t>& seq) {
            std::vector<int64_t> counts(mc.vocab_size, 0);
            int64_t best = 0;
            for (int64_t id : seq)
                if (!is_special_id(id)) best = std::max(best, ++counts[id]);
            return best;
        };
        if (max_count(greedy_decode(model, x, pen)) > max_count(greedy_decode(model, x, plain)))
            ++worse;
    }
    CHECK(worse <= trials / 10);
}
