#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "wr/checkpoint.hpp"
#include "wr/data.hpp"
#include "wr/training.hpp"

using namespace wr;

namespace {

ModelConfig train_config() {
    ModelConfig cfg;
    cfg.vocab_size = 24;
    cfg.d_model = 16;
    cfg.n_heads = 2;
    cfg.n_enc_layers = 1;
    cfg.n_dec_layers = 1;
    cfg.d_ffn = 32;
    cfg.max_len = 24;
    cfg.dropout = 0.1;
    cfg.seed = 5;
    return cfg;
}

std::vector<PretrainPair> toy_pairs() {
    std::vector<PretrainPair> pairs;
    pairs.push_back({{5, 6, 7}, {8, 9}});
    pairs.push_back({{10, 11}, {12, 13, 14}});
    pairs.push_back({{15, 16, 17, 18}, {19}});
    pairs.push_back({{20, 21}, {22, 23}});
    return pairs;
}

std::vector<Triple> toy_triples() {
    std::vector<Triple> ts;
    Triple a;
    a.context = {5, 6, 7};
    a.positive = {8, 9};
    a.negatives = {{12, 13}, {20, 21}};
    a.source_id = "a";
    Triple b;
    b.context = {10, 11, 12};
    b.positive = {14, 15};
    b.negatives = {{8, 9}};
    b.source_id = "b";
    ts.push_back(a);
    ts.push_back(b);
    return ts;
}

std::string tmp_path(const std::string& name) {
    return std::string("/tmp/wrt_train_test_") + name;
}

}  // namespace

TEST_CASE("train config validation catches bad fields and stage mixups") {
    TrainConfig cfg;
    cfg.lr = -1.0;
    CHECK_THROWS_AS(cfg.validate(), ValidationError);

    TrainConfig batch;
    batch.batch_size = 0;
    CHECK_THROWS_AS(batch.validate(), ValidationError);

    TrainConfig ul;
    ul.stage = Stage::ul;
    ul.ul_n = 0;
    CHECK_THROWS_AS(ul.validate(), ValidationError);

    CHECK(stage_from("wr") == Stage::wr);
    CHECK_THROWS_AS(stage_from("nonsense"), ValidationError);

    Model<double> model(train_config());
    TrainConfig wrong;
    wrong.stage = Stage::wr;
    CHECK_THROWS_AS(pretrain(wrong, toy_pairs(), model), ValidationError);
    TrainConfig pre;
    pre.stage = Stage::pretrain;
    CHECK_THROWS_AS(finetune_wr(pre, toy_triples(), model), ValidationError);
    CHECK_THROWS_AS(finetune_ul(pre, toy_triples(), model), ValidationError);
}

TEST_CASE("epoch order is a seed-determined permutation") {
    auto a = detail::epoch_order(7, 0, 10);
    auto b = detail::epoch_order(7, 0, 10);
    CHECK(a == b);

    std::vector<size_t> sorted = a;
    std::sort(sorted.begin(), sorted.end());
    for (size_t i = 0; i < sorted.size(); ++i) CHECK(sorted[i] == i);

    CHECK(detail::epoch_order(7, 1, 10) != a);
    CHECK(detail::epoch_order(8, 0, 10) != a);
}

TEST_CASE("global norm clipping rescales exactly to the bound") {
    Tensor<double> p1 = Tensor<double>::param({3}, {1.0, 2.0, 2.0});
    Tensor<double> p2 = Tensor<double>::param({2}, {4.0, 8.0});
    std::vector<std::pair<std::string, Tensor<double>>> params{{"p1", p1}, {"p2", p2}};

    p1.grad() = {3.0, 0.0, 4.0};  // norm 5 on its own
    p2.grad() = {0.0, 12.0};      // total norm sqrt(25 + 144) = 13

    const double norm = clip_global_norm(params, 1.0);
    CHECK(norm == doctest::Approx(13.0).epsilon(1e-12));

    double after = 0.0;
    for (const auto& [name, t] : params)
        for (double g : t.grad()) after += g * g;
    CHECK(std::sqrt(after) == doctest::Approx(1.0).epsilon(1e-9));

    // under the bound nothing moves
    p1.grad() = {0.01, 0.0, 0.0};
    p2.grad() = {0.0, 0.02};
    clip_global_norm(params, 1.0);
    CHECK(p1.grad()[0] == 0.01);
    CHECK(p2.grad()[1] == 0.02);
}

TEST_CASE("one optimizer step matches the closed form for fresh moments") {
    Tensor<double> w = Tensor<double>::param({2}, {0.5, -0.25});
    std::vector<std::pair<std::string, Tensor<double>>> params{{"w", w}};
    Adam<double> opt(params, 0.1);

    w.grad() = {1.0, -2.0};
    opt.step();
    // at t=1 bias correction cancels the moment decay, so the update is
    // lr * g / (|g| + eps), one signed learning-rate step
    CHECK(w.value()[0] == doctest::Approx(0.5 - 0.1).epsilon(1e-6));
    CHECK(w.value()[1] == doctest::Approx(-0.25 + 0.1).epsilon(1e-6));
    CHECK(opt.state().t == 1);
}

TEST_CASE("a zero learning rate leaves parameters untouched") {
    Model<double> model(train_config());
    std::vector<double> before = model.parameters()[0].second.value();

    TrainConfig cfg;
    cfg.stage = Stage::pretrain;
    cfg.lr = 0.0;
    cfg.batch_size = 2;
    cfg.max_steps = 3;
    cfg.seed = 1;
    pretrain(cfg, toy_pairs(), model);

    for (const auto& [name, t] : model.parameters()) (void)name;
    CHECK(model.parameters()[0].second.value() == before);
}

TEST_CASE("pretraining is deterministic and drives the loss down") {
    TrainConfig cfg;
    cfg.stage = Stage::pretrain;
    cfg.batch_size = 4;
    cfg.max_steps = 60;
    cfg.lr = 3e-3;
    cfg.seed = 2;

    Model<double> m1(train_config());
    std::vector<StepRecord> log1;
    pretrain(cfg, toy_pairs(), m1, &log1);

    Model<double> m2(train_config());
    std::vector<StepRecord> log2;
    pretrain(cfg, toy_pairs(), m2, &log2);

    REQUIRE(log1.size() == 60);
    REQUIRE(log2.size() == 60);
    for (size_t i = 0; i < log1.size(); ++i) {
        CHECK(log1[i].total == log2[i].total);  // bitwise reproducibility
        CHECK(std::isfinite(log1[i].total));
        CHECK(log1[i].step == static_cast<int64_t>(i + 1));
    }
    CHECK(log1.back().ce < log1.front().ce);
    CHECK(log1.back().ce < 0.8 * log1.front().ce);
}

TEST_CASE("training rejects empty datasets") {
    Model<double> model(train_config());
    TrainConfig cfg;
    cfg.stage = Stage::pretrain;
    CHECK_THROWS_AS(pretrain(cfg, std::vector<PretrainPair>{}, model), ValidationError);

    TrainConfig wr_cfg;
    wr_cfg.stage = Stage::wr;
    CHECK_THROWS_AS(finetune_wr(wr_cfg, std::vector<Triple>{}, model), ValidationError);

    auto bad = toy_triples();
    bad[1].negatives.clear();
    CHECK_THROWS_AS(finetune_wr(wr_cfg, bad, model), ValidationError);
}

TEST_CASE("a non-finite loss aborts with the offending examples named") {
    Model<double> model(train_config());
    Adam<double> opt(model.parameters(), 1e-3);
    Rng loop_rng(1);

    TrainConfig cfg;
    cfg.stage = Stage::pretrain;
    cfg.batch_size = 2;
    cfg.max_steps = 5;
    cfg.seed = 3;

    // a poisoned example slips a NaN past the op-level guard; the loop-level
    // check must still refuse to take the step
    Tensor<double> knob = Tensor<double>::param({1}, {1.0});
    detail::LoopHooks<double> hooks;
    hooks.example_loss = [&](size_t, StepRecord&) {
        return mul(knob, std::numeric_limits<double>::quiet_NaN());
    };

    set_finite_checks(false);
    try {
        detail::run_loop(cfg, 4, model, opt, loop_rng, LoopState{}, hooks, nullptr);
        set_finite_checks(true);
        FAIL("expected a ComputeError");
    } catch (const ComputeError& e) {
        set_finite_checks(true);
        CHECK(std::string(e.what()).find("non-finite loss at step 1") != std::string::npos);
        CHECK(std::string(e.what()).find("examples [") != std::string::npos);
    }
}

TEST_CASE("wr fine-tuning starts near the hinge and is reproducible") {
    TrainConfig cfg;
    cfg.stage = Stage::wr;
    cfg.batch_size = 2;
    cfg.max_steps = 4;
    cfg.seed = 9;
    cfg.decode.max_len = 8;

    Model<double> m1(train_config());
    std::vector<StepRecord> log1;
    finetune_wr(cfg, toy_triples(), m1, &log1);

    Model<double> m2(train_config());
    std::vector<StepRecord> log2;
    finetune_wr(cfg, toy_triples(), m2, &log2);

    REQUIRE(log1.size() == 4);
    for (size_t i = 0; i < log1.size(); ++i) {
        CHECK(log1[i].total == log2[i].total);
        CHECK(log1[i].triplet >= 0.0);
        CHECK(log1[i].triplet <= 2.0);
        CHECK(log1[i].d_pos >= 0.0);
        CHECK(log1[i].d_neg <= 1.0);
    }
    // random-init representations cluster near distance 0.5, so the first
    // hinge value sits close to the margin
    CHECK(log1.front().triplet > 0.5);
    CHECK(log1.front().triplet < 1.5);
}

TEST_CASE("ul fine-tuning runs, logs nonnegative penalties, and is reproducible") {
    TrainConfig cfg;
    cfg.stage = Stage::ul;
    cfg.batch_size = 2;
    cfg.max_steps = 4;
    cfg.seed = 12;
    cfg.decode.max_len = 10;

    Model<double> m1(train_config());
    std::vector<StepRecord> log1;
    finetune_ul(cfg, toy_triples(), m1, &log1);

    Model<double> m2(train_config());
    std::vector<StepRecord> log2;
    finetune_ul(cfg, toy_triples(), m2, &log2);

    REQUIRE(log1.size() == 4);
    for (size_t i = 0; i < log1.size(); ++i) {
        CHECK(log1[i].total == log2[i].total);
        CHECK(log1[i].ul >= 0.0);
        CHECK(std::isfinite(log1[i].ce));
    }
}

TEST_CASE("checkpoints round-trip bit-exactly and rebuild byte-identical files") {
    Model<double> model(train_config());
    OptState<double> opt;
    opt.t = 7;
    for (const auto& [name, t] : model.parameters()) {
        opt.m.emplace_back(t.numel(), 0.25);
        opt.v.emplace_back(t.numel(), 0.5);
    }
    nlohmann::json meta{{"step", 7}, {"epoch", 1}, {"cursor", 3}, {"loop_rng", "x 1 2"}};

    const std::string p1 = tmp_path("ckpt1.bin");
    const std::string p2 = tmp_path("ckpt2.bin");
    save_checkpoint(p1, model, &opt, meta);

    auto loaded = load_checkpoint<double>(p1);
    CHECK(loaded.config.vocab_size == train_config().vocab_size);
    CHECK(loaded.meta["step"] == 7);
    CHECK(loaded.meta["loop_rng"] == "x 1 2");
    CHECK(loaded.opt.t == 7);
    REQUIRE(loaded.opt.m.size() == model.parameters().size());

    const auto& orig = model.parameters();
    const auto& back = loaded.model->parameters();
    for (size_t i = 0; i < orig.size(); ++i) {
        CHECK(orig[i].first == back[i].first);
        CHECK(orig[i].second.value() == back[i].second.value());
    }

    // a second save of the loaded state reproduces the file byte for byte
    save_checkpoint(p2, *loaded.model, &loaded.opt, [&] {
        nlohmann::json m = loaded.meta;
        m.erase("model_drop_rng");
        return m;
    }());
    std::ifstream f1(p1, std::ios::binary), f2(p2, std::ios::binary);
    std::string b1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    std::string b2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    CHECK(b1 == b2);
    std::remove(p1.c_str());
    std::remove(p2.c_str());
}

TEST_CASE("checkpoint loading rejects corruption, bad width, and vocab mismatch") {
    Model<double> model(train_config());
    const std::string p = tmp_path("ckpt_bad.bin");
    save_checkpoint<double>(p, model, nullptr, {});

    CHECK_THROWS_AS(load_checkpoint<double>(p, 999), ValidationError);
    CHECK_THROWS_AS(load_checkpoint<float>(p), ValidationError);
    CHECK_THROWS_AS(load_checkpoint<double>("/nonexistent/ckpt.bin"), ValidationError);

    // flip one byte in the middle: the checksum must notice
    std::ifstream in(p, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    in.close();
    bytes[bytes.size() / 2] ^= 0x40;
    std::ofstream out(p, std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.close();
    CHECK_THROWS_WITH_AS(load_checkpoint<double>(p), doctest::Contains("checksum"),
                         ComputeError);

    // a wrong version must be called out once the checksum is made valid again
    bytes[bytes.size() / 2] ^= 0x40;
    bytes[sizeof kCkptMagic] = 99;
    std::string body = bytes.substr(0, bytes.size() - sizeof(uint64_t));
    const uint64_t sum = detail::fnv1a(body);
    std::ofstream out2(p, std::ios::binary);
    out2.write(body.data(), static_cast<std::streamsize>(body.size()));
    out2.write(reinterpret_cast<const char*>(&sum), sizeof sum);
    out2.close();
    CHECK_THROWS_WITH_AS(load_checkpoint<double>(p), doctest::Contains("version"),
                         ValidationError);
    std::remove(p.c_str());
}

TEST_CASE("an interrupted run resumes into the exact uninterrupted trajectory") {
    auto pairs = toy_pairs();

    TrainConfig straight;
    straight.stage = Stage::pretrain;
    straight.batch_size = 3;
    straight.max_steps = 6;
    straight.lr = 1e-3;
    straight.seed = 4;

    Model<double> ma(train_config());
    std::vector<StepRecord> log_a;
    pretrain(straight, pairs, ma, &log_a);

    // same run, but checkpointed at step 3 and resumed from disk
    const std::string p = tmp_path("resume.bin");
    TrainConfig half = straight;
    half.max_steps = 3;
    half.checkpoint_path = p;

    Model<double> mb(train_config());
    std::vector<StepRecord> log_b;
    pretrain(half, pairs, mb, &log_b);

    auto ck = load_checkpoint<double>(p);
    Adam<double> opt(ck.model->parameters(), straight.lr, straight.beta1, straight.beta2,
                     straight.eps);
    LoopState st = resume_state_from(ck, &opt);
    CHECK(st.step == 3);

    TrainConfig rest = straight;  // max_steps 6 continues where 3 left off
    std::vector<StepRecord> log_c;
    pretrain(rest, pairs, *ck.model, &log_c, st, &opt);

    REQUIRE(log_a.size() == 6);
    REQUIRE(log_b.size() == 3);
    REQUIRE(log_c.size() == 3);
    for (size_t i = 0; i < 3; ++i) {
        CHECK(log_b[i].total == log_a[i].total);
        CHECK(log_c[i].total == log_a[i + 3].total);  // bitwise continuation
    }

    // the resumed model equals the uninterrupted one parameter for parameter
    const auto& pa = ma.parameters();
    const auto& pc = ck.model->parameters();
    for (size_t i = 0; i < pa.size(); ++i) CHECK(pa[i].second.value() == pc[i].second.value());
    std::remove(p.c_str());
}

TEST_CASE("training writes line-delimited log records") {
    const std::string p = tmp_path("log.jsonl");
    TrainConfig cfg;
    cfg.stage = Stage::pretrain;
    cfg.batch_size = 2;
    cfg.max_steps = 3;
    cfg.seed = 8;
    cfg.log_path = p;

    Model<double> model(train_config());
    pretrain(cfg, toy_pairs(), model);

    std::ifstream in(p);
    REQUIRE(in.good());
    std::string line;
    int64_t n = 0;
    while (std::getline(in, line)) {
        auto j = nlohmann::json::parse(line);
        ++n;
        CHECK(j["step"] == n);
        CHECK(j.contains("total"));
        CHECK(j.contains("ce"));
        CHECK(j.contains("wall_ms"));
        CHECK(std::isfinite(j["total"].get<double>()));
    }
    CHECK(n == 3);
    std::remove(p.c_str());
}
