#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "wr/checkpoint.hpp"
#include "wr/data.hpp"
#include "wr/decoding.hpp"
#include "wr/error.hpp"
#include "wr/losses.hpp"
#include "wr/model.hpp"
#include "wr/ops.hpp"
#include "wr/rng.hpp"

// Training loops: cross-entropy pretraining, then contrastive or
// unlikelihood fine-tuning. Runs are deterministic given (seed, data,
// config); checkpoints capture enough state to resume bit-exactly.

namespace wr {

enum class Stage { pretrain, wr, ul };

inline const char* stage_name(Stage s) {
    switch (s) {
        case Stage::pretrain: return "pretrain";
        case Stage::wr: return "wr";
        case Stage::ul: return "ul";
    }
    throw ValidationError("stage_name: unknown stage");
}

inline Stage stage_from(const std::string& name) {
    if (name == "pretrain") return Stage::pretrain;
    if (name == "wr") return Stage::wr;
    if (name == "ul") return Stage::ul;
    throw ValidationError("unknown training stage '" + name + "'");
}

struct TrainConfig {
    Stage stage = Stage::pretrain;
    double lambda = 1.0;    // CE weight inside the combined contrastive loss
    int ul_n = 4;           // repeated n-gram order for the unlikelihood stage
    double ul_alpha = 1.0;  // weight on the unlikelihood term
    double lr = 3e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    int64_t batch_size = 8;
    int64_t max_steps = 100;
    int64_t seed = 0;
    int64_t checkpoint_every = 0;  // 0 saves only the final state
    double grad_clip = 1.0;
    DecodeConfig decode;           // anchor decode for wr; plain version for ul
    std::string log_path;          // empty disables file logging
    std::string checkpoint_path;   // empty disables checkpointing
    bool quiet = true;             // console progress off by default in-process

    void validate() const {
        if (lr < 0.0) throw ValidationError("train config: lr must be nonnegative");
        if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0)
            throw ValidationError("train config: betas must lie in [0,1)");
        if (eps <= 0.0) throw ValidationError("train config: eps must be positive");
        if (batch_size < 1) throw ValidationError("train config: batch_size must be >= 1");
        if (max_steps < 1) throw ValidationError("train config: max_steps must be >= 1");
        if (grad_clip <= 0.0) throw ValidationError("train config: grad_clip must be positive");
        if (checkpoint_every < 0)
            throw ValidationError("train config: checkpoint_every must be >= 0");
        if (stage == Stage::wr) {
            if (lambda < 0.0) throw ValidationError("train config: lambda must be nonnegative");
            decode.validate();
        }
        if (stage == Stage::ul) {
            if (ul_n < 1) throw ValidationError("train config: ul_n must be >= 1");
            if (ul_alpha < 0.0)
                throw ValidationError("train config: ul_alpha must be nonnegative");
        }
    }
};

// one logged optimizer step; unused terms stay zero for a given stage
struct StepRecord {
    int64_t step{0};
    double total{0.0};
    double ce{0.0};
    double triplet{0.0};
    double d_pos{0.0};
    double d_neg{0.0};
    double ul{0.0};
    double wall_ms{0.0};
};

inline nlohmann::json step_record_to_json(const StepRecord& r, Stage stage) {
    nlohmann::json j{{"step", r.step}, {"total", r.total}, {"ce", r.ce}};
    if (stage == Stage::wr) {
        j["triplet"] = r.triplet;
        j["d_pos"] = r.d_pos;
        j["d_neg"] = r.d_neg;
    }
    if (stage == Stage::ul) j["ul"] = r.ul;
    j["wall_ms"] = r.wall_ms;
    return j;
}

// scales all gradients so their global L2 norm never exceeds max_norm;
// returns the pre-clip norm
template <typename T>
double clip_global_norm(const std::vector<std::pair<std::string, Tensor<T>>>& params,
                        double max_norm) {
    if (max_norm <= 0.0) throw ValidationError("clip_global_norm: max_norm must be positive");
    double sq = 0.0;
    for (const auto& [name, handle] : params)
        for (T g : handle.grad()) sq += static_cast<double>(g) * static_cast<double>(g);
    const double norm = std::sqrt(sq);
    if (norm > max_norm) {
        const T scale = static_cast<T>(max_norm / norm);
        for (const auto& [name, handle] : params) {
            Tensor<T> p = handle;
            for (T& g : p.grad()) g *= scale;
        }
    }
    return norm;
}

// adaptive-moment optimizer over the model's parameter list
template <typename T>
class Adam {
public:
    Adam(const std::vector<std::pair<std::string, Tensor<T>>>& params, double lr,
         double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : params_(params), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
        if (lr < 0.0) throw ValidationError("adam: lr must be nonnegative");
        for (const auto& [name, handle] : params_) {
            state_.m.emplace_back(handle.numel(), T(0));
            state_.v.emplace_back(handle.numel(), T(0));
        }
    }

    void step() {
        ++state_.t;
        const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(state_.t));
        const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(state_.t));
        for (size_t i = 0; i < params_.size(); ++i) {
            Tensor<T> p = params_[i].second;
            const std::vector<T>& g = p.grad();
            std::vector<T>& w = p.value();
            std::vector<T>& m = state_.m[i];
            std::vector<T>& v = state_.v[i];
            for (size_t j = 0; j < g.size(); ++j) {
                const double gd = static_cast<double>(g[j]);
                m[j] = static_cast<T>(beta1_ * static_cast<double>(m[j]) + (1.0 - beta1_) * gd);
                v[j] = static_cast<T>(beta2_ * static_cast<double>(v[j]) +
                                      (1.0 - beta2_) * gd * gd);
                const double mhat = static_cast<double>(m[j]) / bc1;
                const double vhat = static_cast<double>(v[j]) / bc2;
                w[j] = static_cast<T>(static_cast<double>(w[j]) -
                                      lr_ * mhat / (std::sqrt(vhat) + eps_));
            }
        }
    }

    void zero_grad() {
        for (const auto& [name, handle] : params_) {
            Tensor<T> p = handle;
            p.zero_grad();
        }
    }

    const OptState<T>& state() const { return state_; }
    void restore(const OptState<T>& s) {
        if (s.m.size() != params_.size() || s.v.size() != params_.size())
            throw ValidationError("adam: restored state does not match parameters");
        state_ = s;
    }

private:
    const std::vector<std::pair<std::string, Tensor<T>>>& params_;
    double lr_, beta1_, beta2_, eps_;
    OptState<T> state_;
};

// loop position; saved into checkpoints so a reload resumes exactly
struct LoopState {
    int64_t step{0};
    int64_t epoch{0};
    int64_t cursor{0};  // index into the current epoch's permutation
    std::string loop_rng;
};

namespace detail {

// the visiting order for an epoch is a pure function of (seed, epoch)
inline std::vector<size_t> epoch_order(int64_t seed, int64_t epoch, size_t n) {
    std::vector<size_t> idx(n);
    for (size_t i = 0; i < n; ++i) idx[i] = i;
    Rng rng(static_cast<uint64_t>(seed) ^
            (0x9E3779B97F4A7C15ULL * static_cast<uint64_t>(epoch + 1)));
    rng.shuffle(idx);
    return idx;
}

template <typename T>
struct LoopHooks {
    // returns the loss graph plus the record fields for one example
    std::function<Tensor<T>(size_t example, StepRecord& rec)> example_loss;
};

// shared driver: batches per-example losses into optimizer steps, logs,
// clips, checkpoints, and keeps resumable state
template <typename T>
LoopState run_loop(const TrainConfig& cfg, size_t n_examples, Model<T>& model, Adam<T>& opt,
                   Rng& loop_rng, LoopState state, const LoopHooks<T>& hooks,
                   std::vector<StepRecord>* log_out) {
    if (n_examples == 0) throw ValidationError("training: empty dataset");

    std::ofstream log_file;
    if (!cfg.log_path.empty()) {
        log_file.open(cfg.log_path, state.step == 0 ? std::ios::trunc : std::ios::app);
        if (!log_file) throw ValidationError("training: cannot write log '" + cfg.log_path + "'");
    }

    const bool was_training = model.training();
    model.set_training(true);

    std::vector<size_t> order = epoch_order(cfg.seed, state.epoch, n_examples);

    while (state.step < cfg.max_steps) {
        const auto t0 = std::chrono::steady_clock::now();

        StepRecord rec;
        rec.step = state.step + 1;
        std::vector<size_t> batch;
        while (static_cast<int64_t>(batch.size()) < cfg.batch_size) {
            if (state.cursor == static_cast<int64_t>(order.size())) {
                ++state.epoch;
                state.cursor = 0;
                order = epoch_order(cfg.seed, state.epoch, n_examples);
            }
            batch.push_back(order[state.cursor]);
            ++state.cursor;
        }

        opt.zero_grad();
        Tape<T> tape;
        double total_value = 0.0;
        {
            typename Tape<T>::Scope scope(tape);
            Tensor<T> sum_loss;
            for (size_t ex : batch) {
                Tensor<T> one = hooks.example_loss(ex, rec);
                sum_loss = sum_loss.defined() ? add(sum_loss, one) : one;
            }
            Tensor<T> mean_loss = div(sum_loss, static_cast<T>(batch.size()));
            total_value = static_cast<double>(mean_loss.item());
            if (!std::isfinite(total_value)) {
                std::string ids;
                for (size_t ex : batch) ids += (ids.empty() ? "" : ",") + std::to_string(ex);
                throw ComputeError("training: non-finite loss at step " +
                                   std::to_string(rec.step) + " on examples [" + ids + "]");
            }
            tape.backward(mean_loss);
        }

        clip_global_norm(model.parameters(), cfg.grad_clip);
        opt.step();
        ++state.step;

        const double denom = static_cast<double>(batch.size());
        rec.total = total_value;
        rec.ce /= denom;
        rec.triplet /= denom;
        rec.d_pos /= denom;
        rec.d_neg /= denom;
        rec.ul /= denom;
        rec.wall_ms = std::chrono::duration<double, std::milli>(
                          std::chrono::steady_clock::now() - t0)
                          .count();

        if (log_file) log_file << step_record_to_json(rec, cfg.stage).dump() << '\n';
        if (log_out) log_out->push_back(rec);
        if (!cfg.quiet)
            std::cout << stage_name(cfg.stage) << " step " << rec.step << " loss " << rec.total
                      << '\n';

        const bool due = cfg.checkpoint_every > 0 && state.step % cfg.checkpoint_every == 0;
        if (!cfg.checkpoint_path.empty() && (due || state.step == cfg.max_steps)) {
            nlohmann::json meta{{"stage", stage_name(cfg.stage)},
                                {"step", state.step},
                                {"epoch", state.epoch},
                                {"cursor", state.cursor},
                                {"loop_rng", loop_rng.state()}};
            save_checkpoint(cfg.checkpoint_path, model, &opt.state(), meta);
        }
    }

    model.set_training(was_training);
    state.loop_rng = loop_rng.state();
    return state;
}

}  // namespace detail

// restores loop position and optimizer moments saved by a training stage;
// the loop functions re-seed their rng from the returned state
template <typename T>
LoopState resume_state_from(const LoadedCheckpoint<T>& ckpt, Adam<T>* opt = nullptr) {
    LoopState st;
    if (ckpt.meta.contains("step")) st.step = ckpt.meta["step"].template get<int64_t>();
    if (ckpt.meta.contains("epoch")) st.epoch = ckpt.meta["epoch"].template get<int64_t>();
    if (ckpt.meta.contains("cursor")) st.cursor = ckpt.meta["cursor"].template get<int64_t>();
    if (ckpt.meta.contains("loop_rng")) st.loop_rng = ckpt.meta["loop_rng"].template get<std::string>();
    if (opt && !ckpt.opt.empty()) opt->restore(ckpt.opt);
    return st;
}

// maximum-likelihood pretraining on consecutive-sentence pairs
template <typename T>
LoopState pretrain(const TrainConfig& cfg, const std::vector<PretrainPair>& pairs,
                   Model<T>& model, std::vector<StepRecord>* log_out = nullptr,
                   LoopState start = {}, Adam<T>* opt_in = nullptr) {
    if (cfg.stage != Stage::pretrain)
        throw ValidationError("pretrain: config stage is not 'pretrain'");
    cfg.validate();
    if (pairs.empty()) throw ValidationError("pretrain: empty pair dataset");

    std::unique_ptr<Adam<T>> owned;
    Adam<T>* opt = opt_in;
    if (!opt) {
        owned = std::make_unique<Adam<T>>(model.parameters(), cfg.lr, cfg.beta1, cfg.beta2,
                                          cfg.eps);
        opt = owned.get();
    }
    Rng loop_rng(static_cast<uint64_t>(cfg.seed) + 0x5151u);
    if (!start.loop_rng.empty()) loop_rng.restore(start.loop_rng);

    detail::LoopHooks<T> hooks;
    hooks.example_loss = [&](size_t ex, StepRecord& rec) {
        const PretrainPair& p = pairs[ex];
        Tensor<T> memory = model.encode(p.context);
        Tensor<T> ce = sequence_ce(model, memory, p.continuation);
        rec.ce += static_cast<double>(ce.item());
        return ce;
    };
    return detail::run_loop(cfg, pairs.size(), model, *opt, loop_rng, start, hooks, log_out);
}

// contrastive fine-tuning: combined CE + triplet objective per triple, with
// the negative redrawn on every visit
template <typename T>
LoopState finetune_wr(const TrainConfig& cfg, const std::vector<Triple>& triples,
                      Model<T>& model, std::vector<StepRecord>* log_out = nullptr,
                      LoopState start = {}, Adam<T>* opt_in = nullptr) {
    if (cfg.stage != Stage::wr) throw ValidationError("finetune_wr: config stage is not 'wr'");
    cfg.validate();
    if (triples.empty()) throw ValidationError("finetune_wr: empty triple dataset");
    for (const auto& t : triples)
        if (t.negatives.empty())
            throw ValidationError("finetune_wr: triple from source '" + t.source_id +
                                  "' has no negatives");

    std::unique_ptr<Adam<T>> owned;
    Adam<T>* opt = opt_in;
    if (!opt) {
        owned = std::make_unique<Adam<T>>(model.parameters(), cfg.lr, cfg.beta1, cfg.beta2,
                                          cfg.eps);
        opt = owned.get();
    }
    Rng loop_rng(static_cast<uint64_t>(cfg.seed) + 0x17A3u);
    if (!start.loop_rng.empty()) loop_rng.restore(start.loop_rng);

    WRLossConfig loss_cfg;
    loss_cfg.lambda = cfg.lambda;
    loss_cfg.decode = cfg.decode;

    detail::LoopHooks<T> hooks;
    hooks.example_loss = [&](size_t ex, StepRecord& rec) {
        LossBreakdown<T> b = wr_loss(model, triples[ex], loop_rng, loss_cfg);
        rec.ce += static_cast<double>(b.ce.item());
        rec.triplet += static_cast<double>(b.triplet.item());
        rec.d_pos += static_cast<double>(b.d_pos.item());
        rec.d_neg += static_cast<double>(b.d_neg.item());
        return b.total;
    };
    return detail::run_loop(cfg, triples.size(), model, *opt, loop_rng, start, hooks, log_out);
}

// unlikelihood fine-tuning: teacher-forced CE on the positive plus the
// repeated-n-gram penalty on the model's own plain greedy decode
template <typename T>
LoopState finetune_ul(const TrainConfig& cfg, const std::vector<Triple>& triples,
                      Model<T>& model, std::vector<StepRecord>* log_out = nullptr,
                      LoopState start = {}, Adam<T>* opt_in = nullptr) {
    if (cfg.stage != Stage::ul) throw ValidationError("finetune_ul: config stage is not 'ul'");
    cfg.validate();
    if (triples.empty()) throw ValidationError("finetune_ul: empty triple dataset");

    std::unique_ptr<Adam<T>> owned;
    Adam<T>* opt = opt_in;
    if (!opt) {
        owned = std::make_unique<Adam<T>>(model.parameters(), cfg.lr, cfg.beta1, cfg.beta2,
                                          cfg.eps);
        opt = owned.get();
    }
    Rng loop_rng(static_cast<uint64_t>(cfg.seed) + 0x0BADu);
    if (!start.loop_rng.empty()) loop_rng.restore(start.loop_rng);

    DecodeConfig plain = cfg.decode;
    plain.k = 0.0;  // the unlikelihood baseline decodes without the count penalty

    detail::LoopHooks<T> hooks;
    hooks.example_loss = [&](size_t ex, StepRecord& rec) {
        const Triple& t = triples[ex];
        Tensor<T> memory = model.encode(t.context);
        Tensor<T> ce = sequence_ce(model, memory, t.positive);
        rec.ce += static_cast<double>(ce.item());

        std::vector<int64_t> decoded = greedy_decode(model, t.context, plain);
        Tensor<T> loss = ce;
        if (!decoded.empty()) {
            std::vector<int64_t> framed{kBosId};
            framed.insert(framed.end(), decoded.begin(), decoded.end());
            Tensor<T> logits = model.decode_teacher_forced(memory, framed);
            std::vector<int64_t> tail(decoded.size());
            for (size_t i = 0; i < decoded.size(); ++i) tail[i] = static_cast<int64_t>(i + 1);
            Tensor<T> ul = ul_loss(rows(logits, tail), decoded, cfg.ul_n);
            rec.ul += static_cast<double>(ul.item());
            if (ul.requires_grad() || ul.item() != T(0))
                loss = add(ce, mul(ul, static_cast<T>(cfg.ul_alpha)));
        }
        return loss;
    };
    return detail::run_loop(cfg, triples.size(), model, *opt, loop_rng, start, hooks, log_out);
}

}  // namespace wr
