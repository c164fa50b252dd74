// Command-line front end for the full pipeline: corpus generation, vocab
// building, the three training stages, decoding, evaluation, and the
// finite-difference gradient suite. One process runs one stage.
//
// Exit codes: 0 success, 1 bad input (flags, files, configs), 2 runtime
// failure (non-finite loss, corrupt checkpoint, failed gradient check).

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "wr/checkpoint.hpp"
#include "wr/data.hpp"
#include "wr/decoding.hpp"
#include "wr/error.hpp"
#include "wr/eval.hpp"
#include "wr/gradcheck_suite.hpp"
#include "wr/model.hpp"
#include "wr/rng.hpp"
#include "wr/training.hpp"
#include "wr/vocab.hpp"

namespace {

using nlohmann::json;
using namespace wr;

// "--max-steps,-s" -> "max_steps": the first long flag names the config key
std::string config_key_of(const std::string& flags) {
    std::string first = flags.substr(0, flags.find(','));
    while (!first.empty() && first.front() == '-') first.erase(first.begin());
    std::replace(first.begin(), first.end(), '-', '_');
    return first;
}

// Ties CLI options to JSON config keys. Precedence: explicit flags beat the
// config file, which beats defaults. Unknown config keys are rejected.
class ConfigBinder {
public:
    template <typename V>
    CLI::Option* bind(CLI::App& app, const std::string& flags, V& var, const std::string& help) {
        CLI::Option* opt = app.add_option(flags, var, help);
        add_entry(config_key_of(flags), opt, var);
        return opt;
    }

    CLI::Option* bind_flag(CLI::App& app, const std::string& flags, bool& var,
                           const std::string& help) {
        CLI::Option* opt = app.add_flag(flags, var, help);
        add_entry(config_key_of(flags), opt, var);
        return opt;
    }

    // applies file values to options the command line left untouched
    void apply_file(const std::string& path) const {
        std::ifstream in(path);
        if (!in) throw ValidationError("config: cannot open '" + path + "'");
        json j;
        try {
            j = json::parse(in);
        } catch (const json::exception& e) {
            throw ValidationError("config: '" + path + "': " + e.what());
        }
        if (!j.is_object()) throw ValidationError("config: top level must be a JSON object");
        for (auto it = j.begin(); it != j.end(); ++it) {
            const Entry* entry = nullptr;
            for (const Entry& e : entries_)
                if (e.key == it.key()) entry = &e;
            if (!entry) throw ValidationError("config: unknown key '" + it.key() + "'");
            if (entry->opt->count() > 0) continue;
            try {
                entry->set(it.value());
            } catch (const json::exception& e) {
                throw ValidationError("config: key '" + it.key() + "': " + e.what());
            }
        }
    }

    json resolved() const {
        json j = json::object();
        for (const Entry& e : entries_) j[e.key] = e.get();
        return j;
    }

private:
    struct Entry {
        std::string key;
        CLI::Option* opt;
        std::function<void(const json&)> set;
        std::function<json()> get;
    };

    template <typename V>
    void add_entry(std::string key, CLI::Option* opt, V& var) {
        entries_.push_back({std::move(key), opt,
                            [&var](const json& j) { var = j.template get<V>(); },
                            [&var]() { return json(var); }});
    }

    std::vector<Entry> entries_;
};

// every run leaves its resolved settings next to its outputs
void write_run_snapshot(const std::string& out_dir, const std::string& subcommand,
                        const ConfigBinder& binder) {
    std::filesystem::create_directories(out_dir);
    json j = binder.resolved();
    j["subcommand"] = subcommand;
    const std::string path = out_dir + "/" + subcommand + "_config.json";
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot write '" + path + "'");
    out << j.dump(2) << '\n';
}

std::string require_readable(const std::string& path, const std::string& what) {
    std::ifstream probe(path);
    if (!probe) throw ValidationError(what + ": cannot open '" + path + "'");
    return path;
}

// shared model-shape options for commands that build a fresh model
struct ModelFlags {
    int64_t d_model = 64;
    int64_t n_heads = 4;
    int64_t enc_layers = 2;
    int64_t dec_layers = 2;
    int64_t d_ffn = 256;
    int64_t max_len = 64;
    double dropout = 0.1;
    std::string g_mapping = "hadamard";
    std::vector<CLI::Option*> opts;

    void bind(CLI::App& app, ConfigBinder& binder) {
        opts.push_back(binder.bind(app, "--d-model", d_model, "Model width"));
        opts.push_back(binder.bind(app, "--n-heads", n_heads, "Attention heads"));
        opts.push_back(binder.bind(app, "--enc-layers", enc_layers, "Encoder layers"));
        opts.push_back(binder.bind(app, "--dec-layers", dec_layers, "Decoder layers"));
        opts.push_back(binder.bind(app, "--d-ffn", d_ffn, "Feed-forward width"));
        opts.push_back(binder.bind(app, "--max-len", max_len, "Maximum sequence length"));
        opts.push_back(binder.bind(app, "--dropout", dropout, "Dropout probability"));
        opts.push_back(binder.bind(app, "--g-mapping", g_mapping,
                                   "Representation mapping: hadamard or linear_projection"));
    }

    bool any_set() const {
        for (const CLI::Option* o : opts)
            if (o->count() > 0) return true;
        return false;
    }

    ModelConfig to_config(int64_t vocab_size, uint64_t seed) const {
        ModelConfig mc;
        mc.vocab_size = vocab_size;
        mc.d_model = d_model;
        mc.n_heads = n_heads;
        mc.n_enc_layers = enc_layers;
        mc.n_dec_layers = dec_layers;
        mc.d_ffn = d_ffn;
        mc.max_len = max_len;
        mc.dropout = dropout;
        mc.g_mapping = g_mapping_from(g_mapping);
        mc.seed = seed;
        return mc;
    }
};

// shared optimizer/loop options for the three training subcommands
struct TrainFlags {
    double lr = 3e-4;
    int64_t batch_size = 8;
    int64_t max_steps = 100;
    int64_t checkpoint_every = 0;
    double grad_clip = 1.0;
    int64_t seed = 0;
    bool verbose = false;

    void bind(CLI::App& app, ConfigBinder& binder) {
        binder.bind(app, "--lr", lr, "Learning rate");
        binder.bind(app, "--batch-size", batch_size, "Examples per optimizer step");
        binder.bind(app, "--max-steps", max_steps, "Total optimizer steps");
        binder.bind(app, "--checkpoint-every", checkpoint_every,
                    "Checkpoint interval in steps (0 saves only the final state)");
        binder.bind(app, "--grad-clip", grad_clip, "Global gradient-norm bound");
        binder.bind(app, "--seed", seed, "Run seed");
        binder.bind_flag(app, "--verbose", verbose, "Print per-step loss to stdout");
    }

    void fill(TrainConfig& cfg) const {
        cfg.lr = lr;
        cfg.batch_size = batch_size;
        cfg.max_steps = max_steps;
        cfg.checkpoint_every = checkpoint_every;
        cfg.grad_clip = grad_clip;
        cfg.seed = seed;
        cfg.quiet = !verbose;
    }
};

template <typename SetupF>
void add_configured_subcommand(CLI::App& app, const std::string& name, const std::string& desc,
                               SetupF setup) {
    CLI::App* sub = app.add_subcommand(name, desc);
    auto binder = std::make_shared<ConfigBinder>();
    auto config_path = std::make_shared<std::string>();
    sub->add_option("--config", *config_path, "JSON file of defaults; explicit flags win");
    auto body = setup(*sub, *binder);
    sub->callback([sub, binder, config_path, body, name]() {
        if (!config_path->empty()) binder->apply_file(*config_path);
        body(*sub, *binder);
    });
}

// ---------------------------------------------------------------- gen-data

void setup_gen_data(CLI::App& app) {
    add_configured_subcommand(
        app, "gen-data", "Generate a synthetic topic-story corpus with triples",
        [](CLI::App& sub, ConfigBinder& binder) {
            auto topics = std::make_shared<int64_t>(4);
            auto stories = std::make_shared<int64_t>(25);
            auto heldout = std::make_shared<double>(0.2);
            auto extra_neg = std::make_shared<int64_t>(0);
            auto seed = std::make_shared<int64_t>(0);
            auto out_dir = std::make_shared<std::string>();
            binder.bind(sub, "--topics", *topics, "Topic lexicons to draw from (2..12)");
            binder.bind(sub, "--stories-per-topic", *stories, "Stories generated per topic");
            binder.bind(sub, "--heldout-fraction", *heldout,
                        "Fraction of triples reserved for evaluation");
            binder.bind(sub, "--extra-negatives", *extra_neg,
                        "Fabricated negatives appended per triple from other sources");
            binder.bind(sub, "--seed", *seed, "Run seed");
            binder.bind(sub, "--out-dir", *out_dir, "Output directory")->required();

            return [=](CLI::App&, ConfigBinder& b) {
                if (*heldout < 0.0 || *heldout >= 1.0)
                    throw ValidationError("gen-data: heldout-fraction must lie in [0,1)");
                write_run_snapshot(*out_dir, "gen-data", b);

                Rng rng(static_cast<uint64_t>(*seed));
                SyntheticData data = gen_synthetic(*topics, *stories, rng);
                if (*extra_neg > 0) fabricate_negatives(data.triples, *extra_neg, rng);

                const std::string stories_path = *out_dir + "/stories.txt";
                std::ofstream st(stories_path);
                if (!st) throw ValidationError("cannot write '" + stories_path + "'");
                for (const std::string& block : data.stories) st << block << "\n\n";
                st.close();

                std::vector<size_t> order(data.triples.size());
                for (size_t i = 0; i < order.size(); ++i) order[i] = i;
                rng.shuffle(order);
                const size_t n_held =
                    static_cast<size_t>(*heldout * static_cast<double>(order.size()));
                std::vector<RawTriple> train, held;
                for (size_t i = 0; i < order.size(); ++i)
                    (i < n_held ? held : train).push_back(data.triples[order[i]]);

                save_raw_triples(*out_dir + "/triples_train.jsonl", train);
                save_raw_triples(*out_dir + "/triples_heldout.jsonl", held);
                std::cout << "wrote " << data.stories.size() << " stories, " << train.size()
                          << " train triples, " << held.size() << " held-out triples to "
                          << *out_dir << '\n';
            };
        });
}

// ------------------------------------------------------------- build-vocab

void setup_build_vocab(CLI::App& app) {
    add_configured_subcommand(
        app, "build-vocab", "Build a word vocabulary from story text",
        [](CLI::App& sub, ConfigBinder& binder) {
            auto input = std::make_shared<std::string>();
            auto min_freq = std::make_shared<int64_t>(1);
            auto out_dir = std::make_shared<std::string>();
            binder.bind(sub, "--input", *input, "Story text file")->required();
            binder.bind(sub, "--min-freq", *min_freq, "Minimum count to keep a token");
            binder.bind(sub, "--out-dir", *out_dir, "Output directory")->required();

            return [=](CLI::App&, ConfigBinder& b) {
                require_readable(*input, "build-vocab");
                write_run_snapshot(*out_dir, "build-vocab", b);
                std::ifstream in(*input);
                std::string text((std::istreambuf_iterator<char>(in)),
                                 std::istreambuf_iterator<char>());
                Vocab vocab = Vocab::build({text}, *min_freq);
                vocab.save(*out_dir + "/vocab.txt");
                std::cout << "vocab size " << vocab.size() << " (" << kNumReserved
                          << " reserved) written to " << *out_dir << "/vocab.txt\n";
            };
        });
}

// ------------------------------------------------------- training commands

// a checkpointed model plus optimizer, with loop position restored only when
// the run continues the same stage (fine-tuning a new stage starts fresh)
template <typename T>
struct PreparedRun {
    std::shared_ptr<Model<T>> model;
    std::unique_ptr<Adam<T>> opt;
    LoopState start;
};

template <typename T>
PreparedRun<T> prepare_from_checkpoint(const std::string& path, int64_t vocab_size,
                                       const TrainConfig& cfg, bool continue_stage) {
    PreparedRun<T> run;
    LoadedCheckpoint<T> ckpt = load_checkpoint<T>(path, vocab_size);
    run.model = ckpt.model;
    run.opt = std::make_unique<Adam<T>>(run.model->parameters(), cfg.lr, cfg.beta1, cfg.beta2,
                                        cfg.eps);
    if (continue_stage) run.start = resume_state_from(ckpt, run.opt.get());
    return run;
}

void setup_pretrain(CLI::App& app) {
    add_configured_subcommand(
        app, "pretrain", "Cross-entropy pretraining on consecutive sentence pairs",
        [](CLI::App& sub, ConfigBinder& binder) {
            auto stories = std::make_shared<std::string>();
            auto vocab_path = std::make_shared<std::string>();
            auto out_dir = std::make_shared<std::string>();
            auto resume = std::make_shared<std::string>();
            auto model_flags = std::make_shared<ModelFlags>();
            auto train_flags = std::make_shared<TrainFlags>();
            binder.bind(sub, "--stories", *stories, "Story text file")->required();
            binder.bind(sub, "--vocab", *vocab_path, "Vocabulary file")->required();
            binder.bind(sub, "--out-dir", *out_dir, "Output directory")->required();
            binder.bind(sub, "--resume", *resume, "Checkpoint to continue from");
            model_flags->bind(sub, binder);
            train_flags->bind(sub, binder);

            return [=](CLI::App&, ConfigBinder& b) {
                if (!resume->empty() && model_flags->any_set())
                    throw ValidationError(
                        "pretrain: model shape flags conflict with --resume; the checkpoint "
                        "already fixes the architecture");
                write_run_snapshot(*out_dir, "pretrain", b);

                Vocab vocab = Vocab::load(require_readable(*vocab_path, "pretrain"));
                TrainConfig cfg;
                cfg.stage = Stage::pretrain;
                train_flags->fill(cfg);
                cfg.log_path = *out_dir + "/pretrain_log.jsonl";
                cfg.checkpoint_path = *out_dir + "/ckpt_pretrain.bin";

                std::shared_ptr<Model<double>> model;
                std::unique_ptr<Adam<double>> opt;
                LoopState start;
                int64_t side_cap = model_flags->max_len - 2;
                if (resume->empty()) {
                    model = std::make_shared<Model<double>>(model_flags->to_config(
                        vocab.size(), static_cast<uint64_t>(train_flags->seed)));
                } else {
                    auto run = prepare_from_checkpoint<double>(*resume, vocab.size(), cfg, true);
                    model = run.model;
                    opt = std::move(run.opt);
                    start = run.start;
                    side_cap = model->config().max_len - 2;
                }

                int64_t dropped = 0;
                auto pairs = load_pretrain_pairs(require_readable(*stories, "pretrain"), vocab,
                                                 side_cap, &dropped);
                std::cout << pairs.size() << " training pairs (" << dropped
                          << " dropped as overlong)\n";

                LoopState end = pretrain(cfg, pairs, *model, nullptr, start, opt.get());
                std::cout << "pretrain finished at step " << end.step << "; checkpoint "
                          << cfg.checkpoint_path << '\n';
            };
        });
}

// shared body for the two fine-tuning stages, which differ only in loss
void setup_finetune(CLI::App& app, const std::string& name, const std::string& desc,
                    Stage stage) {
    add_configured_subcommand(app, name, desc, [stage, name](CLI::App& sub,
                                                             ConfigBinder& binder) {
        auto triples_path = std::make_shared<std::string>();
        auto vocab_path = std::make_shared<std::string>();
        auto out_dir = std::make_shared<std::string>();
        auto init = std::make_shared<std::string>();
        auto resume = std::make_shared<std::string>();
        auto train_flags = std::make_shared<TrainFlags>();
        auto lambda = std::make_shared<double>(1.0);
        auto decode_k = std::make_shared<double>(5.0);
        auto decode_max_len = std::make_shared<int64_t>(32);
        auto ul_n = std::make_shared<int64_t>(4);
        auto ul_alpha = std::make_shared<double>(1.0);

        binder.bind(sub, "--triples", *triples_path, "Triple JSONL file")->required();
        binder.bind(sub, "--vocab", *vocab_path, "Vocabulary file")->required();
        binder.bind(sub, "--out-dir", *out_dir, "Output directory")->required();
        binder.bind(sub, "--init", *init, "Checkpoint to fine-tune from");
        binder.bind(sub, "--resume", *resume, "Interrupted run of this stage to continue");
        if (stage == Stage::wr) {
            binder.bind(sub, "--lambda", *lambda, "Cross-entropy weight in the combined loss");
            binder.bind(sub, "--decode-k", *decode_k, "Duplication penalty for anchor decodes");
            binder.bind(sub, "--decode-max-len", *decode_max_len, "Anchor decode length cap");
        } else {
            binder.bind(sub, "--ul-n", *ul_n, "Repeated n-gram order to penalize");
            binder.bind(sub, "--ul-alpha", *ul_alpha, "Weight on the unlikelihood term");
            binder.bind(sub, "--decode-max-len", *decode_max_len, "Decode length cap");
        }
        train_flags->bind(sub, binder);

        return [=](CLI::App&, ConfigBinder& b) {
            if (init->empty() == resume->empty())
                throw ValidationError(name + ": exactly one of --init or --resume is required");
            write_run_snapshot(*out_dir, name, b);

            Vocab vocab = Vocab::load(require_readable(*vocab_path, name));
            auto raw = load_raw_triples(require_readable(*triples_path, name));
            auto triples = tokenize_triples(raw, vocab);

            TrainConfig cfg;
            cfg.stage = stage;
            train_flags->fill(cfg);
            cfg.lambda = *lambda;
            cfg.ul_n = static_cast<int>(*ul_n);
            cfg.ul_alpha = *ul_alpha;
            cfg.decode.k = *decode_k;
            cfg.decode.max_len = *decode_max_len;
            const std::string tag = stage_name(stage);
            cfg.log_path = *out_dir + "/" + tag + "_log.jsonl";
            cfg.checkpoint_path = *out_dir + "/ckpt_" + tag + ".bin";

            PreparedRun<double> run = prepare_from_checkpoint<double>(
                init->empty() ? *resume : *init, vocab.size(), cfg, init->empty());

            const int64_t cut = fit_triples_to_window(triples, run.model->config().max_len);
            std::cout << triples.size() << " triples loaded";
            if (cut > 0) std::cout << " (" << cut << " sequences trimmed to the model window)";
            std::cout << '\n';
            LoopState end;
            if (stage == Stage::wr)
                end = finetune_wr(cfg, triples, *run.model, nullptr, run.start, run.opt.get());
            else
                end = finetune_ul(cfg, triples, *run.model, nullptr, run.start, run.opt.get());
            std::cout << tag << " finished at step " << end.step << "; checkpoint "
                      << cfg.checkpoint_path << '\n';
        };
    });
}

// ---------------------------------------------------------------- generate

void setup_generate(CLI::App& app) {
    add_configured_subcommand(
        app, "generate", "Greedy-decode continuations for contexts, one per input line",
        [](CLI::App& sub, ConfigBinder& binder) {
            auto ckpt_path = std::make_shared<std::string>();
            auto input = std::make_shared<std::string>();
            auto vocab_path = std::make_shared<std::string>();
            auto out_dir = std::make_shared<std::string>();
            auto decode_k = std::make_shared<double>(5.0);
            auto decode_max_len = std::make_shared<int64_t>(32);
            binder.bind(sub, "--checkpoint", *ckpt_path, "Model checkpoint")->required();
            binder.bind(sub, "--input", *input, "Text file, one context per line")->required();
            binder.bind(sub, "--vocab", *vocab_path, "Vocabulary file")->required();
            binder.bind(sub, "--out-dir", *out_dir, "Output directory")->required();
            binder.bind(sub, "--decode-k", *decode_k, "Duplication penalty strength");
            binder.bind(sub, "--decode-max-len", *decode_max_len, "Decode length cap");

            return [=](CLI::App&, ConfigBinder& b) {
                require_readable(*input, "generate");
                write_run_snapshot(*out_dir, "generate", b);

                Vocab vocab = Vocab::load(require_readable(*vocab_path, "generate"));
                LoadedCheckpoint<double> ckpt = load_checkpoint<double>(*ckpt_path, vocab.size());
                DecodeConfig dc;
                dc.k = *decode_k;
                dc.max_len = *decode_max_len;
                dc.validate();

                const std::string out_path = *out_dir + "/generations.jsonl";
                std::ofstream out(out_path);
                if (!out) throw ValidationError("cannot write '" + out_path + "'");

                std::ifstream in(*input);
                std::string line;
                int64_t n = 0, line_no = 0;
                while (std::getline(in, line)) {
                    ++line_no;
                    std::vector<int64_t> context = vocab.encode(line);
                    if (context.empty()) continue;
                    const int64_t cap = ckpt.model->config().max_len;
                    if (static_cast<int64_t>(context.size()) > cap)
                        throw ValidationError("generate: line " + std::to_string(line_no) +
                                              " has " + std::to_string(context.size()) +
                                              " tokens, model max_len is " +
                                              std::to_string(cap));
                    std::vector<int64_t> decoded = greedy_decode(*ckpt.model, context, dc);
                    const std::string text =
                        vocab.decode(continuation_tokens(decoded, dc.eos_id));
                    out << json{{"context", line}, {"continuation", text}}.dump() << '\n';
                    ++n;
                }
                std::cout << n << " continuations written to " << out_path << '\n';
            };
        });
}

// ---------------------------------------------------------------- evaluate

void setup_evaluate(CLI::App& app) {
    add_configured_subcommand(
        app, "evaluate", "Score a checkpoint on a triple file and write a report",
        [](CLI::App& sub, ConfigBinder& binder) {
            auto ckpt_path = std::make_shared<std::string>();
            auto triples_path = std::make_shared<std::string>();
            auto vocab_path = std::make_shared<std::string>();
            auto out_dir = std::make_shared<std::string>();
            auto decode_k = std::make_shared<double>(5.0);
            auto decode_max_len = std::make_shared<int64_t>(32);
            binder.bind(sub, "--checkpoint", *ckpt_path, "Model checkpoint")->required();
            binder.bind(sub, "--triples", *triples_path, "Triple JSONL file")->required();
            binder.bind(sub, "--vocab", *vocab_path, "Vocabulary file")->required();
            binder.bind(sub, "--out-dir", *out_dir, "Output directory")->required();
            binder.bind(sub, "--decode-k", *decode_k, "Duplication penalty strength");
            binder.bind(sub, "--decode-max-len", *decode_max_len, "Decode length cap");

            return [=](CLI::App&, ConfigBinder& b) {
                write_run_snapshot(*out_dir, "evaluate", b);
                Vocab vocab = Vocab::load(require_readable(*vocab_path, "evaluate"));
                auto raw = load_raw_triples(require_readable(*triples_path, "evaluate"));
                auto triples = tokenize_triples(raw, vocab);
                LoadedCheckpoint<double> ckpt = load_checkpoint<double>(*ckpt_path, vocab.size());
                fit_triples_to_window(triples, ckpt.model->config().max_len);

                DecodeConfig dc;
                dc.k = *decode_k;
                dc.max_len = *decode_max_len;
                EvalReport report = evaluate_model(*ckpt.model, triples, vocab, dc);

                json j{{"n", report.n},
                       {"mean_bleu1", report.mean_bleu1},
                       {"mean_repeated4_rate", report.mean_repeated4_rate},
                       {"distinct1", report.distinct1},
                       {"distinct2", report.distinct2},
                       {"preference_accuracy", report.preference_accuracy}};
                j["examples"] = json::array();
                for (const ExampleEval& e : report.examples)
                    j["examples"].push_back(example_eval_to_json(e));

                const std::string out_path = *out_dir + "/eval_report.json";
                std::ofstream out(out_path);
                if (!out) throw ValidationError("cannot write '" + out_path + "'");
                out << j.dump(2) << '\n';
                std::cout << eval_summary_table(report) << "report written to " << out_path
                          << '\n';
            };
        });
}

// --------------------------------------------------------------- gradcheck

int g_gradcheck_rc = 0;  // set by the gradcheck callback, read by main

void setup_gradcheck(CLI::App& app) {
    add_configured_subcommand(
        app, "gradcheck", "Finite-difference check of every op and the full combined loss",
        [](CLI::App& sub, ConfigBinder& binder) {
            auto precision = std::make_shared<int64_t>(64);
            auto step = std::make_shared<double>(0.0);
            auto rtol = std::make_shared<double>(0.0);
            auto out_dir = std::make_shared<std::string>();
            binder.bind(sub, "--precision", *precision, "Float width: 64 or 32")
                ->check(CLI::IsMember({32, 64}));
            binder.bind(sub, "--step", *step, "Probe step (0 picks the precision default)");
            binder.bind(sub, "--rtol", *rtol, "Relative tolerance (0 picks the default)");
            binder.bind(sub, "--out-dir", *out_dir, "Optional directory for a JSON report");

            return [=](CLI::App&, ConfigBinder& b) {
                if (!out_dir->empty()) write_run_snapshot(*out_dir, "gradcheck", b);

                std::vector<SuiteCase> cases;
                const auto t0 = std::chrono::steady_clock::now();
                if (*precision == 64) {
                    const double s = *step > 0.0 ? *step : 1e-5;
                    const double r = *rtol > 0.0 ? *rtol : 1e-3;
                    cases = run_gradcheck_suite<double>(s, r);
                } else {
                    // float32 difference quotients lose most of the mantissa;
                    // a wide step and loose tolerance are the best it can do
                    const float s = *step > 0.0 ? static_cast<float>(*step) : 1e-2f;
                    const float r = *rtol > 0.0 ? static_cast<float>(*rtol) : 5e-2f;
                    cases = run_gradcheck_suite<float>(s, r);
                }
                const double ms = std::chrono::duration<double, std::milli>(
                                      std::chrono::steady_clock::now() - t0)
                                      .count();

                json report = json::array();
                for (const SuiteCase& c : cases) {
                    std::cout << (c.ok ? "ok   " : "FAIL ") << c.name << " (" << c.checked
                              << " elements, max rel err " << c.max_rel_err;
                    if (!c.ok) std::cout << " at " << c.worst;
                    std::cout << ")\n";
                    report.push_back({{"name", c.name},
                                      {"ok", c.ok},
                                      {"checked", c.checked},
                                      {"max_rel_err", c.max_rel_err},
                                      {"worst", c.worst}});
                }
                const bool ok = suite_passed(cases);
                std::cout << (ok ? "all checks passed" : "CHECKS FAILED") << " (" << ms
                          << " ms)\n";
                if (!out_dir->empty()) {
                    std::ofstream out(*out_dir + "/gradcheck_report.json");
                    out << report.dump(2) << '\n';
                }
                if (!ok) g_gradcheck_rc = 2;
            };
        });
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Contrastive relevance training for a small encoder-decoder"};
    app.require_subcommand(1);

    setup_gen_data(app);
    setup_build_vocab(app);
    setup_pretrain(app);
    setup_finetune(app, "train-wr",
                   "Fine-tune with the combined cross-entropy and triplet objective",
                   Stage::wr);
    setup_finetune(app, "train-ul",
                   "Fine-tune with cross-entropy plus a repetition unlikelihood penalty",
                   Stage::ul);
    setup_generate(app);
    setup_evaluate(app);
    setup_gradcheck(app);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        // --help and --version land here with code 0; real parse errors map
        // to the bad-input exit code
        return app.exit(e) == 0 ? 0 : 1;
    } catch (const wr::ValidationError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const wr::ComputeError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return g_gradcheck_rc;
}
