#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "wr/error.hpp"
#include "wr/ops.hpp"
#include "wr/rng.hpp"
#include "wr/tensor.hpp"

// Transformer encoder-decoder with two decoder-side read paths:
//   - decode_teacher_forced: causal self-attention over a right-shifted
//     input, so logits[i] depends on y_{<i} strictly, never on y_i itself
//   - represent: non-causal pass over the unshifted [CLS];Y, pools the
//     [CLS] hidden state and maps it through g
// The non-causal pass exists because a leading [CLS] under a causal mask
// could not see the sentence it is supposed to summarize.

namespace wr {

enum class GMapping { hadamard, linear_projection };

struct ModelConfig {
    int64_t vocab_size = 0;
    int64_t d_model = 64;
    int64_t n_heads = 4;
    int64_t n_enc_layers = 2;
    int64_t n_dec_layers = 2;
    int64_t d_ffn = 256;
    int64_t max_len = 128;
    double dropout = 0.1;
    GMapping g_mapping = GMapping::hadamard;
    uint64_t seed = 0;

    void validate() const {
        if (vocab_size <= 0) throw ValidationError("model config: vocab_size must be positive");
        if (d_model <= 0) throw ValidationError("model config: d_model must be positive");
        if (n_heads <= 0 || d_model % n_heads != 0)
            throw ValidationError("model config: n_heads must divide d_model");
        if (n_enc_layers <= 0 || n_dec_layers <= 0)
            throw ValidationError("model config: layer counts must be positive");
        if (d_ffn <= 0) throw ValidationError("model config: d_ffn must be positive");
        if (max_len <= 2) throw ValidationError("model config: max_len must exceed 2");
        if (dropout < 0.0 || dropout >= 1.0)
            throw ValidationError("model config: dropout must be in [0,1)");
    }

    // closed form for the total learnable parameter count
    int64_t param_count() const {
        const int64_t d = d_model, f = d_ffn;
        const int64_t enc_layer = 4 * d * d + 2 * d * f + f + 9 * d;
        const int64_t dec_layer = 8 * d * d + 2 * d * f + f + 15 * d;
        const int64_t g = (g_mapping == GMapping::hadamard) ? d : d * d;
        return 2 * vocab_size * d + n_enc_layers * enc_layer + n_dec_layers * dec_layer + g;
    }
};

inline const char* g_mapping_name(GMapping g) {
    return g == GMapping::hadamard ? "hadamard" : "linear_projection";
}

inline GMapping g_mapping_from(const std::string& s) {
    if (s == "hadamard") return GMapping::hadamard;
    if (s == "linear_projection") return GMapping::linear_projection;
    throw ValidationError("unknown g_mapping '" + s + "'");
}

template <typename T>
class Model {
public:
    explicit Model(ModelConfig cfg) : cfg_(cfg), drop_rng_(cfg.seed + 1) {
        cfg_.validate();
        Rng init(cfg_.seed);
        const int64_t d = cfg_.d_model, f = cfg_.d_ffn, v = cfg_.vocab_size;

        embed_ = add_param("embed", uniform_init(init, {v, d}, d, d));
        head_ = add_param("head", uniform_init(init, {d, v}, d, v));

        enc_.resize(cfg_.n_enc_layers);
        for (int64_t l = 0; l < cfg_.n_enc_layers; ++l) {
            const std::string p = "enc" + std::to_string(l) + ".";
            init_attn(init, p + "self.", enc_[l].self);
            init_ffn(init, p, enc_[l].w1, enc_[l].b1, enc_[l].w2, enc_[l].b2, d, f);
            init_ln(p + "ln1.", enc_[l].ln1g, enc_[l].ln1b, d);
            init_ln(p + "ln2.", enc_[l].ln2g, enc_[l].ln2b, d);
        }
        dec_.resize(cfg_.n_dec_layers);
        for (int64_t l = 0; l < cfg_.n_dec_layers; ++l) {
            const std::string p = "dec" + std::to_string(l) + ".";
            init_attn(init, p + "self.", dec_[l].self);
            init_attn(init, p + "cross.", dec_[l].cross);
            init_ffn(init, p, dec_[l].w1, dec_[l].b1, dec_[l].w2, dec_[l].b2, d, f);
            init_ln(p + "ln1.", dec_[l].ln1g, dec_[l].ln1b, d);
            init_ln(p + "ln2.", dec_[l].ln2g, dec_[l].ln2b, d);
            init_ln(p + "ln3.", dec_[l].ln3g, dec_[l].ln3b, d);
        }

        if (cfg_.g_mapping == GMapping::hadamard) {
            g_ = add_param("g.w", Tensor<T>::ones({d}));
        } else {
            g_ = add_param("g.w", uniform_init(init, {d, d}, d, d));
        }

        build_pos_encoding();
    }

    const ModelConfig& config() const { return cfg_; }

    // named learnable tensors in construction order; the order is the
    // contract for optimizer state and checkpoints
    const std::vector<std::pair<std::string, Tensor<T>>>& parameters() const { return params_; }

    void set_training(bool on) { training_ = on; }
    bool training() const { return training_; }
    Rng& dropout_rng() { return drop_rng_; }

    Tensor<T> encode(const std::vector<int64_t>& x_tokens) {
        check_tokens(x_tokens, "encode", cfg_.max_len);
        Tensor<T> h = embed_tokens(x_tokens, /*shifted=*/false);
        for (auto& layer : enc_) {
            h = post_ln(h, attention(h, h, layer.self, nullptr), layer.ln1g, layer.ln1b);
            h = post_ln(h, ffn(h, layer), layer.ln2g, layer.ln2b);
        }
        return h;
    }

    // logits[i] = unnormalized p(y_i | y_{<i}, memory); the last input
    // token never enters the computation because of the shift
    Tensor<T> decode_teacher_forced(const Tensor<T>& memory,
                                    const std::vector<int64_t>& y_tokens) {
        check_tokens(y_tokens, "decode", cfg_.max_len);
        Tensor<T> mask = causal_mask(static_cast<int64_t>(y_tokens.size()));
        Tensor<T> h = decoder_stack(memory, y_tokens, &mask, /*shifted=*/true);
        return matmul(h, head_);
    }

    // pooled [CLS] hidden state of the non-causal pass over [CLS];y, mapped
    // through g; cls_id is passed in so the model stays vocab-agnostic
    Tensor<T> represent(const std::vector<int64_t>& x_tokens,
                        const std::vector<int64_t>& y_tokens, int64_t cls_id) {
        if (y_tokens.empty()) throw ValidationError("represent: empty target sequence");
        Tensor<T> memory = encode(x_tokens);
        return represent_with_memory(memory, y_tokens, cls_id);
    }

    Tensor<T> represent_with_memory(const Tensor<T>& memory, const std::vector<int64_t>& y_tokens,
                                    int64_t cls_id) {
        if (y_tokens.empty()) throw ValidationError("represent: empty target sequence");
        std::vector<int64_t> seq;
        seq.reserve(y_tokens.size() + 1);
        seq.push_back(cls_id);
        seq.insert(seq.end(), y_tokens.begin(), y_tokens.end());
        check_tokens(seq, "represent", cfg_.max_len);
        Tensor<T> h = decoder_stack(memory, seq, nullptr, /*shifted=*/false);
        Tensor<T> pooled = reshape(rows(h, {0}), {cfg_.d_model});
        return map_g(pooled);
    }

    Tensor<T> map_g(const Tensor<T>& h) {
        if (h.rank() != 1 || h.dim(0) != cfg_.d_model)
            throw ValidationError("map_g: expected a length-" + std::to_string(cfg_.d_model) +
                                  " vector");
        if (cfg_.g_mapping == GMapping::hadamard) return mul(h, g_);
        return reshape(matmul(reshape(h, {1, cfg_.d_model}), g_), {cfg_.d_model});
    }

    // logits over the next token after the given prefix; forward-only use.
    // The appended placeholder id is dropped by the shift, so the returned
    // row conditions on exactly the prefix.
    Tensor<T> next_logits(const Tensor<T>& memory, const std::vector<int64_t>& prefix) {
        if (prefix.empty()) throw ValidationError("next_logits: empty prefix");
        std::vector<int64_t> extended = prefix;
        extended.push_back(0);
        Tensor<T> logits = decode_teacher_forced(memory, extended);
        return reshape(rows(logits, {static_cast<int64_t>(prefix.size())}), {cfg_.vocab_size});
    }

private:
    struct AttnWeights {
        Tensor<T> wq, bq, wk, bk, wv, bv, wo, bo;
    };
    struct EncLayer {
        AttnWeights self;
        Tensor<T> w1, b1, w2, b2;
        Tensor<T> ln1g, ln1b, ln2g, ln2b;
    };
    struct DecLayer {
        AttnWeights self, cross;
        Tensor<T> w1, b1, w2, b2;
        Tensor<T> ln1g, ln1b, ln2g, ln2b, ln3g, ln3b;
    };

    Tensor<T> add_param(const std::string& name, Tensor<T> t) {
        t.set_requires_grad(true);
        params_.emplace_back(name, t);
        return t;
    }

    static Tensor<T> uniform_init(Rng& rng, Shape shape, int64_t fan_in, int64_t fan_out) {
        const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        std::vector<T> v(shape_numel(shape));
        for (auto& x : v) x = static_cast<T>(rng.uniform(-a, a));
        return Tensor<T>::from(std::move(shape), std::move(v));
    }

    void init_attn(Rng& rng, const std::string& p, AttnWeights& w) {
        const int64_t d = cfg_.d_model;
        w.wq = add_param(p + "wq", uniform_init(rng, {d, d}, d, d));
        w.bq = add_param(p + "bq", Tensor<T>::zeros({d}));
        w.wk = add_param(p + "wk", uniform_init(rng, {d, d}, d, d));
        w.bk = add_param(p + "bk", Tensor<T>::zeros({d}));
        w.wv = add_param(p + "wv", uniform_init(rng, {d, d}, d, d));
        w.bv = add_param(p + "bv", Tensor<T>::zeros({d}));
        w.wo = add_param(p + "wo", uniform_init(rng, {d, d}, d, d));
        w.bo = add_param(p + "bo", Tensor<T>::zeros({d}));
    }

    void init_ffn(Rng& rng, const std::string& p, Tensor<T>& w1, Tensor<T>& b1, Tensor<T>& w2,
                  Tensor<T>& b2, int64_t d, int64_t f) {
        w1 = add_param(p + "ffn.w1", uniform_init(rng, {d, f}, d, f));
        b1 = add_param(p + "ffn.b1", Tensor<T>::zeros({f}));
        w2 = add_param(p + "ffn.w2", uniform_init(rng, {f, d}, f, d));
        b2 = add_param(p + "ffn.b2", Tensor<T>::zeros({d}));
    }

    void init_ln(const std::string& p, Tensor<T>& gain, Tensor<T>& bias, int64_t d) {
        gain = add_param(p + "gain", Tensor<T>::ones({d}));
        bias = add_param(p + "bias", Tensor<T>::zeros({d}));
    }

    void build_pos_encoding() {
        const int64_t d = cfg_.d_model;
        std::vector<T> pe(cfg_.max_len * d);
        for (int64_t pos = 0; pos < cfg_.max_len; ++pos) {
            for (int64_t i = 0; i < d; i += 2) {
                const double angle =
                    static_cast<double>(pos) /
                    std::pow(10000.0, static_cast<double>(i) / static_cast<double>(d));
                pe[pos * d + i] = static_cast<T>(std::sin(angle));
                if (i + 1 < d) pe[pos * d + i + 1] = static_cast<T>(std::cos(angle));
            }
        }
        pe_ = Tensor<T>::from({cfg_.max_len, d}, std::move(pe));
    }

    void check_tokens(const std::vector<int64_t>& toks, const char* where, int64_t limit) const {
        if (toks.empty()) throw ValidationError(std::string(where) + ": empty token sequence");
        if (static_cast<int64_t>(toks.size()) > limit)
            throw ValidationError(std::string(where) + ": sequence length " +
                                  std::to_string(toks.size()) + " exceeds max_len " +
                                  std::to_string(limit));
        for (int64_t t : toks)
            if (t < 0 || t >= cfg_.vocab_size)
                throw ValidationError(std::string(where) + ": token id " + std::to_string(t) +
                                      " outside vocab of size " + std::to_string(cfg_.vocab_size));
    }

    // shifted: input row 0 is a zero vector and row i holds token i-1, so
    // the final token of toks never reaches the network
    Tensor<T> embed_tokens(const std::vector<int64_t>& toks, bool shifted) {
        const int64_t n = static_cast<int64_t>(toks.size());
        std::vector<int64_t> positions(n);
        for (int64_t i = 0; i < n; ++i) positions[i] = i;
        const T scale = static_cast<T>(std::sqrt(static_cast<double>(cfg_.d_model)));
        Tensor<T> e;
        if (shifted) {
            Tensor<T> zero_row = Tensor<T>::zeros({1, cfg_.d_model});
            if (n == 1) {
                e = zero_row;
            } else {
                std::vector<int64_t> prior(toks.begin(), toks.end() - 1);
                e = concat_rows(zero_row, mul(rows(embed_, prior), scale));
            }
        } else {
            e = mul(rows(embed_, toks), scale);
        }
        Tensor<T> h = add(e, rows(pe_, positions));
        return dropout(h, cfg_.dropout, drop_rng_, training_);
    }

    Tensor<T> causal_mask(int64_t n) {
        // additive mask: 0 where key position <= query position, else -1e9
        std::vector<T> m(n * n, T(0));
        for (int64_t i = 0; i < n; ++i)
            for (int64_t j = i + 1; j < n; ++j) m[i * n + j] = T(-1e9);
        return Tensor<T>::from({n, n}, std::move(m));
    }

    // scaled dot-product attention over all heads; mask (if any) is an
    // additive [Tq, Tk] tensor applied before the softmax
    Tensor<T> attention(const Tensor<T>& q_in, const Tensor<T>& kv_in, AttnWeights& w,
                        const Tensor<T>* mask) {
        const int64_t d = cfg_.d_model;
        const int64_t heads = cfg_.n_heads;
        const int64_t dh = d / heads;
        const int64_t tq = q_in.dim(0);
        const int64_t tk = kv_in.dim(0);

        auto split = [&](const Tensor<T>& x, const Tensor<T>& wm, const Tensor<T>& bm,
                         int64_t t) {
            Tensor<T> proj = add(matmul(x, wm), bm);
            return permute(reshape(proj, {t, heads, dh}), {1, 0, 2});
        };
        Tensor<T> q = split(q_in, w.wq, w.bq, tq);
        Tensor<T> k = split(kv_in, w.wk, w.bk, tk);
        Tensor<T> v = split(kv_in, w.wv, w.bv, tk);

        Tensor<T> scores = mul(matmul(q, permute(k, {0, 2, 1})),
                               static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh))));
        if (mask != nullptr) scores = add(scores, *mask);
        Tensor<T> att = softmax(scores, -1);
        att = dropout(att, cfg_.dropout, drop_rng_, training_);
        Tensor<T> ctx = reshape(permute(matmul(att, v), {1, 0, 2}), {tq, d});
        return add(matmul(ctx, w.wo), w.bo);
    }

    template <typename Layer>
    Tensor<T> ffn(const Tensor<T>& x, Layer& l) {
        Tensor<T> h = relu(add(matmul(x, l.w1), l.b1));
        return add(matmul(h, l.w2), l.b2);
    }

    Tensor<T> post_ln(const Tensor<T>& x, const Tensor<T>& sub, const Tensor<T>& gain,
                      const Tensor<T>& bias) {
        return layer_norm(add(x, dropout(sub, cfg_.dropout, drop_rng_, training_)), gain, bias);
    }

    // self_mask == nullptr gives the full-attention representation pass
    Tensor<T> decoder_stack(const Tensor<T>& memory, const std::vector<int64_t>& y_tokens,
                            const Tensor<T>* self_mask, bool shifted) {
        if (memory.rank() != 2 || memory.dim(1) != cfg_.d_model)
            throw ValidationError("decoder: memory must be [len(x), d_model]");
        Tensor<T> h = embed_tokens(y_tokens, shifted);
        for (auto& layer : dec_) {
            h = post_ln(h, attention(h, h, layer.self, self_mask), layer.ln1g, layer.ln1b);
            h = post_ln(h, attention(h, memory, layer.cross, nullptr), layer.ln2g, layer.ln2b);
            h = post_ln(h, ffn(h, layer), layer.ln3g, layer.ln3b);
        }
        return h;
    }

    ModelConfig cfg_;
    Rng drop_rng_;
    bool training_ = false;

    std::vector<std::pair<std::string, Tensor<T>>> params_;
    Tensor<T> embed_, head_, g_, pe_;
    std::vector<EncLayer> enc_;
    std::vector<DecLayer> dec_;
};

}  // namespace wr
