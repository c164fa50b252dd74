#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "wr/error.hpp"
#include "wr/model.hpp"

// Binary checkpoint: magic, version, element width, config JSON, meta JSON,
// named parameter tensors, optional optimizer moments, FNV-1a checksum.
// Values are raw native-endian bytes, so round trips are bit-exact.

namespace wr {

inline constexpr char kCkptMagic[8] = {'W', 'R', 'T', 'C', 'K', 'P', 'T', '\n'};
inline constexpr uint32_t kCkptVersion = 1;

// optimizer state carried through checkpoints; order matches parameters()
template <typename T>
struct OptState {
    int64_t t{0};
    std::vector<std::vector<T>> m;
    std::vector<std::vector<T>> v;

    bool empty() const { return m.empty(); }
};

inline nlohmann::json model_config_to_json(const ModelConfig& cfg) {
    return nlohmann::json{{"vocab_size", cfg.vocab_size}, {"d_model", cfg.d_model},
                          {"n_heads", cfg.n_heads},       {"n_enc_layers", cfg.n_enc_layers},
                          {"n_dec_layers", cfg.n_dec_layers}, {"d_ffn", cfg.d_ffn},
                          {"max_len", cfg.max_len},       {"dropout", cfg.dropout},
                          {"g_mapping", g_mapping_name(cfg.g_mapping)}, {"seed", cfg.seed}};
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
    ModelConfig cfg;
    try {
        cfg.vocab_size = j.at("vocab_size").get<int64_t>();
        cfg.d_model = j.at("d_model").get<int64_t>();
        cfg.n_heads = j.at("n_heads").get<int64_t>();
        cfg.n_enc_layers = j.at("n_enc_layers").get<int64_t>();
        cfg.n_dec_layers = j.at("n_dec_layers").get<int64_t>();
        cfg.d_ffn = j.at("d_ffn").get<int64_t>();
        cfg.max_len = j.at("max_len").get<int64_t>();
        cfg.dropout = j.at("dropout").get<double>();
        cfg.g_mapping = g_mapping_from(j.at("g_mapping").get<std::string>());
        cfg.seed = j.at("seed").get<int64_t>();
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("model config: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

namespace detail {

inline uint64_t fnv1a(const std::string& bytes) {
    uint64_t h = 14695981039346656037ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

struct ByteWriter {
    std::string buf;

    void raw(const void* p, size_t n) { buf.append(static_cast<const char*>(p), n); }
    void u32(uint32_t x) { raw(&x, sizeof x); }
    void u64(uint64_t x) { raw(&x, sizeof x); }
    void i64(int64_t x) { raw(&x, sizeof x); }
    void str(const std::string& s) {
        u64(s.size());
        raw(s.data(), s.size());
    }
    template <typename T>
    void vec(const std::vector<T>& v) {
        u64(v.size());
        raw(v.data(), v.size() * sizeof(T));
    }
};

struct ByteReader {
    const std::string& buf;
    size_t pos{0};

    explicit ByteReader(const std::string& b) : buf(b) {}

    void raw(void* p, size_t n) {
        if (pos + n > buf.size()) throw ComputeError("checkpoint: truncated file");
        std::memcpy(p, buf.data() + pos, n);
        pos += n;
    }
    uint32_t u32() {
        uint32_t x;
        raw(&x, sizeof x);
        return x;
    }
    uint64_t u64() {
        uint64_t x;
        raw(&x, sizeof x);
        return x;
    }
    int64_t i64() {
        int64_t x;
        raw(&x, sizeof x);
        return x;
    }
    std::string str() {
        const uint64_t n = u64();
        if (pos + n > buf.size()) throw ComputeError("checkpoint: truncated file");
        std::string s(buf, pos, n);
        pos += n;
        return s;
    }
    template <typename T>
    std::vector<T> vec() {
        const uint64_t n = u64();
        if (pos + n * sizeof(T) > buf.size())
            throw ComputeError("checkpoint: truncated file");
        std::vector<T> v(n);
        raw(v.data(), n * sizeof(T));
        return v;
    }
};

}  // namespace detail

// meta is caller-defined resume state (step, epoch, cursor, rng strings);
// the model's dropout rng is captured on top under "model_drop_rng"
template <typename T>
void save_checkpoint(const std::string& path, Model<T>& model, const OptState<T>* opt,
                     nlohmann::json meta) {
    detail::ByteWriter w;
    w.raw(kCkptMagic, sizeof kCkptMagic);
    w.u32(kCkptVersion);
    w.u32(static_cast<uint32_t>(sizeof(T)));
    w.str(model_config_to_json(model.config()).dump());
    meta["model_drop_rng"] = model.dropout_rng().state();
    w.str(meta.dump());

    const auto& params = model.parameters();
    w.u64(params.size());
    for (const auto& [name, handle] : params) {
        w.str(name);
        const Shape& shape = handle.shape();
        w.u64(shape.size());
        for (int64_t d : shape) w.i64(d);
        w.vec(handle.value());
    }

    if (opt && !opt->empty()) {
        if (opt->m.size() != params.size() || opt->v.size() != params.size())
            throw ValidationError("checkpoint: optimizer state does not match parameters");
        w.u32(1);
        w.i64(opt->t);
        for (size_t i = 0; i < params.size(); ++i) {
            w.vec(opt->m[i]);
            w.vec(opt->v[i]);
        }
    } else {
        w.u32(0);
    }

    const uint64_t sum = detail::fnv1a(w.buf);
    w.u64(sum);

    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("checkpoint: cannot write '" + path + "'");
    out.write(w.buf.data(), static_cast<std::streamsize>(w.buf.size()));
    if (!out) throw ValidationError("checkpoint: short write to '" + path + "'");
}

template <typename T>
struct LoadedCheckpoint {
    ModelConfig config;
    std::shared_ptr<Model<T>> model;
    nlohmann::json meta;
    OptState<T> opt;  // empty when the file carried none
};

// expected_vocab_size >= 0 pins the vocabulary the caller is about to use
template <typename T>
LoadedCheckpoint<T> load_checkpoint(const std::string& path, int64_t expected_vocab_size = -1) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("checkpoint: cannot open '" + path + "'");
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    if (bytes.size() < sizeof kCkptMagic + sizeof(uint64_t))
        throw ComputeError("checkpoint: truncated file");
    const uint64_t stored_sum = [&] {
        uint64_t s;
        std::memcpy(&s, bytes.data() + bytes.size() - sizeof s, sizeof s);
        return s;
    }();
    std::string body = bytes.substr(0, bytes.size() - sizeof(uint64_t));
    if (detail::fnv1a(body) != stored_sum)
        throw ComputeError("checkpoint: checksum mismatch, file is corrupted");

    detail::ByteReader r(body);
    char magic[sizeof kCkptMagic];
    r.raw(magic, sizeof magic);
    if (std::memcmp(magic, kCkptMagic, sizeof magic) != 0)
        throw ValidationError("checkpoint: bad magic, not a checkpoint file");
    const uint32_t version = r.u32();
    if (version != kCkptVersion)
        throw ValidationError("checkpoint: version " + std::to_string(version) +
                              " unsupported (expected " + std::to_string(kCkptVersion) + ")");
    const uint32_t width = r.u32();
    if (width != sizeof(T))
        throw ValidationError("checkpoint: element width " + std::to_string(width) +
                              " does not match this build's " + std::to_string(sizeof(T)));

    LoadedCheckpoint<T> out;
    try {
        out.config = model_config_from_json(nlohmann::json::parse(r.str()));
        out.meta = nlohmann::json::parse(r.str());
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("checkpoint: bad embedded JSON: ") + e.what());
    }
    if (expected_vocab_size >= 0 && out.config.vocab_size != expected_vocab_size)
        throw ValidationError("checkpoint: vocab_size " + std::to_string(out.config.vocab_size) +
                              " does not match the provided vocabulary of " +
                              std::to_string(expected_vocab_size));

    out.model = std::make_shared<Model<T>>(out.config);
    const auto& params = out.model->parameters();
    const uint64_t n_params = r.u64();
    if (n_params != params.size())
        throw ValidationError("checkpoint: parameter count mismatch");
    for (const auto& [name, handle] : params) {
        const std::string stored = r.str();
        if (stored != name)
            throw ValidationError("checkpoint: parameter '" + stored + "' where '" + name +
                                  "' was expected");
        const uint64_t rank = r.u64();
        Shape shape(rank);
        for (auto& d : shape) d = r.i64();
        if (shape != handle.shape())
            throw ValidationError("checkpoint: shape mismatch for parameter '" + name + "'");
        Tensor<T> p = handle;
        p.value() = r.template vec<T>();
        if (static_cast<int64_t>(p.value().size()) != handle.numel())
            throw ValidationError("checkpoint: size mismatch for parameter '" + name + "'");
    }

    if (r.u32() == 1) {
        out.opt.t = r.i64();
        for (size_t i = 0; i < params.size(); ++i) {
            out.opt.m.push_back(r.template vec<T>());
            out.opt.v.push_back(r.template vec<T>());
            if (static_cast<int64_t>(out.opt.m.back().size()) != params[i].second.numel() ||
                static_cast<int64_t>(out.opt.v.back().size()) != params[i].second.numel())
                throw ValidationError("checkpoint: optimizer state size mismatch");
        }
    }

    if (out.meta.contains("model_drop_rng"))
        out.model->dropout_rng().restore(out.meta["model_drop_rng"].template get<std::string>());
    return out;
}

}  // namespace wr
