#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "wr/gradcheck.hpp"
#include "wr/losses.hpp"
#include "wr/model.hpp"
#include "wr/ops.hpp"
#include "wr/rng.hpp"
#include "wr/tensor.hpp"

// Finite-difference coverage of every differentiable op plus the combined
// contrastive loss on a small full model. Each case rebuilds its forward
// pass from the current parameter values, so the difference quotients see
// exactly the graph the tape recorded.

namespace wr {

struct SuiteCase {
    std::string name;
    bool ok{false};
    int64_t checked{0};
    double max_rel_err{0.0};
    std::string worst;
};

inline bool suite_passed(const std::vector<SuiteCase>& cases) {
    for (const auto& c : cases)
        if (!c.ok) return false;
    return !cases.empty();
}

namespace detail {

// values bounded away from zero so relu/clamp kinks and log/sqrt domains
// stay untouched by the probe step
template <typename T>
std::vector<T> suite_values(Rng& rng, size_t n, double lo, double hi, bool signed_vals) {
    std::vector<T> v(n);
    for (size_t i = 0; i < n; ++i) {
        double x = lo + (hi - lo) * (static_cast<double>(rng.below(10000)) / 10000.0);
        if (signed_vals && rng.below(2) == 0) x = -x;
        v[i] = static_cast<T>(x);
    }
    return v;
}

}  // namespace detail

template <typename T>
std::vector<SuiteCase> run_gradcheck_suite(T step, T rtol) {
    std::vector<SuiteCase> cases;
    Rng rng(97);

    auto record = [&](const std::string& name,
                      const std::vector<std::pair<std::string, Tensor<T>>>& params,
                      const std::function<Tensor<T>()>& make_loss) {
        GradCheckReport<T> rep = grad_check<T>(make_loss, params, step, rtol);
        cases.push_back({name, rep.ok, rep.checked, rep.max_rel_err, rep.worst});
    };

    auto make = [&](std::initializer_list<int64_t> shape, double lo, double hi,
                    bool signed_vals) {
        Shape s(shape);
        int64_t n = 1;
        for (int64_t d : s) n *= d;
        return Tensor<T>::param(s, detail::suite_values<T>(rng, static_cast<size_t>(n), lo,
                                                           hi, signed_vals));
    };

    // a fixed mixing vector downstream of each op gives every output element
    // its own cotangent, so per-element backward paths are distinguishable
    Tensor<T> c6 = Tensor<T>::from({2, 3}, {T(0.7), T(-1.3), T(0.4), T(2.1), T(-0.6), T(1.9)});
    auto mix = [&](const Tensor<T>& x) { return sum(mul(x, c6)); };

    {
        Tensor<T> a = make({2, 3}, 0.3, 2.0, true), b = make({2, 3}, 0.3, 2.0, true);
        record("add", {{"a", a}, {"b", b}}, [&] { return mix(add(a, b)); });
    }
    {
        Tensor<T> a = make({2, 3}, 0.3, 2.0, true), b = make({2, 3}, 0.3, 2.0, true);
        record("sub", {{"a", a}, {"b", b}}, [&] { return mix(sub(a, b)); });
    }
    {
        Tensor<T> a = make({2, 3}, 0.3, 2.0, true), b = make({2, 3}, 0.3, 2.0, true);
        record("mul", {{"a", a}, {"b", b}}, [&] { return mix(mul(a, b)); });
    }
    {
        // denominators stay positive and away from zero
        Tensor<T> a = make({2, 3}, 0.3, 2.0, true), b = make({2, 3}, 0.5, 2.0, false);
        record("div", {{"a", a}, {"b", b}}, [&] { return mix(div(a, b)); });
    }
    {
        Tensor<T> a = make({2, 3}, 0.3, 2.0, true);
        record("add_scalar", {{"a", a}}, [&] { return mix(add(a, T(0.37))); });
        record("sub_from_scalar", {{"a", a}}, [&] { return mix(sub(T(1.5), a)); });
        record("mul_scalar", {{"a", a}}, [&] { return mix(mul(a, T(-2.25))); });
        record("div_scalar", {{"a", a}}, [&] { return mix(div(a, T(1.75))); });
        record("neg", {{"a", a}}, [&] { return mix(neg(a)); });
    }
    {
        Tensor<T> a = make({2, 3}, 0.3, 2.0, true);
        record("relu", {{"a", a}}, [&] { return mix(relu(a)); });
    }
    {
        Tensor<T> a = make({2, 3}, 0.3, 1.2, true);
        record("exp", {{"a", a}}, [&] { return mix(wr::exp(a)); });
    }
    {
        Tensor<T> a = make({2, 3}, 0.5, 3.0, false);
        record("log", {{"a", a}}, [&] { return mix(wr::log(a)); });
        record("sqrt", {{"a", a}}, [&] { return mix(wr::sqrt(a)); });
    }
    {
        // thresholds sit between the two value bands, far from any element
        Tensor<T> a = make({2, 3}, 0.3, 2.0, true);
        record("clamp_min", {{"a", a}}, [&] { return mix(clamp_min(a, T(0.0))); });
        record("clamp_max", {{"a", a}}, [&] { return mix(clamp_max(a, T(0.0))); });
    }
    {
        Tensor<T> a = make({2, 3}, 0.3, 1.5, true), b = make({3, 2}, 0.3, 1.5, true);
        Tensor<T> c4 = Tensor<T>::from({2, 2}, {T(0.9), T(-0.8), T(1.4), T(0.5)});
        record("matmul", {{"a", a}, {"b", b}},
               [&] { return sum(mul(matmul(a, b), c4)); });
    }
    {
        Tensor<T> a = make({2, 3}, 0.3, 2.0, true);
        Tensor<T> c3 = Tensor<T>::from({3, 2}, {T(0.7), T(-1.3), T(0.4), T(2.1), T(-0.6), T(1.9)});
        record("reshape", {{"a", a}}, [&] { return sum(mul(reshape(a, {3, 2}), c3)); });
    }
    {
        Tensor<T> a = make({2, 3, 2}, 0.3, 2.0, true);
        Tensor<T> c12 = Tensor<T>::from({2, 2, 3}, detail::suite_values<T>(rng, 12, 0.3, 2.0, true));
        record("permute", {{"a", a}},
               [&] { return sum(mul(permute(a, {2, 0, 1}), c12)); });
    }
    {
        // a repeated row id checks gradient accumulation into one source row
        Tensor<T> a = make({4, 3}, 0.3, 2.0, true);
        Tensor<T> c9 = Tensor<T>::from({3, 3}, detail::suite_values<T>(rng, 9, 0.3, 2.0, true));
        record("rows", {{"a", a}},
               [&] { return sum(mul(rows(a, {2, 0, 2}), c9)); });
    }
    {
        Tensor<T> a = make({2, 3}, 0.3, 2.0, true), b = make({1, 3}, 0.3, 2.0, true);
        Tensor<T> c9 = Tensor<T>::from({3, 3}, detail::suite_values<T>(rng, 9, 0.3, 2.0, true));
        record("concat_rows", {{"a", a}, {"b", b}},
               [&] { return sum(mul(concat_rows(a, b), c9)); });
    }
    {
        Tensor<T> a = make({3, 4}, 0.3, 2.0, true);
        Tensor<T> c3 = Tensor<T>::from({3}, {T(0.7), T(-1.3), T(0.4)});
        record("pick", {{"a", a}},
               [&] { return sum(mul(pick(a, {1, 3, 0}), c3)); });
    }
    {
        Tensor<T> a = make({2, 3}, 0.3, 2.0, true);
        record("sum", {{"a", a}}, [&] { return sum(a); });
        record("mean", {{"a", a}}, [&] { return mean(a); });
    }
    {
        Tensor<T> a = make({2, 3}, 0.3, 1.5, true);
        record("softmax", {{"a", a}}, [&] { return mix(softmax(a, -1)); });
        record("log_softmax", {{"a", a}}, [&] { return mix(log_softmax(a, -1)); });
    }
    {
        Tensor<T> x = make({2, 3}, 0.3, 2.0, true);
        Tensor<T> gain = make({3}, 0.5, 1.5, false);
        Tensor<T> bias = make({3}, 0.3, 1.0, true);
        record("layer_norm", {{"x", x}, {"gain", gain}, {"bias", bias}},
               [&] { return mix(layer_norm(x, gain, bias)); });
    }
    {
        // the mask rng is rewound on every rebuild so the dropped set is fixed
        Tensor<T> a = make({2, 3}, 0.3, 2.0, true);
        Rng drop_rng(11);
        const std::string snap = drop_rng.state();
        record("dropout", {{"a", a}}, [&] {
            drop_rng.restore(snap);
            return mix(dropout(a, 0.3, drop_rng, true));
        });
    }

    {
        ModelConfig mc;
        mc.vocab_size = 20;
        mc.d_model = 8;
        mc.n_heads = 2;
        mc.n_enc_layers = 2;
        mc.n_dec_layers = 2;
        mc.d_ffn = 16;
        mc.max_len = 24;
        mc.dropout = 0.0;
        mc.seed = 3;
        Model<T> model(mc);

        const std::vector<int64_t> context{5, 6, 7, 8};
        const std::vector<int64_t> positive{9, 10, 11};
        const std::vector<int64_t> negative{12, 13, 14};
        const std::vector<int64_t> anchor{15, 16, 17};
        WRLossConfig loss_cfg;
        record("full_model_wr_loss", model.parameters(), [&] {
            return wr_loss_with_anchor(model, context, positive, negative, anchor, loss_cfg)
                .total;
        });
    }

    return cases;
}

}  // namespace wr
