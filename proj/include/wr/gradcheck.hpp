#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "wr/tensor.hpp"

// Central-difference verification of tape gradients. Meant to run at
// double precision; float loses too many digits at the default step.

namespace wr {

template <typename T>
struct GradCheckReport {
    bool ok{true};
    double max_abs_err{0.0};   // worst |analytic - numeric|
    double max_rel_err{0.0};   // worst |a - n| / max(|a|, |n|, atol)
    std::string worst;         // "param[idx]" of the worst element
    int64_t checked{0};
};

// make_loss() must rebuild the whole forward pass from the current values of
// `params` and return the scalar loss. Any sampling inside it has to be
// frozen; a perturbed parameter must change the loss smoothly or the
// difference quotient is meaningless.
template <typename T>
GradCheckReport<T> grad_check(const std::function<Tensor<T>()>& make_loss,
                              const std::vector<std::pair<std::string, Tensor<T>>>& params,
                              T step = T(1e-5), T rtol = T(1e-4), T atol = T(1e-8)) {
    for (const auto& [name, handle] : params) {
        Tensor<T> p = handle;  // handles share storage; copying is cheap
        if (!p.requires_grad())
            throw ValidationError("grad_check: parameter '" + name + "' has requires_grad=false");
        p.zero_grad();
    }

    Tape<T> tape;
    {
        typename Tape<T>::Scope scope(tape);
        Tensor<T> loss = make_loss();
        tape.backward(loss);
    }

    GradCheckReport<T> rep;
    for (const auto& [name, handle] : params) {
        Tensor<T> p = handle;
        std::vector<T> analytic = p.grad();
        for (int64_t i = 0; i < p.numel(); ++i) {
            T& slot = p.value()[i];
            const T saved = slot;
            slot = saved + step;
            const T up = make_loss().item();
            slot = saved - step;
            const T dn = make_loss().item();
            slot = saved;

            const double numeric = (static_cast<double>(up) - static_cast<double>(dn)) /
                                   (2.0 * static_cast<double>(step));
            const double a = static_cast<double>(analytic[i]);
            const double abs_err = std::fabs(a - numeric);
            const double scale =
                std::max({std::fabs(a), std::fabs(numeric), static_cast<double>(atol)});
            const double rel_err = abs_err / scale;
            ++rep.checked;
            if (abs_err > rep.max_abs_err) rep.max_abs_err = abs_err;
            if (rel_err > rep.max_rel_err) {
                rep.max_rel_err = rel_err;
                rep.worst = name + "[" + std::to_string(i) + "]";
            }
            if (abs_err > static_cast<double>(atol) &&
                rel_err > static_cast<double>(rtol))
                rep.ok = false;
        }
    }
    return rep;
}

}  // namespace wr
