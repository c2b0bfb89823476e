#pragma once

#include <cmath>
#include <cstddef>
#include <string>

#include "coir/tensor.hpp"

namespace coir {

// Result of a finite-difference gradient check. rel_err is
// |fd - analytic| / max(|fd| + |analytic|, floor), reported for the worst
// coordinate.
struct GradCheckReport {
    double max_rel_err = 0.0;
    std::size_t worst_index = 0;
    double worst_fd = 0.0;
    double worst_analytic = 0.0;

    std::string str() const {
        return "max_rel_err=" + std::to_string(max_rel_err) + " at coord " +
               std::to_string(worst_index) + " (fd=" + std::to_string(worst_fd) +
               ", analytic=" + std::to_string(worst_analytic) + ")";
    }
};

// Central-difference check of a scalar-valued tensor function against the
// tape's analytic gradients.
//
// `builder` must be callable as builder(TapeT<S>&, ValueId) -> ValueId for
// both S = float and S = double, returning the scalar loss node for an
// input leaf. Finite differences are always evaluated through the float64
// path, which keeps the oracle itself free of float32 rounding; with
// `double_mode` the analytic gradients are recomputed in float64 too.
template <typename Builder>
GradCheckReport finite_diff_check(Builder&& builder, const Tensor& x, double eps,
                                  bool double_mode = false, double denom_floor = 1e-3) {
    if (!(eps >= 1e-4 && eps <= 1e-2))
        throw ContractError("finite_diff_check: eps must be in [1e-4, 1e-2]");

    std::vector<double> analytic(x.numel());
    if (double_mode) {
        TapeT<double> tape;
        ValueId xi = tape.push_leaf(x.cast<double>(), true);
        ValueId loss = builder(tape, xi);
        if (tape.val(loss).numel() != 1)
            throw ContractError("finite_diff_check: builder must return a scalar");
        tape.backward(loss);
        const auto& g = tape.grad(xi);
        for (std::size_t i = 0; i < g.size(); ++i) analytic[i] = g[i];
    } else {
        TapeT<float> tape;
        ValueId xi = tape.push_leaf(x, true);
        ValueId loss = builder(tape, xi);
        if (tape.val(loss).numel() != 1)
            throw ContractError("finite_diff_check: builder must return a scalar");
        tape.backward(loss);
        const auto& g = tape.grad(xi);
        for (std::size_t i = 0; i < g.size(); ++i) analytic[i] = static_cast<double>(g[i]);
    }

    TensorT<double> xd = x.cast<double>();
    auto eval = [&](const TensorT<double>& p) -> double {
        TapeT<double> tape;
        ValueId xi = tape.push_leaf(p, false);
        ValueId loss = builder(tape, xi);
        return tape.val(loss).data[0];
    };

    GradCheckReport report;
    for (std::size_t i = 0; i < xd.numel(); ++i) {
        const double orig = xd.data[i];
        xd.data[i] = orig + eps;
        const double fp = eval(xd);
        xd.data[i] = orig - eps;
        const double fm = eval(xd);
        xd.data[i] = orig;
        const double fd = (fp - fm) / (2.0 * eps);
        const double denom = std::max(std::abs(fd) + std::abs(analytic[i]), denom_floor);
        const double rel = std::abs(fd - analytic[i]) / denom;
        if (rel > report.max_rel_err) {
            report.max_rel_err = rel;
            report.worst_index = i;
            report.worst_fd = fd;
            report.worst_analytic = analytic[i];
        }
    }
    return report;
}

} // namespace coir
