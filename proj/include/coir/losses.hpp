#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "coir/tensor.hpp"

namespace coir {

enum class LossVariant { Surrogate, Contrastive };

struct LossConfig {
    std::vector<int> k_set = {1, 5, 10, 50};
    double tau1 = 0.05;  // rank sharpness
    double tau2 = 0.25;  // threshold sharpness
    LossVariant variant = LossVariant::Surrogate;
    double temperature = 0.07;

    void validate() const {
        if (!(tau1 > 0.0) || !(tau2 > 0.0)) throw ContractError("loss config: tau1, tau2 must be > 0");
        if (k_set.empty()) throw ContractError("loss config: empty K set");
        for (std::size_t i = 0; i < k_set.size(); ++i) {
            if (k_set[i] < 1) throw ContractError("loss config: K values must be positive");
            if (i && k_set[i] <= k_set[i - 1]) throw ContractError("loss config: K set must be sorted");
        }
    }
};

namespace detail {
inline double sigmoid_stable(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

template <typename S>
void tempered_row_softmax(const TensorT<S>& mat, int i, int n, double temperature,
                          std::vector<double>& out) {
    double mx = -1e300;
    for (int j = 0; j < n; ++j)
        mx = std::max(mx, static_cast<double>(mat.at(i, j)) / temperature);
    double z = 0.0;
    for (int j = 0; j < n; ++j) {
        out[static_cast<std::size_t>(j)] =
            std::exp(static_cast<double>(mat.at(i, j)) / temperature - mx);
        z += out[static_cast<std::size_t>(j)];
    }
    for (int j = 0; j < n; ++j) out[static_cast<std::size_t>(j)] /= z;
}
} // namespace detail

// Smooth Recall@K surrogate over a similarity matrix sim[i][j] =
// cos(query i, target j) with one positive column per row:
//
//   rank_hat(i)  = 1 + sum_{j != p(i)} sigmoid((sim[i,j] - sim[i,p(i)]) / tau1)
//   recall_hat   = sigmoid((k + 0.5 - rank_hat(i)) / tau2)
//   loss         = 1 - mean over rows and k of recall_hat
//
// The 0.5 offset centers the soft threshold between rank k and rank k+1 so
// the tau -> 0 limit reproduces the exact metric at every integer rank.
template <typename S>
ValueId recall_surrogate_loss(TapeT<S>& tape, ValueId sim, const std::vector<int>& positives,
                              const LossConfig& cfg) {
    cfg.validate();
    const auto& M = tape.val(sim);
    if (M.shape.size() != 2) throw ContractError("recall_surrogate_loss: sim must be 2-d");
    const int B = M.rows(), N = M.cols();
    if (N < 2) throw ContractError("recall_surrogate_loss: need at least 2 candidates (no negatives)");
    if (static_cast<int>(positives.size()) != B)
        throw ContractError("recall_surrogate_loss: positives size must equal row count");
    for (int p : positives)
        if (p < 0 || p >= N) throw ContractError("recall_surrogate_loss: positive column out of range");
    for (S v : M.data)
        if (std::isnan(static_cast<double>(v))) throw NumericError("recall_surrogate_loss: NaN in sim");

    const double tau1 = cfg.tau1, tau2 = cfg.tau2;
    const auto k_set = cfg.k_set;
    double total = 0.0;
    for (int i = 0; i < B; ++i) {
        const int p = positives[i];
        const double sp = static_cast<double>(M.at(i, p));
        double rank_hat = 1.0;
        for (int j = 0; j < N; ++j) {
            if (j == p) continue;
            rank_hat += detail::sigmoid_stable((static_cast<double>(M.at(i, j)) - sp) / tau1);
        }
        for (int k : k_set)
            total += detail::sigmoid_stable((static_cast<double>(k) + 0.5 - rank_hat) / tau2);
    }
    const double loss = 1.0 - total / (static_cast<double>(B) * static_cast<double>(k_set.size()));

    return tape.custom({sim}, TensorT<S>::scalar(static_cast<S>(loss)),
                       [sim, positives, tau1, tau2, k_set, B, N](TapeT<S>& t, ValueId out) {
        auto& Sm = t.node(sim);
        if (!Sm.requires_grad) return;
        Sm.ensure_grad();
        const double g = static_cast<double>(t.node(out).grad[0]);
        const double inv_bk = 1.0 / (static_cast<double>(B) * static_cast<double>(k_set.size()));
        for (int i = 0; i < B; ++i) {
            const int p = positives[i];
            const double sp = static_cast<double>(Sm.at(i, p));
            double rank_hat = 1.0;
            std::vector<double> sig(static_cast<std::size_t>(N), 0.0);
            for (int j = 0; j < N; ++j) {
                if (j == p) continue;
                sig[static_cast<std::size_t>(j)] =
                    detail::sigmoid_stable((static_cast<double>(Sm.at(i, j)) - sp) / tau1);
                rank_hat += sig[static_cast<std::size_t>(j)];
            }
            // d(loss)/d(rank_hat_i): each k contributes sigmoid'(z)/tau2
            double a = 0.0;
            for (int k : k_set) {
                const double z = (static_cast<double>(k) + 0.5 - rank_hat) / tau2;
                const double s = detail::sigmoid_stable(z);
                a += s * (1.0 - s) / tau2;
            }
            a *= inv_bk * g;
            double sum_dsig = 0.0;
            for (int j = 0; j < N; ++j) {
                if (j == p) continue;
                const double s = sig[static_cast<std::size_t>(j)];
                const double dsig = s * (1.0 - s) / tau1;
                Sm.grad[static_cast<std::size_t>(i) * N + j] += static_cast<S>(a * dsig);
                sum_dsig += dsig;
            }
            Sm.grad[static_cast<std::size_t>(i) * N + p] -= static_cast<S>(a * sum_dsig);
        }
    });
}

// InfoNCE / contrastive loss: cross-entropy of the row softmax of
// sim / temperature against the positive column, averaged over rows.
template <typename S>
ValueId info_nce_loss(TapeT<S>& tape, ValueId sim, const std::vector<int>& positives,
                      double temperature) {
    if (!(temperature > 0.0)) throw ContractError("info_nce_loss: temperature must be > 0");
    const auto& M = tape.val(sim);
    if (M.shape.size() != 2) throw ContractError("info_nce_loss: sim must be 2-d");
    const int B = M.rows(), N = M.cols();
    if (N < 2) throw ContractError("info_nce_loss: need at least 2 candidates (no negatives)");
    if (static_cast<int>(positives.size()) != B)
        throw ContractError("info_nce_loss: positives size must equal row count");
    for (int p : positives)
        if (p < 0 || p >= N) throw ContractError("info_nce_loss: positive column out of range");
    for (S v : M.data)
        if (std::isnan(static_cast<double>(v))) throw NumericError("info_nce_loss: NaN in sim");

    double total = 0.0;
    std::vector<double> probs(static_cast<std::size_t>(N));
    for (int i = 0; i < B; ++i) {
        detail::tempered_row_softmax(M, i, N, temperature, probs);
        total += -std::log(std::max(probs[static_cast<std::size_t>(positives[i])], 1e-300));
    }
    const double loss = total / static_cast<double>(B);

    return tape.custom({sim}, TensorT<S>::scalar(static_cast<S>(loss)),
                       [sim, positives, temperature, B, N](TapeT<S>& t, ValueId out) {
        auto& Sm = t.node(sim);
        if (!Sm.requires_grad) return;
        Sm.ensure_grad();
        const double g = static_cast<double>(t.node(out).grad[0]);
        const double scale = g / (static_cast<double>(B) * temperature);
        std::vector<double> probs2(static_cast<std::size_t>(N));
        for (int i = 0; i < B; ++i) {
            detail::tempered_row_softmax(Sm, i, N, temperature, probs2);
            for (int j = 0; j < N; ++j) {
                const double onehot = (j == positives[i]) ? 1.0 : 0.0;
                Sm.grad[static_cast<std::size_t>(i) * N + j] +=
                    static_cast<S>(scale * (probs2[static_cast<std::size_t>(j)] - onehot));
            }
        }
    });
}

} // namespace coir
