#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "coir/errors.hpp"

namespace coir {

// Dense row-major tensor. No views, no strides: at this scale simplicity
// and bit-exact reproducibility beat layout tricks.
template <typename S>
struct TensorT {
    std::vector<int> shape;
    std::vector<S> data;
    bool requires_grad = false;
    std::vector<S> grad; // empty until backward touches this tensor

    TensorT() = default;
    TensorT(std::vector<int> shp, std::vector<S> values, bool rg = false)
        : shape(std::move(shp)), data(std::move(values)), requires_grad(rg) {
        if (numel_of(shape) != data.size())
            throw DimensionError("tensor data length " + std::to_string(data.size()) +
                                 " does not match shape " + shape_str(shape));
    }

    static std::size_t numel_of(const std::vector<int>& shp) {
        std::size_t n = 1;
        for (int d : shp) n *= static_cast<std::size_t>(d);
        return n;
    }

    static std::string shape_str(const std::vector<int>& shp) {
        std::string s = "[";
        for (std::size_t i = 0; i < shp.size(); ++i) {
            if (i) s += "x";
            s += std::to_string(shp[i]);
        }
        return s + "]";
    }

    static TensorT zeros(std::vector<int> shp, bool rg = false) {
        std::size_t n = numel_of(shp);
        return TensorT(std::move(shp), std::vector<S>(n, S(0)), rg);
    }

    static TensorT full(std::vector<int> shp, S value, bool rg = false) {
        std::size_t n = numel_of(shp);
        return TensorT(std::move(shp), std::vector<S>(n, value), rg);
    }

    static TensorT scalar(S value) { return TensorT({1}, {value}); }

    std::size_t numel() const { return data.size(); }
    int rows() const { return shape.empty() ? 0 : shape[0]; }
    int cols() const { return shape.size() < 2 ? 1 : shape[1]; }

    S& at(int i, int j) { return data[static_cast<std::size_t>(i) * cols() + j]; }
    S at(int i, int j) const { return data[static_cast<std::size_t>(i) * cols() + j]; }

    void ensure_grad() {
        if (grad.size() != data.size()) grad.assign(data.size(), S(0));
    }

    template <typename T>
    TensorT<T> cast() const {
        std::vector<T> out(data.size());
        for (std::size_t i = 0; i < data.size(); ++i) out[i] = static_cast<T>(data[i]);
        return TensorT<T>(shape, std::move(out), requires_grad);
    }
};

using Tensor = TensorT<float>;

using ValueId = int;

// Reverse-mode tape. Nodes are appended in creation order, so inputs
// always precede the operations that consume them; backward is a single
// reverse sweep that runs each recorded rule exactly once. Gradient
// accumulation order is therefore fixed by construction order, which makes
// repeated runs bit-identical.
//
// A tape is single-writer. Concurrency across disjoint tapes is fine.
template <typename S>
class TapeT {
public:
    TapeT() = default;
    TapeT(const TapeT&) = delete;
    TapeT& operator=(const TapeT&) = delete;

    ValueId push(TensorT<S> t) {
        nodes_.push_back(std::move(t));
        return static_cast<ValueId>(nodes_.size() - 1);
    }

    ValueId push_leaf(const TensorT<S>& t, bool requires_grad) {
        TensorT<S> copy = t;
        copy.requires_grad = requires_grad;
        copy.grad.clear();
        return push(std::move(copy));
    }

    const TensorT<S>& val(ValueId id) const { return nodes_[check(id)]; }
    std::size_t size() const { return nodes_.size(); }

    // Gradient buffer of a node; empty if backward never reached it.
    const std::vector<S>& grad(ValueId id) const { return nodes_[check(id)].grad; }

    // ---- generic recording -------------------------------------------------

    // Record a new node with an externally supplied backward rule. The rule
    // receives the tape and the output id; it reads grad(out) and accumulates
    // into the inputs' grad buffers. Used by the loss functions.
    ValueId custom(const std::vector<ValueId>& inputs, TensorT<S> out,
                   std::function<void(TapeT<S>&, ValueId)> backward_rule) {
        bool rg = false;
        for (ValueId in : inputs) rg = rg || nodes_[check(in)].requires_grad;
        out.requires_grad = rg;
        ValueId id = push(std::move(out));
        if (rg) records_.push_back({id, std::move(backward_rule)});
        return id;
    }

    TensorT<S>& node(ValueId id) { return nodes_[check(id)]; }

    // ---- primitive operations ----------------------------------------------

    ValueId matmul(ValueId a, ValueId b) {
        const auto& A = val(a);
        const auto& B = val(b);
        if (A.shape.size() != 2 || B.shape.size() != 2 || A.shape[1] != B.shape[0])
            throw DimensionError("matmul: incompatible shapes " +
                                 TensorT<S>::shape_str(A.shape) + " and " +
                                 TensorT<S>::shape_str(B.shape));
        const int m = A.shape[0], k = A.shape[1], n = B.shape[1];
        TensorT<S> C = TensorT<S>::zeros({m, n});
        for (int i = 0; i < m; ++i) {
            const S* arow = &A.data[static_cast<std::size_t>(i) * k];
            S* crow = &C.data[static_cast<std::size_t>(i) * n];
            for (int l = 0; l < k; ++l) {
                const S av = arow[l];
                const S* brow = &B.data[static_cast<std::size_t>(l) * n];
                for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
            }
        }
        return custom({a, b}, std::move(C), [a, b, m, k, n](TapeT<S>& t, ValueId out) {
            const auto& g = t.node(out).grad;
            auto& An = t.node(a);
            auto& Bn = t.node(b);
            if (An.requires_grad) {
                An.ensure_grad();
                // dA = dC * B^T, computed as row-dot-row to stay contiguous
                for (int i = 0; i < m; ++i) {
                    const S* grow = &g[static_cast<std::size_t>(i) * n];
                    S* darow = &An.grad[static_cast<std::size_t>(i) * k];
                    for (int l = 0; l < k; ++l) {
                        const S* brow = &Bn.data[static_cast<std::size_t>(l) * n];
                        S acc = S(0);
                        for (int j = 0; j < n; ++j) acc += grow[j] * brow[j];
                        darow[l] += acc;
                    }
                }
            }
            if (Bn.requires_grad) {
                Bn.ensure_grad();
                // dB = A^T * dC
                for (int l = 0; l < k; ++l) {
                    S* dbrow = &Bn.grad[static_cast<std::size_t>(l) * n];
                    for (int i = 0; i < m; ++i) {
                        const S av = An.data[static_cast<std::size_t>(i) * k + l];
                        const S* grow = &g[static_cast<std::size_t>(i) * n];
                        for (int j = 0; j < n; ++j) dbrow[j] += av * grow[j];
                    }
                }
            }
        });
    }

    ValueId transpose(ValueId a) {
        const auto& A = val(a);
        if (A.shape.size() != 2)
            throw DimensionError("transpose: need 2-d tensor, got " +
                                 TensorT<S>::shape_str(A.shape));
        const int m = A.shape[0], n = A.shape[1];
        TensorT<S> C = TensorT<S>::zeros({n, m});
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j) C.data[static_cast<std::size_t>(j) * m + i] = A.data[static_cast<std::size_t>(i) * n + j];
        return custom({a}, std::move(C), [a, m, n](TapeT<S>& t, ValueId out) {
            auto& An = t.node(a);
            if (!An.requires_grad) return;
            An.ensure_grad();
            const auto& g = t.node(out).grad;
            for (int j = 0; j < n; ++j)
                for (int i = 0; i < m; ++i)
                    An.grad[static_cast<std::size_t>(i) * n + j] += g[static_cast<std::size_t>(j) * m + i];
        });
    }

    ValueId add(ValueId a, ValueId b) {
        const auto& A = val(a);
        const auto& B = val(b);
        if (A.shape != B.shape)
            throw DimensionError("add: shape mismatch " + TensorT<S>::shape_str(A.shape) +
                                 " vs " + TensorT<S>::shape_str(B.shape));
        TensorT<S> C = A;
        C.requires_grad = false;
        C.grad.clear();
        for (std::size_t i = 0; i < C.data.size(); ++i) C.data[i] += B.data[i];
        return custom({a, b}, std::move(C), [a, b](TapeT<S>& t, ValueId out) {
            const auto& g = t.node(out).grad;
            auto& An = t.node(a);
            auto& Bn = t.node(b);
            if (An.requires_grad) {
                An.ensure_grad();
                for (std::size_t i = 0; i < g.size(); ++i) An.grad[i] += g[i];
            }
            if (Bn.requires_grad) {
                Bn.ensure_grad();
                for (std::size_t i = 0; i < g.size(); ++i) Bn.grad[i] += g[i];
            }
        });
    }

    ValueId mul(ValueId a, ValueId b) {
        const auto& A = val(a);
        const auto& B = val(b);
        if (A.shape != B.shape)
            throw DimensionError("mul: shape mismatch " + TensorT<S>::shape_str(A.shape) +
                                 " vs " + TensorT<S>::shape_str(B.shape));
        TensorT<S> C = A;
        C.requires_grad = false;
        C.grad.clear();
        for (std::size_t i = 0; i < C.data.size(); ++i) C.data[i] *= B.data[i];
        return custom({a, b}, std::move(C), [a, b](TapeT<S>& t, ValueId out) {
            const auto& g = t.node(out).grad;
            auto& An = t.node(a);
            auto& Bn = t.node(b);
            if (An.requires_grad) {
                An.ensure_grad();
                for (std::size_t i = 0; i < g.size(); ++i) An.grad[i] += g[i] * Bn.data[i];
            }
            if (Bn.requires_grad) {
                Bn.ensure_grad();
                for (std::size_t i = 0; i < g.size(); ++i) Bn.grad[i] += g[i] * An.data[i];
            }
        });
    }

    ValueId scale(ValueId a, S c) {
        TensorT<S> C = val(a);
        C.requires_grad = false;
        C.grad.clear();
        for (auto& v : C.data) v *= c;
        return custom({a}, std::move(C), [a, c](TapeT<S>& t, ValueId out) {
            auto& An = t.node(a);
            if (!An.requires_grad) return;
            An.ensure_grad();
            const auto& g = t.node(out).grad;
            for (std::size_t i = 0; i < g.size(); ++i) An.grad[i] += g[i] * c;
        });
    }

    // x[m x n] + v[n] broadcast over rows (bias add).
    ValueId add_rowvec(ValueId a, ValueId v) {
        const auto& A = val(a);
        const auto& V = val(v);
        const int n = A.cols();
        if (static_cast<int>(V.numel()) != n)
            throw DimensionError("add_rowvec: vector length " + std::to_string(V.numel()) +
                                 " vs row width " + std::to_string(n));
        TensorT<S> C = A;
        C.requires_grad = false;
        C.grad.clear();
        const int m = A.rows();
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j) C.data[static_cast<std::size_t>(i) * n + j] += V.data[j];
        return custom({a, v}, std::move(C), [a, v, m, n](TapeT<S>& t, ValueId out) {
            const auto& g = t.node(out).grad;
            auto& An = t.node(a);
            auto& Vn = t.node(v);
            if (An.requires_grad) {
                An.ensure_grad();
                for (std::size_t i = 0; i < g.size(); ++i) An.grad[i] += g[i];
            }
            if (Vn.requires_grad) {
                Vn.ensure_grad();
                for (int i = 0; i < m; ++i)
                    for (int j = 0; j < n; ++j) Vn.grad[j] += g[static_cast<std::size_t>(i) * n + j];
            }
        });
    }

    // Row-wise softmax with per-row max subtraction.
    ValueId softmax_rows(ValueId a) {
        const auto& A = val(a);
        if (A.shape.size() != 2 || A.shape[1] < 1)
            throw DimensionError("softmax_rows: need m x n with n >= 1, got " +
                                 TensorT<S>::shape_str(A.shape));
        for (S x : A.data)
            if (std::isnan(static_cast<double>(x)))
                throw NumericError("softmax_rows: NaN input");
        const int m = A.shape[0], n = A.shape[1];
        TensorT<S> C = TensorT<S>::zeros({m, n});
        for (int i = 0; i < m; ++i) {
            const S* row = &A.data[static_cast<std::size_t>(i) * n];
            S* orow = &C.data[static_cast<std::size_t>(i) * n];
            S mx = row[0];
            for (int j = 1; j < n; ++j) mx = std::max(mx, row[j]);
            S sum = S(0);
            for (int j = 0; j < n; ++j) {
                orow[j] = std::exp(row[j] - mx);
                sum += orow[j];
            }
            for (int j = 0; j < n; ++j) orow[j] /= sum;
        }
        return custom({a}, std::move(C), [a, m, n](TapeT<S>& t, ValueId out) {
            auto& An = t.node(a);
            if (!An.requires_grad) return;
            An.ensure_grad();
            const auto& g = t.node(out).grad;
            const auto& s = t.node(out).data;
            for (int i = 0; i < m; ++i) {
                const std::size_t off = static_cast<std::size_t>(i) * n;
                S dot = S(0);
                for (int j = 0; j < n; ++j) dot += g[off + j] * s[off + j];
                for (int j = 0; j < n; ++j) An.grad[off + j] += s[off + j] * (g[off + j] - dot);
            }
        });
    }

    // Per-row layer norm with affine parameters; variance is the biased
    // (1/n) estimate.
    ValueId layer_norm(ValueId a, ValueId gamma, ValueId beta, S eps) {
        if (!(eps > S(0))) throw ContractError("layer_norm: eps must be > 0");
        const auto& A = val(a);
        const int m = A.rows(), n = A.cols();
        if (static_cast<int>(val(gamma).numel()) != n || static_cast<int>(val(beta).numel()) != n)
            throw DimensionError("layer_norm: gamma/beta length must equal row width " +
                                 std::to_string(n));
        TensorT<S> C = TensorT<S>::zeros({m, n});
        std::vector<S> inv_std(m), xhat(A.data.size());
        const auto& G = val(gamma);
        const auto& Bt = val(beta);
        for (int i = 0; i < m; ++i) {
            const std::size_t off = static_cast<std::size_t>(i) * n;
            S mean = S(0);
            for (int j = 0; j < n; ++j) mean += A.data[off + j];
            mean /= static_cast<S>(n);
            S var = S(0);
            for (int j = 0; j < n; ++j) {
                const S d = A.data[off + j] - mean;
                var += d * d;
            }
            var /= static_cast<S>(n);
            const S istd = S(1) / std::sqrt(var + eps);
            inv_std[i] = istd;
            for (int j = 0; j < n; ++j) {
                const S xh = (A.data[off + j] - mean) * istd;
                xhat[off + j] = xh;
                C.data[off + j] = xh * G.data[j] + Bt.data[j];
            }
        }
        return custom({a, gamma, beta}, std::move(C),
                      [a, gamma, beta, m, n, inv_std = std::move(inv_std),
                       xhat = std::move(xhat)](TapeT<S>& t, ValueId out) {
            const auto& g = t.node(out).grad;
            auto& An = t.node(a);
            auto& Gn = t.node(gamma);
            auto& Bn = t.node(beta);
            if (Gn.requires_grad) {
                Gn.ensure_grad();
                for (int i = 0; i < m; ++i)
                    for (int j = 0; j < n; ++j)
                        Gn.grad[j] += g[static_cast<std::size_t>(i) * n + j] * xhat[static_cast<std::size_t>(i) * n + j];
            }
            if (Bn.requires_grad) {
                Bn.ensure_grad();
                for (int i = 0; i < m; ++i)
                    for (int j = 0; j < n; ++j) Bn.grad[j] += g[static_cast<std::size_t>(i) * n + j];
            }
            if (An.requires_grad) {
                An.ensure_grad();
                for (int i = 0; i < m; ++i) {
                    const std::size_t off = static_cast<std::size_t>(i) * n;
                    S sum_dxhat = S(0), sum_dxhat_xhat = S(0);
                    for (int j = 0; j < n; ++j) {
                        const S dxh = g[off + j] * Gn.data[j];
                        sum_dxhat += dxh;
                        sum_dxhat_xhat += dxh * xhat[off + j];
                    }
                    const S inv_n = S(1) / static_cast<S>(n);
                    for (int j = 0; j < n; ++j) {
                        const S dxh = g[off + j] * Gn.data[j];
                        An.grad[off + j] += inv_std[i] *
                            (dxh - inv_n * sum_dxhat - xhat[off + j] * inv_n * sum_dxhat_xhat);
                    }
                }
            }
        });
    }

    // Tanh-approximation GELU (constant 0.044715); closed-form derivative.
    ValueId gelu(ValueId a) {
        constexpr double kC = 0.044715;
        const double k = std::sqrt(2.0 / 3.14159265358979323846);
        TensorT<S> C = val(a);
        C.requires_grad = false;
        C.grad.clear();
        for (auto& v : C.data) {
            const double x = static_cast<double>(v);
            const double u = k * (x + kC * x * x * x);
            v = static_cast<S>(0.5 * x * (1.0 + std::tanh(u)));
        }
        return custom({a}, std::move(C), [a, k, kC](TapeT<S>& t, ValueId out) {
            auto& An = t.node(a);
            if (!An.requires_grad) return;
            An.ensure_grad();
            const auto& g = t.node(out).grad;
            for (std::size_t i = 0; i < g.size(); ++i) {
                const double x = static_cast<double>(An.data[i]);
                const double u = k * (x + kC * x * x * x);
                const double th = std::tanh(u);
                const double du = k * (1.0 + 3.0 * kC * x * x);
                const double d = 0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * du;
                An.grad[i] += g[i] * static_cast<S>(d);
            }
        });
    }

    // Gather rows of `table` by id; backward scatter-adds into the table
    // in ascending output-row order.
    ValueId embedding_lookup(ValueId table, const std::vector<int>& ids) {
        const auto& T = val(table);
        if (T.shape.size() != 2)
            throw DimensionError("embedding_lookup: table must be 2-d, got " +
                                 TensorT<S>::shape_str(T.shape));
        const int vocab = T.shape[0], d = T.shape[1];
        for (int id : ids)
            if (id < 0 || id >= vocab)
                throw IndexError("embedding_lookup: id " + std::to_string(id) +
                                 " out of range [0," + std::to_string(vocab) + ")");
        TensorT<S> C = TensorT<S>::zeros({static_cast<int>(ids.size()), d});
        for (std::size_t i = 0; i < ids.size(); ++i)
            for (int j = 0; j < d; ++j)
                C.data[i * d + j] = T.data[static_cast<std::size_t>(ids[i]) * d + j];
        return custom({table}, std::move(C), [table, ids, d](TapeT<S>& t, ValueId out) {
            auto& Tn = t.node(table);
            if (!Tn.requires_grad) return;
            Tn.ensure_grad();
            const auto& g = t.node(out).grad;
            for (std::size_t i = 0; i < ids.size(); ++i)
                for (int j = 0; j < d; ++j)
                    Tn.grad[static_cast<std::size_t>(ids[i]) * d + j] += g[i * d + j];
        });
    }

    // Normalize the flattened tensor to unit L2 norm.
    ValueId l2_normalize(ValueId a) {
        const auto& A = val(a);
        double norm_sq = 0.0;
        for (S v : A.data) norm_sq += static_cast<double>(v) * static_cast<double>(v);
        const S norm = static_cast<S>(std::sqrt(norm_sq));
        if (!(norm > S(1e-12)))
            throw DegenerateVectorError("l2_normalize: norm " + std::to_string(static_cast<double>(norm)) +
                                        " below 1e-12");
        TensorT<S> C = A;
        C.requires_grad = false;
        C.grad.clear();
        for (auto& v : C.data) v /= norm;
        return custom({a}, std::move(C), [a, norm](TapeT<S>& t, ValueId out) {
            auto& An = t.node(a);
            if (!An.requires_grad) return;
            An.ensure_grad();
            const auto& g = t.node(out).grad;
            const auto& y = t.node(out).data;
            S dot = S(0);
            for (std::size_t i = 0; i < g.size(); ++i) dot += g[i] * y[i];
            for (std::size_t i = 0; i < g.size(); ++i) An.grad[i] += (g[i] - dot * y[i]) / norm;
        });
    }

    ValueId slice_rows(ValueId a, int r0, int nrows) {
        const auto& A = val(a);
        const int m = A.rows(), n = A.cols();
        if (r0 < 0 || nrows < 1 || r0 + nrows > m)
            throw DimensionError("slice_rows: [" + std::to_string(r0) + "," +
                                 std::to_string(r0 + nrows) + ") out of " + std::to_string(m));
        TensorT<S> C = TensorT<S>::zeros({nrows, n});
        std::copy(A.data.begin() + static_cast<std::size_t>(r0) * n,
                  A.data.begin() + static_cast<std::size_t>(r0 + nrows) * n, C.data.begin());
        return custom({a}, std::move(C), [a, r0, nrows, n](TapeT<S>& t, ValueId out) {
            auto& An = t.node(a);
            if (!An.requires_grad) return;
            An.ensure_grad();
            const auto& g = t.node(out).grad;
            for (std::size_t i = 0; i < g.size(); ++i)
                An.grad[static_cast<std::size_t>(r0) * n + i] += g[i];
        });
    }

    ValueId slice_cols(ValueId a, int c0, int ncols) {
        const auto& A = val(a);
        const int m = A.rows(), n = A.cols();
        if (c0 < 0 || ncols < 1 || c0 + ncols > n)
            throw DimensionError("slice_cols: [" + std::to_string(c0) + "," +
                                 std::to_string(c0 + ncols) + ") out of " + std::to_string(n));
        TensorT<S> C = TensorT<S>::zeros({m, ncols});
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < ncols; ++j)
                C.data[static_cast<std::size_t>(i) * ncols + j] = A.data[static_cast<std::size_t>(i) * n + c0 + j];
        return custom({a}, std::move(C), [a, c0, ncols, m, n](TapeT<S>& t, ValueId out) {
            auto& An = t.node(a);
            if (!An.requires_grad) return;
            An.ensure_grad();
            const auto& g = t.node(out).grad;
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < ncols; ++j)
                    An.grad[static_cast<std::size_t>(i) * n + c0 + j] += g[static_cast<std::size_t>(i) * ncols + j];
        });
    }

    ValueId concat_rows(const std::vector<ValueId>& parts) {
        if (parts.empty()) throw ContractError("concat_rows: no parts");
        const int n = val(parts[0]).cols();
        int m = 0;
        for (ValueId p : parts) {
            if (val(p).cols() != n)
                throw DimensionError("concat_rows: width mismatch");
            m += val(p).rows();
        }
        TensorT<S> C = TensorT<S>::zeros({m, n});
        std::size_t off = 0;
        for (ValueId p : parts) {
            const auto& P = val(p);
            std::copy(P.data.begin(), P.data.end(), C.data.begin() + off);
            off += P.data.size();
        }
        return custom(parts, std::move(C), [parts](TapeT<S>& t, ValueId out) {
            const auto& g = t.node(out).grad;
            std::size_t off2 = 0;
            for (ValueId p : parts) {
                auto& Pn = t.node(p);
                const std::size_t len = Pn.data.size();
                if (Pn.requires_grad) {
                    Pn.ensure_grad();
                    for (std::size_t i = 0; i < len; ++i) Pn.grad[i] += g[off2 + i];
                }
                off2 += len;
            }
        });
    }

    ValueId concat_cols(const std::vector<ValueId>& parts) {
        if (parts.empty()) throw ContractError("concat_cols: no parts");
        const int m = val(parts[0]).rows();
        int n = 0;
        std::vector<int> widths;
        for (ValueId p : parts) {
            if (val(p).rows() != m)
                throw DimensionError("concat_cols: height mismatch");
            widths.push_back(val(p).cols());
            n += widths.back();
        }
        TensorT<S> C = TensorT<S>::zeros({m, n});
        int c0 = 0;
        for (std::size_t pi = 0; pi < parts.size(); ++pi) {
            const auto& P = val(parts[pi]);
            const int w = widths[pi];
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < w; ++j)
                    C.data[static_cast<std::size_t>(i) * n + c0 + j] = P.data[static_cast<std::size_t>(i) * w + j];
            c0 += w;
        }
        return custom(parts, std::move(C), [parts, widths, m, n](TapeT<S>& t, ValueId out) {
            const auto& g = t.node(out).grad;
            int c0g = 0;
            for (std::size_t pi = 0; pi < parts.size(); ++pi) {
                auto& Pn = t.node(parts[pi]);
                const int w = widths[pi];
                if (Pn.requires_grad) {
                    Pn.ensure_grad();
                    for (int i = 0; i < m; ++i)
                        for (int j = 0; j < w; ++j)
                            Pn.grad[static_cast<std::size_t>(i) * w + j] += g[static_cast<std::size_t>(i) * n + c0g + j];
                }
                c0g += w;
            }
        });
    }

    ValueId sum(ValueId a) {
        const auto& A = val(a);
        S acc = S(0);
        for (S v : A.data) acc += v;
        return custom({a}, TensorT<S>::scalar(acc), [a](TapeT<S>& t, ValueId out) {
            auto& An = t.node(a);
            if (!An.requires_grad) return;
            An.ensure_grad();
            const S g = t.node(out).grad[0];
            for (auto& gv : An.grad) gv += g;
        });
    }

    ValueId mean(ValueId a) {
        const auto& A = val(a);
        const S n = static_cast<S>(A.numel());
        return scale(sum(a), S(1) / n);
    }

    // Dot product of two same-size tensors (flattened).
    ValueId dot(ValueId a, ValueId b) {
        const auto& A = val(a);
        const auto& B = val(b);
        if (A.numel() != B.numel())
            throw DimensionError("dot: size mismatch " + std::to_string(A.numel()) + " vs " +
                                 std::to_string(B.numel()));
        S acc = S(0);
        for (std::size_t i = 0; i < A.numel(); ++i) acc += A.data[i] * B.data[i];
        return custom({a, b}, TensorT<S>::scalar(acc), [a, b](TapeT<S>& t, ValueId out) {
            const S g = t.node(out).grad[0];
            auto& An = t.node(a);
            auto& Bn = t.node(b);
            if (An.requires_grad) {
                An.ensure_grad();
                for (std::size_t i = 0; i < An.data.size(); ++i) An.grad[i] += g * Bn.data[i];
            }
            if (Bn.requires_grad) {
                Bn.ensure_grad();
                for (std::size_t i = 0; i < Bn.data.size(); ++i) Bn.grad[i] += g * An.data[i];
            }
        });
    }

    // ---- backward ------------------------------------------------------------

    // Reverse sweep from a scalar loss. d(loss)/d(loss) = 1.
    void backward(ValueId loss) {
        auto& L = node(loss);
        if (L.numel() != 1)
            throw ContractError("backward: loss must be scalar, got shape " +
                                TensorT<S>::shape_str(L.shape));
        L.ensure_grad();
        L.grad[0] = S(1);
        sweep();
    }

    // Reverse sweep from externally supplied output gradients (used when a
    // separate tape owns the loss).
    void backward_from(const std::vector<std::pair<ValueId, std::vector<S>>>& seeds) {
        for (const auto& [id, g] : seeds) {
            auto& N = node(id);
            if (g.size() != N.data.size())
                throw DimensionError("backward_from: seed size mismatch");
            N.ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) N.grad[i] += g[i];
        }
        sweep();
    }

private:
    std::size_t check(ValueId id) const {
        if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size())
            throw IndexError("tape: bad value id " + std::to_string(id));
        return static_cast<std::size_t>(id);
    }

    void sweep() {
        for (auto it = records_.rbegin(); it != records_.rend(); ++it) {
            if (nodes_[static_cast<std::size_t>(it->out)].grad.empty()) continue;
            it->rule(*this, it->out);
        }
    }

    struct Record {
        ValueId out;
        std::function<void(TapeT<S>&, ValueId)> rule;
    };

    std::vector<TensorT<S>> nodes_;
    std::vector<Record> records_;
};

using Tape = TapeT<float>;

// Scaled dot-product attention softmax(Q K^T / sqrt(d_head)) V, split into
// n_heads groups of columns. With n_heads == 1 this is exactly the
// single-head closed formula over the full width.
template <typename S>
ValueId attention(TapeT<S>& tape, ValueId q, ValueId k, ValueId v, int n_heads) {
    const auto& Q = tape.val(q);
    const auto& K = tape.val(k);
    const auto& V = tape.val(v);
    const int d = Q.cols();
    if (K.cols() != d || V.cols() != d)
        throw DimensionError("attention: width mismatch q/k/v: " + std::to_string(d) + "/" +
                             std::to_string(K.cols()) + "/" + std::to_string(V.cols()));
    if (K.rows() != V.rows())
        throw DimensionError("attention: key/value row counts differ");
    if (n_heads < 1 || d % n_heads != 0)
        throw DimensionError("attention: width " + std::to_string(d) +
                             " not divisible by heads " + std::to_string(n_heads));
    const int dh = d / n_heads;
    const S inv_sqrt = static_cast<S>(1.0 / std::sqrt(static_cast<double>(dh)));
    std::vector<ValueId> heads;
    heads.reserve(static_cast<std::size_t>(n_heads));
    for (int h = 0; h < n_heads; ++h) {
        ValueId qh = (n_heads == 1) ? q : tape.slice_cols(q, h * dh, dh);
        ValueId kh = (n_heads == 1) ? k : tape.slice_cols(k, h * dh, dh);
        ValueId vh = (n_heads == 1) ? v : tape.slice_cols(v, h * dh, dh);
        ValueId scores = tape.scale(tape.matmul(qh, tape.transpose(kh)), inv_sqrt);
        heads.push_back(tape.matmul(tape.softmax_rows(scores), vh));
    }
    return n_heads == 1 ? heads[0] : tape.concat_cols(heads);
}

} // namespace coir
