// SPDX-License-Identifier: Apache-2.0

#include "uniat/tensor/ops.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include "uniat/core/error.hpp"

namespace uniat::tensor {

namespace {

constexpr std::array<std::string_view, 19> kPrimitiveNames = {
    "matmul",  "linear", "add",         "add_tiled",    "mul",        "scale", "gelu",
    "softmax", "layernorm", "batchnorm", "sum",        "mean",       "gather_rows",
    "scatter_rows", "scale_rows", "pick", "topk_mask", "attention", "restricted_nll",
};

// c[m x n] += a[m x k] * b[k x n]
template <typename T>
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c) {
    for (std::size_t i = 0; i < m; ++i) {
        T* ci = c + i * n;
        const T* ai = a + i * k;
        for (std::size_t p = 0; p < k; ++p) {
            const T av = ai[p];
            const T* bp = b + p * n;
            for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
        }
    }
}

// c[m x n] += a[k x m]^T * b[k x n]
template <typename T>
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c) {
    for (std::size_t p = 0; p < k; ++p) {
        const T* ap = a + p * m;
        const T* bp = b + p * n;
        for (std::size_t i = 0; i < m; ++i) {
            const T av = ap[i];
            T* ci = c + i * n;
            for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
        }
    }
}

// c[m x n] += a[m x k] * b[n x k]^T
template <typename T>
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c) {
    std::vector<T> bt(k * n);
    for (std::size_t j = 0; j < n; ++j)
        for (std::size_t p = 0; p < k; ++p) bt[p * n + j] = b[j * k + p];
    gemm_nn(m, n, k, a, bt.data(), c);
}

template <typename T>
void require_matrix(const Tensor<T>& t, const char* op, const char* name) {
    if (!t.defined() || t.ndim() != 2) {
        throw ShapeError(std::string(op) + ": " + name + " must be a matrix, got " +
                         (t.defined() ? shape_string(t.shape()) : std::string("undefined")));
    }
}

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
    }
}

template <typename T>
void accumulate(Tensor<T> t, std::span<const T> delta) {
    if (!t.requires_grad()) return;
    auto g = t.ensure_grad();
    for (std::size_t i = 0; i < delta.size(); ++i) g[i] += delta[i];
}

template <typename T>
T normal_cdf(T x) {
    return T(0.5) * std::erfc(-x / std::numbers::sqrt2_v<T>);
}

template <typename T>
T normal_pdf(T x) {
    return std::exp(T(-0.5) * x * x) / std::sqrt(T(2) * std::numbers::pi_v<T>);
}

}  // namespace

std::span<const std::string_view> primitive_names() { return kPrimitiveNames; }

template <typename T>
Tensor<T> matmul(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b) {
    require_matrix(a, "matmul", "a");
    require_matrix(b, "matmul", "b");
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    if (b.dim(0) != k) {
        throw ShapeError("matmul: inner dimensions disagree, " + shape_string(a.shape()) + " x " +
                         shape_string(b.shape()));
    }
    const bool tracked = tape.tracks({&a, &b});
    Tensor<T> y = Tensor<T>::zeros({m, n}, tracked);
    gemm_nn(m, n, k, a.values().data(), b.values().data(), y.values().data());
    if (tracked) {
        tape.record("matmul", y, [a, b, m, n, k](std::span<const T> dy) {
            if (a.requires_grad()) {
                auto ga = Tensor<T>(a).ensure_grad();
                gemm_nt(m, k, n, dy.data(), b.values().data(), ga.data());
            }
            if (b.requires_grad()) {
                auto gb = Tensor<T>(b).ensure_grad();
                gemm_tn(k, n, m, a.values().data(), dy.data(), gb.data());
            }
        });
    }
    return y;
}

template <typename T>
Tensor<T> linear(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias) {
    require_matrix(x, "linear", "x");
    require_matrix(w, "linear", "w");
    const std::size_t m = x.dim(0), k = x.dim(1), n = w.dim(1);
    if (w.dim(0) != k) {
        throw ShapeError("linear: inner dimensions disagree, " + shape_string(x.shape()) + " x " +
                         shape_string(w.shape()));
    }
    if (bias.defined() && bias.numel() != n) {
        throw ShapeError("linear: bias " + shape_string(bias.shape()) + " does not match " +
                         std::to_string(n) + " outputs");
    }
    const bool tracked = tape.tracks({&x, &w, &bias});
    Tensor<T> y = Tensor<T>::zeros({m, n}, tracked);
    auto yv = y.values();
    if (bias.defined()) {
        auto bv = bias.values();
        for (std::size_t i = 0; i < m; ++i) std::copy(bv.begin(), bv.end(), yv.begin() + i * n);
    }
    gemm_nn(m, n, k, x.values().data(), w.values().data(), yv.data());
    if (tracked) {
        tape.record("linear", y, [x, w, bias, m, n, k](std::span<const T> dy) {
            if (x.requires_grad()) {
                auto gx = Tensor<T>(x).ensure_grad();
                gemm_nt(m, k, n, dy.data(), w.values().data(), gx.data());
            }
            if (w.requires_grad()) {
                auto gw = Tensor<T>(w).ensure_grad();
                gemm_tn(k, n, m, x.values().data(), dy.data(), gw.data());
            }
            if (bias.defined() && bias.requires_grad()) {
                auto gb = Tensor<T>(bias).ensure_grad();
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t j = 0; j < n; ++j) gb[j] += dy[i * n + j];
            }
        });
    }
    return y;
}

template <typename T>
Tensor<T> add(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b) {
    require_same_shape(a, b, "add");
    const bool tracked = tape.tracks({&a, &b});
    std::vector<T> out(a.numel());
    auto av = a.values(), bv = b.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
    Tensor<T> y(a.shape(), std::move(out), tracked);
    if (tracked) {
        tape.record("add", y, [a, b](std::span<const T> dy) {
            accumulate(a, dy);
            accumulate(b, dy);
        });
    }
    return y;
}

template <typename T>
Tensor<T> add_tiled(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& tile) {
    require_matrix(x, "add_tiled", "x");
    require_matrix(tile, "add_tiled", "tile");
    if (x.dim(1) != tile.dim(1) || tile.dim(0) == 0 || x.dim(0) % tile.dim(0) != 0) {
        throw ShapeError("add_tiled: cannot tile " + shape_string(tile.shape()) + " over " +
                         shape_string(x.shape()));
    }
    const bool tracked = tape.tracks({&x, &tile});
    const std::size_t block = tile.numel();
    std::vector<T> out(x.values().begin(), x.values().end());
    auto tv = tile.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += tv[i % block];
    Tensor<T> y(x.shape(), std::move(out), tracked);
    if (tracked) {
        tape.record("add_tiled", y, [x, tile, block](std::span<const T> dy) {
            accumulate(x, dy);
            if (tile.requires_grad()) {
                auto gt = Tensor<T>(tile).ensure_grad();
                for (std::size_t i = 0; i < dy.size(); ++i) gt[i % block] += dy[i];
            }
        });
    }
    return y;
}

template <typename T>
Tensor<T> mul(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b) {
    require_same_shape(a, b, "mul");
    const bool tracked = tape.tracks({&a, &b});
    std::vector<T> out(a.numel());
    auto av = a.values(), bv = b.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
    Tensor<T> y(a.shape(), std::move(out), tracked);
    if (tracked) {
        tape.record("mul", y, [a, b](std::span<const T> dy) {
            if (a.requires_grad()) {
                auto ga = Tensor<T>(a).ensure_grad();
                auto bv = b.values();
                for (std::size_t i = 0; i < dy.size(); ++i) ga[i] += dy[i] * bv[i];
            }
            if (b.requires_grad()) {
                auto gb = Tensor<T>(b).ensure_grad();
                auto av = a.values();
                for (std::size_t i = 0; i < dy.size(); ++i) gb[i] += dy[i] * av[i];
            }
        });
    }
    return y;
}

template <typename T>
Tensor<T> scale(Tape<T>& tape, const Tensor<T>& a, T factor) {
    const bool tracked = tape.tracks({&a});
    std::vector<T> out(a.values().begin(), a.values().end());
    for (T& v : out) v *= factor;
    Tensor<T> y(a.shape(), std::move(out), tracked);
    if (tracked) {
        tape.record("scale", y, [a, factor](std::span<const T> dy) {
            auto ga = Tensor<T>(a).ensure_grad();
            for (std::size_t i = 0; i < dy.size(); ++i) ga[i] += dy[i] * factor;
        });
    }
    return y;
}

template <typename T>
Tensor<T> gelu(Tape<T>& tape, const Tensor<T>& x) {
    const bool tracked = tape.tracks({&x});
    std::vector<T> out(x.numel());
    auto xv = x.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] * normal_cdf(xv[i]);
    Tensor<T> y(x.shape(), std::move(out), tracked);
    if (tracked) {
        tape.record("gelu", y, [x](std::span<const T> dy) {
            auto gx = Tensor<T>(x).ensure_grad();
            auto xv = x.values();
            for (std::size_t i = 0; i < dy.size(); ++i) {
                gx[i] += dy[i] * (normal_cdf(xv[i]) + xv[i] * normal_pdf(xv[i]));
            }
        });
    }
    return y;
}

template <typename T>
Tensor<T> softmax(Tape<T>& tape, const Tensor<T>& x, std::size_t axis) {
    if (axis >= x.ndim()) {
        throw ShapeError("softmax: axis " + std::to_string(axis) + " out of range for " +
                         shape_string(x.shape()));
    }
    std::size_t outer = 1, inner = 1;
    const std::size_t len = x.dim(axis);
    for (std::size_t i = 0; i < axis; ++i) outer *= x.dim(i);
    for (std::size_t i = axis + 1; i < x.ndim(); ++i) inner *= x.dim(i);

    const bool tracked = tape.tracks({&x});
    std::vector<T> out(x.numel());
    auto xv = x.values();
    for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t in = 0; in < inner; ++in) {
            const std::size_t base = o * len * inner + in;
            T mx = -std::numeric_limits<T>::infinity();
            for (std::size_t j = 0; j < len; ++j) mx = std::max(mx, xv[base + j * inner]);
            T total = 0;
            for (std::size_t j = 0; j < len; ++j) {
                T e = std::exp(xv[base + j * inner] - mx);
                out[base + j * inner] = e;
                total += e;
            }
            for (std::size_t j = 0; j < len; ++j) out[base + j * inner] /= total;
        }
    }
    Tensor<T> y(x.shape(), std::move(out), tracked);
    if (tracked) {
        tape.record("softmax", y, [x, y, outer, inner, len](std::span<const T> dy) {
            auto gx = Tensor<T>(x).ensure_grad();
            auto yv = y.values();
            for (std::size_t o = 0; o < outer; ++o) {
                for (std::size_t in = 0; in < inner; ++in) {
                    const std::size_t base = o * len * inner + in;
                    T dot = 0;
                    for (std::size_t j = 0; j < len; ++j) {
                        const std::size_t idx = base + j * inner;
                        dot += dy[idx] * yv[idx];
                    }
                    for (std::size_t j = 0; j < len; ++j) {
                        const std::size_t idx = base + j * inner;
                        gx[idx] += yv[idx] * (dy[idx] - dot);
                    }
                }
            }
        });
    }
    return y;
}

template <typename T>
Tensor<T> layernorm(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias,
                    T eps) {
    if (x.ndim() == 0) throw ShapeError("layernorm: scalar input");
    const std::size_t n = x.shape().back();
    if (gain.numel() != n || bias.numel() != n) {
        throw ShapeError("layernorm: gain " + shape_string(gain.shape()) + " / bias " +
                         shape_string(bias.shape()) + " do not match row length " + std::to_string(n));
    }
    if (!(eps > T(0))) throw ValidationError("layernorm: eps must be positive");
    const std::size_t m = n == 0 ? 0 : x.numel() / n;
    const bool tracked = tape.tracks({&x, &gain, &bias});

    std::vector<T> xhat(x.numel()), rstd(m), out(x.numel());
    auto xv = x.values(), gv = gain.values(), bv = bias.values();
    for (std::size_t i = 0; i < m; ++i) {
        const T* row = xv.data() + i * n;
        T mu = 0;
        for (std::size_t j = 0; j < n; ++j) mu += row[j];
        mu /= T(n);
        T var = 0;
        for (std::size_t j = 0; j < n; ++j) var += (row[j] - mu) * (row[j] - mu);
        var /= T(n);
        rstd[i] = T(1) / std::sqrt(var + eps);
        for (std::size_t j = 0; j < n; ++j) {
            const T h = (row[j] - mu) * rstd[i];
            xhat[i * n + j] = h;
            out[i * n + j] = h * gv[j] + bv[j];
        }
    }
    Tensor<T> y(x.shape(), std::move(out), tracked);
    if (tracked) {
        tape.record("layernorm", y,
                    [x, gain, bias, m, n, xhat = std::move(xhat), rstd = std::move(rstd)](std::span<const T> dy) {
                        auto gv = gain.values();
                        if (gain.requires_grad()) {
                            auto gg = Tensor<T>(gain).ensure_grad();
                            for (std::size_t i = 0; i < m; ++i)
                                for (std::size_t j = 0; j < n; ++j) gg[j] += dy[i * n + j] * xhat[i * n + j];
                        }
                        if (bias.requires_grad()) {
                            auto gb = Tensor<T>(bias).ensure_grad();
                            for (std::size_t i = 0; i < m; ++i)
                                for (std::size_t j = 0; j < n; ++j) gb[j] += dy[i * n + j];
                        }
                        if (x.requires_grad()) {
                            auto gx = Tensor<T>(x).ensure_grad();
                            for (std::size_t i = 0; i < m; ++i) {
                                T mean_d = 0, mean_dh = 0;
                                for (std::size_t j = 0; j < n; ++j) {
                                    const T d = dy[i * n + j] * gv[j];
                                    mean_d += d;
                                    mean_dh += d * xhat[i * n + j];
                                }
                                mean_d /= T(n);
                                mean_dh /= T(n);
                                for (std::size_t j = 0; j < n; ++j) {
                                    const T d = dy[i * n + j] * gv[j];
                                    gx[i * n + j] += rstd[i] * (d - mean_d - xhat[i * n + j] * mean_dh);
                                }
                            }
                        }
                    });
    }
    return y;
}

template <typename T>
Tensor<T> batchnorm(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias,
                    T eps, BatchMoments<T>* moments) {
    require_matrix(x, "batchnorm", "x");
    const std::size_t m = x.dim(0), n = x.dim(1);
    if (m == 0) throw ShapeError("batchnorm: empty batch");
    if (gain.numel() != n || (bias.defined() && bias.numel() != n)) {
        throw ShapeError("batchnorm: affine parameters do not match " + std::to_string(n) + " features");
    }
    const bool tracked = tape.tracks({&x, &gain, &bias});
    auto xv = x.values(), gv = gain.values();
    std::vector<T> mu(n, T(0)), var(n, T(0)), rstd(n);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) mu[j] += xv[i * n + j];
    for (T& v : mu) v /= T(m);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            const T d = xv[i * n + j] - mu[j];
            var[j] += d * d;
        }
    for (std::size_t j = 0; j < n; ++j) {
        var[j] /= T(m);
        rstd[j] = T(1) / std::sqrt(var[j] + eps);
    }
    std::vector<T> xhat(m * n), out(m * n);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            const T h = (xv[i * n + j] - mu[j]) * rstd[j];
            xhat[i * n + j] = h;
            out[i * n + j] = h * gv[j] + (bias.defined() ? bias.values()[j] : T(0));
        }
    if (moments) {
        moments->mean = mu;
        moments->var = var;
        moments->count = m;
    }
    Tensor<T> y(x.shape(), std::move(out), tracked);
    if (tracked) {
        tape.record("batchnorm", y,
                    [x, gain, bias, m, n, xhat = std::move(xhat), rstd = std::move(rstd)](std::span<const T> dy) {
                        auto gv = gain.values();
                        if (gain.requires_grad()) {
                            auto gg = Tensor<T>(gain).ensure_grad();
                            for (std::size_t i = 0; i < m; ++i)
                                for (std::size_t j = 0; j < n; ++j) gg[j] += dy[i * n + j] * xhat[i * n + j];
                        }
                        if (bias.defined() && bias.requires_grad()) {
                            auto gb = Tensor<T>(bias).ensure_grad();
                            for (std::size_t i = 0; i < m; ++i)
                                for (std::size_t j = 0; j < n; ++j) gb[j] += dy[i * n + j];
                        }
                        if (x.requires_grad()) {
                            auto gx = Tensor<T>(x).ensure_grad();
                            std::vector<T> mean_d(n, T(0)), mean_dh(n, T(0));
                            for (std::size_t i = 0; i < m; ++i)
                                for (std::size_t j = 0; j < n; ++j) {
                                    const T d = dy[i * n + j] * gv[j];
                                    mean_d[j] += d;
                                    mean_dh[j] += d * xhat[i * n + j];
                                }
                            for (std::size_t j = 0; j < n; ++j) {
                                mean_d[j] /= T(m);
                                mean_dh[j] /= T(m);
                            }
                            for (std::size_t i = 0; i < m; ++i)
                                for (std::size_t j = 0; j < n; ++j) {
                                    const T d = dy[i * n + j] * gv[j];
                                    gx[i * n + j] += rstd[j] * (d - mean_d[j] - xhat[i * n + j] * mean_dh[j]);
                                }
                        }
                    });
    }
    return y;
}

template <typename T>
Tensor<T> sum(Tape<T>& tape, const Tensor<T>& x) {
    const bool tracked = tape.tracks({&x});
    T total = 0;
    for (T v : x.values()) total += v;
    Tensor<T> y = Tensor<T>::scalar(total, tracked);
    if (tracked) {
        tape.record("sum", y, [x](std::span<const T> dy) {
            auto gx = Tensor<T>(x).ensure_grad();
            for (T& g : gx) g += dy[0];
        });
    }
    return y;
}

template <typename T>
Tensor<T> mean(Tape<T>& tape, const Tensor<T>& x) {
    if (x.numel() == 0) throw ShapeError("mean: empty tensor");
    const bool tracked = tape.tracks({&x});
    T total = 0;
    for (T v : x.values()) total += v;
    const T inv = T(1) / T(x.numel());
    Tensor<T> y = Tensor<T>::scalar(total * inv, tracked);
    if (tracked) {
        tape.record("mean", y, [x, inv](std::span<const T> dy) {
            auto gx = Tensor<T>(x).ensure_grad();
            for (T& g : gx) g += dy[0] * inv;
        });
    }
    return y;
}

template <typename T>
Tensor<T> gather_rows(Tape<T>& tape, const Tensor<T>& x, std::span<const std::size_t> index) {
    require_matrix(x, "gather_rows", "x");
    const std::size_t m = x.dim(0), n = x.dim(1);
    for (std::size_t r : index) {
        if (r >= m) throw ShapeError("gather_rows: row " + std::to_string(r) + " out of range for " +
                                     shape_string(x.shape()));
    }
    const bool tracked = tape.tracks({&x});
    std::vector<T> out(index.size() * n);
    auto xv = x.values();
    for (std::size_t i = 0; i < index.size(); ++i)
        std::copy_n(xv.begin() + index[i] * n, n, out.begin() + i * n);
    Tensor<T> y({index.size(), n}, std::move(out), tracked);
    if (tracked) {
        tape.record("gather_rows", y,
                    [x, n, idx = std::vector<std::size_t>(index.begin(), index.end())](std::span<const T> dy) {
                        auto gx = Tensor<T>(x).ensure_grad();
                        for (std::size_t i = 0; i < idx.size(); ++i)
                            for (std::size_t j = 0; j < n; ++j) gx[idx[i] * n + j] += dy[i * n + j];
                    });
    }
    return y;
}

template <typename T>
Tensor<T> scatter_rows(Tape<T>& tape, const Tensor<T>& x, std::span<const std::size_t> index,
                       std::size_t total_rows) {
    require_matrix(x, "scatter_rows", "x");
    const std::size_t n = x.dim(1);
    if (index.size() != x.dim(0)) {
        throw ShapeError("scatter_rows: " + std::to_string(index.size()) + " indices for " +
                         shape_string(x.shape()));
    }
    for (std::size_t r : index) {
        if (r >= total_rows) throw ShapeError("scatter_rows: row " + std::to_string(r) + " out of range");
    }
    const bool tracked = tape.tracks({&x});
    std::vector<T> out(total_rows * n, T(0));
    auto xv = x.values();
    for (std::size_t i = 0; i < index.size(); ++i)
        for (std::size_t j = 0; j < n; ++j) out[index[i] * n + j] += xv[i * n + j];
    Tensor<T> y({total_rows, n}, std::move(out), tracked);
    if (tracked) {
        tape.record("scatter_rows", y,
                    [x, n, idx = std::vector<std::size_t>(index.begin(), index.end())](std::span<const T> dy) {
                        auto gx = Tensor<T>(x).ensure_grad();
                        for (std::size_t i = 0; i < idx.size(); ++i)
                            for (std::size_t j = 0; j < n; ++j) gx[i * n + j] += dy[idx[i] * n + j];
                    });
    }
    return y;
}

template <typename T>
Tensor<T> scale_rows(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& s) {
    require_matrix(x, "scale_rows", "x");
    const std::size_t m = x.dim(0), n = x.dim(1);
    if (s.numel() != m) {
        throw ShapeError("scale_rows: " + shape_string(s.shape()) + " scales for " + shape_string(x.shape()));
    }
    const bool tracked = tape.tracks({&x, &s});
    std::vector<T> out(m * n);
    auto xv = x.values(), sv = s.values();
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[i * n + j] = xv[i * n + j] * sv[i];
    Tensor<T> y(x.shape(), std::move(out), tracked);
    if (tracked) {
        tape.record("scale_rows", y, [x, s, m, n](std::span<const T> dy) {
            if (x.requires_grad()) {
                auto gx = Tensor<T>(x).ensure_grad();
                auto sv = s.values();
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t j = 0; j < n; ++j) gx[i * n + j] += dy[i * n + j] * sv[i];
            }
            if (s.requires_grad()) {
                auto gs = Tensor<T>(s).ensure_grad();
                auto xv = x.values();
                for (std::size_t i = 0; i < m; ++i) {
                    T acc = 0;
                    for (std::size_t j = 0; j < n; ++j) acc += dy[i * n + j] * xv[i * n + j];
                    gs[i] += acc;
                }
            }
        });
    }
    return y;
}

template <typename T>
Tensor<T> pick(Tape<T>& tape, const Tensor<T>& x, std::span<const std::size_t> col) {
    require_matrix(x, "pick", "x");
    const std::size_t m = x.dim(0), n = x.dim(1);
    if (col.size() != m) throw ShapeError("pick: one column per row required");
    for (std::size_t c : col) {
        if (c >= n) throw ShapeError("pick: column " + std::to_string(c) + " out of range");
    }
    const bool tracked = tape.tracks({&x});
    std::vector<T> out(m);
    for (std::size_t i = 0; i < m; ++i) out[i] = x.values()[i * n + col[i]];
    Tensor<T> y({m}, std::move(out), tracked);
    if (tracked) {
        tape.record("pick", y, [x, n, cols = std::vector<std::size_t>(col.begin(), col.end())](std::span<const T> dy) {
            auto gx = Tensor<T>(x).ensure_grad();
            for (std::size_t i = 0; i < cols.size(); ++i) gx[i * n + cols[i]] += dy[i];
        });
    }
    return y;
}

template <typename T>
Tensor<T> topk_mask(Tape<T>& tape, const Tensor<T>& x, std::size_t k) {
    if (x.ndim() == 0) throw ShapeError("topk_mask: scalar input");
    const std::size_t n = x.shape().back();
    const std::size_t m = n == 0 ? 0 : x.numel() / n;
    if (k == 0 || k > n) {
        throw ShapeError("topk_mask: k=" + std::to_string(k) + " invalid for rows of " + std::to_string(n));
    }
    const bool tracked = tape.tracks({&x});
    auto xv = x.values();
    std::vector<std::uint8_t> keep(x.numel(), 0);
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < m; ++i) {
        const T* row = xv.data() + i * n;
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(), [row](std::size_t a, std::size_t b) { return row[a] > row[b]; });
        for (std::size_t r = 0; r < k; ++r) keep[i * n + order[r]] = 1;
    }
    std::vector<T> out(x.numel(), T(0));
    for (std::size_t i = 0; i < out.size(); ++i)
        if (keep[i]) out[i] = xv[i];
    Tensor<T> y(x.shape(), std::move(out), tracked);
    if (tracked) {
        tape.record("topk_mask", y, [x, keep = std::move(keep)](std::span<const T> dy) {
            auto gx = Tensor<T>(x).ensure_grad();
            for (std::size_t i = 0; i < dy.size(); ++i)
                if (keep[i]) gx[i] += dy[i];
        });
    }
    return y;
}

template <typename T>
Tensor<T> attention(Tape<T>& tape, const Tensor<T>& qkv, std::size_t batch, std::size_t tokens,
                    std::size_t heads, std::size_t isolated_prefix) {
    require_matrix(qkv, "attention", "qkv");
    if (qkv.dim(0) != batch * tokens || qkv.dim(1) % 3 != 0) {
        throw ShapeError("attention: qkv " + shape_string(qkv.shape()) + " does not match batch " +
                         std::to_string(batch) + " x tokens " + std::to_string(tokens));
    }
    const std::size_t d = qkv.dim(1) / 3;
    if (heads == 0 || d % heads != 0) {
        throw ShapeError("attention: width " + std::to_string(d) + " not divisible by " + std::to_string(heads) +
                         " heads");
    }
    const std::size_t dh = d / heads;
    const std::size_t row = 3 * d;
    const T inv_sqrt = T(1) / std::sqrt(T(dh));
    const bool tracked = tape.tracks({&qkv});

    auto src = qkv.values();
    std::vector<T> out(batch * tokens * d, T(0));
    std::vector<T> probs(tracked ? batch * heads * tokens * tokens : 0);
    std::vector<T> q(tokens * dh), kk(tokens * dh), v(tokens * dh), s(tokens * tokens), o(tokens * dh);

    auto load = [&](std::size_t b, std::size_t h, std::size_t block, std::vector<T>& dst) {
        for (std::size_t t = 0; t < tokens; ++t) {
            const T* p = src.data() + (b * tokens + t) * row + block * d + h * dh;
            std::copy_n(p, dh, dst.data() + t * dh);
        }
    };

    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t h = 0; h < heads; ++h) {
            load(b, h, 0, q);
            load(b, h, 1, kk);
            load(b, h, 2, v);
            std::fill(s.begin(), s.end(), T(0));
            gemm_nt(tokens, tokens, dh, q.data(), kk.data(), s.data());
            for (std::size_t i = 0; i < tokens; ++i) {
                T* srow = s.data() + i * tokens;
                T mx = -std::numeric_limits<T>::infinity();
                for (std::size_t j = 0; j < tokens; ++j) {
                    const bool blocked = i < isolated_prefix && j < isolated_prefix && i != j;
                    srow[j] = blocked ? -std::numeric_limits<T>::infinity() : srow[j] * inv_sqrt;
                    mx = std::max(mx, srow[j]);
                }
                T total = 0;
                for (std::size_t j = 0; j < tokens; ++j) {
                    srow[j] = std::exp(srow[j] - mx);
                    total += srow[j];
                }
                for (std::size_t j = 0; j < tokens; ++j) srow[j] /= total;
            }
            std::fill(o.begin(), o.end(), T(0));
            gemm_nn(tokens, dh, tokens, s.data(), v.data(), o.data());
            for (std::size_t t = 0; t < tokens; ++t)
                std::copy_n(o.data() + t * dh, dh, out.data() + (b * tokens + t) * d + h * dh);
            if (tracked) std::copy(s.begin(), s.end(), probs.begin() + (b * heads + h) * tokens * tokens);
        }
    }

    Tensor<T> y({batch * tokens, d}, std::move(out), tracked);
    if (tracked) {
        tape.record("attention", y,
                    [qkv, batch, tokens, heads, d, dh, row, inv_sqrt, probs = std::move(probs)](std::span<const T> dy) {
                        auto src = qkv.values();
                        auto gq = Tensor<T>(qkv).ensure_grad();
                        std::vector<T> q(tokens * dh), k(tokens * dh), v(tokens * dh), dout(tokens * dh);
                        std::vector<T> dp(tokens * tokens), dq(tokens * dh), dk(tokens * dh), dv(tokens * dh);
                        for (std::size_t b = 0; b < batch; ++b) {
                            for (std::size_t h = 0; h < heads; ++h) {
                                for (std::size_t t = 0; t < tokens; ++t) {
                                    const std::size_t base = (b * tokens + t) * row + h * dh;
                                    std::copy_n(src.data() + base, dh, q.data() + t * dh);
                                    std::copy_n(src.data() + base + d, dh, k.data() + t * dh);
                                    std::copy_n(src.data() + base + 2 * d, dh, v.data() + t * dh);
                                    std::copy_n(dy.data() + (b * tokens + t) * d + h * dh, dh, dout.data() + t * dh);
                                }
                                const T* p = probs.data() + (b * heads + h) * tokens * tokens;
                                std::fill(dp.begin(), dp.end(), T(0));
                                std::fill(dv.begin(), dv.end(), T(0));
                                gemm_nt(tokens, tokens, dh, dout.data(), v.data(), dp.data());
                                gemm_tn(tokens, dh, tokens, p, dout.data(), dv.data());
                                for (std::size_t i = 0; i < tokens; ++i) {
                                    T dot = 0;
                                    for (std::size_t j = 0; j < tokens; ++j) dot += dp[i * tokens + j] * p[i * tokens + j];
                                    for (std::size_t j = 0; j < tokens; ++j)
                                        dp[i * tokens + j] = p[i * tokens + j] * (dp[i * tokens + j] - dot) * inv_sqrt;
                                }
                                std::fill(dq.begin(), dq.end(), T(0));
                                std::fill(dk.begin(), dk.end(), T(0));
                                gemm_nn(tokens, dh, tokens, dp.data(), k.data(), dq.data());
                                gemm_tn(tokens, dh, tokens, dp.data(), q.data(), dk.data());
                                for (std::size_t t = 0; t < tokens; ++t) {
                                    const std::size_t base = (b * tokens + t) * row + h * dh;
                                    for (std::size_t c = 0; c < dh; ++c) {
                                        gq[base + c] += dq[t * dh + c];
                                        gq[base + d + c] += dk[t * dh + c];
                                        gq[base + 2 * d + c] += dv[t * dh + c];
                                    }
                                }
                            }
                        }
                    });
    }
    return y;
}

template <typename T>
Tensor<T> restricted_nll(Tape<T>& tape, const Tensor<T>& logits, std::span<const std::size_t> target,
                         std::span<const std::uint8_t> candidates) {
    require_matrix(logits, "restricted_nll", "logits");
    const std::size_t m = logits.dim(0), n = logits.dim(1);
    if (target.size() != m || candidates.size() != m * n) {
        throw ShapeError("restricted_nll: targets/candidates do not match logits " + shape_string(logits.shape()));
    }
    for (std::size_t t : target) {
        if (t >= n) {
            throw ValidationError("restricted_nll: ground-truth index " + std::to_string(t) + " out of range for " +
                                  std::to_string(n) + " categories");
        }
    }
    const bool tracked = tape.tracks({&logits});
    auto lv = logits.values();
    std::vector<T> out(m), prob(tracked ? m * n : 0, T(0));
    for (std::size_t i = 0; i < m; ++i) {
        const T* row = lv.data() + i * n;
        const std::uint8_t* cand = candidates.data() + i * n;
        auto active = [&](std::size_t j) { return j == target[i] || cand[j] != 0; };
        T mx = -std::numeric_limits<T>::infinity();
        for (std::size_t j = 0; j < n; ++j)
            if (active(j)) mx = std::max(mx, row[j]);
        T total = 0;
        for (std::size_t j = 0; j < n; ++j)
            if (active(j)) total += std::exp(row[j] - mx);
        out[i] = -(row[target[i]] - mx - std::log(total));
        if (tracked) {
            for (std::size_t j = 0; j < n; ++j)
                if (active(j)) prob[i * n + j] = std::exp(row[j] - mx) / total;
        }
    }
    Tensor<T> y({m}, std::move(out), tracked);
    if (tracked) {
        tape.record("restricted_nll", y,
                    [logits, n, tgt = std::vector<std::size_t>(target.begin(), target.end()),
                     prob = std::move(prob)](std::span<const T> dy) {
                        auto gl = Tensor<T>(logits).ensure_grad();
                        for (std::size_t i = 0; i < tgt.size(); ++i) {
                            for (std::size_t j = 0; j < n; ++j) gl[i * n + j] += dy[i] * prob[i * n + j];
                            gl[i * n + tgt[i]] -= dy[i];
                        }
                    });
    }
    return y;
}

#define UNIAT_INSTANTIATE_OPS(T)                                                                               \
    template Tensor<T> matmul(Tape<T>&, const Tensor<T>&, const Tensor<T>&);                                  \
    template Tensor<T> linear(Tape<T>&, const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                \
    template Tensor<T> add(Tape<T>&, const Tensor<T>&, const Tensor<T>&);                                     \
    template Tensor<T> add_tiled(Tape<T>&, const Tensor<T>&, const Tensor<T>&);                               \
    template Tensor<T> mul(Tape<T>&, const Tensor<T>&, const Tensor<T>&);                                     \
    template Tensor<T> scale(Tape<T>&, const Tensor<T>&, T);                                                  \
    template Tensor<T> gelu(Tape<T>&, const Tensor<T>&);                                                      \
    template Tensor<T> softmax(Tape<T>&, const Tensor<T>&, std::size_t);                                      \
    template Tensor<T> layernorm(Tape<T>&, const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, T);          \
    template Tensor<T> batchnorm(Tape<T>&, const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, T,           \
                                 BatchMoments<T>*);                                                           \
    template Tensor<T> sum(Tape<T>&, const Tensor<T>&);                                                       \
    template Tensor<T> mean(Tape<T>&, const Tensor<T>&);                                                      \
    template Tensor<T> gather_rows(Tape<T>&, const Tensor<T>&, std::span<const std::size_t>);                 \
    template Tensor<T> scatter_rows(Tape<T>&, const Tensor<T>&, std::span<const std::size_t>, std::size_t);   \
    template Tensor<T> scale_rows(Tape<T>&, const Tensor<T>&, const Tensor<T>&);                              \
    template Tensor<T> pick(Tape<T>&, const Tensor<T>&, std::span<const std::size_t>);                        \
    template Tensor<T> topk_mask(Tape<T>&, const Tensor<T>&, std::size_t);                                    \
    template Tensor<T> attention(Tape<T>&, const Tensor<T>&, std::size_t, std::size_t, std::size_t,           \
                                 std::size_t);                                                                \
    template Tensor<T> restricted_nll(Tape<T>&, const Tensor<T>&, std::span<const std::size_t>,               \
                                      std::span<const std::uint8_t>);

UNIAT_INSTANTIATE_OPS(float)
UNIAT_INSTANTIATE_OPS(double)

#undef UNIAT_INSTANTIATE_OPS

}  // namespace uniat::tensor
