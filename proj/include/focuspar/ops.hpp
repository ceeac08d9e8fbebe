#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numbers>
#include <vector>

#include "focuspar/autodiff.hpp"

namespace focuspar::ops {

namespace detail {

template <class T>
void add_into(Matrix<T>& dst, const Matrix<T>& src) {
    for (std::size_t i = 0; i < src.size(); ++i) dst[i] += src[i];
}

template <class T>
void check_same(const Var<T>& a, const Var<T>& b, const char* op) {
    if (!a.value().same_shape(b.value()))
        throw ValidationError(std::string(op) + ": shape mismatch " + a.value().shape_str() +
                              " vs " + b.value().shape_str());
}

}  // namespace detail

/// a·b
template <class T>
Var<T> matmul(Var<T> a, Var<T> b) {
    const auto& av = a.value();
    const auto& bv = b.value();
    if (av.cols() != bv.rows())
        throw ValidationError("matmul: inner dims " + av.shape_str() + " vs " + bv.shape_str());
    Matrix<T> out(av.rows(), bv.cols());
    gemm_acc(av, bv, out);
    return a.tape->record(std::move(out), {a, b}, [a, b](Tape<T>& tp, const Matrix<T>&, const Matrix<T>& g) {
        if (tp.needs_grad(a)) gemm_nt_acc(g, tp.value(b), tp.grad(a));
        if (tp.needs_grad(b)) gemm_tn_acc(tp.value(a), g, tp.grad(b));
    });
}

/// a·bᵀ
template <class T>
Var<T> matmul_nt(Var<T> a, Var<T> b) {
    const auto& av = a.value();
    const auto& bv = b.value();
    if (av.cols() != bv.cols())
        throw ValidationError("matmul_nt: inner dims " + av.shape_str() + " vs " + bv.shape_str());
    Matrix<T> out(av.rows(), bv.rows());
    gemm_nt_acc(av, bv, out);
    return a.tape->record(std::move(out), {a, b}, [a, b](Tape<T>& tp, const Matrix<T>&, const Matrix<T>& g) {
        if (tp.needs_grad(a)) gemm_acc(g, tp.value(b), tp.grad(a));
        if (tp.needs_grad(b)) gemm_tn_acc(g, tp.value(a), tp.grad(b));
    });
}

/// x·w + b, with b a 1×out row broadcast over rows.
template <class T>
Var<T> affine(Var<T> x, Var<T> w, Var<T> b) {
    const auto& xv = x.value();
    const auto& wv = w.value();
    const auto& bv = b.value();
    if (xv.cols() != wv.rows() || bv.rows() != 1 || bv.cols() != wv.cols())
        throw ValidationError("affine: shapes " + xv.shape_str() + ", " + wv.shape_str() + ", " +
                              bv.shape_str());
    Matrix<T> out(xv.rows(), wv.cols());
    for (std::size_t r = 0; r < out.rows(); ++r)
        for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) = bv[c];
    gemm_acc(xv, wv, out);
    return x.tape->record(std::move(out), {x, w, b},
                          [x, w, b](Tape<T>& tp, const Matrix<T>&, const Matrix<T>& g) {
                              if (tp.needs_grad(x)) gemm_nt_acc(g, tp.value(w), tp.grad(x));
                              if (tp.needs_grad(w)) gemm_tn_acc(tp.value(x), g, tp.grad(w));
                              if (tp.needs_grad(b)) {
                                  auto& gb = tp.grad(b);
                                  for (std::size_t r = 0; r < g.rows(); ++r)
                                      for (std::size_t c = 0; c < g.cols(); ++c) gb[c] += g(r, c);
                              }
                          });
}

template <class T>
Var<T> add(Var<T> a, Var<T> b) {
    detail::check_same(a, b, "add");
    Matrix<T> out = a.value();
    detail::add_into(out, b.value());
    return a.tape->record(std::move(out), {a, b}, [a, b](Tape<T>& tp, const Matrix<T>&, const Matrix<T>& g) {
        if (tp.needs_grad(a)) detail::add_into(tp.grad(a), g);
        if (tp.needs_grad(b)) detail::add_into(tp.grad(b), g);
    });
}

/// x + row, row a 1×cols vector broadcast over every row of x.
template <class T>
Var<T> add_row(Var<T> x, Var<T> row) {
    const auto& xv = x.value();
    const auto& rv = row.value();
    require(rv.rows() == 1 && rv.cols() == xv.cols(), "add_row: shape mismatch");
    Matrix<T> out = xv;
    for (std::size_t r = 0; r < out.rows(); ++r)
        for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) += rv[c];
    return x.tape->record(std::move(out), {x, row}, [x, row](Tape<T>& tp, const Matrix<T>&, const Matrix<T>& g) {
        if (tp.needs_grad(x)) detail::add_into(tp.grad(x), g);
        if (tp.needs_grad(row)) {
            auto& gr = tp.grad(row);
            for (std::size_t r = 0; r < g.rows(); ++r)
                for (std::size_t c = 0; c < g.cols(); ++c) gr[c] += g(r, c);
        }
    });
}

template <class T>
Var<T> scale(Var<T> x, T factor) {
    Matrix<T> out = x.value();
    for (auto& v : out.storage()) v *= factor;
    return x.tape->record(std::move(out), {x}, [x, factor](Tape<T>& tp, const Matrix<T>&, const Matrix<T>& g) {
        auto& gx = tp.grad(x);
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += factor * g[i];
    });
}

/// x scaled by the 1×1 value s.
template <class T>
Var<T> scale_by(Var<T> x, Var<T> s) {
    require(s.value().size() == 1, "scale_by: factor must be 1x1");
    const T f = s.item();
    Matrix<T> out = x.value();
    for (auto& v : out.storage()) v *= f;
    return x.tape->record(std::move(out), {x, s}, [x, s](Tape<T>& tp, const Matrix<T>&, const Matrix<T>& g) {
        const T f = tp.value(s)[0];
        if (tp.needs_grad(x)) {
            auto& gx = tp.grad(x);
            for (std::size_t i = 0; i < g.size(); ++i) gx[i] += f * g[i];
        }
        if (tp.needs_grad(s)) {
            const auto& xv = tp.value(x);
            T acc = 0;
            for (std::size_t i = 0; i < g.size(); ++i) acc += xv[i] * g[i];
            tp.grad(s)[0] += acc;
        }
    });
}

template <class T>
Var<T> exp(Var<T> x) {
    Matrix<T> out = x.value();
    for (auto& v : out.storage()) v = std::exp(v);
    return x.tape->record(std::move(out), {x}, [x](Tape<T>& tp, const Matrix<T>& y, const Matrix<T>& g) {
        auto& gx = tp.grad(x);
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += y[i] * g[i];
    });
}

template <class T>
Var<T> sigmoid(Var<T> x) {
    Matrix<T> out = x.value();
    for (auto& v : out.storage()) v = T(1) / (T(1) + std::exp(-v));
    return x.tape->record(std::move(out), {x}, [x](Tape<T>& tp, const Matrix<T>& y, const Matrix<T>& g) {
        auto& gx = tp.grad(x);
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += y[i] * (T(1) - y[i]) * g[i];
    });
}

/// Elementwise clamp; gradient passes only where the input was inside [lo, hi].
template <class T>
Var<T> clamp(Var<T> x, T lo, T hi) {
    Matrix<T> out = x.value();
    for (auto& v : out.storage()) v = std::clamp(v, lo, hi);
    return x.tape->record(std::move(out), {x}, [x, lo, hi](Tape<T>& tp, const Matrix<T>&, const Matrix<T>& g) {
        const auto& xv = tp.value(x);
        auto& gx = tp.grad(x);
        for (std::size_t i = 0; i < g.size(); ++i)
            if (xv[i] >= lo && xv[i] <= hi) gx[i] += g[i];
    });
}

/// GELU, tanh approximation.
template <class T>
Var<T> gelu(Var<T> x) {
    constexpr T c = T(0.7978845608028654);  // sqrt(2/pi)
    constexpr T k = T(0.044715);
    Matrix<T> out = x.value();
    for (auto& v : out.storage()) {
        const T u = c * (v + k * v * v * v);
        v = T(0.5) * v * (T(1) + std::tanh(u));
    }
    return x.tape->record(std::move(out), {x}, [x](Tape<T>& tp, const Matrix<T>&, const Matrix<T>& g) {
        const auto& xv = tp.value(x);
        auto& gx = tp.grad(x);
        for (std::size_t i = 0; i < g.size(); ++i) {
            const T v = xv[i];
            const T u = c * (v + k * v * v * v);
            const T th = std::tanh(u);
            const T du = c * (T(1) + T(3) * k * v * v);
            gx[i] += g[i] * (T(0.5) * (T(1) + th) + T(0.5) * v * (T(1) - th * th) * du);
        }
    });
}

/// Row-wise layer normalization with per-column gain and bias (1×cols each).
template <class T>
Var<T> layer_norm(Var<T> x, Var<T> gain, Var<T> bias, T eps = T(1e-5)) {
    const auto& xv = x.value();
    const std::size_t n = xv.rows(), d = xv.cols();
    require(gain.value().cols() == d && bias.value().cols() == d, "layer_norm: param width mismatch");
    Matrix<T> xhat(n, d);
    std::vector<T> inv_std(n);
    for (std::size_t r = 0; r < n; ++r) {
        T mean = 0;
        for (std::size_t c = 0; c < d; ++c) mean += xv(r, c);
        mean /= T(d);
        T var = 0;
        for (std::size_t c = 0; c < d; ++c) var += (xv(r, c) - mean) * (xv(r, c) - mean);
        var /= T(d);
        inv_std[r] = T(1) / std::sqrt(var + eps);
        for (std::size_t c = 0; c < d; ++c) xhat(r, c) = (xv(r, c) - mean) * inv_std[r];
    }
    const auto& gv = gain.value();
    const auto& bv = bias.value();
    Matrix<T> out(n, d);
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < d; ++c) out(r, c) = xhat(r, c) * gv[c] + bv[c];
    auto cache = std::make_shared<std::pair<Matrix<T>, std::vector<T>>>(std::move(xhat), std::move(inv_std));
    return x.tape->record(std::move(out), {x, gain, bias},
                          [x, gain, bias, cache](Tape<T>& tp, const Matrix<T>&, const Matrix<T>& g) {
                              const auto& [xh, istd] = *cache;
                              const std::size_t n = g.rows(), d = g.cols();
                              const auto& gv = tp.value(gain);
                              if (tp.needs_grad(gain) || tp.needs_grad(bias)) {
                                  auto& gg = tp.grad(gain);
                                  auto& gb = tp.grad(bias);
                                  for (std::size_t r = 0; r < n; ++r)
                                      for (std::size_t c = 0; c < d; ++c) {
                                          gg[c] += g(r, c) * xh(r, c);
                                          gb[c] += g(r, c);
                                      }
                              }
                              if (!tp.needs_grad(x)) return;
                              auto& gx = tp.grad(x);
                              for (std::size_t r = 0; r < n; ++r) {
                                  T sum_dy = 0, sum_dy_xh = 0;
                                  for (std::size_t c = 0; c < d; ++c) {
                                      const T dy = g(r, c) * gv[c];
                                      sum_dy += dy;
                                      sum_dy_xh += dy * xh(r, c);
                                  }
                                  for (std::size_t c = 0; c < d; ++c) {
                                      const T dy = g(r, c) * gv[c];
                                      gx(r, c) += istd[r] * (dy - sum_dy / T(d) - xh(r, c) * sum_dy_xh / T(d));
                                  }
                              }
                          });
}

/// Boolean attendability mask shared between ops; true = attendable.
using MaskPtr = std::shared_ptr<const Matrix<unsigned char>>;

/// Row softmax. Masked-out entries get probability exactly 0 (logit −∞).
template <class T>
Var<T> softmax_rows(Var<T> x, MaskPtr mask = nullptr) {
    const auto& xv = x.value();
    if (mask) require(mask->rows() == xv.rows() && mask->cols() == xv.cols(), "softmax_rows: mask shape");
    Matrix<T> out(xv.rows(), xv.cols());
    for (std::size_t r = 0; r < xv.rows(); ++r) {
        T mx = -std::numeric_limits<T>::infinity();
        for (std::size_t c = 0; c < xv.cols(); ++c)
            if (!mask || (*mask)(r, c)) mx = std::max(mx, xv(r, c));
        if (!std::isfinite(mx)) throw NumericalError("softmax_rows: row " + std::to_string(r) + " has no finite attendable entry");
        std::vector<T> es;
        es.reserve(xv.cols());
        for (std::size_t c = 0; c < xv.cols(); ++c) {
            const T e = (!mask || (*mask)(r, c)) ? std::exp(xv(r, c) - mx) : T(0);
            out(r, c) = e;
            if (e != T(0)) es.push_back(e);
        }
        // summed in sorted order so the result does not depend on column order
        std::sort(es.begin(), es.end());
        T sum = 0;
        for (T e : es) sum += e;
        for (std::size_t c = 0; c < xv.cols(); ++c) out(r, c) /= sum;
    }
    return x.tape->record(std::move(out), {x}, [x](Tape<T>& tp, const Matrix<T>& y, const Matrix<T>& g) {
        auto& gx = tp.grad(x);
        for (std::size_t r = 0; r < y.rows(); ++r) {
            T dot = 0;
            for (std::size_t c = 0; c < y.cols(); ++c) dot += y(r, c) * g(r, c);
            for (std::size_t c = 0; c < y.cols(); ++c) gx(r, c) += y(r, c) * (g(r, c) - dot);
        }
    });
}

/// w·v where the rows of v are keys: each output row sums its keys in an order fixed by the
/// (weight, value row) pairs, so permuting keys together with the columns of w is bit-exact.
template <class T>
Var<T> attend(Var<T> w, Var<T> v) {
    const auto& wv = w.value();
    const auto& vv = v.value();
    if (wv.cols() != vv.rows())
        throw ValidationError("attend: inner dims " + wv.shape_str() + " vs " + vv.shape_str());
    const std::size_t d = vv.cols();
    Matrix<T> out(wv.rows(), d);
    std::vector<std::size_t> order;
    order.reserve(wv.cols());
    for (std::size_t r = 0; r < wv.rows(); ++r) {
        order.clear();
        for (std::size_t k = 0; k < wv.cols(); ++k)
            if (wv(r, k) != T(0)) order.push_back(k);
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            if (wv(r, a) != wv(r, b)) return wv(r, a) < wv(r, b);
            const T* pa = vv.data() + a * d;
            const T* pb = vv.data() + b * d;
            return std::lexicographical_compare(pa, pa + d, pb, pb + d);
        });
        T* o = out.data() + r * d;
        for (std::size_t k : order) {
            const T a = wv(r, k);
            const T* src = vv.data() + k * d;
            for (std::size_t c = 0; c < d; ++c) o[c] += a * src[c];
        }
    }
    return w.tape->record(std::move(out), {w, v}, [w, v](Tape<T>& tp, const Matrix<T>&, const Matrix<T>& g) {
        if (tp.needs_grad(w)) gemm_nt_acc(g, tp.value(v), tp.grad(w));
        if (tp.needs_grad(v)) gemm_tn_acc(tp.value(w), g, tp.grad(v));
    });
}

template <class T>
Var<T> slice_cols(Var<T> x, std::size_t begin, std::size_t count) {
    const auto& xv = x.value();
    require(begin + count <= xv.cols(), "slice_cols: out of range");
    Matrix<T> out(xv.rows(), count);
    for (std::size_t r = 0; r < xv.rows(); ++r)
        for (std::size_t c = 0; c < count; ++c) out(r, c) = xv(r, begin + c);
    return x.tape->record(std::move(out), {x}, [x, begin](Tape<T>& tp, const Matrix<T>&, const Matrix<T>& g) {
        auto& gx = tp.grad(x);
        for (std::size_t r = 0; r < g.rows(); ++r)
            for (std::size_t c = 0; c < g.cols(); ++c) gx(r, begin + c) += g(r, c);
    });
}

template <class T>
Var<T> slice_rows(Var<T> x, std::size_t begin, std::size_t count) {
    const auto& xv = x.value();
    require(begin + count <= xv.rows(), "slice_rows: out of range");
    const std::size_t d = xv.cols();
    std::vector<T> data(xv.data() + begin * d, xv.data() + (begin + count) * d);
    return x.tape->record(Matrix<T>(count, d, std::move(data)), {x},
                          [x, begin](Tape<T>& tp, const Matrix<T>&, const Matrix<T>& g) {
                              auto& gx = tp.grad(x);
                              const std::size_t off = begin * g.cols();
                              for (std::size_t i = 0; i < g.size(); ++i) gx[off + i] += g[i];
                          });
}

/// Gathers rows of `table` by index (embedding lookup).
template <class T>
Var<T> gather_rows(Var<T> table, std::vector<int> ids) {
    const auto& tv = table.value();
    const std::size_t d = tv.cols();
    Matrix<T> out(ids.size(), d);
    for (std::size_t i = 0; i < ids.size(); ++i) {
        require(ids[i] >= 0 && static_cast<std::size_t>(ids[i]) < tv.rows(), "gather_rows: index out of range");
        for (std::size_t c = 0; c < d; ++c) out(i, c) = tv(static_cast<std::size_t>(ids[i]), c);
    }
    return table.tape->record(std::move(out), {table},
                              [table, ids = std::move(ids)](Tape<T>& tp, const Matrix<T>&, const Matrix<T>& g) {
                                  auto& gt = tp.grad(table);
                                  for (std::size_t i = 0; i < ids.size(); ++i)
                                      for (std::size_t c = 0; c < g.cols(); ++c)
                                          gt(static_cast<std::size_t>(ids[i]), c) += g(i, c);
                              });
}

template <class T>
Var<T> concat_rows(const std::vector<Var<T>>& parts) {
    require(!parts.empty(), "concat_rows: no inputs");
    const std::size_t d = parts.front().cols();
    std::size_t n = 0;
    for (const auto& p : parts) {
        require(p.cols() == d, "concat_rows: column mismatch");
        n += p.rows();
    }
    Matrix<T> out(n, d);
    std::size_t off = 0;
    for (const auto& p : parts) {
        const auto& pv = p.value();
        std::copy(pv.data(), pv.data() + pv.size(), out.data() + off);
        off += pv.size();
    }
    return parts.front().tape->record(std::move(out), parts,
                                      [parts](Tape<T>& tp, const Matrix<T>&, const Matrix<T>& g) {
                                          std::size_t off = 0;
                                          for (const auto& p : parts) {
                                              const std::size_t sz = tp.value(p).size();
                                              if (tp.needs_grad(p)) {
                                                  auto& gp = tp.grad(p);
                                                  for (std::size_t i = 0; i < sz; ++i) gp[i] += g[off + i];
                                              }
                                              off += sz;
                                          }
                                      });
}

template <class T>
Var<T> concat_cols(const std::vector<Var<T>>& parts) {
    require(!parts.empty(), "concat_cols: no inputs");
    const std::size_t n = parts.front().rows();
    std::size_t d = 0;
    for (const auto& p : parts) {
        require(p.rows() == n, "concat_cols: row mismatch");
        d += p.cols();
    }
    Matrix<T> out(n, d);
    std::size_t off = 0;
    for (const auto& p : parts) {
        const auto& pv = p.value();
        for (std::size_t r = 0; r < n; ++r)
            for (std::size_t c = 0; c < pv.cols(); ++c) out(r, off + c) = pv(r, c);
        off += pv.cols();
    }
    return parts.front().tape->record(std::move(out), parts,
                                      [parts](Tape<T>& tp, const Matrix<T>&, const Matrix<T>& g) {
                                          std::size_t off = 0;
                                          for (const auto& p : parts) {
                                              const std::size_t w = tp.value(p).cols();
                                              if (tp.needs_grad(p)) {
                                                  auto& gp = tp.grad(p);
                                                  for (std::size_t r = 0; r < g.rows(); ++r)
                                                      for (std::size_t c = 0; c < w; ++c) gp(r, c) += g(r, off + c);
                                              }
                                              off += w;
                                          }
                                      });
}

template <class T>
Var<T> transpose(Var<T> x) {
    return x.tape->record(x.value().transposed(), {x}, [x](Tape<T>& tp, const Matrix<T>&, const Matrix<T>& g) {
        detail::add_into(tp.grad(x), g.transposed());
    });
}

/// Column means: n×d -> 1×d.
template <class T>
Var<T> mean_rows(Var<T> x) {
    const auto& xv = x.value();
    require(xv.rows() > 0, "mean_rows: empty input");
    Matrix<T> out(1, xv.cols());
    for (std::size_t r = 0; r < xv.rows(); ++r)
        for (std::size_t c = 0; c < xv.cols(); ++c) out[c] += xv(r, c);
    for (auto& v : out.storage()) v /= T(xv.rows());
    return x.tape->record(std::move(out), {x}, [x](Tape<T>& tp, const Matrix<T>&, const Matrix<T>& g) {
        auto& gx = tp.grad(x);
        const T inv = T(1) / T(gx.rows());
        for (std::size_t r = 0; r < gx.rows(); ++r)
            for (std::size_t c = 0; c < gx.cols(); ++c) gx(r, c) += g[c] * inv;
    });
}

/// Repeats a 1×d row n times.
template <class T>
Var<T> broadcast_rows(Var<T> row, std::size_t n) {
    const auto& rv = row.value();
    require(rv.rows() == 1, "broadcast_rows: input must be a row");
    Matrix<T> out(n, rv.cols());
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < rv.cols(); ++c) out(r, c) = rv[c];
    return row.tape->record(std::move(out), {row}, [row](Tape<T>& tp, const Matrix<T>&, const Matrix<T>& g) {
        auto& gr = tp.grad(row);
        for (std::size_t r = 0; r < g.rows(); ++r)
            for (std::size_t c = 0; c < g.cols(); ++c) gr[c] += g(r, c);
    });
}

/// Each row divided by its L2 norm. Zero rows are an error.
template <class T>
Var<T> l2_normalize_rows(Var<T> x) {
    const auto& xv = x.value();
    Matrix<T> out(xv.rows(), xv.cols());
    std::vector<T> norms(xv.rows());
    for (std::size_t r = 0; r < xv.rows(); ++r) {
        T s = 0;
        for (T v : xv.row(r)) s += v * v;
        norms[r] = std::sqrt(s);
        if (!(norms[r] > T(0))) throw NumericalError("l2_normalize_rows: zero-norm row " + std::to_string(r));
        for (std::size_t c = 0; c < xv.cols(); ++c) out(r, c) = xv(r, c) / norms[r];
    }
    return x.tape->record(std::move(out), {x},
                          [x, norms = std::move(norms)](Tape<T>& tp, const Matrix<T>& y, const Matrix<T>& g) {
                              auto& gx = tp.grad(x);
                              for (std::size_t r = 0; r < y.rows(); ++r) {
                                  T dot = 0;
                                  for (std::size_t c = 0; c < y.cols(); ++c) dot += y(r, c) * g(r, c);
                                  for (std::size_t c = 0; c < y.cols(); ++c)
                                      gx(r, c) += (g(r, c) - y(r, c) * dot) / norms[r];
                              }
                          });
}

/// Row-wise dot products: n×d, n×d -> n×1.
template <class T>
Var<T> rowwise_dot(Var<T> a, Var<T> b) {
    detail::check_same(a, b, "rowwise_dot");
    const auto& av = a.value();
    const auto& bv = b.value();
    Matrix<T> out(av.rows(), 1);
    for (std::size_t r = 0; r < av.rows(); ++r) {
        T s = 0;
        for (std::size_t c = 0; c < av.cols(); ++c) s += av(r, c) * bv(r, c);
        out[r] = s;
    }
    return a.tape->record(std::move(out), {a, b}, [a, b](Tape<T>& tp, const Matrix<T>&, const Matrix<T>& g) {
        const auto& av = tp.value(a);
        const auto& bv = tp.value(b);
        if (tp.needs_grad(a)) {
            auto& ga = tp.grad(a);
            for (std::size_t r = 0; r < av.rows(); ++r)
                for (std::size_t c = 0; c < av.cols(); ++c) ga(r, c) += g[r] * bv(r, c);
        }
        if (tp.needs_grad(b)) {
            auto& gb = tp.grad(b);
            for (std::size_t r = 0; r < av.rows(); ++r)
                for (std::size_t c = 0; c < av.cols(); ++c) gb(r, c) += g[r] * av(r, c);
        }
    });
}

/// Σ_i w_i · s_i over 1×1 scalars.
template <class T>
Var<T> weighted_sum(const std::vector<Var<T>>& terms, std::vector<T> weights) {
    require(!terms.empty() && terms.size() == weights.size(), "weighted_sum: size mismatch");
    T s = 0;
    for (std::size_t i = 0; i < terms.size(); ++i) {
        require(terms[i].value().size() == 1, "weighted_sum: terms must be 1x1");
        s += weights[i] * terms[i].item();
    }
    return terms.front().tape->record(Matrix<T>(1, 1, s), terms,
                                      [terms, weights = std::move(weights)](Tape<T>& tp, const Matrix<T>&,
                                                                            const Matrix<T>& g) {
                                          for (std::size_t i = 0; i < terms.size(); ++i)
                                              if (tp.needs_grad(terms[i])) tp.grad(terms[i])[0] += weights[i] * g[0];
                                      });
}

/// Elementwise mean of equally-shaped inputs.
template <class T>
Var<T> mean_of(const std::vector<Var<T>>& parts) {
    require(!parts.empty(), "mean_of: no inputs");
    Matrix<T> out(parts.front().rows(), parts.front().cols());
    for (const auto& p : parts) {
        detail::check_same(p, parts.front(), "mean_of");
        detail::add_into(out, p.value());
    }
    const T inv = T(1) / T(parts.size());
    for (auto& v : out.storage()) v *= inv;
    return parts.front().tape->record(std::move(out), parts,
                                      [parts, inv](Tape<T>& tp, const Matrix<T>&, const Matrix<T>& g) {
                                          for (const auto& p : parts) {
                                              if (!tp.needs_grad(p)) continue;
                                              auto& gp = tp.grad(p);
                                              for (std::size_t i = 0; i < g.size(); ++i) gp[i] += inv * g[i];
                                          }
                                      });
}

/// Mean binary cross-entropy of probabilities `p` against a fixed 0/1 (or soft) target.
/// Entries must lie strictly inside (0, 1).
template <class T>
Var<T> bce_mean(Var<T> p, const Matrix<T>& target) {
    const auto& pv = p.value();
    require(pv.same_shape(target), "bce_mean: shape mismatch");
    T s = 0;
    for (std::size_t i = 0; i < pv.size(); ++i) {
        const T q = pv[i];
        if (!(q > T(0) && q < T(1)))
            throw NumericalError("bce_mean: probability out of (0,1): " + std::to_string(static_cast<double>(q)));
        s -= target[i] * std::log(q) + (T(1) - target[i]) * std::log(T(1) - q);
    }
    const T n = T(pv.size());
    return p.tape->record(Matrix<T>(1, 1, s / n), {p},
                          [p, target](Tape<T>& tp, const Matrix<T>&, const Matrix<T>& g) {
                              const auto& pv = tp.value(p);
                              auto& gp = tp.grad(p);
                              const T n = T(pv.size());
                              for (std::size_t i = 0; i < pv.size(); ++i) {
                                  const T q = pv[i];
                                  gp[i] += g[0] * (-target[i] / q + (T(1) - target[i]) / (T(1) - q)) / n;
                              }
                          });
}

}  // namespace focuspar::ops
