#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "focuspar/error.hpp"

namespace focuspar {

/// Dense row-major matrix. Everything in the model is rank 2; vectors are 1×n.
template <class T>
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, T fill = T(0))
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
    Matrix(std::size_t rows, std::size_t cols, std::vector<T> data)
        : rows_(rows), cols_(cols), data_(std::move(data)) {
        require(data_.size() == rows_ * cols_, "Matrix: data size does not match shape");
    }

    static Matrix identity(std::size_t n) {
        Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = T(1);
        return m;
    }

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    T& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
    const T& operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }
    T& operator[](std::size_t i) noexcept { return data_[i]; }
    const T& operator[](std::size_t i) const noexcept { return data_[i]; }

    std::span<T> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
    std::span<const T> row(std::size_t r) const noexcept { return {data_.data() + r * cols_, cols_}; }

    T* data() noexcept { return data_.data(); }
    const T* data() const noexcept { return data_.data(); }
    std::vector<T>& storage() noexcept { return data_; }
    const std::vector<T>& storage() const noexcept { return data_; }

    template <class U>
    bool same_shape(const Matrix<U>& o) const noexcept { return rows_ == o.rows() && cols_ == o.cols(); }
    void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

    Matrix transposed() const {
        Matrix t(cols_, rows_);
        for (std::size_t r = 0; r < rows_; ++r)
            for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
        return t;
    }

    template <class U>
    Matrix<U> cast() const {
        Matrix<U> out(rows_, cols_);
        for (std::size_t i = 0; i < data_.size(); ++i) out[i] = static_cast<U>(data_[i]);
        return out;
    }

    bool all_finite() const {
        return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
    }

    std::string shape_str() const { return std::to_string(rows_) + "x" + std::to_string(cols_); }

    friend bool operator==(const Matrix& a, const Matrix& b) {
        return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
    }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<T> data_;
};

template <class T>
T max_abs_diff(const Matrix<T>& a, const Matrix<T>& b) {
    require(a.same_shape(b), "max_abs_diff: shape mismatch");
    T m = 0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

// out += a * b   (a: n×k, b: k×m)
template <class T>
void gemm_acc(const Matrix<T>& a, const Matrix<T>& b, Matrix<T>& out) {
    const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
    for (std::size_t i = 0; i < n; ++i) {
        T* o = out.data() + i * m;
        const T* ar = a.data() + i * k;
        for (std::size_t p = 0; p < k; ++p) {
            const T av = ar[p];
            if (av == T(0)) continue;
            const T* br = b.data() + p * m;
            for (std::size_t j = 0; j < m; ++j) o[j] += av * br[j];
        }
    }
}

// out += a * bᵀ   (a: n×k, b: m×k)
template <class T>
void gemm_nt_acc(const Matrix<T>& a, const Matrix<T>& b, Matrix<T>& out) {
    const std::size_t n = a.rows(), k = a.cols(), m = b.rows();
    for (std::size_t i = 0; i < n; ++i) {
        const T* ar = a.data() + i * k;
        for (std::size_t j = 0; j < m; ++j) {
            const T* br = b.data() + j * k;
            T s = 0;
            for (std::size_t p = 0; p < k; ++p) s += ar[p] * br[p];
            out(i, j) += s;
        }
    }
}

// out += aᵀ * b   (a: k×n, b: k×m)
template <class T>
void gemm_tn_acc(const Matrix<T>& a, const Matrix<T>& b, Matrix<T>& out) {
    const std::size_t k = a.rows(), n = a.cols(), m = b.cols();
    for (std::size_t p = 0; p < k; ++p) {
        const T* ar = a.data() + p * n;
        const T* br = b.data() + p * m;
        for (std::size_t i = 0; i < n; ++i) {
            const T av = ar[i];
            if (av == T(0)) continue;
            T* o = out.data() + i * m;
            for (std::size_t j = 0; j < m; ++j) o[j] += av * br[j];
        }
    }
}

}  // namespace focuspar
