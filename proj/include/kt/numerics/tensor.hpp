#pragma once

#include <algorithm>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace kt {

/// Raised whenever two operands disagree on a dimension.
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Dense vector of reals.
template <typename Real>
class Vector {
public:
    Vector() = default;
    explicit Vector(std::size_t dim, Real fill = Real(0)) : data_(dim, fill) {}
    Vector(std::initializer_list<Real> values) : data_(values) {}
    explicit Vector(std::vector<Real> values) : data_(std::move(values)) {}

    std::size_t dim() const { return data_.size(); }
    Real& operator[](std::size_t i) { return data_[i]; }
    Real operator[](std::size_t i) const { return data_[i]; }

    std::span<Real> span() { return data_; }
    std::span<const Real> span() const { return data_; }
    const std::vector<Real>& values() const { return data_; }
    Real* data() { return data_.data(); }
    const Real* data() const { return data_.data(); }

    bool operator==(const Vector&) const = default;

private:
    std::vector<Real> data_;
};

/// Dense row-major matrix.
template <typename Real>
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, Real fill = Real(0))
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
    Matrix(std::size_t rows, std::size_t cols, std::vector<Real> data)
        : rows_(rows), cols_(cols), data_(std::move(data)) {
        if (data_.size() != rows_ * cols_) {
            throw ShapeError("matrix data length " + std::to_string(data_.size()) +
                             " does not match " + std::to_string(rows_) + "x" +
                             std::to_string(cols_));
        }
    }
    Matrix(std::initializer_list<std::initializer_list<Real>> rows) {
        rows_ = rows.size();
        cols_ = rows_ == 0 ? 0 : rows.begin()->size();
        data_.reserve(rows_ * cols_);
        for (const auto& row : rows) {
            if (row.size() != cols_) throw ShapeError("ragged matrix literal");
            data_.insert(data_.end(), row.begin(), row.end());
        }
    }

    static Matrix identity(std::size_t n) {
        Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = Real(1);
        return m;
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }

    Real& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    Real operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<Real> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const Real> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    std::span<Real> span() { return data_; }
    std::span<const Real> span() const { return data_; }
    Real* data() { return data_.data(); }
    const Real* data() const { return data_.data(); }

    void fill(Real v) { std::fill(data_.begin(), data_.end(), v); }

    bool operator==(const Matrix&) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<Real> data_;
};

/// Validity flags for padded positions.
class Mask {
public:
    Mask() = default;
    explicit Mask(std::size_t length, bool valid = true) : valid_(length, valid ? 1 : 0) {}
    Mask(std::initializer_list<bool> flags) {
        for (bool f : flags) valid_.push_back(f ? 1 : 0);
    }

    std::size_t length() const { return valid_.size(); }
    bool valid(std::size_t i) const { return valid_[i] != 0; }
    void set(std::size_t i, bool v) { valid_[i] = v ? 1 : 0; }
    std::size_t count_valid() const {
        std::size_t n = 0;
        for (auto v : valid_) n += v;
        return n;
    }

private:
    std::vector<unsigned char> valid_;
};

}  // namespace kt
