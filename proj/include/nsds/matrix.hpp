#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Core>

namespace nsds {

using RowMajorXd = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Dense row-major matrix of doubles.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols);
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

    static Matrix from_eigen(const Eigen::Ref<const Eigen::MatrixXd>& m);
    static Matrix identity(std::size_t n);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<double> values() noexcept { return data_; }
    std::span<const double> values() const noexcept { return data_; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    Eigen::Map<RowMajorXd> eigen() { return {data_.data(), Eigen::Index(rows_), Eigen::Index(cols_)}; }
    Eigen::Map<const RowMajorXd> eigen() const {
        return {data_.data(), Eigen::Index(rows_), Eigen::Index(cols_)};
    }

    Matrix transposed() const;
    // Rows [begin, begin + count).
    Matrix row_block(std::size_t begin, std::size_t count) const;

    bool all_finite() const noexcept;

    friend bool operator==(const Matrix&, const Matrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

Matrix matmul(const Matrix& a, const Matrix& b);

}  // namespace nsds
