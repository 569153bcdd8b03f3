#include "nsds/matrix.hpp"

#include <cmath>
#include <string>

#include "nsds/error.hpp"

namespace nsds {

Matrix::Matrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows * cols) {
        fail(ErrorKind::shape, "matrix",
             "data length " + std::to_string(data_.size()) + " does not match " + std::to_string(rows) + "x" +
                 std::to_string(cols));
    }
}

Matrix Matrix::from_eigen(const Eigen::Ref<const Eigen::MatrixXd>& m) {
    Matrix out(std::size_t(m.rows()), std::size_t(m.cols()));
    out.eigen() = m;
    return out;
}

Matrix Matrix::identity(std::size_t n) {
    Matrix out(n, n);
    for (std::size_t i = 0; i < n; ++i) out(i, i) = 1.0;
    return out;
}

Matrix Matrix::transposed() const {
    Matrix out(cols_, rows_);
    for (std::size_t r = 0; r < rows_; ++r)
        for (std::size_t c = 0; c < cols_; ++c) out(c, r) = (*this)(r, c);
    return out;
}

Matrix Matrix::row_block(std::size_t begin, std::size_t count) const {
    if (begin + count > rows_) {
        fail(ErrorKind::shape, "matrix",
             "row block [" + std::to_string(begin) + ", " + std::to_string(begin + count) + ") exceeds " +
                 std::to_string(rows_) + " rows");
    }
    auto first = data_.begin() + std::ptrdiff_t(begin * cols_);
    return Matrix(count, cols_, std::vector<double>(first, first + std::ptrdiff_t(count * cols_)));
}

bool Matrix::all_finite() const noexcept {
    for (double v : data_)
        if (!std::isfinite(v)) return false;
    return true;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) {
        fail(ErrorKind::shape, "matrix",
             "inner dimensions differ: " + std::to_string(a.cols()) + " vs " + std::to_string(b.rows()));
    }
    Matrix out(a.rows(), b.cols());
    out.eigen().noalias() = a.eigen() * b.eigen();
    return out;
}

}  // namespace nsds
