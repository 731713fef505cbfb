#pragma once

#include <cstddef>
#include <span>

namespace hipo {

/// Non-owning row-major view of an N x P feature matrix.
struct MatrixView {
    std::span<const double> data;
    std::size_t cols = 0;

    std::size_t rows() const { return cols == 0 ? 0 : data.size() / cols; }
    std::span<const double> row(std::size_t i) const { return data.subspan(i * cols, cols); }
    double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }
};

}  // namespace hipo
