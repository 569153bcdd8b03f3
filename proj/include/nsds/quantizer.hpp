#pragma once

#include <cstdint>
#include <vector>

#include "nsds/allocation.hpp"
#include "nsds/matrix.hpp"
#include "nsds/model_io.hpp"

namespace nsds {

inline constexpr std::size_t kDefaultGroupSize = 64;

// Asymmetric min-max round-to-nearest quantization. Groups are runs of
// `group_size` consecutive elements along each row (the input dimension of
// a stored output x input weight); the last group of a row may be shorter.
// Group parameters are stored row by row.
struct QuantizedTensor {
    std::size_t rows = 0;
    std::size_t cols = 0;
    int bits = 4;
    std::size_t group_size = kDefaultGroupSize;
    std::vector<std::int32_t> codes;
    std::vector<double> scales;
    std::vector<double> zero_points;

    std::size_t groups_per_row() const { return (cols + group_size - 1) / group_size; }
};

// Per group: s = (max - min) / (2^bits - 1), z = -min / s,
// code = clamp(round(w / s + z), 0, 2^bits - 1). A constant group c gets
// s = 1, z = -c and all-zero codes, which dequantizes to c exactly.
QuantizedTensor rtn_quantize(const Matrix& w, int bits, std::size_t group_size = kDefaultGroupSize);

// w_hat = s * (code - z)
Matrix rtn_dequantize(const QuantizedTensor& q);

Matrix fake_quantize(const Matrix& w, int bits, std::size_t group_size = kDefaultGroupSize);

struct PlanApplication {
    TensorStore store;
    // Squared Frobenius reconstruction error summed over each layer's weights.
    std::vector<double> layer_squared_error;
};

// Replaces every per-layer weight matrix with its RTN reconstruction at the
// layer's planned width; all other tensors pass through untouched.
PlanApplication apply_plan_detailed(const TensorStore& store, const ArchConfig& config, const BitAllocationPlan& plan,
                                    std::size_t group_size = kDefaultGroupSize);
TensorStore apply_plan(const TensorStore& store, const ArchConfig& config, const BitAllocationPlan& plan,
                       std::size_t group_size = kDefaultGroupSize);

}  // namespace nsds
