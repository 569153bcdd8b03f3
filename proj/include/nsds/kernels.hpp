#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>

// Flat-array inner loops shared by the scoring and quantization modules.
// Every kernel has a scalar reference; SIMD variants must agree with it
// exactly for element-wise kernels and to rounding for reductions.
namespace nsds::kernels {

// Population central moments: m2 = E[(x-mean)^2], m4 = E[(x-mean)^4].
struct Moments {
    double mean = 0.0;
    double m2 = 0.0;
    double m4 = 0.0;
};

struct MinMax {
    double min = 0.0;
    double max = 0.0;
};

struct KernelTable {
    std::string_view name;
    // Two-pass: mean first, then central sums. Input must be non-empty.
    Moments (*central_moments)(std::span<const double> x);
    double (*abs_sum)(std::span<const double> x);
    double (*sum)(std::span<const double> x);
    // Number of elements strictly greater than `threshold`.
    std::size_t (*count_greater)(std::span<const double> x, double threshold);
    // Input must be non-empty.
    MinMax (*min_max)(std::span<const double> x);
    // codes[i] = clamp(round_half_away(x[i] / scale + zero), 0, max_code)
    void (*quantize)(std::span<const double> x, double scale, double zero, std::int32_t max_code,
                     std::span<std::int32_t> codes);
    // out[i] = scale * (codes[i] - zero)
    void (*dequantize)(std::span<const std::int32_t> codes, double scale, double zero, std::span<double> out);
    // sum_i (a[i] - b[i])^2
    double (*squared_error)(std::span<const double> a, std::span<const double> b);
};

const KernelTable& scalar();
// nullptr when not compiled in or not supported by this CPU.
const KernelTable* avx2();

// Selected once at first use: AVX2 when available, unless the environment
// variable NSDS_SIMD=scalar forces the reference path.
const KernelTable& active();

}  // namespace nsds::kernels
