#include <algorithm>
#include <cmath>

#include "nsds/kernels.hpp"

namespace nsds::kernels {
namespace {

Moments central_moments_scalar(std::span<const double> x) {
    double s = 0.0;
    for (double v : x) s += v;
    const double n = double(x.size());
    const double mean = s / n;
    double s2 = 0.0;
    double s4 = 0.0;
    for (double v : x) {
        const double d = v - mean;
        const double d2 = d * d;
        s2 += d2;
        s4 += d2 * d2;
    }
    return {mean, s2 / n, s4 / n};
}

double abs_sum_scalar(std::span<const double> x) {
    double s = 0.0;
    for (double v : x) s += std::fabs(v);
    return s;
}

double sum_scalar(std::span<const double> x) {
    double s = 0.0;
    for (double v : x) s += v;
    return s;
}

std::size_t count_greater_scalar(std::span<const double> x, double threshold) {
    std::size_t n = 0;
    for (double v : x) n += v > threshold ? 1 : 0;
    return n;
}

MinMax min_max_scalar(std::span<const double> x) {
    MinMax mm{x[0], x[0]};
    for (double v : x) {
        mm.min = std::min(mm.min, v);
        mm.max = std::max(mm.max, v);
    }
    return mm;
}

void quantize_scalar(std::span<const double> x, double scale, double zero, std::int32_t max_code,
                     std::span<std::int32_t> codes) {
    const double hi = double(max_code);
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double q = std::clamp(std::round(x[i] / scale + zero), 0.0, hi);
        codes[i] = std::int32_t(q);
    }
}

void dequantize_scalar(std::span<const std::int32_t> codes, double scale, double zero, std::span<double> out) {
    for (std::size_t i = 0; i < codes.size(); ++i) out[i] = scale * (double(codes[i]) - zero);
}

double squared_error_scalar(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

}  // namespace

const KernelTable& scalar() {
    static const KernelTable table{
        "scalar",        central_moments_scalar, abs_sum_scalar,    sum_scalar,          count_greater_scalar,
        min_max_scalar,  quantize_scalar,        dequantize_scalar, squared_error_scalar,
    };
    return table;
}

}  // namespace nsds::kernels
