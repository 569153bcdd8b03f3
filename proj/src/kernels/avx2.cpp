#include <immintrin.h>

#include <algorithm>
#include <cmath>

#include "nsds/kernels.hpp"

namespace nsds::kernels {
namespace {

inline double hsum(__m256d v) {
    const __m128d lo = _mm256_castpd256_pd128(v);
    const __m128d hi = _mm256_extractf128_pd(v, 1);
    const __m128d s = _mm_add_pd(lo, hi);
    return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

inline __m256d abs_pd(__m256d v) { return _mm256_andnot_pd(_mm256_set1_pd(-0.0), v); }

// Matches std::round: ties away from zero, exact for every finite input.
inline __m256d round_half_away(__m256d v) {
    const __m256d sign_mask = _mm256_set1_pd(-0.0);
    const __m256d t = _mm256_round_pd(v, _MM_FROUND_TO_ZERO | _MM_FROUND_NO_EXC);
    const __m256d frac = abs_pd(_mm256_sub_pd(v, t));
    const __m256d bump = _mm256_cmp_pd(frac, _mm256_set1_pd(0.5), _CMP_GE_OQ);
    const __m256d unit = _mm256_or_pd(_mm256_and_pd(v, sign_mask), _mm256_set1_pd(1.0));
    return _mm256_add_pd(t, _mm256_and_pd(bump, unit));
}

double sum_avx2(std::span<const double> x) {
    const std::size_t n = x.size();
    const double* p = x.data();
    __m256d acc0 = _mm256_setzero_pd();
    __m256d acc1 = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        acc0 = _mm256_add_pd(acc0, _mm256_loadu_pd(p + i));
        acc1 = _mm256_add_pd(acc1, _mm256_loadu_pd(p + i + 4));
    }
    for (; i + 4 <= n; i += 4) acc0 = _mm256_add_pd(acc0, _mm256_loadu_pd(p + i));
    double s = hsum(_mm256_add_pd(acc0, acc1));
    for (; i < n; ++i) s += p[i];
    return s;
}

Moments central_moments_avx2(std::span<const double> x) {
    const std::size_t n = x.size();
    const double* p = x.data();
    const double mean = sum_avx2(x) / double(n);
    const __m256d vmean = _mm256_set1_pd(mean);
    __m256d acc2 = _mm256_setzero_pd();
    __m256d acc4 = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d d = _mm256_sub_pd(_mm256_loadu_pd(p + i), vmean);
        const __m256d d2 = _mm256_mul_pd(d, d);
        acc2 = _mm256_add_pd(acc2, d2);
        acc4 = _mm256_add_pd(acc4, _mm256_mul_pd(d2, d2));
    }
    double s2 = hsum(acc2);
    double s4 = hsum(acc4);
    for (; i < n; ++i) {
        const double d = p[i] - mean;
        const double d2 = d * d;
        s2 += d2;
        s4 += d2 * d2;
    }
    return {mean, s2 / double(n), s4 / double(n)};
}

double abs_sum_avx2(std::span<const double> x) {
    const std::size_t n = x.size();
    const double* p = x.data();
    __m256d acc0 = _mm256_setzero_pd();
    __m256d acc1 = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        acc0 = _mm256_add_pd(acc0, abs_pd(_mm256_loadu_pd(p + i)));
        acc1 = _mm256_add_pd(acc1, abs_pd(_mm256_loadu_pd(p + i + 4)));
    }
    for (; i + 4 <= n; i += 4) acc0 = _mm256_add_pd(acc0, abs_pd(_mm256_loadu_pd(p + i)));
    double s = hsum(_mm256_add_pd(acc0, acc1));
    for (; i < n; ++i) s += std::fabs(p[i]);
    return s;
}

std::size_t count_greater_avx2(std::span<const double> x, double threshold) {
    const std::size_t n = x.size();
    const double* p = x.data();
    const __m256d t = _mm256_set1_pd(threshold);
    std::size_t count = 0;
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const int mask = _mm256_movemask_pd(_mm256_cmp_pd(_mm256_loadu_pd(p + i), t, _CMP_GT_OQ));
        count += std::size_t(__builtin_popcount(unsigned(mask)));
    }
    for (; i < n; ++i) count += p[i] > threshold ? 1 : 0;
    return count;
}

MinMax min_max_avx2(std::span<const double> x) {
    const std::size_t n = x.size();
    const double* p = x.data();
    __m256d lo = _mm256_set1_pd(p[0]);
    __m256d hi = lo;
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d v = _mm256_loadu_pd(p + i);
        lo = _mm256_min_pd(lo, v);
        hi = _mm256_max_pd(hi, v);
    }
    alignas(32) double lo_lanes[4];
    alignas(32) double hi_lanes[4];
    _mm256_store_pd(lo_lanes, lo);
    _mm256_store_pd(hi_lanes, hi);
    MinMax mm{lo_lanes[0], hi_lanes[0]};
    for (int k = 1; k < 4; ++k) {
        mm.min = std::min(mm.min, lo_lanes[k]);
        mm.max = std::max(mm.max, hi_lanes[k]);
    }
    for (; i < n; ++i) {
        mm.min = std::min(mm.min, p[i]);
        mm.max = std::max(mm.max, p[i]);
    }
    return mm;
}

void quantize_avx2(std::span<const double> x, double scale, double zero, std::int32_t max_code,
                   std::span<std::int32_t> codes) {
    const std::size_t n = x.size();
    const double* p = x.data();
    const __m256d vs = _mm256_set1_pd(scale);
    const __m256d vz = _mm256_set1_pd(zero);
    const __m256d vhi = _mm256_set1_pd(double(max_code));
    const __m256d vlo = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d q = _mm256_add_pd(_mm256_div_pd(_mm256_loadu_pd(p + i), vs), vz);
        q = _mm256_min_pd(_mm256_max_pd(round_half_away(q), vlo), vhi);
        _mm_storeu_si128(reinterpret_cast<__m128i*>(codes.data() + i), _mm256_cvttpd_epi32(q));
    }
    const double hi = double(max_code);
    for (; i < n; ++i) codes[i] = std::int32_t(std::clamp(std::round(p[i] / scale + zero), 0.0, hi));
}

void dequantize_avx2(std::span<const std::int32_t> codes, double scale, double zero, std::span<double> out) {
    const std::size_t n = codes.size();
    const __m256d vs = _mm256_set1_pd(scale);
    const __m256d vz = _mm256_set1_pd(zero);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m128i c = _mm_loadu_si128(reinterpret_cast<const __m128i*>(codes.data() + i));
        const __m256d v = _mm256_mul_pd(vs, _mm256_sub_pd(_mm256_cvtepi32_pd(c), vz));
        _mm256_storeu_pd(out.data() + i, v);
    }
    for (; i < n; ++i) out[i] = scale * (double(codes[i]) - zero);
}

double squared_error_avx2(std::span<const double> a, std::span<const double> b) {
    const std::size_t n = a.size();
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d d = _mm256_sub_pd(_mm256_loadu_pd(a.data() + i), _mm256_loadu_pd(b.data() + i));
        acc = _mm256_add_pd(acc, _mm256_mul_pd(d, d));
    }
    double s = hsum(acc);
    for (; i < n; ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

}  // namespace

const KernelTable& avx2_table() {
    static const KernelTable table{
        "avx2",        central_moments_avx2, abs_sum_avx2,    sum_avx2,          count_greater_avx2,
        min_max_avx2,  quantize_avx2,        dequantize_avx2, squared_error_avx2,
    };
    return table;
}

}  // namespace nsds::kernels
