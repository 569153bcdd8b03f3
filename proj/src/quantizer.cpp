#include "nsds/quantizer.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "nsds/error.hpp"
#include "nsds/kernels.hpp"

namespace nsds {
namespace {

constexpr std::string_view kModule = "quantizer";

}  // namespace

QuantizedTensor rtn_quantize(const Matrix& w, int bits, std::size_t group_size) {
    if (bits != 2 && bits != 4) {
        fail(ErrorKind::validation, std::string(kModule), "bit width must be 2 or 4, got " + std::to_string(bits));
    }
    if (group_size == 0) fail(ErrorKind::validation, std::string(kModule), "group size must be positive");
    if (!w.all_finite()) fail(ErrorKind::data, std::string(kModule), "cannot quantize non-finite weights");

    QuantizedTensor q;
    q.rows = w.rows();
    q.cols = w.cols();
    q.bits = bits;
    q.group_size = group_size;
    q.codes.resize(w.size());
    const std::size_t groups = q.groups_per_row();
    q.scales.reserve(q.rows * groups);
    q.zero_points.reserve(q.rows * groups);

    const auto& k = kernels::active();
    const std::int32_t max_code = (1 << bits) - 1;
    for (std::size_t r = 0; r < q.rows; ++r) {
        const auto row = w.row(r);
        for (std::size_t g = 0; g < groups; ++g) {
            const std::size_t begin = g * group_size;
            const std::size_t len = std::min(group_size, q.cols - begin);
            const auto group = row.subspan(begin, len);
            std::span<std::int32_t> codes(q.codes.data() + r * q.cols + begin, len);
            const auto [lo, hi] = k.min_max(group);
            if (lo == hi) {
                q.scales.push_back(1.0);
                q.zero_points.push_back(-lo);
                std::fill(codes.begin(), codes.end(), 0);
                continue;
            }
            const double scale = (hi - lo) / double(max_code);
            const double zero = -lo / scale;
            q.scales.push_back(scale);
            q.zero_points.push_back(zero);
            k.quantize(group, scale, zero, max_code, codes);
        }
    }
    return q;
}

Matrix rtn_dequantize(const QuantizedTensor& q) {
    Matrix out(q.rows, q.cols);
    const auto& k = kernels::active();
    const std::size_t groups = q.groups_per_row();
    for (std::size_t r = 0; r < q.rows; ++r) {
        for (std::size_t g = 0; g < groups; ++g) {
            const std::size_t begin = g * q.group_size;
            const std::size_t len = std::min(q.group_size, q.cols - begin);
            const std::size_t idx = r * groups + g;
            k.dequantize({q.codes.data() + r * q.cols + begin, len}, q.scales[idx], q.zero_points[idx],
                         out.values().subspan(r * q.cols + begin, len));
        }
    }
    return out;
}

Matrix fake_quantize(const Matrix& w, int bits, std::size_t group_size) {
    return rtn_dequantize(rtn_quantize(w, bits, group_size));
}

PlanApplication apply_plan_detailed(const TensorStore& store, const ArchConfig& config, const BitAllocationPlan& plan,
                                    std::size_t group_size) {
    if (plan.bits.size() != config.num_layers) {
        fail(ErrorKind::validation, std::string(kModule),
             "plan covers " + std::to_string(plan.bits.size()) + " layers but the model has " +
                 std::to_string(config.num_layers));
    }
    PlanApplication result;
    result.store = store;
    result.layer_squared_error.assign(config.num_layers, 0.0);
    const auto& k = kernels::active();
    for (std::size_t l = 0; l < config.num_layers; ++l) {
        for (TensorKind kind : layer_tensor_kinds(config.has_gate)) {
            const std::string name = config.tensor_name(kind, l);
            const Tensor& source = store.at(name);
            Matrix rebuilt = fake_quantize(source.value, plan.bits[l], group_size);
            result.layer_squared_error[l] += k.squared_error(source.value.values(), rebuilt.values());
            const DType dtype = source.source_dtype == DType::f64 ? DType::f64 : DType::f32;
            for (double& v : rebuilt.values()) v = round_to_dtype(v, dtype);
            result.store.insert(name, Tensor{std::move(rebuilt), dtype});
        }
    }
    return result;
}

TensorStore apply_plan(const TensorStore& store, const ArchConfig& config, const BitAllocationPlan& plan,
                       std::size_t group_size) {
    return apply_plan_detailed(store, config, plan, group_size).store;
}

}  // namespace nsds
