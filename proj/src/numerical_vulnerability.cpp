#include "nsds/numerical_vulnerability.hpp"

#include <cmath>
#include <string>

#include "nsds/error.hpp"
#include "nsds/kernels.hpp"

namespace nsds {

double excess_kurtosis(std::span<const double> w) {
    if (w.size() < 2) {
        fail(ErrorKind::insufficient_data, "numerical_vulnerability",
             "kurtosis needs at least 2 values, got " + std::to_string(w.size()));
    }
    for (std::size_t i = 0; i < w.size(); ++i) {
        if (!std::isfinite(w[i])) {
            fail(ErrorKind::data, "numerical_vulnerability", "non-finite value at index " + std::to_string(i));
        }
    }
    const auto& k = kernels::active();
    const auto range = k.min_max(w);
    if (range.min == range.max) return 0.0;
    const auto m = k.central_moments(w);
    return m.m4 / (m.m2 * m.m2) - 3.0;
}

double nv_component(const Matrix& component) { return excess_kurtosis(component.values()); }

namespace {

double mean_over_heads(const std::vector<Matrix>& heads) {
    double sum = 0.0;
    for (const Matrix& h : heads) sum += nv_component(h);
    return sum / double(heads.size());
}

}  // namespace

ComponentScores nv_layer(const LayerComponents& lc) {
    if (lc.qk_heads.empty() || lc.ov_heads.empty()) {
        fail(ErrorKind::validation, "numerical_vulnerability", "layer has no attention heads");
    }
    ComponentScores out;
    out[ComponentKind::qk] = mean_over_heads(lc.qk_heads);
    out[ComponentKind::ov] = mean_over_heads(lc.ov_heads);
    out[ComponentKind::ffn_in] = nv_component(lc.ffn_in);
    out[ComponentKind::ffn_out] = nv_component(lc.ffn_out);
    if (lc.ffn_gate) out[ComponentKind::ffn_gate] = nv_component(*lc.ffn_gate);
    return out;
}

}  // namespace nsds
