#include "nsds/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "nsds/aggregation.hpp"
#include "nsds/error.hpp"
#include "nsds/kernels.hpp"
#include "nsds/numerical_vulnerability.hpp"
#include "nsds/parallel.hpp"
#include "nsds/quantizer.hpp"

namespace nsds {
namespace {

constexpr std::string_view kModule = "baselines";

}  // namespace

std::string_view to_string(Method method) {
    switch (method) {
        case Method::mse: return "mse";
        case Method::zd: return "zd";
        case Method::ewq: return "ewq";
        case Method::kurtboost: return "kurtboost";
        case Method::nsds: return "nsds";
    }
    return "?";
}

std::optional<Method> parse_method(std::string_view name) {
    for (Method m : {Method::mse, Method::zd, Method::ewq, Method::kurtboost, Method::nsds})
        if (to_string(m) == name) return m;
    return std::nullopt;
}

std::string_view to_string(Direction direction) {
    return direction == Direction::higher_is_sensitive ? "higher_is_sensitive" : "lower_is_sensitive";
}

std::optional<Direction> parse_direction(std::string_view name) {
    if (name == "higher_is_sensitive") return Direction::higher_is_sensitive;
    if (name == "lower_is_sensitive") return Direction::lower_is_sensitive;
    return std::nullopt;
}

std::vector<const Matrix*> layer_weights(const TensorStore& store, const ArchConfig& config, std::size_t layer) {
    std::vector<const Matrix*> out;
    for (TensorKind kind : layer_tensor_kinds(config.has_gate)) out.push_back(&store.matrix(config.tensor_name(kind, layer)));
    return out;
}

double mse_score(std::span<const Matrix* const> weights, int bits, std::size_t group_size) {
    const auto& k = kernels::active();
    double total = 0.0;
    for (const Matrix* w : weights) total += k.squared_error(w->values(), fake_quantize(*w, bits, group_size).values());
    return total;
}

double zd_score(std::span<const Matrix* const> weights) {
    std::vector<double> pooled;
    for (const Matrix* w : weights) pooled.insert(pooled.end(), w->values().begin(), w->values().end());
    if (pooled.size() < 2) fail(ErrorKind::insufficient_data, std::string(kModule), "ZD needs at least 2 weights");
    const auto m = kernels::active().central_moments(pooled);
    const double sd = std::sqrt(m.m2);
    if (!(sd > 0.0)) fail(ErrorKind::degenerate, std::string(kModule), "layer weights have zero variance");
    std::size_t above = 0;
    for (double w : pooled) above += (w - m.mean) / sd > 1.0 ? 1 : 0;
    return double(above) / double(pooled.size());
}

double ewq_entropy(const Matrix& w) {
    if (w.empty()) fail(ErrorKind::validation, std::string(kModule), "EWQ of an empty matrix");
    const auto values = w.values();
    const double peak = *std::max_element(values.begin(), values.end());
    std::vector<double> e(values.size());
    double z = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
        e[i] = std::exp(values[i] - peak);
        z += e[i];
    }
    double h = 0.0;
    for (double ei : e) {
        const double p = ei / z;
        h -= p * std::log(p + kEwqEpsilon);
    }
    return h;
}

double ewq_score(std::span<const Matrix* const> weights) {
    double weighted = 0.0;
    double count = 0.0;
    for (const Matrix* w : weights) {
        weighted += double(w->size()) * ewq_entropy(*w);
        count += double(w->size());
    }
    if (count == 0.0) fail(ErrorKind::validation, std::string(kModule), "EWQ of a layer without weights");
    return weighted / count;
}

double raw_kurtosis(std::span<const double> w) { return excess_kurtosis(w) + 3.0; }

double kurtboost_layer_score(std::span<const Matrix* const> weights) {
    if (weights.empty()) fail(ErrorKind::validation, std::string(kModule), "KurtBoost of a layer without weights");
    double sum = 0.0;
    for (const Matrix* w : weights) sum += raw_kurtosis(w->values());
    return sum / double(weights.size());
}

KurtBoostResult kurtboost_scores(std::vector<double> k, double threshold) {
    KurtBoostResult r;
    r.k = std::move(k);
    const std::size_t layers = r.k.size();
    if (layers == 0) fail(ErrorKind::validation, std::string(kModule), "KurtBoost needs at least one layer");

    std::vector<bool> flagged(layers, false);
    if (layers >= 2) {
        std::vector<double> d(layers - 1);
        for (std::size_t l = 0; l + 1 < layers; ++l) d[l] = r.k[l + 1] - r.k[l];
        const auto m = kernels::active().central_moments(d);
        const double sd = std::sqrt(m.m2);
        r.z.assign(d.size(), 0.0);
        if (sd > 0.0) {
            const double median = lower_median(r.k);
            for (std::size_t l = 0; l < d.size(); ++l) {
                r.z[l] = std::fabs(d[l] - m.mean) / sd;
                if (r.z[l] > threshold) {
                    const bool upper = std::fabs(r.k[l + 1] - median) > std::fabs(r.k[l] - median);
                    flagged[upper ? l + 1 : l] = true;
                }
            }
        }
    }

    const auto by_k = rank_layers(r.k, Direction::higher_is_sensitive);
    for (std::size_t l : by_k)
        if (flagged[l]) r.ranking.push_back(l);
    r.outliers = r.ranking;
    std::sort(r.outliers.begin(), r.outliers.end());
    for (std::size_t l : by_k)
        if (!flagged[l]) r.ranking.push_back(l);
    return r;
}

LayerScoreVector score_model(const TensorStore& store, const ArchConfig& config, Method method,
                             const ScoringOptions& options) {
    LayerScoreVector out;
    out.method = method;
    if (method == Method::nsds) {
        out.values = score_nsds(store, config, options).scores.s_nsds;
        return out;
    }
    validate_store(store, config);
    out.values.assign(config.num_layers, 0.0);
    parallel_for(config.num_layers, options.threads, [&](std::size_t l) {
        const auto weights = layer_weights(store, config, l);
        switch (method) {
            case Method::mse: out.values[l] = mse_score(weights, options.mse_bits, options.group_size); break;
            case Method::zd: out.values[l] = zd_score(weights); break;
            case Method::ewq: out.values[l] = ewq_score(weights); break;
            case Method::kurtboost: out.values[l] = kurtboost_layer_score(weights); break;
            case Method::nsds: break;
        }
    });
    if (method == Method::zd) out.direction = Direction::lower_is_sensitive;
    if (method == Method::kurtboost) out.outliers = kurtboost_scores(out.values).outliers;
    return out;
}

BitAllocationPlan plan_from_scores(const LayerScoreVector& scores, double budget) {
    const std::string method(to_string(scores.method));
    if (scores.method != Method::kurtboost) return allocate(scores.values, budget, method, scores.direction);

    // Rebuild the priority order from the recorded outliers.
    std::vector<bool> flagged(scores.values.size(), false);
    for (std::size_t l : scores.outliers) {
        if (l >= flagged.size()) fail(ErrorKind::validation, std::string(kModule), "outlier index out of range");
        flagged[l] = true;
    }
    std::vector<std::size_t> ranking;
    const auto by_k = rank_layers(scores.values, Direction::higher_is_sensitive);
    for (std::size_t l : by_k)
        if (flagged[l]) ranking.push_back(l);
    for (std::size_t l : by_k)
        if (!flagged[l]) ranking.push_back(l);
    return allocate_ranked(std::move(ranking), scores.values, budget, method);
}

}  // namespace nsds
