#pragma once

#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "nsds/allocation.hpp"
#include "nsds/model_io.hpp"
#include "nsds/pipeline.hpp"

namespace nsds {

enum class Method { mse, zd, ewq, kurtboost, nsds };

std::string_view to_string(Method method);
std::optional<Method> parse_method(std::string_view name);
std::string_view to_string(Direction direction);
std::optional<Direction> parse_direction(std::string_view name);

// Additive constant inside the EWQ entropy log.
inline constexpr double kEwqEpsilon = 0.01;
inline constexpr double kKurtBoostThreshold = 3.0;

struct LayerScoreVector {
    Method method = Method::nsds;
    std::vector<double> values;
    Direction direction = Direction::higher_is_sensitive;
    // KurtBoost only: layers granted priority before the k ranking.
    std::vector<std::size_t> outliers;
};

// Raw per-layer weight tensors (q, k, v, o, [gate,] up, down) as stored.
std::vector<const Matrix*> layer_weights(const TensorStore& store, const ArchConfig& config, std::size_t layer);

// sum_W ||W - dequant(quant(W))||_F^2
double mse_score(std::span<const Matrix* const> weights, int bits = 2, std::size_t group_size = kDefaultGroupSize);

// Fraction of the layer's pooled weights with (w - mean) / std > 1.
double zd_score(std::span<const Matrix* const> weights);

// -sum_i p_i log(p_i + 0.01) with p = softmax(flatten(W)).
double ewq_entropy(const Matrix& w);
// Element-count-weighted mean of ewq_entropy over the layer's matrices.
double ewq_score(std::span<const Matrix* const> weights);

// E[(w-mu)^4] / E[(w-mu)^2]^2, i.e. excess kurtosis + 3.
double raw_kurtosis(std::span<const double> w);
// Mean raw kurtosis over the layer's matrices.
double kurtboost_layer_score(std::span<const Matrix* const> weights);

struct KurtBoostResult {
    std::vector<double> k;
    // z_l for d_l = k[l+1] - k[l]; empty when fewer than two layers.
    std::vector<double> z;
    std::vector<std::size_t> outliers;
    // Outliers by descending k, then the remaining layers by descending k.
    std::vector<std::size_t> ranking;
};

// Each difference with z > threshold flags whichever adjacent layer lies
// farther from the median k (the lower index on a tie).
KurtBoostResult kurtboost_scores(std::vector<double> k, double threshold = kKurtBoostThreshold);

LayerScoreVector score_model(const TensorStore& store, const ArchConfig& config, Method method,
                             const ScoringOptions& options = {});

// Feeds every method through the same allocation, honouring direction and
// KurtBoost's outlier priority.
BitAllocationPlan plan_from_scores(const LayerScoreVector& scores, double budget);

}  // namespace nsds
