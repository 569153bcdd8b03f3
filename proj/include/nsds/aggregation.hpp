#pragma once

#include <span>
#include <vector>

#include "nsds/decomposition.hpp"

namespace nsds {

inline constexpr double kDefaultEpsilon = 1e-12;
// Rescales MAD to a standard deviation under normality.
inline constexpr double kMadScale = 1.4826;

enum class Metric { nv, se };

// Raw scores, values[layer][j] for component kind kinds[j].
struct ScoreTable {
    Metric metric = Metric::nv;
    std::vector<ComponentKind> kinds;
    std::vector<std::vector<double>> values;

    std::size_t num_layers() const { return values.size(); }
    std::vector<double> column(std::size_t j) const;
    void validate() const;
};

struct LayerScores {
    std::vector<double> s_nv;
    std::vector<double> s_se;
    std::vector<double> s_nsds;
    // Per-component sigmoid probabilities, same layout as the input tables.
    std::vector<std::vector<double>> normalized_nv;
    std::vector<std::vector<double>> normalized_se;
};

// Order statistic at index floor((n-1)/2).
double lower_median(std::vector<double> values);

// z = (r - median) / (1.4826 * MAD + epsilon), then 1 / (1 + exp(-z)).
// Results are kept inside the open unit interval where double rounding
// would otherwise saturate the logistic to exactly 0 or 1.
std::vector<double> mad_sigmoid(std::span<const double> raw, double epsilon = kDefaultEpsilon);

// 1 - prod_i (1 - p_i)^(1/n)
double soft_or_n(std::span<const double> probs);
// p1 + p2 - p1 p2
double soft_or_2(double p1, double p2);

LayerScores aggregate(const ScoreTable& nv_table, const ScoreTable& se_table, double epsilon = kDefaultEpsilon);

}  // namespace nsds
