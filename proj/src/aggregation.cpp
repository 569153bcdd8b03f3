#include "nsds/aggregation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "nsds/error.hpp"

namespace nsds {
namespace {

constexpr std::string_view kModule = "aggregation";

void check_prob(double p) {
    if (!(p >= 0.0 && p <= 1.0)) {
        fail(ErrorKind::validation, std::string(kModule), "probability " + std::to_string(p) + " outside [0, 1]");
    }
}

}  // namespace

std::vector<double> ScoreTable::column(std::size_t j) const {
    std::vector<double> out;
    out.reserve(values.size());
    for (const auto& row : values) out.push_back(row[j]);
    return out;
}

void ScoreTable::validate() const {
    if (values.empty()) fail(ErrorKind::validation, std::string(kModule), "score table has no layers");
    if (kinds.empty()) fail(ErrorKind::validation, std::string(kModule), "score table has no component kinds");
    for (const auto& row : values) {
        if (row.size() != kinds.size()) {
            fail(ErrorKind::validation, std::string(kModule), "score table row width differs from kind count");
        }
        for (double v : row) {
            if (!std::isfinite(v)) fail(ErrorKind::validation, std::string(kModule), "non-finite raw score");
        }
    }
}

double lower_median(std::vector<double> values) {
    if (values.empty()) fail(ErrorKind::validation, std::string(kModule), "median of an empty set");
    const auto mid = values.begin() + std::ptrdiff_t((values.size() - 1) / 2);
    std::nth_element(values.begin(), mid, values.end());
    return *mid;
}

std::vector<double> mad_sigmoid(std::span<const double> raw, double epsilon) {
    if (raw.empty()) fail(ErrorKind::validation, std::string(kModule), "cannot normalize an empty column");
    std::vector<double> values(raw.begin(), raw.end());
    const double median = lower_median(values);
    for (double& v : values) v = std::fabs(v - median);
    const double mad = lower_median(values);
    const double denom = kMadScale * mad + epsilon;

    constexpr double lo = std::numeric_limits<double>::denorm_min();
    const double hi = std::nextafter(1.0, 0.0);
    std::vector<double> out(raw.size());
    for (std::size_t i = 0; i < raw.size(); ++i) {
        const double z = (raw[i] - median) / denom;
        out[i] = std::clamp(1.0 / (1.0 + std::exp(-z)), lo, hi);
    }
    return out;
}

double soft_or_n(std::span<const double> probs) {
    if (probs.empty()) fail(ErrorKind::validation, std::string(kModule), "soft-or of zero terms");
    for (double p : probs) check_prob(p);
    if (probs.size() == 1) return probs[0];
    const double root = 1.0 / double(probs.size());
    double prod = 1.0;
    for (double p : probs) prod *= std::pow(1.0 - p, root);
    return 1.0 - prod;
}

double soft_or_2(double p1, double p2) {
    check_prob(p1);
    check_prob(p2);
    return p1 + p2 - p1 * p2;
}

namespace {

std::vector<std::vector<double>> normalize_columns(const ScoreTable& t, double epsilon) {
    std::vector<std::vector<double>> out(t.num_layers(), std::vector<double>(t.kinds.size()));
    for (std::size_t j = 0; j < t.kinds.size(); ++j) {
        const auto col = mad_sigmoid(t.column(j), epsilon);
        for (std::size_t l = 0; l < t.num_layers(); ++l) out[l][j] = col[l];
    }
    return out;
}

}  // namespace

LayerScores aggregate(const ScoreTable& nv_table, const ScoreTable& se_table, double epsilon) {
    nv_table.validate();
    se_table.validate();
    if (nv_table.num_layers() != se_table.num_layers() || nv_table.kinds != se_table.kinds) {
        fail(ErrorKind::validation, std::string(kModule), "NV and SE tables disagree in layers or component kinds");
    }
    LayerScores s;
    s.normalized_nv = normalize_columns(nv_table, epsilon);
    s.normalized_se = normalize_columns(se_table, epsilon);
    const std::size_t layers = nv_table.num_layers();
    s.s_nv.resize(layers);
    s.s_se.resize(layers);
    s.s_nsds.resize(layers);
    for (std::size_t l = 0; l < layers; ++l) {
        s.s_nv[l] = soft_or_n(s.normalized_nv[l]);
        s.s_se[l] = soft_or_n(s.normalized_se[l]);
        s.s_nsds[l] = soft_or_2(s.s_nv[l], s.s_se[l]);
    }
    return s;
}

}  // namespace nsds
