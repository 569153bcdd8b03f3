#include "nsds/allocation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "nsds/error.hpp"

namespace nsds {
namespace {

constexpr std::string_view kModule = "allocation";

}  // namespace

std::size_t num_4bit_layers(double budget, std::size_t num_layers) {
    if (!(budget >= 2.0 && budget <= 4.0)) {
        fail(ErrorKind::validation, std::string(kModule), "budget " + std::to_string(budget) + " outside [2, 4]");
    }
    if (num_layers == 0) fail(ErrorKind::validation, std::string(kModule), "model has no layers");
    const double x = (budget - 2.0) / 2.0 * double(num_layers);
    // Decimal budgets such as 2.3 are not exact in binary; a product within
    // 1e-9 of a half is treated as the half and rounded up.
    const double base = std::floor(x);
    double rounded = std::round(x);
    if (std::fabs(x - base - 0.5) < 1e-9) rounded = base + 1.0;
    return std::min(num_layers, std::size_t(std::max(0.0, rounded)));
}

std::vector<std::size_t> rank_layers(std::span<const double> scores, Direction direction) {
    for (double s : scores) {
        if (!std::isfinite(s)) fail(ErrorKind::validation, std::string(kModule), "non-finite layer score");
    }
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return direction == Direction::higher_is_sensitive ? scores[a] > scores[b] : scores[a] < scores[b];
    });
    return order;
}

BitAllocationPlan allocate_ranked(std::vector<std::size_t> ranking, std::vector<double> scores, double budget,
                                  std::string method) {
    const std::size_t layers = ranking.size();
    const std::size_t fours = num_4bit_layers(budget, layers);
    BitAllocationPlan plan;
    plan.budget = budget;
    plan.bits.assign(layers, 2);
    for (std::size_t i = 0; i < fours; ++i) {
        if (ranking[i] >= layers) fail(ErrorKind::validation, std::string(kModule), "ranking index out of range");
        plan.bits[ranking[i]] = 4;
    }
    plan.ranking = std::move(ranking);
    plan.scores = std::move(scores);
    plan.method = std::move(method);
    return plan;
}

BitAllocationPlan allocate(std::span<const double> scores, double budget, std::string method, Direction direction) {
    return allocate_ranked(rank_layers(scores, direction), std::vector<double>(scores.begin(), scores.end()), budget,
                           std::move(method));
}

nlohmann::json to_json(const BitAllocationPlan& plan) {
    return {
        {"budget", plan.budget},   {"bits", plan.bits},     {"ranking", plan.ranking},
        {"scores", plan.scores},   {"method", plan.method}, {"config_digest", plan.config_digest},
    };
}

BitAllocationPlan plan_from_json(const nlohmann::json& j) {
    try {
        BitAllocationPlan plan;
        plan.budget = j.at("budget").get<double>();
        plan.bits = j.at("bits").get<std::vector<int>>();
        plan.ranking = j.at("ranking").get<std::vector<std::size_t>>();
        plan.scores = j.at("scores").get<std::vector<double>>();
        plan.method = j.at("method").get<std::string>();
        plan.config_digest = j.value("config_digest", "");
        for (int b : plan.bits) {
            if (b != 2 && b != 4) fail(ErrorKind::validation, std::string(kModule), "plan bit widths must be 2 or 4");
        }
        return plan;
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::validation, std::string(kModule), std::string("malformed plan JSON: ") + e.what());
    }
}

}  // namespace nsds
