#pragma once

#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace nsds {

inline constexpr double kDefaultBudget = 3.0;

enum class Direction { higher_is_sensitive, lower_is_sensitive };

struct BitAllocationPlan {
    double budget = kDefaultBudget;
    std::vector<int> bits;
    std::vector<double> scores;
    // Layer indices, most sensitive first.
    std::vector<std::size_t> ranking;
    std::string method = "nsds";
    std::string config_digest;

    friend bool operator==(const BitAllocationPlan&, const BitAllocationPlan&) = default;
};

// round(((budget - 2) / 2) * num_layers), ties away from zero.
std::size_t num_4bit_layers(double budget, std::size_t num_layers);

// Stable order, most sensitive first; equal scores keep the lower layer index first.
std::vector<std::size_t> rank_layers(std::span<const double> scores, Direction direction);

// The first num_4bit_layers entries of `ranking` get 4 bits, the rest 2.
BitAllocationPlan allocate_ranked(std::vector<std::size_t> ranking, std::vector<double> scores, double budget,
                                  std::string method);

BitAllocationPlan allocate(std::span<const double> scores, double budget, std::string method = "nsds",
                           Direction direction = Direction::higher_is_sensitive);

nlohmann::json to_json(const BitAllocationPlan& plan);
BitAllocationPlan plan_from_json(const nlohmann::json& j);

}  // namespace nsds
