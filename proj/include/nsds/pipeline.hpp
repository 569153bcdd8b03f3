#pragma once

#include <vector>

#include "nsds/aggregation.hpp"
#include "nsds/allocation.hpp"
#include "nsds/model_io.hpp"
#include "nsds/quantizer.hpp"
#include "nsds/structural_expressiveness.hpp"

namespace nsds {

struct ScoringOptions {
    double energy = 0.9;
    double epsilon = kDefaultEpsilon;
    double budget = kDefaultBudget;
    bool wd_sublinear = false;
    // Probe width for the MSE baseline.
    int mse_bits = 2;
    std::size_t group_size = kDefaultGroupSize;
    // 0 = one worker per hardware thread. Results do not depend on it.
    std::size_t threads = 1;

    SEOptions se_options() const {
        SEOptions o;
        o.energy = energy;
        o.wd_sublinear = wd_sublinear;
        return o;
    }
};

struct NsdsResult {
    std::vector<ComponentKind> kinds;
    ScoreTable raw_nv;
    ScoreTable raw_se;
    LayerScores scores;
};

// Decompose every layer, score NV and role-aware SE per component, then
// normalize and aggregate into per-layer sensitivities.
NsdsResult score_nsds(const TensorStore& store, const ArchConfig& config, const ScoringOptions& options = {});

}  // namespace nsds
