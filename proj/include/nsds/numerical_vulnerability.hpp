#pragma once

#include <map>
#include <span>

#include "nsds/decomposition.hpp"
#include "nsds/matrix.hpp"

namespace nsds {

using ComponentScores = std::map<ComponentKind, double>;

// Population excess kurtosis E[(w-mu)^4] / E[(w-mu)^2]^2 - 3, computed in two
// passes. A constant vector returns 0.
double excess_kurtosis(std::span<const double> w);

// Excess kurtosis of the row-major flattening.
double nv_component(const Matrix& component);

// QK and OV entries are means over heads.
ComponentScores nv_layer(const LayerComponents& lc);

}  // namespace nsds
