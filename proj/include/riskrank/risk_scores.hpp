#pragma once

#include "riskrank/common.hpp"

#include <string>
#include <vector>

namespace riskrank {

/// Mislabeling risk γ for every (instance, class) pair of a scored set.
struct RiskScoreTable {
    std::vector<std::string> ids;
    std::vector<int> predicted;  ///< machine label per instance
    Matrix gamma;                ///< instances x classes, entries in [0, 1]

    std::size_t size() const { return ids.size(); }
    std::size_t num_classes() const { return gamma.cols; }
    double predicted_score(std::size_t i) const {
        return gamma(i, static_cast<std::size_t>(predicted[i]));
    }
};

}  // namespace riskrank
