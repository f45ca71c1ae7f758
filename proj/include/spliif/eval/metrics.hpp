#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>

#include "spliif/error.hpp"

namespace spliif {

namespace detail {

inline void require_pairs(const char* what, std::span<const double> pred, std::span<const double> truth) {
    if (pred.size() != truth.size()) {
        throw ContractError(std::string(what) + ": " + std::to_string(pred.size()) + " predictions vs " +
                            std::to_string(truth.size()) + " truths");
    }
    if (pred.empty()) throw ContractError(std::string(what) + ": empty input");
}

} // namespace detail

/// Root mean square error, in the units of the inputs.
inline double rmse(std::span<const double> pred, std::span<const double> truth) {
    detail::require_pairs("rmse", pred, truth);
    double s = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) s += (pred[i] - truth[i]) * (pred[i] - truth[i]);
    return std::sqrt(s / static_cast<double>(pred.size()));
}

inline double mean_abs_error(std::span<const double> pred, std::span<const double> truth) {
    detail::require_pairs("mean_abs_error", pred, truth);
    double s = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) s += std::abs(pred[i] - truth[i]);
    return s / static_cast<double>(pred.size());
}

/// Smallest absolute difference between two bearings, in [0, 180].
inline double angular_error(double a_deg, double b_deg) {
    const double d = std::fmod(std::abs(a_deg - b_deg), 360.0);
    return std::min(d, 360.0 - d);
}

/// Sufficient statistics of an error sample; merging is a plain sum.
struct ErrorStats {
    double sum_sq = 0.0;
    double sum_abs = 0.0;
    std::size_t count = 0;

    void add(double err) {
        sum_sq += err * err;
        sum_abs += std::abs(err);
        ++count;
    }

    void merge(const ErrorStats& o) {
        sum_sq += o.sum_sq;
        sum_abs += o.sum_abs;
        count += o.count;
    }

    double rmse() const { return count ? std::sqrt(sum_sq / static_cast<double>(count)) : 0.0; }
    double mae() const { return count ? sum_abs / static_cast<double>(count) : 0.0; }
};

/// 100 * (baseline - model) / baseline; undefined when the baseline is perfect.
inline bool improvement_pct(double rmse_model, double rmse_baseline, double& out) {
    if (!(rmse_baseline > 0.0)) return false;
    out = 100.0 * (rmse_baseline - rmse_model) / rmse_baseline;
    return true;
}

} // namespace spliif
