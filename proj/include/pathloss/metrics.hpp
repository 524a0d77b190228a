#pragma once

#include <span>

#include "pathloss/errors.hpp"

namespace pathloss::train {

struct MetricReport {
    double rmse_db = 0;
    double mape_pct = 0;
    double pcc = 0;
};

/// rmse = sqrt(mean((p - y)^2)); mape = 100 * mean(|p - y| / |y|);
/// pcc = Pearson correlation. Throws ZeroTarget if any y = 0 and
/// ConstantSeries when either series has zero variance.
MetricReport compute_metrics(std::span<const double> pred, std::span<const double> target);

} // namespace pathloss::train
