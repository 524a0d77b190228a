#pragma once

#include <filesystem>
#include <vector>

#include "pathloss/ci.hpp"
#include "pathloss/train.hpp"

namespace pathloss::plot {

/// One figure per route: measured path loss, the global CI trend and the
/// model prediction against chainage, with a second panel tracing the
/// predicted path loss exponent. Throws EmptyTable for an empty series.
void write_route_svg(const std::filesystem::path& path,
                     const std::vector<train::PredictRow>& rows,
                     const ci::CiModel& ci_model);

/// Splits a prediction table into per-route series (dataset order kept).
std::vector<std::vector<train::PredictRow>> split_routes(
    const std::vector<train::PredictRow>& rows);

} // namespace pathloss::plot
