#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "pathloss/dataset.hpp"
#include "pathloss/errors.hpp"

namespace pathloss::ci {

inline constexpr double kSpeedOfLight = 299792458.0; // m/s

/// Close-in free-space reference distance model parameters.
struct CiModel {
    double frequency_hz = 0.0;
    double d0_m = 1.0;
    double ple = 2.0;
};

/// Friis free-space path loss, 20*log10(4*pi*d*f/c), in dB.
double fspl_db(double frequency_hz, double distance_m);

/// fspl(f, d0) + 10*n*log10(d3d/d0). Throws DistanceBelowReference for
/// d3d < d0.
double predict_db(const CiModel& model, double d3d_m);

/// Closed-form least-squares PLE over the given samples:
/// n = sum(a_i*b_i)/sum(a_i^2), a_i = 10*log10(d_i/d0),
/// b_i = PL_i - fspl(f, d0). Samples at d3d == d0 contribute a_i = 0.
CiModel fit_ple(std::span<const LinkSample> samples, double frequency_hz,
                double d0_m = 1.0);

void save_json(const CiModel& model, const std::filesystem::path& path);
CiModel load_json(const std::filesystem::path& path);

} // namespace pathloss::ci
