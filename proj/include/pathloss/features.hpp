#pragma once

#include <array>
#include <filesystem>
#include <span>

#include "pathloss/ci.hpp"
#include "pathloss/dataset.hpp"

namespace pathloss::features {

inline constexpr int kCount = 6;

/// The six system parameters: link geometry plus the empirical prior.
struct SystemFeatures {
    double d3d = 0;           // meters
    double fspl_d3d = 0;      // dB at the full link distance
    double rel_angle_deg = 0; // vertical Tx->Rx elevation angle
    double tx_alt = 0;        // meters
    double rx_alt = 0;        // meters
    double ci_pred = 0;       // dB, globally fitted CI prediction

    std::array<double, kCount> as_array() const {
        return {d3d, fspl_d3d, rel_angle_deg, tx_alt, rx_alt, ci_pred};
    }
};

SystemFeatures build(const LinkSample& sample, const ci::CiModel& model);

/// Per-feature range from the training split.
struct MinMaxStats {
    std::array<double, kCount> min{};
    std::array<double, kCount> max{};
};

MinMaxStats compute_minmax(std::span<const LinkSample> train_samples,
                           const ci::CiModel& model);

/// (x - min) / (max - min); degenerate features map to 0; held-out values may
/// leave [0, 1] (no clipping).
std::array<double, kCount> normalize(const SystemFeatures& f, const MinMaxStats& stats);

void save_minmax_json(const MinMaxStats& stats, const std::filesystem::path& path);
MinMaxStats load_minmax_json(const std::filesystem::path& path);

} // namespace pathloss::features
