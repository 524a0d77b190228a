#pragma once

#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "pathloss/errors.hpp"

namespace pathloss {

enum class Split { Train, Val, Test };

std::string split_name(Split s);
Split split_from_name(const std::string& name);

/// One Tx-Rx measurement record.
struct LinkSample {
    int route_id = 0;
    Split split = Split::Train;
    double tx_x = 0, tx_y = 0, tx_alt = 0;
    double rx_x = 0, rx_y = 0, rx_alt = 0;
    double frequency_hz = 0;
    double d3d_m = 0;
    double path_loss_db = 0;

    double d2d() const {
        return std::hypot(rx_x - tx_x, rx_y - tx_y);
    }
    double distance_3d() const {
        double dz = rx_alt - tx_alt;
        return std::sqrt((rx_x - tx_x) * (rx_x - tx_x) +
                         (rx_y - tx_y) * (rx_y - tx_y) + dz * dz);
    }
};

/// Delimited table, one row per sample, header:
/// route_id,split,tx_x,tx_y,tx_alt,rx_x,rx_y,rx_alt,freq_hz,d3d_m,pl_db
void write_dataset_csv(const std::filesystem::path& path,
                       const std::vector<LinkSample>& samples);

/// Validates on load: d3d consistent with positions (1e-6 m), finite path
/// loss, and d3d >= d0 (samples below the reference distance are rejected,
/// not clamped).
std::vector<LinkSample> read_dataset_csv(const std::filesystem::path& path,
                                         double d0_m = 1.0);

std::vector<LinkSample> filter_split(const std::vector<LinkSample>& samples, Split split);

} // namespace pathloss
