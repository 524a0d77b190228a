#include "pathloss/features.hpp"

#include <cmath>
#include <fstream>
#include <limits>

#include "json.hpp"

namespace pathloss::features {

SystemFeatures build(const LinkSample& sample, const ci::CiModel& model) {
    SystemFeatures f;
    f.d3d = sample.d3d_m;
    f.fspl_d3d = ci::fspl_db(sample.frequency_hz, sample.d3d_m);
    f.rel_angle_deg = std::atan2(sample.rx_alt - sample.tx_alt, sample.d2d()) *
                      (180.0 / 3.14159265358979323846);
    f.tx_alt = sample.tx_alt;
    f.rx_alt = sample.rx_alt;
    f.ci_pred = ci::predict_db(model, sample.d3d_m);
    return f;
}

MinMaxStats compute_minmax(std::span<const LinkSample> train_samples,
                           const ci::CiModel& model) {
    if (train_samples.empty()) throw EmptySplit("no samples to compute Min-Max stats");
    MinMaxStats stats;
    stats.min.fill(std::numeric_limits<double>::infinity());
    stats.max.fill(-std::numeric_limits<double>::infinity());
    for (const LinkSample& s : train_samples) {
        std::array<double, kCount> v = build(s, model).as_array();
        for (int i = 0; i < kCount; ++i) {
            stats.min[i] = std::min(stats.min[i], v[i]);
            stats.max[i] = std::max(stats.max[i], v[i]);
        }
    }
    return stats;
}

std::array<double, kCount> normalize(const SystemFeatures& f, const MinMaxStats& stats) {
    std::array<double, kCount> v = f.as_array();
    std::array<double, kCount> out{};
    for (int i = 0; i < kCount; ++i) {
        double range = stats.max[i] - stats.min[i];
        if (range < 0.0) throw BadStats("min-max stats with max < min");
        out[i] = range > 0.0 ? (v[i] - stats.min[i]) / range : 0.0;
    }
    return out;
}

void save_minmax_json(const MinMaxStats& stats, const std::filesystem::path& path) {
    nlohmann::json j;
    j["schema_version"] = 1;
    j["min"] = stats.min;
    j["max"] = stats.max;
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error("cannot open " + path.string() + " for writing");
    out << j.dump(2) << "\n";
}

MinMaxStats load_minmax_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw BadStats("invalid min-max JSON: " + std::string(e.what()));
    }
    auto mins = j.at("min").get<std::vector<double>>();
    auto maxs = j.at("max").get<std::vector<double>>();
    if (mins.size() != kCount || maxs.size() != kCount)
        throw BadStats("min-max JSON must have exactly 6 entries per bound");
    MinMaxStats stats;
    for (int i = 0; i < kCount; ++i) {
        stats.min[i] = mins[i];
        stats.max[i] = maxs[i];
        if (stats.max[i] < stats.min[i]) throw BadStats("min-max stats with max < min");
    }
    return stats;
}

} // namespace pathloss::features
