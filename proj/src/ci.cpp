#include "pathloss/ci.hpp"

#include <cmath>
#include <fstream>

#include "json.hpp"

namespace pathloss::ci {

double fspl_db(double frequency_hz, double distance_m) {
    if (frequency_hz <= 0.0) throw NonPositiveInput("frequency must be > 0");
    if (distance_m <= 0.0) throw NonPositiveInput("distance must be > 0");
    constexpr double four_pi = 4.0 * 3.14159265358979323846;
    return 20.0 * std::log10(four_pi * distance_m * frequency_hz / kSpeedOfLight);
}

double predict_db(const CiModel& model, double d3d_m) {
    if (d3d_m < model.d0_m)
        throw DistanceBelowReference("d3d below reference distance d0");
    return fspl_db(model.frequency_hz, model.d0_m) +
           10.0 * model.ple * std::log10(d3d_m / model.d0_m);
}

CiModel fit_ple(std::span<const LinkSample> samples, double frequency_hz, double d0_m) {
    if (d0_m <= 0.0) throw NonPositiveInput("d0 must be > 0");
    double fspl0 = fspl_db(frequency_hz, d0_m);
    double num = 0.0, den = 0.0;
    for (const LinkSample& s : samples) {
        if (s.d3d_m < d0_m)
            throw DistanceBelowReference("sample below reference distance d0");
        double a = 10.0 * std::log10(s.d3d_m / d0_m);
        double b = s.path_loss_db - fspl0;
        num += a * b;
        den += a * a;
    }
    if (den == 0.0)
        throw NoUsableSamples("no sample with d3d > d0; PLE is unconstrained");
    CiModel model;
    model.frequency_hz = frequency_hz;
    model.d0_m = d0_m;
    model.ple = num / den;
    return model;
}

void save_json(const CiModel& model, const std::filesystem::path& path) {
    nlohmann::json j;
    j["frequency_hz"] = model.frequency_hz;
    j["d0_m"] = model.d0_m;
    j["ple"] = model.ple;
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error("cannot open " + path.string() + " for writing");
    out << j.dump(2) << "\n";
}

CiModel load_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw BadConfig("invalid CI model JSON: " + std::string(e.what()));
    }
    CiModel model;
    model.frequency_hz = j.at("frequency_hz").get<double>();
    model.d0_m = j.at("d0_m").get<double>();
    model.ple = j.at("ple").get<double>();
    if (model.frequency_hz <= 0.0 || model.d0_m <= 0.0 || !std::isfinite(model.ple))
        throw BadConfig("CI model JSON has invalid parameter values");
    return model;
}

} // namespace pathloss::ci
