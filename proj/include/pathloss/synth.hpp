#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "pathloss/dataset.hpp"
#include "pathloss/geo.hpp"
#include "pathloss/rng.hpp"

namespace pathloss::synth {

inline constexpr double kSatPixelM = 1.0;   // satellite resolution
inline constexpr double kElevPixelM = 35.0; // elevation resolution
inline constexpr double kTxMastM = 10.0;    // transmitter mast above ground
inline constexpr double kRxHeightM = 2.5;   // receiver antenna above ground
inline constexpr double kRouteStepM = 20.0; // spacing of route samples
inline constexpr double kD0M = 1.0;         // reference distance

enum class TxPolicy { Hilltop, FixedPoint };

struct SynthConfig {
    uint64_t seed = 20240601;
    double extent_m = 3000.0;
    int n_hills = 6;
    double hill_height_min_m = 20.0;
    double hill_height_max_m = 120.0;
    double terrain_noise_m = 4.0; // smooth noise-floor amplitude; 0 = flat floor
    int landcover_classes = 4;
    int n_routes = 12;
    int samples_per_route = 250;
    TxPolicy tx_policy = TxPolicy::Hilltop;
    double tx_x = 0.0, tx_y = 0.0; // used when tx_policy == FixedPoint
    double noise_sigma_db = 3.0;
    double frequency_hz = 1.21e9;
    std::array<double, 3> route_split{0.6, 0.2, 0.2}; // train, val, test

    void validate() const; // throws BadConfig
};

struct Point3 {
    double x = 0, y = 0, alt = 0;
};

struct Hill {
    double cx = 0, cy = 0, height = 0, radius = 0;
};

struct Wave {
    double amp = 0, kx = 0, ky = 0, phase = 0;
};

/// Deterministic scene description drawn from the config seed; the rasters
/// are rendered from it, and tests can compare against it directly.
struct SceneRecipe {
    std::vector<Hill> hills;
    std::vector<Wave> terrain_waves; // smooth noise floor, zero mean
    std::vector<Wave> cover_waves;   // land-cover field, values in [-1, 1]
    double water_level = 0.0;
    double forest_level = 0.0;
};

SceneRecipe make_recipe(const SynthConfig& cfg);
double terrain_height(const SceneRecipe& recipe, double x, double y);

/// Land-cover classes. PLE table spans free-space-like water up to dense
/// built-up terrain.
enum LandCover : int { Water = 0, Field = 1, Forest = 2, BuiltUp = 3 };
int landcover_class(const SceneRecipe& recipe, const SynthConfig& cfg, double x, double y);
double landcover_ple(int cls);
std::array<float, 3> landcover_base_rgb(int cls);
/// Nearest-palette classification of a rendered satellite color.
int classify_rgb(float r, float g, float b);

geo::Scene generate_scene(const SynthConfig& cfg);

/// Single knife-edge excess loss from the Fresnel parameter nu:
/// 0 dB for nu < -0.78, else 6.9 + 20*log10(sqrt((nu-0.1)^2+1) + nu - 0.1).
double knife_edge_loss_db(double nu);

struct PathAnalysis {
    double d3d = 0;
    double n_env = 0;          // distance-weighted land-cover PLE
    double max_nu = 0;         // worst Fresnel parameter along the profile
    double diffraction_db = 0; // knife-edge loss at max_nu
    int dominant_class = 0;    // most-weighted land-cover class
};

/// Profile scan between tx and rx: land-cover PLE average plus the single
/// strongest knife-edge obstruction. Step = max(elevation pixel, d3d/512).
PathAnalysis analyze_path(const geo::Scene& scene, const Point3& tx,
                          const Point3& rx, double frequency_hz);

/// FSPL(f, d0) + 10*n_env*log10(d3d/d0) + knife-edge + shadowing drawn from
/// rng. Deterministic given the rng state; sigma = 0 removes the shadowing.
double oracle_path_loss(const geo::Scene& scene, const Point3& tx, const Point3& rx,
                        double frequency_hz, double noise_sigma_db, Pcg32& rng);

/// Largest-remainder apportionment of n_routes over the split fractions.
std::array<int, 3> split_route_counts(int n_routes, const std::array<double, 3>& fractions);

/// Transmitter position for the config (hilltop = highest elevation pixel).
Point3 choose_tx(const SynthConfig& cfg, const geo::Scene& scene);

/// Random smooth routes, one split per route, oracle-labeled samples.
std::vector<LinkSample> generate_dataset(const SynthConfig& cfg, const geo::Scene& scene);

} // namespace pathloss::synth
