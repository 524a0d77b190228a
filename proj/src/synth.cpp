#include "pathloss/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "pathloss/ci.hpp"

namespace pathloss::synth {

namespace {

constexpr double kPi = 3.14159265358979323846;

// rng streams; keeps terrain, cover, routes and shadowing decoupled
enum Stream : uint64_t { kTerrain = 1, kCover = 2, kRoutes = 3, kShadow = 4 };

uint64_t splitmix64(uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

// stateless per-pixel jitter so rendering order never matters
double pixel_jitter(uint64_t seed, int col, int row, int ch) {
    uint64_t h = splitmix64(seed ^ (static_cast<uint64_t>(col) * 0x9E3779B97F4A7C15ULL)
                                 ^ (static_cast<uint64_t>(row) * 0xC2B2AE3D27D4EB4FULL)
                                 ^ (static_cast<uint64_t>(ch) * 0x165667B19E3779F9ULL));
    return (static_cast<double>(h >> 11) * 0x1.0p-53 - 0.5) * 2.0; // [-1, 1)
}

const std::array<std::array<float, 3>, 4> kPalette = {{
    {40.0f, 70.0f, 160.0f},   // water
    {150.0f, 180.0f, 90.0f},  // field
    {25.0f, 80.0f, 35.0f},    // forest
    {160.0f, 155.0f, 150.0f}, // built-up
}};

const std::array<double, 4> kClassPle = {2.0, 2.6, 3.4, 3.9};

double wave_sum(const std::vector<Wave>& waves, double x, double y) {
    double v = 0.0;
    for (const Wave& w : waves) v += w.amp * std::sin(w.kx * x + w.ky * y + w.phase);
    return v;
}

} // namespace

void SynthConfig::validate() const {
    if (extent_m <= 0.0) throw BadConfig("extent_m must be > 0");
    if (extent_m < 20.0 * kElevPixelM)
        throw BadConfig("extent_m too small for the elevation resolution");
    if (n_hills < 0) throw BadConfig("n_hills must be >= 0");
    if (hill_height_min_m < 0.0 || hill_height_max_m < hill_height_min_m)
        throw BadConfig("invalid hill height range");
    if (terrain_noise_m < 0.0) throw BadConfig("terrain_noise_m must be >= 0");
    if (landcover_classes < 1 || landcover_classes > 4)
        throw BadConfig("landcover_classes must be in [1, 4]");
    if (n_routes < 1) throw BadConfig("n_routes must be >= 1");
    if (samples_per_route < 1) throw BadConfig("samples_per_route must be >= 1");
    if (noise_sigma_db < 0.0) throw BadConfig("noise_sigma_db must be >= 0");
    if (frequency_hz <= 0.0) throw BadConfig("frequency_hz must be > 0");
    double sum = route_split[0] + route_split[1] + route_split[2];
    if (std::abs(sum - 1.0) > 1e-9) throw BadConfig("route_split fractions must sum to 1");
    for (double f : route_split)
        if (f < 0.0) throw BadConfig("route_split fractions must be >= 0");
    if (tx_policy == TxPolicy::FixedPoint &&
        (tx_x < 0.0 || tx_x > extent_m || tx_y < 0.0 || tx_y > extent_m))
        throw BadConfig("fixed tx position outside the scene extent");
}

SceneRecipe make_recipe(const SynthConfig& cfg) {
    cfg.validate();
    SceneRecipe recipe;
    Pcg32 rng(cfg.seed, kTerrain);

    // smooth noise floor: a handful of long sinusoids, amplitudes summing to
    // terrain_noise_m
    const std::array<double, 4> amp_share = {0.5, 0.25, 0.15, 0.1};
    for (double share : amp_share) {
        Wave w;
        double wavelength = rng.uniform(cfg.extent_m / 8.0, cfg.extent_m / 2.5);
        double theta = rng.uniform(0.0, 2.0 * kPi);
        w.amp = cfg.terrain_noise_m * share;
        w.kx = 2.0 * kPi / wavelength * std::cos(theta);
        w.ky = 2.0 * kPi / wavelength * std::sin(theta);
        w.phase = rng.uniform(0.0, 2.0 * kPi);
        recipe.terrain_waves.push_back(w);
    }

    double margin = 0.1 * cfg.extent_m;
    for (int i = 0; i < cfg.n_hills; ++i) {
        Hill h;
        h.cx = rng.uniform(margin, cfg.extent_m - margin);
        h.cy = rng.uniform(margin, cfg.extent_m - margin);
        h.height = rng.uniform(cfg.hill_height_min_m, cfg.hill_height_max_m);
        h.radius = rng.uniform(cfg.extent_m / 20.0, cfg.extent_m / 8.0);
        recipe.hills.push_back(h);
    }

    Pcg32 cover_rng(cfg.seed, kCover);
    const std::array<double, 3> cover_share = {0.55, 0.3, 0.15};
    for (double share : cover_share) {
        Wave w;
        double wavelength = cover_rng.uniform(cfg.extent_m / 10.0, cfg.extent_m / 3.0);
        double theta = cover_rng.uniform(0.0, 2.0 * kPi);
        w.amp = share;
        w.kx = 2.0 * kPi / wavelength * std::cos(theta);
        w.ky = 2.0 * kPi / wavelength * std::sin(theta);
        w.phase = cover_rng.uniform(0.0, 2.0 * kPi);
        recipe.cover_waves.push_back(w);
    }

    recipe.water_level = -0.55 * cfg.terrain_noise_m;
    recipe.forest_level = 0.5 * cfg.hill_height_max_m;
    if (cfg.n_hills == 0) recipe.forest_level = 1e30; // no hills, no summit forests
    return recipe;
}

double terrain_height(const SceneRecipe& recipe, double x, double y) {
    double h = wave_sum(recipe.terrain_waves, x, y);
    for (const Hill& hill : recipe.hills) {
        double dx = x - hill.cx, dy = y - hill.cy;
        double r2 = (dx * dx + dy * dy) / (hill.radius * hill.radius);
        h += hill.height * std::exp(-0.5 * r2);
    }
    return h;
}

int landcover_class(const SceneRecipe& recipe, const SynthConfig& cfg, double x, double y) {
    double h = terrain_height(recipe, x, y);
    int cls;
    if (cfg.terrain_noise_m > 0.0 && h < recipe.water_level) {
        cls = Water;
    } else if (h > recipe.forest_level) {
        cls = Forest;
    } else {
        double c = wave_sum(recipe.cover_waves, x, y);
        if (c < -0.25) cls = BuiltUp;
        else if (c < 0.35) cls = Field;
        else cls = Forest;
    }
    return std::min(cls, cfg.landcover_classes - 1);
}

double landcover_ple(int cls) { return kClassPle[static_cast<size_t>(cls)]; }

std::array<float, 3> landcover_base_rgb(int cls) { return kPalette[static_cast<size_t>(cls)]; }

int classify_rgb(float r, float g, float b) {
    int best = 0;
    double best_d = 1e30;
    for (int c = 0; c < 4; ++c) {
        double dr = r - kPalette[c][0];
        double dg = g - kPalette[c][1];
        double db = b - kPalette[c][2];
        double d = dr * dr + dg * dg + db * db;
        if (d < best_d) {
            best_d = d;
            best = c;
        }
    }
    return best;
}

geo::Scene generate_scene(const SynthConfig& cfg) {
    SceneRecipe recipe = make_recipe(cfg);

    geo::GeoRef eg;
    eg.pixel_size = kElevPixelM;
    eg.width = static_cast<int>(std::ceil(cfg.extent_m / kElevPixelM));
    eg.height = eg.width;
    geo::RasterGrid elevation = geo::RasterGrid::make(eg, 1);
    for (int row = 0; row < eg.height; ++row)
        for (int col = 0; col < eg.width; ++col) {
            geo::Vec2 w = eg.pixel_to_world(col, row);
            elevation.at(row, col, 0) = static_cast<float>(terrain_height(recipe, w.x, w.y));
        }

    geo::GeoRef sg;
    sg.pixel_size = kSatPixelM;
    sg.width = static_cast<int>(std::llround(cfg.extent_m / kSatPixelM));
    sg.height = sg.width;
    geo::RasterGrid satellite = geo::RasterGrid::make(sg, 3);
    for (int row = 0; row < sg.height; ++row)
        for (int col = 0; col < sg.width; ++col) {
            geo::Vec2 w = sg.pixel_to_world(col, row);
            int cls = landcover_class(recipe, cfg, w.x, w.y);
            std::array<float, 3> rgb = kPalette[static_cast<size_t>(cls)];
            for (int ch = 0; ch < 3; ++ch) {
                double jitter = 8.0 * pixel_jitter(cfg.seed, col, row, ch);
                satellite.at(row, col, ch) = static_cast<float>(rgb[ch] + jitter);
            }
        }

    return geo::make_scene(std::move(satellite), std::move(elevation));
}

double knife_edge_loss_db(double nu) {
    if (nu < -0.78) return 0.0;
    double t = nu - 0.1;
    return 6.9 + 20.0 * std::log10(std::sqrt(t * t + 1.0) + t);
}

PathAnalysis analyze_path(const geo::Scene& scene, const Point3& tx,
                          const Point3& rx, double frequency_hz) {
    if (!scene.satellite.georef.contains(tx.x, tx.y) ||
        !scene.satellite.georef.contains(rx.x, rx.y))
        throw OutOfBounds("link endpoint outside the scene");
    double dx = rx.x - tx.x, dy = rx.y - tx.y, dz = rx.alt - tx.alt;
    double d3d = std::sqrt(dx * dx + dy * dy + dz * dz);
    if (d3d < kD0M) throw DegenerateLink("tx-rx distance below reference distance");

    PathAnalysis pa;
    pa.d3d = d3d;

    double step = std::max(scene.elevation.georef.pixel_size, d3d / 512.0);
    int n_seg = std::max(2, static_cast<int>(std::ceil(d3d / step)));

    // land-cover PLE: equal-length segments, class read at segment midpoints
    std::array<double, 4> weight{0, 0, 0, 0};
    double ple_sum = 0.0;
    const geo::RasterGrid& sat = scene.satellite;
    for (int i = 0; i < n_seg; ++i) {
        double t = (i + 0.5) / n_seg;
        double px = tx.x + t * dx, py = tx.y + t * dy;
        auto [col, row] = sat.georef.world_to_pixel(px, py);
        col = std::clamp(col, 0, sat.georef.width - 1);
        row = std::clamp(row, 0, sat.georef.height - 1);
        int cls = classify_rgb(sat.at(row, col, 0), sat.at(row, col, 1), sat.at(row, col, 2));
        weight[static_cast<size_t>(cls)] += 1.0;
        ple_sum += kClassPle[static_cast<size_t>(cls)];
    }
    pa.n_env = ple_sum / n_seg;
    pa.dominant_class = static_cast<int>(
        std::max_element(weight.begin(), weight.end()) - weight.begin());

    // single strongest knife edge over interior profile points
    double lambda = ci::kSpeedOfLight / frequency_hz;
    double max_nu = -1e30;
    for (int i = 1; i < n_seg; ++i) {
        double t = static_cast<double>(i) / n_seg;
        double px = tx.x + t * dx, py = tx.y + t * dy;
        double ground = geo::sample_bilinear_clamped(scene.elevation, px, py, 0);
        double los = tx.alt + t * (rx.alt - tx.alt);
        double h = ground - los;
        double d1 = t * d3d, d2 = (1.0 - t) * d3d;
        double nu = h * std::sqrt(2.0 * (d1 + d2) / (lambda * d1 * d2));
        max_nu = std::max(max_nu, nu);
    }
    pa.max_nu = max_nu;
    pa.diffraction_db = knife_edge_loss_db(max_nu);
    return pa;
}

double oracle_path_loss(const geo::Scene& scene, const Point3& tx, const Point3& rx,
                        double frequency_hz, double noise_sigma_db, Pcg32& rng) {
    PathAnalysis pa = analyze_path(scene, tx, rx, frequency_hz);
    double shadow = rng.normal(0.0, 1.0) * noise_sigma_db;
    return ci::fspl_db(frequency_hz, kD0M) +
           10.0 * pa.n_env * std::log10(pa.d3d / kD0M) + pa.diffraction_db + shadow;
}

std::array<int, 3> split_route_counts(int n_routes, const std::array<double, 3>& fractions) {
    double sum = fractions[0] + fractions[1] + fractions[2];
    if (std::abs(sum - 1.0) > 1e-9) throw BadConfig("split fractions must sum to 1");
    std::array<int, 3> counts{};
    std::array<double, 3> remainder{};
    int assigned = 0;
    for (int i = 0; i < 3; ++i) {
        if (fractions[i] < 0.0) throw BadConfig("split fractions must be >= 0");
        double exact = fractions[i] * n_routes;
        counts[i] = static_cast<int>(std::floor(exact + 1e-12));
        remainder[i] = exact - counts[i];
        assigned += counts[i];
    }
    for (int left = n_routes - assigned; left > 0; --left) {
        int pick = 0;
        for (int i = 1; i < 3; ++i)
            if (remainder[i] > remainder[pick] + 1e-12) pick = i;
        counts[pick] += 1;
        remainder[pick] = -1.0;
    }
    return counts;
}

Point3 choose_tx(const SynthConfig& cfg, const geo::Scene& scene) {
    const geo::RasterGrid& elev = scene.elevation;
    if (cfg.tx_policy == TxPolicy::FixedPoint) {
        double ground = geo::sample_bilinear_clamped(elev, cfg.tx_x, cfg.tx_y, 0);
        return {cfg.tx_x, cfg.tx_y, ground + kTxMastM};
    }
    int best_row = 0, best_col = 0;
    float best = elev.at(0, 0, 0);
    for (int row = 0; row < elev.georef.height; ++row)
        for (int col = 0; col < elev.georef.width; ++col)
            if (elev.at(row, col, 0) > best) {
                best = elev.at(row, col, 0);
                best_row = row;
                best_col = col;
            }
    geo::Vec2 w = elev.georef.pixel_to_world(best_col, best_row);
    return {w.x, w.y, static_cast<double>(best) + kTxMastM};
}

std::vector<LinkSample> generate_dataset(const SynthConfig& cfg, const geo::Scene& scene) {
    cfg.validate();
    if (scene.satellite.data.empty()) throw DegenerateScene("empty scene");

    Point3 tx = choose_tx(cfg, scene);
    std::array<int, 3> counts = split_route_counts(cfg.n_routes, cfg.route_split);

    Pcg32 route_rng(cfg.seed, kRoutes);
    Pcg32 shadow_rng(cfg.seed, kShadow);

    const double extent = cfg.extent_m;
    const double margin = 0.05 * extent;
    const double min_tx_gap = 0.05 * extent;

    std::vector<LinkSample> samples;
    samples.reserve(static_cast<size_t>(cfg.n_routes) * cfg.samples_per_route);

    for (int r = 0; r < cfg.n_routes; ++r) {
        Split split = r < counts[0]               ? Split::Train
                      : r < counts[0] + counts[1] ? Split::Val
                                                  : Split::Test;

        // route geometry first (no shadow draws), retried as a whole if any
        // sample degenerates
        std::vector<Point3> route;
        for (int attempt = 0; attempt < 100 && route.empty(); ++attempt) {
            double sx, sy;
            do {
                sx = route_rng.uniform(margin, extent - margin);
                sy = route_rng.uniform(margin, extent - margin);
            } while (std::hypot(sx - tx.x, sy - tx.y) < min_tx_gap);
            double heading = route_rng.uniform(0.0, 2.0 * kPi);

            std::vector<Point3> pts;
            double x = sx, y = sy;
            bool ok = true;
            for (int i = 0; i < cfg.samples_per_route; ++i) {
                double ground = geo::sample_bilinear_clamped(scene.elevation, x, y, 0);
                Point3 rx{x, y, ground + kRxHeightM};
                double dxx = rx.x - tx.x, dyy = rx.y - tx.y, dzz = rx.alt - tx.alt;
                if (std::sqrt(dxx * dxx + dyy * dyy + dzz * dzz) < kD0M) {
                    ok = false;
                    break;
                }
                pts.push_back(rx);
                heading += route_rng.normal(0.0, 0.22);
                double nx = x + kRouteStepM * std::cos(heading);
                double ny = y + kRouteStepM * std::sin(heading);
                if (nx < margin || nx > extent - margin || ny < margin || ny > extent - margin) {
                    heading = std::atan2(0.5 * extent - y, 0.5 * extent - x) +
                              route_rng.normal(0.0, 0.3);
                    nx = x + kRouteStepM * std::cos(heading);
                    ny = y + kRouteStepM * std::sin(heading);
                }
                x = nx;
                y = ny;
            }
            if (ok) route = std::move(pts);
        }
        if (route.empty())
            throw BadConfig("could not place route " + std::to_string(r) +
                            "; check extent and tx placement");

        for (const Point3& rx : route) {
            LinkSample s;
            s.route_id = r;
            s.split = split;
            s.tx_x = tx.x;
            s.tx_y = tx.y;
            s.tx_alt = tx.alt;
            s.rx_x = rx.x;
            s.rx_y = rx.y;
            s.rx_alt = rx.alt;
            s.frequency_hz = cfg.frequency_hz;
            s.d3d_m = s.distance_3d();
            s.path_loss_db = oracle_path_loss(scene, tx, rx, cfg.frequency_hz,
                                              cfg.noise_sigma_db, shadow_rng);
            samples.push_back(s);
        }
    }
    return samples;
}

} // namespace pathloss::synth
