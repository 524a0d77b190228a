#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

#include "pathloss/errors.hpp"

namespace pathloss::geo {

struct Vec2 {
    double x = 0.0;
    double y = 0.0;
};

/// Local planar georeference in meters (x east, y north).
/// origin is the outer corner of pixel (col 0, row 0); pixel centers sit at
/// origin + (index + 0.5) * pixel_size on each axis, with row index
/// increasing northward.
struct GeoRef {
    double origin_x = 0.0;
    double origin_y = 0.0;
    double pixel_size = 1.0; // meters per pixel, > 0
    int width = 0;           // pixels
    int height = 0;

    double min_x() const { return origin_x; }
    double min_y() const { return origin_y; }
    double max_x() const { return origin_x + pixel_size * width; }
    double max_y() const { return origin_y + pixel_size * height; }

    bool contains(double x, double y) const {
        return x >= min_x() && x <= max_x() && y >= min_y() && y <= max_y();
    }

    Vec2 pixel_to_world(int col, int row) const {
        return {origin_x + (col + 0.5) * pixel_size,
                origin_y + (row + 0.5) * pixel_size};
    }

    /// Pixel whose cell contains (x, y); callers must bounds-check first.
    std::pair<int, int> world_to_pixel(double x, double y) const {
        int col = static_cast<int>(std::floor((x - origin_x) / pixel_size));
        int row = static_cast<int>(std::floor((y - origin_y) / pixel_size));
        if (col == width) col = width - 1;   // right/top edge belongs to the
        if (row == height) row = height - 1; // last cell
        return {col, row};
    }

    void validate() const;
};

/// Row-major float raster: data[(row * width + col) * channels + ch].
struct RasterGrid {
    GeoRef georef;
    int channels = 1;
    std::vector<float> data;

    static RasterGrid make(const GeoRef& g, int channels, float fill = 0.0f);

    float& at(int row, int col, int ch) {
        return data[(static_cast<size_t>(row) * georef.width + col) * channels + ch];
    }
    float at(int row, int col, int ch) const {
        return data[(static_cast<size_t>(row) * georef.width + col) * channels + ch];
    }

    size_t expected_size() const {
        return static_cast<size_t>(georef.width) * georef.height * channels;
    }

    void validate() const; // sizes consistent, all values finite
};

/// Bilinear interpolation of the four surrounding pixel centers; exact at
/// centers, edge-clamped within the half-pixel border of the extent.
/// Throws OutOfBounds outside the extent, BadChannel for a bad channel.
double sample_bilinear(const RasterGrid& grid, double x, double y, int channel);

/// Same interpolation but the query point is clamped into the extent first;
/// never throws for position.
double sample_bilinear_clamped(const RasterGrid& grid, double x, double y, int channel);

/// Satellite (3 channels, fine) + elevation (1 channel, coarser) over the
/// same world rectangle. satellite_fill holds per-channel means of the
/// satellite raster, used when reads fall outside its coverage.
struct Scene {
    RasterGrid satellite;
    RasterGrid elevation;
    std::array<float, 3> satellite_fill{0.0f, 0.0f, 0.0f};
};

/// Validates channel counts and that both extents cover the same rectangle
/// within one coarse pixel, and computes the satellite fill means.
Scene make_scene(RasterGrid satellite, RasterGrid elevation);

/// size_px x size_px patch, 4 channels (satellite RGB + elevation), centered
/// at (cx, cy) at out_pixel_size m/px. Satellite reads outside the scene use
/// satellite_fill; elevation reads are edge-clamped.
RasterGrid extract_patch(const Scene& scene, double cx, double cy,
                         int size_px, double out_pixel_size);

/// .plrg raster file: magic "PLRG", u16 version=1, u32 width, u32 height,
/// u16 channels, f64 origin_x, f64 origin_y, f64 pixel_size, then row-major
/// f32 payload; every field little-endian. Round trips are bit-exact.
void write_raster(const RasterGrid& grid, const std::filesystem::path& path);
RasterGrid read_raster(const std::filesystem::path& path);

} // namespace pathloss::geo
