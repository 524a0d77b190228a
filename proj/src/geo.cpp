#include "pathloss/geo.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>

namespace pathloss::geo {

namespace {

constexpr char kMagic[4] = {'P', 'L', 'R', 'G'};
constexpr uint16_t kVersion = 1;

void put_u16(std::string& out, uint16_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
}

void put_u32(std::string& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& out, double v) { put_u64(out, std::bit_cast<uint64_t>(v)); }

class Reader {
public:
    Reader(const unsigned char* p, size_t n) : p_(p), n_(n) {}

    void take(void* dst, size_t count) {
        if (pos_ + count > n_) throw TruncatedFile("raster file ends early");
        std::memcpy(dst, p_ + pos_, count);
        pos_ += count;
    }
    uint16_t u16() {
        unsigned char b[2];
        take(b, 2);
        return static_cast<uint16_t>(b[0] | (b[1] << 8));
    }
    uint32_t u32() {
        unsigned char b[4];
        take(b, 4);
        return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
               (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
    }
    uint64_t u64() {
        uint64_t v = 0;
        unsigned char b[8];
        take(b, 8);
        for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
        return v;
    }
    double f64() { return std::bit_cast<double>(u64()); }
    float f32() { return std::bit_cast<float>(u32()); }
    size_t remaining() const { return n_ - pos_; }

private:
    const unsigned char* p_;
    size_t n_;
    size_t pos_ = 0;
};

} // namespace

void GeoRef::validate() const {
    if (pixel_size <= 0.0) throw BadConfig("pixel_size must be > 0");
    if (width < 1 || height < 1) throw BadConfig("raster dimensions must be >= 1");
}

RasterGrid RasterGrid::make(const GeoRef& g, int channels, float fill) {
    g.validate();
    if (channels < 1) throw BadChannel("channel count must be >= 1");
    RasterGrid r;
    r.georef = g;
    r.channels = channels;
    r.data.assign(static_cast<size_t>(g.width) * g.height * channels, fill);
    return r;
}

void RasterGrid::validate() const {
    georef.validate();
    if (channels < 1) throw BadChannel("channel count must be >= 1");
    if (data.size() != expected_size()) throw Error("raster payload size mismatch");
    for (float v : data) {
        if (!std::isfinite(v)) throw Error("raster contains non-finite values");
    }
}

namespace {

double bilinear_at(const RasterGrid& grid, double x, double y, int channel) {
    const GeoRef& g = grid.georef;
    // pixel-center coordinates, edge-clamped
    double u = (x - g.origin_x) / g.pixel_size - 0.5;
    double v = (y - g.origin_y) / g.pixel_size - 0.5;
    u = std::clamp(u, 0.0, static_cast<double>(g.width - 1));
    v = std::clamp(v, 0.0, static_cast<double>(g.height - 1));
    int c0 = std::min(static_cast<int>(u), g.width > 1 ? g.width - 2 : 0);
    int r0 = std::min(static_cast<int>(v), g.height > 1 ? g.height - 2 : 0);
    double fu = u - c0;
    double fv = v - r0;
    int c1 = std::min(c0 + 1, g.width - 1);
    int r1 = std::min(r0 + 1, g.height - 1);
    double v00 = grid.at(r0, c0, channel);
    double v01 = grid.at(r0, c1, channel);
    double v10 = grid.at(r1, c0, channel);
    double v11 = grid.at(r1, c1, channel);
    return (1.0 - fv) * ((1.0 - fu) * v00 + fu * v01) +
           fv * ((1.0 - fu) * v10 + fu * v11);
}

} // namespace

double sample_bilinear(const RasterGrid& grid, double x, double y, int channel) {
    if (channel < 0 || channel >= grid.channels)
        throw BadChannel("channel " + std::to_string(channel) + " out of range");
    if (!grid.georef.contains(x, y))
        throw OutOfBounds("sample point outside raster extent");
    return bilinear_at(grid, x, y, channel);
}

double sample_bilinear_clamped(const RasterGrid& grid, double x, double y, int channel) {
    if (channel < 0 || channel >= grid.channels)
        throw BadChannel("channel " + std::to_string(channel) + " out of range");
    const GeoRef& g = grid.georef;
    x = std::clamp(x, g.min_x(), g.max_x());
    y = std::clamp(y, g.min_y(), g.max_y());
    return bilinear_at(grid, x, y, channel);
}

Scene make_scene(RasterGrid satellite, RasterGrid elevation) {
    satellite.validate();
    elevation.validate();
    if (satellite.channels != 3) throw BadChannel("satellite raster must have 3 channels");
    if (elevation.channels != 1) throw BadChannel("elevation raster must have 1 channel");
    const double tol = elevation.georef.pixel_size; // one coarse pixel
    if (std::abs(satellite.georef.min_x() - elevation.georef.min_x()) > tol ||
        std::abs(satellite.georef.min_y() - elevation.georef.min_y()) > tol ||
        std::abs(satellite.georef.max_x() - elevation.georef.max_x()) > tol ||
        std::abs(satellite.georef.max_y() - elevation.georef.max_y()) > tol) {
        throw BadConfig("satellite and elevation extents disagree by more than one coarse pixel");
    }

    Scene scene;
    scene.satellite = std::move(satellite);
    scene.elevation = std::move(elevation);
    const RasterGrid& sat = scene.satellite;
    size_t npx = static_cast<size_t>(sat.georef.width) * sat.georef.height;
    for (int ch = 0; ch < 3; ++ch) {
        double sum = 0.0;
        for (size_t i = 0; i < npx; ++i) sum += sat.data[i * 3 + ch];
        scene.satellite_fill[ch] = static_cast<float>(sum / static_cast<double>(npx));
    }
    return scene;
}

RasterGrid extract_patch(const Scene& scene, double cx, double cy,
                         int size_px, double out_pixel_size) {
    if (scene.satellite.data.empty() || scene.elevation.data.empty())
        throw DegenerateScene("scene has no raster content");
    if (size_px < 1) throw BadConfig("patch size must be >= 1 px");
    if (out_pixel_size <= 0.0) throw BadConfig("patch pixel size must be > 0");

    GeoRef g;
    g.pixel_size = out_pixel_size;
    g.width = size_px;
    g.height = size_px;
    g.origin_x = cx - 0.5 * size_px * out_pixel_size;
    g.origin_y = cy - 0.5 * size_px * out_pixel_size;
    RasterGrid patch = RasterGrid::make(g, 4);

    for (int row = 0; row < size_px; ++row) {
        for (int col = 0; col < size_px; ++col) {
            Vec2 w = g.pixel_to_world(col, row);
            if (scene.satellite.georef.contains(w.x, w.y)) {
                for (int ch = 0; ch < 3; ++ch)
                    patch.at(row, col, ch) =
                        static_cast<float>(bilinear_at(scene.satellite, w.x, w.y, ch));
            } else {
                for (int ch = 0; ch < 3; ++ch)
                    patch.at(row, col, ch) = scene.satellite_fill[ch];
            }
            patch.at(row, col, 3) =
                static_cast<float>(sample_bilinear_clamped(scene.elevation, w.x, w.y, 0));
        }
    }
    return patch;
}

void write_raster(const RasterGrid& grid, const std::filesystem::path& path) {
    grid.validate();
    std::string buf;
    buf.reserve(36 + grid.data.size() * 4);
    buf.append(kMagic, 4);
    put_u16(buf, kVersion);
    put_u32(buf, static_cast<uint32_t>(grid.georef.width));
    put_u32(buf, static_cast<uint32_t>(grid.georef.height));
    put_u16(buf, static_cast<uint16_t>(grid.channels));
    put_f64(buf, grid.georef.origin_x);
    put_f64(buf, grid.georef.origin_y);
    put_f64(buf, grid.georef.pixel_size);
    for (float v : grid.data) put_u32(buf, std::bit_cast<uint32_t>(v));

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open " + path.string() + " for writing");
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw Error("short write to " + path.string());
}

RasterGrid read_raster(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path.string());
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    Reader r(reinterpret_cast<const unsigned char*>(bytes.data()), bytes.size());

    char magic[4];
    r.take(magic, 4);
    if (std::memcmp(magic, kMagic, 4) != 0) throw BadMagic("not a PLRG raster file");
    uint16_t version = r.u16();
    if (version != kVersion)
        throw BadVersion("unsupported raster version " + std::to_string(version));

    RasterGrid grid;
    grid.georef.width = static_cast<int>(r.u32());
    grid.georef.height = static_cast<int>(r.u32());
    grid.channels = r.u16();
    grid.georef.origin_x = r.f64();
    grid.georef.origin_y = r.f64();
    grid.georef.pixel_size = r.f64();

    if (grid.georef.width < 1 || grid.georef.height < 1 || grid.channels < 1)
        throw Error("raster header has degenerate dimensions");
    size_t n = grid.expected_size();
    if (r.remaining() < n * 4) throw TruncatedFile("raster payload ends early");
    grid.data.resize(n);
    for (size_t i = 0; i < n; ++i) grid.data[i] = r.f32();
    grid.validate();
    return grid;
}

} // namespace pathloss::geo
