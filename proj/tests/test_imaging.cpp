#include "doctest.h"

#include "pathloss/imaging.hpp"
#include "pathloss/rng.hpp"
#include "pathloss/synth.hpp"

#include <cmath>
#include <filesystem>

using namespace pathloss;
using namespace pathloss::imaging;

namespace {

geo::Scene test_scene() {
    synth::SynthConfig cfg;
    cfg.seed = 101;
    cfg.extent_m = 900.0;
    cfg.n_hills = 2;
    cfg.hill_height_min_m = 15.0;
    cfg.hill_height_max_m = 60.0;
    cfg.n_routes = 1;
    cfg.samples_per_route = 1;
    return synth::generate_scene(cfg);
}

LinkSample link(double tx_x, double tx_y, double tx_alt,
                double rx_x, double rx_y, double rx_alt) {
    LinkSample s;
    s.tx_x = tx_x;
    s.tx_y = tx_y;
    s.tx_alt = tx_alt;
    s.rx_x = rx_x;
    s.rx_y = rx_y;
    s.rx_alt = rx_alt;
    s.frequency_hz = 1.21e9;
    s.d3d_m = s.distance_3d();
    return s;
}

LinkSample random_link(Pcg32& rng, const geo::Scene& scene, double min_d = 30.0,
                       double max_d = 700.0) {
    const auto& g = scene.satellite.georef;
    while (true) {
        double tx_x = rng.uniform(g.min_x() + 20.0, g.max_x() - 20.0);
        double tx_y = rng.uniform(g.min_y() + 20.0, g.max_y() - 20.0);
        double theta = rng.uniform(0.0, 6.283185307179586);
        double d = rng.uniform(min_d, max_d);
        double rx_x = tx_x + d * std::cos(theta);
        double rx_y = tx_y + d * std::sin(theta);
        if (!g.contains(rx_x, rx_y)) continue;
        double tx_alt = geo::sample_bilinear_clamped(scene.elevation, tx_x, tx_y, 0) + 10.0;
        double rx_alt = geo::sample_bilinear_clamped(scene.elevation, rx_x, rx_y, 0) + 2.5;
        return link(tx_x, tx_y, tx_alt, rx_x, rx_y, rx_alt);
    }
}

} // namespace

TEST_CASE("resize terminal anchors and separation") {
    geo::Scene scene = test_scene();
    Pcg32 rng(31, 0);
    double expected_sep = 0.6 * 255.0 * std::sqrt(2.0);
    for (int i = 0; i < 25; ++i) {
        LinkSample s = random_link(rng, scene);
        EnvImage img = make_resize(scene, s);
        CHECK(img.height == 256);
        CHECK(img.width == 256);
        CHECK(img.channels == 4);
        double sep = std::hypot(img.rx_col - img.tx_col, img.rx_row - img.tx_row);
        CHECK(std::abs(sep - expected_sep) <= 0.5);
        CHECK(std::abs(img.tx_col - 51.0) <= 1.0);
        CHECK(std::abs(img.tx_row - 204.0) <= 1.0);
        CHECK(std::abs(img.rx_col - 204.0) <= 1.0);
        CHECK(std::abs(img.rx_row - 51.0) <= 1.0);
        // anchors inside the image
        CHECK(img.tx_col >= 0.0);
        CHECK(img.tx_col <= 255.0);
        CHECK(img.rx_row >= 0.0);
        CHECK(img.rx_row <= 255.0);
    }
}

TEST_CASE("resize scale is one when d3d matches the diagonal separation") {
    geo::Scene scene = test_scene();
    double d = 0.6 * 255.0 * std::sqrt(2.0);
    LinkSample s = link(200.0, 200.0, 30.0, 200.0 + d, 200.0, 30.0);
    EnvImage img = make_resize(scene, s);
    CHECK(img.scale_m_per_px == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("resize maps the tx anchor back to the tx ground position") {
    // black scene with a bright satellite square centered on the transmitter
    geo::GeoRef sg{0.0, 0.0, 1.0, 600, 600};
    geo::RasterGrid sat = geo::RasterGrid::make(sg, 3, 0.0f);
    double tx_x = 211.0, tx_y = 306.0;
    auto [tc, tr] = sg.world_to_pixel(tx_x, tx_y);
    for (int dr = -2; dr <= 2; ++dr)
        for (int dc = -2; dc <= 2; ++dc)
            for (int ch = 0; ch < 3; ++ch) sat.at(tr + dr, tc + dc, ch) = 200.0f;
    geo::GeoRef eg{0.0, 0.0, 35.0, 18, 18};
    geo::Scene scene = geo::make_scene(std::move(sat), geo::RasterGrid::make(eg, 1, 5.0f));

    Pcg32 rng(8, 0);
    for (int i = 0; i < 10; ++i) {
        double theta = rng.uniform(0.0, 6.283185307179586);
        double d = rng.uniform(60.0, 250.0);
        double rx_x = tx_x + d * std::cos(theta);
        double rx_y = tx_y + d * std::sin(theta);
        if (rx_x < 10 || rx_x > 590 || rx_y < 10 || rx_y > 590) continue;
        LinkSample s = link(tx_x, tx_y, 20.0, rx_x, rx_y, 8.0);
        EnvImage img = make_resize(scene, s);
        int col = static_cast<int>(std::lround(img.tx_col));
        int row = static_cast<int>(std::lround(img.tx_row));
        CHECK(img.at(0, row, col) > 100.0f);
    }
}

TEST_CASE("fullsize dimensions") {
    geo::Scene scene = test_scene();
    LinkSample s = link(100.0, 450.0, 30.0, 600.0, 450.0, 30.0); // d3d = 500
    EnvImage img = make_fullsize(scene, s);
    CHECK(img.height == 160);
    CHECK(img.width == 660);
    CHECK(std::abs(img.tx_col - 80.0) <= 1.0);
    CHECK(std::abs(img.tx_row - 80.0) <= 1.0);
    CHECK(std::abs(img.rx_col - (660.0 - 80.0)) <= 1.0);

    LinkSample tiny = link(100.0, 450.0, 30.0, 101.0, 450.0, 30.0); // d3d = 1
    EnvImage minimal = make_fullsize(scene, tiny);
    CHECK(minimal.width == 161);
    CHECK(minimal.height == 160);
}

TEST_CASE("fullsize width is monotone in distance") {
    geo::Scene scene = test_scene();
    int prev = 0;
    for (double d = 5.0; d < 800.0; d += 13.7) {
        LinkSample s = link(50.0, 450.0, 25.0, 50.0 + d, 450.0, 25.0);
        EnvImage img = make_fullsize(scene, s);
        CHECK(img.width >= prev);
        prev = img.width;
    }
}

TEST_CASE("stacksize equals two channel-stacked patches") {
    geo::Scene scene = test_scene();
    Pcg32 rng(17, 0);
    LinkSample s = random_link(rng, scene);
    EnvImage img = make_stacksize(scene, s);
    CHECK(img.channels == 8);
    CHECK(img.height == 256);
    CHECK(img.width == 256);

    geo::RasterGrid tx_patch = geo::extract_patch(scene, s.tx_x, s.tx_y, 256, 1.0);
    geo::RasterGrid rx_patch = geo::extract_patch(scene, s.rx_x, s.rx_y, 256, 1.0);
    for (int row = 0; row < 256; row += 7)
        for (int col = 0; col < 256; col += 7)
            for (int ch = 0; ch < 4; ++ch) {
                CHECK(img.at(ch, row, col) == tx_patch.at(255 - row, col, ch));
                CHECK(img.at(4 + ch, row, col) == rx_patch.at(255 - row, col, ch));
            }
}

TEST_CASE("stacksize with coincident terminals duplicates the patch") {
    geo::Scene scene = test_scene();
    LinkSample s = link(300.0, 300.0, 25.0, 300.0, 300.0, 10.0);
    s.d3d_m = s.distance_3d();
    EnvImage img = make_stacksize(scene, s);
    for (int row = 0; row < 256; row += 5)
        for (int col = 0; col < 256; col += 5)
            for (int ch = 0; ch < 4; ++ch)
                CHECK(img.at(ch, row, col) == img.at(4 + ch, row, col));
}

TEST_CASE("stacksize channel 3 holds the elevation at the tx") {
    geo::Scene scene = test_scene();
    Pcg32 rng(23, 0);
    for (int i = 0; i < 5; ++i) {
        LinkSample s = random_link(rng, scene);
        EnvImage img = make_stacksize(scene, s);
        double elev = geo::sample_bilinear_clamped(scene.elevation, s.tx_x, s.tx_y, 0);
        // patch center pixel sits half a pixel off the exact center point
        double center = 0.5 * (img.at(3, 127, 127) + img.at(3, 128, 128));
        CHECK(center == doctest::Approx(elev).epsilon(0.02));
    }
}

TEST_CASE("stacksize on a constant scene is constant") {
    geo::GeoRef sg{0.0, 0.0, 1.0, 300, 300};
    geo::RasterGrid sat = geo::RasterGrid::make(sg, 3, 9.0f);
    geo::GeoRef eg{0.0, 0.0, 35.0, 9, 9};
    geo::Scene scene = geo::make_scene(std::move(sat), geo::RasterGrid::make(eg, 1, 4.0f));
    LinkSample s = link(150.0, 150.0, 12.0, 160.0, 150.0, 12.0);
    EnvImage img = make_stacksize(scene, s);
    for (int ch = 0; ch < 8; ++ch) {
        float expected = (ch % 4 == 3) ? 4.0f : 9.0f;
        for (int row = 0; row < 256; row += 11)
            for (int col = 0; col < 256; col += 11)
                CHECK(img.at(ch, row, col) == doctest::Approx(expected));
    }
}

TEST_CASE("format dimension invariants over random links") {
    geo::Scene scene = test_scene();
    Pcg32 rng(41, 0);
    for (int i = 0; i < 30; ++i) {
        LinkSample s = random_link(rng, scene);
        EnvImage rz = make_image(scene, s, ImageFormat::Resize);
        CHECK(rz.height == 256);
        CHECK(rz.width == 256);
        CHECK(rz.channels == 4);
        EnvImage st = make_image(scene, s, ImageFormat::Stacksize);
        CHECK(st.height == 256);
        CHECK(st.channels == 8);
        EnvImage fz = make_image(scene, s, ImageFormat::Fullsize);
        CHECK(fz.height == 160);
        CHECK(fz.width == static_cast<int>(std::llround(s.d3d_m)) + 160);
        CHECK(fz.tx_col >= 0.0);
        CHECK(fz.rx_col <= fz.width - 1.0);
    }
}

TEST_CASE("degenerate links are rejected") {
    geo::Scene scene = test_scene();
    LinkSample s = link(300.0, 300.0, 25.0, 300.0, 300.0, 25.0); // d3d = 0
    CHECK_THROWS_AS(make_resize(scene, s), DegenerateLink);
    CHECK_THROWS_AS(make_fullsize(scene, s), DegenerateLink);
}

TEST_CASE("standardize identity and constant channels") {
    geo::Scene scene = test_scene();
    LinkSample s = link(200.0, 200.0, 25.0, 400.0, 260.0, 12.0);
    EnvImage img = make_resize(scene, s, 32);

    ChannelStats identity{{0.0, 0.0, 0.0, 0.0}, {1.0, 1.0, 1.0, 1.0}};
    EnvImage same = standardize(img, identity);
    CHECK(same.data == img.data);

    // a constant channel equal to its mean becomes all zeros
    EnvImage flat = img;
    size_t plane = static_cast<size_t>(flat.height) * flat.width;
    for (size_t i = 0; i < plane; ++i) flat.data[i] = 42.0f;
    ChannelStats stats{{42.0, 0.0, 0.0, 0.0}, {0.0, 1.0, 1.0, 1.0}};
    EnvImage out = standardize(flat, stats);
    for (size_t i = 0; i < plane; ++i) CHECK(out.data[i] == 0.0f);

    ChannelStats wrong{{0.0}, {1.0}};
    CHECK_THROWS_AS(standardize(img, wrong), BadStats);
}

TEST_CASE("standardized training images have zero mean and unit variance") {
    geo::Scene scene = test_scene();
    Pcg32 rng(55, 0);
    std::vector<EnvImage> images;
    StatsAccumulator acc;
    for (int i = 0; i < 12; ++i) {
        images.push_back(make_resize(scene, random_link(rng, scene), 48));
        acc.add(images.back());
    }
    ChannelStats stats = acc.finalize();

    StatsAccumulator check;
    for (const EnvImage& img : images) check.add(standardize(img, stats));
    ChannelStats after = check.finalize();
    for (int ch = 0; ch < 4; ++ch) {
        CHECK(std::abs(after.mean[ch]) <= 1e-3);
        CHECK(std::abs(after.stddev[ch] - 1.0) <= 1e-2);
    }
}

TEST_CASE("stats JSON round trip") {
    ChannelStats stats{{1.5, -2.0, 0.25, 9.0}, {3.0, 0.5, 1.0, 2.0}};
    auto dir = std::filesystem::temp_directory_path() / "pathloss_imaging_tests";
    std::filesystem::create_directories(dir);
    save_stats_json(stats, dir / "stats.json");
    ChannelStats back = load_stats_json(dir / "stats.json");
    CHECK(back.mean == stats.mean);
    CHECK(back.stddev == stats.stddev);
}
