#include "pathloss/dataset.hpp"

#include <charconv>
#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace pathloss {

std::string split_name(Split s) {
    switch (s) {
        case Split::Train: return "train";
        case Split::Val: return "val";
        case Split::Test: return "test";
    }
    return "train";
}

Split split_from_name(const std::string& name) {
    if (name == "train") return Split::Train;
    if (name == "val") return Split::Val;
    if (name == "test") return Split::Test;
    throw BadConfig("unknown split name: " + name);
}

namespace {

constexpr const char* kHeader =
    "route_id,split,tx_x,tx_y,tx_alt,rx_x,rx_y,rx_alt,freq_hz,d3d_m,pl_db";

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

double parse_double(const std::string& tok, int line) {
    try {
        size_t used = 0;
        double v = std::stod(tok, &used);
        if (used != tok.size()) throw std::invalid_argument(tok);
        return v;
    } catch (const std::exception&) {
        throw BadConfig("bad numeric field '" + tok + "' at dataset line " +
                        std::to_string(line));
    }
}

} // namespace

void write_dataset_csv(const std::filesystem::path& path,
                       const std::vector<LinkSample>& samples) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error("cannot open " + path.string() + " for writing");
    out << kHeader << "\n";
    for (const LinkSample& s : samples) {
        out << s.route_id << ',' << split_name(s.split) << ','
            << fmt_double(s.tx_x) << ',' << fmt_double(s.tx_y) << ','
            << fmt_double(s.tx_alt) << ',' << fmt_double(s.rx_x) << ','
            << fmt_double(s.rx_y) << ',' << fmt_double(s.rx_alt) << ','
            << fmt_double(s.frequency_hz) << ',' << fmt_double(s.d3d_m) << ','
            << fmt_double(s.path_loss_db) << "\n";
    }
    if (!out) throw Error("short write to " + path.string());
}

std::vector<LinkSample> read_dataset_csv(const std::filesystem::path& path, double d0_m) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw TruncatedFile("dataset file is empty");
    if (line != kHeader) throw BadConfig("unexpected dataset header: " + line);

    std::vector<LinkSample> samples;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::vector<std::string> tok;
        std::stringstream ss(line);
        std::string t;
        while (std::getline(ss, t, ',')) tok.push_back(t);
        if (tok.size() != 11)
            throw BadConfig("expected 11 fields at dataset line " + std::to_string(lineno));
        LinkSample s;
        s.route_id = static_cast<int>(parse_double(tok[0], lineno));
        s.split = split_from_name(tok[1]);
        s.tx_x = parse_double(tok[2], lineno);
        s.tx_y = parse_double(tok[3], lineno);
        s.tx_alt = parse_double(tok[4], lineno);
        s.rx_x = parse_double(tok[5], lineno);
        s.rx_y = parse_double(tok[6], lineno);
        s.rx_alt = parse_double(tok[7], lineno);
        s.frequency_hz = parse_double(tok[8], lineno);
        s.d3d_m = parse_double(tok[9], lineno);
        s.path_loss_db = parse_double(tok[10], lineno);

        if (std::abs(s.d3d_m - s.distance_3d()) > 1e-6)
            throw BadConfig("d3d disagrees with positions at line " + std::to_string(lineno));
        if (!std::isfinite(s.path_loss_db))
            throw BadConfig("non-finite path loss at line " + std::to_string(lineno));
        if (s.d3d_m < d0_m)
            throw DegenerateLink("sample below reference distance at line " +
                                 std::to_string(lineno));
        samples.push_back(s);
    }
    return samples;
}

std::vector<LinkSample> filter_split(const std::vector<LinkSample>& samples, Split split) {
    std::vector<LinkSample> out;
    for (const LinkSample& s : samples)
        if (s.split == split) out.push_back(s);
    return out;
}

} // namespace pathloss
