#include "cdp/patterns.hpp"

#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "cdp/png_io.hpp"
#include "cdp/rng.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace cdp {

BinaryTemplate generate_template(int n, int m, double density, std::uint64_t seed) {
    if (!(density > 0.0 && density < 1.0))
        throw ParameterError("generate_template: density must be inside (0,1), got " +
                             std::to_string(density));
    if (n < 16 || m < 16)
        throw ParameterError("generate_template: dimensions must be >= 16");

    BinaryTemplate t;
    t.n = n;
    t.m = m;
    t.density = density;
    t.seed = seed;
    t.bits.resize(static_cast<std::size_t>(n) * m);
    for (std::size_t k = 0; k < t.bits.size(); ++k)
        t.bits[k] = u01(hash2(seed, k)) < density ? 0 : 1;
    return t;
}

double measure_density(const BinaryTemplate& t) {
    if (t.bits.empty()) return 0.0;
    std::size_t black = 0;
    for (auto b : t.bits) black += (b == 0);
    return static_cast<double>(black) / static_cast<double>(t.bits.size());
}

void save_template(const BinaryTemplate& t, const std::string& path) {
    std::vector<std::uint8_t> gray(t.bits.size());
    for (std::size_t k = 0; k < t.bits.size(); ++k) gray[k] = t.bits[k] ? 255 : 0;
    png::TextMap text{
        {"cdp:density", fmt_fixed(t.density, 4)},
        {"cdp:id", std::to_string(t.id)},
        {"cdp:seed", std::to_string(t.seed)},
    };
    png::write_gray8(path, t.n, t.m, gray, text);
}

BinaryTemplate load_template(const std::string& path) {
    png::GrayData d = png::read_gray(path);
    if (d.bit_depth != 1 && d.bit_depth != 8)
        throw FormatError("load_template: expected 1- or 8-bit grayscale PNG: " + path);

    const std::uint16_t white = d.bit_depth == 1 ? 1 : 255;
    BinaryTemplate t;
    t.n = d.h;
    t.m = d.w;
    t.bits.resize(d.px.size());
    for (std::size_t k = 0; k < d.px.size(); ++k) {
        if (d.px[k] == 0)
            t.bits[k] = 0;
        else if (d.px[k] == white)
            t.bits[k] = 1;
        else
            throw FormatError("load_template: non-binary pixel value " + std::to_string(d.px[k]) +
                              " in " + path);
    }
    if (auto it = d.text.find("cdp:density"); it != d.text.end()) t.density = std::stod(it->second);
    if (auto it = d.text.find("cdp:id"); it != d.text.end()) t.id = std::stoll(it->second);
    if (auto it = d.text.find("cdp:seed"); it != d.text.end()) t.seed = std::stoull(it->second);
    return t;
}

const ManifestEntry* DatasetManifest::find(std::int64_t id, double density) const {
    for (const auto& e : entries)
        if (e.id == id && std::abs(e.density - density) < 1e-9) return &e;
    return nullptr;
}

DatasetManifest load_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("load_manifest: cannot open " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw FormatError("load_manifest: parse error in " + path + ": " + e.what());
    }

    fs::path base = fs::path(path).parent_path();
    DatasetManifest m;
    std::set<std::pair<std::int64_t, std::int64_t>> seen_train, seen_test;

    for (const auto& je : j.at("entries")) {
        ManifestEntry e;
        e.id = je.at("id").get<std::int64_t>();
        e.density = je.at("density").get<double>();
        e.template_path = je.at("template_path").get<std::string>();
        e.role = je.at("role").get<std::string>();
        if (e.role != "attack-train" && e.role != "auth-test")
            throw FormatError("load_manifest: unknown role '" + e.role + "'");
        if (!fs::exists(base / e.template_path))
            throw FormatError("load_manifest: missing file " + (base / e.template_path).string());
        if (je.contains("scans")) {
            for (const auto& js : je.at("scans")) {
                ScanRef s;
                s.printer_tag = js.at("printer_tag").get<std::string>();
                s.ppi = js.value("ppi", 0);
                s.pps = js.value("pps", 0);
                s.path = js.at("path").get<std::string>();
                if (!fs::exists(base / s.path))
                    throw FormatError("load_manifest: missing file " + (base / s.path).string());
                e.scans.push_back(std::move(s));
            }
        }
        auto key = std::make_pair(e.id, static_cast<std::int64_t>(std::llround(e.density * 1e6)));
        auto& mine = e.role == "attack-train" ? seen_train : seen_test;
        auto& other = e.role == "attack-train" ? seen_test : seen_train;
        if (other.count(key) || !mine.insert(key).second)
            throw FormatError("load_manifest: code id " + std::to_string(e.id) + " at density " +
                              fmt_fixed(e.density, 2) + " appears in more than one role");
        m.entries.push_back(std::move(e));
    }
    return m;
}

void save_manifest(const DatasetManifest& m, const std::string& path) {
    json j;
    j["entries"] = json::array();
    for (const auto& e : m.entries) {
        json je{{"id", e.id},
                {"density", e.density},
                {"template_path", e.template_path},
                {"role", e.role}};
        je["scans"] = json::array();
        for (const auto& s : e.scans)
            je["scans"].push_back(
                {{"printer_tag", s.printer_tag}, {"ppi", s.ppi}, {"pps", s.pps}, {"path", s.path}});
        j["entries"].push_back(std::move(je));
    }
    std::ofstream out(path);
    if (!out) throw FormatError("save_manifest: cannot open " + path);
    out << j.dump(2) << "\n";
}

}  // namespace cdp
