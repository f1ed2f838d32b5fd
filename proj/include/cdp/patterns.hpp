#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cdp/image.hpp"

namespace cdp {

// Draws each pixel independently: black (0) with probability `density`.
// Counter-based generator, so the same (n, m, density, seed) reproduces the
// exact same bits on any platform and in any evaluation order.
BinaryTemplate generate_template(int n, int m, double density, std::uint64_t seed);

// Realized black fraction |{bits == 0}| / (n*m).
double measure_density(const BinaryTemplate& t);

// Templates are stored as 8-bit grayscale PNG, 0 = black, 255 = white, with
// density/id/seed carried in text chunks. Loading accepts 1- or 8-bit files;
// any sample that is not pure black/white is a format error.
void save_template(const BinaryTemplate& t, const std::string& path);
BinaryTemplate load_template(const std::string& path);

struct ScanRef {
    std::string printer_tag;
    int ppi = 0;   // acquisition resolution; informational
    int pps = 0;   // pixels per symbol of the stored image
    std::string path;
};

struct ManifestEntry {
    std::int64_t id = 0;
    double density = 0.0;
    std::string template_path;
    std::vector<ScanRef> scans;
    std::string role;  // "attack-train" | "auth-test"
};

struct DatasetManifest {
    std::vector<ManifestEntry> entries;

    const ManifestEntry* find(std::int64_t id, double density) const;
};

// Parses and validates a manifest: all referenced files must exist and no
// (id, density) pair may appear under both roles.
DatasetManifest load_manifest(const std::string& path);
void save_manifest(const DatasetManifest& m, const std::string& path);

}  // namespace cdp
