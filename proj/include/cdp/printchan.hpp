#pragma once

#include <cstdint>
#include <string>

#include "cdp/image.hpp"

namespace cdp {

// Print-scan channel parameters. dot_gain is the signed ink-spread radius as
// a fraction of the symbol pitch: positive grows black regions (grayscale
// dilation of ink), negative shrinks them. psf_sigma is the optical blur std
// in symbol units. Tone mapping is v -> gain*v + offset, then additive
// Gaussian sensor noise and a clamp to [0,1].
struct ChannelParams {
    int pps = 8;
    double psf_sigma = 0.55;
    double dot_gain = 0.12;
    double gain = 0.80;
    double offset = 0.10;
    double noise_std = 0.02;
    std::uint64_t seed = 0;

    void validate() const;
};

// A printer is a base channel plus per-print variability: each printed code
// draws its own params around the base. Stds of the Gaussian draws below.
struct PrinterProfile {
    std::string tag;
    ChannelParams base;
    double dot_gain_jitter = 0.0;
    double psf_jitter = 0.0;
    double gain_jitter = 0.0;
    double offset_jitter = 0.0;
};

// Shipped presets "P55" and "P76". Unknown tag -> parameter error.
PrinterProfile printer_preset(const std::string& tag);

// Per-code channel draw; deterministic in (profile, seed).
ChannelParams draw_print_params(const PrinterProfile& profile, std::uint64_t seed);

// Nearest-neighbor replication: black bit -> 0.0, white bit -> 1.0.
GrayImage upsample(const BinaryTemplate& t, int pps);

// Full channel: upsample -> signed dot gain -> Gaussian blur -> tone map ->
// seeded noise -> clamp. Deterministic given (t, p).
GrayImage simulate_print_scan(const BinaryTemplate& t, const ChannelParams& p);

// Area-average resampling to a lower pixels-per-symbol. Upsampling requests
// are parameter errors.
GrayImage downscale(const GrayImage& img, int target_pps);

struct RegisterResult {
    GrayImage image;    // crop of the probe at template size
    int shift_y = 0;    // correction applied: negative of the content offset
    int shift_x = 0;
    double correlation = 0.0;
};

// Integer-shift registration: maximizes zero-mean cross-correlation between
// probe crops and upsample(t, probe.pps) over [-max_shift, max_shift]^2.
RegisterResult register_probe(const GrayImage& probe, const BinaryTemplate& t, int max_shift);

// 16-bit grayscale PNG round trip, v <-> round(v*65535); pps and provenance
// ride along in text chunks.
void save_gray(const GrayImage& img, const std::string& path);
GrayImage load_gray(const std::string& path);

}  // namespace cdp
