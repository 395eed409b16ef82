#pragma once

#include <complex>
#include <vector>

#include "terranav/hillshade.hpp"
#include "terranav/raster.hpp"

// Frequency-domain translation estimation.
//
// Sign convention: match_translation(target, reference) computes
// Q = F_target * conj(F_reference) normalized per bin; the delta peak of
// IFT(Q) sits at (dx, dy) such that reference(x - dx, y - dy) ~ target(x, y),
// i.e. positive dx means the reference content appears shifted +x relative to
// the target content. Offsets are unwrapped to [-W/2, W/2) x [-H/2, H/2).

namespace terranav {

enum class Windowing { none, hann };

struct Spectrum {
    int width = 0;   // frequency bins, DC at (0, 0)
    int height = 0;
    std::vector<std::complex<double>> coeff;  // row-major

    std::complex<double> at(int u, int v) const { return coeff[size_t(v) * width + u]; }
};

struct CrossPowerSpectrum {
    int width = 0;
    int height = 0;
    std::vector<std::complex<double>> coeff;      // unit (or sub-unit) magnitude
    std::vector<double> raw_magnitude;            // |F1 conj(F2)| before normalization
    double eps = 0.0;                             // regularization floor actually used

    std::complex<double> at(int u, int v) const { return coeff[size_t(v) * width + u]; }
};

struct MatchResult {
    double dx = 0.0;      // sub-pixel, signed
    double dy = 0.0;
    double peak = 0.0;    // delta peak height in [0, 1]
    int integer_dx = 0;
    int integer_dy = 0;
    bool low_confidence = false;  // peak < min_peak
};

struct MatchOptions {
    Windowing windowing = Windowing::hann;
    double eps_rel = 1e-12;   // epsilon floor relative to the max bin magnitude
    double min_peak = 0.05;   // confidence gate, result flagged below this
};

struct DecompositionReport {
    double sign_agreement = 0.0;     // fraction of angular bins, in [0, 1]
    double fringe_density = 0.0;     // sqrt(a^2 + b^2), pixels of shift
    double fringe_orientation = 0.0; // atan2(b, a), radians
    double peak_attenuation = 0.0;   // measured delta peak, in [0, 1]
};

// DFT of the mean-subtracted (and optionally Hann-windowed) image.
// Mean subtraction always applies; the window is optional so circular-shift
// identities stay exact.
Spectrum forward_spectrum(const RasterImage& img, Windowing windowing);

// Q(u,v) = F1 conj(F2) / max(|F1 conj(F2)|, eps), with eps =
// eps_rel * max|F1 conj(F2)|. The DC bin of two mean-subtracted spectra is
// 0/0; it is set to exactly 1 (the value a pure shift ramp takes at DC).
CrossPowerSpectrum cross_power_spectrum(const Spectrum& f1, const Spectrum& f2,
                                        double eps_rel = 1e-12);

// Inverse transform of Q, integer argmax of the real part, then a 3x3
// Gaussian sub-pixel fit. peak is the delta maximum clamped to [0, 1].
MatchResult peak_offset(const CrossPowerSpectrum& q);

// forward_spectrum -> cross_power_spectrum -> peak_offset.
MatchResult match_translation(const RasterImage& target, const RasterImage& reference,
                              const MatchOptions& opts = {});

// Spectral decomposition diagnostics: polar resampling (64 angular x 32
// radial bins), sign agreement of the angular profile against cos(theta -
// azimuth), and a least-squares refinement of the translation phase ramp.
DecompositionReport decompose_spectrum(const CrossPowerSpectrum& q,
                                       const IlluminationConfig& illum);

// Test/fixture helper: img((x + a) mod W, (y + b) mod H).
RasterImage circular_shift(const RasterImage& img, int a, int b);

// Fractional circular shift synthesized with a frequency-domain phase ramp;
// exact for band-limited periodic content.
RasterImage fractional_shift(const RasterImage& img, double a, double b);

}  // namespace terranav
