#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>

#include "terranav/phasecorr.hpp"

// Spectral decomposition diagnostics.
//
// The cross power spectrum of a shaded optical image against terrain data is
// modeled as a sign pattern in cos(theta - tau) times the translation phase
// ramp, up to a constant quadrature offset: differentiating the terrain
// surface contributes a fixed 90-degree phase when one side of the pair is
// raw elevation data. The diagnostics below therefore (1) estimate and remove
// the translation ramp, (2) estimate the constant phase offset from the
// flip-invariant mean of Q^2, and (3) compare the sign of the remaining real
// part against cos(theta - tau) on a polar grid. theta is measured in world
// orientation (x east, y north); image rows grow south, hence the v flip in
// the polar sampler.

namespace terranav {

namespace {

constexpr int kThetaBins = 64;
constexpr int kRadialBins = 32;

int signed_freq(int k, int n) { return k <= (n - 1) / 2 ? k : k - n; }

// Bilinear sample of a complex frequency grid at signed frequency (su, sv),
// with wraparound indexing.
std::complex<double> sample_freq(const std::vector<std::complex<double>>& c,
                                 int w, int h, double su, double sv) {
    double x = std::fmod(su, double(w));
    double y = std::fmod(sv, double(h));
    if (x < 0) x += w;
    if (y < 0) y += h;
    const int x0 = int(x) % w, y0 = int(y) % h;
    const int x1 = (x0 + 1) % w, y1 = (y0 + 1) % h;
    const double tx = x - std::floor(x), ty = y - std::floor(y);
    return (1 - tx) * (1 - ty) * c[size_t(y0) * w + x0] +
           tx * (1 - ty) * c[size_t(y0) * w + x1] +
           (1 - tx) * ty * c[size_t(y1) * w + x0] +
           tx * ty * c[size_t(y1) * w + x1];
}

double wrap_pi(double a) {
    while (a > std::numbers::pi) a -= 2.0 * std::numbers::pi;
    while (a < -std::numbers::pi) a += 2.0 * std::numbers::pi;
    return a;
}

}  // namespace

DecompositionReport decompose_spectrum(const CrossPowerSpectrum& q,
                                       const IlluminationConfig& illum) {
    illum.validate();
    const int w = q.width, h = q.height;
    DecompositionReport rep;

    // Integer ramp anchor and measured delta peak.
    const MatchResult anchor = peak_offset(q);
    rep.peak_attenuation = std::clamp(anchor.peak, 0.0, 1.0);

    // Refine the ramp on the phase of Q^2; squaring cancels the +-1 sign
    // flips so the fit sees a clean plane. Residuals against the integer
    // anchor stay small, which stands in for phase unwrapping.
    double s_uu = 0, s_uv = 0, s_vv = 0, s_u = 0, s_v = 0, s_w = 0;
    double b_u = 0, b_v = 0, b_c = 0;
    const double two_pi = 2.0 * std::numbers::pi;
    for (int v = 0; v < h; ++v) {
        const int sv = signed_freq(v, h);
        if (2 * sv == -h) continue;  // skip the ambiguous Nyquist row
        for (int u = 0; u < w; ++u) {
            const int su = signed_freq(u, w);
            if (2 * su == -w) continue;
            if (su == 0 && sv == 0) continue;
            const size_t i = size_t(v) * w + u;
            const double wt = q.raw_magnitude[i];
            if (wt <= q.eps) continue;
            const std::complex<double> q2 = q.coeff[i] * q.coeff[i];
            const double pred = -2.0 * two_pi *
                (anchor.integer_dx * double(su) / w + anchor.integer_dy * double(sv) / h);
            const double res = wrap_pi(std::arg(q2) - pred);
            // res ~ -4*pi*(da*su/w + db*sv/h) + const
            const double cu = -2.0 * two_pi * double(su) / w;
            const double cv = -2.0 * two_pi * double(sv) / h;
            s_uu += wt * cu * cu;
            s_uv += wt * cu * cv;
            s_vv += wt * cv * cv;
            s_u += wt * cu;
            s_v += wt * cv;
            s_w += wt;
            b_u += wt * cu * res;
            b_v += wt * cv * res;
            b_c += wt * res;
        }
    }
    double da = 0.0, db = 0.0;
    // Solve the 3x3 normal equations [suu suv su; suv svv sv; su sv sw].
    {
        const double a11 = s_uu, a12 = s_uv, a13 = s_u;
        const double a22 = s_vv, a23 = s_v, a33 = s_w;
        const double det = a11 * (a22 * a33 - a23 * a23) - a12 * (a12 * a33 - a23 * a13) +
                           a13 * (a12 * a23 - a22 * a13);
        if (std::abs(det) > 1e-12 * std::max(1.0, a33)) {
            const double i11 = (a22 * a33 - a23 * a23) / det;
            const double i12 = (a13 * a23 - a12 * a33) / det;
            const double i13 = (a12 * a23 - a13 * a22) / det;
            const double i22 = (a11 * a33 - a13 * a13) / det;
            const double i23 = (a13 * a12 - a11 * a23) / det;
            da = i11 * b_u + i12 * b_v + i13 * b_c;
            db = i12 * b_u + i22 * b_v + i23 * b_c;
        }
    }
    const double fa = anchor.integer_dx + da;
    const double fb = anchor.integer_dy + db;
    rep.fringe_density = std::hypot(fa, fb);
    rep.fringe_orientation = std::atan2(fb, fa);

    // De-ramp Q with the fitted translation so only the sign structure and
    // the constant quadrature offset remain.
    std::vector<std::complex<double>> flat(q.coeff.size());
    std::complex<double> sum_sq{0.0, 0.0};
    for (int v = 0; v < h; ++v) {
        const int sv = signed_freq(v, h);
        for (int u = 0; u < w; ++u) {
            const int su = signed_freq(u, w);
            const size_t i = size_t(v) * w + u;
            const double phase = two_pi * (fa * double(su) / w + fb * double(sv) / h);
            const std::complex<double> rot(std::cos(phase), std::sin(phase));
            flat[i] = q.coeff[i] * rot;
            if (!(su == 0 && sv == 0) && q.raw_magnitude[i] > q.eps)
                sum_sq += q.raw_magnitude[i] * flat[i] * flat[i];
        }
    }
    const double psi = 0.5 * std::arg(sum_sq);

    // Polar angular profile, theta in world orientation (v flipped).
    const double omega_max = 0.45 * std::min(w, h);
    const double omega_min = 2.0;
    auto angular_profile = [&](double quad) {
        std::vector<double> prof(kThetaBins, 0.0);
        const std::complex<double> rot(std::cos(-quad), std::sin(-quad));
        for (int ti = 0; ti < kThetaBins; ++ti) {
            const double theta = -std::numbers::pi + (ti + 0.5) * two_pi / kThetaBins;
            double acc = 0.0;
            for (int ri = 0; ri < kRadialBins; ++ri) {
                const double omega =
                    omega_min + (omega_max - omega_min) * (ri + 0.5) / kRadialBins;
                const double su = omega * std::cos(theta);
                const double sv = -omega * std::sin(theta);
                acc += (rot * sample_freq(flat, w, h, su, sv)).real();
            }
            prof[ti] = acc / kRadialBins;
        }
        return prof;
    };
    auto agreement = [&](const std::vector<double>& prof) {
        int match = 0;
        for (int ti = 0; ti < kThetaBins; ++ti) {
            const double theta = -std::numbers::pi + (ti + 0.5) * two_pi / kThetaBins;
            const double model = std::cos(theta - illum.azimuth);
            if ((prof[ti] >= 0.0) == (model >= 0.0)) ++match;
        }
        return double(match) / kThetaBins;
    };

    // The quadrature estimate from arg(sum Q^2)/2 carries a global sign
    // ambiguity; report the better of the two candidates.
    const double a0 = agreement(angular_profile(psi));
    const double a1 = agreement(angular_profile(psi + std::numbers::pi));
    rep.sign_agreement = std::max(a0, a1);
    return rep;
}

}  // namespace terranav
