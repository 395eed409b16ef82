#include "terranav/phasecorr.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <numbers>
#include <stdexcept>

namespace terranav {

namespace {

// FFTW plans are cached per (width, height, direction). Plans are created
// with FFTW_UNALIGNED so they can execute on any buffer via the new-array
// interface; creation is serialized (FFTW planning is not thread-safe).
class PlanCache {
public:
    static fftw_plan get(int width, int height, int sign) {
        static PlanCache cache;
        std::lock_guard<std::mutex> lock(cache.mutex_);
        const Key key{width, height, sign};
        auto it = cache.plans_.find(key);
        if (it != cache.plans_.end()) return it->second;
        std::vector<std::complex<double>> a(size_t(width) * height);
        std::vector<std::complex<double>> b(size_t(width) * height);
        fftw_plan plan = fftw_plan_dft_2d(
            height, width, reinterpret_cast<fftw_complex*>(a.data()),
            reinterpret_cast<fftw_complex*>(b.data()), sign,
            FFTW_ESTIMATE | FFTW_UNALIGNED);
        if (!plan) throw std::runtime_error("FFTW plan creation failed");
        cache.plans_.emplace(key, plan);
        return plan;
    }

private:
    using Key = std::tuple<int, int, int>;
    std::map<Key, fftw_plan> plans_;
    std::mutex mutex_;
};

void execute_dft(int width, int height, int sign,
                 std::vector<std::complex<double>>& in,
                 std::vector<std::complex<double>>& out) {
    fftw_plan plan = PlanCache::get(width, height, sign);
    out.resize(in.size());
    fftw_execute_dft(plan, reinterpret_cast<fftw_complex*>(in.data()),
                     reinterpret_cast<fftw_complex*>(out.data()));
}

int signed_freq(int k, int n) { return k <= (n - 1) / 2 ? k : k - n; }

}  // namespace

Spectrum forward_spectrum(const RasterImage& img, Windowing windowing) {
    img.validate();
    const int w = img.width, h = img.height;
    const size_t n = size_t(w) * h;

    double mean = 0.0;
    for (double p : img.pixels) mean += p;
    mean /= double(n);

    std::vector<std::complex<double>> in(n);
    if (windowing == Windowing::hann) {
        std::vector<double> wx(w), wy(h);
        for (int u = 0; u < w; ++u)
            wx[u] = w > 1 ? 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * u / (w - 1)) : 1.0;
        for (int v = 0; v < h; ++v)
            wy[v] = h > 1 ? 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * v / (h - 1)) : 1.0;
        for (int v = 0; v < h; ++v)
            for (int u = 0; u < w; ++u)
                in[size_t(v) * w + u] = (img.at(u, v) - mean) * wx[u] * wy[v];
    } else {
        for (size_t i = 0; i < n; ++i) in[i] = img.pixels[i] - mean;
    }

    Spectrum s;
    s.width = w;
    s.height = h;
    execute_dft(w, h, FFTW_FORWARD, in, s.coeff);
    return s;
}

CrossPowerSpectrum cross_power_spectrum(const Spectrum& f1, const Spectrum& f2,
                                        double eps_rel) {
    if (f1.width != f2.width || f1.height != f2.height)
        throw std::invalid_argument("cross_power_spectrum: dimension mismatch");
    const size_t n = f1.coeff.size();
    CrossPowerSpectrum q;
    q.width = f1.width;
    q.height = f1.height;
    q.coeff.resize(n);
    q.raw_magnitude.resize(n);

    double max_mag = 0.0;
    for (size_t i = 0; i < n; ++i) {
        const std::complex<double> prod = f1.coeff[i] * std::conj(f2.coeff[i]);
        q.coeff[i] = prod;
        q.raw_magnitude[i] = std::abs(prod);
        max_mag = std::max(max_mag, q.raw_magnitude[i]);
    }
    q.eps = eps_rel * max_mag;
    if (q.eps <= 0.0) q.eps = std::numeric_limits<double>::min();
    for (size_t i = 0; i < n; ++i)
        q.coeff[i] /= std::max(q.raw_magnitude[i], q.eps);

    // Both inputs are mean-subtracted, so the DC bin is 0/0. A pure shift
    // ramp equals 1 at DC; pin it there so the delta of an exact match
    // integrates to exactly 1.
    if (q.raw_magnitude[0] < q.eps) q.coeff[0] = {1.0, 0.0};
    return q;
}

namespace detail {

// Real part of IFT(Q), scaled by 1/(W*H) so a coherent match peaks near 1.
std::vector<double> delta_surface(const CrossPowerSpectrum& q) {
    std::vector<std::complex<double>> in = q.coeff;
    std::vector<std::complex<double>> out;
    execute_dft(q.width, q.height, FFTW_BACKWARD, in, out);
    const double scale = 1.0 / (double(q.width) * double(q.height));
    std::vector<double> d(out.size());
    for (size_t i = 0; i < out.size(); ++i) d[i] = out[i].real() * scale;
    return d;
}

}  // namespace detail

namespace {

// Three-point Gaussian peak interpolation on strictly positive samples.
double gaussian_subpixel(double left, double center, double right) {
    const double floor_v = center * 1e-6;
    const double gl = std::log(std::max(left, floor_v));
    const double gc = std::log(center);
    const double gr = std::log(std::max(right, floor_v));
    const double den = gl - 2.0 * gc + gr;
    if (den >= -1e-300) return 0.0;  // flat or non-concave
    double x = 0.5 * (gl - gr) / den;
    return std::clamp(x, -1.0, 1.0);
}

}  // namespace

MatchResult peak_offset(const CrossPowerSpectrum& q) {
    const int w = q.width, h = q.height;
    const std::vector<double> d = detail::delta_surface(q);

    size_t best = 0;
    for (size_t i = 1; i < d.size(); ++i)
        if (d[i] > d[best]) best = i;
    const int px = int(best % w);
    const int py = int(best / w);

    auto wrap = [](int k, int n) { return ((k % n) + n) % n; };
    auto val = [&](int x, int y) { return d[size_t(wrap(y, h)) * w + wrap(x, w)]; };

    MatchResult r;
    r.integer_dx = signed_freq(px, w);
    r.integer_dy = signed_freq(py, h);
    const double peak_v = d[best];
    if (peak_v > 0.0) {
        r.dx = r.integer_dx + gaussian_subpixel(val(px - 1, py), peak_v, val(px + 1, py));
        r.dy = r.integer_dy + gaussian_subpixel(val(px, py - 1), peak_v, val(px, py + 1));
    } else {
        r.dx = r.integer_dx;
        r.dy = r.integer_dy;
    }
    r.peak = std::clamp(peak_v, 0.0, 1.0);
    return r;
}

MatchResult match_translation(const RasterImage& target, const RasterImage& reference,
                              const MatchOptions& opts) {
    if (target.width != reference.width || target.height != reference.height)
        throw std::invalid_argument("match_translation: dimension mismatch");
    const Spectrum ft = forward_spectrum(target, opts.windowing);
    const Spectrum fr = forward_spectrum(reference, opts.windowing);
    // The reference spectrum enters first so that a reference whose content is
    // the target's moved by +d yields dx = +d (see header).
    const CrossPowerSpectrum q = cross_power_spectrum(fr, ft, opts.eps_rel);
    MatchResult r = peak_offset(q);
    r.low_confidence = r.peak < opts.min_peak;
    return r;
}

RasterImage circular_shift(const RasterImage& img, int a, int b) {
    RasterImage out;
    out.width = img.width;
    out.height = img.height;
    out.pixels.resize(img.pixels.size());
    auto wrap = [](int k, int n) { return ((k % n) + n) % n; };
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            out.at(x, y) = img.at(wrap(x + a, img.width), wrap(y + b, img.height));
    return out;
}

RasterImage fractional_shift(const RasterImage& img, double a, double b) {
    const int w = img.width, h = img.height;
    std::vector<std::complex<double>> in(img.pixels.begin(), img.pixels.end());
    std::vector<std::complex<double>> f;
    execute_dft(w, h, FFTW_FORWARD, in, f);
    for (int v = 0; v < h; ++v) {
        const double sv = signed_freq(v, h);
        for (int u = 0; u < w; ++u) {
            const double su = signed_freq(u, w);
            const double phase = 2.0 * std::numbers::pi * (a * su / w + b * sv / h);
            f[size_t(v) * w + u] *= std::complex<double>(std::cos(phase), std::sin(phase));
        }
    }
    std::vector<std::complex<double>> out;
    execute_dft(w, h, FFTW_BACKWARD, f, out);
    RasterImage res;
    res.width = w;
    res.height = h;
    res.pixels.resize(out.size());
    const double scale = 1.0 / (double(w) * double(h));
    for (size_t i = 0; i < out.size(); ++i)
        res.pixels[i] = std::max(0.0, out[i].real() * scale);
    return res;
}

}  // namespace terranav
