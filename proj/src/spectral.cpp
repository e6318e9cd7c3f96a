#include "hec/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <numbers>
#include <stdexcept>

#include <fftw3.h>

#include "hec/errors.hpp"

namespace hec {

namespace {

// Planning in FFTW is not thread-safe; execution is.
std::mutex& planner_mutex()
{
    static std::mutex m;
    return m;
}

std::vector<double> make_window(Window w, std::size_t n)
{
    std::vector<double> v(n, 1.0);
    if (w == Window::blackman_harris) {
        const double a[] = {0.35875, 0.48829, 0.14128, 0.01168};
        for (std::size_t k = 0; k < n; ++k) {
            double x = 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
            v[k] = a[0] - a[1] * std::cos(x) + a[2] * std::cos(2 * x) - a[3] * std::cos(3 * x);
        }
    }
    return v;
}

struct Split {
    double signal = 0.0;
    double noise = 0.0;
    double spur = 0.0;
    std::size_t spur_bin = 0;
};

Split split(const SpectrumEstimate& spec, const std::vector<std::size_t>& signal_bins)
{
    if (signal_bins.empty())
        throw std::invalid_argument("no signal bins declared");
    const std::size_t nb = spec.power.size();
    const auto w = static_cast<std::size_t>(spec.leakage_bins);
    std::vector<char> mask(nb, 0); // 1 signal, 2 DC
    for (std::size_t k = 0; k <= std::min(w, nb - 1); ++k)
        mask[k] = 2;
    for (std::size_t b : signal_bins) {
        if (b == 0 || b >= nb)
            throw std::invalid_argument("signal bin outside the spectrum");
        for (std::size_t k = b > w ? b - w : 0; k <= std::min(b + w, nb - 1); ++k)
            mask[k] = 1;
    }
    Split s;
    double peak = 0.0;
    for (std::size_t b : signal_bins)
        peak = std::max(peak, spec.power[b]);
    for (std::size_t k = 0; k < nb; ++k) {
        if (mask[k] == 1) {
            s.signal += spec.power[k];
        } else if (mask[k] == 0) {
            s.noise += spec.power[k];
            if (spec.power[k] > s.spur) {
                s.spur = spec.power[k];
                s.spur_bin = k;
            }
        }
    }
    if (!(peak > s.spur))
        throw NumericalError("declared signal bins carry less power than the largest spur");
    return s;
}

double peak_of(const SpectrumEstimate& spec, const std::vector<std::size_t>& bins)
{
    double p = 0.0;
    for (std::size_t b : bins)
        p = std::max(p, spec.power[b]);
    return p;
}

double db(double ratio)
{
    return 10.0 * std::log10(ratio);
}

} // namespace

double SpectrumEstimate::bin_width() const
{
    return 2.0 * std::numbers::pi / static_cast<double>(n_fft);
}

SpectrumEstimate spectrum(std::span<const double> samples, Window window, std::size_t n_fft)
{
    if (n_fft < 2 || (n_fft & (n_fft - 1)) != 0)
        throw ConfigError("FFT length must be a power of two");
    if (samples.size() < n_fft)
        throw ConfigError("fewer samples than the FFT length");

    std::vector<double> win = make_window(window, n_fft);
    double cg = 0.0;
    for (double v : win)
        cg += v;
    cg /= static_cast<double>(n_fft);
    if (!(cg > 0.0))
        throw ConfigError("window is all zero");

    SpectrumEstimate est;
    est.n_fft = n_fft;
    est.window = window;
    est.coherent_gain = cg;
    est.leakage_bins = window == Window::rectangular ? 1 : 4;
    est.segments = samples.size() / n_fft;
    est.power.assign(n_fft / 2 + 1, 0.0);

    double* in = fftw_alloc_real(n_fft);
    fftw_complex* out = fftw_alloc_complex(n_fft / 2 + 1);
    fftw_plan plan;
    {
        std::lock_guard lock(planner_mutex());
        plan = fftw_plan_dft_r2c_1d(static_cast<int>(n_fft), in, out, FFTW_ESTIMATE);
    }

    const double n = static_cast<double>(n_fft);
    const double norm = 1.0 / (n * n * cg * cg * static_cast<double>(est.segments));
    for (std::size_t s = 0; s < est.segments; ++s) {
        for (std::size_t k = 0; k < n_fft; ++k)
            in[k] = samples[s * n_fft + k] * win[k];
        fftw_execute(plan);
        for (std::size_t k = 0; k <= n_fft / 2; ++k) {
            double m2 = out[k][0] * out[k][0] + out[k][1] * out[k][1];
            bool edge = k == 0 || k == n_fft / 2;
            est.power[k] += (edge ? 1.0 : 2.0) * m2 * norm;
        }
    }

    {
        std::lock_guard lock(planner_mutex());
        fftw_destroy_plan(plan);
    }
    fftw_free(in);
    fftw_free(out);
    return est;
}

double sfdr(const SpectrumEstimate& spec, const std::vector<std::size_t>& signal_bins)
{
    Split s = split(spec, signal_bins);
    return db(peak_of(spec, signal_bins) / s.spur);
}

double sndr(const SpectrumEstimate& spec, const std::vector<std::size_t>& signal_bins)
{
    Split s = split(spec, signal_bins);
    return db(s.signal / s.noise);
}

MetricReport measure(const SpectrumEstimate& spec, const std::vector<std::size_t>& signal_bins)
{
    Split s = split(spec, signal_bins);
    MetricReport r;
    double peak = peak_of(spec, signal_bins);
    r.sfdr_db = db(peak / s.spur);
    r.sndr_db = db(s.signal / s.noise);
    r.signal_bins = signal_bins;
    r.spur_bin = s.spur_bin;
    r.spur_db = -r.sfdr_db;
    return r;
}

std::size_t coherent_bin(double f_over_fs, std::size_t n_fft)
{
    if (!(f_over_fs > 0.0 && f_over_fs < 0.5))
        throw ConfigError("tone frequency must lie in (0, fs/2)");
    double exact = f_over_fs * static_cast<double>(n_fft);
    auto b = static_cast<std::size_t>(2.0 * std::round((exact - 1.0) / 2.0) + 1.0);
    return std::min(b, n_fft / 2 - 1);
}

double error_norm(const ParameterVector& theta, const ParameterVector& theta_ref)
{
    if (theta.size() != theta_ref.size())
        throw std::invalid_argument("parameter vectors differ in dimension");
    return (theta - theta_ref).norm();
}

} // namespace hec
