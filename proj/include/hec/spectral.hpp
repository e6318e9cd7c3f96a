#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "hec/correction.hpp"

namespace hec {

enum class Window { rectangular, blackman_harris };

struct SpectrumEstimate {
    std::vector<double> power; // one-sided, N_fft/2 + 1 bins, full-scale sine peak = 0.5
    std::size_t n_fft = 0;
    std::size_t segments = 0;
    Window window = Window::rectangular;
    double coherent_gain = 1.0; // mean of the window
    int leakage_bins = 0;       // half-width of the main lobe in bins

    double bin_width() const; // rad/sample
};

// Periodogram averaged over the non-overlapping N_fft segments of `samples`.
// The mean is not removed. Power is normalized by the window's coherent gain,
// so sum(power) * coherent_gain^2 equals the mean square of the windowed samples.
SpectrumEstimate spectrum(std::span<const double> samples, Window window, std::size_t n_fft);

struct MetricReport {
    double sfdr_db = 0.0;
    double sndr_db = 0.0;
    std::vector<std::size_t> signal_bins;
    std::size_t spur_bin = 0;
    double spur_db = 0.0; // dBc
};

// Bins within leakage_bins of DC or of a signal bin are excluded from the spur
// search. Throws NumericalError if the signal is below the largest spur.
double sfdr(const SpectrumEstimate& spec, const std::vector<std::size_t>& signal_bins);
double sndr(const SpectrumEstimate& spec, const std::vector<std::size_t>& signal_bins);
MetricReport measure(const SpectrumEstimate& spec, const std::vector<std::size_t>& signal_bins);

// Odd bin nearest to f/fs * n_fft, so the tone is coherent and shares no
// factor with n_fft.
std::size_t coherent_bin(double f_over_fs, std::size_t n_fft);

double error_norm(const ParameterVector& theta, const ParameterVector& theta_ref);

} // namespace hec
