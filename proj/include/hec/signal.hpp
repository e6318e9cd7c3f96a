#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <vector>

#include "hec/adc.hpp"

namespace hec {

struct ToneSpec {
    double omega = 0.0;     // radians per sample, in (0, pi)
    double amplitude = 1.0; // normalized volts
    double phase = 0.0;
};

// 2*pi*f/fs
double normalized_omega(double f, double fs);

std::vector<double> gen_tones(const std::vector<ToneSpec>& tones, std::size_t n);

// Distortion and re-quantization of an otherwise clean multi-tone signal.
// Levels are in dBc relative to each tone; -inf disables an order.
// bits = 0 skips re-quantization.
struct Impurity {
    double second_dbc = -std::numeric_limits<double>::infinity();
    double third_dbc = -std::numeric_limits<double>::infinity();
    double fifth_dbc = -std::numeric_limits<double>::infinity();
    int bits = 0;
};

// Adds harmonics of order 2, 3 and 5 of every tone plus the third-order
// intermodulation pair 2*w1 - w2, 2*w2 - w1 of the first two tones.
std::vector<double> gen_impure_two_tone(const std::vector<ToneSpec>& tones, const Impurity& impurity,
                                        std::size_t n);

struct PathConfig {
    double alpha_a = 0.70710678118654752;
    double alpha_d = 0.70710678118654752;
    double snr_db = std::numeric_limits<double>::infinity();

    double delta() const { return alpha_a - alpha_d; }
    void validate() const;
};

struct SamplePair {
    ConversionRecord unscaled;
    ConversionRecord scaled;
    std::size_t k = 0;
};

double noise_variance(double signal_power, double snr_db);

double mean_square(const std::vector<double>& x);

// Both conversions of a pair see an independent noise draw. The scaled
// conversion's noise is scaled with alpha_a so each conversion has the
// configured SNR on its own.
std::vector<SamplePair> make_pairs(const AdcInstance& adc, const std::vector<double>& x_d,
                                   const PathConfig& path, std::uint64_t seed);

// Conversions of x_d plus white noise at `snr_db`.
std::vector<ConversionRecord> convert_sequence(const AdcInstance& adc, const std::vector<double>& x_d,
                                               double snr_db, std::uint64_t seed);

} // namespace hec
