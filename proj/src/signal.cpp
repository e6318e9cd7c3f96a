#include "hec/signal.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "hec/errors.hpp"

namespace hec {

namespace {

// Maps any frequency onto [0, pi] the way sampling aliases it.
double alias(double omega)
{
    double w = std::fmod(std::abs(omega), 2.0 * std::numbers::pi);
    return w > std::numbers::pi ? 2.0 * std::numbers::pi - w : w;
}

void add_tone(std::vector<double>& x, double omega, double amplitude, double phase)
{
    for (std::size_t k = 0; k < x.size(); ++k)
        x[k] += amplitude * std::sin(omega * static_cast<double>(k) + phase);
}

} // namespace

double normalized_omega(double f, double fs)
{
    return 2.0 * std::numbers::pi * f / fs;
}

std::vector<double> gen_tones(const std::vector<ToneSpec>& tones, std::size_t n)
{
    std::vector<double> x(n, 0.0);
    for (const auto& t : tones) {
        if (!(t.omega > 0.0 && t.omega < std::numbers::pi))
            throw ConfigError("tone frequency must lie in (0, pi) rad/sample");
        add_tone(x, t.omega, t.amplitude, t.phase);
    }
    return x;
}

std::vector<double> gen_impure_two_tone(const std::vector<ToneSpec>& tones, const Impurity& impurity,
                                        std::size_t n)
{
    std::vector<double> x = gen_tones(tones, n);
    const std::pair<int, double> orders[] = {
        {2, impurity.second_dbc}, {3, impurity.third_dbc}, {5, impurity.fifth_dbc}};
    for (auto [order, dbc] : orders) {
        if (!std::isfinite(dbc))
            continue;
        double rel = std::pow(10.0, dbc / 20.0);
        for (const auto& t : tones)
            add_tone(x, alias(order * t.omega), rel * t.amplitude, order * t.phase);
        if (order == 3 && tones.size() >= 2) {
            const ToneSpec& a = tones[0];
            const ToneSpec& b = tones[1];
            double amp = rel * std::sqrt(a.amplitude * b.amplitude);
            add_tone(x, alias(2.0 * a.omega - b.omega), amp, 2.0 * a.phase - b.phase);
            add_tone(x, alias(2.0 * b.omega - a.omega), amp, 2.0 * b.phase - a.phase);
        }
    }
    if (impurity.bits > 0) {
        double scale = std::ldexp(1.0, impurity.bits - 1);
        for (double& v : x)
            v = std::clamp(std::round(v * scale), -scale, scale - 1.0) / scale;
    }
    return x;
}

void PathConfig::validate() const
{
    if (!(alpha_a > 0.0 && alpha_a < 1.0))
        throw ConfigError("analog scale alpha_a must lie in (0, 1)");
    if (!(alpha_d > 0.0 && alpha_d < 1.0))
        throw ConfigError("digital scale alpha_d must lie in (0, 1)");
    if (std::isnan(snr_db))
        throw ConfigError("SNR must be a number or infinity");
}

double noise_variance(double signal_power, double snr_db)
{
    if (snr_db == std::numeric_limits<double>::infinity())
        return 0.0;
    return signal_power / std::pow(10.0, snr_db / 10.0);
}

double mean_square(const std::vector<double>& x)
{
    if (x.empty())
        return 0.0;
    double s = 0.0;
    for (double v : x)
        s += v * v;
    return s / static_cast<double>(x.size());
}

std::vector<SamplePair> make_pairs(const AdcInstance& adc, const std::vector<double>& x_d,
                                   const PathConfig& path, std::uint64_t seed)
{
    path.validate();
    const double sigma = std::sqrt(noise_variance(mean_square(x_d), path.snr_db));
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);

    std::vector<SamplePair> pairs(x_d.size());
    for (std::size_t k = 0; k < x_d.size(); ++k) {
        double n1 = 0.0;
        double n2 = 0.0;
        if (sigma > 0.0) {
            n1 = sigma * gauss(rng);
            n2 = path.alpha_a * sigma * gauss(rng);
        }
        pairs[k].unscaled = convert(adc, x_d[k] + n1);
        pairs[k].scaled = convert(adc, path.alpha_a * x_d[k] + n2);
        pairs[k].k = k;
    }
    return pairs;
}

std::vector<ConversionRecord> convert_sequence(const AdcInstance& adc, const std::vector<double>& x_d,
                                               double snr_db, std::uint64_t seed)
{
    const double sigma = std::sqrt(noise_variance(mean_square(x_d), snr_db));
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, sigma > 0.0 ? sigma : 1.0);
    std::vector<ConversionRecord> out(x_d.size());
    for (std::size_t k = 0; k < x_d.size(); ++k)
        out[k] = convert(adc, x_d[k] + (sigma > 0.0 ? gauss(rng) : 0.0));
    return out;
}

} // namespace hec
