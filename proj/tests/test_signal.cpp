#include <doctest.h>

#include <cmath>
#include <numbers>

#include "hec/adc.hpp"
#include "hec/errors.hpp"
#include "hec/signal.hpp"
#include "hec/spectral.hpp"

using namespace hec;

namespace {

constexpr double pi = std::numbers::pi;

double db(double ratio)
{
    return 10.0 * std::log10(ratio);
}

} // namespace

TEST_CASE("normalized frequency")
{
    CHECK(normalized_omega(10.77, 100.0) == doctest::Approx(0.6767).epsilon(1e-4));
    CHECK(normalized_omega(25.0, 100.0) == doctest::Approx(pi / 2));
}

TEST_CASE("tone generator")
{
    auto zero = gen_tones({{0.3, 0.0, 0.1}}, 64);
    for (double v : zero)
        CHECK(v == 0.0);

    auto one = gen_tones({{pi / 2, 0.5, 0.0}}, 8);
    CHECK(one[1] == doctest::Approx(0.5));
    CHECK(one[3] == doctest::Approx(-0.5));

    auto two = gen_tones({{0.0942, 0.5, 0.3}, {0.11, 0.5, 1.7}}, 100000);
    double peak = 0.0;
    for (double v : two)
        peak = std::max(peak, std::abs(v));
    CHECK(peak <= 1.0);
    CHECK(peak > 0.99);

    CHECK_THROWS_AS(gen_tones({{0.0, 1.0, 0.0}}, 4), ConfigError);
    CHECK_THROWS_AS(gen_tones({{pi, 1.0, 0.0}}, 4), ConfigError);
    CHECK_THROWS_AS(gen_tones({{-0.1, 1.0, 0.0}}, 4), ConfigError);
}

TEST_CASE("impure generator without impurities is the clean signal")
{
    std::vector<ToneSpec> t{{0.0942, 0.45, 0.3}, {0.11, 0.45, 1.1}};
    auto clean = gen_tones(t, 4096);
    auto same = gen_impure_two_tone(t, Impurity{}, 4096);
    CHECK(clean == same);
}

TEST_CASE("third-order impurity shows up at the requested level")
{
    const std::size_t n = 4096;
    const std::size_t bin = 101;
    double w = 2.0 * pi * static_cast<double>(bin) / static_cast<double>(n);
    Impurity imp;
    imp.third_dbc = -40.0;
    auto x = gen_impure_two_tone({{w, 0.8, 0.2}}, imp, n);
    SpectrumEstimate s = spectrum(x, Window::rectangular, n);
    CHECK(db(s.power[3 * bin] / s.power[bin]) == doctest::Approx(-40.0).epsilon(1e-6));
    CHECK(s.power[2 * bin] < 1e-25);

    // harmonics beyond Nyquist alias back
    const std::size_t high = 1501;
    double wh = 2.0 * pi * static_cast<double>(high) / static_cast<double>(n);
    auto y = gen_impure_two_tone({{wh, 0.8, 0.2}}, imp, n);
    SpectrumEstimate sy = spectrum(y, Window::rectangular, n);
    CHECK(db(sy.power[3 * high - n] / sy.power[high]) == doctest::Approx(-40.0).epsilon(1e-6));

    // two tones: the IMD3 pair
    const std::size_t b1 = 200, b2 = 230;
    auto z = gen_impure_two_tone({{2 * pi * b1 / n, 0.4, 0.0}, {2 * pi * b2 / n, 0.4, 0.5}}, imp, n);
    SpectrumEstimate sz = spectrum(z, Window::rectangular, n);
    CHECK(db(sz.power[2 * b1 - b2] / sz.power[b1]) == doctest::Approx(-40.0).epsilon(1e-6));
    CHECK(db(sz.power[2 * b2 - b1] / sz.power[b1]) == doctest::Approx(-40.0).epsilon(1e-6));
}

TEST_CASE("re-quantization of the generator output")
{
    Impurity imp;
    imp.bits = 4;
    auto x = gen_impure_two_tone({{0.3, 0.9, 0.0}}, imp, 256);
    for (double v : x) {
        CHECK(v * 8.0 == std::round(v * 8.0));
        CHECK(v >= -1.0);
        CHECK(v < 1.0);
    }
}

TEST_CASE("noise variance")
{
    CHECK(noise_variance(0.5, 70.0) == doctest::Approx(0.5e-7).epsilon(1e-12));
    CHECK(noise_variance(1.0, 0.0) == doctest::Approx(1.0));
    CHECK(noise_variance(1.0, INFINITY) == 0.0);
}

TEST_CASE("noiseless pairs scale the input exactly")
{
    AdcInstance adc = ideal_adc(default_stages(), default_flash());
    PathConfig path;
    path.alpha_a = 0.71;
    auto x = gen_tones({{0.6767, 0.95, 0.4}}, 1000);
    auto pairs = make_pairs(adc, x, path, 3);
    for (std::size_t k = 0; k < x.size(); ++k) {
        CHECK(pairs[k].unscaled.input == x[k]);
        CHECK(pairs[k].scaled.input == 0.71 * x[k]);
        CHECK(pairs[k].k == k);
    }
}

TEST_CASE("empirical SNR and independence of the two noise draws")
{
    AdcInstance adc = ideal_adc(default_stages(), default_flash());
    PathConfig path;
    path.alpha_a = 0.7;
    path.snr_db = 70.0;
    const std::size_t n = 1000000;
    auto x = gen_tones({{0.6767, 0.95, 0.4}}, n);
    auto pairs = make_pairs(adc, x, path, 17);

    double p1 = 0.0, p2 = 0.0, cross = 0.0, sig = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        double n1 = pairs[k].unscaled.input - x[k];
        double n2 = pairs[k].scaled.input - path.alpha_a * x[k];
        p1 += n1 * n1;
        p2 += n2 * n2;
        cross += n1 * n2;
        sig += x[k] * x[k];
    }
    CHECK(db(sig / p1) == doctest::Approx(70.0).epsilon(0.2 / 70.0));
    // the scaled conversion carries noise scaled with alpha_a
    CHECK(db(path.alpha_a * path.alpha_a * sig / p2) == doctest::Approx(70.0).epsilon(0.2 / 70.0));
    double corr = cross / std::sqrt(p1 * p2);
    CHECK(std::abs(corr) < 3.0 / std::sqrt(static_cast<double>(n)));
}

TEST_CASE("pair generation is deterministic in the seed")
{
    AdcInstance adc = build_adc(default_stages(), default_flash(), MismatchConfig{}, 5);
    PathConfig path;
    path.snr_db = 60.0;
    auto x = gen_tones({{0.6767, 0.95, 0.4}}, 500);
    auto a = make_pairs(adc, x, path, 99);
    auto b = make_pairs(adc, x, path, 99);
    auto c = make_pairs(adc, x, path, 100);
    bool differs = false;
    for (std::size_t k = 0; k < x.size(); ++k) {
        CHECK(a[k].unscaled.output == b[k].unscaled.output);
        CHECK(a[k].scaled.output == b[k].scaled.output);
        differs |= a[k].unscaled.input != c[k].unscaled.input;
    }
    CHECK(differs);
}

TEST_CASE("path validation")
{
    PathConfig p;
    p.alpha_a = 1.2;
    CHECK_THROWS_AS(p.validate(), ConfigError);
    p.alpha_a = 0.5;
    p.alpha_d = 0.0;
    CHECK_THROWS_AS(p.validate(), ConfigError);
    p.alpha_d = 0.5;
    p.snr_db = NAN;
    CHECK_THROWS_AS(p.validate(), ConfigError);
}
