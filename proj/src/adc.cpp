#include "hec/adc.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "hec/errors.hpp"

namespace hec {

namespace {

// Largest |x - code| a stage produces for inputs in [-1, 1].
double max_digitization_error(const StageSpec& s)
{
    double worst = 0.0;
    for (int j = 0; j < s.levels(); ++j) {
        double lo = j == 0 ? -1.0 : s.thresholds[j - 1];
        double hi = j == s.levels() - 1 ? 1.0 : s.thresholds[j];
        worst = std::max({worst, std::abs(lo - s.codes[j]), std::abs(hi - s.codes[j])});
    }
    return worst;
}

double min_code_spacing(const StageSpec& s)
{
    double spacing = INFINITY;
    for (int j = 1; j < s.levels(); ++j)
        spacing = std::min(spacing, s.codes[j] - s.codes[j - 1]);
    return spacing;
}

void check_layout(const std::vector<StageSpec>& stages, const std::optional<StageSpec>& flash)
{
    if (stages.empty())
        throw ConfigError("ADC needs at least one pipeline stage");
    if (static_cast<int>(stages.size()) > kMaxStages)
        throw ConfigError("ADC has more than " + std::to_string(kMaxStages) + " stages");
    for (const auto& s : stages) {
        s.validate();
        if (!(s.gain > 0.0))
            throw ConfigError("stage gain must be positive");
    }
    if (flash)
        flash->validate();
}

} // namespace

void StageSpec::validate() const
{
    if (codes.size() < 2)
        throw ConfigError("a stage needs at least two levels");
    if (thresholds.size() + 1 != codes.size())
        throw ConfigError("a stage needs exactly one threshold fewer than codes");
    if (codes.size() > 127)
        throw ConfigError("too many levels in one stage");
    for (std::size_t j = 1; j < codes.size(); ++j)
        if (!(codes[j] > codes[j - 1]))
            throw ConfigError("stage codes must be strictly increasing");
    for (std::size_t j = 1; j < thresholds.size(); ++j)
        if (!(thresholds[j] > thresholds[j - 1]))
            throw ConfigError("stage thresholds must be strictly increasing");
}

StageSpec redundant_stage(int levels, double gain)
{
    if (levels < 2)
        throw ConfigError("a stage needs at least two levels");
    StageSpec s;
    s.gain = gain;
    double centre = 0.5 * (levels - 1);
    for (int j = 0; j < levels; ++j)
        s.codes.push_back((j - centre) / gain);
    for (int j = 0; j + 1 < levels; ++j)
        s.thresholds.push_back(0.5 * (s.codes[j] + s.codes[j + 1]));
    return s;
}

StageSpec flash_stage(int bits)
{
    if (bits < 1 || bits > 6)
        throw ConfigError("flash resolution must be 1..6 bits");
    int levels = 1 << bits;
    double step = 2.0 / levels;
    StageSpec s;
    for (int k = 0; k < levels; ++k)
        s.codes.push_back((k - 0.5 * (levels - 1)) * step);
    for (int k = 0; k + 1 < levels; ++k)
        s.thresholds.push_back((k - 0.5 * (levels - 2)) * step);
    return s;
}

std::vector<StageSpec> default_stages()
{
    return std::vector<StageSpec>(5, redundant_stage(7, 4.0));
}

StageSpec default_flash()
{
    return flash_stage(3);
}

double MismatchConfig::lsb() const
{
    return 2.0 / std::ldexp(1.0, lsb_bits);
}

AdcInstance build_adc(const std::vector<StageSpec>& stages, const std::optional<StageSpec>& flash,
                      const MismatchConfig& config, std::uint64_t seed, int resolution_bits)
{
    check_layout(stages, flash);
    if (config.gain_lsb < 0.0 || config.dac_lsb < 0.0)
        throw ConfigError("mismatch bounds must be non-negative");
    if (config.lsb_bits < 1 || config.lsb_bits > 52)
        throw ConfigError("mismatch LSB grid must be 1..52 bits");

    const double lsb = config.lsb();
    const double dac_bound = config.dac_lsb * lsb;

    AdcInstance adc;
    adc.stages = stages;
    adc.flash = flash;
    adc.resolution_bits = resolution_bits;

    std::mt19937_64 rng(seed);
    for (std::size_t i = 0; i < stages.size(); ++i) {
        const StageSpec& s = stages[i];
        double gain_bound = config.gain_lsb * lsb / max_digitization_error(s);
        if (gain_bound >= 1.0)
            throw ConfigError("gain mismatch bound makes a stage gain non-positive");
        if (2.0 * dac_bound >= min_code_spacing(s))
            throw ConfigError("DAC mismatch bound inverts the code ordering of stage " + std::to_string(i + 1));

        std::uniform_real_distribution<double> zeta(-gain_bound, gain_bound);
        std::uniform_real_distribution<double> dac(-dac_bound, dac_bound);
        double z = gain_bound > 0.0 ? zeta(rng) : 0.0;
        std::vector<double> e(s.levels());
        for (double& v : e)
            v = dac_bound > 0.0 ? dac(rng) : 0.0;

        if (static_cast<int>(i) < config.ideal_leading_stages) {
            z = 0.0;
            std::fill(e.begin(), e.end(), 0.0);
        }
        adc.mismatch.gain.push_back(z);
        adc.mismatch.dac.push_back(std::move(e));
    }
    return adc;
}

AdcInstance ideal_adc(const std::vector<StageSpec>& stages, const std::optional<StageSpec>& flash,
                      int resolution_bits)
{
    check_layout(stages, flash);
    AdcInstance adc;
    adc.stages = stages;
    adc.flash = flash;
    adc.resolution_bits = resolution_bits;
    for (const auto& s : stages) {
        adc.mismatch.gain.push_back(0.0);
        adc.mismatch.dac.emplace_back(s.levels(), 0.0);
    }
    return adc;
}

StageDecision quantize_stage(const StageSpec& stage, double residue)
{
    // First threshold with residue <= v_j; past the last one selects the top code.
    auto it = std::lower_bound(stage.thresholds.begin(), stage.thresholds.end(), residue);
    int j = static_cast<int>(it - stage.thresholds.begin());
    return {j, stage.codes[j]};
}

ConversionRecord convert(const AdcInstance& adc, double x_in)
{
    ConversionRecord rec;
    rec.input = x_in;
    const int n = adc.pipeline_stages();
    rec.stage_count = n + 1;

    double residue = x_in;
    double weight = 1.0;
    double y = 0.0;
    for (int i = 0; i < n; ++i) {
        const StageSpec& s = adc.stages[i];
        StageDecision d = quantize_stage(s, residue);
        rec.index[i] = static_cast<std::int8_t>(d.index);
        rec.code[i] = d.code;
        y += d.code * weight;
        residue = adc.true_gain(i) * (residue - d.code - adc.mismatch.dac[i][d.index]);
        weight /= s.gain;
    }
    if (adc.flash) {
        StageDecision d = quantize_stage(*adc.flash, residue);
        rec.index[n] = static_cast<std::int8_t>(d.index);
        rec.code[n] = d.code;
    } else {
        rec.index[n] = 0;
        rec.code[n] = residue;
    }
    y += rec.code[n] * weight;
    rec.output = y;
    return rec;
}

double overall_gain(const AdcInstance& adc)
{
    double beta = 1.0;
    for (double z : adc.mismatch.gain)
        beta *= 1.0 + z;
    return beta;
}

double backend_weight(const AdcInstance& adc)
{
    double w = 1.0;
    for (const auto& s : adc.stages)
        w /= s.gain;
    return w;
}

double reference_output(const AdcInstance& adc, double x_in, const ConversionRecord& record, double tolerance)
{
    const int n = adc.pipeline_stages();
    if (record.stage_count != n + 1)
        throw NumericalError("conversion record does not belong to this ADC");

    // tail[l] = prod_{j >= l} (1 + zeta_j), the B_l of the decomposition.
    std::vector<double> tail(n + 1, 1.0);
    for (int l = n - 1; l >= 0; --l)
        tail[l] = tail[l + 1] * (1.0 + adc.mismatch.gain[l]);

    double nonideal = 0.0; // w^T phi_0
    double ideal_weight = 1.0;
    for (int l = 0; l < n; ++l) {
        double d = record.code[l];
        double e = adc.mismatch.dac[l][record.index[l]];
        nonideal += ((tail[l] - 1.0) * d + tail[l] * e) * ideal_weight;
        ideal_weight /= adc.stages[l].gain;
    }

    // Final residue in closed form: prod G~ * x - sum_l prod_{j>=l} G~_j (d_l + e_l).
    double true_prod = 1.0;
    for (int l = 0; l < n; ++l)
        true_prod *= adc.true_gain(l);
    double residue = true_prod * x_in;
    for (int l = 0; l < n; ++l) {
        double g = 1.0;
        for (int j = l; j < n; ++j)
            g *= adc.true_gain(j);
        residue -= g * (record.code[l] + adc.mismatch.dac[l][record.index[l]]);
    }
    double backend_error = residue - record.code[n];
    double q_x = -backend_error * ideal_weight;

    double y = tail[0] * x_in - nonideal + q_x;
    if (!(std::abs(y - record.output) <= tolerance))
        throw NumericalError("closed-form output disagrees with the pipeline by " +
                             std::to_string(std::abs(y - record.output)));
    return y;
}

} // namespace hec
