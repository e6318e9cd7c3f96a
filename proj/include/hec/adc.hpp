#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

namespace hec {

inline constexpr int kMaxStages = 16;

// One quantizer stage. Code and threshold indices are 0-based throughout the
// library; index j here is code j+1 in the usual 1-based notation.
struct StageSpec {
    std::vector<double> codes;
    std::vector<double> thresholds;
    double gain = 1.0; // ideal inter-stage gain, unused for the back-end flash

    int levels() const { return static_cast<int>(codes.size()); }
    void validate() const; // throws ConfigError
};

// p-level redundant stage with codes spaced 1/gain and mid-point thresholds.
// redundant_stage(7, 4) is the usual 2.5-bit MDAC.
StageSpec redundant_stage(int levels, double gain);

// 2^bits uniform mid-rise levels spanning [-1, 1].
StageSpec flash_stage(int bits);

struct MismatchSet {
    std::vector<double> gain;             // zeta_i
    std::vector<std::vector<double>> dac; // e_i^DA per code
};

// Uniform mismatch draws. The bounds are in LSB of a converter with
// `lsb_bits` bits over the [-1, 1] range. The gain bound is the largest
// output contribution of the mismatch, so zeta_i is scaled by the stage's
// largest digitization error.
struct MismatchConfig {
    double gain_lsb = 25.0;
    double dac_lsb = 15.0;
    int lsb_bits = 12;
    int ideal_leading_stages = 0; // stages 1..k are drawn but then zeroed

    double lsb() const;
};

struct AdcInstance {
    std::vector<StageSpec> stages;
    std::optional<StageSpec> flash; // empty: residue is read out exactly
    MismatchSet mismatch;
    int resolution_bits = 13;
    double vref = 1.0;

    int pipeline_stages() const { return static_cast<int>(stages.size()); }
    double true_gain(int stage) const { return stages[stage].gain * (1.0 + mismatch.gain[stage]); }
};

struct ConversionRecord {
    double output = 0.0;
    double input = 0.0; // simulation truth, never used by calibrators
    int stage_count = 0;   // pipeline stages plus back-end
    std::array<std::int8_t, kMaxStages + 1> index{};
    std::array<double, kMaxStages + 1> code{}; // back-end entry holds the residue if no flash
};

// Default converter: 5 stages of 2.5 bits with gain 4 and a 3-bit flash.
std::vector<StageSpec> default_stages();
StageSpec default_flash();

AdcInstance build_adc(const std::vector<StageSpec>& stages, const std::optional<StageSpec>& flash,
                      const MismatchConfig& config, std::uint64_t seed, int resolution_bits = 13);

AdcInstance ideal_adc(const std::vector<StageSpec>& stages, const std::optional<StageSpec>& flash,
                      int resolution_bits = 13);

struct StageDecision {
    int index;
    double code;
};

StageDecision quantize_stage(const StageSpec& stage, double residue);

ConversionRecord convert(const AdcInstance& adc, double x_in);

// Closed-form output y = beta*x - w^T phi_0 + q_x evaluated from the codes in
// `record`. Throws NumericalError if it disagrees with record.output by more
// than `tolerance`.
double reference_output(const AdcInstance& adc, double x_in, const ConversionRecord& record,
                        double tolerance = 1e-9);

// beta = prod (1 + zeta_i)
double overall_gain(const AdcInstance& adc);

// Weight of the back-end code in the recombined output, prod 1/G_i.
double backend_weight(const AdcInstance& adc);

} // namespace hec
