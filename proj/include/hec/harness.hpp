#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include "hec/adc.hpp"
#include "hec/calibration.hpp"
#include "hec/signal.hpp"
#include "hec/spectral.hpp"

namespace hec {

enum class Algorithm { hec_wiener, blhec_wiener, blhec_sgd };
enum class DeltaSource { fixed, normal };
enum class CalSignal { tone, two_tone };
enum class SweepKind { none, alpha, snr, delta, convergence };

std::string to_string(Algorithm a);
std::string to_string(SweepKind k);
Algorithm parse_algorithm(const std::string& s);
SweepKind parse_sweep_kind(const std::string& s);

struct ExperimentConfig {
    std::size_t population = 100;

    // converter
    int stages = 5;
    int stage_levels = 7;
    double stage_gain = 4.0;
    int flash_bits = 3; // 0: exact back-end
    int resolution_bits = 13;
    MismatchConfig mismatch;
    int q = 3;

    // calibration signal and analog path
    CalSignal cal_signal = CalSignal::tone;
    double cal_frequency = 0.1077; // f / fs
    double cal_amplitude = 0.95;
    std::vector<double> two_tone_omegas{0.0942, 0.11};
    Impurity impurity;
    double snr_db = 70.0;
    double alpha_d = 0.70710678118654752;
    DeltaSource delta_source = DeltaSource::normal;
    double delta = 0.0; // used when delta_source is fixed
    double delta_variance = 1e-4;

    // estimator
    Algorithm algorithm = Algorithm::blhec_wiener;
    std::size_t wiener_samples = 2000;
    std::size_t sgd_samples = 48000;
    StepSchedule schedule = default_schedule();
    int max_iterations = 500;
    double tolerance = 1e-7;
    bool strict_rank = false;
    double divergence_guard = 1.0;

    // evaluation
    double eval_frequency = 0.1077;
    double eval_amplitude = 0.89125093813374553; // -1 dBFS
    double eval_snr_db = std::numeric_limits<double>::infinity();
    std::size_t n_fft = 16384;
    Window window = Window::rectangular;

    std::uint64_t seed = 0;
    unsigned threads = 0; // 0: hardware concurrency; never affects results

    void validate() const; // throws ConfigError
};

std::string config_to_json(const ExperimentConfig& c);
ExperimentConfig config_from_json(const std::string& text); // missing keys keep defaults
std::string config_digest(const ExperimentConfig& c);

// Everything drawn for population member `id`.
struct Member {
    std::size_t id = 0;
    std::uint64_t seed = 0;
    AdcInstance adc;
    PathConfig path;
};

Member make_member(const ExperimentConfig& c, std::size_t id);
std::vector<double> calibration_signal(const ExperimentConfig& c, std::uint64_t member_seed, std::size_t n);

struct ResultRow {
    std::size_t adc_id = 0;
    std::uint64_t seed = 0;
    std::string digest;
    SweepKind sweep = SweepKind::none;
    double grid_value = std::numeric_limits<double>::quiet_NaN();
    Algorithm algorithm = Algorithm::blhec_wiener;
    std::size_t samples = 0;
    double pre_sndr = 0.0;
    double post_sndr = 0.0;
    double pre_sfdr = 0.0;
    double post_sfdr = 0.0;
    double theta_alpha = std::numeric_limits<double>::quiet_NaN();
    double delta = 0.0;
    int iterations = 0;
    int rank = 0;
    double wall_clock = 0.0; // seconds; written to the timing file only
};

struct TraceRow {
    std::size_t adc_id = 0;
    std::size_t k = 0;
    double error_norm = 0.0;
    double theta_alpha = 0.0;
};

struct ExperimentOutput {
    std::vector<ResultRow> rows;
    std::vector<TraceRow> trace;
};

ExperimentOutput run_experiment(const ExperimentConfig& config);

// One run per grid value and algorithm. For `convergence` the grid holds
// sample-count checkpoints of a single SGD run per ADC.
ExperimentOutput run_sweep(SweepKind kind, const ExperimentConfig& config, const std::vector<double>& grid,
                           const std::vector<Algorithm>& algorithms);

struct Stat {
    double mean = 0.0;
    double min = 0.0;
    double max = 0.0;
};

struct AggregateRow {
    SweepKind sweep = SweepKind::none;
    double grid_value = 0.0;
    Algorithm algorithm = Algorithm::blhec_wiener;
    std::size_t count = 0;
    Stat pre_sfdr, post_sfdr, pre_sndr, post_sndr;
};

// Grouped by (sweep, grid value, algorithm) in first-appearance order.
std::vector<AggregateRow> aggregate(const std::vector<ResultRow>& rows);

inline constexpr const char* kResultsSchema = "# hec-results v1";
inline constexpr const char* kAggregateSchema = "# hec-aggregate v1";
inline constexpr const char* kTraceSchema = "# hec-trace v1";

std::string results_csv(const std::vector<ResultRow>& rows);
std::string aggregate_csv(const std::vector<AggregateRow>& rows);
std::string trace_csv(const std::vector<TraceRow>& rows);
std::string timing_csv(const std::vector<ResultRow>& rows);

// Writes results.csv, aggregate.csv, trace.csv (if any), timing.csv and
// config.json into `dir`.
void emit_outputs(const std::filesystem::path& dir, const ExperimentConfig& config, const ExperimentOutput& out);

void write_text(const std::filesystem::path& path, const std::string& text);

} // namespace hec
