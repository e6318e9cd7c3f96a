// Command-line front end: simulate, calibrate, sweep, convergence.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "hec/errors.hpp"
#include "hec/harness.hpp"

namespace {

using namespace hec;

struct Overrides {
    std::uint64_t seed = 0;
    std::string config_file;
    std::string out_dir = "hec-out";
    std::optional<unsigned> threads;
    std::optional<std::size_t> population;
    std::optional<int> q;
    std::optional<int> max_iterations;
    std::optional<std::string> algorithm;
    std::optional<std::string> snr;
    std::optional<double> alpha;
    std::optional<double> delta;
    std::optional<double> delta_variance;
    std::optional<std::size_t> samples;
    std::optional<std::size_t> sgd_samples;
    std::optional<std::string> schedule;
    std::optional<double> cal_amplitude;
    std::optional<double> eval_amplitude;
    std::optional<std::size_t> n_fft;
    std::optional<int> ideal_stages;
    std::optional<int> mismatch_lsb_bits;
    bool strict_rank = false;
};

void add_common(CLI::App* cmd, Overrides& o)
{
    cmd->add_option("--seed", o.seed, "Master seed")->required();
    cmd->add_option("--config", o.config_file, "JSON config file; flags override its values")
        ->check(CLI::ExistingFile);
    cmd->add_option("--out", o.out_dir, "Output directory")->capture_default_str();
    cmd->add_option("--threads", o.threads, "Worker threads (0: all cores)");
    cmd->add_option("--population", o.population, "Number of simulated ADCs");
    cmd->add_option("--q", o.q, "Number of calibrated stages");
    cmd->add_option("--algorithm", o.algorithm, "hec-wiener | blhec-wiener | blhec-sgd");
    cmd->add_option("--snr", o.snr, "Input SNR in dB, or inf");
    cmd->add_option("--alpha", o.alpha, "Digital scaling factor alpha_d");
    cmd->add_option("--delta", o.delta, "Fixed scaling mismatch alpha_a - alpha_d");
    cmd->add_option("--delta-variance", o.delta_variance, "Variance of the per-ADC mismatch draw");
    cmd->add_option("--max-iterations", o.max_iterations, "Cap on BL-HEC Wiener alternations");
    cmd->add_option("--samples", o.samples, "Pairs used by the Wiener estimators");
    cmd->add_option("--sgd-samples", o.sgd_samples, "Pairs consumed by SGD");
    cmd->add_option("--schedule", o.schedule, "SGD schedule, e.g. 2^-2:24000,2^-4:12000");
    cmd->add_option("--cal-amplitude", o.cal_amplitude, "Calibration tone amplitude");
    cmd->add_option("--eval-amplitude", o.eval_amplitude, "Evaluation tone amplitude");
    cmd->add_option("--n-fft", o.n_fft, "FFT length for the metrics");
    cmd->add_option("--ideal-stages", o.ideal_stages, "Force the first k stages ideal");
    cmd->add_option("--mismatch-lsb-bits", o.mismatch_lsb_bits, "LSB grid of the mismatch bounds");
    cmd->add_flag("--strict-rank", o.strict_rank, "Fail on a singular R_hh instead of solving on its range");
}

double parse_db(const std::string& s)
{
    if (s == "inf")
        return std::numeric_limits<double>::infinity();
    try {
        return std::stod(s);
    } catch (const std::logic_error&) {
        throw ConfigError("not a number: '" + s + "'");
    }
}

std::vector<double> parse_list(const std::string& s)
{
    std::vector<double> out;
    std::stringstream in(s);
    std::string item;
    while (std::getline(in, item, ','))
        out.push_back(parse_db(item));
    if (out.empty())
        throw ConfigError("empty list");
    return out;
}

ExperimentConfig resolve(const Overrides& o)
{
    ExperimentConfig c;
    if (!o.config_file.empty()) {
        std::ifstream f(o.config_file);
        if (!f)
            throw ConfigError("cannot read config file " + o.config_file);
        std::stringstream buf;
        buf << f.rdbuf();
        c = config_from_json(buf.str());
    }
    c.seed = o.seed;
    if (o.threads)
        c.threads = *o.threads;
    if (o.population)
        c.population = *o.population;
    if (o.q)
        c.q = *o.q;
    if (o.algorithm)
        c.algorithm = parse_algorithm(*o.algorithm);
    if (o.snr)
        c.snr_db = parse_db(*o.snr);
    if (o.alpha)
        c.alpha_d = *o.alpha;
    if (o.delta) {
        c.delta_source = DeltaSource::fixed;
        c.delta = *o.delta;
    }
    if (o.delta_variance)
        c.delta_variance = *o.delta_variance;
    if (o.max_iterations)
        c.max_iterations = *o.max_iterations;
    if (o.samples)
        c.wiener_samples = *o.samples;
    if (o.sgd_samples)
        c.sgd_samples = *o.sgd_samples;
    if (o.schedule) {
        double ratio = c.schedule.alpha_ratio;
        c.schedule = StepSchedule::parse(*o.schedule);
        c.schedule.alpha_ratio = ratio;
    }
    if (o.cal_amplitude)
        c.cal_amplitude = *o.cal_amplitude;
    if (o.eval_amplitude)
        c.eval_amplitude = *o.eval_amplitude;
    if (o.n_fft)
        c.n_fft = *o.n_fft;
    if (o.ideal_stages)
        c.mismatch.ideal_leading_stages = *o.ideal_stages;
    if (o.mismatch_lsb_bits)
        c.mismatch.lsb_bits = *o.mismatch_lsb_bits;
    if (o.strict_rank)
        c.strict_rank = true;
    c.validate();
    return c;
}

void print_summary(const ExperimentOutput& out)
{
    for (const auto& a : aggregate(out.rows)) {
        std::printf("%-12s %-12s grid=%-10g n=%-4zu SFDR %6.2f -> %6.2f dB   SNDR %6.2f -> %6.2f dB\n",
                    to_string(a.sweep).c_str(), to_string(a.algorithm).c_str(), a.grid_value, a.count,
                    a.pre_sfdr.mean, a.post_sfdr.mean, a.pre_sndr.mean, a.post_sndr.mean);
    }
}

int simulate(const ExperimentConfig& c, std::size_t adc_id, std::size_t ramp, const std::filesystem::path& dir)
{
    Member m = make_member(c, adc_id);
    nlohmann::ordered_json j;
    j["adc_id"] = adc_id;
    j["seed"] = m.seed;
    j["alpha_a"] = m.path.alpha_a;
    j["alpha_d"] = m.path.alpha_d;
    j["beta"] = overall_gain(m.adc);
    j["gain_mismatch"] = m.adc.mismatch.gain;
    j["dac_errors"] = m.adc.mismatch.dac;

    std::filesystem::create_directories(dir);
    write_text(dir / "adc.json", j.dump(2) + "\n");

    std::string csv = "# hec-conversions v1\nx_in,y";
    for (int i = 0; i < m.adc.pipeline_stages(); ++i)
        csv += ",code" + std::to_string(i + 1);
    csv += ",backend\n";
    for (std::size_t k = 0; k < ramp; ++k) {
        double x = ramp > 1 ? -1.0 + 2.0 * static_cast<double>(k) / static_cast<double>(ramp - 1) : 0.0;
        ConversionRecord r = convert(m.adc, x);
        reference_output(m.adc, x, r);
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.12g,%.12g", x, r.output);
        csv += buf;
        for (int i = 0; i < r.stage_count; ++i)
            csv += "," + std::to_string(r.index[i] + 1);
        csv += "\n";
    }
    write_text(dir / "conversions.csv", csv);
    write_text(dir / "config.json", config_to_json(c));
    std::cout << j.dump(2) << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Pipelined ADC simulator and homogeneity-enforced calibration"};
    app.require_subcommand(1);

    Overrides o;
    std::size_t adc_id = 0;
    std::size_t ramp = 4097;
    std::string kind;
    std::string grid;
    std::string algorithms = "hec-wiener,blhec-wiener";
    std::string checkpoints = "0,2000,4000,8000,12000,16000,24000,32000,40000,48000";

    auto* sim = app.add_subcommand("simulate", "Draw one ADC and dump its mismatches and a ramp conversion");
    add_common(sim, o);
    sim->add_option("--adc-id", adc_id, "Population member to inspect")->capture_default_str();
    sim->add_option("--ramp", ramp, "Ramp points over [-1, 1]")->capture_default_str();

    auto* cal = app.add_subcommand("calibrate", "Calibrate a population and report SFDR/SNDR");
    add_common(cal, o);

    auto* sweep = app.add_subcommand("sweep", "Sweep alpha, SNR or delta across algorithms");
    add_common(sweep, o);
    sweep->add_option("--kind", kind, "alpha | snr | delta")->required();
    sweep->add_option("--grid", grid, "Comma-separated grid values")->required();
    sweep->add_option("--algorithms", algorithms, "Comma-separated algorithms")->capture_default_str();

    auto* conv = app.add_subcommand("convergence", "SGD metrics and error norm against sample count");
    add_common(conv, o);
    conv->add_option("--checkpoints", checkpoints, "Comma-separated sample counts")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        ExperimentConfig c = resolve(o);
        std::filesystem::path dir = o.out_dir;
        if (sim->parsed())
            return simulate(c, adc_id, ramp, dir);

        ExperimentOutput out;
        if (cal->parsed()) {
            out = run_experiment(c);
        } else if (sweep->parsed()) {
            SweepKind k = parse_sweep_kind(kind);
            if (k == SweepKind::convergence)
                throw ConfigError("use the convergence subcommand for convergence runs");
            std::vector<Algorithm> algs;
            std::stringstream in(algorithms);
            std::string item;
            while (std::getline(in, item, ','))
                algs.push_back(parse_algorithm(item));
            out = run_sweep(k, c, parse_list(grid), algs);
        } else {
            out = run_sweep(SweepKind::convergence, c, parse_list(checkpoints), {});
        }
        emit_outputs(dir, c, out);
        print_summary(out);
        return 0;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
