#include "hec/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <map>
#include <numbers>
#include <random>
#include <thread>

#include <json.hpp>

#include "hec/errors.hpp"
#include "hec/seed.hpp"

namespace hec {

using json = nlohmann::ordered_json;

namespace {

constexpr std::pair<Algorithm, const char*> kAlgorithms[] = {
    {Algorithm::hec_wiener, "hec-wiener"},
    {Algorithm::blhec_wiener, "blhec-wiener"},
    {Algorithm::blhec_sgd, "blhec-sgd"},
};

constexpr std::pair<SweepKind, const char*> kSweeps[] = {
    {SweepKind::none, "none"},   {SweepKind::alpha, "alpha"},
    {SweepKind::snr, "snr"},     {SweepKind::delta, "delta"},
    {SweepKind::convergence, "convergence"},
};

// JSON has no infinities, so they travel as strings.
json number(double v)
{
    if (std::isinf(v))
        return v > 0 ? "inf" : "-inf";
    return v;
}

double read_number(const json& j, const char* key)
{
    const json& v = j.at(key);
    if (v.is_string()) {
        std::string s = v.get<std::string>();
        if (s == "inf")
            return std::numeric_limits<double>::infinity();
        if (s == "-inf")
            return -std::numeric_limits<double>::infinity();
        throw ConfigError(std::string("'") + key + "' must be a number, \"inf\" or \"-inf\"");
    }
    if (!v.is_number())
        throw ConfigError(std::string("'") + key + "' must be a number");
    return v.get<double>();
}

std::string format(double v)
{
    if (std::isnan(v))
        return "nan";
    if (std::isinf(v))
        return v > 0 ? "inf" : "-inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return buf;
}

template <class F>
void parallel_for(std::size_t n, unsigned threads, F&& body)
{
    if (threads == 0)
        threads = std::max(1u, std::thread::hardware_concurrency());
    threads = static_cast<unsigned>(std::min<std::size_t>(threads, std::max<std::size_t>(n, 1)));
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(n);
    auto work = [&] {
        for (std::size_t i = next++; i < n; i = next++) {
            try {
                body(i);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    {
        std::vector<std::jthread> pool;
        for (unsigned t = 1; t < threads; ++t)
            pool.emplace_back(work);
        work();
    }
    // The lowest failing id wins, whatever the scheduling was.
    for (auto& e : errors)
        if (e)
            std::rethrow_exception(e);
}

template <class F>
auto with_context(std::size_t id, F&& f)
{
    std::string where = "adc " + std::to_string(id) + ": ";
    try {
        return f();
    } catch (const ConfigError& e) {
        throw ConfigError(where + e.what());
    } catch (const NumericalError& e) {
        throw NumericalError(where + e.what());
    }
}

struct Evaluation {
    std::vector<ConversionRecord> records;
    std::vector<std::size_t> bins;
};

Evaluation make_evaluation(const ExperimentConfig& c, const Member& m)
{
    Evaluation ev;
    std::size_t bin = coherent_bin(c.eval_frequency, c.n_fft);
    ev.bins = {bin};
    auto phase_rng = make_engine(m.seed, Stream::eval_phase);
    double phase = std::uniform_real_distribution<double>(0.0, 2.0 * std::numbers::pi)(phase_rng);
    double omega = 2.0 * std::numbers::pi * static_cast<double>(bin) / static_cast<double>(c.n_fft);
    std::vector<double> x = gen_tones({{omega, c.eval_amplitude, phase}}, c.n_fft);
    ev.records = convert_sequence(m.adc, x, c.eval_snr_db, make_engine(m.seed, Stream::eval_noise)());
    return ev;
}

MetricReport evaluate(const ExperimentConfig& c, const Evaluation& ev, const CorrectionLayout& layout,
                      const ParameterVector* theta)
{
    std::vector<double> y(ev.records.size());
    for (std::size_t k = 0; k < y.size(); ++k) {
        y[k] = ev.records[k].output;
        if (theta)
            y[k] = apply_correction(y[k], selection_vector(ev.records[k], layout), *theta);
    }
    return measure(spectrum(y, c.window, c.n_fft), ev.bins);
}

std::vector<SamplePair> calibration_pairs(const ExperimentConfig& c, const Member& m, std::size_t n)
{
    std::vector<double> x = calibration_signal(c, m.seed, n);
    return make_pairs(m.adc, x, m.path, make_engine(m.seed, Stream::cal_noise)());
}

ResultRow base_row(const ExperimentConfig& c, const Member& m, const std::string& digest)
{
    ResultRow r;
    r.adc_id = m.id;
    r.seed = m.seed;
    r.digest = digest;
    r.algorithm = c.algorithm;
    r.delta = m.path.delta();
    return r;
}

ResultRow calibrate_member(const ExperimentConfig& c, const Member& m, const std::string& digest)
{
    auto t0 = std::chrono::steady_clock::now();
    ResultRow row = base_row(c, m, digest);
    CorrectionLayout layout = CorrectionLayout::for_adc(m.adc, c.q);
    std::size_t n = c.algorithm == Algorithm::blhec_sgd ? c.sgd_samples : c.wiener_samples;
    std::vector<SamplePair> pairs = calibration_pairs(c, m, n);
    row.samples = n;

    SolveOptions solve{1e12, c.strict_rank};
    ParameterVector theta;
    switch (c.algorithm) {
    case Algorithm::hec_wiener: {
        WienerResult w = hec_wiener(accumulate_statistics(pairs, layout, c.alpha_d, n), solve);
        theta = std::move(w.theta);
        row.rank = w.report.rank;
        break;
    }
    case Algorithm::blhec_wiener: {
        BlhecOptions opt{c.max_iterations, c.tolerance, solve};
        BlhecResult b = blhec_wiener(accumulate_statistics(pairs, layout, c.alpha_d, n), opt);
        theta = std::move(b.theta_nl);
        row.theta_alpha = b.theta_alpha;
        row.iterations = b.iterations;
        row.rank = b.report.rank;
        break;
    }
    case Algorithm::blhec_sgd: {
        SgdOptions opt;
        opt.divergence_guard = c.divergence_guard;
        SgdResult s = run_sgd(pairs, layout, c.alpha_d, c.schedule, opt);
        theta = std::move(s.state.theta_nl);
        row.theta_alpha = s.state.theta_alpha;
        row.iterations = static_cast<int>(s.state.k);
        row.rank = layout.dimension;
        break;
    }
    }

    Evaluation ev = make_evaluation(c, m);
    MetricReport pre = evaluate(c, ev, layout, nullptr);
    MetricReport post = evaluate(c, ev, layout, &theta);
    row.pre_sfdr = pre.sfdr_db;
    row.pre_sndr = pre.sndr_db;
    row.post_sfdr = post.sfdr_db;
    row.post_sndr = post.sndr_db;
    row.wall_clock = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return row;
}

// One SGD run per ADC, evaluated at each checkpoint.
void converge_member(const ExperimentConfig& c, const Member& m, const std::string& digest,
                     const std::vector<std::size_t>& checkpoints, std::vector<ResultRow>& rows,
                     std::vector<TraceRow>& trace)
{
    auto t0 = std::chrono::steady_clock::now();
    CorrectionLayout layout = CorrectionLayout::for_adc(m.adc, c.q);
    std::size_t n = std::max(c.sgd_samples, checkpoints.back());
    std::vector<SamplePair> pairs = calibration_pairs(c, m, n);

    BlhecOptions bopt{c.max_iterations, c.tolerance, SolveOptions{1e12, c.strict_rank}};
    BlhecResult reference = blhec_wiener(accumulate_statistics(pairs, layout, c.alpha_d, n), bopt);

    Evaluation ev = make_evaluation(c, m);
    MetricReport pre = evaluate(c, ev, layout, nullptr);

    SgdOptions opt;
    opt.divergence_guard = c.divergence_guard;
    opt.reference = &reference.theta_nl;
    opt.log_stride = std::max<std::size_t>(1, n / 200);

    CalibrationState state = CalibrationState::zero(layout);
    std::size_t done = 0;
    for (std::size_t k : checkpoints) {
        std::span<const SamplePair> chunk(pairs.data() + done, k - done);
        SgdResult s = run_sgd(chunk, layout, c.alpha_d, c.schedule, opt, state);
        for (const auto& p : s.trace)
            trace.push_back({m.id, p.k, p.error_norm, p.theta_alpha});
        state = std::move(s.state);
        done = k;

        MetricReport post = evaluate(c, ev, layout, &state.theta_nl);
        ResultRow row = base_row(c, m, digest);
        row.algorithm = Algorithm::blhec_sgd;
        row.sweep = SweepKind::convergence;
        row.grid_value = static_cast<double>(k);
        row.samples = k;
        row.pre_sfdr = pre.sfdr_db;
        row.pre_sndr = pre.sndr_db;
        row.post_sfdr = post.sfdr_db;
        row.post_sndr = post.sndr_db;
        row.theta_alpha = state.theta_alpha;
        row.iterations = static_cast<int>(k);
        row.rank = layout.dimension;
        row.wall_clock = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        rows.push_back(row);
    }
}

Stat stat_of(const std::vector<double>& v)
{
    Stat s;
    if (v.empty())
        return s;
    double sum = 0.0;
    s.min = v.front();
    s.max = v.front();
    for (double x : v) {
        sum += x;
        s.min = std::min(s.min, x);
        s.max = std::max(s.max, x);
    }
    s.mean = sum / static_cast<double>(v.size());
    return s;
}

} // namespace

std::string to_string(Algorithm a)
{
    for (auto [k, name] : kAlgorithms)
        if (k == a)
            return name;
    return "?";
}

std::string to_string(SweepKind s)
{
    for (auto [k, name] : kSweeps)
        if (k == s)
            return name;
    return "?";
}

Algorithm parse_algorithm(const std::string& s)
{
    for (auto [k, name] : kAlgorithms)
        if (s == name)
            return k;
    throw ConfigError("unknown algorithm '" + s + "' (hec-wiener, blhec-wiener, blhec-sgd)");
}

SweepKind parse_sweep_kind(const std::string& s)
{
    for (auto [k, name] : kSweeps)
        if (s == name && k != SweepKind::none)
            return k;
    throw ConfigError("unknown sweep kind '" + s + "' (alpha, snr, delta, convergence)");
}

void ExperimentConfig::validate() const
{
    if (stages < 1 || stages > kMaxStages)
        throw ConfigError("stages must be 1.." + std::to_string(kMaxStages));
    if (stage_levels < 2 || stage_levels > 127)
        throw ConfigError("stage_levels must be 2..127");
    if (!(stage_gain > 1.0))
        throw ConfigError("stage_gain must exceed 1");
    if (flash_bits < 0 || flash_bits > 6)
        throw ConfigError("flash_bits must be 0..6");
    if (q < 1 || q > stages)
        throw ConfigError("q must be between 1 and the number of pipeline stages");
    if (!(cal_frequency > 0.0 && cal_frequency < 0.5))
        throw ConfigError("cal_frequency must lie in (0, 0.5)");
    if (!(eval_frequency > 0.0 && eval_frequency < 0.5))
        throw ConfigError("eval_frequency must lie in (0, 0.5)");
    if (!(cal_amplitude > 0.0 && cal_amplitude <= 1.0))
        throw ConfigError("cal_amplitude must lie in (0, 1]");
    if (!(eval_amplitude > 0.0 && eval_amplitude <= 1.0))
        throw ConfigError("eval_amplitude must lie in (0, 1]");
    if (cal_signal == CalSignal::two_tone && two_tone_omegas.size() < 2)
        throw ConfigError("two_tone_omegas needs two frequencies");
    for (double w : two_tone_omegas)
        if (!(w > 0.0 && w < std::numbers::pi))
            throw ConfigError("two_tone_omegas must lie in (0, pi)");
    if (std::isnan(snr_db) || std::isnan(eval_snr_db))
        throw ConfigError("SNR must be a number or inf");
    if (!(alpha_d > 0.0 && alpha_d < 1.0))
        throw ConfigError("alpha_d must lie in (0, 1)");
    if (delta_source == DeltaSource::fixed && !(alpha_d + delta > 0.0 && alpha_d + delta < 1.0))
        throw ConfigError("alpha_d + delta must lie in (0, 1)");
    if (!(delta_variance >= 0.0))
        throw ConfigError("delta_variance must be non-negative");
    if (wiener_samples < 1 || sgd_samples < 1)
        throw ConfigError("sample budgets must be positive");
    if (schedule.segments.empty())
        throw ConfigError("SGD schedule is empty");
    if (max_iterations < 1)
        throw ConfigError("max_iterations must be positive");
    if (!(tolerance > 0.0))
        throw ConfigError("tolerance must be positive");
    if (!(divergence_guard > 0.0))
        throw ConfigError("divergence_guard must be positive");
    if (n_fft < 64 || (n_fft & (n_fft - 1)) != 0)
        throw ConfigError("n_fft must be a power of two of at least 64");
    if (mismatch.gain_lsb < 0.0 || mismatch.dac_lsb < 0.0)
        throw ConfigError("mismatch bounds must be non-negative");
    if (mismatch.lsb_bits < 1 || mismatch.lsb_bits > 52)
        throw ConfigError("mismatch lsb_bits must be 1..52");
}

std::string config_to_json(const ExperimentConfig& c)
{
    json j;
    j["population"] = c.population;
    j["stages"] = c.stages;
    j["stage_levels"] = c.stage_levels;
    j["stage_gain"] = c.stage_gain;
    j["flash_bits"] = c.flash_bits;
    j["resolution_bits"] = c.resolution_bits;
    j["gain_mismatch_lsb"] = c.mismatch.gain_lsb;
    j["dac_mismatch_lsb"] = c.mismatch.dac_lsb;
    j["mismatch_lsb_bits"] = c.mismatch.lsb_bits;
    j["ideal_leading_stages"] = c.mismatch.ideal_leading_stages;
    j["q"] = c.q;
    j["cal_signal"] = c.cal_signal == CalSignal::tone ? "tone" : "two-tone";
    j["cal_frequency"] = c.cal_frequency;
    j["cal_amplitude"] = c.cal_amplitude;
    j["two_tone_omegas"] = c.two_tone_omegas;
    j["impurity_second_dbc"] = number(c.impurity.second_dbc);
    j["impurity_third_dbc"] = number(c.impurity.third_dbc);
    j["impurity_fifth_dbc"] = number(c.impurity.fifth_dbc);
    j["impurity_bits"] = c.impurity.bits;
    j["snr_db"] = number(c.snr_db);
    j["alpha_d"] = c.alpha_d;
    j["delta_source"] = c.delta_source == DeltaSource::fixed ? "fixed" : "normal";
    j["delta"] = c.delta;
    j["delta_variance"] = c.delta_variance;
    j["algorithm"] = to_string(c.algorithm);
    j["wiener_samples"] = c.wiener_samples;
    j["sgd_samples"] = c.sgd_samples;
    j["schedule"] = c.schedule.str();
    j["schedule_alpha_ratio"] = c.schedule.alpha_ratio;
    j["max_iterations"] = c.max_iterations;
    j["tolerance"] = c.tolerance;
    j["strict_rank"] = c.strict_rank;
    j["divergence_guard"] = c.divergence_guard;
    j["eval_frequency"] = c.eval_frequency;
    j["eval_amplitude"] = c.eval_amplitude;
    j["eval_snr_db"] = number(c.eval_snr_db);
    j["n_fft"] = c.n_fft;
    j["window"] = c.window == Window::rectangular ? "rectangular" : "blackman-harris";
    j["seed"] = c.seed;
    return j.dump(2) + "\n";
}

ExperimentConfig config_from_json(const std::string& text)
{
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    if (!j.is_object())
        throw ConfigError("config must be a JSON object");

    ExperimentConfig c;
    const ExperimentConfig defaults;
    json known = json::parse(config_to_json(defaults));
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!known.contains(it.key()) && it.key() != "threads")
            throw ConfigError("unknown config key '" + it.key() + "'");

    try {
        auto get = [&](const char* key, auto& field) {
            if (j.contains(key))
                field = j.at(key).get<std::remove_reference_t<decltype(field)>>();
        };
        auto get_num = [&](const char* key, double& field) {
            if (j.contains(key))
                field = read_number(j, key);
        };
        get("population", c.population);
        get("stages", c.stages);
        get("stage_levels", c.stage_levels);
        get_num("stage_gain", c.stage_gain);
        get("flash_bits", c.flash_bits);
        get("resolution_bits", c.resolution_bits);
        get_num("gain_mismatch_lsb", c.mismatch.gain_lsb);
        get_num("dac_mismatch_lsb", c.mismatch.dac_lsb);
        get("mismatch_lsb_bits", c.mismatch.lsb_bits);
        get("ideal_leading_stages", c.mismatch.ideal_leading_stages);
        get("q", c.q);
        if (j.contains("cal_signal")) {
            std::string s = j.at("cal_signal").get<std::string>();
            if (s == "tone")
                c.cal_signal = CalSignal::tone;
            else if (s == "two-tone")
                c.cal_signal = CalSignal::two_tone;
            else
                throw ConfigError("cal_signal must be 'tone' or 'two-tone'");
        }
        get_num("cal_frequency", c.cal_frequency);
        get_num("cal_amplitude", c.cal_amplitude);
        get("two_tone_omegas", c.two_tone_omegas);
        get_num("impurity_second_dbc", c.impurity.second_dbc);
        get_num("impurity_third_dbc", c.impurity.third_dbc);
        get_num("impurity_fifth_dbc", c.impurity.fifth_dbc);
        get("impurity_bits", c.impurity.bits);
        get_num("snr_db", c.snr_db);
        get_num("alpha_d", c.alpha_d);
        if (j.contains("delta_source")) {
            std::string s = j.at("delta_source").get<std::string>();
            if (s == "fixed")
                c.delta_source = DeltaSource::fixed;
            else if (s == "normal")
                c.delta_source = DeltaSource::normal;
            else
                throw ConfigError("delta_source must be 'fixed' or 'normal'");
        }
        get_num("delta", c.delta);
        get_num("delta_variance", c.delta_variance);
        if (j.contains("algorithm"))
            c.algorithm = parse_algorithm(j.at("algorithm").get<std::string>());
        get("wiener_samples", c.wiener_samples);
        get("sgd_samples", c.sgd_samples);
        if (j.contains("schedule"))
            c.schedule = StepSchedule::parse(j.at("schedule").get<std::string>());
        get_num("schedule_alpha_ratio", c.schedule.alpha_ratio);
        get("max_iterations", c.max_iterations);
        get_num("tolerance", c.tolerance);
        get("strict_rank", c.strict_rank);
        get_num("divergence_guard", c.divergence_guard);
        get_num("eval_frequency", c.eval_frequency);
        get_num("eval_amplitude", c.eval_amplitude);
        get_num("eval_snr_db", c.eval_snr_db);
        get("n_fft", c.n_fft);
        if (j.contains("window")) {
            std::string s = j.at("window").get<std::string>();
            if (s == "rectangular")
                c.window = Window::rectangular;
            else if (s == "blackman-harris")
                c.window = Window::blackman_harris;
            else
                throw ConfigError("window must be 'rectangular' or 'blackman-harris'");
        }
        get("seed", c.seed);
        get("threads", c.threads);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config has a field of the wrong type: ") + e.what());
    }
    c.validate();
    return c;
}

std::string config_digest(const ExperimentConfig& c)
{
    // FNV-1a over the canonical serialization; thread count is not part of it.
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : config_to_json(c)) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

Member make_member(const ExperimentConfig& c, std::size_t id)
{
    Member m;
    m.id = id;
    m.seed = child_seed(c.seed, id);
    std::vector<StageSpec> stages(c.stages, redundant_stage(c.stage_levels, c.stage_gain));
    std::optional<StageSpec> flash;
    if (c.flash_bits > 0)
        flash = flash_stage(c.flash_bits);
    m.adc = build_adc(stages, flash, c.mismatch, make_engine(m.seed, Stream::mismatch)(), c.resolution_bits);

    double delta = c.delta;
    if (c.delta_source == DeltaSource::normal) {
        auto rng = make_engine(m.seed, Stream::delta);
        delta = std::normal_distribution<double>(0.0, std::sqrt(c.delta_variance))(rng);
    }
    m.path.alpha_d = c.alpha_d;
    m.path.alpha_a = c.alpha_d + delta;
    m.path.snr_db = c.snr_db;
    m.path.validate();
    return m;
}

std::vector<double> calibration_signal(const ExperimentConfig& c, std::uint64_t member_seed, std::size_t n)
{
    auto rng = make_engine(member_seed, Stream::cal_phase);
    std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
    std::vector<ToneSpec> tones;
    if (c.cal_signal == CalSignal::tone) {
        tones.push_back({2.0 * std::numbers::pi * c.cal_frequency, c.cal_amplitude, phase(rng)});
    } else {
        double a = c.cal_amplitude / static_cast<double>(c.two_tone_omegas.size());
        for (double w : c.two_tone_omegas)
            tones.push_back({w, a, phase(rng)});
    }
    return gen_impure_two_tone(tones, c.impurity, n);
}

ExperimentOutput run_experiment(const ExperimentConfig& config)
{
    config.validate();
    const std::string digest = config_digest(config);
    ExperimentOutput out;
    out.rows.resize(config.population);
    parallel_for(config.population, config.threads, [&](std::size_t id) {
        out.rows[id] = with_context(id, [&] {
            Member m = make_member(config, id);
            return calibrate_member(config, m, digest);
        });
    });
    return out;
}

ExperimentOutput run_sweep(SweepKind kind, const ExperimentConfig& config, const std::vector<double>& grid,
                           const std::vector<Algorithm>& algorithms)
{
    if (grid.empty())
        throw ConfigError("sweep grid is empty");
    ExperimentOutput out;

    if (kind == SweepKind::convergence) {
        config.validate();
        std::vector<std::size_t> checkpoints;
        for (double g : grid) {
            if (!(g >= 0.0) || g != std::floor(g))
                throw ConfigError("convergence checkpoints must be non-negative integers");
            checkpoints.push_back(static_cast<std::size_t>(g));
        }
        std::sort(checkpoints.begin(), checkpoints.end());
        checkpoints.erase(std::unique(checkpoints.begin(), checkpoints.end()), checkpoints.end());
        ExperimentConfig c = config;
        c.algorithm = Algorithm::blhec_sgd;
        const std::string digest = config_digest(c);
        std::vector<std::vector<ResultRow>> rows(c.population);
        std::vector<std::vector<TraceRow>> trace(c.population);
        parallel_for(c.population, c.threads, [&](std::size_t id) {
            with_context(id, [&] {
                converge_member(c, make_member(c, id), digest, checkpoints, rows[id], trace[id]);
                return 0;
            });
        });
        // checkpoint-major order keeps each grid point's rows together
        for (std::size_t i = 0; i < checkpoints.size(); ++i)
            for (const auto& r : rows)
                out.rows.push_back(r[i]);
        for (const auto& t : trace)
            out.trace.insert(out.trace.end(), t.begin(), t.end());
        return out;
    }

    if (algorithms.empty())
        throw ConfigError("sweep needs at least one algorithm");
    for (double g : grid) {
        for (Algorithm a : algorithms) {
            ExperimentConfig c = config;
            c.algorithm = a;
            switch (kind) {
            case SweepKind::alpha:
                c.alpha_d = g;
                c.delta_source = DeltaSource::fixed;
                c.delta = 0.0;
                break;
            case SweepKind::snr:
                c.snr_db = g;
                break;
            case SweepKind::delta:
                c.delta_source = DeltaSource::fixed;
                c.delta = g;
                break;
            default:
                throw ConfigError("unsupported sweep kind");
            }
            ExperimentOutput part = run_experiment(c);
            for (auto& r : part.rows) {
                r.sweep = kind;
                r.grid_value = g;
                out.rows.push_back(r);
            }
        }
    }
    return out;
}

std::vector<AggregateRow> aggregate(const std::vector<ResultRow>& rows)
{
    struct Group {
        AggregateRow head;
        std::vector<double> pre_sfdr, post_sfdr, pre_sndr, post_sndr;
    };
    std::vector<Group> groups;
    for (const auto& r : rows) {
        auto it = std::find_if(groups.begin(), groups.end(), [&](const Group& g) {
            bool same_grid = std::isnan(g.head.grid_value) ? std::isnan(r.grid_value)
                                                           : g.head.grid_value == r.grid_value;
            return g.head.sweep == r.sweep && same_grid && g.head.algorithm == r.algorithm;
        });
        if (it == groups.end()) {
            Group g;
            g.head.sweep = r.sweep;
            g.head.grid_value = r.grid_value;
            g.head.algorithm = r.algorithm;
            groups.push_back(g);
            it = groups.end() - 1;
        }
        it->pre_sfdr.push_back(r.pre_sfdr);
        it->post_sfdr.push_back(r.post_sfdr);
        it->pre_sndr.push_back(r.pre_sndr);
        it->post_sndr.push_back(r.post_sndr);
    }
    std::vector<AggregateRow> out;
    for (auto& g : groups) {
        g.head.count = g.post_sfdr.size();
        g.head.pre_sfdr = stat_of(g.pre_sfdr);
        g.head.post_sfdr = stat_of(g.post_sfdr);
        g.head.pre_sndr = stat_of(g.pre_sndr);
        g.head.post_sndr = stat_of(g.post_sndr);
        out.push_back(g.head);
    }
    return out;
}

std::string results_csv(const std::vector<ResultRow>& rows)
{
    std::string s = std::string(kResultsSchema) + "\n";
    s += "adc_id,seed,config_digest,sweep,grid_value,algorithm,samples,pre_sndr_db,post_sndr_db,"
         "pre_sfdr_db,post_sfdr_db,theta_alpha,delta,iterations,rank\n";
    for (const auto& r : rows) {
        s += std::to_string(r.adc_id) + ',' + std::to_string(r.seed) + ',' + r.digest + ',' + to_string(r.sweep) +
             ',' + format(r.grid_value) + ',' + to_string(r.algorithm) + ',' + std::to_string(r.samples) + ',' +
             format(r.pre_sndr) + ',' + format(r.post_sndr) + ',' + format(r.pre_sfdr) + ',' +
             format(r.post_sfdr) + ',' + format(r.theta_alpha) + ',' + format(r.delta) + ',' +
             std::to_string(r.iterations) + ',' + std::to_string(r.rank) + '\n';
    }
    return s;
}

std::string aggregate_csv(const std::vector<AggregateRow>& rows)
{
    std::string s = std::string(kAggregateSchema) + "\n";
    s += "sweep,grid_value,algorithm,count";
    for (const char* m : {"pre_sfdr", "post_sfdr", "pre_sndr", "post_sndr"})
        for (const char* k : {"mean", "min", "max"})
            s += std::string(",") + m + "_" + k;
    s += '\n';
    for (const auto& r : rows) {
        s += to_string(r.sweep) + ',' + format(r.grid_value) + ',' + to_string(r.algorithm) + ',' +
             std::to_string(r.count);
        for (const Stat* st : {&r.pre_sfdr, &r.post_sfdr, &r.pre_sndr, &r.post_sndr})
            s += ',' + format(st->mean) + ',' + format(st->min) + ',' + format(st->max);
        s += '\n';
    }
    return s;
}

std::string trace_csv(const std::vector<TraceRow>& rows)
{
    std::string s = std::string(kTraceSchema) + "\n";
    s += "adc_id,k,error_norm,theta_alpha\n";
    for (const auto& r : rows)
        s += std::to_string(r.adc_id) + ',' + std::to_string(r.k) + ',' + format(r.error_norm) + ',' +
             format(r.theta_alpha) + '\n';
    return s;
}

std::string timing_csv(const std::vector<ResultRow>& rows)
{
    std::string s = "adc_id,grid_value,algorithm,wall_clock_s\n";
    for (const auto& r : rows)
        s += std::to_string(r.adc_id) + ',' + format(r.grid_value) + ',' + to_string(r.algorithm) + ',' +
             format(r.wall_clock) + '\n';
    return s;
}

void write_text(const std::filesystem::path& path, const std::string& text)
{
    std::ofstream f(path, std::ios::binary);
    if (!f)
        throw std::runtime_error("cannot open " + path.string() + " for writing");
    f << text;
    if (!f)
        throw std::runtime_error("failed writing " + path.string());
}

void emit_outputs(const std::filesystem::path& dir, const ExperimentConfig& config, const ExperimentOutput& out)
{
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec)
        throw std::runtime_error("cannot create " + dir.string() + ": " + ec.message());
    write_text(dir / "results.csv", results_csv(out.rows));
    write_text(dir / "aggregate.csv", aggregate_csv(aggregate(out.rows)));
    if (!out.trace.empty())
        write_text(dir / "trace.csv", trace_csv(out.trace));
    write_text(dir / "timing.csv", timing_csv(out.rows));
    write_text(dir / "config.json", config_to_json(config));
}

} // namespace hec
