// Acceptance suite: one PASS/FAIL line per criterion, CSVs under --out.
//
// The whole suite runs twice, the second time with a different thread
// count, and criterion 10 compares the CSV bytes of both runs.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <Eigen/Dense>

#include "hec/errors.hpp"
#include "hec/harness.hpp"
#include "hec/seed.hpp"
#include "oracles.hpp"

using namespace hec;

namespace {

struct Verdict {
    int id = 0;
    std::string name;
    bool pass = false;
    std::string detail;
};

struct Suite {
    std::vector<Verdict> verdicts;
    std::map<std::string, std::string> files; // name -> CSV text
};

std::string fmt(const char* f, auto... args)
{
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

bool within(double v, double target, double tol)
{
    return std::abs(v - target) <= tol;
}

ExperimentConfig base(std::uint64_t seed, unsigned threads)
{
    ExperimentConfig c;
    c.seed = seed;
    c.threads = threads;
    return c;
}

void keep(Suite& s, const std::string& stem, const ExperimentOutput& out)
{
    s.files[stem + "_results.csv"] = results_csv(out.rows);
    s.files[stem + "_aggregate.csv"] = aggregate_csv(aggregate(out.rows));
    if (!out.trace.empty())
        s.files[stem + "_trace.csv"] = trace_csv(out.trace);
}

AggregateRow only(const ExperimentOutput& out)
{
    auto a = aggregate(out.rows);
    if (a.size() != 1)
        throw std::logic_error("expected a single aggregate group");
    return a[0];
}

// 1. population means with the default configuration
Verdict default_population(Suite& s, std::uint64_t seed, unsigned threads)
{
    ExperimentConfig w = base(seed, threads);
    w.algorithm = Algorithm::blhec_wiener;
    ExperimentOutput ow = run_experiment(w);
    keep(s, "c1_blhec_wiener", ow);

    ExperimentConfig g = base(seed, threads);
    g.algorithm = Algorithm::blhec_sgd;
    ExperimentOutput og = run_experiment(g);
    keep(s, "c1_blhec_sgd", og);

    AggregateRow a = only(ow), b = only(og);
    bool ok = within(a.post_sfdr.mean, 94.23, 2.0) && within(a.post_sndr.mean, 76.68, 1.5) &&
              within(b.post_sfdr.mean, 91.85, 2.0) && within(b.post_sndr.mean, 76.1, 1.5);
    return {1, "default population reproduction", ok,
            fmt("BL-HEC Wiener SFDR %.2f (94.23+-2) SNDR %.2f (76.68+-1.5); SGD SFDR %.2f (91.85+-2) "
                "SNDR %.2f (76.1+-1.5); uncalibrated SFDR %.2f SNDR %.2f",
                a.post_sfdr.mean, a.post_sndr.mean, b.post_sfdr.mean, b.post_sndr.mean, a.pre_sfdr.mean,
                a.pre_sndr.mean)};
}

// 2. first three stages ideal, delta = 0
Verdict excluded_stages(Suite& s, std::uint64_t seed, unsigned threads)
{
    ExperimentConfig c = base(seed, threads);
    c.algorithm = Algorithm::hec_wiener;
    c.mismatch.ideal_leading_stages = 3;
    c.delta_source = DeltaSource::fixed;
    c.delta = 0.0;
    c.snr_db = std::numeric_limits<double>::infinity();
    ExperimentOutput out = run_experiment(c);
    keep(s, "c2_excluded_stages", out);
    AggregateRow a = only(out);
    bool ok = within(a.pre_sndr.mean, 76.8, 1.0) && within(a.pre_sfdr.mean, 97.7, 2.0) &&
              within(a.post_sndr.mean, 77.4, 1.0) && within(a.post_sfdr.mean, 98.3, 2.0);
    return {2, "ideal leading stages, 3 stages", ok,
            fmt("uncal SNDR %.2f (76.8+-1) SFDR %.2f (97.7+-2); cal SNDR %.2f (77.4+-1) SFDR %.2f (98.3+-2)",
                a.pre_sndr.mean, a.pre_sfdr.mean, a.post_sndr.mean, a.post_sfdr.mean)};
}

// 3. delta sweep
Verdict delta_sweep(Suite& s, std::uint64_t seed, unsigned threads)
{
    const std::vector<double> grid{-5e-3, -2.5e-3, 0.0, 2.5e-3, 5e-3};
    ExperimentOutput out =
        run_sweep(SweepKind::delta, base(seed, threads), grid, {Algorithm::hec_wiener, Algorithm::blhec_wiener});
    keep(s, "c3_delta_sweep", out);
    std::map<double, double> hec, bl;
    for (const auto& a : aggregate(out.rows))
        (a.algorithm == Algorithm::hec_wiener ? hec : bl)[a.grid_value] = a.post_sfdr.mean;
    double lo = INFINITY, hi = -INFINITY;
    for (auto [g, v] : bl) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    double drop_neg = hec[0.0] - hec[-5e-3];
    double drop_pos = hec[0.0] - hec[5e-3];
    bool ok = drop_neg >= 20.0 && drop_pos >= 20.0 && hi - lo <= 2.0;
    return {3, "delta sweep dichotomy", ok,
            fmt("HEC SFDR %.2f at 0, drops %.2f / %.2f dB at -/+5e-3 (>= 20); BL-HEC spread %.2f dB "
                "(%.2f..%.2f, <= 2)",
                hec[0.0], drop_neg, drop_pos, hi - lo, lo, hi)};
}

// 4. alpha trend
Verdict alpha_trend(Suite& s, std::uint64_t seed, unsigned threads)
{
    const double a0 = 0.25, a1 = std::numbers::sqrt2 / 2;
    ExperimentOutput out = run_sweep(SweepKind::alpha, base(seed, threads), {0.1, a0, 0.5, a1, 0.9},
                                     {Algorithm::hec_wiener});
    keep(s, "c4_alpha_sweep", out);
    std::map<double, double> sfdr;
    for (const auto& a : aggregate(out.rows))
        sfdr[a.grid_value] = a.post_sfdr.mean;
    double gap = sfdr[a1] - sfdr[a0];
    return {4, "alpha trend", gap >= 3.0,
            fmt("HEC SFDR %.2f at alpha 0.25 vs %.2f at 1/sqrt2: %.2f dB lower (>= 3)", sfdr[a0], sfdr[a1], gap)};
}

// 5. theta_alpha recovery on noiseless toys, every stage calibrated. The
// verdict uses toys whose residue is read out exactly; the same toys with a
// 3-bit flash are reported alongside, their flash quantization biases
// theta_alpha by a few 1e-4.
Verdict theta_alpha_recovery(Suite& s, std::uint64_t seed)
{
    std::string csv = "# hec-acceptance-theta-alpha v2\ninstance,delta,backend,theta_alpha,abs_error,iterations\n";
    double worst = 0.0, worst_flash = 0.0;
    bool converged = true;
    int n = 0;
    for (double delta : {-1e-2, -1e-3, 1e-3, 1e-2}) {
        for (int i = 0; i < 10; ++i) {
            std::uint64_t cs = child_seed(seed ^ 0x5a5a, static_cast<std::uint64_t>(n));
            AdcInstance with_flash = build_adc(std::vector<StageSpec>(3, redundant_stage(7, 4.0)), default_flash(),
                                               MismatchConfig{}, make_engine(cs, Stream::mismatch)());
            PathConfig p;
            p.alpha_a = p.alpha_d + delta;
            auto rng = make_engine(cs, Stream::cal_phase);
            double phase = std::uniform_real_distribution<double>(0.0, 2.0 * std::numbers::pi)(rng);
            auto x = gen_tones({{2.0 * std::numbers::pi * 0.1077, 1.0, phase}}, 2000);
            for (bool exact : {true, false}) {
                AdcInstance adc = exact ? oracle::exact_backend(with_flash) : with_flash;
                auto pairs = make_pairs(adc, x, p, 0);
                CorrectionLayout l = CorrectionLayout::for_adc(adc, 3);
                BlhecResult b = blhec_wiener(accumulate_statistics(pairs, l, p.alpha_d, pairs.size()));
                double err = std::abs(b.theta_alpha - delta);
                if (exact) {
                    worst = std::max(worst, err);
                    converged = converged && b.converged;
                } else {
                    worst_flash = std::max(worst_flash, err);
                }
                csv += fmt("%d,%.12g,%s,%.12g,%.12g,%d\n", n, delta, exact ? "exact" : "flash", b.theta_alpha, err,
                           b.iterations);
            }
            ++n;
        }
    }
    s.files["c5_theta_alpha.csv"] = csv;
    return {5, "theta_alpha recovery", worst <= 1e-4 && converged,
            fmt("%d toys, worst |theta_alpha - delta| = %.3g (<= 1e-4)%s; with a 3-bit flash back-end %.3g", n,
                worst, converged ? "" : ", not all converged", worst_flash)};
}

// 6. HEC Wiener vs dense least squares of the HEC cost on an exhaustive ramp
Verdict oracle_equivalence(Suite& s, std::uint64_t seed)
{
    std::string csv = "# hec-acceptance-oracle v1\ninstance,dimension,relative_difference\n";
    double worst = 0.0;
    const double alpha = std::numbers::sqrt2 / 2;
    for (int i = 0; i < 5; ++i) {
        AdcInstance adc =
            oracle::exact_backend(oracle::toy_adc(2, 3, 2.0, 0, 0.03, 0.04, child_seed(seed ^ 0x6b6b, i)));
        CorrectionLayout l = CorrectionLayout::for_adc(adc, 2);
        // fine enough that every pair of quantization cells is visited
        const int n = 20001;
        std::vector<double> x(n);
        for (int k = 0; k < n; ++k)
            x[k] = -1.0 + 2.0 * k / (n - 1);
        PathConfig p;
        p.alpha_a = alpha;
        p.alpha_d = alpha;
        auto pairs = make_pairs(adc, x, p, 0);
        WienerResult w = hec_wiener(accumulate_statistics(pairs, l, alpha, pairs.size()), SolveOptions{1e12, true});

        Eigen::MatrixXd dH(n, l.dimension);
        Eigen::VectorXd dy(n);
        for (int k = 0; k < n; ++k) {
            oracle::Trace a = oracle::pipeline(adc, x[k]);
            oracle::Trace b = oracle::pipeline(adc, alpha * x[k]);
            dH.row(k) = oracle::dense_h(b, l) - alpha * oracle::dense_h(a, l);
            dy[k] = b.y - alpha * a.y;
        }
        Eigen::VectorXd ls = dH.colPivHouseholderQr().solve(-dy);
        double rel = (w.theta - ls).norm() / ls.norm();
        worst = std::max(worst, rel);
        csv += fmt("%d,%d,%.6g\n", i, l.dimension, rel);
    }
    s.files["c6_oracle.csv"] = csv;
    return {6, "oracle equivalence", worst <= 1e-9,
            fmt("5 two-stage toys, worst relative difference %.3g (<= 1e-9)", worst)};
}

// 7. monotone alternation over the default population
Verdict monotone_alternation(Suite& s, std::uint64_t seed)
{
    ExperimentConfig c = base(seed, 1);
    std::string csv = "# hec-acceptance-mse v1\nadc_id,iteration,mse,stderr\n";
    int increases = 0, hard = 0, iterations = 0;
    for (std::size_t id = 0; id < 100; ++id) {
        Member m = make_member(c, id);
        auto x = calibration_signal(c, m.seed, c.wiener_samples);
        auto pairs = make_pairs(m.adc, x, m.path, make_engine(m.seed, Stream::cal_noise)());
        CorrectionLayout l = CorrectionLayout::for_adc(m.adc, c.q);
        BlhecResult b = blhec_wiener(accumulate_statistics(pairs, l, c.alpha_d, pairs.size()));
        for (std::size_t k = 0; k < b.mse.size(); ++k) {
            csv += fmt("%zu,%zu,%.12g,%.12g\n", id, k, b.mse[k], b.mse_stderr[k]);
            if (k == 0)
                continue;
            ++iterations;
            if (b.mse[k] > b.mse[k - 1])
                ++increases;
            if (b.mse[k] > b.mse[k - 1] + 3.0 * b.mse_stderr[k])
                ++hard;
        }
    }
    s.files["c7_mse.csv"] = csv;
    return {7, "monotone alternation", hard == 0,
            fmt("100 runs, %d iterations, %d increases of any size, %d beyond 3 standard errors", iterations,
                increases, hard)};
}

// 8. contraction of both SGD updates
Verdict contraction(Suite& s, std::uint64_t seed)
{
    ExperimentConfig c = base(seed, 1);
    std::mt19937_64 rng(splitmix64(seed ^ 0x8c8c));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);

    long checks = 0, bad_alpha = 0, bad_nl = 0;
    double worst_alpha = 0.0, worst_nl = 0.0;
    for (std::size_t id = 0; checks < 100000; ++id) {
        Member m = make_member(c, id);
        auto x = calibration_signal(c, m.seed, 5000);
        auto pairs = make_pairs(m.adc, x, m.path, make_engine(m.seed, Stream::cal_noise)());
        CorrectionLayout l = CorrectionLayout::for_adc(m.adc, c.q);
        for (const SamplePair& p : pairs) {
            if (checks == 100000)
                break;
            CalibrationState st = CalibrationState::zero(l);
            for (int k = 0; k < l.dimension; ++k)
                st.theta_nl[k] = 2e-3 * gauss(rng);
            st.theta_alpha = 1e-2 * gauss(rng);

            double u1 = apply_correction(p.unscaled.output, selection_vector(p.unscaled, l), st.theta_nl);
            if (u1 == 0.0)
                continue;
            st.mu_alpha = unit(rng) * 2.0 / (u1 * u1);

            // theta_alpha does not depend on mu_NL; find it first to get the NL bound
            CalibrationState probe = st;
            probe.mu_nl = 0.0;
            sgd_step(probe, p, l, c.alpha_d);
            double n2 = regressor_norm2(selection_vector(p.unscaled, l), selection_vector(p.scaled, l),
                                        c.alpha_d + probe.theta_alpha);
            st.mu_nl = unit(rng) * 2.0 / n2;

            CalibrationState after = st;
            StepErrors e = sgd_step(after, p, l, c.alpha_d);
            CalibrationState mid = st;
            mid.theta_alpha = after.theta_alpha;
            double post_alpha = pair_error(mid, p, l, c.alpha_d);
            double post_nl = pair_error(after, p, l, c.alpha_d);
            // a few ulps of slack for the re-evaluated errors
            const double slack = 1e-12;
            if (std::abs(post_alpha) > std::abs(e.e_alpha) * (1 + 1e-9) + slack)
                ++bad_alpha;
            if (std::abs(post_nl) > std::abs(e.e_nl) * (1 + 1e-9) + slack)
                ++bad_nl;
            if (e.e_alpha != 0.0)
                worst_alpha = std::max(worst_alpha, std::abs(post_alpha / e.e_alpha));
            if (e.e_nl != 0.0)
                worst_nl = std::max(worst_nl, std::abs(post_nl / e.e_nl));
            ++checks;
        }
    }

    // crafted sample: step sizes at 1.5x the bound
    Member m = make_member(c, 0);
    auto x = calibration_signal(c, m.seed, 10);
    auto pairs = make_pairs(m.adc, x, m.path, 1);
    CorrectionLayout l = CorrectionLayout::for_adc(m.adc, c.q);
    const SamplePair& p = pairs[3];
    CalibrationState st = CalibrationState::zero(l);
    st.theta_alpha = 0.01;
    double u1 = p.unscaled.output;
    st.mu_alpha = 1.5 * 2.0 / (u1 * u1);
    CalibrationState probe = st;
    sgd_step(probe, p, l, c.alpha_d);
    st.mu_nl = 1.5 * 2.0 /
               regressor_norm2(selection_vector(p.unscaled, l), selection_vector(p.scaled, l),
                               c.alpha_d + probe.theta_alpha);
    CalibrationState after = st;
    StepErrors e = sgd_step(after, p, l, c.alpha_d);
    CalibrationState mid = st;
    mid.theta_alpha = after.theta_alpha;
    double grow_alpha = std::abs(pair_error(mid, p, l, c.alpha_d)) / std::abs(e.e_alpha);
    double grow_nl = std::abs(pair_error(after, p, l, c.alpha_d)) / std::abs(e.e_nl);

    s.files["c8_contraction.csv"] =
        "# hec-acceptance-contraction v1\nchecks,violations_alpha,violations_nl,worst_ratio_alpha,worst_ratio_nl,"
        "crafted_ratio_alpha,crafted_ratio_nl\n" +
        fmt("%ld,%ld,%ld,%.12g,%.12g,%.12g,%.12g\n", checks, bad_alpha, bad_nl, worst_alpha, worst_nl, grow_alpha,
            grow_nl);
    bool ok = bad_alpha == 0 && bad_nl == 0 && grow_alpha > 1.0 && grow_nl > 1.0;
    return {8, "SGD contraction", ok,
            fmt("%ld checks, %ld + %ld violations, worst |post/prior| %.6f / %.6f; at 1.5x bound %.4f / %.4f (> 1)",
                checks, bad_alpha, bad_nl, worst_alpha, worst_nl, grow_alpha, grow_nl)};
}

// 9. multiplication count of one update
Verdict complexity(Suite& s, std::uint64_t seed)
{
    ExperimentConfig c = base(seed, 1);
    Member m = make_member(c, 0);
    auto x = calibration_signal(c, m.seed, 2000);
    auto pairs = make_pairs(m.adc, x, m.path, make_engine(m.seed, Stream::cal_noise)());
    CorrectionLayout l = CorrectionLayout::for_adc(m.adc, 3);
    long nl_min = 1 << 30, nl_max = 0, a_min = 1 << 30, a_max = 0;
    for (const auto& p : pairs) {
        oracle::PhaseCounts k = oracle::audit_step(l, p, c.alpha_d, 0x1p-4, 0x1p-5);
        nl_min = std::min(nl_min, k.nl);
        nl_max = std::max(nl_max, k.nl);
        a_min = std::min(a_min, k.alpha);
        a_max = std::max(a_max, k.alpha);
    }
    s.files["c9_complexity.csv"] = "# hec-acceptance-complexity v1\nq,dimension,nl_min,nl_max,alpha_min,alpha_max\n" +
                                   fmt("3,%d,%ld,%ld,%ld,%ld\n", l.dimension, nl_min, nl_max, a_min, a_max);
    bool ok = nl_min == 19 && nl_max == 19 && a_min == 3 && a_max == 3;
    return {9, "complexity audit", ok,
            fmt("theta_NL path %ld..%ld, theta_alpha path %ld..%ld multiplications over %zu updates (19 + 3)",
                nl_min, nl_max, a_min, a_max, pairs.size())};
}

template <class F>
Verdict guarded(int id, const char* name, F&& f)
{
    try {
        return f();
    } catch (const std::exception& e) {
        return {id, name, false, std::string("threw: ") + e.what()};
    }
}

Suite run_suite(std::uint64_t seed, unsigned threads)
{
    Suite s;
    s.verdicts.push_back(guarded(1, "default population reproduction", [&] { return default_population(s, seed, threads); }));
    s.verdicts.push_back(guarded(2, "ideal leading stages, 3 stages", [&] { return excluded_stages(s, seed, threads); }));
    s.verdicts.push_back(guarded(3, "delta sweep dichotomy", [&] { return delta_sweep(s, seed, threads); }));
    s.verdicts.push_back(guarded(4, "alpha trend", [&] { return alpha_trend(s, seed, threads); }));
    s.verdicts.push_back(guarded(5, "theta_alpha recovery", [&] { return theta_alpha_recovery(s, seed); }));
    s.verdicts.push_back(guarded(6, "oracle equivalence", [&] { return oracle_equivalence(s, seed); }));
    s.verdicts.push_back(guarded(7, "monotone alternation", [&] { return monotone_alternation(s, seed); }));
    s.verdicts.push_back(guarded(8, "SGD contraction", [&] { return contraction(s, seed); }));
    s.verdicts.push_back(guarded(9, "complexity audit", [&] { return complexity(s, seed); }));
    return s;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Acceptance suite"};
    std::uint64_t seed = 1;
    std::string out = "acceptance-out";
    unsigned threads = 0;
    app.add_option("--seed", seed, "Master seed")->capture_default_str();
    app.add_option("--out", out, "Directory for the CSV outputs")->capture_default_str();
    app.add_option("--threads", threads, "Worker threads of the first pass (0: all cores)");
    CLI11_PARSE(app, argc, argv);

    Suite first = run_suite(seed, threads);
    unsigned other = threads == 1 ? 3 : 1;
    Suite second = run_suite(seed, other);

    std::filesystem::create_directories(out);
    for (const auto& [name, text] : first.files)
        write_text(std::filesystem::path(out) / name, text);

    std::vector<std::string> differ;
    for (const auto& [name, text] : first.files) {
        auto it = second.files.find(name);
        if (it == second.files.end() || it->second != text)
            differ.push_back(name);
    }
    if (second.files.size() != first.files.size())
        differ.push_back("(file set)");
    for (std::size_t i = 0; i < first.verdicts.size(); ++i)
        if (first.verdicts[i].pass != second.verdicts[i].pass || first.verdicts[i].detail != second.verdicts[i].detail)
            differ.push_back("verdict " + std::to_string(i + 1));

    Verdict det{10, "determinism", differ.empty(),
                fmt("%zu CSV files, second pass with %u thread(s): %s", first.files.size(), other,
                    differ.empty() ? "byte-identical" : "differences found")};
    for (const auto& d : differ)
        det.detail += " " + d;
    first.verdicts.push_back(det);

    int failed = 0;
    for (const auto& v : first.verdicts) {
        std::printf("%s  %2d  %s: %s\n", v.pass ? "PASS" : "FAIL", v.id, v.name.c_str(), v.detail.c_str());
        failed += v.pass ? 0 : 1;
    }
    std::printf("%d of %zu criteria passed\n", static_cast<int>(first.verdicts.size()) - failed,
                first.verdicts.size());
    return failed == 0 ? 0 : 1;
}
