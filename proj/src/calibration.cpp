#include "hec/calibration.hpp"

#include <algorithm>
#include <cstdio>
#include <limits>
#include <sstream>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "hec/errors.hpp"

namespace hec {

namespace {

bool finite(const Eigen::VectorXd& v)
{
    return v.allFinite();
}

void fill_row(Eigen::MatrixXd& m, Eigen::Index row, const SelectionVector& h)
{
    for (int k = 0; k < h.count; ++k)
        m(row, h.pos[k]) += h.val[k];
}

} // namespace

std::pair<Eigen::MatrixXd, Eigen::VectorXd> PairStatistics::moments(double theta_alpha) const
{
    const double c = alpha_d + theta_alpha;
    Eigen::MatrixXd dh = h_ax - c * h_x;
    Eigen::VectorXd dy = y_ax - c * y_x;
    const double inv_n = 1.0 / static_cast<double>(n);
    Eigen::MatrixXd R = Eigen::MatrixXd::Zero(dh.cols(), dh.cols());
    R.selfadjointView<Eigen::Lower>().rankUpdate(dh.transpose(), inv_n);
    R.triangularView<Eigen::StrictlyUpper>() = R.transpose();
    Eigen::VectorXd r = dh.transpose() * dy * inv_n;
    return {std::move(R), std::move(r)};
}

double PairStatistics::r_yy(const ParameterVector& theta_nl) const
{
    Eigen::VectorXd u1 = y_x + h_x * theta_nl;
    return u1.squaredNorm() / static_cast<double>(n);
}

double PairStatistics::r_yya(const ParameterVector& theta_nl) const
{
    Eigen::VectorXd u1 = y_x + h_x * theta_nl;
    Eigen::VectorXd u2 = y_ax + h_ax * theta_nl;
    return u1.dot(u2) / static_cast<double>(n);
}

std::pair<double, double> PairStatistics::mse(const ParameterVector& theta_nl, double theta_alpha) const
{
    Eigen::VectorXd u1 = y_x + h_x * theta_nl;
    Eigen::VectorXd u2 = y_ax + h_ax * theta_nl;
    Eigen::ArrayXd e2 = (u2 - (alpha_d + theta_alpha) * u1).array().square();
    const double nn = static_cast<double>(n);
    double mean = e2.mean();
    double var = n > 1 ? (e2 - mean).square().sum() / (nn - 1.0) : 0.0;
    return {mean, std::sqrt(var / nn)};
}

PairStatistics accumulate_statistics(std::span<const SamplePair> pairs, const CorrectionLayout& layout,
                                     double alpha_d, std::size_t n)
{
    if (n < static_cast<std::size_t>(layout.dimension))
        throw ConfigError("need at least as many pairs as model parameters (" +
                          std::to_string(layout.dimension) + ")");
    if (pairs.size() < n)
        throw ConfigError("fewer pairs than requested for the statistics");

    PairStatistics s;
    s.layout = layout;
    s.alpha_d = alpha_d;
    s.n = n;
    const Eigen::Index D = layout.dimension;
    s.h_x = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), D);
    s.h_ax = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), D);
    s.y_x.resize(static_cast<Eigen::Index>(n));
    s.y_ax.resize(static_cast<Eigen::Index>(n));

    std::vector<std::size_t> visits(layout.levels[0], 0);
    for (std::size_t k = 0; k < n; ++k) {
        const SamplePair& p = pairs[k];
        auto row = static_cast<Eigen::Index>(k);
        fill_row(s.h_x, row, selection_vector(p.unscaled, layout));
        fill_row(s.h_ax, row, selection_vector(p.scaled, layout));
        s.y_x[row] = p.unscaled.output;
        s.y_ax[row] = p.scaled.output;
        ++visits[p.unscaled.index[0]];
        ++visits[p.scaled.index[0]];
    }

    std::string missing;
    for (std::size_t j = 0; j < visits.size(); ++j)
        if (visits[j] == 0)
            missing += (missing.empty() ? "" : ",") + std::to_string(j + 1);
    if (!missing.empty())
        throw CoverageError("R_hh is rank deficient: first stage never selected code(s) " + missing);

    auto [R, r] = s.moments(0.0);
    s.R_hh = std::move(R);
    s.r_hy = std::move(r);
    return s;
}

Eigen::VectorXd solve_normal_equations(const Eigen::MatrixXd& R, const Eigen::VectorXd& b,
                                       const SolveOptions& options, SolveReport* report)
{
    const Eigen::Index D = R.rows();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(R);
    if (eig.info() != Eigen::Success)
        throw NumericalError("eigen-decomposition of R_hh failed");
    const Eigen::VectorXd& lambda = eig.eigenvalues(); // ascending
    const double top = lambda[D - 1];
    if (!(top > 0.0) || !std::isfinite(top))
        throw SingularMatrixError("R_hh is zero or not finite", std::numeric_limits<double>::infinity());
    const double condition = lambda[0] > 0.0 ? top / lambda[0] : std::numeric_limits<double>::infinity();
    const double floor = top / options.max_condition;

    SolveReport rep;
    rep.dimension = static_cast<int>(D);
    rep.condition = condition;
    rep.rank = static_cast<int>((lambda.array() > floor).count());

    Eigen::VectorXd x;
    if (condition <= options.max_condition) {
        Eigen::LLT<Eigen::MatrixXd> llt(R);
        if (llt.info() != Eigen::Success)
            throw SingularMatrixError("Cholesky factorization of R_hh failed", condition);
        x = llt.solve(b);
    } else {
        if (options.strict_rank) {
            char buf[160];
            std::snprintf(buf, sizeof buf, "R_hh is singular: condition %.3g, rank %d of %d", condition,
                          rep.rank, rep.dimension);
            throw SingularMatrixError(buf, condition);
        }
        const Eigen::MatrixXd& V = eig.eigenvectors();
        Eigen::VectorXd coeff = V.transpose() * b;
        for (Eigen::Index j = 0; j < D; ++j)
            coeff[j] = lambda[j] > floor ? coeff[j] / lambda[j] : 0.0;
        x = V * coeff;
        rep.minimum_norm = true;
    }
    if (!finite(x))
        throw NumericalError("normal-equation solution is not finite");
    if (report)
        *report = rep;
    return x;
}

WienerResult hec_wiener(const PairStatistics& stats, const SolveOptions& options)
{
    WienerResult w;
    w.theta = -solve_normal_equations(stats.R_hh, stats.r_hy, options, &w.report);
    return w;
}

WienerResult wiener_at(const PairStatistics& stats, double theta_alpha, const SolveOptions& options)
{
    auto [R, r] = stats.moments(theta_alpha);
    WienerResult w;
    w.theta = -solve_normal_equations(R, r, options, &w.report);
    return w;
}

double profile_cost(const PairStatistics& stats, double theta_alpha, const SolveOptions& options)
{
    return stats.mse(wiener_at(stats, theta_alpha, options).theta, theta_alpha).first;
}

BlhecResult blhec_wiener(const PairStatistics& stats, const BlhecOptions& options)
{
    if (options.max_iterations < 1)
        throw ConfigError("BL-HEC needs at least one iteration");
    BlhecResult res;
    res.theta_nl = ParameterVector::Zero(stats.layout.dimension);
    res.theta_alpha = 0.0;
    auto [j0, se0] = stats.mse(res.theta_nl, res.theta_alpha);
    res.mse.push_back(j0);
    res.mse_stderr.push_back(se0);

    for (int m = 1; m <= options.max_iterations; ++m) {
        double ryy = stats.r_yy(res.theta_nl);
        double theta_alpha = stats.r_yya(res.theta_nl) / ryy - stats.alpha_d;
        if (!std::isfinite(theta_alpha))
            throw NumericalError("theta_alpha became non-finite in iteration " + std::to_string(m));

        WienerResult w;
        try {
            w = wiener_at(stats, theta_alpha, options.solve);
        } catch (const SingularMatrixError& e) {
            // Keep the previous theta_NL and stop.
            res.diagnostic = std::string("iteration ") + std::to_string(m) + ": " + e.what();
            break;
        }
        double step = std::abs(theta_alpha - res.theta_alpha);
        res.theta_alpha = theta_alpha;
        res.theta_nl = std::move(w.theta);
        res.report = w.report;
        res.iterations = m;
        auto [jm, sem] = stats.mse(res.theta_nl, res.theta_alpha);
        res.mse.push_back(jm);
        res.mse_stderr.push_back(sem);
        if (step < options.tolerance) {
            res.converged = true;
            break;
        }
    }
    return res;
}

double StepSchedule::mu_nl(std::size_t k) const
{
    if (segments.empty())
        return 0.0;
    std::size_t end = 0;
    for (const auto& [count, mu] : segments) {
        end += count;
        if (k < end)
            return mu;
    }
    return segments.back().second;
}

std::size_t StepSchedule::length() const
{
    std::size_t n = 0;
    for (const auto& s : segments)
        n += s.first;
    return n;
}

StepSchedule StepSchedule::constant(double mu_nl, std::size_t n)
{
    StepSchedule s;
    s.segments.push_back({n, mu_nl});
    return s;
}

StepSchedule StepSchedule::parse(const std::string& text)
{
    StepSchedule s;
    std::stringstream in(text);
    std::string item;
    while (std::getline(in, item, ',')) {
        auto colon = item.find(':');
        if (colon == std::string::npos)
            throw ConfigError("schedule entries are written mu:count, got '" + item + "'");
        std::string mu_text = item.substr(0, colon);
        std::string count_text = item.substr(colon + 1);
        double mu = 0.0;
        try {
            if (mu_text.rfind("2^", 0) == 0)
                mu = std::ldexp(1.0, std::stoi(mu_text.substr(2)));
            else
                mu = std::stod(mu_text);
            long long count = std::stoll(count_text);
            if (count <= 0)
                throw ConfigError("schedule segment length must be positive");
            if (!(mu >= 0.0) || !std::isfinite(mu))
                throw ConfigError("schedule step size must be finite and non-negative");
            s.segments.push_back({static_cast<std::size_t>(count), mu});
        } catch (const std::logic_error&) {
            throw ConfigError("cannot parse schedule entry '" + item + "'");
        }
    }
    if (s.segments.empty())
        throw ConfigError("empty step-size schedule");
    return s;
}

std::string StepSchedule::str() const
{
    std::string out;
    for (const auto& [count, mu] : segments) {
        if (!out.empty())
            out += ',';
        int e = 0;
        if (mu > 0.0 && std::frexp(mu, &e) == 0.5) {
            out += "2^" + std::to_string(e - 1);
        } else {
            char buf[40];
            std::snprintf(buf, sizeof buf, "%.17g", mu);
            out += buf;
        }
        out += ':' + std::to_string(count);
    }
    return out;
}

StepSchedule default_schedule()
{
    StepSchedule s;
    s.segments = {{24000, 0x1p-2}, {12000, 0x1p-4}, {12000, 0x1p-6}};
    return s;
}

CalibrationState CalibrationState::zero(const CorrectionLayout& layout)
{
    CalibrationState s;
    s.theta_nl = ParameterVector::Zero(layout.dimension);
    return s;
}

StepErrors sgd_step(CalibrationState& state, const SamplePair& pair, const CorrectionLayout& layout,
                    double alpha_d)
{
    if (state.theta_nl.size() != layout.dimension)
        throw std::invalid_argument("state and layout differ in dimension");
    SelectionVector hx = selection_vector(pair.unscaled, layout);
    SelectionVector hax = selection_vector(pair.scaled, layout);
    Eigen::VectorXd dh(layout.dimension);
    StepErrors e = detail::sgd_update<double>(
        std::span<double>(state.theta_nl.data(), state.theta_nl.size()), state.theta_alpha, hx, hax,
        pair.unscaled.output, pair.scaled.output, alpha_d, state.mu_nl, state.mu_alpha,
        std::span<double>(dh.data(), dh.size()), [](StepPhase) {});
    ++state.k;
    return e;
}

double pair_error(const CalibrationState& state, const SamplePair& pair, const CorrectionLayout& layout,
                  double alpha_d)
{
    double u1 = apply_correction(pair.unscaled.output, selection_vector(pair.unscaled, layout), state.theta_nl);
    double u2 = apply_correction(pair.scaled.output, selection_vector(pair.scaled, layout), state.theta_nl);
    return u2 - (alpha_d + state.theta_alpha) * u1;
}

SgdResult run_sgd(std::span<const SamplePair> pairs, const CorrectionLayout& layout, double alpha_d,
                  const StepSchedule& schedule, const SgdOptions& options, std::optional<CalibrationState> start)
{
    SgdResult res;
    res.state = start ? std::move(*start) : CalibrationState::zero(layout);
    if (options.reference && options.reference->size() != layout.dimension)
        throw std::invalid_argument("reference solution and layout differ in dimension");

    auto log = [&](double e_nl) {
        SgdTracePoint p;
        p.k = res.state.k;
        p.error_norm = options.reference ? (res.state.theta_nl - *options.reference).norm()
                                         : std::numeric_limits<double>::quiet_NaN();
        p.e_nl = e_nl;
        p.theta_alpha = res.state.theta_alpha;
        res.trace.push_back(p);
    };
    if (options.log_stride > 0 && res.state.k == 0)
        log(0.0);

    for (const SamplePair& pair : pairs) {
        res.state.mu_nl = schedule.mu_nl(res.state.k);
        res.state.mu_alpha = schedule.mu_alpha(res.state.k);
        StepErrors e = sgd_step(res.state, pair, layout, alpha_d);
        if (!(res.state.theta_nl.lpNorm<Eigen::Infinity>() <= options.divergence_guard) ||
            !std::isfinite(res.state.theta_alpha))
            throw DivergenceError("SGD diverged at sample " + std::to_string(res.state.k) +
                                  ": |theta_NL| exceeds the guard");
        if (options.log_stride > 0 && res.state.k % options.log_stride == 0)
            log(e.e_nl);
    }
    return res;
}

double regressor_norm2(const SelectionVector& h_x, const SelectionVector& h_ax, double c)
{
    Eigen::VectorXd dh = h_ax.dense();
    h_x.add_to(dh, -c);
    return dh.squaredNorm();
}

StepBounds step_size_bounds(const CorrectionLayout& layout, double y_max, std::span<const SamplePair> pairs,
                            double alpha_d)
{
    if (!(y_max > 0.0))
        throw ConfigError("y_max must be positive");
    StepBounds b;
    b.mu_alpha_max = 2.0 / (y_max * y_max);
    for (const SamplePair& p : pairs) {
        double n2 = regressor_norm2(selection_vector(p.unscaled, layout), selection_vector(p.scaled, layout),
                                    alpha_d);
        b.max_regressor_norm2 = std::max(b.max_regressor_norm2, n2);
    }
    if (b.max_regressor_norm2 == 0.0)
        b.max_regressor_norm2 = analytic_regressor_bound(layout, std::vector<double>(layout.q, 1.0), alpha_d);
    b.mu_nl_max = 2.0 / b.max_regressor_norm2;
    return b;
}

double analytic_regressor_bound(const CorrectionLayout& layout, const std::vector<double>& max_code,
                                double alpha_d)
{
    if (static_cast<int>(max_code.size()) != layout.q)
        throw std::invalid_argument("need one code bound per calibrated stage");
    double total = 0.0;
    double prefix = 1.0;
    std::vector<double> prefixes{1.0};
    for (int i = 0; i < layout.q; ++i) {
        double cum = 0.0;
        for (int l = 0; l <= i; ++l)
            cum += max_code[l] * prefixes[i - l];
        total += std::pow((1.0 + std::abs(alpha_d)) * cum, 2);
        total += 1.0 + alpha_d * alpha_d; // two indicators
        prefix *= layout.gains[i];
        prefixes.push_back(prefix);
    }
    return total;
}

} // namespace hec
