#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "hec/correction.hpp"
#include "hec/signal.hpp"

namespace hec {

// Raw pair buffers plus the plain HEC moments at theta_alpha = 0.
//   dh = h_ax - c h_x,  dy = y_ax - c y_x,  c = alpha_d + theta_alpha
struct PairStatistics {
    CorrectionLayout layout;
    double alpha_d = 0.0;
    std::size_t n = 0;
    Eigen::MatrixXd h_x;  // n x D
    Eigen::MatrixXd h_ax; // n x D
    Eigen::VectorXd y_x;
    Eigen::VectorXd y_ax;
    Eigen::MatrixXd R_hh;
    Eigen::VectorXd r_hy;

    // R_hh(theta_alpha), r_hy(theta_alpha)
    std::pair<Eigen::MatrixXd, Eigen::VectorXd> moments(double theta_alpha) const;

    // r_yy(theta_nl) = E[u1^2], r_yya(theta_nl) = E[u1 u2] with u = y + h^T theta_nl
    double r_yy(const ParameterVector& theta_nl) const;
    double r_yya(const ParameterVector& theta_nl) const;

    // Empirical MSE of e = u2 - (alpha_d + theta_alpha) u1 and its standard error.
    std::pair<double, double> mse(const ParameterVector& theta_nl, double theta_alpha) const;
};

// Throws CoverageError if the first stage did not visit every code in the
// first n pairs (a constant input, for example).
PairStatistics accumulate_statistics(std::span<const SamplePair> pairs, const CorrectionLayout& layout,
                                     double alpha_d, std::size_t n);

struct SolveOptions {
    double max_condition = 1e12;
    bool strict_rank = false; // throw instead of solving on the excited subspace
};

struct SolveReport {
    int dimension = 0;
    int rank = 0;
    double condition = 0.0;
    bool minimum_norm = false;
};

// Solves R x = b for symmetric positive semi-definite R. Well-conditioned
// systems use a Cholesky factorization. Otherwise the minimum-norm solution on
// eigen-directions above R's largest eigenvalue / max_condition is returned
// and reported, or SingularMatrixError is thrown in strict mode.
Eigen::VectorXd solve_normal_equations(const Eigen::MatrixXd& R, const Eigen::VectorXd& b,
                                       const SolveOptions& options, SolveReport* report = nullptr);

struct WienerResult {
    ParameterVector theta;
    SolveReport report;
};

// theta_W = -R_hh^{-1} r_hy
WienerResult hec_wiener(const PairStatistics& stats, const SolveOptions& options = {});

struct BlhecOptions {
    int max_iterations = 500;
    double tolerance = 1e-7;
    SolveOptions solve;
};

struct BlhecResult {
    ParameterVector theta_nl;
    double theta_alpha = 0.0;
    std::vector<double> mse;        // entry 0 at the starting point, then one per iteration
    std::vector<double> mse_stderr;
    int iterations = 0;
    bool converged = false;
    SolveReport report;
    std::string diagnostic;
};

BlhecResult blhec_wiener(const PairStatistics& stats, const BlhecOptions& options = {});

// theta_NL,W(theta_alpha), the Wiener solution for a fixed theta_alpha.
WienerResult wiener_at(const PairStatistics& stats, double theta_alpha, const SolveOptions& options = {});

// J(theta_alpha, theta_NL,W(theta_alpha))
double profile_cost(const PairStatistics& stats, double theta_alpha, const SolveOptions& options = {});

// Piecewise-constant step sizes: (number of samples, mu_NL) per segment; the
// last segment's step size persists past the end.
struct StepSchedule {
    std::vector<std::pair<std::size_t, double>> segments;
    double alpha_ratio = 0.5;

    double mu_nl(std::size_t k) const;
    double mu_alpha(std::size_t k) const { return alpha_ratio * mu_nl(k); }
    std::size_t length() const;

    static StepSchedule constant(double mu_nl, std::size_t n = 1);
    // "mu:count,mu:count,..." where mu may be written as 2^-k
    static StepSchedule parse(const std::string& text);
    std::string str() const;
};

StepSchedule default_schedule();

struct CalibrationState {
    ParameterVector theta_nl;
    double theta_alpha = 0.0;
    double mu_nl = 0.0;
    double mu_alpha = 0.0;
    std::size_t k = 0;

    static CalibrationState zero(const CorrectionLayout& layout);
};

struct StepErrors {
    double e_alpha = 0.0; // apriori error of the theta_alpha update
    double e_nl = 0.0;    // apriori error of the theta_NL update
    double u_x = 0.0;     // calibrated unscaled output before the update
};

// Multiplication points of one update, for instrumented runs.
enum class StepPhase { output, alpha, regressor, nl, done };

namespace detail {

// Power-of-two step sizes become exponent shifts.
template <class T>
T scale_by(T x, double mu)
{
    using std::ldexp;
    int e = 0;
    if (std::frexp(mu, &e) == 0.5)
        return ldexp(x, e - 1);
    return x * T(mu);
}

template <class T, class Hook>
StepErrors sgd_update(std::span<T> theta, T& theta_alpha, const SelectionVector& h_x,
                      const SelectionVector& h_ax, double y_x, double y_ax, double alpha_d, double mu_nl,
                      double mu_alpha, std::span<T> dh, Hook&& hook)
{
    hook(StepPhase::output);
    T u1(y_x);
    T u2(y_ax);
    for (int k = 0; k < h_x.count; ++k)
        u1 = u1 + T(h_x.val[k]) * theta[h_x.pos[k]];
    for (int k = 0; k < h_ax.count; ++k)
        u2 = u2 + T(h_ax.val[k]) * theta[h_ax.pos[k]];

    hook(StepPhase::alpha);
    T e_alpha = u2 - (T(alpha_d) + theta_alpha) * u1;
    theta_alpha = theta_alpha + scale_by(u1 * e_alpha, mu_alpha);
    T c = T(alpha_d) + theta_alpha;
    T e_nl = u2 - c * u1;

    hook(StepPhase::regressor);
    for (auto& v : dh)
        v = T(0.0);
    for (int k = 0; k < h_ax.count; ++k)
        dh[h_ax.pos[k]] = dh[h_ax.pos[k]] + T(h_ax.val[k]);
    for (int k = 0; k < h_x.count; ++k)
        dh[h_x.pos[k]] = dh[h_x.pos[k]] - c * T(h_x.val[k]);

    hook(StepPhase::nl);
    T step = scale_by(e_nl, mu_nl);
    for (std::size_t j = 0; j < theta.size(); ++j)
        theta[j] = theta[j] - dh[j] * step;

    hook(StepPhase::done);
    return {static_cast<double>(e_alpha), static_cast<double>(e_nl), static_cast<double>(u1)};
}

} // namespace detail

// One alternating update: theta_alpha with the apriori error e_alpha, then
// theta_NL with e_NL recomputed from the fresh theta_alpha. Uses the step
// sizes stored in `state`.
StepErrors sgd_step(CalibrationState& state, const SamplePair& pair, const CorrectionLayout& layout,
                    double alpha_d);

// u2 - (alpha_d + theta_alpha) u1 for the current state, without updating.
double pair_error(const CalibrationState& state, const SamplePair& pair, const CorrectionLayout& layout,
                  double alpha_d);

struct SgdTracePoint {
    std::size_t k = 0;
    double error_norm = 0.0; // NaN without a reference
    double e_nl = 0.0;
    double theta_alpha = 0.0;
};

struct SgdOptions {
    const ParameterVector* reference = nullptr;
    double divergence_guard = 1.0;
    std::size_t log_stride = 0; // 0 disables the trace
};

struct SgdResult {
    CalibrationState state;
    std::vector<SgdTracePoint> trace;
};

// Runs the pairs in order, continuing from `start` (its k indexes the schedule).
SgdResult run_sgd(std::span<const SamplePair> pairs, const CorrectionLayout& layout, double alpha_d,
                  const StepSchedule& schedule, const SgdOptions& options = {},
                  std::optional<CalibrationState> start = std::nullopt);

struct StepBounds {
    double mu_alpha_max = 0.0;
    double mu_nl_max = 0.0;
    double max_regressor_norm2 = 0.0;
};

// mu_alpha <= 2 / y_max^2 and mu_NL <= 2 / max ||dh||^2 over the given pairs
// (dh formed with c = alpha_d).
StepBounds step_size_bounds(const CorrectionLayout& layout, double y_max, std::span<const SamplePair> pairs,
                            double alpha_d);

// Data-free cap on ||dh||^2 from the layout alone, given the largest code magnitude per stage.
double analytic_regressor_bound(const CorrectionLayout& layout, const std::vector<double>& max_code,
                                double alpha_d);

// ||h_ax - c h_x||^2
double regressor_norm2(const SelectionVector& h_x, const SelectionVector& h_ax, double c);

} // namespace hec
