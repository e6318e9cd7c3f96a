#pragma once

#include <array>
#include <vector>

#include <Eigen/Core>

#include "hec/adc.hpp"

namespace hec {

using ParameterVector = Eigen::VectorXd;

// Sigma p_i - (q - 1)
int model_dimension(const std::vector<int>& levels);

// Position map of the reduced correction model for the first q stages.
// Stage i starts at offset[i]. Its first position holds the gain-weighted
// cumulative code and stands in for code 0; codes 1..p_i-2 follow. The top
// code of every stage but the last has no position.
struct CorrectionLayout {
    int q = 0;
    std::vector<int> levels;
    std::vector<double> gains; // ideal G_1..G_q
    std::vector<int> offset;
    int dimension = 0;

    static CorrectionLayout make(const std::vector<int>& levels, const std::vector<double>& gains);
    static CorrectionLayout for_adc(const AdcInstance& adc, int q);

    // -1 for the eliminated top code.
    int position(int stage, int code_index) const;
    int weighted_position(int stage) const { return offset[stage]; }
};

// Sparse regressor h: one weighted-code entry plus at most one indicator per stage.
struct SelectionVector {
    int dimension = 0;
    int count = 0;
    std::array<int, 2 * kMaxStages> pos{};
    std::array<double, 2 * kMaxStages> val{};

    double dot(const ParameterVector& theta) const;
    Eigen::VectorXd dense() const;
    void add_to(Eigen::VectorXd& target, double scale) const;
};

SelectionVector selection_vector(const ConversionRecord& record, const CorrectionLayout& layout);

// y + h^T theta
double apply_correction(double y, const SelectionVector& h, const ParameterVector& theta);

} // namespace hec
