#include "hec/correction.hpp"

#include <stdexcept>
#include <string>

#include "hec/errors.hpp"

namespace hec {

int model_dimension(const std::vector<int>& levels)
{
    if (levels.empty())
        throw ConfigError("correction model needs at least one stage");
    int d = 0;
    for (int p : levels)
        d += p;
    return d - static_cast<int>(levels.size() - 1);
}

CorrectionLayout CorrectionLayout::make(const std::vector<int>& levels, const std::vector<double>& gains)
{
    if (levels.empty() || levels.size() != gains.size())
        throw ConfigError("correction layout needs one level count and one gain per stage");
    if (static_cast<int>(levels.size()) > kMaxStages)
        throw ConfigError("correction layout has too many stages");
    CorrectionLayout l;
    l.q = static_cast<int>(levels.size());
    l.levels = levels;
    l.gains = gains;
    int at = 0;
    for (int i = 0; i < l.q; ++i) {
        if (levels[i] < 2)
            throw ConfigError("a calibrated stage needs at least two levels");
        l.offset.push_back(at);
        at += i + 1 < l.q ? levels[i] - 1 : levels[i];
    }
    l.dimension = at;
    return l;
}

CorrectionLayout CorrectionLayout::for_adc(const AdcInstance& adc, int q)
{
    if (q < 1 || q > adc.pipeline_stages())
        throw ConfigError("q must be between 1 and the number of pipeline stages (" +
                          std::to_string(adc.pipeline_stages()) + ")");
    std::vector<int> levels;
    std::vector<double> gains;
    for (int i = 0; i < q; ++i) {
        levels.push_back(adc.stages[i].levels());
        gains.push_back(adc.stages[i].gain);
    }
    return make(levels, gains);
}

int CorrectionLayout::position(int stage, int code_index) const
{
    if (stage + 1 < q && code_index == levels[stage] - 1)
        return -1;
    return offset[stage] + code_index;
}

double SelectionVector::dot(const ParameterVector& theta) const
{
    if (theta.size() != dimension)
        throw std::invalid_argument("selection vector and parameters differ in dimension");
    double s = 0.0;
    for (int k = 0; k < count; ++k)
        s += val[k] * theta[pos[k]];
    return s;
}

Eigen::VectorXd SelectionVector::dense() const
{
    Eigen::VectorXd v = Eigen::VectorXd::Zero(dimension);
    for (int k = 0; k < count; ++k)
        v[pos[k]] += val[k];
    return v;
}

void SelectionVector::add_to(Eigen::VectorXd& target, double scale) const
{
    for (int k = 0; k < count; ++k)
        target[pos[k]] += scale * val[k];
}

SelectionVector selection_vector(const ConversionRecord& record, const CorrectionLayout& layout)
{
    if (record.stage_count - 1 < layout.q)
        throw std::invalid_argument("conversion record has fewer pipeline stages than the layout");
    SelectionVector h;
    h.dimension = layout.dimension;
    // prefix[k] = G_1 * ... * G_k
    std::array<double, kMaxStages + 1> prefix{};
    prefix[0] = 1.0;
    for (int k = 0; k < layout.q; ++k)
        prefix[k + 1] = prefix[k] * layout.gains[k];
    for (int i = 0; i < layout.q; ++i) {
        // stage-i code weights the earlier codes by the leading i-l gains
        double cumulative = 0.0;
        for (int l = 0; l <= i; ++l)
            cumulative += record.code[l] * prefix[i - l];
        h.pos[h.count] = layout.weighted_position(i);
        h.val[h.count] = cumulative;
        ++h.count;
        int j = record.index[i];
        if (j == 0)
            continue;
        int p = layout.position(i, j);
        if (p < 0)
            continue;
        h.pos[h.count] = p;
        h.val[h.count] = 1.0;
        ++h.count;
    }
    return h;
}

double apply_correction(double y, const SelectionVector& h, const ParameterVector& theta)
{
    return y + h.dot(theta);
}

} // namespace hec
