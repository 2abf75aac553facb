#include <algorithm>
#include <cmath>
#include <vector>

#include "sacl/autodiff/tape.hpp"
#include "sacl/core/error.hpp"

namespace sacl::ad {
namespace {

double eval_scalar(const GraphBuilder& build, const std::map<std::string, Tensor>& point) {
    Evaluation ev = evaluate(build, point);
    if (ev.output.size() != 1) {
        throw ShapeError("finite_diff_check: function output is not scalar, shape " +
                         ev.output.shape().str());
    }
    const double v = ev.output[0];
    if (!std::isfinite(v)) throw NumericalError("finite_diff_check: non-finite function value");
    return v;
}

}  // namespace

FiniteDiffReport finite_diff_check(const GraphBuilder& build,
                                   const std::map<std::string, Tensor>& point, double rel_tol,
                                   double step) {
    Evaluation ev = evaluate(build, point);
    if (ev.output.size() != 1) {
        throw ShapeError("finite_diff_check: function output is not scalar, shape " +
                         ev.output.shape().str());
    }
    const double f0 = ev.output[0];
    if (!std::isfinite(f0)) throw NumericalError("finite_diff_check: non-finite function value");

    std::vector<std::string> names;
    for (const auto& [name, t] : point) names.push_back(name);
    const GradientMap analytic = backward(ev, names);

    const double floor = 1e-6 * std::max(1.0, std::abs(f0));
    FiniteDiffReport report;
    std::map<std::string, Tensor> probe = point;
    for (const auto& [name, base] : point) {
        Tensor& x = probe.at(name);
        const Tensor& grad = analytic.at(name);
        for (std::size_t i = 0; i < base.size(); ++i) {
            const double orig = base[i];
            x[i] = orig + step;
            const double fp = eval_scalar(build, probe);
            x[i] = orig - step;
            const double fm = eval_scalar(build, probe);
            x[i] = orig;

            const double numeric = (fp - fm) / (2.0 * step);
            const double a = grad[i];
            const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), floor});
            ++report.coordinates_checked;
            if (rel > report.max_rel_error || report.worst_variable.empty()) {
                if (rel >= report.max_rel_error) {
                    report.max_rel_error = rel;
                    report.worst_variable = name;
                    report.worst_index = i;
                    report.analytic_at_worst = a;
                    report.numeric_at_worst = numeric;
                }
            }

            // Smooth functions give one-sided slopes that differ by O(step * f'').
            const double forward = (fp - f0) / step;
            const double backward_slope = (f0 - fm) / step;
            if (!report.non_differentiable &&
                std::abs(forward - backward_slope) > 1e-2 * std::max(1.0, std::abs(numeric))) {
                report.non_differentiable = true;
                report.kink_variable = name;
                report.kink_index = i;
            }
        }
    }
    report.passed = !report.non_differentiable && report.max_rel_error <= rel_tol;
    return report;
}

}  // namespace sacl::ad
