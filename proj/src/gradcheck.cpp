#include "seadate/gradcheck.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace seadate {

Tensor random_tensor(std::vector<std::size_t> shape, std::uint64_t seed,
                     std::uint64_t stream, double lo, double hi) {
    Tensor t(std::move(shape));
    CounterRng rng(seed, stream);
    for (std::size_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(lo, hi);
    return t;
}

namespace {

double project(const Tensor& out, const Tensor& weights) {
    double s = 0.0;
    for (std::size_t i = 0; i < out.numel(); ++i) s += out[i] * weights[i];
    return s;
}

}  // namespace

GradCheckReport grad_check_subset(const std::string& op_name,
                                  const std::function<Var(const std::vector<Var>&)>& op,
                                  const std::vector<Tensor>& inputs,
                                  const std::vector<bool>& check_input,
                                  double h, double tol, std::uint64_t seed) {
    GradCheckReport report;
    report.op = op_name;

    auto build_vars = [&](const std::vector<Tensor>& vals, bool with_grad) {
        std::vector<Var> vars;
        vars.reserve(vals.size());
        for (std::size_t i = 0; i < vals.size(); ++i) {
            vars.push_back(Var::leaf(vals[i], with_grad && check_input[i]));
        }
        return vars;
    };

    // Analytic pass: backprop the random projection through the graph.
    std::vector<Var> vars = build_vars(inputs, true);
    Var out = op(vars);
    Tensor proj_weights = random_tensor(out.value().shape(), seed, fnv1a64("gradcheck-projection"));
    backward(out, proj_weights);

    // Numeric pass, one central difference per input coordinate.
    std::vector<Tensor> work = inputs;
    constexpr double kFloor = 1e-12;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        if (!check_input[i]) continue;
        const Tensor& analytic = vars[i].grad();
        double worst = 0.0;
        for (std::size_t j = 0; j < work[i].numel(); ++j) {
            const double orig = work[i][j];
            work[i][j] = orig + h;
            const double up = project(op(build_vars(work, false)).value(), proj_weights);
            work[i][j] = orig - h;
            const double down = project(op(build_vars(work, false)).value(), proj_weights);
            work[i][j] = orig;
            const double numeric = (up - down) / (2.0 * h);
            if (!std::isfinite(numeric)) {
                std::ostringstream os;
                os << "non-finite numeric gradient for input " << i << " coordinate " << j;
                report.diagnostic = os.str();
                report.max_rel_error = std::numeric_limits<double>::infinity();
                report.pass = false;
                return report;
            }
            const double a = analytic[j];
            const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), kFloor});
            worst = std::max(worst, rel);
        }
        report.per_input.emplace_back("input" + std::to_string(i), worst);
        report.max_rel_error = std::max(report.max_rel_error, worst);
    }
    report.pass = report.max_rel_error < tol;
    return report;
}

GradCheckReport grad_check(const std::string& op_name,
                           const std::function<Var(const std::vector<Var>&)>& op,
                           const std::vector<Tensor>& inputs,
                           double h, double tol, std::uint64_t seed) {
    return grad_check_subset(op_name, op, inputs, std::vector<bool>(inputs.size(), true),
                             h, tol, seed);
}

}  // namespace seadate
