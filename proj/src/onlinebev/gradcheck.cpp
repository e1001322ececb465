#include "onlinebev/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "onlinebev/error.hpp"

namespace obev {

namespace {

double evaluate(const ScalarFn& f, const ParamStore& theta)
{
    Tape tape;
    const double v = f(tape, theta).value().item();
    if (!std::isfinite(v)) throw NumericError("grad_check: function value is not finite");
    return v;
}

}  // namespace

Tensor numeric_gradient(const ScalarFn& f, ParamStore& theta, const std::string& name, double eps)
{
    Tensor& p = theta.value(name);
    Tensor out(p.shape());
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double orig = p[i];
        p[i] = orig + eps;
        const double up = evaluate(f, theta);
        p[i] = orig - eps;
        const double down = evaluate(f, theta);
        p[i] = orig;
        out[i] = (up - down) / (2.0 * eps);
    }
    return out;
}

GradCheckReport grad_check(const ScalarFn& f, ParamStore& theta, double eps)
{
    theta.zero_grad();
    {
        Tape tape;
        Var loss = f(tape, theta);
        if (!std::isfinite(loss.value().item())) throw NumericError("grad_check: function value is not finite");
        tape.backward(loss);
        tape.accumulate_into(theta);
    }
    GradCheckReport report;
    for (const auto& name : theta.names()) {
        const Tensor numeric = numeric_gradient(f, theta, name, eps);
        const Tensor& analytic = theta.grad(name);
        for (std::size_t i = 0; i < numeric.size(); ++i) {
            const double err = std::abs(analytic[i] - numeric[i]) / std::max(1.0, std::abs(numeric[i]));
            if (report.worst_param.empty() || err > report.max_rel_error) {
                report.max_rel_error = err;
                report.worst_param = name;
                report.worst_index = i;
            }
        }
    }
    theta.zero_grad();
    return report;
}

}  // namespace obev
