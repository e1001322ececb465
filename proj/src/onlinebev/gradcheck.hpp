#pragma once

#include <cstddef>
#include <functional>
#include <string>

#include "onlinebev/params.hpp"
#include "onlinebev/tape.hpp"

namespace obev {

// A scalar function of the parameters, evaluated on a fresh tape. It must bind
// parameters through tape.param() for the analytic gradient to reach them.
using ScalarFn = std::function<Var(Tape&, const ParamStore&)>;

struct GradCheckReport {
    double max_rel_error = 0.0;
    std::string worst_param;
    std::size_t worst_index = 0;
};

// Compares reverse-mode gradients against central differences. The error of
// one entry is |analytic - numeric| / max(1, |numeric|). Throws NumericError
// when f evaluates to a non-finite value.
GradCheckReport grad_check(const ScalarFn& f, ParamStore& theta, double eps = 1e-5);

// Central-difference gradient of f w.r.t. one parameter tensor.
Tensor numeric_gradient(const ScalarFn& f, ParamStore& theta, const std::string& name, double eps = 1e-5);

}  // namespace obev
