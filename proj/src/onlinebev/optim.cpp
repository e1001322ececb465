#include "onlinebev/optim.hpp"

#include <cmath>

#include "onlinebev/error.hpp"

namespace obev {

AdamW::AdamW(AdamWConfig cfg) : cfg_(cfg)
{
    if (!(cfg_.lr > 0)) throw ConfigError("AdamW: lr must be positive");
    if (!(cfg_.beta1 >= 0 && cfg_.beta1 < 1 && cfg_.beta2 >= 0 && cfg_.beta2 < 1)) {
        throw ConfigError("AdamW: betas must be in [0, 1)");
    }
}

void AdamW::step(ParamStore& params, const Filter& only)
{
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (auto& [name, entry] : params) {
        if (only && !only(name)) continue;
        auto it = state_.find(name);
        if (it == state_.end()) {
            it = state_.emplace(name, Moments{Tensor(entry.value.shape()), Tensor(entry.value.shape())}).first;
        }
        Tensor& m = it->second.m;
        Tensor& v = it->second.v;
        Tensor& p = entry.value;
        const Tensor& g = entry.grad;
        for (std::size_t i = 0; i < p.size(); ++i) {
            m[i] = cfg_.beta1 * m[i] + (1 - cfg_.beta1) * g[i];
            v[i] = cfg_.beta2 * v[i] + (1 - cfg_.beta2) * g[i] * g[i];
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            p[i] -= cfg_.lr * (mhat / (std::sqrt(vhat) + cfg_.eps) + cfg_.weight_decay * p[i]);
        }
    }
}

}  // namespace obev
