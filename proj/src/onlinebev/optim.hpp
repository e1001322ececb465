#pragma once

#include <functional>
#include <map>
#include <string>
#include <string_view>

#include "onlinebev/params.hpp"

namespace obev {

struct AdamWConfig {
    double lr = 2e-4;
    double weight_decay = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// AdamW with decoupled weight decay. Reads ParamStore gradients, updates
// values in place; does not clear gradients.
class AdamW {
public:
    explicit AdamW(AdamWConfig cfg);

    using Filter = std::function<bool(std::string_view)>;

    // Parameters rejected by `only` are left untouched, weight decay included.
    void step(ParamStore& params, const Filter& only = {});
    long steps() const noexcept { return t_; }

private:
    struct Moments {
        Tensor m;
        Tensor v;
    };

    AdamWConfig cfg_;
    long t_ = 0;
    std::map<std::string, Moments, std::less<>> state_;
};

}  // namespace obev
