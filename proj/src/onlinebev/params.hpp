#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "onlinebev/tensor.hpp"

namespace obev {

// Named trainable parameters with one gradient accumulator each. Iteration
// order is lexicographic by name so every consumer (optimizer, checkpoint,
// gradient check) walks parameters in the same order.
class ParamStore {
public:
    struct Entry {
        Tensor value;
        Tensor grad;
    };

    void add(std::string name, Tensor init);
    bool contains(std::string_view name) const;

    const Tensor& value(std::string_view name) const;
    Tensor& value(std::string_view name);
    const Tensor& grad(std::string_view name) const;
    Tensor& grad(std::string_view name);

    void zero_grad();
    std::vector<std::string> names() const;
    std::size_t size() const noexcept { return entries_.size(); }
    std::size_t parameter_count() const;

    auto begin() { return entries_.begin(); }
    auto end() { return entries_.end(); }
    auto begin() const { return entries_.begin(); }
    auto end() const { return entries_.end(); }

    bool operator==(const ParamStore& other) const;

private:
    const Entry& entry(std::string_view name) const;
    Entry& entry(std::string_view name);

    std::map<std::string, Entry, std::less<>> entries_;
};

}  // namespace obev
