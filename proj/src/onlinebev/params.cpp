#include "onlinebev/params.hpp"

#include "onlinebev/error.hpp"

namespace obev {

void ParamStore::add(std::string name, Tensor init)
{
    if (contains(name)) throw ConfigError("duplicate parameter name '" + name + "'");
    Tensor grad(init.shape());
    entries_.emplace(std::move(name), Entry{std::move(init), std::move(grad)});
}

bool ParamStore::contains(std::string_view name) const
{
    return entries_.find(name) != entries_.end();
}

const ParamStore::Entry& ParamStore::entry(std::string_view name) const
{
    auto it = entries_.find(name);
    if (it == entries_.end()) throw ConfigError("unknown parameter '" + std::string(name) + "'");
    return it->second;
}

ParamStore::Entry& ParamStore::entry(std::string_view name)
{
    auto it = entries_.find(name);
    if (it == entries_.end()) throw ConfigError("unknown parameter '" + std::string(name) + "'");
    return it->second;
}

const Tensor& ParamStore::value(std::string_view name) const { return entry(name).value; }
Tensor& ParamStore::value(std::string_view name) { return entry(name).value; }
const Tensor& ParamStore::grad(std::string_view name) const { return entry(name).grad; }
Tensor& ParamStore::grad(std::string_view name) { return entry(name).grad; }

void ParamStore::zero_grad()
{
    for (auto& [name, e] : entries_) e.grad.fill(0.0);
}

std::vector<std::string> ParamStore::names() const
{
    std::vector<std::string> out;
    out.reserve(entries_.size());
    for (const auto& [name, e] : entries_) out.push_back(name);
    return out;
}

std::size_t ParamStore::parameter_count() const
{
    std::size_t n = 0;
    for (const auto& [name, e] : entries_) n += e.value.size();
    return n;
}

bool ParamStore::operator==(const ParamStore& other) const
{
    if (entries_.size() != other.entries_.size()) return false;
    auto a = entries_.begin();
    auto b = other.entries_.begin();
    for (; a != entries_.end(); ++a, ++b) {
        if (a->first != b->first || !(a->second.value == b->second.value)) return false;
    }
    return true;
}

}  // namespace obev
