#include "umt/parameters.hpp"

#include <algorithm>

#include "umt/error.hpp"

namespace umt {

Tensor ParameterSet::add_uniform(const std::string& name, Shape shape, double bound, Rng& rng) {
    std::vector<double> values(shape_numel(shape));
    for (double& v : values) {
        v = rng.uniform(-bound, bound);
    }
    return add(name, Tensor::from(std::move(shape), std::move(values), true));
}

Tensor ParameterSet::add_constant(const std::string& name, Shape shape, double value) {
    return add(name, Tensor::full(std::move(shape), value, true));
}

Tensor ParameterSet::add(const std::string& name, Tensor tensor) {
    if (contains(name)) {
        throw ConfigError("duplicate parameter name '" + name + "'");
    }
    entries_.emplace_back(name, tensor);
    return tensor;
}

std::size_t ParameterSet::numel() const {
    std::size_t n = 0;
    for (const auto& [name, t] : entries_) {
        n += t.size();
    }
    return n;
}

bool ParameterSet::contains(const std::string& name) const {
    return std::any_of(entries_.begin(), entries_.end(), [&](const auto& e) { return e.first == name; });
}

Tensor ParameterSet::find(const std::string& name) const {
    for (const auto& [n, t] : entries_) {
        if (n == name) {
            return t;
        }
    }
    throw ConfigError("no parameter named '" + name + "'");
}

void ParameterSet::zero_grad() {
    for (auto& [name, t] : entries_) {
        t.zero_grad();
    }
}

}  // namespace umt
