#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "umt/rng.hpp"
#include "umt/tensor.hpp"

namespace umt {

/// Ordered registry of named trainable tensors. Names are unique and the
/// registration order is the serialization order.
class ParameterSet {
public:
    /// Registers a tensor with values drawn uniformly from [-bound, bound].
    Tensor add_uniform(const std::string& name, Shape shape, double bound, Rng& rng);
    Tensor add_constant(const std::string& name, Shape shape, double value);

    const std::vector<std::pair<std::string, Tensor>>& entries() const { return entries_; }
    std::size_t size() const { return entries_.size(); }
    /// Total number of scalar values.
    std::size_t numel() const;

    bool contains(const std::string& name) const;
    Tensor find(const std::string& name) const;

    void zero_grad();

private:
    Tensor add(const std::string& name, Tensor tensor);

    std::vector<std::pair<std::string, Tensor>> entries_;
};

}  // namespace umt
