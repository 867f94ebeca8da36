#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace umt {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

class Tensor;

namespace detail {

struct Node;
using BackwardFn = std::function<void(Node& self)>;

struct Node {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;  // empty until the first accumulation
    bool requires_grad = false;
    bool backward_done = false;
    std::vector<std::shared_ptr<Node>> parents;
    BackwardFn backward;

    /// Gradient buffer, allocated (zeroed) on first use.
    std::vector<double>& grad_buffer();
};

}  // namespace detail

/// Dense row-major float64 tensor with an optional reverse-mode tape.
///
/// Copies share storage (handle semantics), so a parameter held by a layer
/// and by a ParameterSet is the same node. Results of differentiable
/// operations record their parents only when some input requires a gradient
/// and gradient recording is enabled on the current thread.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);
    /// Row vector as a 1 x n matrix.
    static Tensor row(std::vector<double> values, bool requires_grad = false);
    /// Column vector as an n x 1 matrix.
    static Tensor column(std::vector<double> values, bool requires_grad = false);

    bool defined() const noexcept { return node_ != nullptr; }

    const Shape& shape() const;
    std::size_t ndim() const { return shape().size(); }
    std::size_t size() const;
    /// Leading dimension of a matrix (1 for scalars and vectors).
    std::size_t rows() const;
    /// Trailing dimension of a matrix (the only dimension of a vector).
    std::size_t cols() const;

    std::span<const double> data() const;
    /// Writable view of the values. Mutating a tensor that already feeds a
    /// recorded graph invalidates that graph; it is meant for parameters
    /// between optimizer steps and for finite-difference probes.
    std::span<double> mutable_data();
    std::vector<double> values() const;
    double item() const;
    double at(std::size_t i) const;
    double at(std::size_t row, std::size_t col) const;

    bool requires_grad() const;
    void set_requires_grad(bool value);

    bool has_grad() const;
    /// Accumulated gradient; zeros when none has been accumulated.
    std::vector<double> grad() const;
    std::span<double> mutable_grad();
    void zero_grad();

    /// Detached copy sharing nothing with this tensor.
    Tensor detach() const;

    detail::Node* node() const noexcept { return node_.get(); }
    const std::shared_ptr<detail::Node>& node_ptr() const noexcept { return node_; }

    /// Builds the result of a custom differentiable operation. `backward`
    /// reads `self.grad` and accumulates into `self.parents[i]->grad_buffer()`
    /// for every parent that requires a gradient. It is dropped when no parent
    /// requires a gradient or recording is disabled.
    static Tensor make_result(Shape shape, std::vector<double> values,
                              const std::vector<Tensor>& parents, detail::BackwardFn backward);

private:
    explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

    std::shared_ptr<detail::Node> node_;
};

/// Reverse pass from a scalar loss. Populates gradients for every ancestor
/// that requires one. Calling it twice on the same loss without
/// reset_backward() in between is an error.
void backward(const Tensor& loss);

/// Clears gradients on every node reachable from `loss` and re-arms it for
/// another backward().
void reset_backward(const Tensor& loss);

/// Whether new operations on this thread record a backward graph.
bool grad_enabled();

/// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

/// Per-thread count of multiply-accumulate operations performed by matmul.
std::uint64_t mac_count();
void reset_mac_count();
void add_macs(std::uint64_t count);

}  // namespace umt
