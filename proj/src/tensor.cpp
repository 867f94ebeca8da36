#include "umt/tensor.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_set>

#include "umt/error.hpp"

namespace umt {

namespace {

thread_local bool t_grad_enabled = true;
thread_local std::uint64_t t_mac_count = 0;

const detail::Node& checked(const std::shared_ptr<detail::Node>& node) {
    if (!node) {
        throw StateError("operation on an undefined tensor");
    }
    return *node;
}

// Reverse topological order of the graph rooted at `root` (root first).
std::vector<detail::Node*> reverse_topological(detail::Node* root) {
    std::vector<detail::Node*> order;
    std::unordered_set<detail::Node*> visited;
    std::vector<std::pair<detail::Node*, std::size_t>> stack;
    stack.emplace_back(root, 0);
    visited.insert(root);
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            detail::Node* parent = node->parents[next++].get();
            if (visited.insert(parent).second) {
                stack.emplace_back(parent, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    std::reverse(order.begin(), order.end());
    return order;
}

}  // namespace

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) {
        n *= d;
    }
    return n;
}

std::string shape_string(const Shape& shape) {
    std::ostringstream out;
    out << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        out << (i ? ", " : "") << shape[i];
    }
    out << ']';
    return out.str();
}

std::vector<double>& detail::Node::grad_buffer() {
    if (grad.size() != data.size()) {
        grad.assign(data.size(), 0.0);
    }
    return grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
    const std::size_t n = shape_numel(shape);
    return from(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
    if (shape_numel(shape) != values.size()) {
        throw ShapeError("shape " + shape_string(shape) + " holds " + std::to_string(shape_numel(shape)) +
                         " values, got " + std::to_string(values.size()));
    }
    auto node = std::make_shared<detail::Node>();
    node->shape = std::move(shape);
    node->data = std::move(values);
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value, bool requires_grad) { return from({}, {value}, requires_grad); }

Tensor Tensor::row(std::vector<double> values, bool requires_grad) {
    const std::size_t n = values.size();
    return from({1, n}, std::move(values), requires_grad);
}

Tensor Tensor::column(std::vector<double> values, bool requires_grad) {
    const std::size_t n = values.size();
    return from({n, 1}, std::move(values), requires_grad);
}

const Shape& Tensor::shape() const { return checked(node_).shape; }

std::size_t Tensor::size() const { return checked(node_).data.size(); }

std::size_t Tensor::rows() const {
    const Shape& s = shape();
    return s.size() >= 2 ? s[s.size() - 2] : 1;
}

std::size_t Tensor::cols() const {
    const Shape& s = shape();
    return s.empty() ? 1 : s.back();
}

std::span<const double> Tensor::data() const { return checked(node_).data; }

std::span<double> Tensor::mutable_data() {
    checked(node_);
    return node_->data;
}

std::vector<double> Tensor::values() const { return checked(node_).data; }

double Tensor::item() const {
    const auto& node = checked(node_);
    if (node.data.size() != 1) {
        throw ShapeError("item() on tensor of shape " + shape_string(node.shape));
    }
    return node.data[0];
}

double Tensor::at(std::size_t i) const { return checked(node_).data.at(i); }

double Tensor::at(std::size_t row, std::size_t col) const { return checked(node_).data.at(row * cols() + col); }

bool Tensor::requires_grad() const { return checked(node_).requires_grad; }

void Tensor::set_requires_grad(bool value) {
    checked(node_);
    node_->requires_grad = value;
}

bool Tensor::has_grad() const { return !checked(node_).grad.empty(); }

std::vector<double> Tensor::grad() const {
    const auto& node = checked(node_);
    return node.grad.empty() ? std::vector<double>(node.data.size(), 0.0) : node.grad;
}

std::span<double> Tensor::mutable_grad() {
    checked(node_);
    return node_->grad_buffer();
}

void Tensor::zero_grad() {
    checked(node_);
    std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
    node_->backward_done = false;
}

Tensor Tensor::detach() const {
    const auto& node = checked(node_);
    return from(node.shape, node.data, false);
}

Tensor Tensor::make_result(Shape shape, std::vector<double> values, const std::vector<Tensor>& parents,
                           detail::BackwardFn backward) {
    Tensor out = from(std::move(shape), std::move(values), false);
    if (!t_grad_enabled) {
        return out;
    }
    const bool any = std::any_of(parents.begin(), parents.end(), [](const Tensor& p) { return p.requires_grad(); });
    if (!any) {
        return out;
    }
    out.node_->requires_grad = true;
    out.node_->parents.reserve(parents.size());
    for (const Tensor& p : parents) {
        out.node_->parents.push_back(p.node_);
    }
    out.node_->backward = std::move(backward);
    return out;
}

void backward(const Tensor& loss) {
    if (!loss.defined()) {
        throw StateError("backward on an undefined tensor");
    }
    if (loss.size() != 1) {
        throw ShapeError("backward requires a scalar loss, got shape " + shape_string(loss.shape()));
    }
    detail::Node* root = loss.node();
    if (root->backward_done) {
        throw StateError("backward called twice on the same loss without reset_backward()");
    }
    if (!root->requires_grad) {
        throw StateError("loss does not depend on any tensor that requires a gradient");
    }
    root->backward_done = true;
    root->grad_buffer()[0] += 1.0;
    for (detail::Node* node : reverse_topological(root)) {
        if (node->backward && !node->grad.empty()) {
            node->backward(*node);
        }
    }
}

void reset_backward(const Tensor& loss) {
    if (!loss.defined()) {
        return;
    }
    for (detail::Node* node : reverse_topological(loss.node())) {
        std::fill(node->grad.begin(), node->grad.end(), 0.0);
        node->backward_done = false;
    }
}

bool grad_enabled() { return t_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }

NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

std::uint64_t mac_count() { return t_mac_count; }

void reset_mac_count() { t_mac_count = 0; }

void add_macs(std::uint64_t count) { t_mac_count += count; }

}  // namespace umt
