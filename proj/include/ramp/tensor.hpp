#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace ramp {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Dense f64 tensor participating in a dynamically recorded reverse-mode
/// graph. Copying a Tensor copies the handle, not the buffer; ops return
/// fresh nodes whose backward closures accumulate into parent grads.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    static Tensor from_data(Shape shape, std::vector<double> data, bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const;
    std::size_t size() const;
    std::size_t rows() const;  // 2-d only
    std::size_t cols() const;  // 2-d only
    bool requires_grad() const;

    const std::vector<double>& values() const;
    std::vector<double>& values_mut();  // leaf mutation only (optimizer updates)
    double item() const;                // scalar value

    const std::vector<double>& grad() const;
    bool grad_populated() const;  // true once a backward pass touched this leaf
    void zero_grad() const;
    void accumulate_grad(std::span<const double> g) const;

    /// Reverse pass from a scalar root. Throws on non-scalar roots, graph-free
    /// tensors, and repeated calls without reset_backward().
    void backward();
    void reset_backward();

    bool same_node(const Tensor& other) const { return node_ == other.node_; }

    /// Detached copy: same values, no graph, no grad requirement.
    Tensor detach() const;

    // Low-level node constructor for ops. `backward` receives the finished
    // output node's grad and pushes into the captured parents.
    using BackwardFn = std::function<void(const std::vector<double>& out_grad)>;
    static Tensor make_op(Shape shape, std::vector<double> values,
                          const std::vector<Tensor>& parents, BackwardFn backward);

private:
    struct Node;
    std::shared_ptr<Node> node_;
    explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}
};

// ---- graph ops -----------------------------------------------------------

/// y = x * W^T + b with x: [N, in], W: [out, in], b: [out].
Tensor affine(const Tensor& x, const Tensor& weight, const Tensor& bias);
Tensor relu(const Tensor& x);
Tensor softmax_rows(const Tensor& x);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
Tensor sum_all(const Tensor& a);
Tensor mean_all(const Tensor& a);

struct CrossEntropyResult {
    Tensor mean_loss;                // scalar, in graph
    std::vector<double> per_sample;  // -log softmax[label], detached
};

/// Mean cross-entropy over rows, stable via log-sum-exp. Labels in [0, k).
CrossEntropyResult cross_entropy(const Tensor& logits, const std::vector<int>& labels);

// ---- graph-free helpers ----------------------------------------------------

std::vector<double> softmax_rows_values(const Shape& shape, std::span<const double> logits);
std::vector<int> argmax_rows(const Shape& shape, std::span<const double> values);

}  // namespace ramp
