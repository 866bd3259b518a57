#include "ramp/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <unordered_set>

#include "ramp/errors.hpp"

namespace ramp {

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ", ";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

struct Tensor::Node {
    Shape shape;
    std::vector<double> values;
    bool requires_grad = false;
    std::vector<double> grad;
    bool grad_touched = false;
    std::vector<std::shared_ptr<Node>> parents;
    BackwardFn backward_fn;  // captures parent handles; empty on leaves
    bool backward_done = false;
};

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    const std::size_t n = shape_numel(shape);
    return from_data(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
    const std::size_t n = shape_numel(shape);
    return from_data(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data, bool requires_grad) {
    if (shape_numel(shape) != data.size()) {
        throw ShapeError("tensor data length " + std::to_string(data.size()) +
                         " does not match shape " + shape_str(shape));
    }
    auto node = std::make_shared<Node>();
    node->shape = std::move(shape);
    node->values = std::move(data);
    node->requires_grad = requires_grad;
    if (requires_grad) node->grad.assign(node->values.size(), 0.0);
    return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
    return from_data(Shape{1}, {value}, requires_grad);
}

const Shape& Tensor::shape() const { return node_->shape; }

std::size_t Tensor::size() const { return node_->values.size(); }

std::size_t Tensor::rows() const {
    if (node_->shape.size() != 2) throw ShapeError("rows() on non-2d tensor " + shape_str(node_->shape));
    return node_->shape[0];
}

std::size_t Tensor::cols() const {
    if (node_->shape.size() != 2) throw ShapeError("cols() on non-2d tensor " + shape_str(node_->shape));
    return node_->shape[1];
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

const std::vector<double>& Tensor::values() const { return node_->values; }

std::vector<double>& Tensor::values_mut() { return node_->values; }

double Tensor::item() const {
    if (size() != 1) throw ShapeError("item() on tensor of size " + std::to_string(size()));
    return node_->values[0];
}

const std::vector<double>& Tensor::grad() const {
    if (!node_->requires_grad) throw std::runtime_error("grad() on tensor without requires_grad");
    return node_->grad;
}

bool Tensor::grad_populated() const { return node_ && node_->grad_touched; }

void Tensor::zero_grad() const {
    if (!node_ || !node_->requires_grad) return;
    std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
    node_->grad_touched = false;
}

void Tensor::accumulate_grad(std::span<const double> g) const {
    if (!node_->requires_grad) return;
    if (g.size() != node_->grad.size()) {
        throw ShapeError("gradient length " + std::to_string(g.size()) + " does not match tensor " +
                         shape_str(node_->shape));
    }
    for (std::size_t i = 0; i < g.size(); ++i) node_->grad[i] += g[i];
    node_->grad_touched = true;
}

Tensor Tensor::detach() const {
    return from_data(node_->shape, node_->values, false);
}

Tensor Tensor::make_op(Shape shape, std::vector<double> values, const std::vector<Tensor>& parents,
                       BackwardFn backward) {
    auto out = from_data(std::move(shape), std::move(values), false);
    bool needs_grad = false;
    for (const Tensor& p : parents) {
        if (p.requires_grad()) needs_grad = true;
        out.node_->parents.push_back(p.node_);
    }
    if (needs_grad) {
        out.node_->requires_grad = true;
        out.node_->grad.assign(out.node_->values.size(), 0.0);
        out.node_->backward_fn = std::move(backward);
    }
    return out;
}

void Tensor::backward() {
    if (!node_) throw std::runtime_error("backward() on empty tensor");
    if (size() != 1) {
        throw ShapeError("backward() requires a scalar loss, got shape " + shape_str(node_->shape));
    }
    if (!node_->requires_grad) {
        throw std::runtime_error("backward() on a tensor with no recorded graph");
    }
    if (node_->backward_done) {
        throw std::runtime_error("backward() already ran on this graph; call reset_backward() first");
    }

    // iterative post-order topological sort
    std::vector<Node*> topo;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.emplace_back(node_.get(), 0);
    visited.insert(node_.get());
    while (!stack.empty()) {
        auto& [n, next_child] = stack.back();
        if (next_child < n->parents.size()) {
            Node* child = n->parents[next_child].get();
            ++next_child;
            if (child->requires_grad && visited.insert(child).second) {
                stack.emplace_back(child, 0);
            }
        } else {
            topo.push_back(n);
            stack.pop_back();
        }
    }

    node_->grad[0] += 1.0;
    node_->grad_touched = true;
    for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
        Node* n = *it;
        if (n->backward_fn) n->backward_fn(n->grad);
    }
    node_->backward_done = true;
}

void Tensor::reset_backward() {
    if (node_) node_->backward_done = false;
}

// ---- ops -------------------------------------------------------------------

namespace {

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    }
}

}  // namespace

Tensor affine(const Tensor& x, const Tensor& weight, const Tensor& bias) {
    const std::size_t n = x.rows();
    const std::size_t in = x.cols();
    const std::size_t out = weight.rows();
    if (weight.cols() != in) {
        throw ShapeError("affine: input width " + std::to_string(in) + " does not match weight " +
                         shape_str(weight.shape()));
    }
    if (bias.size() != out) {
        throw ShapeError("affine: bias length " + std::to_string(bias.size()) +
                         " does not match weight rows " + std::to_string(out));
    }

    const auto& xv = x.values();
    const auto& wv = weight.values();
    const auto& bv = bias.values();
    std::vector<double> y(n * out);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t o = 0; o < out; ++o) {
            double acc = bv[o];
            const double* xr = xv.data() + i * in;
            const double* wr = wv.data() + o * in;
            for (std::size_t j = 0; j < in; ++j) acc += xr[j] * wr[j];
            y[i * out + o] = acc;
        }
    }

    Tensor xc = x, wc = weight, bc = bias;
    return Tensor::make_op(
        Shape{n, out}, std::move(y), {x, weight, bias},
        [xc, wc, bc, n, in, out](const std::vector<double>& gy) {
            const auto& xv = xc.values();
            const auto& wv = wc.values();
            if (xc.requires_grad()) {
                std::vector<double> gx(n * in, 0.0);
                for (std::size_t i = 0; i < n; ++i) {
                    for (std::size_t o = 0; o < out; ++o) {
                        const double g = gy[i * out + o];
                        if (g == 0.0) continue;
                        const double* wr = wv.data() + o * in;
                        double* gxr = gx.data() + i * in;
                        for (std::size_t j = 0; j < in; ++j) gxr[j] += g * wr[j];
                    }
                }
                xc.accumulate_grad(gx);
            }
            if (wc.requires_grad()) {
                std::vector<double> gw(out * in, 0.0);
                for (std::size_t i = 0; i < n; ++i) {
                    const double* xr = xv.data() + i * in;
                    for (std::size_t o = 0; o < out; ++o) {
                        const double g = gy[i * out + o];
                        if (g == 0.0) continue;
                        double* gwr = gw.data() + o * in;
                        for (std::size_t j = 0; j < in; ++j) gwr[j] += g * xr[j];
                    }
                }
                wc.accumulate_grad(gw);
            }
            if (bc.requires_grad()) {
                std::vector<double> gb(out, 0.0);
                for (std::size_t i = 0; i < n; ++i)
                    for (std::size_t o = 0; o < out; ++o) gb[o] += gy[i * out + o];
                bc.accumulate_grad(gb);
            }
        });
}

Tensor relu(const Tensor& x) {
    std::vector<double> y = x.values();
    for (double& v : y) v = v > 0.0 ? v : 0.0;
    Tensor xc = x;
    return Tensor::make_op(x.shape(), std::move(y), {x}, [xc](const std::vector<double>& gy) {
        if (!xc.requires_grad()) return;
        const auto& xv = xc.values();
        std::vector<double> gx(gy.size());
        for (std::size_t i = 0; i < gy.size(); ++i) gx[i] = xv[i] > 0.0 ? gy[i] : 0.0;
        xc.accumulate_grad(gx);
    });
}

std::vector<double> softmax_rows_values(const Shape& shape, std::span<const double> logits) {
    if (shape.size() != 2) throw ShapeError("softmax_rows on non-2d tensor " + shape_str(shape));
    const std::size_t n = shape[0], k = shape[1];
    std::vector<double> p(n * k);
    for (std::size_t i = 0; i < n; ++i) {
        const double* row = logits.data() + i * k;
        double m = row[0];
        for (std::size_t j = 1; j < k; ++j) m = std::max(m, row[j]);
        double z = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
            p[i * k + j] = std::exp(row[j] - m);
            z += p[i * k + j];
        }
        for (std::size_t j = 0; j < k; ++j) p[i * k + j] /= z;
    }
    return p;
}

Tensor softmax_rows(const Tensor& x) {
    std::vector<double> p = softmax_rows_values(x.shape(), x.values());
    const std::size_t n = x.rows(), k = x.cols();
    Tensor xc = x;
    // backward recomputes p from the captured input; same arithmetic, so the
    // values match the forward pass exactly
    return Tensor::make_op(
        x.shape(), std::move(p), {x}, [xc, n, k](const std::vector<double>& gy) {
            if (!xc.requires_grad()) return;
            const std::vector<double> p = softmax_rows_values(xc.shape(), xc.values());
            std::vector<double> gx(n * k);
            for (std::size_t i = 0; i < n; ++i) {
                double dot = 0.0;
                for (std::size_t j = 0; j < k; ++j) dot += gy[i * k + j] * p[i * k + j];
                for (std::size_t j = 0; j < k; ++j)
                    gx[i * k + j] = p[i * k + j] * (gy[i * k + j] - dot);
            }
            xc.accumulate_grad(gx);
        });
}

Tensor add(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "add");
    std::vector<double> y(a.size());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = a.values()[i] + b.values()[i];
    Tensor ac = a, bc = b;
    return Tensor::make_op(a.shape(), std::move(y), {a, b}, [ac, bc](const std::vector<double>& gy) {
        if (ac.requires_grad()) ac.accumulate_grad(gy);
        if (bc.requires_grad()) bc.accumulate_grad(gy);
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "sub");
    std::vector<double> y(a.size());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = a.values()[i] - b.values()[i];
    Tensor ac = a, bc = b;
    return Tensor::make_op(a.shape(), std::move(y), {a, b}, [ac, bc](const std::vector<double>& gy) {
        if (ac.requires_grad()) ac.accumulate_grad(gy);
        if (bc.requires_grad()) {
            std::vector<double> gneg(gy.size());
            for (std::size_t i = 0; i < gy.size(); ++i) gneg[i] = -gy[i];
            bc.accumulate_grad(gneg);
        }
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "mul");
    std::vector<double> y(a.size());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = a.values()[i] * b.values()[i];
    Tensor ac = a, bc = b;
    return Tensor::make_op(a.shape(), std::move(y), {a, b}, [ac, bc](const std::vector<double>& gy) {
        if (ac.requires_grad()) {
            std::vector<double> g(gy.size());
            for (std::size_t i = 0; i < gy.size(); ++i) g[i] = gy[i] * bc.values()[i];
            ac.accumulate_grad(g);
        }
        if (bc.requires_grad()) {
            std::vector<double> g(gy.size());
            for (std::size_t i = 0; i < gy.size(); ++i) g[i] = gy[i] * ac.values()[i];
            bc.accumulate_grad(g);
        }
    });
}

Tensor scale(const Tensor& a, double c) {
    std::vector<double> y(a.size());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = a.values()[i] * c;
    Tensor ac = a;
    return Tensor::make_op(a.shape(), std::move(y), {a}, [ac, c](const std::vector<double>& gy) {
        if (!ac.requires_grad()) return;
        std::vector<double> g(gy.size());
        for (std::size_t i = 0; i < gy.size(); ++i) g[i] = gy[i] * c;
        ac.accumulate_grad(g);
    });
}

Tensor sum_all(const Tensor& a) {
    double s = 0.0;
    for (double v : a.values()) s += v;
    Tensor ac = a;
    return Tensor::make_op(Shape{1}, {s}, {a}, [ac](const std::vector<double>& gy) {
        if (!ac.requires_grad()) return;
        ac.accumulate_grad(std::vector<double>(ac.size(), gy[0]));
    });
}

Tensor mean_all(const Tensor& a) {
    double s = 0.0;
    for (double v : a.values()) s += v;
    const double inv = 1.0 / static_cast<double>(a.size());
    Tensor ac = a;
    return Tensor::make_op(Shape{1}, {s * inv}, {a}, [ac, inv](const std::vector<double>& gy) {
        if (!ac.requires_grad()) return;
        ac.accumulate_grad(std::vector<double>(ac.size(), gy[0] * inv));
    });
}

CrossEntropyResult cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
    const std::size_t n = logits.rows(), k = logits.cols();
    if (labels.size() != n) {
        throw ShapeError("cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(n) + " rows");
    }
    for (int y : labels) {
        if (y < 0 || static_cast<std::size_t>(y) >= k) {
            throw std::invalid_argument("cross_entropy: label " + std::to_string(y) +
                                        " outside [0, " + std::to_string(k) + ")");
        }
    }

    const auto& lv = logits.values();
    std::vector<double> per_sample(n);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double* row = lv.data() + i * k;
        double m = row[0];
        for (std::size_t j = 1; j < k; ++j) m = std::max(m, row[j]);
        double z = 0.0;
        for (std::size_t j = 0; j < k; ++j) z += std::exp(row[j] - m);
        const double lse = m + std::log(z);
        per_sample[i] = lse - row[static_cast<std::size_t>(labels[i])];
        total += per_sample[i];
    }

    Tensor lc = logits;
    std::vector<int> yc = labels;
    Tensor mean = Tensor::make_op(
        Shape{1}, {total / static_cast<double>(n)}, {logits},
        [lc, yc, n, k](const std::vector<double>& gy) {
            if (!lc.requires_grad()) return;
            const std::vector<double> p = softmax_rows_values(lc.shape(), lc.values());
            const double g = gy[0] / static_cast<double>(n);
            std::vector<double> gx(n * k);
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t j = 0; j < k; ++j) {
                    const double ind = (static_cast<std::size_t>(yc[i]) == j) ? 1.0 : 0.0;
                    gx[i * k + j] = g * (p[i * k + j] - ind);
                }
            }
            lc.accumulate_grad(gx);
        });
    return {std::move(mean), std::move(per_sample)};
}

std::vector<int> argmax_rows(const Shape& shape, std::span<const double> values) {
    if (shape.size() != 2) throw ShapeError("argmax_rows on non-2d tensor " + shape_str(shape));
    const std::size_t n = shape[0], k = shape[1];
    std::vector<int> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t best = 0;
        for (std::size_t j = 1; j < k; ++j) {
            if (values[i * k + j] > values[i * k + best]) best = j;  // ties keep lowest index
        }
        out[i] = static_cast<int>(best);
    }
    return out;
}

}  // namespace ramp
