#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "jointseis/errors.hpp"

namespace jseis {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

class Graph;

// Dense 64-bit float tensor, row-major. Copies are shallow: they share the
// data and grad buffers, so a parameter handle returned by the model aliases
// the live weights. Rank-0 tensors are scalars (numel == 1).
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape);
    static Tensor full(Shape shape, double value);
    static Tensor from_data(Shape shape, std::vector<double> values);
    static Tensor scalar(double value);

    const Shape& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t numel() const { return data_ ? data_->size() : 0; }
    bool defined() const { return static_cast<bool>(data_); }

    double* data() { return data_->data(); }
    const double* data() const { return data_->data(); }
    std::vector<double>& values() { return *data_; }
    const std::vector<double>& values() const { return *data_; }
    double at(std::size_t i) const { return (*data_)[i]; }

    // Scalar convenience; throws DomainError unless numel() == 1.
    double value() const;

    // Deep copy of shape + data. Grad storage is fresh (not copied).
    Tensor clone() const;

    // Enabling allocates zeroed grad storage; disabling drops it.
    Tensor& set_requires_grad(bool on);
    bool requires_grad() const { return requires_grad_; }

    std::vector<double>& grad();
    const std::vector<double>& grad() const;
    bool has_grad_storage() const { return static_cast<bool>(grad_); }
    void zero_grad();

    bool same_buffer(const Tensor& other) const { return data_ == other.data_; }
    const void* buffer_id() const { return static_cast<const void*>(data_.get()); }

private:
    Shape shape_;
    std::shared_ptr<std::vector<double>> data_;
    std::shared_ptr<std::vector<double>> grad_;
    bool requires_grad_ = false;

    // Node identity within the graph that produced this tensor, if any.
    std::int64_t graph_id_ = -1;
    int node_id_ = -1;

    friend class Graph;
};

enum class OpKind : std::uint8_t {
    Leaf,
    Conv2d,
    Relu,
    Add,
    Scale,
    Sum,
    Mse,
    SumSquaredDiff,
    TakeColumn,
};

// Reverse-mode tape. Ops append records; backward() walks them in exact
// reverse insertion order. A Graph instance is single-threaded; independent
// graphs may live on different threads. Tensors from other graphs (or from
// factories) enter as leaves.
class Graph {
public:
    Graph();
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    std::int64_t id() const { return id_; }
    std::size_t size() const { return nodes_.size(); }

    // Seeds d(loss)/d(loss) = 1 and accumulates (+=) into the grad storage of
    // every requires_grad leaf. Leaves without requires_grad are untouched.
    // Node-local grads are reset per call, so calling twice doubles leaf grads.
    void backward(const Tensor& loss);

    struct Node {
        OpKind kind;
        std::vector<int> inputs;
        Tensor out;  // for leaves this is the leaf tensor itself
        bool needs_grad = false;
        std::function<void(Graph&, const Node&)> backward_fn;  // null for leaves
        std::vector<double> grad;  // lazily sized during backward
    };

    // Op-author interface.
    int ensure_node(const Tensor& t);
    int record(OpKind kind, std::vector<int> inputs, Tensor& out,
               std::function<void(Graph&, const Node&)> backward_fn);
    std::vector<double>& grad_of(int id);
    bool grad_live(int id) const { return !nodes_[id].grad.empty(); }
    bool needs_grad(int id) const { return nodes_[id].needs_grad; }
    const Node& node(int id) const { return nodes_[id]; }

private:
    std::vector<Node> nodes_;
    std::unordered_map<const void*, int> leaf_by_buffer_;
    std::int64_t id_;
};

// All ops are pure functions of their inputs plus the explicit graph handle.

// 2-D cross-correlation (no kernel flip) with "same" zero padding:
// pad_total = dilation * (k - 1) per axis, floor(pad/2) before, rest after.
// input [C_in,H,W], kernel [C_out,C_in,kH,kW], bias [C_out] -> [C_out,H,W].
Tensor conv2d(Graph& g, const Tensor& input, const Tensor& kernel,
              const Tensor& bias, std::size_t dil_h, std::size_t dil_w);

// Elementwise max(0, x); subgradient at 0 is 0.
Tensor relu(Graph& g, const Tensor& x);

Tensor add(Graph& g, const Tensor& a, const Tensor& b);
Tensor scale(Graph& g, const Tensor& x, double c);
Tensor sum(Graph& g, const Tensor& x);

// (1/numel) * sum((a - b)^2)
Tensor mse(Graph& g, const Tensor& a, const Tensor& b);

// sum((a - b)^2), no averaging; the squared-norm building block of the losses.
Tensor sum_squared_diff(Graph& g, const Tensor& a, const Tensor& b);

// x [1,H,W] -> [H], the column at index `col`.
Tensor take_column(Graph& g, const Tensor& x, std::size_t col);

// Central finite differences, (f(x+eps*e_i) - f(x-eps*e_i)) / (2*eps).
// The independent oracle used by the gradient tests.
Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f,
                        const Tensor& x, double eps = 1e-5);

}  // namespace jseis
