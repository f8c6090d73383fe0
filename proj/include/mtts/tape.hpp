#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "mtts/common.hpp"

namespace mtts::grad {

// Dense row-major tensor of 64-bit reals. Rank 1 or 2 in practice.
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> data;

    Tensor() = default;
    static Tensor zeros(std::vector<std::size_t> shape);
    static Tensor vec(std::vector<double> values);
    static Tensor scalar(double v);

    std::size_t size() const { return data.size(); }
    std::size_t rows() const { return shape.empty() ? 1 : shape[0]; }
    std::size_t cols() const { return shape.size() < 2 ? 1 : shape[1]; }
    double& at(std::size_t r, std::size_t c) { return data[r * cols() + c]; }
    double at(std::size_t r, std::size_t c) const { return data[r * cols() + c]; }
    std::string shape_str() const;
};

// Records every forward op so reverse-mode gradients can be accumulated.
// Node ids are indices into the tape; creation order is topological order.
class Tape {
public:
    using BackwardFn = std::function<void(Tape&, int)>;

    int push(Tensor value, std::vector<int> parents, BackwardFn back);
    int leaf(Tensor value) { return push(std::move(value), {}, nullptr); }

    const Tensor& value(int id) const { return nodes_[id].value; }
    Tensor& grad(int id) { return nodes_[id].grad; }
    std::size_t size() const { return nodes_.size(); }

    // Reverse accumulation from a scalar loss node.
    void backward(int loss_node);

private:
    struct Node {
        Tensor value;
        Tensor grad;
        std::vector<int> parents;
        BackwardFn back;
    };
    std::vector<Node> nodes_;
};

// Forward ops. Shapes are validated; mismatches throw DimensionError with
// both shapes in the message. Every output is checked finite.
int add(Tape& t, int a, int b);
int sub(Tape& t, int a, int b);
int mul(Tape& t, int a, int b);  // elementwise
int scale(Tape& t, int a, double s);
int add_scalar(Tape& t, int a, double s);
int matmul(Tape& t, int a, int b);  // 2-D x 2-D, or 2-D x 1-D
int tanh_op(Tape& t, int a);
int sigmoid(Tape& t, int a);
int relu(Tape& t, int a);
int softmax_rows(Tape& t, int a);
int concat(Tape& t, const std::vector<int>& parts, int axis = 0);
int slice(Tape& t, int a, std::size_t start, std::size_t end);  // 1-D range
int mean_all(Tape& t, int a);
int mean_axis0(Tape& t, int a);

// Losses (scalar outputs).
int mse(Tape& t, int pred, const Tensor& target);
int cross_entropy(Tape& t, int logits, int class_id);
// -log(probs[class_id]) for inputs that are already probabilities.
int nll_probs(Tape& t, int probs, int class_id);

}  // namespace mtts::grad
