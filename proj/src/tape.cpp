#include "mtts/tape.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace mtts::grad {

Tensor Tensor::zeros(std::vector<std::size_t> shape) {
    Tensor t;
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    t.shape = std::move(shape);
    t.data.assign(n, 0.0);
    return t;
}

Tensor Tensor::vec(std::vector<double> values) {
    Tensor t;
    t.shape = {values.size()};
    t.data = std::move(values);
    return t;
}

Tensor Tensor::scalar(double v) {
    Tensor t;
    t.shape = {1};
    t.data = {v};
    return t;
}

std::string Tensor::shape_str() const {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

namespace {

void check_finite(const Tensor& t, const char* op) {
    for (double v : t.data)
        if (!std::isfinite(v))
            throw NumericError(std::string(op) + " produced non-finite value");
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape != b.shape)
        throw DimensionError(std::string(op) + ": shape mismatch " +
                             a.shape_str() + " vs " + b.shape_str());
}

void accumulate(Tensor& grad, const Tensor& shape_like, const double* delta) {
    if (grad.data.empty()) grad = Tensor::zeros(shape_like.shape);
    for (std::size_t i = 0; i < grad.data.size(); ++i) grad.data[i] += delta[i];
}

// Adds `delta` (same shape as node id's value) to that node's gradient.
void add_grad(Tape& t, int id, const Tensor& value, const std::vector<double>& delta) {
    Tensor& g = t.grad(id);
    accumulate(g, value, delta.data());
}

}  // namespace

int Tape::push(Tensor value, std::vector<int> parents, BackwardFn back) {
    nodes_.push_back({std::move(value), Tensor{}, std::move(parents),
                      std::move(back)});
    return static_cast<int>(nodes_.size()) - 1;
}

void Tape::backward(int loss_node) {
    if (loss_node < 0 || loss_node >= static_cast<int>(nodes_.size()))
        throw DimensionError("backward: node id out of range");
    if (nodes_[loss_node].value.size() != 1)
        throw DimensionError("backward: loss node is not scalar, shape " +
                             nodes_[loss_node].value.shape_str());
    nodes_[loss_node].grad = Tensor::zeros(nodes_[loss_node].value.shape);
    nodes_[loss_node].grad.data[0] = 1.0;
    for (int id = loss_node; id >= 0; --id) {
        if (nodes_[id].back && !nodes_[id].grad.data.empty())
            nodes_[id].back(*this, id);
    }
}

int add(Tape& t, int a, int b) {
    const Tensor& va = t.value(a);
    const Tensor& vb = t.value(b);
    require_same_shape(va, vb, "add");
    Tensor out = va;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += vb.data[i];
    check_finite(out, "add");
    return t.push(std::move(out), {a, b}, [a, b](Tape& tp, int id) {
        const Tensor& g = tp.grad(id);
        add_grad(tp, a, tp.value(a), g.data);
        add_grad(tp, b, tp.value(b), g.data);
    });
}

int sub(Tape& t, int a, int b) {
    const Tensor& va = t.value(a);
    const Tensor& vb = t.value(b);
    require_same_shape(va, vb, "sub");
    Tensor out = va;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] -= vb.data[i];
    check_finite(out, "sub");
    return t.push(std::move(out), {a, b}, [a, b](Tape& tp, int id) {
        const Tensor& g = tp.grad(id);
        add_grad(tp, a, tp.value(a), g.data);
        std::vector<double> neg(g.data.size());
        for (std::size_t i = 0; i < neg.size(); ++i) neg[i] = -g.data[i];
        add_grad(tp, b, tp.value(b), neg);
    });
}

int mul(Tape& t, int a, int b) {
    const Tensor& va = t.value(a);
    const Tensor& vb = t.value(b);
    require_same_shape(va, vb, "mul");
    Tensor out = va;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] *= vb.data[i];
    check_finite(out, "mul");
    return t.push(std::move(out), {a, b}, [a, b](Tape& tp, int id) {
        const Tensor& g = tp.grad(id);
        const Tensor& va2 = tp.value(a);
        const Tensor& vb2 = tp.value(b);
        std::vector<double> da(g.data.size()), db(g.data.size());
        for (std::size_t i = 0; i < g.data.size(); ++i) {
            da[i] = g.data[i] * vb2.data[i];
            db[i] = g.data[i] * va2.data[i];
        }
        add_grad(tp, a, va2, da);
        add_grad(tp, b, vb2, db);
    });
}

int scale(Tape& t, int a, double s) {
    Tensor out = t.value(a);
    for (double& v : out.data) v *= s;
    check_finite(out, "scale");
    return t.push(std::move(out), {a}, [a, s](Tape& tp, int id) {
        const Tensor& g = tp.grad(id);
        std::vector<double> da(g.data.size());
        for (std::size_t i = 0; i < da.size(); ++i) da[i] = g.data[i] * s;
        add_grad(tp, a, tp.value(a), da);
    });
}

int add_scalar(Tape& t, int a, double s) {
    Tensor out = t.value(a);
    for (double& v : out.data) v += s;
    check_finite(out, "add_scalar");
    return t.push(std::move(out), {a}, [a](Tape& tp, int id) {
        add_grad(tp, a, tp.value(a), tp.grad(id).data);
    });
}

int matmul(Tape& t, int a, int b) {
    const Tensor& va = t.value(a);
    const Tensor& vb = t.value(b);
    if (va.shape.size() != 2)
        throw DimensionError("matmul: left operand must be 2-D, got " +
                             va.shape_str());
    const bool vec_rhs = vb.shape.size() == 1;
    const std::size_t m = va.shape[0];
    const std::size_t k = va.shape[1];
    const std::size_t kb = vec_rhs ? vb.shape[0] : vb.shape[0];
    const std::size_t n = vec_rhs ? 1 : vb.shape[1];
    if (k != kb)
        throw DimensionError("matmul: inner dimension mismatch " +
                             va.shape_str() + " vs " + vb.shape_str());
    Tensor out = vec_rhs ? Tensor::zeros({m}) : Tensor::zeros({m, n});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (std::size_t p = 0; p < k; ++p)
                acc += va.data[i * k + p] * vb.data[p * n + j];
            out.data[i * n + j] = acc;
        }
    check_finite(out, "matmul");
    return t.push(std::move(out), {a, b},
                  [a, b, m, k, n](Tape& tp, int id) {
                      const Tensor& g = tp.grad(id);
                      const Tensor& va2 = tp.value(a);
                      const Tensor& vb2 = tp.value(b);
                      std::vector<double> da(m * k, 0.0), db(k * n, 0.0);
                      for (std::size_t i = 0; i < m; ++i)
                          for (std::size_t j = 0; j < n; ++j) {
                              const double gij = g.data[i * n + j];
                              for (std::size_t p = 0; p < k; ++p) {
                                  da[i * k + p] += gij * vb2.data[p * n + j];
                                  db[p * n + j] += gij * va2.data[i * k + p];
                              }
                          }
                      add_grad(tp, a, va2, da);
                      add_grad(tp, b, vb2, db);
                  });
}

namespace {

template <typename Fwd, typename Dfn>
int unary_op(Tape& t, int a, const char* name, Fwd fwd, Dfn dfn) {
    Tensor out = t.value(a);
    for (double& v : out.data) v = fwd(v);
    check_finite(out, name);
    return t.push(std::move(out), {a}, [a, dfn](Tape& tp, int id) {
        const Tensor& g = tp.grad(id);
        const Tensor& y = tp.value(id);
        const Tensor& x = tp.value(a);
        std::vector<double> da(g.data.size());
        for (std::size_t i = 0; i < da.size(); ++i)
            da[i] = g.data[i] * dfn(x.data[i], y.data[i]);
        add_grad(tp, a, x, da);
    });
}

}  // namespace

int tanh_op(Tape& t, int a) {
    return unary_op(
        t, a, "tanh", [](double v) { return std::tanh(v); },
        [](double, double y) { return 1.0 - y * y; });
}

int sigmoid(Tape& t, int a) {
    return unary_op(
        t, a, "sigmoid", [](double v) { return 1.0 / (1.0 + std::exp(-v)); },
        [](double, double y) { return y * (1.0 - y); });
}

int relu(Tape& t, int a) {
    return unary_op(
        t, a, "relu", [](double v) { return v > 0.0 ? v : 0.0; },
        [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

int softmax_rows(Tape& t, int a) {
    const Tensor& va = t.value(a);
    const std::size_t r = va.rows();
    const std::size_t c = va.shape.size() < 2 ? va.shape[0] : va.cols();
    const std::size_t rr = va.shape.size() < 2 ? 1 : r;
    Tensor out = va;
    for (std::size_t i = 0; i < rr; ++i) {
        double mx = out.data[i * c];
        for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, out.data[i * c + j]);
        double sum = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
            out.data[i * c + j] = std::exp(out.data[i * c + j] - mx);
            sum += out.data[i * c + j];
        }
        for (std::size_t j = 0; j < c; ++j) out.data[i * c + j] /= sum;
    }
    check_finite(out, "softmax");
    return t.push(std::move(out), {a}, [a, rr, c](Tape& tp, int id) {
        const Tensor& g = tp.grad(id);
        const Tensor& y = tp.value(id);
        std::vector<double> da(g.data.size());
        for (std::size_t i = 0; i < rr; ++i) {
            double dot = 0.0;
            for (std::size_t j = 0; j < c; ++j)
                dot += g.data[i * c + j] * y.data[i * c + j];
            for (std::size_t j = 0; j < c; ++j)
                da[i * c + j] = y.data[i * c + j] * (g.data[i * c + j] - dot);
        }
        add_grad(tp, a, tp.value(a), da);
    });
}

int concat(Tape& t, const std::vector<int>& parts, int axis) {
    if (parts.empty()) throw DimensionError("concat: no inputs");
    if (axis != 0) throw DimensionError("concat: only axis 0 supported");
    const std::size_t rank = t.value(parts[0]).shape.size();
    std::size_t total0 = 0;
    for (int p : parts) {
        const Tensor& v = t.value(p);
        if (v.shape.size() != rank)
            throw DimensionError("concat: rank mismatch");
        if (rank == 2 && v.shape[1] != t.value(parts[0]).shape[1])
            throw DimensionError("concat: trailing dimension mismatch " +
                                 v.shape_str() + " vs " +
                                 t.value(parts[0]).shape_str());
        total0 += v.shape[0];
    }
    Tensor out = rank == 2
                     ? Tensor::zeros({total0, t.value(parts[0]).shape[1]})
                     : Tensor::zeros({total0});
    std::size_t off = 0;
    for (int p : parts) {
        const Tensor& v = t.value(p);
        std::copy(v.data.begin(), v.data.end(), out.data.begin() + off);
        off += v.data.size();
    }
    return t.push(std::move(out), parts, [parts](Tape& tp, int id) {
        const Tensor& g = tp.grad(id);
        std::size_t off2 = 0;
        for (int p : parts) {
            const Tensor& v = tp.value(p);
            std::vector<double> dp(g.data.begin() + off2,
                                   g.data.begin() + off2 + v.data.size());
            add_grad(tp, p, v, dp);
            off2 += v.data.size();
        }
    });
}

int slice(Tape& t, int a, std::size_t start, std::size_t end) {
    const Tensor& va = t.value(a);
    if (va.shape.size() != 1)
        throw DimensionError("slice: expects 1-D tensor, got " + va.shape_str());
    if (start > end || end > va.shape[0])
        throw DimensionError("slice: range out of bounds for " + va.shape_str());
    Tensor out = Tensor::vec({va.data.begin() + start, va.data.begin() + end});
    return t.push(std::move(out), {a}, [a, start, end](Tape& tp, int id) {
        const Tensor& g = tp.grad(id);
        const Tensor& va2 = tp.value(a);
        std::vector<double> da(va2.data.size(), 0.0);
        for (std::size_t i = start; i < end; ++i) da[i] = g.data[i - start];
        add_grad(tp, a, va2, da);
    });
}

int mean_all(Tape& t, int a) {
    const Tensor& va = t.value(a);
    const double n = static_cast<double>(va.size());
    const double m =
        std::accumulate(va.data.begin(), va.data.end(), 0.0) / n;
    return t.push(Tensor::scalar(m), {a}, [a, n](Tape& tp, int id) {
        const double g = tp.grad(id).data[0];
        const Tensor& va2 = tp.value(a);
        std::vector<double> da(va2.data.size(), g / n);
        add_grad(tp, a, va2, da);
    });
}

int mean_axis0(Tape& t, int a) {
    const Tensor& va = t.value(a);
    if (va.shape.size() != 2)
        throw DimensionError("mean_axis0: expects 2-D tensor, got " +
                             va.shape_str());
    const std::size_t r = va.shape[0];
    const std::size_t c = va.shape[1];
    Tensor out = Tensor::zeros({c});
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out.data[j] += va.at(i, j);
    for (double& v : out.data) v /= static_cast<double>(r);
    return t.push(std::move(out), {a}, [a, r, c](Tape& tp, int id) {
        const Tensor& g = tp.grad(id);
        const Tensor& va2 = tp.value(a);
        std::vector<double> da(va2.data.size());
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j)
                da[i * c + j] = g.data[j] / static_cast<double>(r);
        add_grad(tp, a, va2, da);
    });
}

int mse(Tape& t, int pred, const Tensor& target) {
    const Tensor& vp = t.value(pred);
    require_same_shape(vp, target, "mse");
    const double n = static_cast<double>(vp.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < vp.size(); ++i) {
        const double d = vp.data[i] - target.data[i];
        acc += d * d;
    }
    Tensor tgt = target;
    return t.push(Tensor::scalar(acc / n), {pred},
                  [pred, tgt = std::move(tgt), n](Tape& tp, int id) {
                      const double g = tp.grad(id).data[0];
                      const Tensor& vp2 = tp.value(pred);
                      std::vector<double> dp(vp2.size());
                      for (std::size_t i = 0; i < dp.size(); ++i)
                          dp[i] = g * 2.0 * (vp2.data[i] - tgt.data[i]) / n;
                      add_grad(tp, pred, vp2, dp);
                  });
}

int cross_entropy(Tape& t, int logits, int class_id) {
    const Tensor& vl = t.value(logits);
    if (vl.shape.size() != 1)
        throw DimensionError("cross_entropy: logits must be 1-D, got " +
                             vl.shape_str());
    if (class_id < 0 || class_id >= static_cast<int>(vl.shape[0]))
        throw DimensionError("cross_entropy: class id " +
                             std::to_string(class_id) + " out of range for " +
                             vl.shape_str());
    double mx = vl.data[0];
    for (double v : vl.data) mx = std::max(mx, v);
    double sum = 0.0;
    for (double v : vl.data) sum += std::exp(v - mx);
    const double loss = std::log(sum) - (vl.data[class_id] - mx);
    return t.push(Tensor::scalar(loss), {logits},
                  [logits, class_id](Tape& tp, int id) {
                      const double g = tp.grad(id).data[0];
                      const Tensor& vl2 = tp.value(logits);
                      double mx2 = vl2.data[0];
                      for (double v : vl2.data) mx2 = std::max(mx2, v);
                      double sum2 = 0.0;
                      for (double v : vl2.data) sum2 += std::exp(v - mx2);
                      std::vector<double> dl(vl2.size());
                      for (std::size_t i = 0; i < dl.size(); ++i) {
                          const double p = std::exp(vl2.data[i] - mx2) / sum2;
                          dl[i] = g * (p - (static_cast<int>(i) == class_id
                                                ? 1.0
                                                : 0.0));
                      }
                      add_grad(tp, logits, vl2, dl);
                  });
}

int nll_probs(Tape& t, int probs, int class_id) {
    const Tensor& vp = t.value(probs);
    if (vp.shape.size() != 1)
        throw DimensionError("nll_probs: probs must be 1-D, got " +
                             vp.shape_str());
    if (class_id < 0 || class_id >= static_cast<int>(vp.shape[0]))
        throw DimensionError("nll_probs: class id out of range");
    const double p = std::max(vp.data[class_id], 1e-12);
    return t.push(Tensor::scalar(-std::log(p)), {probs},
                  [probs, class_id](Tape& tp, int id) {
                      const double g = tp.grad(id).data[0];
                      const Tensor& vp2 = tp.value(probs);
                      std::vector<double> dp(vp2.size(), 0.0);
                      dp[class_id] = -g / std::max(vp2.data[class_id], 1e-12);
                      add_grad(tp, probs, vp2, dp);
                  });
}

}  // namespace mtts::grad
