#include "mtts/nn.hpp"

#include <cmath>
#include <cstdio>

#include "json.hpp"

namespace mtts::grad {

int ParamStore::make_leaf(Tape& tape, const std::string& name) {
    // Leaf whose backward step adds the node gradient to the store.
    Tensor v = values_.at(name);
    Tensor* gslot = &grads_.at(name);
    return tape.push(std::move(v), {}, [gslot](Tape& tp, int id) {
        const Tensor& g = tp.grad(id);
        for (std::size_t i = 0; i < g.data.size(); ++i)
            gslot->data[i] += g.data[i];
    });
}

int ParamStore::param(Tape& tape, const std::string& name,
                      std::vector<std::size_t> shape, std::size_t fan_in,
                      Rng& rng) {
    if (!values_.count(name)) {
        Tensor t = Tensor::zeros(shape);
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        for (double& v : t.data) v = rng.uniform(-bound, bound);
        values_[name] = t;
        grads_[name] = Tensor::zeros(shape);
    }
    return make_leaf(tape, name);
}

int ParamStore::param_const(Tape& tape, const std::string& name,
                            std::vector<std::size_t> shape, double init) {
    if (!values_.count(name)) {
        Tensor t = Tensor::zeros(shape);
        for (double& v : t.data) v = init;
        values_[name] = t;
        grads_[name] = Tensor::zeros(shape);
    }
    return make_leaf(tape, name);
}

void ParamStore::set(const std::string& name, Tensor t) {
    grads_[name] = Tensor::zeros(t.shape);
    values_[name] = std::move(t);
}

void ParamStore::zero_grad() {
    for (auto& [name, g] : grads_)
        std::fill(g.data.begin(), g.data.end(), 0.0);
}

void ParamStore::adam_step(double lr, double beta1, double beta2, double eps) {
    ++adam_t_;
    const double bc1 = 1.0 - std::pow(beta1, adam_t_);
    const double bc2 = 1.0 - std::pow(beta2, adam_t_);
    for (auto& [name, v] : values_) {
        const Tensor& g = grads_.at(name);
        if (!adam_m_.count(name)) {
            adam_m_[name] = Tensor::zeros(v.shape);
            adam_v_[name] = Tensor::zeros(v.shape);
        }
        Tensor& m = adam_m_[name];
        Tensor& s = adam_v_[name];
        for (std::size_t i = 0; i < v.data.size(); ++i) {
            m.data[i] = beta1 * m.data[i] + (1.0 - beta1) * g.data[i];
            s.data[i] = beta2 * s.data[i] + (1.0 - beta2) * g.data[i] * g.data[i];
            const double mhat = m.data[i] / bc1;
            const double shat = s.data[i] / bc2;
            v.data[i] -= lr * mhat / (std::sqrt(shat) + eps);
        }
    }
}

void ParamStore::sgd_step(double lr) {
    for (auto& [name, v] : values_) {
        const Tensor& g = grads_.at(name);
        for (std::size_t i = 0; i < v.data.size(); ++i)
            v.data[i] -= lr * g.data[i];
    }
}

std::string ParamStore::save() const {
    nlohmann::ordered_json j;
    for (const auto& [name, t] : values_) {
        nlohmann::ordered_json entry;
        entry["shape"] = t.shape;
        nlohmann::ordered_json data = nlohmann::ordered_json::array();
        char buf[40];
        for (double v : t.data) {
            std::snprintf(buf, sizeof(buf), "%.17g", v);
            data.push_back(nlohmann::ordered_json::parse(buf));
        }
        entry["data"] = std::move(data);
        j[name] = std::move(entry);
    }
    return j.dump();
}

void ParamStore::load(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(std::string("checkpoint parse error at byte ") +
                         std::to_string(e.byte) + ": " + e.what());
    }
    values_.clear();
    grads_.clear();
    adam_m_.clear();
    adam_v_.clear();
    adam_t_ = 0;
    for (auto it = j.begin(); it != j.end(); ++it) {
        Tensor t;
        t.shape = it.value().at("shape").get<std::vector<std::size_t>>();
        t.data = it.value().at("data").get<std::vector<double>>();
        std::size_t n = 1;
        for (std::size_t d : t.shape) n *= d;
        if (n != t.data.size())
            throw ParseError("checkpoint entry " + it.key() +
                             " has inconsistent shape");
        grads_[it.key()] = Tensor::zeros(t.shape);
        values_[it.key()] = std::move(t);
    }
}

LstmParams lstm_params(Tape& tape, ParamStore& store, const std::string& prefix,
                       std::size_t input_size, std::size_t hidden_size,
                       Rng& rng) {
    LstmParams p;
    p.input_size = input_size;
    p.hidden_size = hidden_size;
    auto w = [&](const char* n) {
        return store.param(tape, prefix + "." + n, {hidden_size, input_size},
                           input_size, rng);
    };
    auto u = [&](const char* n) {
        return store.param(tape, prefix + "." + n, {hidden_size, hidden_size},
                           hidden_size, rng);
    };
    auto b = [&](const char* n) {
        return store.param(tape, prefix + "." + n, {hidden_size}, hidden_size,
                           rng);
    };
    p.w_i = w("w_i"); p.u_i = u("u_i"); p.b_i = b("b_i");
    p.w_f = w("w_f"); p.u_f = u("u_f");
    p.b_f = store.param_const(tape, prefix + ".b_f", {hidden_size}, 1.0);
    p.w_g = w("w_g"); p.u_g = u("u_g"); p.b_g = b("b_g");
    p.w_o = w("w_o"); p.u_o = u("u_o"); p.b_o = b("b_o");
    return p;
}

std::pair<int, int> lstm_cell(Tape& tape, int x, int h, int c,
                              const LstmParams& p) {
    auto gate = [&](int w, int u, int b) {
        return add(tape, add(tape, matmul(tape, w, x), matmul(tape, u, h)), b);
    };
    const int i = sigmoid(tape, gate(p.w_i, p.u_i, p.b_i));
    const int f = sigmoid(tape, gate(p.w_f, p.u_f, p.b_f));
    const int g = tanh_op(tape, gate(p.w_g, p.u_g, p.b_g));
    const int o = sigmoid(tape, gate(p.w_o, p.u_o, p.b_o));
    const int c_next = add(tape, mul(tape, f, c), mul(tape, i, g));
    const int h_next = mul(tape, o, tanh_op(tape, c_next));
    return {h_next, c_next};
}

int linear(Tape& tape, ParamStore& store, const std::string& prefix, int x,
           std::size_t in_dim, std::size_t out_dim, Rng& rng) {
    const int w = store.param(tape, prefix + ".w", {out_dim, in_dim}, in_dim, rng);
    const int b = store.param(tape, prefix + ".b", {out_dim}, in_dim, rng);
    return add(tape, matmul(tape, w, x), b);
}

}  // namespace mtts::grad
