#pragma once

#include <map>
#include <string>
#include <vector>

#include "mtts/common.hpp"
#include "mtts/tape.hpp"

namespace mtts::grad {

// Named trainable parameters plus accumulated gradients and Adam state.
class ParamStore {
public:
    // Registers the parameter on first use (uniform [-1/sqrt(fan_in),
    // +1/sqrt(fan_in)] init) and returns a tape leaf whose gradient is
    // accumulated into this store on backward().
    int param(Tape& tape, const std::string& name,
              std::vector<std::size_t> shape, std::size_t fan_in, Rng& rng);

    // Same, but a fixed constant init (used for the forget-gate bias).
    int param_const(Tape& tape, const std::string& name,
                    std::vector<std::size_t> shape, double init);

    // Stores a non-trainable named tensor (it still rides along in
    // checkpoints; Adam leaves it untouched since its gradient stays zero).
    void set(const std::string& name, Tensor t);

    bool has(const std::string& name) const { return values_.count(name) > 0; }
    Tensor& value(const std::string& name) { return values_.at(name); }
    const Tensor& value(const std::string& name) const { return values_.at(name); }
    Tensor& gradient(const std::string& name) { return grads_.at(name); }
    const std::map<std::string, Tensor>& values() const { return values_; }

    void zero_grad();

    // One Adam step over all parameters using the accumulated gradients.
    void adam_step(double lr, double beta1 = 0.9, double beta2 = 0.999,
                   double eps = 1e-8);
    void sgd_step(double lr);

    // JSON checkpoint, exact round trip (17 significant digits).
    std::string save() const;
    void load(const std::string& text);

private:
    int make_leaf(Tape& tape, const std::string& name);

    std::map<std::string, Tensor> values_;
    std::map<std::string, Tensor> grads_;
    std::map<std::string, Tensor> adam_m_;
    std::map<std::string, Tensor> adam_v_;
    long adam_t_ = 0;
};

// Node ids of one LSTM cell's parameters inside a tape.
struct LstmParams {
    std::size_t input_size = 0;
    std::size_t hidden_size = 0;
    int w_i, u_i, b_i;  // input gate
    int w_f, u_f, b_f;  // forget gate
    int w_g, u_g, b_g;  // cell candidate
    int w_o, u_o, b_o;  // output gate
};

// Registers the twelve parameter tensors under `prefix` and returns their
// tape leaves. Forget-gate bias starts at 1.
LstmParams lstm_params(Tape& tape, ParamStore& store, const std::string& prefix,
                       std::size_t input_size, std::size_t hidden_size, Rng& rng);

// Standard gate equations; returns (h', c').
std::pair<int, int> lstm_cell(Tape& tape, int x, int h, int c,
                              const LstmParams& p);

// Linear layer y = W x + b registered under `prefix`.
int linear(Tape& tape, ParamStore& store, const std::string& prefix, int x,
           std::size_t in_dim, std::size_t out_dim, Rng& rng);

}  // namespace mtts::grad
