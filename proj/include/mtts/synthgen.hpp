#pragma once

#include <cstdint>
#include <vector>

#include "mtts/common.hpp"
#include "mtts/core.hpp"

namespace mtts::synthgen {

struct SineComponent {
    double amplitude = 1.0;
    double frequency = 1.0;  // Hz
    double phase = 0.0;      // radians
};

// All generation parameters for one sequence.
struct GeneratorConfig {
    double theta = 1.0;     // mean-reversion speed, 1/s
    double sigma = 0.1;     // diffusion scale
    double dt = 0.1;        // continuous sampling interval, s
    double horizon = 10.0;  // simulated duration, s
    std::vector<SineComponent> mean_components;
    int k = 2;  // event type count K
    std::vector<std::vector<double>> m;      // K x K row-stochastic
    std::vector<std::vector<double>> t_mat;  // K x K transition times, s
    double i_ec = 0.0;
    double i_ce = 0.0;
    double decay = 1.0;  // exponential event-weight decay, 1/s
    std::uint64_t seed = 0;

    void validate() const;  // throws ConfigError on any invariant violation
};

// Uniformly spaced per-type values spanning [-1, 1].
struct EventValueMap {
    std::vector<double> values;
};

EventValueMap event_values(int k);

// Sum of sine components at time t; phase_shift is added to every phase.
double mean_trajectory(double t, const std::vector<SineComponent>& components,
                       double phase_shift);

// Random time offset in [0, 1/f_min), applied as t -> t + offset.
double draw_phase_shift(const std::vector<SineComponent>& components, Rng& rng);

// One Euler-Maruyama step of the mean-reverting diffusion.
double ou_step(double x, double m, const GeneratorConfig& cfg, double noise);

// Exponentially weighted mean of past event values; 0 when no event <= t.
double intermodal_mean(const core::EventSequence& events, const EventValueMap& cmap,
                       double decay, double t);

double blended_mean(double m_c, double m_e, double i_ec);

// Next-type distribution: squared-distance term blended with the Markov row.
std::vector<double> transition_distribution(int prev, double c_t,
                                            const GeneratorConfig& cfg,
                                            const EventValueMap& cmap);

struct TransitionModel {
    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> t_mat;
};

// Builds (M, T) with each M row at the target Shannon entropy (bits) and
// T entries averaging mean_dt.
TransitionModel random_transition_model(int k, double target_entropy,
                                        double mean_dt, Rng& rng);

double row_entropy_bits(const std::vector<double>& row);

core::MttsRecord generate_sequence(const GeneratorConfig& cfg);

struct GridParams {
    int train_res = 5;
    int train_per_cell = 2;
    int test_res = 5;
    int test_per_cell = 1;
};

struct GridOutput {
    core::Dataset train;
    core::Dataset test;
};

// i_ec / i_ce sweep both axes over [0,1]; per-record seeds are derived from
// base_cfg.seed via hash64(seed, row, col, replicate). Generation may run on
// `threads` workers; output is identical to the sequential order.
GridOutput generate_grid(const GridParams& grid, const GeneratorConfig& base_cfg,
                         int threads = 1);

}  // namespace mtts::synthgen
