#pragma once

#include <array>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "mtts/core.hpp"
#include "mtts/fusion.hpp"

namespace mtts::harness {

struct TrainConfig {
    std::size_t cont_window_len = 20;
    double learning_rate = 1e-3;
    int epochs = 3;
    std::uint64_t seed = 0;
    std::string optimizer = "adam";
    double dwa_temperature = 2.0;
    double lambda = 0.0;  // correlation weight, used by corr methods
    std::size_t hidden = 16;
    std::size_t batch = 8;
    std::size_t max_examples_per_record = 0;  // 0 = keep all windows

    void validate() const;
};

// Training-set normalization statistics. Continuous values and inter-event
// gaps are standardized on the way in; metrics are de-standardized.
struct Standardizer {
    double cont_mean = 0.0;
    double cont_std = 1.0;
    double dt_mean = 0.0;
    double dt_std = 1.0;

    static Standardizer fit(const std::vector<core::MttsRecord>& records);
    double std_cont(double v) const { return (v - cont_mean) / cont_std; }
    double raw_cont(double v) const { return v * cont_std + cont_mean; }
    double std_dt(double v) const { return (v - dt_mean) / dt_std; }
    double raw_dt(double v) const { return v * dt_std + dt_mean; }
};

struct Example {
    fusion::InputWindow window;
    std::array<double, 5> target_cont{};      // raw signal units
    std::array<double, 5> target_cont_std{};  // standardized
    int target_type = 0;
    double target_dt = 0.0;  // seconds past window_end
    double target_dt_std = 0.0;
};

// Sliding windows with stride 1; a window needs 5 future continuous samples
// and at least one future event, otherwise it is dropped.
std::vector<Example> make_examples(const core::MttsRecord& record,
                                   const TrainConfig& cfg,
                                   const Standardizer& stats);

// Dynamic weight averaging over the per-task losses of past epochs.
// loss_history[epoch][task]; fewer than 2 epochs yields unit weights.
std::vector<double> dwa_weights(
    const std::vector<std::vector<double>>& loss_history, std::size_t k_tasks,
    double temperature);

struct EpochLosses {
    double cont = 0.0;
    double dt = 0.0;
    double event = 0.0;
    double total = 0.0;
};

struct TrainedModel {
    std::unique_ptr<fusion::Model> model;
    std::vector<EpochLosses> history;
};

TrainedModel train_model(const fusion::FusionSpec& spec,
                         const std::vector<core::MttsRecord>& train_records,
                         const TrainConfig& cfg);

// Rebuilds a model around checkpoint contents (including the "norm.stats"
// entry train_model stores).
std::unique_ptr<fusion::Model> model_from_checkpoint(
    const fusion::FusionSpec& spec, int k_event_types, std::size_t hidden,
    const std::string& checkpoint_json);

Standardizer stats_of(const fusion::Model& model);

struct MetricsReport {
    double rmse_cont = 0.0;
    double rmse_dt = 0.0;
    double f1_event = 0.0;
    std::size_t n_examples = 0;
};

MetricsReport evaluate(fusion::Model& model,
                       const std::vector<core::MttsRecord>& test_records,
                       const TrainConfig& cfg);

struct GridCell {
    double i_ec = 0.0;
    double i_ce = 0.0;
    std::map<std::string, MetricsReport> by_spec;  // keyed by spec name
};

struct GridResult {
    std::vector<GridCell> cells;  // ordered by (i_ec, i_ce)
};

struct GridRun {
    std::vector<TrainedModel> models;  // parallel to specs
    GridResult grid;
};

GridRun run_grid(const std::vector<fusion::FusionSpec>& specs,
                 const core::Dataset& train, const core::Dataset& test,
                 const TrainConfig& cfg, int threads = 1);

// Evaluates already-trained models per test cell.
GridResult evaluate_grid(std::vector<fusion::Model*> models,
                         const core::Dataset& test, const TrainConfig& cfg,
                         int threads = 1);

enum class GridAxis { Ec, Ce };

struct MarginalPoint {
    double axis_value = 0.0;  // remaining axis coordinate
    MetricsReport metrics;
};

// Weighted (by n_examples) arithmetic mean of each metric over the
// marginalized axis; returns one curve per spec over the other axis.
std::map<std::string, std::vector<MarginalPoint>> marginalize(
    const GridResult& grid, GridAxis axis);

// CSV emission / parsing. All files use a header row, '.' decimals, LF.
std::string metrics_csv(const GridResult& grid);
GridResult parse_metrics_csv(const std::string& text);
std::string marginal_csv(const GridResult& grid, GridAxis axis);
std::map<std::string, std::string> heatmap_csvs(const GridResult& grid);
std::string history_csv(const std::vector<EpochLosses>& history);

}  // namespace mtts::harness
