#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mtts/harness.hpp"
#include "mtts/synthgen.hpp"

namespace mtts::config {

struct GeneratorFile {
    synthgen::GeneratorConfig generator;
    synthgen::GridParams grid;
};

// Generator config JSON mirrors GeneratorConfig field names, grid parameters
// under "grid". The transition model is given either explicitly ("m",
// "t_mat") or as {"transition": {"target_entropy_bits": h, "mean_dt": t}}.
GeneratorFile load_generator_config(const std::string& path);

struct ExperimentFile {
    std::string train_dataset;
    std::string test_dataset;
    std::vector<fusion::FusionSpec> specs;
    harness::TrainConfig train;
};

ExperimentFile load_experiment_config(const std::string& path);

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& content);

}  // namespace mtts::config
