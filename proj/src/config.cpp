#include "mtts/config.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace mtts::config {

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw MissingInputError("cannot open " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write " + path);
    out << content;
}

namespace {

nlohmann::json parse_json(const std::string& text, const std::string& what) {
    try {
        return nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(what + " parse error at byte " +
                         std::to_string(e.byte) + ": " + e.what());
    }
}

template <typename T>
T get_or(const nlohmann::json& j, const char* key, T fallback) {
    auto it = j.find(key);
    if (it == j.end()) return fallback;
    try {
        return it->get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("bad value for \"") + key +
                          "\": " + e.what());
    }
}

template <typename T>
T require(const nlohmann::json& j, const char* key) {
    auto it = j.find(key);
    if (it == j.end())
        throw ConfigError(std::string("missing config key \"") + key + "\"");
    try {
        return it->get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("bad value for \"") + key +
                          "\": " + e.what());
    }
}

}  // namespace

GeneratorFile load_generator_config(const std::string& path) {
    const auto j = parse_json(read_file(path), "generator config");
    GeneratorFile out;
    auto& g = out.generator;
    g.theta = require<double>(j, "theta");
    g.sigma = require<double>(j, "sigma");
    g.dt = require<double>(j, "dt");
    g.horizon = require<double>(j, "horizon");
    g.k = require<int>(j, "k");
    g.i_ec = get_or<double>(j, "i_ec", 0.0);
    g.i_ce = get_or<double>(j, "i_ce", 0.0);
    g.seed = get_or<std::uint64_t>(j, "seed", 0);

    for (const auto& c : require<nlohmann::json>(j, "mean_components")) {
        synthgen::SineComponent sc;
        sc.amplitude = require<double>(c, "amplitude");
        sc.frequency = require<double>(c, "frequency");
        sc.phase = get_or<double>(c, "phase", 0.0);
        g.mean_components.push_back(sc);
    }

    if (j.contains("m") || j.contains("t_mat")) {
        g.m = require<std::vector<std::vector<double>>>(j, "m");
        g.t_mat = require<std::vector<std::vector<double>>>(j, "t_mat");
    } else if (j.contains("transition")) {
        const auto& t = j.at("transition");
        Rng rng(hash64(g.seed, 0x7247));
        const auto model = synthgen::random_transition_model(
            g.k, require<double>(t, "target_entropy_bits"),
            require<double>(t, "mean_dt"), rng);
        g.m = model.m;
        g.t_mat = model.t_mat;
    } else {
        throw ConfigError(
            "generator config needs either \"m\"/\"t_mat\" or a "
            "\"transition\" block");
    }

    double t_sum = 0.0;
    for (const auto& row : g.t_mat)
        for (double v : row) t_sum += v;
    const double t_mean = t_sum / (g.t_mat.empty()
                                       ? 1.0
                                       : static_cast<double>(g.k) * g.k);
    // Default decay halves an event's weight after one mean transition time.
    g.decay = get_or<double>(j, "decay", std::log(2.0) / t_mean);

    if (j.contains("grid")) {
        const auto& gr = j.at("grid");
        out.grid.train_res = require<int>(gr, "train_res");
        out.grid.train_per_cell = require<int>(gr, "train_per_cell");
        out.grid.test_res = require<int>(gr, "test_res");
        out.grid.test_per_cell = require<int>(gr, "test_per_cell");
    }
    g.validate();
    return out;
}

ExperimentFile load_experiment_config(const std::string& path) {
    const auto j = parse_json(read_file(path), "experiment config");
    ExperimentFile out;
    out.train_dataset = get_or<std::string>(j, "train_dataset", "");
    out.test_dataset = get_or<std::string>(j, "test_dataset", "");

    for (const auto& s : require<nlohmann::json>(j, "specs")) {
        fusion::FusionSpec spec;
        spec.ftype =
            fusion::fusion_type_from_string(require<std::string>(s, "type"));
        spec.method = fusion::fusion_method_from_string(
            get_or<std::string>(s, "method", "none"));
        spec.beta = get_or<double>(s, "beta", 0.5);
        spec.lambda = get_or<double>(s, "lambda", 0.0);
        spec.r = get_or<int>(s, "r", 1);
        if (s.contains("late_betas")) {
            const auto lb = s.at("late_betas").get<std::vector<double>>();
            if (lb.size() != 3)
                throw ConfigError("late_betas must have 3 entries");
            spec.late_betas = {lb[0], lb[1], lb[2]};
        }
        spec.validate();
        out.specs.push_back(spec);
    }

    const auto t = get_or<nlohmann::json>(j, "train", nlohmann::json::object());
    out.train.cont_window_len = get_or<std::size_t>(t, "cont_window_len", 20);
    out.train.learning_rate = get_or<double>(t, "learning_rate", 1e-3);
    out.train.epochs = get_or<int>(t, "epochs", 3);
    out.train.seed = get_or<std::uint64_t>(t, "seed", 0);
    out.train.optimizer = get_or<std::string>(t, "optimizer", "adam");
    out.train.dwa_temperature = get_or<double>(t, "dwa_temperature", 2.0);
    out.train.lambda = get_or<double>(t, "lambda", 0.0);
    out.train.hidden = get_or<std::size_t>(t, "hidden", 16);
    out.train.batch = get_or<std::size_t>(t, "batch", 8);
    out.train.max_examples_per_record =
        get_or<std::size_t>(t, "max_examples_per_record", 0);
    out.train.validate();
    return out;
}

}  // namespace mtts::config
