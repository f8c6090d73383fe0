#include "mtts/synthgen.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <thread>

namespace mtts::synthgen {

void GeneratorConfig::validate() const {
    if (!(theta > 0.0)) throw ConfigError("theta must be > 0");
    if (!(sigma >= 0.0)) throw ConfigError("sigma must be >= 0");
    if (!(dt > 0.0)) throw ConfigError("dt must be > 0");
    if (!(horizon >= dt)) throw ConfigError("horizon must be >= dt");
    if (mean_components.empty())
        throw ConfigError("mean_components must be non-empty");
    for (const auto& c : mean_components) {
        if (!(c.frequency > 0.0))
            throw ConfigError("sine component frequency must be > 0");
        if (!std::isfinite(c.amplitude))
            throw ConfigError("sine component amplitude must be finite");
    }
    if (k < 2) throw ConfigError("k must be >= 2");
    const auto sz = static_cast<std::size_t>(k);
    if (m.size() != sz || t_mat.size() != sz)
        throw ConfigError("m and t_mat must be K x K");
    for (const auto& row : m) {
        if (row.size() != sz) throw ConfigError("m must be K x K");
        double sum = 0.0;
        for (double p : row) {
            if (!(p >= 0.0)) throw ConfigError("m entries must be >= 0");
            sum += p;
        }
        if (std::abs(sum - 1.0) > 1e-9)
            throw ConfigError("m rows must sum to 1");
    }
    for (const auto& row : t_mat) {
        if (row.size() != sz) throw ConfigError("t_mat must be K x K");
        for (double t : row)
            if (!(t > 0.0)) throw ConfigError("t_mat entries must be > 0");
    }
    if (!(i_ec >= 0.0 && i_ec <= 1.0)) throw ConfigError("i_ec out of [0,1]");
    if (!(i_ce >= 0.0 && i_ce <= 1.0)) throw ConfigError("i_ce out of [0,1]");
    if (!(decay > 0.0)) throw ConfigError("decay must be > 0");
}

EventValueMap event_values(int k) {
    if (k < 2) throw ConfigError("event_values requires k >= 2");
    EventValueMap map;
    map.values.resize(k);
    for (int j = 0; j < k; ++j)
        map.values[j] = -1.0 + 2.0 * j / static_cast<double>(k - 1);
    return map;
}

double mean_trajectory(double t, const std::vector<SineComponent>& components,
                       double phase_shift) {
    if (components.empty())
        throw ConfigError("mean_trajectory requires at least one component");
    double sum = 0.0;
    for (const auto& c : components)
        sum += c.amplitude *
               std::sin(2.0 * M_PI * c.frequency * t + c.phase + phase_shift);
    return sum;
}

double draw_phase_shift(const std::vector<SineComponent>& components, Rng& rng) {
    if (components.empty())
        throw ConfigError("draw_phase_shift requires at least one component");
    double f_min = components.front().frequency;
    for (const auto& c : components) f_min = std::min(f_min, c.frequency);
    return rng.uniform() / f_min;
}

double ou_step(double x, double m, const GeneratorConfig& cfg, double noise) {
    if (!std::isfinite(x) || !std::isfinite(m) || !std::isfinite(noise))
        throw NumericError("ou_step received non-finite input");
    return x + cfg.theta * (m - x) * cfg.dt +
           cfg.sigma * std::sqrt(cfg.dt) * noise;
}

double intermodal_mean(const core::EventSequence& events, const EventValueMap& cmap,
                       double decay, double t) {
    double weight_sum = 0.0;
    double value_sum = 0.0;
    for (const auto& e : events.events) {
        if (e.time > t) break;
        const double w = std::exp(-decay * (t - e.time));
        weight_sum += w;
        value_sum += w * cmap.values[e.type];
    }
    if (weight_sum == 0.0) return 0.0;
    return value_sum / weight_sum;
}

double blended_mean(double m_c, double m_e, double i_ec) {
    return m_c * (1.0 - i_ec) + m_e * i_ec;
}

std::vector<double> transition_distribution(int prev, double c_t,
                                            const GeneratorConfig& cfg,
                                            const EventValueMap& cmap) {
    if (prev < 0 || prev >= cfg.k)
        throw ConfigError("transition_distribution: prev type out of range");
    if (!std::isfinite(c_t))
        throw NumericError("transition_distribution: c_t not finite");
    if (cfg.i_ce == 0.0) return cfg.m[prev];

    std::vector<double> d(cfg.k);
    double d_sum = 0.0;
    for (int j = 0; j < cfg.k; ++j) {
        const double diff = cmap.values[j] - c_t;
        d[j] = diff * diff;
        d_sum += d[j];
    }
    std::vector<double> p(cfg.k);
    double p_sum = 0.0;
    for (int j = 0; j < cfg.k; ++j) {
        p[j] = d[j] / d_sum * cfg.i_ce + cfg.m[prev][j] * (1.0 - cfg.i_ce);
        p_sum += p[j];
    }
    for (double& v : p) v /= p_sum;
    return p;
}

double row_entropy_bits(const std::vector<double>& row) {
    double h = 0.0;
    for (double p : row)
        if (p > 0.0) h -= p * std::log2(p);
    return h;
}

namespace {

std::vector<double> softmax_with_temperature(const std::vector<double>& logits,
                                             double temperature) {
    std::vector<double> p(logits.size());
    const double max_l = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        p[i] = std::exp((logits[i] - max_l) / temperature);
        sum += p[i];
    }
    for (double& v : p) v /= sum;
    return p;
}

int sample_index(const std::vector<double>& probs, Rng& rng) {
    const double u = rng.uniform();
    double cum = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        cum += probs[i];
        if (u < cum) return static_cast<int>(i);
    }
    return static_cast<int>(probs.size()) - 1;
}

}  // namespace

TransitionModel random_transition_model(int k, double target_entropy,
                                        double mean_dt, Rng& rng) {
    if (k < 2) throw ConfigError("random_transition_model requires k >= 2");
    const double max_entropy = std::log2(static_cast<double>(k));
    if (!(target_entropy >= 0.0 && target_entropy <= max_entropy))
        throw ConfigError("target entropy outside [0, log2(K)]");
    if (!(mean_dt > 0.0)) throw ConfigError("mean_dt must be > 0");

    TransitionModel model;
    model.m.resize(k);
    for (int row = 0; row < k; ++row) {
        std::vector<double> logits(k);
        for (double& l : logits) l = rng.normal();

        if (max_entropy - target_entropy < 1e-12) {
            model.m[row].assign(k, 1.0 / k);
            continue;
        }
        if (target_entropy < 1e-12) {
            std::vector<double> one_hot(k, 0.0);
            one_hot[std::max_element(logits.begin(), logits.end()) -
                    logits.begin()] = 1.0;
            model.m[row] = one_hot;
            continue;
        }
        // Entropy of softmax(logits / tau) grows monotonically with tau;
        // bisect on log-temperature.
        double lo = -20.0, hi = 20.0;
        std::vector<double> probs;
        for (int iter = 0; iter < 100; ++iter) {
            const double mid = 0.5 * (lo + hi);
            probs = softmax_with_temperature(logits, std::exp(mid));
            const double h = row_entropy_bits(probs);
            if (std::abs(h - target_entropy) < 1e-3 * 0.5) break;
            if (h < target_entropy)
                lo = mid;
            else
                hi = mid;
        }
        if (std::abs(row_entropy_bits(probs) - target_entropy) > 1e-3)
            throw ConfigError("entropy target unreachable for sampled logits");
        model.m[row] = probs;
    }

    model.t_mat.resize(k);
    double total = 0.0;
    for (int row = 0; row < k; ++row) {
        model.t_mat[row].resize(k);
        for (double& t : model.t_mat[row]) {
            t = rng.uniform(0.5 * mean_dt, 1.5 * mean_dt);
            total += t;
        }
    }
    // Rescale so the matrix mean is exact.
    const double scale = mean_dt * k * k / total;
    for (auto& row : model.t_mat)
        for (double& t : row) t *= scale;
    return model;
}

core::MttsRecord generate_sequence(const GeneratorConfig& cfg) {
    cfg.validate();
    const EventValueMap cmap = event_values(cfg.k);
    Rng rng_init(hash64(cfg.seed, 0));
    Rng rng_cont(hash64(cfg.seed, 1));
    Rng rng_event(hash64(cfg.seed, 2));

    const double phase_offset = draw_phase_shift(cfg.mean_components, rng_init);
    const auto n_steps =
        static_cast<std::size_t>(std::floor(cfg.horizon / cfg.dt + 1e-9));
    const double t_end = static_cast<double>(n_steps) * cfg.dt;

    core::MttsRecord rec;
    rec.k_event_types = cfg.k;
    rec.i_ec = cfg.i_ec;
    rec.i_ce = cfg.i_ce;
    rec.seed = cfg.seed;
    rec.cont.t0 = 0.0;
    rec.cont.dt = cfg.dt;
    rec.cont.values.reserve(n_steps + 1);

    // First event: uniformly drawn type at t = 0.
    const int first_type = static_cast<int>(rng_init.uniform_int(cfg.k));
    rec.events.events.push_back({0.0, first_type});

    auto mean_at = [&](double t) {
        const double m_c =
            mean_trajectory(t + phase_offset, cfg.mean_components, 0.0);
        const double m_e = intermodal_mean(rec.events, cmap, cfg.decay, t);
        return blended_mean(m_c, m_e, cfg.i_ec);
    };
    rec.cont.values.push_back(mean_at(0.0));  // x(0) = m(0)

    // Zero-order hold: last sampled value at or before t.
    auto zoh = [&](double t) {
        auto idx = static_cast<std::size_t>(std::floor(t / cfg.dt + 1e-9));
        idx = std::min(idx, rec.cont.values.size() - 1);
        return rec.cont.values[idx];
    };

    // Pending next event; type decided at the previous event's time.
    int pending_type =
        sample_index(transition_distribution(first_type, zoh(0.0), cfg, cmap),
                     rng_event);
    double pending_time = cfg.t_mat[first_type][pending_type];

    auto emit_until = [&](double limit) {
        while (pending_time <= limit) {
            rec.events.events.push_back({pending_time, pending_type});
            const int prev = pending_type;
            pending_type = sample_index(
                transition_distribution(prev, zoh(pending_time), cfg, cmap),
                rng_event);
            pending_time += cfg.t_mat[prev][pending_type];
        }
    };

    for (std::size_t n = 1; n <= n_steps; ++n) {
        const double t_prev = static_cast<double>(n - 1) * cfg.dt;
        emit_until(t_prev);
        const double x_next = ou_step(rec.cont.values.back(), mean_at(t_prev),
                                      cfg, rng_cont.normal());
        rec.cont.values.push_back(x_next);
    }
    emit_until(t_end);
    return rec;
}

namespace {

std::vector<double> axis_values(int res) {
    std::vector<double> v(res);
    if (res == 1) {
        v[0] = 0.0;
        return v;
    }
    for (int i = 0; i < res; ++i)
        v[i] = static_cast<double>(i) / static_cast<double>(res - 1);
    return v;
}

core::Dataset generate_split(const std::string& split, int res, int per_cell,
                             const GeneratorConfig& base_cfg, int threads) {
    const std::uint64_t split_seed =
        hash64(base_cfg.seed, split == "train" ? 0 : 1);
    const auto axis = axis_values(res);
    const std::size_t total =
        static_cast<std::size_t>(res) * res * per_cell;

    core::Dataset ds;
    ds.manifest.version = 1;
    ds.manifest.split = split;
    ds.manifest.k_event_types = base_cfg.k;
    ds.manifest.record_count = static_cast<std::int64_t>(total);
    ds.manifest.grid_shape = {res, res};
    ds.records.resize(total);

    auto make_record = [&](std::size_t idx) {
        const int rep = static_cast<int>(idx % per_cell);
        const int col = static_cast<int>((idx / per_cell) % res);
        const int row = static_cast<int>(idx / per_cell / res);
        GeneratorConfig cfg = base_cfg;
        cfg.i_ec = axis[row];
        cfg.i_ce = axis[col];
        cfg.seed = hash64(split_seed, row, col, rep);
        core::MttsRecord rec = generate_sequence(cfg);
        rec.id = split + "-r" + std::to_string(row) + "c" + std::to_string(col) +
                 "n" + std::to_string(rep);
        ds.records[idx] = std::move(rec);
    };

    if (threads <= 1) {
        for (std::size_t i = 0; i < total; ++i) make_record(i);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        const int n_workers = std::min<int>(threads, static_cast<int>(total));
        pool.reserve(n_workers);
        for (int w = 0; w < n_workers; ++w)
            pool.emplace_back([&] {
                for (std::size_t i = next.fetch_add(1); i < total;
                     i = next.fetch_add(1))
                    make_record(i);
            });
        for (auto& th : pool) th.join();
    }
    return ds;
}

}  // namespace

GridOutput generate_grid(const GridParams& grid, const GeneratorConfig& base_cfg,
                         int threads) {
    if (grid.train_res < 1 || grid.test_res < 1)
        throw ConfigError("grid resolutions must be >= 1");
    if (grid.train_per_cell < 1 || grid.test_per_cell < 1)
        throw ConfigError("grid per-cell counts must be >= 1");
    base_cfg.validate();
    GridOutput out;
    out.train = generate_split("train", grid.train_res, grid.train_per_cell,
                               base_cfg, threads);
    out.test = generate_split("test", grid.test_res, grid.test_per_cell,
                              base_cfg, threads);
    return out;
}

}  // namespace mtts::synthgen
