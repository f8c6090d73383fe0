#include "mtts/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>
#include <thread>

namespace mtts::harness {

namespace {

std::string fmt_real(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

// Canonical-order sum: sort before adding so the result does not depend on
// example order.
double stable_sum(std::vector<double>& xs) {
    std::sort(xs.begin(), xs.end());
    return std::accumulate(xs.begin(), xs.end(), 0.0);
}

}  // namespace

void TrainConfig::validate() const {
    if (cont_window_len < 5) throw ConfigError("cont_window_len must be >= 5");
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
    if (!(dwa_temperature > 0.0))
        throw ConfigError("dwa_temperature must be > 0");
    if (!(lambda >= 0.0)) throw ConfigError("lambda must be >= 0");
    if (optimizer != "adam" && optimizer != "sgd")
        throw ConfigError("unknown optimizer: " + optimizer);
    if (batch < 1) throw ConfigError("batch must be >= 1");
    if (hidden < 2) throw ConfigError("hidden must be >= 2");
}

Standardizer Standardizer::fit(const std::vector<core::MttsRecord>& records) {
    Standardizer s;
    double sum = 0.0, sq = 0.0;
    std::size_t n = 0;
    double dsum = 0.0, dsq = 0.0;
    std::size_t dn = 0;
    for (const auto& r : records) {
        for (double v : r.cont.values) {
            sum += v;
            sq += v * v;
            ++n;
        }
        for (std::size_t i = 1; i < r.events.events.size(); ++i) {
            const double gap =
                r.events.events[i].time - r.events.events[i - 1].time;
            dsum += gap;
            dsq += gap * gap;
            ++dn;
        }
    }
    if (n > 0) {
        s.cont_mean = sum / n;
        const double var = sq / n - s.cont_mean * s.cont_mean;
        s.cont_std = var > 0.0 ? std::sqrt(var) : 1.0;
    }
    if (dn > 0) {
        s.dt_mean = dsum / dn;
        const double var = dsq / dn - s.dt_mean * s.dt_mean;
        s.dt_std = var > 0.0 ? std::sqrt(var) : 1.0;
    }
    return s;
}

std::vector<Example> make_examples(const core::MttsRecord& record,
                                   const TrainConfig& cfg,
                                   const Standardizer& stats) {
    std::vector<Example> out;
    const auto& values = record.cont.values;
    const std::size_t w = cfg.cont_window_len;
    if (values.size() < w + 5) return out;

    const auto& events = record.events.events;
    for (std::size_t i = 0; i + w + 5 <= values.size(); ++i) {
        const double window_end = record.cont.time_at(i + w - 1);
        // First event strictly after the window.
        auto next_ev = std::upper_bound(
            events.begin(), events.end(), window_end,
            [](double t, const core::Event& e) { return t < e.time; });
        if (next_ev == events.end()) continue;

        Example ex;
        ex.window.window_end = window_end;
        ex.window.cont_window.reserve(w);
        for (std::size_t j = i; j < i + w; ++j)
            ex.window.cont_window.push_back(
                {record.cont.time_at(j), stats.std_cont(values[j])});
        double prev_time = 0.0;
        bool first = true;
        for (const auto& e : events) {
            if (e.time > window_end) break;
            const double gap = first ? 0.0 : e.time - prev_time;
            ex.window.event_window.push_back(
                {e.time, e.type, stats.std_dt(gap)});
            prev_time = e.time;
            first = false;
        }
        if (ex.window.event_window.empty()) continue;

        for (int h = 0; h < 5; ++h) {
            ex.target_cont[h] = values[i + w + h];
            ex.target_cont_std[h] = stats.std_cont(values[i + w + h]);
        }
        ex.target_type = next_ev->type;
        ex.target_dt = next_ev->time - window_end;
        ex.target_dt_std = stats.std_dt(ex.target_dt);
        out.push_back(std::move(ex));
    }

    if (cfg.max_examples_per_record > 0 &&
        out.size() > cfg.max_examples_per_record) {
        std::vector<Example> picked;
        picked.reserve(cfg.max_examples_per_record);
        for (std::size_t j = 0; j < cfg.max_examples_per_record; ++j)
            picked.push_back(std::move(
                out[j * out.size() / cfg.max_examples_per_record]));
        out = std::move(picked);
    }
    return out;
}

std::vector<double> dwa_weights(
    const std::vector<std::vector<double>>& loss_history, std::size_t k_tasks,
    double temperature) {
    if (k_tasks < 1) throw ConfigError("dwa_weights: k_tasks must be >= 1");
    std::vector<double> weights(k_tasks, 1.0);
    if (loss_history.size() < 2) return weights;

    const auto& prev = loss_history[loss_history.size() - 1];
    const auto& prev2 = loss_history[loss_history.size() - 2];
    std::vector<double> ratios(k_tasks);
    for (std::size_t k = 0; k < k_tasks; ++k)
        ratios[k] = prev2[k] > 0.0 ? prev[k] / prev2[k] : 1.0;

    const double mx = *std::max_element(ratios.begin(), ratios.end());
    double sum = 0.0;
    std::vector<double> e(k_tasks);
    for (std::size_t k = 0; k < k_tasks; ++k) {
        e[k] = std::exp((ratios[k] - mx) / temperature);
        sum += e[k];
    }
    for (std::size_t k = 0; k < k_tasks; ++k)
        weights[k] = static_cast<double>(k_tasks) * e[k] / sum;
    return weights;
}

namespace {

std::vector<Example> pooled_examples(
    const std::vector<core::MttsRecord>& records, const TrainConfig& cfg,
    const Standardizer& stats) {
    std::vector<Example> out;
    for (const auto& r : records) {
        auto ex = make_examples(r, cfg, stats);
        out.insert(out.end(), std::make_move_iterator(ex.begin()),
                   std::make_move_iterator(ex.end()));
    }
    return out;
}

}  // namespace

TrainedModel train_model(const fusion::FusionSpec& spec,
                         const std::vector<core::MttsRecord>& train_records,
                         const TrainConfig& cfg) {
    cfg.validate();
    spec.validate();
    if (train_records.empty())
        throw MissingInputError("train_model: no training records");
    const int k = train_records.front().k_event_types;

    const Standardizer stats = Standardizer::fit(train_records);
    const auto examples = pooled_examples(train_records, cfg, stats);
    if (examples.empty())
        throw MissingInputError("train_model: no usable training examples");

    TrainedModel result;
    result.model = std::make_unique<fusion::Model>(
        spec, k, cfg.hidden, hash64(cfg.seed, fnv1a(spec.name())));
    fusion::Model& model = *result.model;
    model.params().set("norm.stats",
                       fusion::Tensor::vec({stats.cont_mean, stats.cont_std,
                                            stats.dt_mean, stats.dt_std}));

    const bool use_corr =
        spec.method == fusion::FusionMethod::Corr && cfg.lambda > 0.0;
    std::vector<std::vector<double>> task_history;  // per epoch: 3 task losses
    long step = 0;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const auto weights =
            dwa_weights(task_history, 3, cfg.dwa_temperature);

        std::vector<std::size_t> order(examples.size());
        std::iota(order.begin(), order.end(), 0);
        Rng shuffle_rng(hash64(cfg.seed, 0xE9000 + epoch));
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[shuffle_rng.uniform_int(i)]);

        EpochLosses acc;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch) {
            const std::size_t stop =
                std::min(order.size(), start + cfg.batch);
            const std::size_t bsz = stop - start;
            ++step;
            try {
                fusion::Tape tape;
                int sum_node = -1;
                std::vector<int> reps_c, reps_e;
                for (std::size_t bi = start; bi < stop; ++bi) {
                    const Example& ex = examples[order[bi]];
                    const auto nodes = model.build(tape, ex.window);
                    const int l_cont = grad::mse(
                        tape, nodes.cont_pred,
                        fusion::Tensor::vec({ex.target_cont_std.begin(),
                                             ex.target_cont_std.end()}));
                    const int l_dt =
                        grad::mse(tape, nodes.dt_pred,
                                  fusion::Tensor::vec({ex.target_dt_std}));
                    const int l_ev =
                        nodes.scores_are_probs
                            ? grad::nll_probs(tape, nodes.event_scores,
                                              ex.target_type)
                            : grad::cross_entropy(tape, nodes.event_scores,
                                                  ex.target_type);
                    acc.cont += tape.value(l_cont).data[0];
                    acc.dt += tape.value(l_dt).data[0];
                    acc.event += tape.value(l_ev).data[0];

                    int weighted = grad::add(
                        tape,
                        grad::add(tape, grad::scale(tape, l_cont, weights[0]),
                                  grad::scale(tape, l_dt, weights[1])),
                        grad::scale(tape, l_ev, weights[2]));
                    sum_node = sum_node < 0
                                   ? weighted
                                   : grad::add(tape, sum_node, weighted);
                    if (use_corr && nodes.rep_cont >= 0) {
                        reps_c.push_back(nodes.rep_cont);
                        reps_e.push_back(nodes.rep_event);
                    }
                }
                int loss = grad::scale(tape, sum_node,
                                       1.0 / static_cast<double>(bsz));
                if (use_corr && reps_c.size() >= 2) {
                    const int penalty = fusion::corr_penalty(
                        tape, fusion::stack_rows(tape, reps_c),
                        fusion::stack_rows(tape, reps_e));
                    loss = grad::sub(tape, loss,
                                     grad::scale(tape, penalty, cfg.lambda));
                }
                acc.total += tape.value(loss).data[0] * bsz;

                model.params().zero_grad();
                tape.backward(loss);
                if (cfg.optimizer == "adam")
                    model.params().adam_step(cfg.learning_rate);
                else
                    model.params().sgd_step(cfg.learning_rate);
            } catch (const NumericError& e) {
                throw NumericError("training aborted at step " +
                                   std::to_string(step) + ": " + e.what());
            }
        }
        const double n = static_cast<double>(examples.size());
        EpochLosses epoch_losses{acc.cont / n, acc.dt / n, acc.event / n,
                                 acc.total / n};
        result.history.push_back(epoch_losses);
        task_history.push_back(
            {epoch_losses.cont, epoch_losses.dt, epoch_losses.event});
    }
    return result;
}

std::unique_ptr<fusion::Model> model_from_checkpoint(
    const fusion::FusionSpec& spec, int k_event_types, std::size_t hidden,
    const std::string& checkpoint_json) {
    auto model = std::make_unique<fusion::Model>(spec, k_event_types, hidden, 0);
    model->params().load(checkpoint_json);
    return model;
}

Standardizer stats_of(const fusion::Model& model) {
    Standardizer s;
    if (model.params().has("norm.stats")) {
        const auto& t = model.params().value("norm.stats");
        s.cont_mean = t.data[0];
        s.cont_std = t.data[1];
        s.dt_mean = t.data[2];
        s.dt_std = t.data[3];
    }
    return s;
}

MetricsReport evaluate(fusion::Model& model,
                       const std::vector<core::MttsRecord>& test_records,
                       const TrainConfig& cfg) {
    const Standardizer stats = stats_of(model);
    const auto examples = pooled_examples(test_records, cfg, stats);
    if (examples.empty())
        throw MissingInputError("evaluate: no usable test examples");

    const int k = model.k_event_types();
    std::vector<double> sq_cont, sq_dt;
    sq_cont.reserve(examples.size() * 5);
    sq_dt.reserve(examples.size());
    std::vector<std::vector<long>> confusion(
        k, std::vector<long>(k, 0));  // [truth][pred]

    for (const auto& ex : examples) {
        const auto out = model.forward(ex.window);
        for (int h = 0; h < 5; ++h) {
            const double d = stats.raw_cont(out.cont_next[h]) - ex.target_cont[h];
            sq_cont.push_back(d * d);
        }
        const double dd = stats.raw_dt(out.dt_next) - ex.target_dt;
        sq_dt.push_back(dd * dd);
        const int pred = static_cast<int>(
            std::max_element(out.event_scores.begin(), out.event_scores.end()) -
            out.event_scores.begin());
        ++confusion[ex.target_type][pred];
    }

    MetricsReport rep;
    rep.n_examples = examples.size();
    rep.rmse_cont = std::sqrt(stable_sum(sq_cont) /
                              static_cast<double>(examples.size() * 5));
    rep.rmse_dt =
        std::sqrt(stable_sum(sq_dt) / static_cast<double>(examples.size()));

    // Macro F1, skipping classes absent from both prediction and truth.
    double f1_sum = 0.0;
    int f1_classes = 0;
    for (int c = 0; c < k; ++c) {
        long tp = confusion[c][c];
        long fn = 0, fp = 0;
        for (int j = 0; j < k; ++j) {
            if (j != c) {
                fn += confusion[c][j];
                fp += confusion[j][c];
            }
        }
        if (tp + fn + fp == 0) continue;
        f1_sum += 2.0 * tp / static_cast<double>(2 * tp + fp + fn);
        ++f1_classes;
    }
    rep.f1_event = f1_classes > 0 ? f1_sum / f1_classes : 0.0;
    return rep;
}

GridResult evaluate_grid(std::vector<fusion::Model*> models,
                         const core::Dataset& test, const TrainConfig& cfg,
                         int threads) {
    // Partition records by their exact (i_ec, i_ce) coordinates.
    std::map<std::pair<double, double>, std::vector<core::MttsRecord>> cells;
    for (const auto& r : test.records)
        cells[{r.i_ec, r.i_ce}].push_back(r);
    const std::size_t expected =
        static_cast<std::size_t>(test.manifest.grid_shape.first) *
        static_cast<std::size_t>(test.manifest.grid_shape.second);
    if (cells.size() != expected)
        throw ConfigError("test dataset does not cover the manifest grid: " +
                          std::to_string(cells.size()) + " cells, expected " +
                          std::to_string(expected));

    GridResult grid;
    grid.cells.resize(cells.size());
    std::vector<const std::vector<core::MttsRecord>*> cell_records;
    std::size_t idx = 0;
    for (const auto& [key, records] : cells) {
        grid.cells[idx].i_ec = key.first;
        grid.cells[idx].i_ce = key.second;
        cell_records.push_back(&records);
        ++idx;
    }

    auto eval_cell = [&](std::size_t ci) {
        for (fusion::Model* m : models)
            grid.cells[ci].by_spec[m->spec().name()] =
                evaluate(*m, *cell_records[ci], cfg);
    };
    if (threads <= 1) {
        for (std::size_t ci = 0; ci < grid.cells.size(); ++ci) eval_cell(ci);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        for (int w = 0; w < threads; ++w)
            pool.emplace_back([&] {
                for (std::size_t ci = next.fetch_add(1); ci < grid.cells.size();
                     ci = next.fetch_add(1))
                    eval_cell(ci);
            });
        for (auto& th : pool) th.join();
    }
    return grid;
}

GridRun run_grid(const std::vector<fusion::FusionSpec>& specs,
                 const core::Dataset& train, const core::Dataset& test,
                 const TrainConfig& cfg, int threads) {
    if (specs.empty()) throw ConfigError("run_grid: no specs");
    GridRun run;
    run.models.resize(specs.size());

    auto train_one = [&](std::size_t si) {
        run.models[si] = train_model(specs[si], train.records, cfg);
    };
    if (threads <= 1) {
        for (std::size_t si = 0; si < specs.size(); ++si) train_one(si);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        const int n_workers =
            std::min<int>(threads, static_cast<int>(specs.size()));
        for (int w = 0; w < n_workers; ++w)
            pool.emplace_back([&] {
                for (std::size_t si = next.fetch_add(1); si < specs.size();
                     si = next.fetch_add(1))
                    train_one(si);
            });
        for (auto& th : pool) th.join();
    }

    std::vector<fusion::Model*> models;
    for (auto& tm : run.models) models.push_back(tm.model.get());
    run.grid = evaluate_grid(models, test, cfg, threads);
    return run;
}

std::map<std::string, std::vector<MarginalPoint>> marginalize(
    const GridResult& grid, GridAxis axis) {
    // key: spec -> remaining-axis value -> weighted sums
    struct Acc {
        double rmse_cont = 0.0, rmse_dt = 0.0, f1 = 0.0;
        double weight = 0.0;
        std::size_t n = 0;
    };
    std::map<std::string, std::map<double, Acc>> acc;
    for (const auto& cell : grid.cells) {
        const double key = axis == GridAxis::Ec ? cell.i_ce : cell.i_ec;
        for (const auto& [spec, rep] : cell.by_spec) {
            Acc& a = acc[spec][key];
            const double w = static_cast<double>(rep.n_examples);
            a.rmse_cont += w * rep.rmse_cont;
            a.rmse_dt += w * rep.rmse_dt;
            a.f1 += w * rep.f1_event;
            a.weight += w;
            a.n += rep.n_examples;
        }
    }
    std::map<std::string, std::vector<MarginalPoint>> out;
    for (const auto& [spec, curve] : acc) {
        for (const auto& [key, a] : curve) {
            MarginalPoint p;
            p.axis_value = key;
            p.metrics.rmse_cont = a.rmse_cont / a.weight;
            p.metrics.rmse_dt = a.rmse_dt / a.weight;
            p.metrics.f1_event = a.f1 / a.weight;
            p.metrics.n_examples = a.n;
            out[spec].push_back(p);
        }
    }
    return out;
}

namespace {

std::pair<std::string, std::string> split_spec_name(const std::string& name) {
    const auto pos = name.rfind('_');
    // Type names may themselves contain '_' (unimodal_cont).
    for (const char* t :
         {"early", "intermediate", "late", "unimodal_cont", "unimodal_event"}) {
        const std::string ts(t);
        if (name.rfind(ts + "_", 0) == 0)
            return {ts, name.substr(ts.size() + 1)};
    }
    return {name.substr(0, pos), name.substr(pos + 1)};
}

}  // namespace

std::string metrics_csv(const GridResult& grid) {
    std::ostringstream os;
    os << "spec_type,spec_method,i_ec,i_ce,rmse_cont,rmse_dt,f1_event,"
          "n_examples\n";
    for (const auto& cell : grid.cells) {
        for (const auto& [spec, rep] : cell.by_spec) {
            const auto [type, method] = split_spec_name(spec);
            os << type << ',' << method << ',' << fmt_real(cell.i_ec) << ','
               << fmt_real(cell.i_ce) << ',' << fmt_real(rep.rmse_cont) << ','
               << fmt_real(rep.rmse_dt) << ',' << fmt_real(rep.f1_event) << ','
               << rep.n_examples << '\n';
        }
    }
    return os.str();
}

GridResult parse_metrics_csv(const std::string& text) {
    std::istringstream is(text);
    std::string line;
    if (!std::getline(is, line))
        throw ParseError("metrics csv: empty input");
    std::map<std::pair<double, double>, GridCell> cells;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::istringstream ls(line);
        std::string f;
        while (std::getline(ls, f, ',')) fields.push_back(f);
        if (fields.size() != 8)
            throw ParseError("metrics csv: expected 8 fields, got line: " +
                             line);
        const double i_ec = std::stod(fields[2]);
        const double i_ce = std::stod(fields[3]);
        GridCell& cell = cells[{i_ec, i_ce}];
        cell.i_ec = i_ec;
        cell.i_ce = i_ce;
        MetricsReport rep;
        rep.rmse_cont = std::stod(fields[4]);
        rep.rmse_dt = std::stod(fields[5]);
        rep.f1_event = std::stod(fields[6]);
        rep.n_examples = std::stoul(fields[7]);
        cell.by_spec[fields[0] + "_" + fields[1]] = rep;
    }
    GridResult grid;
    for (auto& [key, cell] : cells) grid.cells.push_back(std::move(cell));
    return grid;
}

std::string marginal_csv(const GridResult& grid, GridAxis axis) {
    const auto curves = marginalize(grid, axis);
    std::ostringstream os;
    os << "spec_type,spec_method,"
       << (axis == GridAxis::Ec ? "i_ce" : "i_ec")
       << ",rmse_cont,rmse_dt,f1_event,n_examples\n";
    for (const auto& [spec, points] : curves) {
        const auto [type, method] = split_spec_name(spec);
        for (const auto& p : points) {
            os << type << ',' << method << ',' << fmt_real(p.axis_value) << ','
               << fmt_real(p.metrics.rmse_cont) << ','
               << fmt_real(p.metrics.rmse_dt) << ','
               << fmt_real(p.metrics.f1_event) << ',' << p.metrics.n_examples
               << '\n';
        }
    }
    return os.str();
}

std::map<std::string, std::string> heatmap_csvs(const GridResult& grid) {
    std::map<std::string, std::string> out;
    const struct {
        const char* name;
        double MetricsReport::* field;
    } metrics[] = {{"rmse_cont", &MetricsReport::rmse_cont},
                   {"rmse_dt", &MetricsReport::rmse_dt},
                   {"f1_event", &MetricsReport::f1_event}};
    for (const auto& m : metrics) {
        std::ostringstream os;
        os << "spec_type,spec_method,i_ec,i_ce,value\n";
        for (const auto& cell : grid.cells) {
            for (const auto& [spec, rep] : cell.by_spec) {
                const auto [type, method] = split_spec_name(spec);
                os << type << ',' << method << ',' << fmt_real(cell.i_ec) << ','
                   << fmt_real(cell.i_ce) << ',' << fmt_real(rep.*m.field)
                   << '\n';
            }
        }
        out[std::string("heatmap_") + m.name + ".csv"] = os.str();
    }
    return out;
}

std::string history_csv(const std::vector<EpochLosses>& history) {
    std::ostringstream os;
    os << "epoch,loss_cont,loss_dt,loss_event,loss_total\n";
    for (std::size_t i = 0; i < history.size(); ++i)
        os << i << ',' << fmt_real(history[i].cont) << ','
           << fmt_real(history[i].dt) << ',' << fmt_real(history[i].event)
           << ',' << fmt_real(history[i].total) << '\n';
    return os.str();
}

}  // namespace mtts::harness
