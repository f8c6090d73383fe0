#include "mtts.h"

#include <cstdio>
#include <filesystem>
#include <functional>
#include <optional>
#include <sstream>
#include <string>

#include "mtts/config.hpp"
#include "mtts/core.hpp"
#include "mtts/harness.hpp"
#include "mtts/synthgen.hpp"

namespace fs = std::filesystem;

struct mtts_ctx {
    std::string last_error;
    std::string last_summary;
    int log_level = 1;
    int threads = 1;
    std::optional<std::uint64_t> seed_override;

    void log(int level, const std::string& msg) const {
        if (log_level >= level) std::fprintf(stderr, "[mtts] %s\n", msg.c_str());
    }
};

namespace {

using namespace mtts;

int run_guarded(mtts_ctx* ctx, const char* what,
                const std::function<std::string()>& body) {
    ctx->last_error.clear();
    ctx->last_summary.clear();
    try {
        ctx->last_summary = body();
        ctx->log(2, std::string(what) + ": " + ctx->last_summary);
        return MTTS_OK;
    } catch (const ConfigError& e) {
        ctx->last_error = e.what();
        return MTTS_ERR_CONFIG;
    } catch (const ParseError& e) {
        ctx->last_error = e.what();
        return MTTS_ERR_CONFIG;
    } catch (const MissingInputError& e) {
        ctx->last_error = e.what();
        return MTTS_ERR_MISSING_INPUT;
    } catch (const NumericError& e) {
        ctx->last_error = e.what();
        return MTTS_ERR_NUMERIC;
    } catch (const std::exception& e) {
        ctx->last_error = e.what();
        return MTTS_ERR_INTERNAL;
    }
}

bool dir_non_empty(const fs::path& p) {
    return fs::exists(p) && fs::is_directory(p) && !fs::is_empty(p);
}

std::string ckpt_path(const std::string& out_dir,
                      const fusion::FusionSpec& spec) {
    return (fs::path(out_dir) / (spec.name() + ".ckpt")).string();
}

}  // namespace

extern "C" {

mtts_ctx* mtts_ctx_new(void) { return new mtts_ctx(); }
void mtts_ctx_free(mtts_ctx* ctx) { delete ctx; }

const char* mtts_last_error(const mtts_ctx* ctx) {
    return ctx->last_error.c_str();
}
const char* mtts_last_summary(const mtts_ctx* ctx) {
    return ctx->last_summary.c_str();
}

void mtts_set_log_level(mtts_ctx* ctx, int level) { ctx->log_level = level; }
void mtts_set_threads(mtts_ctx* ctx, int threads) {
    ctx->threads = threads > 0 ? threads : 1;
}
void mtts_set_seed_override(mtts_ctx* ctx, uint64_t seed) {
    ctx->seed_override = seed;
}
void mtts_clear_seed_override(mtts_ctx* ctx) { ctx->seed_override.reset(); }

int mtts_generate(mtts_ctx* ctx, const char* config_path, const char* out_dir,
                  int force) {
    return run_guarded(ctx, "generate", [&]() -> std::string {
        auto file = config::load_generator_config(config_path);
        if (ctx->seed_override) file.generator.seed = *ctx->seed_override;
        if (dir_non_empty(out_dir) && !force)
            throw ConfigError(std::string(out_dir) +
                              " is not empty (use force to overwrite)");
        ctx->log(1, "generating grid datasets");
        const auto out =
            synthgen::generate_grid(file.grid, file.generator, ctx->threads);
        core::write_dataset((fs::path(out_dir) / "train").string(), out.train);
        core::write_dataset((fs::path(out_dir) / "test").string(), out.test);
        std::ostringstream os;
        os << "train: " << out.train.records.size() << " records, grid "
           << out.train.manifest.grid_shape.first << "x"
           << out.train.manifest.grid_shape.second
           << "; test: " << out.test.records.size() << " records, grid "
           << out.test.manifest.grid_shape.first << "x"
           << out.test.manifest.grid_shape.second;
        return os.str();
    });
}

int mtts_train(mtts_ctx* ctx, const char* config_path, const char* out_dir) {
    return run_guarded(ctx, "train", [&]() -> std::string {
        auto file = config::load_experiment_config(config_path);
        if (ctx->seed_override) file.train.seed = *ctx->seed_override;
        const auto train_ds = core::read_dataset(file.train_dataset);
        fs::create_directories(out_dir);
        for (const auto& spec : file.specs) {
            ctx->log(1, "training " + spec.name());
            auto tm = harness::train_model(spec, train_ds.records, file.train);
            config::write_file(ckpt_path(out_dir, spec), tm.model->params().save());
            config::write_file(
                (fs::path(out_dir) / (spec.name() + "_history.csv")).string(),
                harness::history_csv(tm.history));
        }
        return std::to_string(file.specs.size()) + " checkpoints written";
    });
}

int mtts_eval(mtts_ctx* ctx, const char* config_path, const char* out_dir) {
    return run_guarded(ctx, "eval", [&]() -> std::string {
        auto file = config::load_experiment_config(config_path);
        const auto test_ds = core::read_dataset(file.test_dataset);
        std::ostringstream os;
        os << "spec_type,spec_method,rmse_cont,rmse_dt,f1_event,n_examples\n";
        char buf[40];
        for (const auto& spec : file.specs) {
            const std::string path = ckpt_path(out_dir, spec);
            if (!fs::exists(path))
                throw MissingInputError("checkpoint not found: " + path);
            auto model = harness::model_from_checkpoint(
                spec, test_ds.manifest.k_event_types, file.train.hidden,
                config::read_file(path));
            ctx->log(1, "evaluating " + spec.name());
            const auto rep =
                harness::evaluate(*model, test_ds.records, file.train);
            os << fusion::to_string(spec.ftype) << ','
               << fusion::to_string(spec.method) << ',';
            std::snprintf(buf, sizeof(buf), "%.17g", rep.rmse_cont);
            os << buf << ',';
            std::snprintf(buf, sizeof(buf), "%.17g", rep.rmse_dt);
            os << buf << ',';
            std::snprintf(buf, sizeof(buf), "%.17g", rep.f1_event);
            os << buf << ',' << rep.n_examples << '\n';
        }
        config::write_file((fs::path(out_dir) / "eval.csv").string(), os.str());
        return "eval.csv written (" + std::to_string(file.specs.size()) +
               " specs)";
    });
}

int mtts_grid(mtts_ctx* ctx, const char* config_path, const char* out_dir) {
    return run_guarded(ctx, "grid", [&]() -> std::string {
        auto file = config::load_experiment_config(config_path);
        if (ctx->seed_override) file.train.seed = *ctx->seed_override;
        const auto train_ds = core::read_dataset(file.train_dataset);
        const auto test_ds = core::read_dataset(file.test_dataset);
        fs::create_directories(out_dir);
        ctx->log(1, "running grid over " + std::to_string(file.specs.size()) +
                        " specs");
        const auto run = harness::run_grid(file.specs, train_ds, test_ds,
                                           file.train, ctx->threads);
        for (std::size_t i = 0; i < file.specs.size(); ++i) {
            config::write_file(ckpt_path(out_dir, file.specs[i]),
                               run.models[i].model->params().save());
            config::write_file(
                (fs::path(out_dir) /
                 (file.specs[i].name() + "_history.csv")).string(),
                harness::history_csv(run.models[i].history));
        }
        config::write_file((fs::path(out_dir) / "metrics.csv").string(),
                           harness::metrics_csv(run.grid));
        return "metrics.csv written (" +
               std::to_string(run.grid.cells.size()) + " cells x " +
               std::to_string(file.specs.size()) + " specs)";
    });
}

int mtts_report(mtts_ctx* ctx, const char* results_dir) {
    return run_guarded(ctx, "report", [&]() -> std::string {
        const fs::path dir(results_dir);
        if (!fs::exists(dir / "metrics.csv"))
            throw MissingInputError("metrics.csv not found in " +
                                    std::string(results_dir));
        const auto grid = harness::parse_metrics_csv(
            config::read_file((dir / "metrics.csv").string()));
        config::write_file((dir / "marginal_ec.csv").string(),
                           harness::marginal_csv(grid, harness::GridAxis::Ec));
        config::write_file((dir / "marginal_ce.csv").string(),
                           harness::marginal_csv(grid, harness::GridAxis::Ce));
        int n_heatmaps = 0;
        for (const auto& [name, content] : harness::heatmap_csvs(grid)) {
            config::write_file((dir / name).string(), content);
            ++n_heatmaps;
        }
        return "marginal_ec.csv, marginal_ce.csv and " +
               std::to_string(n_heatmaps) + " heatmap CSVs written";
    });
}

const char* mtts_version(void) { return "0.1.0"; }

}  // extern "C"
