// CLI front end; talks to the core exclusively through the C API.
#include <cstdio>
#include <cstdlib>
#include <memory>
#include <string>

#include "CLI11.hpp"
#include "mtts.h"

namespace {

int log_level_from_env() {
    const char* v = std::getenv("MTTS_LOG");
    if (!v) return 1;
    const std::string s(v);
    if (s == "error") return 0;
    if (s == "info") return 1;
    if (s == "debug") return 2;
    return 1;
}

struct CtxDeleter {
    void operator()(mtts_ctx* c) const { mtts_ctx_free(c); }
};

int finish(mtts_ctx* ctx, int code) {
    if (code == MTTS_OK) {
        const char* summary = mtts_last_summary(ctx);
        if (summary && *summary) std::printf("%s\n", summary);
    } else {
        std::fprintf(stderr, "error: %s\n", mtts_last_error(ctx));
    }
    return code;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"mtts: synthetic mixed-type time series workbench"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir;
    std::uint64_t seed = 0;
    bool have_seed = false;
    int threads = 1;
    bool force = false;

    app.add_option("--seed", seed, "override the config seed")
        ->each([&](const std::string&) { have_seed = true; });
    app.add_option("--threads", threads, "worker thread cap");

    auto* generate = app.add_subcommand("generate", "generate grid datasets");
    generate->add_option("--config", config_path, "generator config JSON")
        ->required();
    generate->add_option("--out", out_dir, "output directory")->required();
    generate->add_flag("--force", force, "overwrite a non-empty out dir");

    auto* train = app.add_subcommand("train", "train all configured specs");
    train->add_option("--config", config_path, "experiment config JSON")
        ->required();
    train->add_option("--out", out_dir, "checkpoint directory")->required();

    auto* eval = app.add_subcommand("eval", "evaluate checkpoints");
    eval->add_option("--config", config_path, "experiment config JSON")
        ->required();
    eval->add_option("--out", out_dir, "checkpoint directory")->required();

    auto* grid = app.add_subcommand("grid", "train and evaluate per grid cell");
    grid->add_option("--config", config_path, "experiment config JSON")
        ->required();
    grid->add_option("--out", out_dir, "results directory")->required();

    auto* report = app.add_subcommand("report", "derive marginal/heatmap CSVs");
    report->add_option("--out", out_dir, "directory holding metrics.csv")
        ->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : MTTS_ERR_CONFIG;
    }

    std::unique_ptr<mtts_ctx, CtxDeleter> ctx(mtts_ctx_new());
    mtts_set_log_level(ctx.get(), log_level_from_env());
    mtts_set_threads(ctx.get(), threads);
    if (have_seed) mtts_set_seed_override(ctx.get(), seed);

    if (generate->parsed())
        return finish(ctx.get(), mtts_generate(ctx.get(), config_path.c_str(),
                                               out_dir.c_str(), force ? 1 : 0));
    if (train->parsed())
        return finish(ctx.get(),
                      mtts_train(ctx.get(), config_path.c_str(), out_dir.c_str()));
    if (eval->parsed())
        return finish(ctx.get(),
                      mtts_eval(ctx.get(), config_path.c_str(), out_dir.c_str()));
    if (grid->parsed())
        return finish(ctx.get(),
                      mtts_grid(ctx.get(), config_path.c_str(), out_dir.c_str()));
    if (report->parsed())
        return finish(ctx.get(), mtts_report(ctx.get(), out_dir.c_str()));
    return MTTS_ERR_CONFIG;
}
