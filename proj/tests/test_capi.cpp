#include "doctest.h"

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "mtts.h"

namespace fs = std::filesystem;

namespace {

struct Ctx {
    mtts_ctx* p;
    Ctx() : p(mtts_ctx_new()) { mtts_set_log_level(p, 0); }
    ~Ctx() { mtts_ctx_free(p); }
};

fs::path fresh_dir(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("mtts_capi_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

void put(const fs::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    out << content;
}

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

const char* kGeneratorConfig = R"({
  "theta": 1.0, "sigma": 0.2, "dt": 0.25, "horizon": 8.0,
  "k": 2, "seed": 42,
  "mean_components": [{"amplitude": 1.0, "frequency": 0.2}],
  "m": [[0.5, 0.5], [0.5, 0.5]],
  "t_mat": [[0.5, 0.5], [0.5, 0.5]],
  "grid": {"train_res": 2, "train_per_cell": 2,
           "test_res": 2, "test_per_cell": 1}
})";

std::string experiment_config(const fs::path& data_dir) {
    std::ostringstream os;
    os << R"({
  "train_dataset": ")" << (data_dir / "train").string() << R"(",
  "test_dataset": ")" << (data_dir / "test").string() << R"(",
  "specs": [{"type": "unimodal_cont"}, {"type": "late", "method": "mean"}],
  "train": {"cont_window_len": 8, "epochs": 1, "hidden": 4,
            "batch": 8, "max_examples_per_record": 4}
})";
    return os.str();
}

}  // namespace

TEST_CASE("version string is set") {
    CHECK(std::string(mtts_version()) == "0.1.0");
}

TEST_CASE("generate writes deterministic datasets") {
    Ctx ctx;
    const auto dir = fresh_dir("gen");
    put(dir / "gen.json", kGeneratorConfig);

    const auto out_a = fresh_dir("gen_a");
    REQUIRE_MESSAGE(mtts_generate(ctx.p, (dir / "gen.json").c_str(),
                                  out_a.c_str(), 1) == MTTS_OK,
                    mtts_last_error(ctx.p));
    CHECK(std::string(mtts_last_summary(ctx.p)).find("train:") == 0);
    REQUIRE(fs::exists(out_a / "train" / "records.jsonl"));
    REQUIRE(fs::exists(out_a / "train" / "manifest.json"));
    REQUIRE(fs::exists(out_a / "test" / "records.jsonl"));

    SUBCASE("same config gives byte-identical output") {
        const auto out_b = fresh_dir("gen_b");
        REQUIRE(mtts_generate(ctx.p, (dir / "gen.json").c_str(),
                              out_b.c_str(), 1) == MTTS_OK);
        CHECK(slurp(out_a / "train" / "records.jsonl") ==
              slurp(out_b / "train" / "records.jsonl"));
        CHECK(slurp(out_a / "test" / "records.jsonl") ==
              slurp(out_b / "test" / "records.jsonl"));
    }
    SUBCASE("thread count does not change the bytes") {
        Ctx threaded;
        mtts_set_threads(threaded.p, 4);
        const auto out_b = fresh_dir("gen_t4");
        REQUIRE(mtts_generate(threaded.p, (dir / "gen.json").c_str(),
                              out_b.c_str(), 1) == MTTS_OK);
        CHECK(slurp(out_a / "train" / "records.jsonl") ==
              slurp(out_b / "train" / "records.jsonl"));
    }
    SUBCASE("a seed override changes the data") {
        Ctx seeded;
        mtts_set_seed_override(seeded.p, 777);
        const auto out_b = fresh_dir("gen_seed");
        REQUIRE(mtts_generate(seeded.p, (dir / "gen.json").c_str(),
                              out_b.c_str(), 1) == MTTS_OK);
        CHECK(slurp(out_a / "train" / "records.jsonl") !=
              slurp(out_b / "train" / "records.jsonl"));
        mtts_clear_seed_override(seeded.p);
        const auto out_c = fresh_dir("gen_seed_clear");
        REQUIRE(mtts_generate(seeded.p, (dir / "gen.json").c_str(),
                              out_c.c_str(), 1) == MTTS_OK);
        CHECK(slurp(out_a / "train" / "records.jsonl") ==
              slurp(out_c / "train" / "records.jsonl"));
    }
    SUBCASE("a non-empty output dir is refused without force") {
        CHECK(mtts_generate(ctx.p, (dir / "gen.json").c_str(), out_a.c_str(),
                            0) == MTTS_ERR_CONFIG);
        CHECK(std::string(mtts_last_error(ctx.p)).find("not empty") !=
              std::string::npos);
    }
}

TEST_CASE("config errors come back as the config status code") {
    Ctx ctx;
    const auto dir = fresh_dir("badcfg");
    put(dir / "broken.json", "{ not json");
    CHECK(mtts_generate(ctx.p, (dir / "broken.json").c_str(),
                        (dir / "out").c_str(), 1) == MTTS_ERR_CONFIG);
    CHECK(std::string(mtts_last_error(ctx.p)).find("parse error") !=
          std::string::npos);

    put(dir / "incomplete.json", R"({"theta": 1.0})");
    CHECK(mtts_generate(ctx.p, (dir / "incomplete.json").c_str(),
                        (dir / "out").c_str(), 1) == MTTS_ERR_CONFIG);
    CHECK(std::string(mtts_last_error(ctx.p)).find("sigma") !=
          std::string::npos);

    CHECK(mtts_generate(ctx.p, (dir / "absent.json").c_str(),
                        (dir / "out").c_str(), 1) == MTTS_ERR_MISSING_INPUT);
}

TEST_CASE("train, eval, grid and report pipeline") {
    Ctx ctx;
    const auto dir = fresh_dir("pipeline");
    put(dir / "gen.json", kGeneratorConfig);
    const auto data = dir / "data";
    REQUIRE_MESSAGE(mtts_generate(ctx.p, (dir / "gen.json").c_str(),
                                  data.c_str(), 1) == MTTS_OK,
                    mtts_last_error(ctx.p));
    put(dir / "exp.json", experiment_config(data));
    const auto results = dir / "results";

    SUBCASE("eval before training reports a missing checkpoint") {
        fs::create_directories(results);
        CHECK(mtts_eval(ctx.p, (dir / "exp.json").c_str(), results.c_str()) ==
              MTTS_ERR_MISSING_INPUT);
        CHECK(std::string(mtts_last_error(ctx.p)).find("checkpoint") !=
              std::string::npos);
    }
    SUBCASE("report without metrics reports missing input") {
        fs::create_directories(results);
        CHECK(mtts_report(ctx.p, results.c_str()) == MTTS_ERR_MISSING_INPUT);
    }
    SUBCASE("train then eval produces eval.csv") {
        REQUIRE_MESSAGE(mtts_train(ctx.p, (dir / "exp.json").c_str(),
                                   results.c_str()) == MTTS_OK,
                        mtts_last_error(ctx.p));
        CHECK(fs::exists(results / "unimodal_cont_none.ckpt"));
        CHECK(fs::exists(results / "unimodal_cont_none_history.csv"));
        CHECK(fs::exists(results / "late_mean.ckpt"));
        REQUIRE_MESSAGE(mtts_eval(ctx.p, (dir / "exp.json").c_str(),
                                  results.c_str()) == MTTS_OK,
                        mtts_last_error(ctx.p));
        const auto eval_csv = slurp(results / "eval.csv");
        CHECK(eval_csv.rfind("spec_type,spec_method,", 0) == 0);
        CHECK(eval_csv.find("unimodal_cont,none,") != std::string::npos);
        CHECK(eval_csv.find("late,mean,") != std::string::npos);
    }
    SUBCASE("grid then report produces the derived CSVs") {
        REQUIRE_MESSAGE(mtts_grid(ctx.p, (dir / "exp.json").c_str(),
                                  results.c_str()) == MTTS_OK,
                        mtts_last_error(ctx.p));
        REQUIRE(fs::exists(results / "metrics.csv"));
        REQUIRE_MESSAGE(mtts_report(ctx.p, results.c_str()) == MTTS_OK,
                        mtts_last_error(ctx.p));
        for (const char* name :
             {"marginal_ec.csv", "marginal_ce.csv", "heatmap_rmse_cont.csv",
              "heatmap_rmse_dt.csv", "heatmap_f1_event.csv"})
            CHECK(fs::exists(results / name));

        // report is idempotent over its own outputs
        const auto first = slurp(results / "marginal_ec.csv");
        REQUIRE(mtts_report(ctx.p, results.c_str()) == MTTS_OK);
        CHECK(slurp(results / "marginal_ec.csv") == first);

        // the grid training run is reproducible
        const auto other = dir / "results2";
        REQUIRE(mtts_grid(ctx.p, (dir / "exp.json").c_str(),
                          other.c_str()) == MTTS_OK);
        CHECK(slurp(other / "metrics.csv") == slurp(results / "metrics.csv"));
    }
    SUBCASE("experiment pointing at a missing dataset fails cleanly") {
        put(dir / "exp_bad.json", experiment_config(dir / "nowhere"));
        CHECK(mtts_train(ctx.p, (dir / "exp_bad.json").c_str(),
                         results.c_str()) == MTTS_ERR_MISSING_INPUT);
    }
}

TEST_CASE("the CLI front end matches the C API") {
    const char* cli = std::getenv("MTTS_CLI");
    REQUIRE_MESSAGE(cli != nullptr, "MTTS_CLI must point at the CLI binary");

    Ctx ctx;
    const auto dir = fresh_dir("cli");
    put(dir / "gen.json", kGeneratorConfig);
    const auto api_out = dir / "api";
    REQUIRE(mtts_generate(ctx.p, (dir / "gen.json").c_str(), api_out.c_str(),
                          1) == MTTS_OK);

    const auto cli_out = dir / "cli";
    const std::string cmd = std::string("\"") + cli + "\" generate --config \"" +
                            (dir / "gen.json").string() + "\" --out \"" +
                            cli_out.string() + "\" >/dev/null 2>&1";
    REQUIRE(std::system(cmd.c_str()) == 0);
    CHECK(slurp(api_out / "train" / "records.jsonl") ==
          slurp(cli_out / "train" / "records.jsonl"));
    CHECK(slurp(api_out / "test" / "records.jsonl") ==
          slurp(cli_out / "test" / "records.jsonl"));

    SUBCASE("CLI exit codes mirror the API status codes") {
        put(dir / "broken.json", "{");
        const std::string bad = std::string("\"") + cli +
                                "\" generate --config \"" +
                                (dir / "broken.json").string() +
                                "\" --out \"" + (dir / "x").string() +
                                "\" >/dev/null 2>&1";
        const int rc = std::system(bad.c_str());
        REQUIRE(rc != -1);
        CHECK(WEXITSTATUS(rc) == MTTS_ERR_CONFIG);

        const std::string missing = std::string("\"") + cli +
                                    "\" report --out \"" +
                                    (dir / "empty").string() +
                                    "\" >/dev/null 2>&1";
        fs::create_directories(dir / "empty");
        const int rc2 = std::system(missing.c_str());
        CHECK(WEXITSTATUS(rc2) == MTTS_ERR_MISSING_INPUT);
    }
    SUBCASE("CLI --seed override matches the API override") {
        Ctx seeded;
        mtts_set_seed_override(seeded.p, 321);
        const auto api_seeded = dir / "api_seeded";
        REQUIRE(mtts_generate(seeded.p, (dir / "gen.json").c_str(),
                              api_seeded.c_str(), 1) == MTTS_OK);
        const auto cli_seeded = dir / "cli_seeded";
        const std::string cmd2 = std::string("\"") + cli +
                                 "\" --seed 321 generate --config \"" +
                                 (dir / "gen.json").string() + "\" --out \"" +
                                 cli_seeded.string() + "\" >/dev/null 2>&1";
        REQUIRE(std::system(cmd2.c_str()) == 0);
        CHECK(slurp(api_seeded / "train" / "records.jsonl") ==
              slurp(cli_seeded / "train" / "records.jsonl"));
        CHECK(slurp(api_seeded / "train" / "records.jsonl") !=
              slurp(api_out / "train" / "records.jsonl"));
    }
}
