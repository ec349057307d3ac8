#include <doctest.h>

#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <sstream>

#include <nlohmann/json.hpp>

#include "sdlpgc/errors.hpp"
#include "sdlpgc/experiment.hpp"
#include "support.hpp"

using namespace sdlpgc;
namespace ex = sdlpgc::experiment;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Run {
    int code = -1;
    std::string output;
};

Run run(const std::string& args) {
    const std::string cmd = std::string(SDLPGC_CLI) + " " + args + " 2>&1";
    Run r;
    std::FILE* pipe = popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    std::array<char, 4096> buf{};
    std::size_t n;
    while ((n = std::fread(buf.data(), 1, buf.size(), pipe)) > 0) r.output.append(buf.data(), n);
    const int status = pclose(pipe);
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

const char* kModel = R"({"embed_dim": 4, "heads": 2, "head_dim": 3, "skip_proj_dim": 3, "residual_channels": 8,
                         "skip_channels": 8, "end_channels": 16, "lpgc_hidden": 6, "seed": 3})";

// Dataset plus a small experiment config inside one temp dir.
struct Workspace {
    testing::TempDir tmp;
    fs::path descriptor;
    fs::path config;

    explicit Workspace(std::size_t epochs = 3) {
        descriptor = testing::write_descriptor(testing::sst_like(300, 4), tmp / "data");
        config = tmp / "experiment.json";
        write_config(R"("train": {"epochs": )" + std::to_string(epochs) + R"(, "batch_size": 16, "seed": 9})");
    }
    void write_config(const std::string& extra) {
        testing::write_file(config, R"({"dataset": "data/descriptor.json", "output_dir": "runs", "model": )" +
                                        std::string(kModel) + ", " + extra + "}");
    }
    std::string cfg() const { return "-c " + q(config); }
};

double max_row_error(const Tensor& a) {
    double worst = 0.0;
    for (std::size_t r = 0; r < a.dim(0); ++r) {
        double s = 0.0;
        for (std::size_t c = 0; c < a.dim(1); ++c) s += a[r * a.dim(1) + c];
        worst = std::max(worst, std::abs(s - 1.0));
    }
    return worst;
}

}  // namespace

TEST_CASE("command line basics") {
    CHECK(run("--help").code == 0);
    CHECK(run("").code == 1);
    CHECK(run("bogus").code == 1);
    CHECK(run("train").code == 1);
    const Run r = run("evaluate -c /nonexistent.json --checkpoint x");
    CHECK(r.code == 1);
}

TEST_CASE("prepare is idempotent") {
    Workspace ws;
    const Run a = run("prepare -d " + q(ws.descriptor) + " --cache " + q(ws.tmp / "cache"));
    REQUIRE_MESSAGE(a.code == 0, a.output);
    const auto s1 = json::parse(testing::read_file(ws.tmp / "cache" / "synthetic" / "summary.json"));
    const Run b = run("prepare -d " + q(ws.descriptor) + " --cache " + q(ws.tmp / "cache"));
    REQUIRE(b.code == 0);
    const auto s2 = json::parse(testing::read_file(ws.tmp / "cache" / "synthetic" / "summary.json"));
    CHECK(s1["cache_hash"] == s2["cache_hash"]);
    CHECK(s1["T"] == 300);
    CHECK(s1["N"] == 4);
    CHECK(s1["first_date"] == "2015-01-01");
    for (const char* f : {"train.csv", "val.csv", "test.csv", "norm_stats.json"})
        CHECK(fs::exists(ws.tmp / "cache" / "synthetic" / f));
    CHECK(a.output.find(s1["cache_hash"].get<std::string>()) != std::string::npos);
}

TEST_CASE("prepare reports the missing coordinates file") {
    Workspace ws;
    fs::remove(ws.tmp / "data" / "coords.csv");
    const Run r = run("prepare -d " + q(ws.descriptor) + " --cache " + q(ws.tmp / "cache"));
    CHECK(r.code == 1);
    CHECK(r.output.find((ws.tmp / "data" / "coords.csv").string()) != std::string::npos);
}

TEST_CASE("unknown config keys are rejected") {
    Workspace ws;
    ws.write_config(R"("trian": {"epochs": 1})");
    Run r = run("train " + ws.cfg());
    CHECK(r.code == 1);
    CHECK(r.output.find("trian") != std::string::npos);

    ws.write_config(R"("train": {"epochs": 1, "learning_rat": 0.1})");
    r = run("train " + ws.cfg());
    CHECK(r.code == 1);
    CHECK(r.output.find("learning_rat") != std::string::npos);

    ws.write_config(R"("train": {"epochs": 1})");
    r = run("train " + ws.cfg() + " --set model.blocks=0");
    CHECK(r.code == 1);
    CHECK(!fs::exists(ws.tmp / "runs"));
}

TEST_CASE("config overrides") {
    Workspace ws;
    const auto c = ex::ExperimentConfig::load(ws.config, {"model.blocks=1", "train.learning_rate=0.01", "split.val_frac=0.15", "split.test_frac=0.15",
                                                           "model.variant=\"SD_GCN\"", "model.padding=none"});
    CHECK(c.model.blocks == 1);
    CHECK(c.train.learning_rate == 0.01);
    CHECK(c.split.val_frac == 0.15);
    CHECK(c.model.variant == Variant::sd_gcn);
    CHECK(c.model.padding == PaddingPolicy::none);
    CHECK(c.dataset == ws.tmp / "data" / "descriptor.json");
    CHECK_THROWS_AS(ex::ExperimentConfig::load(ws.config, {"model.nope=1"}), ConfigError);
    CHECK_THROWS_AS(ex::ExperimentConfig::load(ws.config, {"missing-equals"}), ConfigError);

    const auto again = ex::ExperimentConfig::from_json_text(c.to_json_text(), ws.tmp.path());
    CHECK(again.to_json_text() == c.to_json_text());
}

TEST_CASE("train, evaluate, forecast, export and plot") {
    Workspace ws;
    const fs::path run_dir = ws.tmp / "run";
    const Run t = run("train " + ws.cfg() + " -o " + q(run_dir));
    REQUIRE_MESSAGE(t.code == 0, t.output);
    for (const char* f : {"config.json", "train_log.jsonl", "metrics_val.json", "checkpoint/manifest.json"})
        CHECK(fs::exists(run_dir / f));
    CHECK(!fs::exists(run_dir / ".lock"));

    std::istringstream log(testing::read_file(run_dir / "train_log.jsonl"));
    std::string line;
    std::size_t epochs = 0;
    while (std::getline(log, line)) {
        const auto rec = json::parse(line);
        CHECK(rec["epoch"] == ++epochs);
        for (const char* k : {"train_loss", "val_mae", "val_rmse", "val_mape", "lr", "wall_time"}) CHECK(rec.contains(k));
    }
    CHECK(epochs == 3);
    const auto saved = json::parse(testing::read_file(run_dir / "config.json"));
    CHECK(saved["model"]["num_nodes"] == 4);

    const std::string ckpt = " --checkpoint " + q(run_dir / "checkpoint");
    const Run e = run("evaluate " + ws.cfg() + ckpt + " -o " + q(ws.tmp / "eval"));
    REQUIRE_MESSAGE(e.code == 0, e.output);
    const auto metrics = json::parse(testing::read_file(ws.tmp / "eval" / "metrics.json"));
    REQUIRE(metrics["horizons"].size() == 4);
    for (std::size_t i = 0; i < 4; ++i) CHECK(metrics["horizons"][i]["horizon"] == 3 * (i + 1));
    CHECK(fs::exists(ws.tmp / "eval" / "persistence.csv"));
    CHECK(e.output.find("persistence") != std::string::npos);

    const Run f = run("forecast " + ws.cfg() + ckpt + " -o " + q(ws.tmp / "fc"));
    REQUIRE_MESSAGE(f.code == 0, f.output);
    std::istringstream fc(testing::read_file(ws.tmp / "fc" / "forecast.csv"));
    std::size_t rows = 0;
    std::string first;
    while (std::getline(fc, line))
        if (rows++ == 1) first = line;
    CHECK(rows == 13);
    CHECK(first.rfind("2015-10-28,", 0) == 0);

    const Run g = run("export-graphs " + ws.cfg() + ckpt + " --window 5 -o " + q(ws.tmp / "graphs"));
    REQUIRE_MESSAGE(g.code == 0, g.output);
    const Tensor st = ex::read_matrix_csv(ws.tmp / "graphs" / "static_adjacency.csv");
    const Tensor dy = ex::read_matrix_csv(ws.tmp / "graphs" / "dynamic_adjacency.csv");
    CHECK(st.shape() == Shape{4, 4});
    CHECK(dy.shape() == Shape{4, 4});
    CHECK(max_row_error(st) < 1e-5);
    CHECK(max_row_error(dy) < 1e-5);
    const auto gj = json::parse(testing::read_file(ws.tmp / "graphs" / "graphs.json"));
    CHECK(gj["window_index"] == 5);
    CHECK(gj["epoch"] == 3);
    CHECK(gj["nodes"].size() == 4);
    CHECK(run("export-graphs " + ws.cfg() + ckpt + " --window 100000 -o " + q(ws.tmp / "g2")).code == 1);

    const Run p = run("plot " + q(run_dir / "train_log.jsonl") + " " + q(ws.tmp / "eval" / "metrics.json") + " " +
                      q(ws.tmp / "graphs" / "static_adjacency.csv") + " -o " + q(ws.tmp / "plots"));
    REQUIRE_MESSAGE(p.code == 0, p.output);
    for (const char* svg : {"train_log.svg", "metrics.svg", "static_adjacency.svg"}) {
        const std::string text = testing::read_file(ws.tmp / "plots" / svg);
        CHECK(text.find("<svg") != std::string::npos);
        CHECK(text.find("</svg>") != std::string::npos);
    }

    SUBCASE("a corrupted checkpoint is reported") {
        fs::resize_file(run_dir / "checkpoint" / "params.bin", 10);
        const Run bad = run("evaluate " + ws.cfg() + ckpt + " -o " + q(ws.tmp / "eval2"));
        CHECK(bad.code == 1);
        CHECK(bad.output.find("checkpoint") != std::string::npos);
    }
}

TEST_CASE("same seed gives identical metrics") {
    Workspace ws(2);
    std::string csv[2];
    for (int i = 0; i < 2; ++i) {
        const fs::path dir = ws.tmp / ("run" + std::to_string(i));
        REQUIRE(run("train " + ws.cfg() + " -o " + q(dir)).code == 0);
        REQUIRE(run("evaluate " + ws.cfg() + " --checkpoint " + q(dir / "checkpoint") + " -o " + q(dir / "eval")).code == 0);
        csv[i] = testing::read_file(dir / "eval" / "metrics.csv");
    }
    CHECK(!csv[0].empty());
    CHECK(csv[0] == csv[1]);
}

TEST_CASE("an output directory is owned by one run at a time") {
    testing::TempDir tmp;
    {
        ex::RunLock lock(tmp.path());
        CHECK(fs::exists(tmp / ".lock"));
        CHECK_THROWS_AS(ex::RunLock(tmp.path()), ConfigError);
    }
    CHECK(!fs::exists(tmp / ".lock"));

    Workspace ws(1);
    fs::create_directories(ws.tmp / "busy");
    testing::write_file(ws.tmp / "busy" / ".lock", "");
    const Run r = run("train " + ws.cfg() + " -o " + q(ws.tmp / "busy"));
    CHECK(r.code == 1);
    CHECK(r.output.find(".lock") != std::string::npos);

    const fs::path a = ex::make_run_dir(tmp.path(), "train");
    const fs::path b = ex::make_run_dir(tmp.path(), "train");
    CHECK(a != b);
    CHECK(fs::is_directory(a));
    CHECK(a.filename().string().size() >= std::string("YYYYmmdd-HHMMSS-train").size());
}

TEST_CASE("matrix csv round-trip") {
    testing::TempDir tmp;
    const Tensor m({2, 3}, {0.1, 0.2, 0.7, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0});
    ex::write_matrix_csv(m, tmp / "m.csv");
    CHECK(max_abs_diff(ex::read_matrix_csv(tmp / "m.csv"), m) < 1e-15);
}

TEST_CASE("shipped configs parse") {
    for (const auto& entry : fs::directory_iterator(fs::path(SDLPGC_SOURCE_DIR) / "configs")) {
        CAPTURE(entry.path().string());
        const auto c = ex::ExperimentConfig::load(entry.path());
        CHECK(c.dataset.filename() == "descriptor.json");
        CHECK_NOTHROW(c.train.validate());
    }
}
