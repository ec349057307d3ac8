#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "sdlpgc/data.hpp"
#include "sdlpgc/model.hpp"
#include "sdlpgc/training.hpp"

// Command implementations behind the `sdlpgc` tool. Each command validates
// its whole configuration before doing any work and writes its outputs into
// one run directory guarded by a lock file.
namespace sdlpgc::experiment {

namespace fs = std::filesystem;

/// Environment variable naming the cache root used by `prepare`.
inline constexpr const char* kCacheEnv = "SDLPGC_CACHE";

struct ExperimentConfig {
    fs::path dataset;  // descriptor JSON
    fs::path output_dir = "runs";
    data::SplitSpec split;
    data::MissingPolicy missing = data::MissingPolicy::reject;
    /// Keep only the first max_nodes nodes (0 keeps all); for desk-scale runs.
    std::size_t max_nodes = 0;
    ModelConfig model;
    TrainConfig train;
    std::vector<std::uint64_t> ablation_seeds{1, 2, 3};

    /// Parses a config file, applies `key=value` overrides (dotted keys,
    /// values parsed as JSON when possible) and rejects unknown keys.
    static ExperimentConfig load(const fs::path& path, const std::vector<std::string>& overrides = {});
    static ExperimentConfig from_json_text(const std::string& text, const fs::path& base_dir,
                                           const std::vector<std::string>& overrides = {});
    std::string to_json_text() const;
};

/// Loads the descriptor's dataset honoring the missing policy and max_nodes.
data::GeoSeriesDataset load_experiment_dataset(const ExperimentConfig& config);

/// Exclusive ownership of an output directory for the lifetime of the object.
class RunLock {
public:
    explicit RunLock(const fs::path& dir);
    ~RunLock();
    RunLock(const RunLock&) = delete;
    RunLock& operator=(const RunLock&) = delete;

private:
    fs::path lock_;
};

/// Fresh directory `<root>/<YYYYmmdd-HHMMSS>-<tag>[-k]`.
fs::path make_run_dir(const fs::path& root, const std::string& tag);

fs::path cache_root();

struct PrepareSummary {
    std::string dataset;
    std::size_t steps = 0;
    std::size_t nodes = 0;
    std::string first_date;
    std::string last_date;
    data::SplitLengths lengths;
    data::NormStats norm;
    std::string cache_hash;
    fs::path cache_dir;
};

PrepareSummary cmd_prepare(const fs::path& descriptor, const fs::path& cache, data::LoadOptions options = {});

struct TrainOutcome {
    fs::path run_dir;
    TrainResult result;
    MetricsReport val_metrics;
};

TrainOutcome cmd_train(const ExperimentConfig& config, std::optional<fs::path> out_dir = std::nullopt);

enum class SplitName { train, val, test };
SplitName parse_split(const std::string& text);

struct EvaluateOutcome {
    fs::path run_dir;
    MetricsReport model;
    MetricsReport persistence;
};

EvaluateOutcome cmd_evaluate(const fs::path& checkpoint, const ExperimentConfig& config, SplitName split,
                             std::optional<fs::path> out_dir = std::nullopt);

/// Forecast of the v days following the last u observed days, de-normalized.
fs::path cmd_forecast(const fs::path& checkpoint, const ExperimentConfig& config,
                      std::optional<fs::path> out_dir = std::nullopt);

struct AblationOutcome {
    fs::path run_dir;
    AblationTable table;
};

AblationOutcome cmd_ablation(const ExperimentConfig& config, std::optional<fs::path> out_dir = std::nullopt);

struct GraphExport {
    fs::path run_dir;
    Tensor static_adj;   // [N, N], empty when the variant has no static graph
    Tensor dynamic_adj;  // [N, N], empty when the variant has no dynamic graph
};

/// Writes static_adjacency.csv, dynamic_adjacency.csv (for the test window
/// starting at window_index) and graphs.json.
GraphExport cmd_export_graphs(const fs::path& checkpoint, const ExperimentConfig& config, std::size_t window_index,
                              std::optional<fs::path> out_dir = std::nullopt);

/// Renders every recognized input (train_log.jsonl, metrics*.json,
/// *adjacency.csv) as an SVG image. Returns the written image paths.
std::vector<fs::path> cmd_plot(const std::vector<fs::path>& inputs, const fs::path& out_dir);

/// Minimal matrix CSV (no header) used for adjacency export.
void write_matrix_csv(const Tensor& matrix, const fs::path& path);
Tensor read_matrix_csv(const fs::path& path);

}  // namespace sdlpgc::experiment
