#pragma once

#include <array>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sdlpgc/tensor.hpp"

namespace sdlpgc::data {

using Date = std::chrono::sys_days;

Date parse_date(const std::string& text);
std::string format_date(Date date);

/// Daily geo-coded series: values is [T, N] in degrees C.
struct GeoSeriesDataset {
    std::string name;
    Tensor values;
    std::vector<Date> dates;
    std::vector<std::string> node_names;
    std::vector<std::array<double, 2>> coords;  // (lat, lon) per node

    std::size_t num_steps() const { return values.rank() == 2 ? values.dim(0) : 0; }
    std::size_t num_nodes() const { return values.rank() == 2 ? values.dim(1) : 0; }
};

/// Throws DataError when any dataset invariant is violated.
void validate(const GeoSeriesDataset& dataset);

struct DatasetDescriptor {
    std::string name;
    std::filesystem::path values_path;
    std::filesystem::path coords_path;
    std::optional<std::size_t> expected_steps;
    std::optional<std::size_t> expected_nodes;

    /// Relative paths resolve against the descriptor file's directory.
    static DatasetDescriptor from_json_file(const std::filesystem::path& path);
    void to_json_file(const std::filesystem::path& path) const;
};

enum class MissingPolicy { reject, interpolate };

struct LoadOptions {
    MissingPolicy missing = MissingPolicy::reject;
    /// Longest run of consecutive missing days that interpolation may fill.
    std::size_t max_gap = 2;
};

GeoSeriesDataset load_dataset(const DatasetDescriptor& descriptor, const LoadOptions& options = {});

/// Writes values.csv / coords.csv in the loader's schema.
void write_dataset(const GeoSeriesDataset& dataset, const std::filesystem::path& values_path,
                   const std::filesystem::path& coords_path);

/// Single global z-score statistics, population convention.
struct NormStats {
    double mean = 0.0;
    double std = 1.0;

    double normalize(double x) const noexcept { return (x - mean) / std; }
    double denormalize(double z) const noexcept { return z * std + mean; }
    Tensor normalize(const Tensor& t) const;
    Tensor denormalize(const Tensor& t) const;
};

NormStats fit_normalizer(std::span<const double> train_values);

struct SplitSpec {
    double train_frac = 0.7;
    double val_frac = 0.1;
    double test_frac = 0.2;

    void validate() const;
};

struct SplitLengths {
    std::size_t train = 0;
    std::size_t val = 0;
    std::size_t test = 0;
};

/// val = floor(val_frac*T), test = round(test_frac*T), train takes the rest.
SplitLengths split_lengths(std::size_t steps, const SplitSpec& spec);

/// Contiguous chronological partitions train -> val -> test, each [T_part, N].
struct Splits {
    Tensor train;
    Tensor val;
    Tensor test;
    SplitLengths lengths;
};

Splits chronological_split(const GeoSeriesDataset& dataset, const SplitSpec& spec = {});

/// Number of stride-1 windows; throws DataError when the partition is too short.
std::size_t window_count(std::size_t steps, std::size_t input_len, std::size_t horizon);

struct WindowBatch {
    Tensor inputs;   // [B, 1, N, u]
    Tensor targets;  // [B, 1, N, v]
    std::vector<std::size_t> start_indices;

    std::size_t size() const { return start_indices.size(); }
    /// Targets laid out like model output, [B, v, N].
    Tensor targets_by_horizon() const;
};

/// All stride-1 (input, target) windows of one partition.
class WindowSet {
public:
    WindowSet(Tensor series, std::size_t input_len, std::size_t horizon);

    std::size_t size() const noexcept { return count_; }
    std::size_t input_len() const noexcept { return input_len_; }
    std::size_t horizon() const noexcept { return horizon_; }
    std::size_t num_nodes() const { return series_.dim(1); }
    const Tensor& series() const noexcept { return series_; }

    WindowBatch gather(std::span<const std::size_t> starts) const;
    WindowBatch all() const;
    /// Consecutive batches; shuffled with a seeded permutation when requested.
    std::vector<WindowBatch> batches(std::size_t batch_size, bool shuffle, std::uint64_t seed) const;

private:
    Tensor series_;
    std::size_t input_len_;
    std::size_t horizon_;
    std::size_t count_;
};

WindowSet make_windows(const Tensor& series, std::size_t input_len, std::size_t horizon);

}  // namespace sdlpgc::data
