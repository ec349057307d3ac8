#pragma once

#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <random>
#include <sstream>
#include <string>

#include "sdlpgc/data.hpp"
#include "sdlpgc/tensor.hpp"

namespace testing {

namespace fs = std::filesystem;
using sdlpgc::Shape;
using sdlpgc::Tensor;

inline Tensor random_tensor(const Shape& shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> dist(lo, hi);
    Tensor t(shape);
    for (double& x : t.values()) x = dist(rng);
    return t;
}

// Scratch directory removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag = "t") {
        static std::atomic<int> counter{0};
        std::random_device rd;
        path_ = fs::temp_directory_path() /
                ("sdlpgc-" + tag + "-" + std::to_string(rd()) + "-" + std::to_string(counter++));
        fs::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const fs::path& path() const { return path_; }
    fs::path operator/(const std::string& name) const { return path_ / name; }

private:
    fs::path path_;
};

inline void write_file(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    out << text;
}

inline std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// values(t, n) filled from f, dated daily from 2015-01-01.
inline sdlpgc::data::GeoSeriesDataset make_dataset(const std::string& name, std::size_t steps, std::size_t nodes,
                                                   const std::function<double(std::size_t, std::size_t)>& f) {
    sdlpgc::data::GeoSeriesDataset ds;
    ds.name = name;
    ds.values = Tensor({steps, nodes});
    const auto start = sdlpgc::data::parse_date("2015-01-01");
    for (std::size_t t = 0; t < steps; ++t) {
        ds.dates.push_back(start + std::chrono::days(t));
        for (std::size_t n = 0; n < nodes; ++n) ds.values[t * nodes + n] = f(t, n);
    }
    for (std::size_t n = 0; n < nodes; ++n) {
        ds.node_names.push_back("node_" + std::to_string(n));
        ds.coords.push_back({37.0 + 0.1 * static_cast<double>(n), 119.0 + 0.05 * static_cast<double>(n)});
    }
    return ds;
}

// Writes values.csv, coords.csv and descriptor.json into dir; returns the descriptor path.
inline fs::path write_descriptor(const sdlpgc::data::GeoSeriesDataset& ds, const fs::path& dir) {
    fs::create_directories(dir);
    sdlpgc::data::write_dataset(ds, dir / "values.csv", dir / "coords.csv");
    write_file(dir / "descriptor.json", "{\"name\": \"" + ds.name +
                                            "\", \"values_path\": \"values.csv\", \"coords_path\": \"coords.csv\", "
                                            "\"expected_T\": " +
                                            std::to_string(ds.num_steps()) +
                                            ", \"expected_N\": " + std::to_string(ds.num_nodes()) + "}");
    return dir / "descriptor.json";
}

// Seasonal-like SST field: shared annual cycle, per-node phase and offset, small noise.
inline sdlpgc::data::GeoSeriesDataset sst_like(std::size_t steps, std::size_t nodes, std::uint64_t seed = 3) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, 0.15);
    std::vector<double> eps(steps * nodes);
    for (double& e : eps) e = noise(rng);
    return make_dataset("synthetic", steps, nodes, [&](std::size_t t, std::size_t n) {
        const double phase = 0.3 * static_cast<double>(n);
        return 14.0 + 10.0 * std::sin(2.0 * std::numbers::pi * static_cast<double>(t) / 60.0 + phase) + 0.2 * n +
               eps[t * nodes + n];
    });
}

}  // namespace testing
