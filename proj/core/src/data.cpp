#include "sdlpgc/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include <json.hpp>

#include "sdlpgc/errors.hpp"

namespace sdlpgc::data {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

std::string trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(first, last - first + 1));
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::size_t start = 0;
    while (true) {
        const auto comma = line.find(',', start);
        cells.push_back(trim(std::string_view(line).substr(start, comma == std::string::npos ? comma : comma - start)));
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    return cells;
}

bool is_missing_token(const std::string& cell) {
    static const std::set<std::string> tokens{"", "nan", "NaN", "NAN", "NA", "null", "-nan"};
    return tokens.count(cell) > 0;
}

std::optional<double> parse_number(const std::string& cell) {
    double v = 0.0;
    const char* first = cell.data();
    const char* last = cell.data() + cell.size();
    if (first != last && *first == '+') ++first;
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || ptr != last || !std::isfinite(v)) return std::nullopt;
    return v;
}

std::ifstream open_input(const fs::path& path) {
    if (!fs::exists(path)) throw DataError("missing file: " + path.string());
    std::ifstream in(path);
    if (!in) throw DataError("cannot open file: " + path.string());
    return in;
}

std::string location(const fs::path& path, std::size_t line) {
    return path.string() + ":" + std::to_string(line);
}

// Linear fill of interior gaps of at most max_gap consecutive cells.
void interpolate_column(std::vector<double>& col, std::vector<bool>& missing, std::size_t max_gap,
                        const fs::path& path, const std::string& node) {
    const std::size_t n = col.size();
    std::size_t i = 0;
    while (i < n) {
        if (!missing[i]) {
            ++i;
            continue;
        }
        std::size_t j = i;
        while (j < n && missing[j]) ++j;
        const std::size_t gap = j - i;
        if (i == 0 || j == n || gap > max_gap)
            throw DataError(path.string() + ": cannot interpolate " + std::to_string(gap) +
                            " missing value(s) at (row " + std::to_string(i) + ", col " + node + ")");
        const double lo = col[i - 1];
        const double hi = col[j];
        for (std::size_t k = i; k < j; ++k) {
            const double w = static_cast<double>(k - i + 1) / static_cast<double>(gap + 1);
            col[k] = lo + w * (hi - lo);
            missing[k] = false;
        }
        i = j;
    }
}

}  // namespace

Date parse_date(const std::string& text) {
    int y = 0;
    unsigned m = 0, d = 0;
    char dash1 = 0, dash2 = 0;
    std::istringstream in(text);
    in >> y >> dash1 >> m >> dash2 >> d;
    const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{m}, std::chrono::day{d}};
    if (!in || dash1 != '-' || dash2 != '-' || !ymd.ok() || in.peek() != std::char_traits<char>::eof())
        throw DataError("invalid date '" + text + "' (expected YYYY-MM-DD)");
    return std::chrono::sys_days{ymd};
}

std::string format_date(Date date) {
    const std::chrono::year_month_day ymd{date};
    std::ostringstream out;
    out << std::setfill('0') << std::setw(4) << static_cast<int>(ymd.year()) << '-' << std::setw(2)
        << static_cast<unsigned>(ymd.month()) << '-' << std::setw(2) << static_cast<unsigned>(ymd.day());
    return out.str();
}

void validate(const GeoSeriesDataset& ds) {
    if (ds.values.rank() != 2 || ds.num_steps() == 0 || ds.num_nodes() == 0)
        throw DataError(ds.name + ": values must be a non-empty [T, N] matrix");
    for (std::size_t i = 0; i < ds.values.size(); ++i)
        if (!std::isfinite(ds.values[i]))
            throw DataError(ds.name + ": non-finite value at (row " + std::to_string(i / ds.num_nodes()) + ", col " +
                            std::to_string(i % ds.num_nodes()) + ")");
    if (ds.dates.size() != ds.num_steps()) throw DataError(ds.name + ": one date per row required");
    for (std::size_t t = 1; t < ds.dates.size(); ++t)
        if (ds.dates[t] - ds.dates[t - 1] != std::chrono::days{1})
            throw DataError(ds.name + ": dates must increase with a 1-day stride; row " + std::to_string(t) + " (" +
                            format_date(ds.dates[t]) + ") follows " + format_date(ds.dates[t - 1]));
    if (ds.coords.size() != ds.num_nodes() || ds.node_names.size() != ds.num_nodes())
        throw DataError(ds.name + ": one coordinate row and name per node required");
    std::set<std::array<double, 2>> seen;
    for (std::size_t n = 0; n < ds.coords.size(); ++n)
        if (!seen.insert(ds.coords[n]).second)
            throw DataError(ds.name + ": duplicate coordinates for node " + ds.node_names[n]);
}

DatasetDescriptor DatasetDescriptor::from_json_file(const fs::path& path) {
    if (!fs::exists(path)) throw DataError("missing file: " + path.string());
    std::ifstream in(path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw DataError(path.string() + ": invalid JSON: " + e.what());
    }
    static const std::set<std::string> known{"name", "values_path", "coords_path", "expected_T", "expected_N"};
    for (const auto& [key, _] : j.items())
        if (!known.count(key)) throw ConfigError(path.string() + ": unknown descriptor key '" + key + "'");
    DatasetDescriptor d;
    try {
        const fs::path base = path.parent_path();
        d.name = j.at("name").get<std::string>();
        d.values_path = base / j.at("values_path").get<std::string>();
        d.coords_path = base / j.at("coords_path").get<std::string>();
        if (j.contains("expected_T") && !j["expected_T"].is_null()) d.expected_steps = j["expected_T"].get<std::size_t>();
        if (j.contains("expected_N") && !j["expected_N"].is_null()) d.expected_nodes = j["expected_N"].get<std::size_t>();
    } catch (const json::exception& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    return d;
}

void DatasetDescriptor::to_json_file(const fs::path& path) const {
    json j{{"name", name}, {"values_path", values_path.string()}, {"coords_path", coords_path.string()}};
    j["expected_T"] = expected_steps ? json(*expected_steps) : json(nullptr);
    j["expected_N"] = expected_nodes ? json(*expected_nodes) : json(nullptr);
    std::ofstream(path) << j.dump(2) << '\n';
}

GeoSeriesDataset load_dataset(const DatasetDescriptor& desc, const LoadOptions& options) {
    GeoSeriesDataset ds;
    ds.name = desc.name;

    auto in = open_input(desc.values_path);
    std::string line;
    if (!std::getline(in, line)) throw DataError(desc.values_path.string() + ": empty file");
    auto header = split_csv_line(line);
    if (header.size() < 2 || header[0] != "date")
        throw DataError(location(desc.values_path, 1) + ": header must be 'date,node_0,...'");
    ds.node_names.assign(header.begin() + 1, header.end());
    const std::size_t nodes = ds.node_names.size();

    std::vector<std::vector<double>> columns(nodes);
    std::vector<std::vector<bool>> missing(nodes);
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        auto cells = split_csv_line(line);
        if (cells.size() != nodes + 1)
            throw DataError(location(desc.values_path, line_no) + ": ragged row with " + std::to_string(cells.size()) +
                            " cells, expected " + std::to_string(nodes + 1));
        const std::size_t row = ds.dates.size();
        try {
            ds.dates.push_back(parse_date(cells[0]));
        } catch (const DataError& e) {
            throw DataError(location(desc.values_path, line_no) + ": " + e.what());
        }
        for (std::size_t c = 0; c < nodes; ++c) {
            const auto& cell = cells[c + 1];
            if (is_missing_token(cell)) {
                if (options.missing == MissingPolicy::reject)
                    throw DataError(location(desc.values_path, line_no) + ": missing value (NaN) at (row " +
                                    std::to_string(row) + ", col " + std::to_string(c) + ")");
                columns[c].push_back(0.0);
                missing[c].push_back(true);
                continue;
            }
            auto v = parse_number(cell);
            if (!v)
                throw DataError(location(desc.values_path, line_no) + ": non-numeric value '" + cell + "' at (row " +
                                std::to_string(row) + ", col " + std::to_string(c) + ")");
            columns[c].push_back(*v);
            missing[c].push_back(false);
        }
    }
    const std::size_t steps = ds.dates.size();
    if (steps == 0) throw DataError(desc.values_path.string() + ": no data rows");
    for (std::size_t t = 1; t < steps; ++t)
        if (ds.dates[t] <= ds.dates[t - 1])
            throw DataError(desc.values_path.string() + ": non-monotonic dates at row " + std::to_string(t) + " (" +
                            format_date(ds.dates[t]) + " after " + format_date(ds.dates[t - 1]) + ")");
    if (options.missing == MissingPolicy::interpolate)
        for (std::size_t c = 0; c < nodes; ++c)
            interpolate_column(columns[c], missing[c], options.max_gap, desc.values_path, ds.node_names[c]);

    ds.values = Tensor({steps, nodes});
    for (std::size_t t = 0; t < steps; ++t)
        for (std::size_t c = 0; c < nodes; ++c) ds.values[t * nodes + c] = columns[c][t];

    auto cin = open_input(desc.coords_path);
    if (!std::getline(cin, line)) throw DataError(desc.coords_path.string() + ": empty file");
    if (split_csv_line(line) != std::vector<std::string>{"node", "lat", "lon"})
        throw DataError(location(desc.coords_path, 1) + ": header must be 'node,lat,lon'");
    std::vector<std::optional<std::array<double, 2>>> coords(nodes);
    line_no = 1;
    while (std::getline(cin, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        auto cells = split_csv_line(line);
        if (cells.size() != 3) throw DataError(location(desc.coords_path, line_no) + ": ragged row");
        auto it = std::find(ds.node_names.begin(), ds.node_names.end(), cells[0]);
        if (it == ds.node_names.end())
            throw DataError(location(desc.coords_path, line_no) + ": unknown node '" + cells[0] + "'");
        auto lat = parse_number(cells[1]);
        auto lon = parse_number(cells[2]);
        if (!lat || !lon) throw DataError(location(desc.coords_path, line_no) + ": invalid coordinate");
        auto& slot = coords[static_cast<std::size_t>(it - ds.node_names.begin())];
        if (slot) throw DataError(location(desc.coords_path, line_no) + ": duplicate node '" + cells[0] + "'");
        slot = std::array<double, 2>{*lat, *lon};
    }
    for (std::size_t c = 0; c < nodes; ++c) {
        if (!coords[c]) throw DataError(desc.coords_path.string() + ": no coordinates for node '" + ds.node_names[c] + "'");
        ds.coords.push_back(*coords[c]);
    }

    validate(ds);
    if (desc.expected_steps && *desc.expected_steps != steps)
        throw DataError(desc.name + ": expected T=" + std::to_string(*desc.expected_steps) + ", found " +
                        std::to_string(steps));
    if (desc.expected_nodes && *desc.expected_nodes != nodes)
        throw DataError(desc.name + ": expected N=" + std::to_string(*desc.expected_nodes) + ", found " +
                        std::to_string(nodes));
    return ds;
}

void write_dataset(const GeoSeriesDataset& ds, const fs::path& values_path, const fs::path& coords_path) {
    std::ofstream v(values_path);
    v << "date";
    for (const auto& n : ds.node_names) v << ',' << n;
    v << '\n' << std::setprecision(17);
    for (std::size_t t = 0; t < ds.num_steps(); ++t) {
        v << format_date(ds.dates[t]);
        for (std::size_t c = 0; c < ds.num_nodes(); ++c) v << ',' << ds.values[t * ds.num_nodes() + c];
        v << '\n';
    }
    std::ofstream c(coords_path);
    c << "node,lat,lon\n" << std::setprecision(17);
    for (std::size_t n = 0; n < ds.num_nodes(); ++n)
        c << ds.node_names[n] << ',' << ds.coords[n][0] << ',' << ds.coords[n][1] << '\n';
}

Tensor NormStats::normalize(const Tensor& t) const {
    Tensor out = t;
    for (double& x : out.values()) x = normalize(x);
    return out;
}

Tensor NormStats::denormalize(const Tensor& t) const {
    Tensor out = t;
    for (double& x : out.values()) x = denormalize(x);
    return out;
}

NormStats fit_normalizer(std::span<const double> train) {
    if (train.empty()) throw DataError("fit_normalizer: empty training slice");
    const double n = static_cast<double>(train.size());
    const double mean = std::accumulate(train.begin(), train.end(), 0.0) / n;
    double var = 0.0;
    for (double x : train) var += (x - mean) * (x - mean);
    const double std = std::sqrt(var / n);
    if (!(std > 1e-8)) throw DataError("fit_normalizer: zero variance in training slice");
    return {mean, std};
}

void SplitSpec::validate() const {
    for (double f : {train_frac, val_frac, test_frac})
        if (!(f >= 0.0 && f <= 1.0)) throw ConfigError("split fractions must lie in [0, 1]");
    if (std::abs(train_frac + val_frac + test_frac - 1.0) > 1e-9) throw ConfigError("split fractions must sum to 1");
}

SplitLengths split_lengths(std::size_t steps, const SplitSpec& spec) {
    spec.validate();
    const double t = static_cast<double>(steps);
    SplitLengths out;
    out.val = static_cast<std::size_t>(std::floor(spec.val_frac * t + 1e-9));
    out.test = static_cast<std::size_t>(std::floor(spec.test_frac * t + 0.5));
    if (out.val + out.test > steps) throw ConfigError("split leaves no training data");
    out.train = steps - out.val - out.test;
    return out;
}

Splits chronological_split(const GeoSeriesDataset& ds, const SplitSpec& spec) {
    const auto lengths = split_lengths(ds.num_steps(), spec);
    const std::size_t nodes = ds.num_nodes();
    auto rows = [&](std::size_t start, std::size_t count) {
        Tensor out({count, nodes});
        std::copy_n(ds.values.raw() + start * nodes, count * nodes, out.raw());
        return out;
    };
    return {rows(0, lengths.train), rows(lengths.train, lengths.val), rows(lengths.train + lengths.val, lengths.test),
            lengths};
}

std::size_t window_count(std::size_t steps, std::size_t input_len, std::size_t horizon) {
    if (input_len == 0 || horizon == 0) throw ConfigError("window lengths must be >= 1");
    if (steps < input_len + horizon)
        throw DataError("partition of length " + std::to_string(steps) + " is too short: windows need at least " +
                        std::to_string(input_len + horizon) + " steps");
    return steps - input_len - horizon + 1;
}

Tensor WindowBatch::targets_by_horizon() const {
    const std::size_t b = targets.dim(0), n = targets.dim(2), v = targets.dim(3);
    Tensor out({b, v, n});
    for (std::size_t i = 0; i < b; ++i)
        for (std::size_t node = 0; node < n; ++node)
            for (std::size_t h = 0; h < v; ++h) out[(i * v + h) * n + node] = targets[(i * n + node) * v + h];
    return out;
}

WindowSet::WindowSet(Tensor series, std::size_t input_len, std::size_t horizon)
    : series_(std::move(series)), input_len_(input_len), horizon_(horizon) {
    if (series_.rank() != 2) throw DataError("windows require a [T, N] series");
    count_ = window_count(series_.dim(0), input_len, horizon);
}

WindowBatch WindowSet::gather(std::span<const std::size_t> starts) const {
    const std::size_t n = num_nodes();
    WindowBatch batch;
    batch.inputs = Tensor({starts.size(), 1, n, input_len_});
    batch.targets = Tensor({starts.size(), 1, n, horizon_});
    for (std::size_t b = 0; b < starts.size(); ++b) {
        const std::size_t s = starts[b];
        if (s >= count_) throw std::out_of_range("window start " + std::to_string(s) + " out of range");
        for (std::size_t node = 0; node < n; ++node) {
            for (std::size_t t = 0; t < input_len_; ++t)
                batch.inputs[(b * n + node) * input_len_ + t] = series_[(s + t) * n + node];
            for (std::size_t t = 0; t < horizon_; ++t)
                batch.targets[(b * n + node) * horizon_ + t] = series_[(s + input_len_ + t) * n + node];
        }
        batch.start_indices.push_back(s);
    }
    return batch;
}

WindowBatch WindowSet::all() const {
    std::vector<std::size_t> starts(count_);
    std::iota(starts.begin(), starts.end(), std::size_t{0});
    return gather(starts);
}

std::vector<WindowBatch> WindowSet::batches(std::size_t batch_size, bool shuffle, std::uint64_t seed) const {
    if (batch_size == 0) throw ConfigError("batch size must be >= 1");
    std::vector<std::size_t> order(count_);
    std::iota(order.begin(), order.end(), std::size_t{0});
    if (shuffle) {
        std::mt19937_64 rng(seed);
        std::shuffle(order.begin(), order.end(), rng);
    }
    std::vector<WindowBatch> out;
    for (std::size_t at = 0; at < count_; at += batch_size) {
        const std::size_t len = std::min(batch_size, count_ - at);
        out.push_back(gather(std::span<const std::size_t>(order).subspan(at, len)));
    }
    return out;
}

WindowSet make_windows(const Tensor& series, std::size_t input_len, std::size_t horizon) {
    return WindowSet(series, input_len, horizon);
}

}  // namespace sdlpgc::data
