#include "sdlpgc/experiment.hpp"

#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <sstream>

#include "json_io.hpp"
#include "sdlpgc/checkpoint.hpp"
#include "sdlpgc/errors.hpp"
#include "sdlpgc/plot.hpp"

namespace sdlpgc::experiment {

using detail::json;

namespace {

const std::set<std::string> kTopKeys{"dataset", "output_dir", "split",  "missing",
                                     "max_nodes", "model",    "train", "ablation_seeds"};

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
    if (!out) throw std::runtime_error("write failed for " + path.string());
}

void apply_override(json& root, const std::string& item) {
    const auto eq = item.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + item + "' is not of the form key=value");
    const std::string key = item.substr(0, eq);
    const std::string text = item.substr(eq + 1);

    json* node = &root;
    std::size_t pos = 0;
    std::string part;
    while (true) {
        const auto dot = key.find('.', pos);
        part = key.substr(pos, dot == std::string::npos ? std::string::npos : dot - pos);
        if (part.empty()) throw ConfigError("override '" + item + "' has an empty key segment");
        if (dot == std::string::npos) break;
        json& child = (*node)[part];
        if (child.is_null()) child = json::object();
        if (!child.is_object()) throw ConfigError("override '" + item + "': '" + part + "' is not a section");
        node = &child;
        pos = dot + 1;
    }
    json value = json::parse(text, nullptr, false);
    if (value.is_discarded()) value = text;
    (*node)[part] = value;
}

std::string missing_name(data::MissingPolicy p) { return p == data::MissingPolicy::reject ? "reject" : "interpolate"; }

data::MissingPolicy parse_missing(const std::string& text) {
    if (text == "reject") return data::MissingPolicy::reject;
    if (text == "interpolate") return data::MissingPolicy::interpolate;
    throw ConfigError("missing: expected 'reject' or 'interpolate', got '" + text + "'");
}

template <class T>
T get_field(const json& j, const char* key) {
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config.") + key + ": " + e.what());
    }
}

// Model config with num_nodes taken from the data.
ModelConfig resolved_model(const ExperimentConfig& config, std::size_t nodes) {
    ModelConfig m = config.model;
    if (m.num_nodes == 0)
        m.num_nodes = nodes;
    else if (m.num_nodes != nodes)
        throw ConfigError("model.num_nodes is " + std::to_string(m.num_nodes) + " but the dataset has " +
                          std::to_string(nodes) + " nodes");
    m.validate();
    return m;
}

void check_partitions(const data::SplitLengths& len, std::size_t u, std::size_t v) {
    data::window_count(len.train, u, v);
    data::window_count(len.val, u, v);
    data::window_count(len.test, u, v);
}

void check_checkpoint_matches(const SDLPGCModel& model, const data::GeoSeriesDataset& ds) {
    if (model.config().num_nodes != ds.num_nodes())
        throw ConfigError("checkpoint expects " + std::to_string(model.config().num_nodes) + " nodes but dataset '" +
                          ds.name + "' has " + std::to_string(ds.num_nodes()));
}

// Partition `which` normalized with the given statistics.
data::WindowSet partition_windows(const data::GeoSeriesDataset& ds, const data::SplitSpec& spec, SplitName which,
                                  const data::NormStats& norm, std::size_t u, std::size_t v) {
    const auto splits = data::chronological_split(ds, spec);
    const Tensor& part = which == SplitName::train ? splits.train : which == SplitName::val ? splits.val : splits.test;
    data::window_count(part.dim(0), u, v);
    return data::WindowSet(norm.normalize(part), u, v);
}

fs::path output_dir_for(const ExperimentConfig& config, const std::optional<fs::path>& out, const std::string& tag) {
    if (out) {
        fs::create_directories(*out);
        return *out;
    }
    return make_run_dir(config.output_dir, tag);
}

std::string series_csv(const Tensor& values, const std::vector<data::Date>& dates,
                       const std::vector<std::string>& names) {
    std::ostringstream out;
    out.precision(17);
    out << "date";
    for (const auto& n : names) out << ',' << n;
    out << '\n';
    const std::size_t cols = values.dim(1);
    for (std::size_t t = 0; t < values.dim(0); ++t) {
        out << data::format_date(dates[t]);
        for (std::size_t c = 0; c < cols; ++c) out << ',' << values[t * cols + c];
        out << '\n';
    }
    return out.str();
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    return cells;
}

}  // namespace

ExperimentConfig ExperimentConfig::from_json_text(const std::string& text, const fs::path& base_dir,
                                                  const std::vector<std::string>& overrides) {
    json root = json::parse(text, nullptr, false);
    if (root.is_discarded()) throw ConfigError("config is not valid JSON");
    if (!root.is_object()) throw ConfigError("config: expected a JSON object");
    for (const auto& item : overrides) apply_override(root, item);
    detail::reject_unknown_keys(root, kTopKeys, "config");

    ExperimentConfig c;
    if (!root.contains("dataset")) throw ConfigError("config: 'dataset' (descriptor path) is required");
    c.dataset = get_field<std::string>(root, "dataset");
    if (c.dataset.is_relative()) c.dataset = base_dir / c.dataset;
    if (root.contains("output_dir")) c.output_dir = get_field<std::string>(root, "output_dir");
    if (root.contains("split")) c.split = detail::split_spec_from_json(root["split"]);
    if (root.contains("missing")) c.missing = parse_missing(get_field<std::string>(root, "missing"));
    if (root.contains("max_nodes")) c.max_nodes = get_field<std::size_t>(root, "max_nodes");
    if (root.contains("model")) c.model = detail::model_config_from_json(root["model"]);
    if (root.contains("train")) c.train = detail::train_config_from_json(root["train"]);
    if (root.contains("ablation_seeds")) c.ablation_seeds = get_field<std::vector<std::uint64_t>>(root, "ablation_seeds");

    c.split.validate();
    c.train.validate();
    if (c.ablation_seeds.empty()) throw ConfigError("config.ablation_seeds must not be empty");
    return c;
}

ExperimentConfig ExperimentConfig::load(const fs::path& path, const std::vector<std::string>& overrides) {
    if (!fs::exists(path)) throw ConfigError("config file not found: " + path.string());
    return from_json_text(read_text(path), path.parent_path(), overrides);
}

std::string ExperimentConfig::to_json_text() const {
    json j{{"dataset", dataset.string()},
           {"output_dir", output_dir.string()},
           {"split", detail::to_json(split)},
           {"missing", missing_name(missing)},
           {"max_nodes", max_nodes},
           {"model", detail::to_json(model)},
           {"train", detail::to_json(train)},
           {"ablation_seeds", ablation_seeds}};
    return j.dump(2);
}

data::GeoSeriesDataset load_experiment_dataset(const ExperimentConfig& config) {
    if (!fs::exists(config.dataset)) throw DataError("dataset descriptor not found: " + config.dataset.string());
    const auto descriptor = data::DatasetDescriptor::from_json_file(config.dataset);
    data::LoadOptions options;
    options.missing = config.missing;
    auto ds = data::load_dataset(descriptor, options);
    const std::size_t n = ds.num_nodes();
    if (config.max_nodes == 0 || config.max_nodes >= n) return ds;

    const std::size_t keep = config.max_nodes, steps = ds.num_steps();
    Tensor values({steps, keep});
    for (std::size_t t = 0; t < steps; ++t)
        for (std::size_t c = 0; c < keep; ++c) values[t * keep + c] = ds.values[t * n + c];
    ds.values = std::move(values);
    ds.node_names.resize(keep);
    ds.coords.resize(keep);
    return ds;
}

RunLock::RunLock(const fs::path& dir) : lock_(dir / ".lock") {
    std::FILE* f = std::fopen(lock_.c_str(), "wx");
    if (!f)
        throw ConfigError("output directory " + dir.string() + " is locked by another run (remove " + lock_.string() +
                          " if that run is gone)");
    std::fclose(f);
}

RunLock::~RunLock() {
    std::error_code ec;
    fs::remove(lock_, ec);
}

fs::path make_run_dir(const fs::path& root, const std::string& tag) {
    const std::time_t now = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&now, &tm);
    char stamp[32];
    std::strftime(stamp, sizeof stamp, "%Y%m%d-%H%M%S", &tm);
    fs::create_directories(root);
    const std::string base = std::string(stamp) + "-" + tag;
    for (int k = 0;; ++k) {
        fs::path dir = root / (k == 0 ? base : base + "-" + std::to_string(k));
        if (fs::create_directory(dir)) return dir;
    }
}

fs::path cache_root() {
    const char* env = std::getenv(kCacheEnv);
    return env && *env ? fs::path(env) : fs::path(".sdlpgc_cache");
}

PrepareSummary cmd_prepare(const fs::path& descriptor_path, const fs::path& cache, data::LoadOptions options) {
    if (!fs::exists(descriptor_path)) throw DataError("dataset descriptor not found: " + descriptor_path.string());
    const auto descriptor = data::DatasetDescriptor::from_json_file(descriptor_path);
    const auto ds = data::load_dataset(descriptor, options);
    const data::SplitSpec spec;
    const auto splits = data::chronological_split(ds, spec);
    const auto train_vals = splits.train.values();
    const auto norm = data::fit_normalizer(train_vals);

    PrepareSummary s;
    s.dataset = ds.name;
    s.steps = ds.num_steps();
    s.nodes = ds.num_nodes();
    s.first_date = data::format_date(ds.dates.front());
    s.last_date = data::format_date(ds.dates.back());
    s.lengths = splits.lengths;
    s.norm = norm;
    s.cache_dir = cache / ds.name;
    fs::create_directories(s.cache_dir);

    std::size_t offset = 0;
    std::string all;
    for (auto [name, part] : {std::pair<const char*, const Tensor*>{"train", &splits.train},
                              {"val", &splits.val},
                              {"test", &splits.test}}) {
        const std::vector<data::Date> dates(ds.dates.begin() + static_cast<std::ptrdiff_t>(offset),
                                            ds.dates.begin() + static_cast<std::ptrdiff_t>(offset + part->dim(0)));
        offset += part->dim(0);
        const std::string text = series_csv(norm.normalize(*part), dates, ds.node_names);
        write_text(s.cache_dir / (std::string(name) + ".csv"), text);
        all += text;
    }
    s.cache_hash = git_blob_sha1(all);
    write_text(s.cache_dir / "norm_stats.json", detail::to_json(norm).dump(2) + "\n");
    const json summary{{"dataset", s.dataset},
                       {"T", s.steps},
                       {"N", s.nodes},
                       {"first_date", s.first_date},
                       {"last_date", s.last_date},
                       {"split", {{"train", s.lengths.train}, {"val", s.lengths.val}, {"test", s.lengths.test}}},
                       {"norm_stats", detail::to_json(norm)},
                       {"cache_hash", s.cache_hash}};
    write_text(s.cache_dir / "summary.json", summary.dump(2) + "\n");
    return s;
}

TrainOutcome cmd_train(const ExperimentConfig& config, std::optional<fs::path> out_dir) {
    const auto ds = load_experiment_dataset(config);
    ModelConfig mc = resolved_model(config, ds.num_nodes());
    check_partitions(data::split_lengths(ds.num_steps(), config.split), mc.input_len, mc.horizon);

    const auto prepared = prepare(ds, config.split, mc.input_len, mc.horizon);
    SDLPGCModel model(mc);

    TrainOutcome outcome;
    outcome.run_dir = output_dir_for(config, out_dir, "train-" + to_string(mc.variant));
    RunLock lock(outcome.run_dir);
    ExperimentConfig resolved = config;
    resolved.model = mc;
    write_text(outcome.run_dir / "config.json", resolved.to_json_text() + "\n");

    std::ofstream log(outcome.run_dir / "train_log.jsonl", std::ios::trunc);
    outcome.result = train(model, prepared, config.train, [&](const EpochRecord& r) {
        log << r.to_json() << '\n';
        log.flush();
    });

    save_checkpoint(model, prepared.norm, outcome.result.state, outcome.run_dir / "checkpoint", ds.name);
    outcome.val_metrics = evaluate(model, prepared.val, prepared.norm);
    outcome.val_metrics.dataset = ds.name;
    outcome.val_metrics.variant = to_string(mc.variant);
    outcome.val_metrics.seed = mc.seed;
    write_text(outcome.run_dir / "metrics_val.json", outcome.val_metrics.to_json() + "\n");
    return outcome;
}

SplitName parse_split(const std::string& text) {
    if (text == "train") return SplitName::train;
    if (text == "val") return SplitName::val;
    if (text == "test") return SplitName::test;
    throw ConfigError("unknown split '" + text + "' (expected train, val or test)");
}

EvaluateOutcome cmd_evaluate(const fs::path& checkpoint, const ExperimentConfig& config, SplitName split,
                             std::optional<fs::path> out_dir) {
    auto ckpt = load_checkpoint(checkpoint);
    const auto ds = load_experiment_dataset(config);
    check_checkpoint_matches(*ckpt.model, ds);
    const auto& mc = ckpt.model->config();
    const auto windows = partition_windows(ds, config.split, split, ckpt.norm, mc.input_len, mc.horizon);

    EvaluateOutcome out;
    out.model = evaluate(*ckpt.model, windows, ckpt.norm);
    out.persistence = persistence_baseline(windows, ckpt.norm);
    for (auto* r : {&out.model, &out.persistence}) {
        r->dataset = ds.name;
        r->seed = mc.seed;
    }
    out.model.variant = to_string(mc.variant);
    out.persistence.variant = "persistence";

    out.run_dir = output_dir_for(config, out_dir, "evaluate-" + to_string(mc.variant));
    RunLock lock(out.run_dir);
    write_text(out.run_dir / "metrics.json", out.model.to_json() + "\n");
    write_text(out.run_dir / "metrics.csv", out.model.to_csv());
    write_text(out.run_dir / "persistence.json", out.persistence.to_json() + "\n");
    write_text(out.run_dir / "persistence.csv", out.persistence.to_csv());
    return out;
}

fs::path cmd_forecast(const fs::path& checkpoint, const ExperimentConfig& config, std::optional<fs::path> out_dir) {
    auto ckpt = load_checkpoint(checkpoint);
    const auto ds = load_experiment_dataset(config);
    check_checkpoint_matches(*ckpt.model, ds);
    const auto& mc = ckpt.model->config();
    const std::size_t steps = ds.num_steps(), n = ds.num_nodes(), u = mc.input_len, v = mc.horizon;
    if (steps < u)
        throw DataError("dataset has " + std::to_string(steps) + " days; forecasting needs at least " +
                        std::to_string(u));

    Tensor window({1, 1, n, u});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t t = 0; t < u; ++t)
            window[i * u + t] = ckpt.norm.normalize(ds.values[(steps - u + t) * n + i]);
    const Tensor pred = ckpt.norm.denormalize(ckpt.model->predict(window));  // [1, v, N]

    std::vector<data::Date> dates;
    for (std::size_t h = 1; h <= v; ++h) dates.push_back(ds.dates.back() + std::chrono::days(h));
    const fs::path dir = output_dir_for(config, out_dir, "forecast-" + to_string(mc.variant));
    RunLock lock(dir);
    const fs::path file = dir / "forecast.csv";
    write_text(file, series_csv(pred.reshaped({v, n}), dates, ds.node_names));
    return file;
}

AblationOutcome cmd_ablation(const ExperimentConfig& config, std::optional<fs::path> out_dir) {
    const auto ds = load_experiment_dataset(config);
    ModelConfig mc = resolved_model(config, ds.num_nodes());
    check_partitions(data::split_lengths(ds.num_steps(), config.split), mc.input_len, mc.horizon);
    const auto prepared = prepare(ds, config.split, mc.input_len, mc.horizon);

    AblationOutcome out;
    out.run_dir = output_dir_for(config, out_dir, "ablation");
    RunLock lock(out.run_dir);
    out.table = run_ablation_suite(prepared, mc, config.train, config.ablation_seeds);
    write_text(out.run_dir / "ablation.csv", out.table.to_csv());
    write_text(out.run_dir / "ablation.txt", out.table.to_text());
    return out;
}

GraphExport cmd_export_graphs(const fs::path& checkpoint, const ExperimentConfig& config, std::size_t window_index,
                              std::optional<fs::path> out_dir) {
    auto ckpt = load_checkpoint(checkpoint);
    const auto ds = load_experiment_dataset(config);
    check_checkpoint_matches(*ckpt.model, ds);
    const auto& mc = ckpt.model->config();
    const auto windows = partition_windows(ds, config.split, SplitName::test, ckpt.norm, mc.input_len, mc.horizon);
    if (window_index >= windows.size())
        throw ConfigError("window index " + std::to_string(window_index) + " out of range (test split has " +
                          std::to_string(windows.size()) + " windows)");

    const std::size_t idx[] = {window_index};
    const auto batch = windows.gather(idx);
    GraphExport out;
    {
        ag::NoGradGuard guard;
        const auto g = ckpt.model->graphs(Var(batch.inputs), nn::ForwardContext{});
        const std::size_t n = mc.num_nodes;
        if (g.static_adj.defined()) out.static_adj = g.static_adj.value().reshaped({n, n});
        if (g.dynamic_adj.defined()) out.dynamic_adj = g.dynamic_adj.value().reshaped({n, n});
    }
    if (out.static_adj.size() == 0 && out.dynamic_adj.size() == 0)
        throw ConfigError("variant " + to_string(mc.variant) + " learns no graphs");

    out.run_dir = output_dir_for(config, out_dir, "graphs-" + to_string(mc.variant));
    RunLock lock(out.run_dir);
    json manifest{{"dataset", ckpt.dataset.empty() ? ds.name : ckpt.dataset},
                  {"epoch", ckpt.state.epoch},
                  {"seed", mc.seed},
                  {"variant", to_string(mc.variant)},
                  {"window_index", window_index},
                  {"nodes", ds.node_names},
                  {"files", json::array()}};
    if (out.static_adj.size()) {
        write_matrix_csv(out.static_adj, out.run_dir / "static_adjacency.csv");
        manifest["files"].push_back("static_adjacency.csv");
    }
    if (out.dynamic_adj.size()) {
        write_matrix_csv(out.dynamic_adj, out.run_dir / "dynamic_adjacency.csv");
        manifest["files"].push_back("dynamic_adjacency.csv");
    }
    write_text(out.run_dir / "graphs.json", manifest.dump(2) + "\n");
    return out;
}

void write_matrix_csv(const Tensor& m, const fs::path& path) {
    if (m.rank() != 2) throw std::invalid_argument("write_matrix_csv: expects a matrix");
    std::ostringstream out;
    out.precision(17);
    for (std::size_t r = 0; r < m.dim(0); ++r) {
        for (std::size_t c = 0; c < m.dim(1); ++c) out << (c ? "," : "") << m[r * m.dim(1) + c];
        out << '\n';
    }
    write_text(path, out.str());
}

Tensor read_matrix_csv(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());
    std::vector<double> values;
    std::size_t rows = 0, cols = 0;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto cells = split_csv_line(line);
        if (rows == 0) cols = cells.size();
        if (cells.size() != cols)
            throw DataError(path.string() + ":" + std::to_string(rows + 1) + ": expected " + std::to_string(cols) +
                            " columns");
        for (const auto& cell : cells) {
            try {
                values.push_back(std::stod(cell));
            } catch (const std::exception&) {
                throw DataError(path.string() + ":" + std::to_string(rows + 1) + ": not a number '" + cell + "'");
            }
        }
        ++rows;
    }
    if (rows == 0) throw DataError(path.string() + ": empty matrix");
    Tensor m({rows, cols});
    std::copy(values.begin(), values.end(), m.raw());
    return m;
}

std::vector<fs::path> cmd_plot(const std::vector<fs::path>& inputs, const fs::path& out_dir) {
    if (inputs.empty()) throw ConfigError("plot: no inputs given");
    for (const auto& p : inputs)
        if (!fs::exists(p)) throw ConfigError("plot: input not found: " + p.string());
    fs::create_directories(out_dir);
    RunLock lock(out_dir);

    std::vector<fs::path> written;
    for (const auto& p : inputs) {
        const std::string ext = p.extension().string();
        std::string svg;
        if (ext == ".jsonl") {
            plot::Series loss{"train loss", {}}, val{"val MAE", {}};
            std::ifstream in(p);
            std::string line;
            while (std::getline(in, line)) {
                if (line.empty()) continue;
                const json r = json::parse(line, nullptr, false);
                if (r.is_discarded() || !r.contains("epoch")) throw DataError("plot: malformed log line in " + p.string());
                const double e = r["epoch"].get<double>();
                loss.points.emplace_back(e, r["train_loss"].get<double>());
                val.points.emplace_back(e, r["val_mae"].get<double>());
            }
            if (loss.points.empty()) throw DataError("plot: " + p.string() + " has no epochs");
            svg = plot::line_chart("Training curve", "epoch", "MAE", {loss, val});
        } else if (ext == ".json") {
            const json r = json::parse(read_text(p), nullptr, false);
            if (r.is_discarded() || !r.contains("horizons"))
                throw DataError("plot: " + p.string() + " is not a metrics report");
            std::vector<std::string> cats;
            plot::BarGroup mae{"MAE", {}}, rmse{"RMSE", {}};
            for (const auto& h : r["horizons"]) {
                cats.push_back("h" + std::to_string(h["horizon"].get<std::size_t>()));
                mae.values.push_back(h["mae"].get<double>());
                rmse.values.push_back(h["rmse"].get<double>());
            }
            svg = plot::bar_chart("Error by horizon", cats, {mae, rmse});
        } else if (ext == ".csv") {
            svg = plot::heatmap(p.stem().string(), read_matrix_csv(p));
        } else {
            throw ConfigError("plot: unrecognized input " + p.string() + " (expected .jsonl, .json or .csv)");
        }
        const fs::path file = out_dir / (p.stem().string() + ".svg");
        write_text(file, svg);
        written.push_back(file);
    }
    return written;
}

}  // namespace sdlpgc::experiment
