#include "sdlpgc/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <sstream>

#include <json.hpp>

#include "sdlpgc/errors.hpp"

namespace sdlpgc {

using json = nlohmann::json;

void TrainConfig::validate() const {
    if (epochs == 0) throw ConfigError("train: epochs must be >= 1");
    if (batch_size == 0) throw ConfigError("train: batch_size must be >= 1");
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
        throw ConfigError("train: learning_rate must be finite and >= 0");
    if (!(clip_norm > 0.0)) throw ConfigError("train: clip_norm must be > 0");
    if (patience == 0) throw ConfigError("train: patience must be >= 1");
}

Adam::Adam(nn::ParamStore& params, double lr, double beta1, double beta2, double eps)
    : params_(&params), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

void Adam::step() {
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (auto& [name, var] : *params_) {
        if (!var.has_grad()) continue;
        const Tensor& g = var.grad();
        auto [it, fresh] = moments_.try_emplace(name);
        if (fresh) it->second = {Tensor(g.shape()), Tensor(g.shape())};
        Tensor& m = it->second.first;
        Tensor& v = it->second.second;
        Tensor& w = var.mutable_value();
        for (std::size_t i = 0; i < w.size(); ++i) {
            m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
            v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
            w[i] -= lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
        }
    }
}

void Adam::restore(std::map<std::string, Moments> moments, std::size_t steps) {
    moments_ = std::move(moments);
    t_ = steps;
}

double clip_grad_norm(nn::ParamStore& params, double max_norm) {
    double sq = 0.0;
    for (auto& [name, var] : params)
        if (var.has_grad())
            for (double g : var.grad().values()) sq += g * g;
    const double norm = std::sqrt(sq);
    if (std::isfinite(norm) && norm > max_norm) {
        const double s = max_norm / (norm + 1e-12);
        for (auto& [name, var] : params)
            if (var.has_grad())
                for (double& g : var.node()->grad.values()) g *= s;
    }
    return norm;
}

ag::Var loss(const ag::Var& forecast, const ag::Var& target) { return ag::mean_abs_error(forecast, target); }

const HorizonMetrics& MetricsReport::at(std::size_t horizon) const {
    for (const auto& h : horizons)
        if (h.horizon == horizon) return h;
    throw std::out_of_range("no metrics for horizon " + std::to_string(horizon));
}

std::string MetricsReport::to_json() const {
    json j;
    j["dataset"] = dataset;
    j["variant"] = variant;
    j["seed"] = seed;
    j["horizons"] = json::array();
    for (const auto& h : horizons) j["horizons"].push_back({{"horizon", h.horizon}, {"mae", h.mae}, {"rmse", h.rmse}, {"mape", h.mape}});
    j["average"] = {{"mae", avg_mae}, {"rmse", avg_rmse}, {"mape", avg_mape}};
    if (!alpha_means.empty()) j["alpha_means"] = alpha_means;
    return j.dump(2);
}

std::string MetricsReport::to_csv() const {
    std::ostringstream out;
    out << std::setprecision(10) << "horizon,mae,rmse,mape\n";
    for (const auto& h : horizons) out << h.horizon << ',' << h.mae << ',' << h.rmse << ',' << h.mape << '\n';
    out << "avg," << avg_mae << ',' << avg_rmse << ',' << avg_mape << '\n';
    return out.str();
}

MetricsReport compute_metrics(const Tensor& prediction, const Tensor& target, const std::vector<std::size_t>& horizons) {
    if (prediction.shape() != target.shape() || prediction.rank() != 3)
        throw std::invalid_argument("compute_metrics: expects matching [W, v, N] tensors");
    const std::size_t windows = prediction.dim(0), steps = prediction.dim(1), nodes = prediction.dim(2);
    if (windows == 0 || nodes == 0) throw DataError("compute_metrics: empty split");
    for (std::size_t h : horizons)
        if (h == 0 || h > steps)
            throw ConfigError("horizon " + std::to_string(h) + " outside 1.." + std::to_string(steps));

    std::vector<HorizonMetrics> per_step(steps);
    const double count = static_cast<double>(windows * nodes);
    for (std::size_t s = 0; s < steps; ++s) {
        double abs_sum = 0.0, sq_sum = 0.0, pct_sum = 0.0;
        for (std::size_t w = 0; w < windows; ++w)
            for (std::size_t n = 0; n < nodes; ++n) {
                const std::size_t i = (w * steps + s) * nodes + n;
                const double err = std::abs(target[i] - prediction[i]);
                abs_sum += err;
                sq_sum += err * err;
                pct_sum += err / std::max(std::abs(target[i]), kMapeEpsilon);
            }
        per_step[s] = {s + 1, abs_sum / count, std::sqrt(sq_sum / count), 100.0 * pct_sum / count};
    }
    MetricsReport report;
    for (std::size_t h : horizons) report.horizons.push_back(per_step[h - 1]);
    for (const auto& m : per_step) {
        report.avg_mae += m.mae;
        report.avg_rmse += m.rmse;
        report.avg_mape += m.mape;
    }
    report.avg_mae /= static_cast<double>(steps);
    report.avg_rmse /= static_cast<double>(steps);
    report.avg_mape /= static_cast<double>(steps);
    return report;
}

namespace {

// Stacks batch results [b, v, N] along the window axis.
Tensor stack(const std::vector<Tensor>& parts) {
    std::size_t total = 0;
    for (const auto& p : parts) total += p.dim(0);
    Shape shape = parts.front().shape();
    shape[0] = total;
    Tensor out(shape);
    std::size_t at = 0;
    for (const auto& p : parts) {
        std::copy(p.raw(), p.raw() + p.size(), out.raw() + at);
        at += p.size();
    }
    return out;
}

}  // namespace

MetricsReport evaluate(const SDLPGCModel& model, const data::WindowSet& split, const data::NormStats& norm,
                       const std::vector<std::size_t>& horizons, std::size_t batch_size) {
    if (split.size() == 0) throw DataError("evaluate: empty split");
    std::vector<Tensor> preds, targets;
    std::vector<double> alpha_sum;
    std::size_t batches = 0;
    for (const auto& batch : split.batches(batch_size, false, 0)) {
        ForwardDiagnostics diag;
        preds.push_back(norm.denormalize(model.predict(batch.inputs, &diag)));
        targets.push_back(norm.denormalize(batch.targets_by_horizon()));
        alpha_sum.resize(diag.alpha_means.size(), 0.0);
        for (std::size_t i = 0; i < diag.alpha_means.size(); ++i) alpha_sum[i] += diag.alpha_means[i];
        ++batches;
    }
    MetricsReport report = compute_metrics(stack(preds), stack(targets), horizons);
    for (double& a : alpha_sum) a /= static_cast<double>(batches);
    report.alpha_means = std::move(alpha_sum);
    report.variant = to_string(model.variant());
    report.seed = model.config().seed;
    return report;
}

MetricsReport persistence_baseline(const data::WindowSet& split, const data::NormStats& norm,
                                   const std::vector<std::size_t>& horizons) {
    if (split.size() == 0) throw DataError("persistence_baseline: empty split");
    const auto batch = split.all();
    const std::size_t w = batch.size(), n = split.num_nodes(), u = split.input_len(), v = split.horizon();
    Tensor pred({w, v, n});
    for (std::size_t i = 0; i < w; ++i)
        for (std::size_t node = 0; node < n; ++node) {
            const double last = norm.denormalize(batch.inputs[(i * n + node) * u + (u - 1)]);
            for (std::size_t h = 0; h < v; ++h) pred[(i * v + h) * n + node] = last;
        }
    MetricsReport report = compute_metrics(pred, norm.denormalize(batch.targets_by_horizon()), horizons);
    report.variant = "persistence";
    return report;
}

PreparedData prepare(const data::GeoSeriesDataset& dataset, const data::SplitSpec& split, std::size_t input_len,
                     std::size_t horizon) {
    auto parts = data::chronological_split(dataset, split);
    const auto norm = data::fit_normalizer(parts.train.values());
    return PreparedData{dataset.name, norm, data::WindowSet(norm.normalize(parts.train), input_len, horizon),
                        data::WindowSet(norm.normalize(parts.val), input_len, horizon),
                        data::WindowSet(norm.normalize(parts.test), input_len, horizon)};
}

std::string EpochRecord::to_json() const {
    return json{{"epoch", epoch},       {"train_loss", train_loss}, {"val_mae", val_mae}, {"val_rmse", val_rmse},
                {"val_mape", val_mape}, {"lr", lr},                 {"wall_time", wall_time}}
        .dump();
}

TrainResult train(SDLPGCModel& model, const data::WindowSet& train_split, const Validator& validate,
                  const TrainConfig& config, const EpochCallback& on_epoch) {
    config.validate();
    if (!validate) throw std::invalid_argument("train: a validator is required");
    auto& params = model.params();
    Adam optimizer(params, config.learning_rate);
    std::mt19937_64 dropout_rng(config.seed * 0x9E3779B97F4A7C15ULL + 1);
    const nn::ForwardContext ctx{true, &dropout_rng};
    const auto started = std::chrono::steady_clock::now();

    TrainResult result;
    std::vector<Tensor> best;
    std::size_t stale = 0;
    double last_grad_norm = 0.0;
    bool step_limit = false;
    for (std::size_t epoch = 1; epoch <= config.epochs && !step_limit; ++epoch) {
        double loss_sum = 0.0;
        std::size_t loss_count = 0;
        for (const auto& batch : train_split.batches(config.batch_size, true, config.seed + epoch)) {
            params.zero_grad();
            ag::Var forecast = model.forward(ag::Var(batch.inputs), ctx);
            ag::Var objective = loss(forecast, ag::Var(batch.targets_by_horizon()));
            const double value = objective.value().item();
            if (!std::isfinite(value)) {
                std::ostringstream msg;
                msg << "non-finite loss at epoch " << epoch << ", step " << optimizer.steps() + 1
                    << " (lr=" << optimizer.learning_rate() << ", last grad norm=" << last_grad_norm << ")";
                throw TrainingError(msg.str());
            }
            ag::backward(objective);
            last_grad_norm = clip_grad_norm(params, config.clip_norm);
            if (!std::isfinite(last_grad_norm)) {
                std::ostringstream msg;
                msg << "non-finite gradient norm at epoch " << epoch << ", step " << optimizer.steps() + 1
                    << " (lr=" << optimizer.learning_rate() << ")";
                throw TrainingError(msg.str());
            }
            optimizer.step();
            result.step_losses.push_back(value);
            loss_sum += value;
            ++loss_count;
            if (config.max_steps && optimizer.steps() >= config.max_steps) {
                step_limit = true;
                break;
            }
        }
        params.zero_grad();

        const MetricsReport val = validate(model);
        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_loss = loss_count ? loss_sum / static_cast<double>(loss_count) : 0.0;
        rec.val_mae = val.avg_mae;
        rec.val_rmse = val.avg_rmse;
        rec.val_mape = val.avg_mape;
        rec.lr = optimizer.learning_rate();
        rec.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
        result.log.push_back(rec);
        if (on_epoch) on_epoch(rec);

        if (val.avg_mae < result.best_val_mae) {
            result.best_val_mae = val.avg_mae;
            result.best_epoch = epoch;
            best.clear();
            for (const auto& [name, var] : params) best.push_back(var.value());
            stale = 0;
        } else if (++stale >= config.patience) {
            break;
        }
    }
    if (!best.empty()) {
        std::size_t i = 0;
        for (auto& [name, var] : params) var.mutable_value() = best[i++];
    }
    result.state.epoch = result.log.empty() ? 0 : result.log.back().epoch;
    result.state.steps = optimizer.steps();
    result.state.best_val_mae = result.best_val_mae;
    result.state.optimizer = optimizer.state();
    return result;
}

TrainResult train(SDLPGCModel& model, const PreparedData& data, const TrainConfig& config, const EpochCallback& on_epoch) {
    const Validator validator = [&data](const SDLPGCModel& m) { return evaluate(m, data.val, data.norm); };
    return train(model, data.train, validator, config, on_epoch);
}

double median(std::vector<double> values) {
    if (values.empty()) throw std::invalid_argument("median of empty set");
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

const AblationRow& AblationTable::row(Variant v) const {
    for (const auto& r : rows)
        if (r.variant == v) return r;
    throw std::out_of_range("ablation table has no row for " + to_string(v));
}

namespace {

std::string display_name(Variant v) {
    switch (v) {
        case Variant::full: return "SD-LPGC";
        case Variant::no_sl: return "(w/o) SL";
        case Variant::no_dl: return "(w/o) DL";
        case Variant::no_lpgc: return "(w/o) LPGC";
        case Variant::sd_gcn: return "SD-GCN";
    }
    return "?";
}

}  // namespace

std::string AblationTable::to_csv() const {
    std::ostringstream out;
    out << std::setprecision(10) << "variant,avg_mae,avg_rmse,avg_mape\n";
    for (const auto& r : rows) out << to_string(r.variant) << ',' << r.avg_mae << ',' << r.avg_rmse << ',' << r.avg_mape << '\n';
    return out.str();
}

std::string AblationTable::to_text() const {
    std::ostringstream out;
    out << std::left << std::setw(12) << "Variants" << std::right << std::setw(10) << "Avg-MAE" << std::setw(11)
        << "Avg-RMSE" << std::setw(14) << "Avg-MAPE(%)" << '\n';
    out << std::fixed << std::setprecision(2);
    for (const auto& r : rows)
        out << std::left << std::setw(12) << display_name(r.variant) << std::right << std::setw(10) << r.avg_mae
            << std::setw(11) << r.avg_rmse << std::setw(14) << r.avg_mape << '\n';
    return out.str();
}

AblationTable run_ablation_suite(const PreparedData& data, const ModelConfig& base, const TrainConfig& train_config,
                                 const std::vector<std::uint64_t>& seeds, const std::vector<Variant>& variants) {
    if (seeds.empty()) throw ConfigError("ablation: at least one seed required");
    AblationTable table;
    table.dataset = data.dataset;
    for (Variant v : variants) {
        AblationRow row;
        row.variant = v;
        std::vector<double> mae, rmse, mape;
        for (std::uint64_t seed : seeds) {
            ModelConfig mc = base;
            mc.variant = v;
            mc.seed = seed;
            TrainConfig tc = train_config;
            tc.seed = seed;
            SDLPGCModel model(mc);
            train(model, data, tc);
            MetricsReport report = evaluate(model, data.test, data.norm);
            report.dataset = data.dataset;
            mae.push_back(report.avg_mae);
            rmse.push_back(report.avg_rmse);
            mape.push_back(report.avg_mape);
            row.per_seed.push_back(std::move(report));
        }
        row.avg_mae = median(mae);
        row.avg_rmse = median(rmse);
        row.avg_mape = median(mape);
        table.rows.push_back(std::move(row));
    }
    return table;
}

}  // namespace sdlpgc
