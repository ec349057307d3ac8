#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "sdlpgc/data.hpp"
#include "sdlpgc/model.hpp"

namespace sdlpgc {

struct TrainConfig {
    std::size_t epochs = 100;
    std::size_t batch_size = 32;
    double learning_rate = 1e-3;
    double clip_norm = 5.0;
    std::size_t patience = 15;
    std::uint64_t seed = 42;
    /// Stop after this many optimizer steps; 0 means no step limit.
    std::size_t max_steps = 0;
    std::string device = "cpu";

    void validate() const;
};

/// Adam with bias correction. Moments are keyed by parameter name so they
/// can be checkpointed.
class Adam {
public:
    explicit Adam(nn::ParamStore& params, double lr = 1e-3, double beta1 = 0.9, double beta2 = 0.999,
                  double eps = 1e-8);

    void step();
    double learning_rate() const noexcept { return lr_; }
    void set_learning_rate(double lr) noexcept { lr_ = lr; }
    std::size_t steps() const noexcept { return t_; }

    struct Moments {
        Tensor first;
        Tensor second;
    };
    const std::map<std::string, Moments>& state() const noexcept { return moments_; }
    void restore(std::map<std::string, Moments> moments, std::size_t steps);

private:
    nn::ParamStore* params_;
    double lr_, beta1_, beta2_, eps_;
    std::size_t t_ = 0;
    std::map<std::string, Moments> moments_;
};

/// Scales gradients so their global L2 norm is at most max_norm. Returns the
/// norm before scaling.
double clip_grad_norm(nn::ParamStore& params, double max_norm);

/// Mean absolute error on the normalized scale.
ag::Var loss(const ag::Var& forecast, const ag::Var& target);

inline const std::vector<std::size_t> kReportHorizons{3, 6, 9, 12};
inline constexpr double kMapeEpsilon = 1e-4;

struct HorizonMetrics {
    std::size_t horizon = 0;
    double mae = 0.0;
    double rmse = 0.0;
    double mape = 0.0;  // percent
};

struct MetricsReport {
    std::vector<HorizonMetrics> horizons;
    double avg_mae = 0.0;
    double avg_rmse = 0.0;
    double avg_mape = 0.0;
    std::string dataset;
    std::string variant;
    std::uint64_t seed = 0;
    std::vector<double> alpha_means;

    const HorizonMetrics& at(std::size_t horizon) const;
    std::string to_json() const;
    std::string to_csv() const;
};

/// Metrics on already de-normalized values, both [W, v, N]. Horizon h reads
/// step h-1; averages run over all v steps.
MetricsReport compute_metrics(const Tensor& prediction, const Tensor& target,
                              const std::vector<std::size_t>& horizons = kReportHorizons);

MetricsReport evaluate(const SDLPGCModel& model, const data::WindowSet& split, const data::NormStats& norm,
                       const std::vector<std::size_t>& horizons = kReportHorizons, std::size_t batch_size = 64);

/// Repeats the last observed value for every horizon.
MetricsReport persistence_baseline(const data::WindowSet& split, const data::NormStats& norm,
                                   const std::vector<std::size_t>& horizons = kReportHorizons);

/// Windows for the three chronological partitions, normalized with
/// statistics fitted on the training partition only.
struct PreparedData {
    std::string dataset;
    data::NormStats norm;
    data::WindowSet train;
    data::WindowSet val;
    data::WindowSet test;
};

PreparedData prepare(const data::GeoSeriesDataset& dataset, const data::SplitSpec& split, std::size_t input_len,
                     std::size_t horizon);

struct EpochRecord {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double val_mae = 0.0;
    double val_rmse = 0.0;
    double val_mape = 0.0;
    double lr = 0.0;
    double wall_time = 0.0;  // seconds since training started

    std::string to_json() const;
};

struct TrainingState {
    std::size_t epoch = 0;
    std::size_t steps = 0;
    double best_val_mae = std::numeric_limits<double>::infinity();
    std::map<std::string, Adam::Moments> optimizer;
};

struct TrainResult {
    std::vector<EpochRecord> log;
    std::vector<double> step_losses;
    std::size_t best_epoch = 0;
    double best_val_mae = std::numeric_limits<double>::infinity();
    TrainingState state;
};

using Validator = std::function<MetricsReport(const SDLPGCModel&)>;
using EpochCallback = std::function<void(const EpochRecord&)>;

/// Mini-batch Adam on the MAE loss with gradient clipping. Validates after
/// every epoch, restores the parameters of the best validation avg-MAE on
/// return, and stops once `patience` epochs pass without improvement.
TrainResult train(SDLPGCModel& model, const data::WindowSet& train_split, const Validator& validate,
                  const TrainConfig& config, const EpochCallback& on_epoch = {});

TrainResult train(SDLPGCModel& model, const PreparedData& data, const TrainConfig& config,
                  const EpochCallback& on_epoch = {});

struct AblationRow {
    Variant variant = Variant::full;
    double avg_mae = 0.0;
    double avg_rmse = 0.0;
    double avg_mape = 0.0;
    std::vector<MetricsReport> per_seed;
};

struct AblationTable {
    std::string dataset;
    std::vector<AblationRow> rows;

    const AblationRow& row(Variant v) const;
    std::string to_csv() const;
    std::string to_text() const;
};

/// Trains every variant once per seed and reports the median test averages.
AblationTable run_ablation_suite(const PreparedData& data, const ModelConfig& base, const TrainConfig& train_config,
                                 const std::vector<std::uint64_t>& seeds,
                                 const std::vector<Variant>& variants = all_variants());

double median(std::vector<double> values);

}  // namespace sdlpgc
