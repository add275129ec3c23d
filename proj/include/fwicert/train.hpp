#ifndef FWICERT_TRAIN_HPP
#define FWICERT_TRAIN_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "fwicert/network.hpp"
#include "fwicert/tensor.hpp"

namespace fwicert {

enum class LossKind { mae, mse };
enum class OptimizerKind { sgd, adagrad, adamw };

const char* to_string(LossKind k);
const char* to_string(OptimizerKind k);
LossKind parse_loss_kind(const std::string& s);
OptimizerKind parse_optimizer_kind(const std::string& s);

/// MAE = mean |pred - target|, MSE = mean (pred - target)^2.
double compute_loss(const Tensor& pred, const Tensor& target, LossKind kind);

/// d loss / d pred. The MAE subgradient uses sign(0) = 0.
Tensor loss_gradient(const Tensor& pred, const Tensor& target, LossKind kind);

struct OptimizerState {
    OptimizerKind kind = OptimizerKind::sgd;
    double learning_rate = 1e-2;
    double weight_decay = 0.0;     // adamw only
    double beta1 = 0.9;            // adamw
    double beta2 = 0.999;          // adamw
    double epsilon = 1e-8;
    std::uint64_t step_count = 0;

    // Lazily sized to the params on first step.
    std::vector<Tensor> accum_sq;   // adagrad sum of squares / adamw second moment
    std::vector<Tensor> moment;     // adamw first moment

    static OptimizerState make(OptimizerKind kind, double learning_rate,
                               double weight_decay = 0.0);
};

/// Applies one update in place. Throws on NaN gradients, naming the layer.
void optimizer_step(NetworkParams& params, const Gradients& grads, OptimizerState& state);

struct Sample {
    Tensor input;
    Tensor target;
};

struct Dataset {
    std::vector<Sample> samples;
    std::size_t size() const { return samples.size(); }
};

struct TrainRecord {
    std::vector<double> train_loss;        // per epoch, mean over samples
    std::vector<double> holdout_loss;      // per epoch (empty if no holdout)
    std::vector<double> max_sample_loss;   // per epoch, M
    double wall_seconds = 0.0;             // measurement only; excluded from determinism
    bool diverged = false;
    std::size_t epochs_run = 0;

    double final_train_loss() const { return train_loss.empty() ? 0.0 : train_loss.back(); }
    double final_max_sample_loss() const {
        return max_sample_loss.empty() ? 0.0 : max_sample_loss.back();
    }

    /// Equality over the deterministic fields (wall time excluded).
    bool deterministic_equal(const TrainRecord& o) const {
        return train_loss == o.train_loss && holdout_loss == o.holdout_loss &&
               max_sample_loss == o.max_sample_loss && diverged == o.diverged &&
               epochs_run == o.epochs_run;
    }
};

struct FitOptions {
    LossKind loss = LossKind::mae;
    OptimizerKind optimizer = OptimizerKind::adamw;
    double learning_rate = 0.0;  // 0 means the per-optimizer default
    double weight_decay = 1e-4;  // adamw
    std::size_t epochs = 25;
    std::size_t batch_size = 16;
    std::uint64_t seed = 0;      // shuffle stream, independent of init seed
    std::size_t workers = 1;
    double divergence_threshold = 1e6;
};

double default_learning_rate(OptimizerKind kind);

/// Mini-batch training. Deterministic given (params, options.seed): the
/// shuffle stream is dedicated and gradient reduction is in ascending
/// sample order regardless of worker count. Aborts early when the epoch
/// loss exceeds the divergence threshold, returning the record so far.
TrainRecord fit(const NetworkSpec& spec, NetworkParams& params, const Dataset& train,
                const Dataset* holdout, const FitOptions& options);

/// Mean per-sample loss of a model over a dataset.
double evaluate(const NetworkSpec& spec, const NetworkParams& params, const Dataset& data,
                LossKind kind);

/// Per-sample losses in dataset order.
std::vector<double> per_sample_losses(const NetworkSpec& spec, const NetworkParams& params,
                                      const Dataset& data, LossKind kind);

} // namespace fwicert

#endif
