#include "fwicert/train.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <thread>

#include "fwicert/error.hpp"
#include "fwicert/rng.hpp"

namespace fwicert {

const char* to_string(LossKind k) { return k == LossKind::mae ? "mae" : "mse"; }

const char* to_string(OptimizerKind k) {
    switch (k) {
    case OptimizerKind::sgd: return "sgd";
    case OptimizerKind::adagrad: return "adagrad";
    case OptimizerKind::adamw: return "adamw";
    }
    return "?";
}

LossKind parse_loss_kind(const std::string& s) {
    if (s == "mae") return LossKind::mae;
    if (s == "mse") return LossKind::mse;
    throw ConfigError("unknown loss kind '" + s + "' (expected mae|mse)");
}

OptimizerKind parse_optimizer_kind(const std::string& s) {
    if (s == "sgd") return OptimizerKind::sgd;
    if (s == "adagrad") return OptimizerKind::adagrad;
    if (s == "adamw") return OptimizerKind::adamw;
    throw ConfigError("unknown optimizer '" + s + "' (expected sgd|adagrad|adamw)");
}

double compute_loss(const Tensor& pred, const Tensor& target, LossKind kind) {
    if (!pred.same_shape(target))
        throw ShapeError("loss: pred shape " + Tensor::shape_string(pred.shape()) +
                         " != target " + Tensor::shape_string(target.shape()));
    const std::size_t n = pred.size();
    double acc = 0.0;
    if (kind == LossKind::mae) {
        for (std::size_t i = 0; i < n; ++i) acc += std::fabs(pred[i] - target[i]);
    } else {
        for (std::size_t i = 0; i < n; ++i) {
            const double r = pred[i] - target[i];
            acc += r * r;
        }
    }
    return acc / static_cast<double>(n);
}

Tensor loss_gradient(const Tensor& pred, const Tensor& target, LossKind kind) {
    if (!pred.same_shape(target))
        throw ShapeError("loss_gradient: shape mismatch");
    const std::size_t n = pred.size();
    Tensor g(pred.shape());
    const double inv_n = 1.0 / static_cast<double>(n);
    if (kind == LossKind::mae) {
        for (std::size_t i = 0; i < n; ++i) {
            const double r = pred[i] - target[i];
            g[i] = r > 0.0 ? inv_n : (r < 0.0 ? -inv_n : 0.0);
        }
    } else {
        for (std::size_t i = 0; i < n; ++i) g[i] = 2.0 * (pred[i] - target[i]) * inv_n;
    }
    return g;
}

OptimizerState OptimizerState::make(OptimizerKind kind, double learning_rate,
                                    double weight_decay) {
    OptimizerState s;
    s.kind = kind;
    s.learning_rate = learning_rate;
    s.weight_decay = weight_decay;
    return s;
}

double default_learning_rate(OptimizerKind kind) {
    switch (kind) {
    case OptimizerKind::sgd: return 1e-2;
    case OptimizerKind::adagrad: return 1e-2;
    case OptimizerKind::adamw: return 1e-3;
    }
    return 1e-2;
}

namespace {

void ensure_state(OptimizerState& st, const NetworkParams& params) {
    auto size_like = [&](std::vector<Tensor>& vec) {
        if (!vec.empty()) return;
        for (const auto& w : params.weights) vec.emplace_back(w.shape());
        for (const auto& b : params.biases) vec.emplace_back(b.shape());
    };
    if (st.kind == OptimizerKind::adagrad) size_like(st.accum_sq);
    if (st.kind == OptimizerKind::adamw) {
        size_like(st.accum_sq);
        size_like(st.moment);
    }
}

void check_finite_grads(const Gradients& grads) {
    for (std::size_t i = 0; i < grads.weights.size(); ++i) {
        if (!grads.weights[i].all_finite() || !grads.biases[i].all_finite())
            throw Error("optimizer_step: non-finite gradient in weighted layer " +
                        std::to_string(i));
    }
}

// One parameter tensor update. `slot` indexes the state accumulators,
// which store weights first and then biases.
void update_tensor(Tensor& p, const Tensor& g, OptimizerState& st, std::size_t slot,
                   bool trainable) {
    if (!trainable) return;
    const double lr = st.learning_rate;
    switch (st.kind) {
    case OptimizerKind::sgd:
        for (std::size_t i = 0; i < p.size(); ++i) p[i] -= lr * g[i];
        break;
    case OptimizerKind::adagrad: {
        Tensor& acc = st.accum_sq[slot];
        for (std::size_t i = 0; i < p.size(); ++i) {
            acc[i] += g[i] * g[i];
            p[i] -= lr * g[i] / (std::sqrt(acc[i]) + st.epsilon);
        }
        break;
    }
    case OptimizerKind::adamw: {
        Tensor& m = st.moment[slot];
        Tensor& v = st.accum_sq[slot];
        const double bc1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step_count));
        const double bc2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step_count));
        for (std::size_t i = 0; i < p.size(); ++i) {
            m[i] = st.beta1 * m[i] + (1.0 - st.beta1) * g[i];
            v[i] = st.beta2 * v[i] + (1.0 - st.beta2) * g[i] * g[i];
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            p[i] -= lr * (mhat / (std::sqrt(vhat) + st.epsilon) + st.weight_decay * p[i]);
        }
        break;
    }
    }
}

} // namespace

void optimizer_step(NetworkParams& params, const Gradients& grads, OptimizerState& state) {
    if (grads.weights.size() != params.weights.size() ||
        grads.biases.size() != params.biases.size())
        throw ShapeError("optimizer_step: gradient/param count mismatch");
    check_finite_grads(grads);
    ensure_state(state, params);
    ++state.step_count;

    const std::size_t nw = params.weights.size();
    for (std::size_t i = 0; i < nw; ++i)
        update_tensor(params.weights[i], grads.weights[i], state, i, true);
    for (std::size_t i = 0; i < nw; ++i) {
        // Conv/tconv biases are the fixed empty placeholder; dense biases train.
        update_tensor(params.biases[i], grads.biases[i], state, nw + i,
                      params.biases[i].size() > 0);
    }
}

namespace {

struct SampleGrad {
    Gradients grads;
    double loss = 0.0;
};

SampleGrad sample_gradient(const NetworkSpec& spec, const NetworkParams& params,
                           const Sample& s, LossKind loss) {
    ForwardCache cache;
    const Tensor pred = forward(params, spec, s.input, &cache);
    SampleGrad out;
    out.loss = compute_loss(pred, s.target, loss);
    out.grads = backward(params, spec, cache, loss_gradient(pred, s.target, loss));
    return out;
}

void accumulate(Gradients& into, const Gradients& from) {
    if (into.weights.empty()) {
        into = from;
        return;
    }
    for (std::size_t i = 0; i < into.weights.size(); ++i) {
        for (std::size_t j = 0; j < into.weights[i].size(); ++j)
            into.weights[i][j] += from.weights[i][j];
        for (std::size_t j = 0; j < into.biases[i].size(); ++j)
            into.biases[i][j] += from.biases[i][j];
    }
}

void scale(Gradients& g, double f) {
    for (auto& w : g.weights)
        for (std::size_t j = 0; j < w.size(); ++j) w[j] *= f;
    for (auto& b : g.biases)
        for (std::size_t j = 0; j < b.size(); ++j) b[j] *= f;
}

} // namespace

TrainRecord fit(const NetworkSpec& spec, NetworkParams& params, const Dataset& train,
                const Dataset* holdout, const FitOptions& options) {
    if (train.size() == 0) throw Error("fit: empty dataset");
    const auto t0 = std::chrono::steady_clock::now();

    OptimizerState state = OptimizerState::make(
        options.optimizer,
        options.learning_rate > 0.0 ? options.learning_rate
                                    : default_learning_rate(options.optimizer),
        options.weight_decay);

    // Shuffle stream is dedicated: reseeding weights does not change batches.
    Rng shuffle_rng(derive_seed(options.seed, 1));

    TrainRecord rec;
    const std::size_t n = train.size();
    const std::size_t batch = std::max<std::size_t>(1, options.batch_size);
    const std::size_t workers = std::max<std::size_t>(1, options.workers);

    for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
        const std::vector<std::size_t> order = shuffle_rng.permutation(n);

        double epoch_loss = 0.0;
        double epoch_max = 0.0;

        for (std::size_t start = 0; start < n; start += batch) {
            const std::size_t end = std::min(n, start + batch);
            const std::size_t count = end - start;

            std::vector<SampleGrad> results(count);
            if (workers <= 1 || count <= 1) {
                for (std::size_t k = 0; k < count; ++k)
                    results[k] = sample_gradient(spec, params, train.samples[order[start + k]],
                                                 options.loss);
            } else {
                // Per-sample gradients are independent; the reduction below is
                // in ascending index order, so worker count cannot change the
                // result.
                std::vector<std::thread> pool;
                std::atomic<std::size_t> next{0};
                const std::size_t nthreads = std::min(workers, count);
                for (std::size_t t = 0; t < nthreads; ++t)
                    pool.emplace_back([&] {
                        for (;;) {
                            const std::size_t k = next.fetch_add(1);
                            if (k >= count) return;
                            results[k] = sample_gradient(
                                spec, params, train.samples[order[start + k]], options.loss);
                        }
                    });
                for (auto& th : pool) th.join();
            }

            Gradients total;
            for (std::size_t k = 0; k < count; ++k) {
                accumulate(total, results[k].grads);
                epoch_loss += results[k].loss;
                epoch_max = std::max(epoch_max, results[k].loss);
            }
            scale(total, 1.0 / static_cast<double>(count));
            optimizer_step(params, total, state);
        }

        epoch_loss /= static_cast<double>(n);
        rec.train_loss.push_back(epoch_loss);
        rec.max_sample_loss.push_back(epoch_max);
        if (holdout && holdout->size() > 0)
            rec.holdout_loss.push_back(evaluate(spec, params, *holdout, options.loss));
        rec.epochs_run = epoch + 1;

        if (!std::isfinite(epoch_loss) || epoch_loss > options.divergence_threshold) {
            rec.diverged = true;
            break;
        }
    }

    rec.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return rec;
}

double evaluate(const NetworkSpec& spec, const NetworkParams& params, const Dataset& data,
                LossKind kind) {
    if (data.size() == 0) throw Error("evaluate: empty dataset");
    double acc = 0.0;
    for (const auto& s : data.samples)
        acc += compute_loss(forward(params, spec, s.input), s.target, kind);
    return acc / static_cast<double>(data.size());
}

std::vector<double> per_sample_losses(const NetworkSpec& spec, const NetworkParams& params,
                                      const Dataset& data, LossKind kind) {
    std::vector<double> out;
    out.reserve(data.size());
    for (const auto& s : data.samples)
        out.push_back(compute_loss(forward(params, spec, s.input), s.target, kind));
    return out;
}

} // namespace fwicert
