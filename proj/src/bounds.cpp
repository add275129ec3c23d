#include "fwicert/bounds.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>
#include <thread>

#include "fwicert/error.hpp"
#include "fwicert/linop.hpp"
#include "fwicert/rng.hpp"

namespace fwicert {

namespace {

std::string fmt_double(double v) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

double tensor_frobenius(const Tensor& t) {
    double s = 0.0;
    for (std::size_t i = 0; i < t.size(); ++i) s += t[i] * t[i];
    return std::sqrt(s);
}

} // namespace

NormProducts weight_norm_products(const NetworkSpec& spec, const NetworkParams& params,
                                  bool include_spectral) {
    if (params.weights.size() != spec.depth())
        throw ShapeError("weight_norm_products: params do not match spec");
    NormProducts p;
    if (!include_spectral) p.spectral = 0.0;
    std::size_t wi = 0;
    for (const auto& l : spec.layers) {
        if (!l.has_weights()) continue;
        const Tensor& w = params.weights[wi++];
        w.require_finite("weight_norm_products");
        if (l.kind == LayerKind::dense) {
            OperatorMatrix op(l.dense_out, l.dense_in);
            op.data = w.values();
            const double fro = matrix_norm(op, NormKind::frobenius);
            p.frobenius_kernel *= fro;
            p.frobenius_operator *= fro;
            if (include_spectral) p.spectral *= matrix_norm(op, NormKind::spectral);
        } else {
            // The certificate norms live on the explicit linear operator of
            // Fact 1/2, not on the raw kernel. Transposition preserves both
            // norms, so conv and tconv share the same computation.
            const OperatorMatrix op = build_conv_operator(w, l.geom);
            p.frobenius_kernel *= tensor_frobenius(w);
            p.frobenius_operator *= matrix_norm(op, NormKind::frobenius);
            if (include_spectral) p.spectral *= matrix_norm(op, NormKind::spectral);
        }
    }
    return p;
}

double rb_mae_bound(double frobenius_operator_product, double eta) {
    if (eta < 0.0) throw Error("rb_mae_bound: eta must be >= 0");
    return frobenius_operator_product * eta;
}

double rb_mae_bound(const NetworkSpec& spec, const NetworkParams& params, double eta) {
    return rb_mae_bound(weight_norm_products(spec, params).frobenius_operator, eta);
}

RbMse rb_mse_bound(double rb_mae, double eta, std::size_t d_in, double a, double L) {
    if (d_in < 1) throw Error("rb_mse_bound: d_in must be >= 1");
    if (a < 0.0 || L < 0.0 || eta < 0.0) throw Error("rb_mse_bound: negative input");
    RbMse out;
    const double c = L * eta / std::sqrt(static_cast<double>(d_in));
    out.stated = c * (rb_mae + 2.0 * a);
    if (c < 1.0) {
        out.solved = 2.0 * a * c / (1.0 - c);
        out.solved_bounded = true;
    } else {
        out.solved = std::numeric_limits<double>::infinity();
        out.solved_bounded = false;
    }
    return out;
}

double cor2_condition(const Tensor& pred_noisy, const Tensor& pred_clean,
                      const Tensor& target) {
    if (!pred_noisy.same_shape(pred_clean) || !pred_noisy.same_shape(target))
        throw ShapeError("cor2_condition: shape mismatch");
    std::size_t satisfied = 0;
    for (std::size_t i = 0; i < target.size(); ++i)
        if (std::fabs(pred_noisy[i] + pred_clean[i] - 2.0 * target[i]) >= 1.0) ++satisfied;
    return static_cast<double>(satisfied) / static_cast<double>(target.size());
}

Tensor sample_ball_noise(const std::vector<std::size_t>& shape, double radius,
                         std::uint64_t stream_seed) {
    Rng rng(stream_seed);
    Tensor n(shape);
    double norm2 = 0.0;
    for (std::size_t i = 0; i < n.size(); ++i) {
        n[i] = rng.gaussian();
        norm2 += n[i] * n[i];
    }
    const double norm = std::sqrt(norm2);
    if (norm == 0.0) return n;
    const double u = rng.uniform();
    const double r = radius * std::pow(u, 1.0 / static_cast<double>(n.size()));
    for (std::size_t i = 0; i < n.size(); ++i) n[i] *= r / norm;
    return n;
}

namespace {

Tensor sample_snr_noise(const Tensor& signal, double snr_db, std::uint64_t stream_seed) {
    double power = 0.0;
    for (std::size_t i = 0; i < signal.size(); ++i) power += signal[i] * signal[i];
    power /= static_cast<double>(signal.size());
    const double sigma = std::sqrt(power / std::pow(10.0, snr_db / 10.0));
    Rng rng(stream_seed);
    Tensor n(signal.shape());
    for (std::size_t i = 0; i < n.size(); ++i) n[i] = sigma * rng.gaussian();
    return n;
}

} // namespace

LossGainStats empirical_loss_gain(const NetworkSpec& spec, const NetworkParams& params,
                                  const Dataset& test, LossKind loss, const NoiseSpec& noise,
                                  std::size_t n_draws, std::uint64_t seed,
                                  std::size_t workers) {
    if (n_draws < 1) throw Error("empirical_loss_gain: n_draws must be >= 1");
    if (test.size() == 0) throw Error("empirical_loss_gain: empty test set");

    // Clean losses are shared across draws.
    const std::vector<double> clean = per_sample_losses(spec, params, test, loss);

    LossGainStats stats;
    stats.gains.resize(n_draws);
    stats.noise_norms.resize(n_draws);

    auto run_draw = [&](std::size_t d) {
        const Sample& s = test.samples[d % test.size()];
        const std::uint64_t stream = derive_seed(derive_seed(noise.seed, seed), d);
        Tensor n;
        switch (noise.mode) {
        case NoiseSpec::Mode::infinite:
            n = Tensor(s.input.shape());
            break;
        case NoiseSpec::Mode::eta:
            n = sample_ball_noise(s.input.shape(), noise.value, stream);
            break;
        case NoiseSpec::Mode::snr_db:
            n = sample_snr_noise(s.input, noise.value, stream);
            break;
        }
        stats.noise_norms[d] = n.l2_norm();
        Tensor noisy = s.input;
        for (std::size_t i = 0; i < noisy.size(); ++i) noisy[i] += n[i];
        const double noisy_loss = compute_loss(forward(params, spec, noisy), s.target, loss);
        stats.gains[d] = std::fabs(noisy_loss - clean[d % test.size()]);
    };

    if (workers <= 1 || n_draws <= 1) {
        for (std::size_t d = 0; d < n_draws; ++d) run_draw(d);
    } else {
        std::vector<std::thread> pool;
        std::atomic<std::size_t> next{0};
        const std::size_t nthreads = std::min(workers, n_draws);
        for (std::size_t t = 0; t < nthreads; ++t)
            pool.emplace_back([&] {
                for (;;) {
                    const std::size_t d = next.fetch_add(1);
                    if (d >= n_draws) return;
                    run_draw(d);
                }
            });
        for (auto& th : pool) th.join();
    }

    double sum = 0.0;
    for (double g : stats.gains) {
        stats.max_gain = std::max(stats.max_gain, g);
        sum += g;
    }
    stats.mean_gain = sum / static_cast<double>(n_draws);
    return stats;
}

CoverResult greedy_covering_number(const std::vector<Tensor>& points, double radius) {
    if (points.empty()) throw Error("greedy_covering_number: empty point set");
    if (radius <= 0.0) throw Error("greedy_covering_number: radius must be > 0");

    const std::size_t n = points.size();
    auto dist = [&](std::size_t i, std::size_t j) {
        const Tensor& a = points[i];
        const Tensor& b = points[j];
        if (!a.same_shape(b)) throw ShapeError("greedy_covering_number: mixed shapes");
        double s = 0.0;
        for (std::size_t k = 0; k < a.size(); ++k) {
            const double d = a[k] - b[k];
            s += d * d;
        }
        return std::sqrt(s);
    };

    CoverResult res;
    std::vector<double> nearest(n, std::numeric_limits<double>::infinity());
    std::size_t next_center = 0;  // first point seeds the cover
    for (;;) {
        res.centers.push_back(next_center);
        for (std::size_t i = 0; i < n; ++i)
            nearest[i] = std::min(nearest[i], dist(i, next_center));
        double worst = 0.0;
        std::size_t worst_idx = 0;
        for (std::size_t i = 0; i < n; ++i)
            if (nearest[i] > worst) {
                worst = nearest[i];
                worst_idx = i;
            }
        if (worst <= radius) break;
        next_center = worst_idx;
    }
    res.count = res.centers.size();
    return res;
}

void GenBoundInputs::validate() const {
    if (!(epsilon > 0.0 && epsilon < 1.0))
        throw Error("generalization_bound: epsilon must be in (0, 1)");
    if (delta < 0.0 || eta < 0.0) throw Error("generalization_bound: delta, eta must be >= 0");
    if (n_train < 1) throw Error("generalization_bound: N must be >= 1");
    if (cover_count < 1) throw Error("generalization_bound: K must be >= 1");
    if (lipschitz < 0.0 || max_train_loss < 0.0 || norm_product < 0.0)
        throw Error("generalization_bound: negative input");
}

GenBoundReport generalization_bound(const GenBoundInputs& in) {
    in.validate();
    GenBoundReport r;
    r.term1 = (1.0 + in.norm_product) * (in.lipschitz * in.delta + 2.0 * in.eta);
    const double confidence = in.lemma3_confidence ? 2.0 * std::log(1.0 / in.epsilon)
                                                   : std::log(1.0 / in.epsilon);
    r.term2 = in.max_train_loss *
              std::sqrt((2.0 * static_cast<double>(in.cover_count) * std::log(2.0) + confidence) /
                        static_cast<double>(in.n_train));
    r.bound = r.term1 + r.term2;
    return r;
}

std::string GenBoundReport::to_text() const {
    std::ostringstream os;
    os << "bound = " << fmt_double(bound) << "\n";
    os << "term1 = " << fmt_double(term1) << "\n";
    os << "term2 = " << fmt_double(term2) << "\n";
    if (empirical_gap) os << "empirical_gap = " << fmt_double(*empirical_gap) << "\n";
    return os.str();
}

std::string BoundReport::to_text() const {
    std::ostringstream os;
    os << "eta = " << fmt_double(eta) << "\n";
    os << "frob_product = " << fmt_double(frob_product) << "\n";
    os << "frob_product_kernel = " << fmt_double(frob_product_kernel) << "\n";
    os << "spec_product = " << fmt_double(spec_product) << "\n";
    os << "rb_mae = " << fmt_double(rb_mae) << "\n";
    os << "rb_mse_stated = " << fmt_double(rb_mse_stated) << "\n";
    os << "rb_mse_solved = "
       << (rb_mse_solved_bounded ? fmt_double(rb_mse_solved) : std::string("unbounded")) << "\n";
    os << "lipschitz_upper = " << fmt_double(lipschitz_upper) << "\n";
    os << "max_clean_loss = " << fmt_double(max_clean_loss) << "\n";
    os << "d_in = " << d_in << "\n";
    os << "empirical_gain_max = " << fmt_double(empirical_gain_max) << "\n";
    os << "empirical_gain_mean = " << fmt_double(empirical_gain_mean) << "\n";
    os << "n_draws = " << n_draws << "\n";
    os << "violation = " << (violation ? "true" : "false") << "\n";
    return os.str();
}

std::string BoundReport::csv_header() {
    return "eta,frob_product,frob_product_kernel,spec_product,rb_mae,rb_mse_stated,"
           "rb_mse_solved,lipschitz_upper,max_clean_loss,d_in,empirical_gain_max,"
           "empirical_gain_mean,n_draws,violation";
}

std::string BoundReport::csv_row() const {
    std::ostringstream os;
    os << fmt_double(eta) << ',' << fmt_double(frob_product) << ','
       << fmt_double(frob_product_kernel) << ',' << fmt_double(spec_product) << ','
       << fmt_double(rb_mae) << ',' << fmt_double(rb_mse_stated) << ','
       << (rb_mse_solved_bounded ? fmt_double(rb_mse_solved) : std::string("unbounded")) << ','
       << fmt_double(lipschitz_upper) << ',' << fmt_double(max_clean_loss) << ',' << d_in << ','
       << fmt_double(empirical_gain_max) << ',' << fmt_double(empirical_gain_mean) << ','
       << n_draws << ',' << (violation ? "true" : "false");
    return os.str();
}

BoundReport make_bound_report(const NetworkSpec& spec, const NetworkParams& params,
                              const Dataset& test, LossKind loss, const NoiseSpec& noise,
                              std::size_t n_draws, std::uint64_t seed, std::size_t workers) {
    BoundReport rep;
    const NormProducts np = weight_norm_products(spec, params);
    rep.frob_product = np.frobenius_operator;
    rep.frob_product_kernel = np.frobenius_kernel;
    rep.spec_product = np.spectral;
    rep.lipschitz_upper = np.spectral;

    std::size_t d_in = 1;
    for (std::size_t d : spec.input_shape) d_in *= d;
    rep.d_in = d_in;

    const std::vector<double> clean = per_sample_losses(spec, params, test, loss);
    rep.max_clean_loss = *std::max_element(clean.begin(), clean.end());

    const LossGainStats stats =
        empirical_loss_gain(spec, params, test, loss, noise, n_draws, seed, workers);
    rep.empirical_gain_max = stats.max_gain;
    rep.empirical_gain_mean = stats.mean_gain;
    rep.n_draws = n_draws;

    // eta: the stated budget, or the largest realized norm for SNR noise.
    if (noise.mode == NoiseSpec::Mode::eta) {
        rep.eta = noise.value;
    } else if (noise.mode == NoiseSpec::Mode::snr_db) {
        rep.eta = *std::max_element(stats.noise_norms.begin(), stats.noise_norms.end());
    } else {
        rep.eta = 0.0;
    }

    rep.rb_mae = rb_mae_bound(rep.frob_product, rep.eta);
    const RbMse mse = rb_mse_bound(rep.rb_mae, rep.eta, d_in, rep.max_clean_loss,
                                   rep.lipschitz_upper);
    rep.rb_mse_stated = mse.stated;
    rep.rb_mse_solved = mse.solved;
    rep.rb_mse_solved_bounded = mse.solved_bounded;

    // Thm 1 compliance only certifies MAE-trained objectives under eta noise.
    if (loss == LossKind::mae && noise.mode == NoiseSpec::Mode::eta)
        rep.violation = rep.empirical_gain_max > rep.rb_mae;
    return rep;
}

} // namespace fwicert
