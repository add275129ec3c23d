#ifndef FWICERT_BOUNDS_HPP
#define FWICERT_BOUNDS_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fwicert/network.hpp"
#include "fwicert/train.hpp"

namespace fwicert {

/// Perturbation specification: exactly one of an l2 budget, an SNR in dB,
/// or "infinite" (clean data).
struct NoiseSpec {
    enum class Mode { eta, snr_db, infinite };
    Mode mode = Mode::infinite;
    double value = 0.0;
    std::uint64_t seed = 0;

    static NoiseSpec eta(double eta, std::uint64_t seed) {
        if (eta < 0.0) throw Error("NoiseSpec: eta must be >= 0");
        return {Mode::eta, eta, seed};
    }
    static NoiseSpec snr_db(double db, std::uint64_t seed) { return {Mode::snr_db, db, seed}; }
    static NoiseSpec clean() { return {Mode::infinite, 0.0, 0}; }
};

/// Layer norm products. Conv/tconv layers enter the spectral product (and
/// the operator-Frobenius product) through their explicit operator matrices;
/// the kernel-Frobenius variant is reported alongside.
struct NormProducts {
    double frobenius_kernel = 1.0;
    double frobenius_operator = 1.0;
    double spectral = 1.0;
};

/// include_spectral = false skips the power iterations (spectral reported
/// as 0) for callers that only need the Frobenius products.
NormProducts weight_norm_products(const NetworkSpec& spec, const NetworkParams& params,
                                  bool include_spectral = true);

/// RB_MAE = (prod of operator Frobenius norms) * eta.
double rb_mae_bound(double frobenius_operator_product, double eta);
double rb_mae_bound(const NetworkSpec& spec, const NetworkParams& params, double eta);

/// RB_MSE: `stated` is the printed closed form L*(eta/sqrt(d_in))*(RB_MAE+2a);
/// `solved` is the fixed point 2ac/(1-c) of the proof's recurrence with
/// c = L*eta/sqrt(d_in), unbounded when c >= 1.
struct RbMse {
    double stated = 0.0;
    double solved = 0.0;
    bool solved_bounded = true;
};

RbMse rb_mse_bound(double rb_mae, double eta, std::size_t d_in, double a, double L);

/// Fraction of elements with |pred_noisy + pred_clean - 2*target| >= 1
/// (normalized units); 1.0 means the dominance hypothesis holds everywhere.
double cor2_condition(const Tensor& pred_noisy, const Tensor& pred_clean, const Tensor& target);

struct LossGainStats {
    double max_gain = 0.0;
    double mean_gain = 0.0;
    std::vector<double> gains;        // per draw
    std::vector<double> noise_norms;  // realized ||n||_2 per draw
};

/// |loss(G(x+n)) - loss(G(x))| over n_draws noise draws. eta-mode noise is
/// uniform on the l2 ball; snr-mode is Gaussian scaled per sample, reported
/// with its realized norm. Draw i uses test sample i mod |test| and the
/// counter-based stream derive_seed(seed, i), so results are independent of
/// worker partitioning and draw order.
LossGainStats empirical_loss_gain(const NetworkSpec& spec, const NetworkParams& params,
                                  const Dataset& test, LossKind loss, const NoiseSpec& noise,
                                  std::size_t n_draws, std::uint64_t seed,
                                  std::size_t workers = 1);

/// Uniform draw in the l2 ball of the given radius (Gaussian direction,
/// radius scaled by u^(1/d)).
Tensor sample_ball_noise(const std::vector<std::size_t>& shape, double radius,
                         std::uint64_t stream_seed);

struct CoverResult {
    std::size_t count = 0;
    std::vector<std::size_t> centers;  // indices into the point set
};

/// Greedy farthest-point epsilon-net under l2: iteratively adds the point
/// farthest from the current centers until every point is within `radius`.
/// A valid cover; an upper estimate of the set's true covering number.
CoverResult greedy_covering_number(const std::vector<Tensor>& points, double radius);

struct GenBoundInputs {
    double delta = 0.0;        // cover radius
    double epsilon = 0.05;     // confidence, 0 < epsilon < 1
    double eta = 0.0;          // data noise budget
    double lipschitz = 0.0;    // forward-operator L (lower estimate in practice)
    double max_train_loss = 0.0;  // M
    std::size_t n_train = 1;   // N
    std::size_t cover_count = 1;  // K = covering number at delta/2
    double norm_product = 0.0; // prod ||W_i||_F or prod ||J_i||_{2,2} per flag
    bool lemma3_confidence = false;  // doubles the ln(1/eps) term

    void validate() const;
};

struct GenBoundReport {
    double bound = 0.0;
    double term1 = 0.0;  // (1 + norm_product) * (L*delta + 2*eta)
    double term2 = 0.0;  // M * sqrt((2K ln2 + ln(1/eps)) / N)
    std::optional<double> empirical_gap;  // Err_G when measured

    std::string to_text() const;
};

GenBoundReport generalization_bound(const GenBoundInputs& inputs);

/// Everything the robustness certificate reports for one (model, dataset,
/// noise budget) triple.
struct BoundReport {
    double eta = 0.0;
    double frob_product = 0.0;         // operator variant (certificate)
    double frob_product_kernel = 0.0;  // raw kernel variant, for reference
    double spec_product = 0.0;
    double rb_mae = 0.0;
    double rb_mse_stated = 0.0;
    double rb_mse_solved = 0.0;
    bool rb_mse_solved_bounded = true;
    double lipschitz_upper = 0.0;  // = spec_product
    double max_clean_loss = 0.0;   // a
    std::size_t d_in = 0;
    double empirical_gain_max = 0.0;
    double empirical_gain_mean = 0.0;
    std::size_t n_draws = 0;
    bool violation = false;  // empirical max exceeded RB_MAE: a falsification

    std::string to_text() const;
    static std::string csv_header();
    std::string csv_row() const;
};

/// Runs the full certificate: norm products, RB_MAE/RB_MSE, and the
/// empirical Monte Carlo compliance measurement.
BoundReport make_bound_report(const NetworkSpec& spec, const NetworkParams& params,
                              const Dataset& test, LossKind loss, const NoiseSpec& noise,
                              std::size_t n_draws, std::uint64_t seed,
                              std::size_t workers = 1);

} // namespace fwicert

#endif
