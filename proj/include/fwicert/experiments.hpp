#ifndef FWICERT_EXPERIMENTS_HPP
#define FWICERT_EXPERIMENTS_HPP

#include <cstdint>
#include <filesystem>
#include <string>
#include <variant>
#include <vector>

#include "fwicert/bounds.hpp"
#include "fwicert/fwi_sim.hpp"
#include "fwicert/network.hpp"
#include "fwicert/train.hpp"

namespace fwicert {

struct SnrLevel {
    bool infinite = true;
    double db = 0.0;

    static SnrLevel inf() { return {true, 0.0}; }
    static SnrLevel of(double db) { return {false, db}; }
    static SnrLevel parse(const std::string& s);
    std::string label() const;
};

/// Additive Gaussian noise with P_noise = P_signal / 10^(snr/10), P taken as
/// mean square. Infinite level returns the signal unchanged. Errors on a
/// zero-power signal at a finite level.
Tensor add_noise_snr(const Tensor& signal, SnrLevel level, std::uint64_t seed);

struct SsimResult {
    double clamped = 0.0;  // into [0,1]
    double raw = 0.0;
};

/// Standard SSIM with 8x8 sliding windows (stride 1), K1=0.01, K2=0.03,
/// dynamic range 1, population (1/N) moments, mean over windows.
/// Inputs must be equal 2D shapes with values in [0,1].
SsimResult ssim(const Tensor& x, const Tensor& y);

using Cell = std::variant<double, std::string>;

struct ReportTable {
    std::vector<std::string> columns;
    std::vector<std::vector<Cell>> rows;
    std::vector<std::string> provenance;  // rendered as leading comment lines

    void add_row(std::vector<Cell> row);
    double number_at(std::size_t row, const std::string& column) const;
    std::string text_at(std::size_t row, const std::string& column) const;
};

enum class ReportFormat { csv, svg_plot };

void write_report(const ReportTable& table, const std::filesystem::path& path,
                  ReportFormat format);
ReportTable read_csv(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Suites
// ---------------------------------------------------------------------------

struct RobustnessConfig {
    const NetworkSpec* spec_mae = nullptr;
    const NetworkParams* params_mae = nullptr;
    const NetworkSpec* spec_mse = nullptr;
    const NetworkParams* params_mse = nullptr;
    const Dataset* test = nullptr;
    std::vector<SnrLevel> snr_levels;
    std::size_t draws_per_sample = 1;
    std::size_t bound_draws = 200;  // Monte Carlo draws for the BoundReport columns
    std::uint64_t seed = 0;
    std::size_t workers = 1;
    std::vector<std::string> provenance;
};

/// One row per (loss kind x snr level): mean test loss, % loss gain vs clean,
/// SSIM stats, and the certificate columns.
/// Columns: loss_kind,snr_db,test_loss,pct_gain,ssim_mean,ssim_std,rb_mae,
/// rb_mse_stated,emp_gain_max.
ReportTable run_robustness_suite(const RobustnessConfig& config);

struct GeneralizationConfig {
    const LoadedDataset* dataset = nullptr;  // train pool + held-out tail
    std::size_t test_size = 200;             // taken from the end of the dataset
    std::vector<std::size_t> train_sizes;
    std::vector<std::size_t> base_channels;  // architecture widths; default {4}
    std::vector<OptimizerKind> optimizers = {OptimizerKind::sgd, OptimizerKind::adagrad,
                                             OptimizerKind::adamw};
    std::size_t seeds_per_cell = 1;
    LossKind loss = LossKind::mae;
    std::size_t epochs = 25;
    std::size_t batch_size = 16;
    std::uint64_t seed = 0;
    std::size_t workers = 1;
    std::vector<std::string> provenance;
    // When set, per-sample losses land here for bit-exact recomputation.
    std::vector<std::vector<double>>* per_cell_sample_losses = nullptr;
};

/// Columns: n_train,m_over_sqrt_n,frob_product,err_g,err_g_std — one row per
/// (train size x architecture width), averaged over optimizers and seeds.
ReportTable run_generalization_suite(const GeneralizationConfig& config);

struct DriftModel {
    NetworkSpec spec;
    NetworkParams params;
    std::string id;
    double train_loss = 0.0;      // final mean training loss
    double max_train_loss = 0.0;  // M
    std::size_t n_train = 0;      // N
    LossKind loss = LossKind::mae;
};

struct DriftConfig {
    std::vector<DriftModel> models;
    // Drift level -> test dataset (already loaded/normalized).
    std::vector<std::pair<std::string, const Dataset*>> fault_sets;  // "1".."4"
    std::vector<std::pair<std::string, const Dataset*>> freq_sets;   // "15","20","25"
    std::vector<std::string> provenance;
};

/// Columns: model_id,param_combo,drift_kind,drift_level,err_g. param_combo
/// is the paper-style (M/N) * prod||W_i||_F label value.
ReportTable run_drift_suite(const DriftConfig& config);

// Small statistics helpers shared by the suites and acceptance checks.
double spearman_correlation(const std::vector<double>& a, const std::vector<double>& b);
/// One-sided exact sign test: P(X >= successes) for X ~ Binomial(trials, 1/2).
double sign_test_p_value(std::size_t successes, std::size_t trials);

} // namespace fwicert

#endif
