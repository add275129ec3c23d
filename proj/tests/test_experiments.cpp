#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "fwicert/error.hpp"
#include "fwicert/experiments.hpp"
#include "fwicert/rng.hpp"
#include "oracles.hpp"

using namespace fwicert;
namespace fs = std::filesystem;

namespace {

Tensor random_tensor(const std::vector<std::size_t>& shape, Rng& rng, double lo = -1.0,
                     double hi = 1.0) {
    Tensor t(shape);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
    return t;
}

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    REQUIRE(is.good());
    return std::string((std::istreambuf_iterator<char>(is)), {});
}

} // namespace

TEST_SUITE_BEGIN("experiments");

TEST_CASE("snr level parsing and labels") {
    CHECK(SnrLevel::parse("inf").infinite);
    CHECK(SnrLevel::parse("10").db == 10.0);
    CHECK(SnrLevel::parse("0").db == 0.0);
    CHECK(SnrLevel::parse("-5").db == -5.0);
    CHECK(SnrLevel::of(30).label() == "30");
    CHECK(SnrLevel::inf().label() == "inf");
    CHECK_THROWS_AS(SnrLevel::parse("loud"), ConfigError);
}

TEST_CASE("infinite snr returns the signal unchanged") {
    Rng rng(1);
    const Tensor s = random_tensor({3, 7}, rng);
    const Tensor out = add_noise_snr(s, SnrLevel::inf(), 99);
    CHECK(out == s);
}

TEST_CASE("zero-power signals with finite snr are rejected") {
    CHECK_THROWS_AS(add_noise_snr(Tensor({4, 4}), SnrLevel::of(10), 1), Error);
}

TEST_CASE("noise is deterministic per seed") {
    Rng rng(2);
    const Tensor s = random_tensor({20}, rng);
    const Tensor a = add_noise_snr(s, SnrLevel::of(10), 7);
    const Tensor b = add_noise_snr(s, SnrLevel::of(10), 7);
    CHECK(a == b);
    const Tensor c = add_noise_snr(s, SnrLevel::of(10), 8);
    CHECK_FALSE(a == c);
}

TEST_CASE("realized snr lands within 0.1 dB at 1e5 elements") {
    Rng rng(3);
    Tensor s({100000});
    for (std::size_t i = 0; i < s.size(); ++i) s[i] = rng.gaussian();  // unit power
    const Tensor noisy = add_noise_snr(s, SnrLevel::of(0.0), 11);
    double p_sig = 0, p_noise = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        p_sig += s[i] * s[i];
        const double n = noisy[i] - s[i];
        p_noise += n * n;
    }
    const double realized_db = 10.0 * std::log10(p_sig / p_noise);
    CHECK(std::fabs(realized_db - 0.0) <= 0.1);
}

TEST_CASE("ssim of an image with itself is 1") {
    Rng rng(4);
    const Tensor x = random_tensor({16, 16}, rng, 0.0, 1.0);
    const SsimResult r = ssim(x, x);
    CHECK(r.clamped == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(r.raw == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("constant images 0.5 vs 0.25 match the frozen hand evaluation") {
    Tensor a({8, 8}), b({8, 8});
    for (std::size_t i = 0; i < 64; ++i) {
        a[i] = 0.5;
        b[i] = 0.25;
    }
    // Zero variances: luminance term only, (2*0.125 + 1e-4)/(0.3125 + 1e-4).
    const double expected = 0.2501 / 0.3126;
    const SsimResult r = ssim(a, b);
    CHECK(r.raw == doctest::Approx(expected).epsilon(1e-12));
    CHECK(r.raw == doctest::Approx(0.8000639795).epsilon(1e-9));
}

TEST_CASE("ssim matches the independent two-pass loop on random pairs") {
    Rng rng(5);
    for (int t = 0; t < 10; ++t) {
        const Tensor x = random_tensor({16, 16}, rng, 0.0, 1.0);
        const Tensor y = random_tensor({16, 16}, rng, 0.0, 1.0);
        const double direct = oracles::direct_ssim(x, y);
        CHECK(std::fabs(ssim(x, y).raw - direct) <= 1e-12);
    }
}

TEST_CASE("ssim is exactly symmetric") {
    Rng rng(6);
    for (int t = 0; t < 10; ++t) {
        const Tensor x = random_tensor({12, 12}, rng, 0.0, 1.0);
        const Tensor y = random_tensor({12, 12}, rng, 0.0, 1.0);
        CHECK(ssim(x, y).raw == ssim(y, x).raw);
    }
}

TEST_CASE("ssim rejects bad inputs") {
    CHECK_THROWS_AS(ssim(Tensor({8, 8}), Tensor({8, 9})), ShapeError);
    CHECK_THROWS_AS(ssim(Tensor({4, 4}), Tensor({4, 4})), ShapeError);
    Tensor out_of_range({8, 8});
    out_of_range[0] = 1.5;
    CHECK_THROWS_AS(ssim(out_of_range, Tensor({8, 8})), Error);
}

TEST_CASE("report tables reject ragged rows and non-finite cells") {
    ReportTable t;
    t.columns = {"a", "b"};
    CHECK_THROWS_AS(t.add_row({1.0}), Error);
    CHECK_THROWS_AS(t.add_row({1.0, std::nan("")}), Error);
    t.add_row({1.0, std::string("x")});
    CHECK(t.number_at(0, "a") == 1.0);
    CHECK(t.text_at(0, "b") == "x");
}

TEST_CASE("csv round trip reproduces every byte") {
    ReportTable t;
    t.columns = {"kind", "value", "note"};
    t.provenance = {"tool = fwicert test", "config_hash = deadbeef"};
    t.add_row({std::string("alpha"), 0.1234567890123456789, std::string("")});
    t.add_row({std::string("beta"), -7.25e-31, std::string("inf")});
    t.add_row({std::string("gamma"), 42.0, std::string("plain")});

    const fs::path p1 = fs::temp_directory_path() / "fwicert_t1.csv";
    const fs::path p2 = fs::temp_directory_path() / "fwicert_t2.csv";
    write_report(t, p1, ReportFormat::csv);
    const ReportTable back = read_csv(p1);
    CHECK(back.columns == t.columns);
    CHECK(back.rows.size() == t.rows.size());
    write_report(back, p2, ReportFormat::csv);
    CHECK(slurp(p1) == slurp(p2));
    fs::remove(p1);
    fs::remove(p2);
}

TEST_CASE("empty tables render a header-only csv") {
    ReportTable t;
    t.columns = {"x", "y"};
    const fs::path p = fs::temp_directory_path() / "fwicert_empty.csv";
    write_report(t, p, ReportFormat::csv);
    CHECK(slurp(p) == "x,y\n");
    fs::remove(p);
}

namespace {

// Minimal trained-ish pair of models over a toy dataset, reused by the suite
// tests below.
struct SuiteFixture {
    NetworkSpec spec;
    NetworkParams params_mae;
    NetworkParams params_mse;
    Dataset test;

    SuiteFixture() {
        spec = make_encoder_decoder_spec(1, 16, 16, 16, 16, 2);
        params_mae = init_params(spec, 1);
        params_mse = init_params(spec, 2);
        Rng rng(3);
        for (int i = 0; i < 6; ++i) {
            Sample s;
            s.input = random_tensor({1, 16, 16}, rng);
            s.target = random_tensor({1, 16, 16}, rng, 0.0, 1.0);
            test.samples.push_back(std::move(s));
        }
    }
};

} // namespace

TEST_CASE("robustness suite row cardinality and columns") {
    SuiteFixture fx;
    RobustnessConfig rc;
    rc.spec_mae = &fx.spec;
    rc.params_mae = &fx.params_mae;
    rc.spec_mse = &fx.spec;
    rc.params_mse = &fx.params_mse;
    rc.test = &fx.test;
    rc.seed = 10;

    SUBCASE("inf only: one row per loss kind with an empty gain cell") {
        rc.snr_levels = {SnrLevel::inf()};
        const ReportTable t = run_robustness_suite(rc);
        REQUIRE(t.rows.size() == 2);
        CHECK(t.text_at(0, "loss_kind") == "mae");
        CHECK(t.text_at(1, "loss_kind") == "mse");
        CHECK(t.text_at(0, "pct_gain") == "");
        CHECK(t.text_at(0, "snr_db") == "inf");
        CHECK(t.number_at(0, "rb_mae") == 0.0);  // eta = 0 on clean data
    }

    SUBCASE("5 levels x 2 losses = 10 rows in fixed order") {
        for (const char* lv : {"inf", "30", "20", "10", "0"})
            rc.snr_levels.push_back(SnrLevel::parse(lv));
        const ReportTable t = run_robustness_suite(rc);
        REQUIRE(t.rows.size() == 10);
        CHECK(t.columns == std::vector<std::string>{"loss_kind", "snr_db", "test_loss",
                                                    "pct_gain", "ssim_mean", "ssim_std",
                                                    "rb_mae", "rb_mse_stated", "emp_gain_max"});
        // Noisy rows carry numeric gains.
        CHECK_NOTHROW(t.number_at(1, "pct_gain"));
        CHECK(t.number_at(1, "rb_mae") > 0.0);
    }
}

TEST_CASE("svg plots are well-formed with one polyline per loss kind") {
    SuiteFixture fx;
    RobustnessConfig rc;
    rc.spec_mae = &fx.spec;
    rc.params_mae = &fx.params_mae;
    rc.spec_mse = &fx.spec;
    rc.params_mse = &fx.params_mse;
    rc.test = &fx.test;
    rc.seed = 10;
    for (const char* lv : {"inf", "20", "0"}) rc.snr_levels.push_back(SnrLevel::parse(lv));
    const ReportTable t = run_robustness_suite(rc);

    const fs::path p = fs::temp_directory_path() / "fwicert_plot.svg";
    write_report(t, p, ReportFormat::svg_plot);
    const std::string svg = slurp(p);
    CHECK(svg.find("<?xml") == 0);
    CHECK(svg.rfind("</svg>") != std::string::npos);
    std::size_t polylines = 0;
    for (std::size_t at = svg.find("<polyline"); at != std::string::npos;
         at = svg.find("<polyline", at + 1))
        ++polylines;
    CHECK(polylines == 2);
    // Angle brackets balance (cheap well-formedness proxy).
    CHECK(std::count(svg.begin(), svg.end(), '<') == std::count(svg.begin(), svg.end(), '>'));
    fs::remove(p);
}

TEST_CASE("robustness suite output is reproducible bit-exactly") {
    SuiteFixture fx;
    RobustnessConfig rc;
    rc.spec_mae = &fx.spec;
    rc.params_mae = &fx.params_mae;
    rc.spec_mse = &fx.spec;
    rc.params_mse = &fx.params_mse;
    rc.test = &fx.test;
    rc.seed = 12;
    rc.snr_levels = {SnrLevel::inf(), SnrLevel::of(10)};

    const fs::path p1 = fs::temp_directory_path() / "fwicert_rep1.csv";
    const fs::path p2 = fs::temp_directory_path() / "fwicert_rep2.csv";
    write_report(run_robustness_suite(rc), p1, ReportFormat::csv);
    write_report(run_robustness_suite(rc), p2, ReportFormat::csv);
    CHECK(slurp(p1) == slurp(p2));
    fs::remove(p1);
    fs::remove(p2);
}

TEST_CASE("generalization suite: cardinality and bit-exact recomputation") {
    // Tiny in-memory dataset standing in for a loaded one.
    LoadedDataset ds;
    Rng rng(20);
    for (int i = 0; i < 30; ++i) {
        Sample s;
        s.input = random_tensor({1, 16, 16}, rng);
        s.target = random_tensor({1, 16, 16}, rng, 0.0, 1.0);
        ds.data.samples.push_back(std::move(s));
    }

    std::vector<std::vector<double>> stored;
    GeneralizationConfig gc;
    gc.dataset = &ds;
    gc.test_size = 10;
    gc.train_sizes = {8, 16};
    gc.base_channels = {2};
    gc.optimizers = {OptimizerKind::sgd, OptimizerKind::adamw};
    gc.seeds_per_cell = 1;
    gc.epochs = 2;
    gc.batch_size = 4;
    gc.seed = 5;
    gc.per_cell_sample_losses = &stored;

    const ReportTable t = run_generalization_suite(gc);
    REQUIRE(t.rows.size() == 2);  // one row per train size (single width)
    REQUIRE(stored.size() == 2);

    for (std::size_t cell = 0; cell < 2; ++cell) {
        const std::size_t n_train = std::size_t(t.number_at(cell, "n_train"));
        const std::size_t per_model = n_train + gc.test_size;
        REQUIRE(stored[cell].size() == 2 * per_model);  // two optimizers
        double err_sum = 0.0;
        for (std::size_t m = 0; m < 2; ++m) {
            double tr = 0, te = 0;
            for (std::size_t i = 0; i < n_train; ++i) tr += stored[cell][m * per_model + i];
            for (std::size_t i = 0; i < gc.test_size; ++i)
                te += stored[cell][m * per_model + n_train + i];
            err_sum += std::fabs(tr / double(n_train) - te / double(gc.test_size));
        }
        CHECK(t.number_at(cell, "err_g") == err_sum / 2.0);
    }
}

TEST_CASE("drift suite layout and consistency with direct evaluation") {
    SuiteFixture fx;
    DriftModel model;
    model.spec = fx.spec;
    model.params = fx.params_mae;
    model.id = "m0";
    model.train_loss = 0.25;
    model.max_train_loss = 0.5;
    model.n_train = 10;
    model.loss = LossKind::mae;

    DriftConfig dc;
    dc.models.push_back(model);
    dc.fault_sets = {{"1", &fx.test}, {"2", &fx.test}};
    dc.freq_sets = {{"15", &fx.test}};
    const ReportTable t = run_drift_suite(dc);
    REQUIRE(t.rows.size() == 3);
    CHECK(t.text_at(0, "drift_kind") == "faults");
    CHECK(t.text_at(2, "drift_kind") == "freq");
    const double direct = evaluate(fx.spec, fx.params_mae, fx.test, LossKind::mae);
    CHECK(t.number_at(0, "err_g") == doctest::Approx(std::fabs(0.25 - direct)).epsilon(1e-15));
    // Same test set at every level here, so err_g must be identical.
    CHECK(t.number_at(0, "err_g") == t.number_at(1, "err_g"));
}

TEST_CASE("spearman correlation on ranks") {
    CHECK(spearman_correlation({1, 2, 3, 4}, {10, 20, 30, 40}) == doctest::Approx(1.0));
    CHECK(spearman_correlation({1, 2, 3, 4}, {9, 7, 5, 3}) == doctest::Approx(-1.0));
    const double swapped = spearman_correlation({1, 2, 3, 4}, {2, 1, 3, 4});
    CHECK(swapped == doctest::Approx(0.8));
}

TEST_CASE("sign test p-values are exact binomial tails") {
    CHECK(sign_test_p_value(3, 3) == doctest::Approx(0.125).epsilon(1e-12));
    CHECK(sign_test_p_value(4, 4) == doctest::Approx(0.0625).epsilon(1e-12));
    CHECK(sign_test_p_value(4, 5) == doctest::Approx(6.0 / 32.0).epsilon(1e-12));
    CHECK(sign_test_p_value(0, 5) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_SUITE_END();
