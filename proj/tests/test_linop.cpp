#include <doctest.h>

#include <cmath>

#include "fwicert/error.hpp"
#include "fwicert/linop.hpp"
#include "fwicert/rng.hpp"
#include "oracles.hpp"

using namespace fwicert;

namespace {

Tensor random_tensor(const std::vector<std::size_t>& shape, Rng& rng, double lo = -1.0,
                     double hi = 1.0) {
    Tensor t(shape);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
    return t;
}

} // namespace

TEST_SUITE_BEGIN("linop");

TEST_CASE("conv operator reproduces the 4x9 single-channel matrix") {
    // 2x2 kernel on a 3x3 input, stride 1, pad 0: each output row shifts the
    // four weights by one column per output position.
    const double w11 = 1.5, w12 = -2.0, w21 = 0.25, w22 = 3.0;
    Tensor kernel({2, 2}, {w11, w12, w21, w22});
    ConvGeometry geom{3, 3, 1, 1, 2, 2, 1, 0};
    const OperatorMatrix op = build_conv_operator(kernel, geom);

    REQUIRE(op.rows == 4);
    REQUIRE(op.cols == 9);
    const double expected[4][9] = {
        {w11, w12, 0, w21, w22, 0, 0, 0, 0},
        {0, w11, w12, 0, w21, w22, 0, 0, 0},
        {0, 0, 0, w11, w12, 0, w21, w22, 0},
        {0, 0, 0, 0, w11, w12, 0, w21, w22},
    };
    for (std::size_t r = 0; r < 4; ++r)
        for (std::size_t c = 0; c < 9; ++c) CHECK(op.at(r, c) == expected[r][c]);
}

TEST_CASE("1x1 kernel gives w * identity") {
    const double w = 2.75;
    Tensor kernel({1, 1}, {w});
    ConvGeometry geom{4, 4, 1, 1, 1, 1, 1, 0};
    const OperatorMatrix op = build_conv_operator(kernel, geom);
    REQUIRE(op.rows == 16);
    REQUIRE(op.cols == 16);
    for (std::size_t r = 0; r < 16; ++r)
        for (std::size_t c = 0; c < 16; ++c) CHECK(op.at(r, c) == (r == c ? w : 0.0));

    const OperatorMatrix opt = build_transposed_conv_operator(kernel, geom);
    for (std::size_t r = 0; r < 16; ++r)
        for (std::size_t c = 0; c < 16; ++c) CHECK(opt.at(r, c) == (r == c ? w : 0.0));
}

TEST_CASE("strided conv operator agrees with direct convolution") {
    Rng rng(7);
    Tensor kernel = random_tensor({2, 2}, rng);
    ConvGeometry geom{4, 4, 1, 1, 2, 2, 2, 0};
    const OperatorMatrix op = build_conv_operator(kernel, geom);
    REQUIRE(op.rows == 4);
    REQUIRE(op.cols == 16);

    for (int trial = 0; trial < 100; ++trial) {
        const Tensor x = random_tensor({4, 4}, rng);
        const std::vector<double> via_op = op.apply(x.values());
        const Tensor direct = conv2d_direct(x, kernel, geom);
        for (std::size_t i = 0; i < via_op.size(); ++i)
            CHECK(std::fabs(via_op[i] - direct[i]) <= 1e-12);
    }
}

TEST_CASE("conv2d_direct matches the hand-computed ramp example") {
    Tensor kernel({2, 2}, {1, 2, 3, 4});
    Tensor x({3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
    ConvGeometry geom{3, 3, 1, 1, 2, 2, 1, 0};
    const Tensor out = conv2d_direct(x, kernel, geom);
    REQUIRE(out.shape() == std::vector<std::size_t>{1, 2, 2});
    CHECK(out[0] == 37.0);
    CHECK(out[1] == 47.0);
    CHECK(out[2] == 67.0);
    CHECK(out[3] == 77.0);
}

TEST_CASE("zero input convolves to zero") {
    Tensor kernel({2, 2}, {1, 2, 3, 4});
    ConvGeometry geom{5, 5, 1, 1, 2, 2, 1, 0};
    const Tensor out = conv2d_direct(Tensor({5, 5}), kernel, geom);
    for (std::size_t i = 0; i < out.size(); ++i) CHECK(out[i] == 0.0);
    const Tensor tout = tconv2d_direct(Tensor({4, 4}), kernel, geom);
    for (std::size_t i = 0; i < tout.size(); ++i) CHECK(tout[i] == 0.0);
}

TEST_CASE("transposed conv of a unit impulse stamps the kernel") {
    Tensor kernel({2, 2}, {1, 2, 3, 4});
    ConvGeometry geom{4, 4, 1, 1, 2, 2, 2, 0};
    Tensor y({2, 2});
    y[0 * 2 + 1] = 1.0;  // output position (0, 1) -> window origin (0, 2)
    const Tensor x = tconv2d_direct(y, kernel, geom);
    REQUIRE(x.shape() == std::vector<std::size_t>{1, 4, 4});
    CHECK(x.at({0, 0, 2}) == 1.0);
    CHECK(x.at({0, 0, 3}) == 2.0);
    CHECK(x.at({0, 1, 2}) == 3.0);
    CHECK(x.at({0, 1, 3}) == 4.0);
    double sum = 0;
    for (std::size_t i = 0; i < x.size(); ++i) sum += std::fabs(x[i]);
    CHECK(sum == 10.0);
}

TEST_CASE("transposed operator is the entrywise transpose") {
    Rng rng(11);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t ic = 1 + rng.index(2), oc = 1 + rng.index(2);
        const std::size_t k = 1 + rng.index(3);
        const std::size_t in = k + rng.index(5);
        ConvGeometry geom{in, in, ic, oc, k, k, 1 + rng.index(2), rng.index(2)};
        const Tensor kernel = random_tensor({oc, ic, k, k}, rng);
        const OperatorMatrix a = build_conv_operator(kernel, geom);
        const OperatorMatrix at = build_transposed_conv_operator(kernel, geom);
        REQUIRE(at.rows == a.cols);
        REQUIRE(at.cols == a.rows);
        for (std::size_t r = 0; r < a.rows; ++r)
            for (std::size_t c = 0; c < a.cols; ++c) CHECK(at.at(c, r) == a.at(r, c));
    }
}

TEST_CASE("transposed conv agrees with the operator product") {
    Rng rng(13);
    Tensor kernel = random_tensor({2, 2}, rng);
    ConvGeometry geom{4, 4, 1, 1, 2, 2, 2, 0};
    const OperatorMatrix opt = build_transposed_conv_operator(kernel, geom);
    for (int trial = 0; trial < 100; ++trial) {
        const Tensor y = random_tensor({2, 2}, rng);
        const std::vector<double> via_op = opt.apply(y.values());
        const Tensor direct = tconv2d_direct(y, kernel, geom);
        for (std::size_t i = 0; i < via_op.size(); ++i)
            CHECK(std::fabs(via_op[i] - direct[i]) <= 1e-12);
    }
}

TEST_CASE("operator equivalence sweep over kernels, strides and channels") {
    // Property run at unit-test scale; the acceptance suite runs the larger
    // 500-triple version.
    Rng rng(17);
    for (int trial = 0; trial < 60; ++trial) {
        const std::size_t k = 1 + rng.index(3);
        const std::size_t in = k + rng.index(9 - k);
        const std::size_t stride = 1 + rng.index(2);
        const std::size_t pad = rng.index(2);
        const std::size_t ic = 1 + rng.index(2), oc = 1 + rng.index(2);
        ConvGeometry geom{in, in, ic, oc, k, k, stride, pad};
        const Tensor kernel = random_tensor({oc, ic, k, k}, rng);
        const OperatorMatrix op = build_conv_operator(kernel, geom);
        const Tensor x = random_tensor({ic, in, in}, rng);
        const std::vector<double> via_op = op.apply(x.values());
        const Tensor direct = conv2d_direct(x, kernel, geom);
        REQUIRE(via_op.size() == direct.size());
        for (std::size_t i = 0; i < via_op.size(); ++i)
            CHECK(std::fabs(via_op[i] - direct[i]) <= 1e-12);
    }
}

TEST_CASE("every nonzero operator entry is bit-identical to a kernel weight") {
    Rng rng(19);
    ConvGeometry geom{6, 6, 2, 3, 3, 3, 2, 1};
    const Tensor kernel = random_tensor({3, 2, 3, 3}, rng);
    const OperatorMatrix op = build_conv_operator(kernel, geom);
    std::size_t nonzeros = 0;
    for (double v : op.data) {
        if (v == 0.0) continue;
        ++nonzeros;
        bool found = false;
        for (std::size_t i = 0; i < kernel.size() && !found; ++i) found = kernel[i] == v;
        CHECK(found);
    }
    CHECK(nonzeros > 0);
}

TEST_CASE("norms of small matrices") {
    OperatorMatrix eye(3, 3);
    for (int i = 0; i < 3; ++i) eye.at(i, i) = 1.0;
    CHECK(matrix_norm(eye, NormKind::frobenius) == doctest::Approx(std::sqrt(3.0)).epsilon(1e-12));
    CHECK(matrix_norm(eye, NormKind::spectral) == doctest::Approx(1.0).epsilon(1e-9));

    OperatorMatrix diag(2, 2);
    diag.at(0, 0) = 3.0;
    diag.at(1, 1) = 2.0;
    CHECK(matrix_norm(diag, NormKind::spectral) == doctest::Approx(3.0).epsilon(1e-9));
}

TEST_CASE("spectral norm matches the Jacobi SVD oracle on random matrices") {
    Rng rng(23);
    for (int trial = 0; trial < 5; ++trial) {
        OperatorMatrix a(20, 20);
        for (auto& v : a.data) v = rng.uniform(-1.0, 1.0);
        const double power = matrix_norm(a, NormKind::spectral);
        const double oracle = oracles::jacobi_spectral_norm(a.rows, a.cols, a.data);
        CHECK(std::fabs(power - oracle) <= 1e-6 * std::max(1.0, oracle));
    }
}

TEST_CASE("spectral norm never exceeds the Frobenius norm") {
    Rng rng(29);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t k = 1 + rng.index(3);
        const std::size_t in = k + rng.index(6);
        ConvGeometry geom{in, in, 1, 1, k, k, 1 + rng.index(2), rng.index(2)};
        const Tensor kernel = random_tensor({k, k}, rng);
        const OperatorMatrix op = build_conv_operator(kernel, geom);
        CHECK(matrix_norm(op, NormKind::spectral) <=
              matrix_norm(op, NormKind::frobenius) + 1e-9);
    }
}

TEST_CASE("non-overlapping windows: ||op||_F = ||kernel||_F * sqrt(positions)") {
    Rng rng(31);
    // stride >= kernel size and padding 0 means every input cell is used at
    // most once, so the operator holds exactly one copy of the kernel per
    // output position.
    ConvGeometry geom{8, 8, 2, 3, 2, 2, 2, 0};
    const Tensor kernel = random_tensor({3, 2, 2, 2}, rng);
    const OperatorMatrix op = build_conv_operator(kernel, geom);
    double kf = 0;
    for (std::size_t i = 0; i < kernel.size(); ++i) kf += kernel[i] * kernel[i];
    kf = std::sqrt(kf);
    const double positions = static_cast<double>(geom.output_height() * geom.output_width());
    CHECK(matrix_norm(op, NormKind::frobenius) ==
          doctest::Approx(kf * std::sqrt(positions)).epsilon(1e-12));
}

TEST_CASE("shape mismatches are rejected") {
    Tensor kernel({2, 2}, {1, 2, 3, 4});
    ConvGeometry geom{3, 3, 1, 1, 3, 3, 1, 0};  // kernel 3x3 but tensor is 2x2
    CHECK_THROWS_AS(build_conv_operator(kernel, geom), ShapeError);
    ConvGeometry ok{3, 3, 1, 1, 2, 2, 1, 0};
    CHECK_THROWS_AS(conv2d_direct(Tensor({4, 4}), kernel, ok), ShapeError);
    ConvGeometry zero_stride{3, 3, 1, 1, 2, 2, 0, 0};
    CHECK_THROWS_AS(build_conv_operator(kernel, zero_stride), ShapeError);
}

TEST_CASE("matrix_norm rejects non-finite entries and zero matrices are fine") {
    OperatorMatrix z(4, 4);
    CHECK(matrix_norm(z, NormKind::spectral) == 0.0);
    z.at(1, 1) = std::nan("");
    CHECK_THROWS_AS(matrix_norm(z, NormKind::frobenius), Error);
}

TEST_SUITE_END();
