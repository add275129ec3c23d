#include "fwicert/linop.hpp"

#include <cmath>
#include <string>

#include "fwicert/error.hpp"
#include "fwicert/rng.hpp"

namespace fwicert {

namespace {

// Accepts (out_c, in_c, kh, kw) or (kh, kw) and checks against the geometry.
void check_kernel(const Tensor& kernel, const ConvGeometry& geom) {
    const auto& s = kernel.shape();
    if (s.size() == 2) {
        if (geom.input_channels != 1 || geom.output_channels != 1)
            throw ShapeError("rank-2 kernel requires single-channel geometry");
        if (s[0] != geom.kernel_height || s[1] != geom.kernel_width)
            throw ShapeError("kernel shape " + Tensor::shape_string(s) +
                             " does not match geometry kernel " +
                             std::to_string(geom.kernel_height) + "x" +
                             std::to_string(geom.kernel_width));
        return;
    }
    if (s.size() != 4 || s[0] != geom.output_channels || s[1] != geom.input_channels ||
        s[2] != geom.kernel_height || s[3] != geom.kernel_width)
        throw ShapeError("kernel shape " + Tensor::shape_string(s) +
                         " inconsistent with conv geometry");
}

inline double kernel_at(const Tensor& kernel, const ConvGeometry& geom, std::size_t oc,
                        std::size_t ic, std::size_t ky, std::size_t kx) {
    if (kernel.rank() == 2) return kernel[ky * geom.kernel_width + kx];
    return kernel[((oc * geom.input_channels + ic) * geom.kernel_height + ky) *
                      geom.kernel_width + kx];
}

} // namespace

std::size_t ConvGeometry::output_height() const {
    return (input_height + 2 * padding - kernel_height) / stride + 1;
}

std::size_t ConvGeometry::output_width() const {
    return (input_width + 2 * padding - kernel_width) / stride + 1;
}

void ConvGeometry::validate() const {
    if (stride < 1) throw ShapeError("conv stride must be >= 1");
    if (kernel_height == 0 || kernel_width == 0) throw ShapeError("conv kernel dims must be positive");
    if (input_height == 0 || input_width == 0) throw ShapeError("conv input dims must be positive");
    if (input_channels == 0 || output_channels == 0) throw ShapeError("conv channels must be positive");
    if (input_height + 2 * padding < kernel_height || input_width + 2 * padding < kernel_width)
        throw ShapeError("conv kernel larger than padded input");
    // output_height/width >= 1 follows from the checks above.
}

std::vector<double> OperatorMatrix::apply(const std::vector<double>& x) const {
    if (x.size() != cols) throw ShapeError("operator apply: vector length mismatch");
    std::vector<double> y(rows, 0.0);
    for (std::size_t r = 0; r < rows; ++r) {
        const double* row = data.data() + r * cols;
        double acc = 0.0;
        for (std::size_t c = 0; c < cols; ++c) acc += row[c] * x[c];
        y[r] = acc;
    }
    return y;
}

std::vector<double> OperatorMatrix::apply_transpose(const std::vector<double>& y) const {
    if (y.size() != rows) throw ShapeError("operator apply_transpose: vector length mismatch");
    std::vector<double> x(cols, 0.0);
    for (std::size_t r = 0; r < rows; ++r) {
        const double* row = data.data() + r * cols;
        const double yr = y[r];
        if (yr == 0.0) continue;
        for (std::size_t c = 0; c < cols; ++c) x[c] += row[c] * yr;
    }
    return x;
}

OperatorMatrix OperatorMatrix::transpose() const {
    OperatorMatrix t(cols, rows);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) t.at(c, r) = at(r, c);
    return t;
}

OperatorMatrix build_conv_operator(const Tensor& kernel, const ConvGeometry& geom) {
    geom.validate();
    check_kernel(kernel, geom);
    const std::size_t oh = geom.output_height(), ow = geom.output_width();
    const std::size_t ih = geom.input_height, iw = geom.input_width;
    OperatorMatrix op(geom.output_size(), geom.input_size());

    for (std::size_t oc = 0; oc < geom.output_channels; ++oc)
        for (std::size_t oy = 0; oy < oh; ++oy)
            for (std::size_t ox = 0; ox < ow; ++ox) {
                const std::size_t row = (oc * oh + oy) * ow + ox;
                for (std::size_t ic = 0; ic < geom.input_channels; ++ic)
                    for (std::size_t ky = 0; ky < geom.kernel_height; ++ky)
                        for (std::size_t kx = 0; kx < geom.kernel_width; ++kx) {
                            const std::ptrdiff_t iy =
                                static_cast<std::ptrdiff_t>(oy * geom.stride + ky) -
                                static_cast<std::ptrdiff_t>(geom.padding);
                            const std::ptrdiff_t ix =
                                static_cast<std::ptrdiff_t>(ox * geom.stride + kx) -
                                static_cast<std::ptrdiff_t>(geom.padding);
                            if (iy < 0 || ix < 0 || iy >= static_cast<std::ptrdiff_t>(ih) ||
                                ix >= static_cast<std::ptrdiff_t>(iw))
                                continue;
                            const std::size_t col =
                                (ic * ih + static_cast<std::size_t>(iy)) * iw +
                                static_cast<std::size_t>(ix);
                            op.at(row, col) = kernel_at(kernel, geom, oc, ic, ky, kx);
                        }
            }
    return op;
}

OperatorMatrix build_transposed_conv_operator(const Tensor& kernel, const ConvGeometry& geom) {
    return build_conv_operator(kernel, geom).transpose();
}

Tensor conv2d_direct(const Tensor& x, const Tensor& kernel, const ConvGeometry& geom) {
    geom.validate();
    check_kernel(kernel, geom);
    const auto& xs = x.shape();
    const bool flat2d = xs.size() == 2;
    if (flat2d) {
        if (geom.input_channels != 1 || xs[0] != geom.input_height || xs[1] != geom.input_width)
            throw ShapeError("conv input shape " + Tensor::shape_string(xs) + " mismatch");
    } else if (xs.size() != 3 || xs[0] != geom.input_channels || xs[1] != geom.input_height ||
               xs[2] != geom.input_width) {
        throw ShapeError("conv input shape " + Tensor::shape_string(xs) + " mismatch");
    }

    const std::size_t oh = geom.output_height(), ow = geom.output_width();
    const std::size_t ih = geom.input_height, iw = geom.input_width;
    Tensor out({geom.output_channels, oh, ow});

    for (std::size_t oc = 0; oc < geom.output_channels; ++oc)
        for (std::size_t oy = 0; oy < oh; ++oy)
            for (std::size_t ox = 0; ox < ow; ++ox) {
                double acc = 0.0;
                for (std::size_t ic = 0; ic < geom.input_channels; ++ic)
                    for (std::size_t ky = 0; ky < geom.kernel_height; ++ky)
                        for (std::size_t kx = 0; kx < geom.kernel_width; ++kx) {
                            const std::ptrdiff_t iy =
                                static_cast<std::ptrdiff_t>(oy * geom.stride + ky) -
                                static_cast<std::ptrdiff_t>(geom.padding);
                            const std::ptrdiff_t ix =
                                static_cast<std::ptrdiff_t>(ox * geom.stride + kx) -
                                static_cast<std::ptrdiff_t>(geom.padding);
                            if (iy < 0 || ix < 0 || iy >= static_cast<std::ptrdiff_t>(ih) ||
                                ix >= static_cast<std::ptrdiff_t>(iw))
                                continue;
                            acc += kernel_at(kernel, geom, oc, ic, ky, kx) *
                                   x[(ic * ih + static_cast<std::size_t>(iy)) * iw +
                                     static_cast<std::size_t>(ix)];
                        }
                out[(oc * oh + oy) * ow + ox] = acc;
            }
    return out;
}

Tensor tconv2d_direct(const Tensor& y, const Tensor& kernel, const ConvGeometry& geom) {
    geom.validate();
    check_kernel(kernel, geom);
    const std::size_t oh = geom.output_height(), ow = geom.output_width();
    const auto& ys = y.shape();
    const bool flat2d = ys.size() == 2;
    if (flat2d) {
        if (geom.output_channels != 1 || ys[0] != oh || ys[1] != ow)
            throw ShapeError("tconv input shape " + Tensor::shape_string(ys) + " mismatch");
    } else if (ys.size() != 3 || ys[0] != geom.output_channels || ys[1] != oh || ys[2] != ow) {
        throw ShapeError("tconv input shape " + Tensor::shape_string(ys) + " mismatch");
    }

    const std::size_t ih = geom.input_height, iw = geom.input_width;
    Tensor out({geom.input_channels, ih, iw});

    for (std::size_t oc = 0; oc < geom.output_channels; ++oc)
        for (std::size_t oy = 0; oy < oh; ++oy)
            for (std::size_t ox = 0; ox < ow; ++ox) {
                const double v = y[(oc * oh + oy) * ow + ox];
                if (v == 0.0) continue;
                for (std::size_t ic = 0; ic < geom.input_channels; ++ic)
                    for (std::size_t ky = 0; ky < geom.kernel_height; ++ky)
                        for (std::size_t kx = 0; kx < geom.kernel_width; ++kx) {
                            const std::ptrdiff_t iy =
                                static_cast<std::ptrdiff_t>(oy * geom.stride + ky) -
                                static_cast<std::ptrdiff_t>(geom.padding);
                            const std::ptrdiff_t ix =
                                static_cast<std::ptrdiff_t>(ox * geom.stride + kx) -
                                static_cast<std::ptrdiff_t>(geom.padding);
                            if (iy < 0 || ix < 0 || iy >= static_cast<std::ptrdiff_t>(ih) ||
                                ix >= static_cast<std::ptrdiff_t>(iw))
                                continue;
                            out[(ic * ih + static_cast<std::size_t>(iy)) * iw +
                                static_cast<std::size_t>(ix)] +=
                                kernel_at(kernel, geom, oc, ic, ky, kx) * v;
                        }
            }
    return out;
}

namespace {

double frobenius_norm(const OperatorMatrix& op) {
    double s = 0.0;
    for (double v : op.data) s += v * v;
    return std::sqrt(s);
}

// Power iteration on A^T A with a block of two, so a near-tie between the
// two leading singular values cannot stall convergence (both directions live
// inside the block). Iterate delta tolerance 1e-10, max 10000 sweeps, start
// vectors from a fixed seeded stream. A Rayleigh-Ritz residual certificate
// also accepts: mu is provably within the residual of an eigenvalue of
// A^T A, which pins sigma to the 1e-6-relative contract.
double spectral_norm(const OperatorMatrix& op) {
    const double fro = frobenius_norm(op);
    if (fro == 0.0) return 0.0;

    const std::size_t n = op.cols;
    if (n == 1) {
        std::vector<double> u = op.apply({1.0});
        double s = 0.0;
        for (double e : u) s += e * e;
        return std::sqrt(s);
    }

    Rng rng(0x5eedULL);
    auto normalize = [](std::vector<double>& x) {
        double s = 0.0;
        for (double e : x) s += e * e;
        s = std::sqrt(s);
        if (s > 0.0)
            for (double& e : x) e /= s;
        return s;
    };
    auto random_unit = [&](std::vector<double>& x) {
        for (double& e : x) e = rng.gaussian();
        normalize(x);
    };
    auto dot = [](const std::vector<double>& a, const std::vector<double>& b) {
        double s = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
        return s;
    };

    std::vector<double> v1(n), v2(n);
    random_unit(v1);
    random_unit(v2);
    const double d0 = dot(v1, v2);
    for (std::size_t i = 0; i < n; ++i) v2[i] -= d0 * v1[i];
    if (normalize(v2) == 0.0) random_unit(v2);

    const int max_iters = 10000;
    const double tol = 1e-10;
    double sigma_prev = -1.0;
    std::vector<double> w1(n), w2(n);
    for (int it = 0; it < max_iters; ++it) {
        w1 = op.apply_transpose(op.apply(v1));  // A^T A v1
        w2 = op.apply_transpose(op.apply(v2));

        // Rayleigh-Ritz on span(v1, v2): 2x2 symmetric eigenproblem.
        const double b11 = dot(v1, w1);
        const double b12 = dot(v1, w2);
        const double b22 = dot(v2, w2);
        const double mean = 0.5 * (b11 + b22);
        const double spread = std::sqrt(0.25 * (b11 - b22) * (b11 - b22) + b12 * b12);
        const double mu = std::max(0.0, mean + spread);
        const double sigma = std::sqrt(mu);

        // Top Ritz vector y = c1 v1 + c2 v2.
        double c1 = b12, c2 = mu - b11;
        if (std::fabs(c1) + std::fabs(c2) == 0.0) {
            c1 = 1.0;
            c2 = 0.0;
        }
        const double cn = std::sqrt(c1 * c1 + c2 * c2);
        c1 /= cn;
        c2 /= cn;
        double res2 = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double ay = c1 * w1[i] + c2 * w2[i];
            const double y = c1 * v1[i] + c2 * v2[i];
            const double r = ay - mu * y;
            res2 += r * r;
        }

        if (sigma > 0.0 &&
            ((sigma_prev >= 0.0 && std::fabs(sigma - sigma_prev) <= tol * std::max(1.0, sigma)) ||
             std::sqrt(res2) <= 1e-6 * mu))
            return sigma;
        sigma_prev = sigma;

        // Next subspace: orthonormalized images. A tiny post-projection
        // residual means w2 was numerically parallel to v1; normalizing that
        // roundoff would destroy orthogonality, so redraw instead. A second
        // projection pass keeps the basis orthonormal to working precision.
        v1 = w1;
        if (normalize(v1) == 0.0) random_unit(v1);
        double w2_norm = 0.0;
        for (double e : w2) w2_norm += e * e;
        w2_norm = std::sqrt(w2_norm);
        v2 = w2;
        const double proj = dot(v1, v2);
        for (std::size_t i = 0; i < n; ++i) v2[i] -= proj * v1[i];
        double resid = normalize(v2);
        while (resid <= 1e-8 * std::max(w2_norm, 1e-300)) {
            random_unit(v2);
            const double p = dot(v1, v2);
            for (std::size_t i = 0; i < n; ++i) v2[i] -= p * v1[i];
            resid = normalize(v2);
            w2_norm = 1.0;
        }
        const double p2 = dot(v1, v2);
        for (std::size_t i = 0; i < n; ++i) v2[i] -= p2 * v1[i];
        normalize(v2);
    }
    throw ConvergenceError("spectral norm power iteration did not converge after 10000 iterations",
                           sigma_prev);
}

} // namespace

double matrix_norm(const OperatorMatrix& op, NormKind kind) {
    for (double v : op.data)
        if (!std::isfinite(v)) throw Error("matrix_norm: non-finite entry");
    switch (kind) {
    case NormKind::frobenius: return frobenius_norm(op);
    case NormKind::spectral: return spectral_norm(op);
    }
    throw Error("matrix_norm: unknown kind");
}

} // namespace fwicert
