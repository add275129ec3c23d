#ifndef FWICERT_LINOP_HPP
#define FWICERT_LINOP_HPP

#include <cstddef>
#include <vector>

#include "fwicert/tensor.hpp"

namespace fwicert {

/// Geometry of a 2D convolution. Output dims follow
/// floor((in + 2*padding - kernel)/stride) + 1 and must be >= 1.
struct ConvGeometry {
    std::size_t input_height = 0;
    std::size_t input_width = 0;
    std::size_t input_channels = 1;
    std::size_t output_channels = 1;
    std::size_t kernel_height = 0;
    std::size_t kernel_width = 0;
    std::size_t stride = 1;
    std::size_t padding = 0;

    std::size_t output_height() const;
    std::size_t output_width() const;
    std::size_t input_size() const { return input_channels * input_height * input_width; }
    std::size_t output_size() const { return output_channels * output_height() * output_width(); }

    void validate() const;

    bool operator==(const ConvGeometry&) const = default;
};

/// Dense row-major matrix representing a linear operator. For conv-derived
/// operators every nonzero entry is bit-identical to some kernel weight.
struct OperatorMatrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    OperatorMatrix() = default;
    OperatorMatrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

    double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

    std::vector<double> apply(const std::vector<double>& x) const;
    std::vector<double> apply_transpose(const std::vector<double>& y) const;
    OperatorMatrix transpose() const;
};

/// Builds the unique matrix op with op * vec(x) = vec(conv(x, kernel)).
/// Kernel shape is (out_channels, in_channels, kh, kw); a rank-2 kernel is
/// treated as single-channel. Rows/cols are indexed (channel, row, col)
/// row-major.
OperatorMatrix build_conv_operator(const Tensor& kernel, const ConvGeometry& geom);

/// The transposed-convolution operator for the same geometry: entrywise the
/// transpose of build_conv_operator's matrix.
OperatorMatrix build_transposed_conv_operator(const Tensor& kernel, const ConvGeometry& geom);

/// Sliding-window cross-correlation (no kernel flip), summing over input
/// channels. x shape (in_channels, h, w) or (h, w) single channel.
Tensor conv2d_direct(const Tensor& x, const Tensor& kernel, const ConvGeometry& geom);

/// Scatter-add transposed convolution: maps a conv-output-shaped y back to
/// input shape; equals op^T * vec(y).
Tensor tconv2d_direct(const Tensor& y, const Tensor& kernel, const ConvGeometry& geom);

enum class NormKind { frobenius, spectral };

/// Frobenius norm, or largest singular value via power iteration
/// (tolerance 1e-10 on the iterate delta, max 10000 iterations, fixed
/// seeded start vector). Throws ConvergenceError carrying the last iterate
/// if the iteration limit is reached.
double matrix_norm(const OperatorMatrix& op, NormKind kind);

} // namespace fwicert

#endif
