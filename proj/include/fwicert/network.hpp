#ifndef FWICERT_NETWORK_HPP
#define FWICERT_NETWORK_HPP

#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

#include "fwicert/linop.hpp"
#include "fwicert/tensor.hpp"

namespace fwicert {

enum class LayerKind : std::uint8_t { conv = 0, tconv = 1, dense = 2, activation = 3, pool = 4 };
enum class ActivationKind : std::uint8_t { identity = 0, relu = 1, leaky_relu = 2 };

const char* to_string(LayerKind k);
const char* to_string(ActivationKind k);

struct LayerSpec {
    LayerKind kind = LayerKind::conv;
    ConvGeometry geom{};                 // conv / tconv
    std::size_t dense_in = 0;            // dense
    std::size_t dense_out = 0;
    ActivationKind activation = ActivationKind::identity;
    double leaky_slope = 0.1;

    bool has_weights() const {
        return kind == LayerKind::conv || kind == LayerKind::tconv || kind == LayerKind::dense;
    }

    // 1 for relu/identity, max(1, slope) for leaky_relu.
    double activation_lipschitz() const {
        if (activation == ActivationKind::leaky_relu) return std::max(1.0, leaky_slope);
        return 1.0;
    }

    std::vector<std::size_t> output_shape(const std::vector<std::size_t>& in) const;
    std::vector<std::size_t> weight_shape() const;

    bool operator==(const LayerSpec&) const = default;
};

struct NetworkSpec {
    std::vector<LayerSpec> layers;
    std::vector<std::size_t> input_shape;
    std::vector<std::size_t> output_shape;  // filled by validate()

    std::size_t depth() const;  // number of weighted layers

    /// Checks layer shapes compose from input_shape and recomputes
    /// output_shape. Pool layers are rejected: pooling is realized by
    /// strided convolution in this toolkit.
    void validate();

    bool operator==(const NetworkSpec&) const = default;
};

/// Weights and biases aligned 1:1 with the spec's weighted layers.
/// Conv/tconv biases are fixed at zero and not trained; dense biases train.
struct NetworkParams {
    std::vector<Tensor> weights;
    std::vector<Tensor> biases;

    bool operator==(const NetworkParams&) const = default;
};

/// Per-layer pre/post activations retained for backprop, aligned 1:1 with
/// spec.layers. pre[i] is the value before layer i's activation.
struct ForwardCache {
    Tensor input;
    std::vector<Tensor> pre;
    std::vector<Tensor> post;
};

struct Gradients {
    std::vector<Tensor> weights;
    std::vector<Tensor> biases;
    Tensor input;
};

/// Fan-in scaled uniform init on (-sqrt(6/fan_in), sqrt(6/fan_in)),
/// deterministic per seed. Conv/tconv biases are zero.
NetworkParams init_params(const NetworkSpec& spec, std::uint64_t seed);

Tensor forward(const NetworkParams& params, const NetworkSpec& spec, const Tensor& input,
               ForwardCache* cache = nullptr);

/// Exact gradients of the forward map. grad_output must match the output
/// shape; the cache must come from a forward call with the same params.
Gradients backward(const NetworkParams& params, const NetworkSpec& spec,
                   const ForwardCache& cache, const Tensor& grad_output);

// Model file format "FWB1": magic, u32 version, input shape, layer table,
// per-layer weight+bias tensors, trailing CRC32.
void save_model(const NetworkSpec& spec, const NetworkParams& params,
                const std::filesystem::path& path);
std::pair<NetworkSpec, NetworkParams> load_model(const std::filesystem::path& path);

/// Reference encoder-decoder: 4 conv layers (stride 2, kernel 3x3, pad 1,
/// leaky-relu 0.1) widening from base_channels, then 4 transposed-conv
/// layers decoding to (1, out_h, out_w), final identity activation.
/// Requires that input (T, R) and output (H, W) dims both survive four
/// stride-2 halvings to a common bottleneck.
NetworkSpec make_encoder_decoder_spec(std::size_t in_channels, std::size_t in_height,
                                      std::size_t in_width, std::size_t out_height,
                                      std::size_t out_width, std::size_t base_channels = 4);

} // namespace fwicert

#endif
