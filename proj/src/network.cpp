#include "fwicert/network.hpp"

#include <cmath>
#include <string>

#include "fwicert/error.hpp"
#include "fwicert/rng.hpp"
#include "fwicert/serialize.hpp"

namespace fwicert {

const char* to_string(LayerKind k) {
    switch (k) {
    case LayerKind::conv: return "conv";
    case LayerKind::tconv: return "tconv";
    case LayerKind::dense: return "dense";
    case LayerKind::activation: return "activation";
    case LayerKind::pool: return "pool";
    }
    return "?";
}

const char* to_string(ActivationKind k) {
    switch (k) {
    case ActivationKind::identity: return "identity";
    case ActivationKind::relu: return "relu";
    case ActivationKind::leaky_relu: return "leaky_relu";
    }
    return "?";
}

namespace {

double apply_activation(ActivationKind a, double slope, double x) {
    switch (a) {
    case ActivationKind::identity: return x;
    case ActivationKind::relu: return x > 0.0 ? x : 0.0;
    case ActivationKind::leaky_relu: return x > 0.0 ? x : slope * x;
    }
    return x;
}

double activation_derivative(ActivationKind a, double slope, double pre) {
    switch (a) {
    case ActivationKind::identity: return 1.0;
    case ActivationKind::relu: return pre > 0.0 ? 1.0 : 0.0;
    case ActivationKind::leaky_relu: return pre > 0.0 ? 1.0 : slope;
    }
    return 1.0;
}

std::vector<std::size_t> conv_input_shape(const ConvGeometry& g) {
    return {g.input_channels, g.input_height, g.input_width};
}
std::vector<std::size_t> conv_output_shape(const ConvGeometry& g) {
    return {g.output_channels, g.output_height(), g.output_width()};
}

std::size_t shape_size(const std::vector<std::size_t>& s) {
    std::size_t n = 1;
    for (std::size_t d : s) n *= d;
    return s.empty() ? 0 : n;
}

} // namespace

std::vector<std::size_t> LayerSpec::output_shape(const std::vector<std::size_t>& in) const {
    switch (kind) {
    case LayerKind::conv:
        if (in != conv_input_shape(geom))
            throw ShapeError("conv layer expects input " +
                             Tensor::shape_string(conv_input_shape(geom)) + ", got " +
                             Tensor::shape_string(in));
        return conv_output_shape(geom);
    case LayerKind::tconv:
        if (in != conv_output_shape(geom))
            throw ShapeError("tconv layer expects input " +
                             Tensor::shape_string(conv_output_shape(geom)) + ", got " +
                             Tensor::shape_string(in));
        return conv_input_shape(geom);
    case LayerKind::dense:
        if (shape_size(in) != dense_in)
            throw ShapeError("dense layer expects input of size " + std::to_string(dense_in) +
                             ", got " + Tensor::shape_string(in));
        return {dense_out};
    case LayerKind::activation:
        return in;
    case LayerKind::pool:
        throw ShapeError("pool layers are not supported; pooling is realized by strided conv");
    }
    throw ShapeError("unknown layer kind");
}

std::vector<std::size_t> LayerSpec::weight_shape() const {
    switch (kind) {
    case LayerKind::conv:
    case LayerKind::tconv:
        return {geom.output_channels, geom.input_channels, geom.kernel_height,
                geom.kernel_width};
    case LayerKind::dense:
        return {dense_out, dense_in};
    default:
        return {};
    }
}

std::size_t NetworkSpec::depth() const {
    std::size_t d = 0;
    for (const auto& l : layers)
        if (l.has_weights()) ++d;
    return d;
}

void NetworkSpec::validate() {
    if (input_shape.empty()) throw ShapeError("network spec has no input shape");
    std::vector<std::size_t> cur = input_shape;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        if (layers[i].kind == LayerKind::conv || layers[i].kind == LayerKind::tconv)
            layers[i].geom.validate();
        if (layers[i].kind == LayerKind::dense && (layers[i].dense_in == 0 || layers[i].dense_out == 0))
            throw ShapeError("dense layer dims must be positive");
        try {
            cur = layers[i].output_shape(cur);
        } catch (const ShapeError& e) {
            throw ShapeError("layer " + std::to_string(i) + " (" + to_string(layers[i].kind) +
                             "): " + e.what());
        }
    }
    output_shape = cur;
}

NetworkParams init_params(const NetworkSpec& spec, std::uint64_t seed) {
    NetworkParams p;
    Rng rng(seed);
    for (const auto& l : spec.layers) {
        if (!l.has_weights()) continue;
        const auto ws = l.weight_shape();
        Tensor w(ws);
        std::size_t fan_in = 0;
        if (l.kind == LayerKind::dense) {
            fan_in = l.dense_in;
        } else if (l.kind == LayerKind::conv) {
            fan_in = l.geom.input_channels * l.geom.kernel_height * l.geom.kernel_width;
        } else {  // tconv: inputs live on the conv-output side
            fan_in = l.geom.output_channels * l.geom.kernel_height * l.geom.kernel_width;
        }
        const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
        for (std::size_t i = 0; i < w.size(); ++i) w[i] = rng.uniform(-bound, bound);
        p.weights.push_back(std::move(w));

        if (l.kind == LayerKind::dense) {
            p.biases.emplace_back(std::vector<std::size_t>{l.dense_out});  // zeros, trainable
        } else {
            p.biases.emplace_back();  // conv/tconv bias fixed at zero (empty placeholder)
        }
    }
    return p;
}

Tensor forward(const NetworkParams& params, const NetworkSpec& spec, const Tensor& input,
               ForwardCache* cache) {
    if (input.shape() != spec.input_shape)
        throw ShapeError("forward: input shape " + Tensor::shape_string(input.shape()) +
                         " != spec input " + Tensor::shape_string(spec.input_shape));
    if (params.weights.size() != spec.depth())
        throw ShapeError("forward: params depth mismatch");

    if (cache) {
        cache->input = input;
        cache->pre.clear();
        cache->post.clear();
    }

    Tensor cur = input;
    std::size_t wi = 0;
    for (const auto& l : spec.layers) {
        Tensor pre;
        switch (l.kind) {
        case LayerKind::conv:
            pre = conv2d_direct(cur, params.weights[wi], l.geom);
            ++wi;
            break;
        case LayerKind::tconv:
            pre = tconv2d_direct(cur, params.weights[wi], l.geom);
            ++wi;
            break;
        case LayerKind::dense: {
            const Tensor& w = params.weights[wi];
            const Tensor& b = params.biases[wi];
            pre = Tensor({l.dense_out});
            for (std::size_t r = 0; r < l.dense_out; ++r) {
                double acc = b[r];
                const double* row = w.data() + r * l.dense_in;
                for (std::size_t c = 0; c < l.dense_in; ++c) acc += row[c] * cur[c];
                pre[r] = acc;
            }
            ++wi;
            break;
        }
        case LayerKind::activation:
            pre = cur;
            break;
        case LayerKind::pool:
            throw ShapeError("pool layers are not supported");
        }

        Tensor post = pre;
        if (l.activation != ActivationKind::identity)
            for (std::size_t i = 0; i < post.size(); ++i)
                post[i] = apply_activation(l.activation, l.leaky_slope, pre[i]);

        if (cache) {
            cache->pre.push_back(pre);
            cache->post.push_back(post);
        }
        cur = std::move(post);
    }
    return cur;
}

Gradients backward(const NetworkParams& params, const NetworkSpec& spec,
                   const ForwardCache& cache, const Tensor& grad_output) {
    if (cache.pre.size() != spec.layers.size() || cache.post.size() != spec.layers.size())
        throw Error("backward: cache does not match spec (stale or mismatched)");
    if (grad_output.shape() != spec.output_shape)
        throw ShapeError("backward: grad_output shape mismatch");

    Gradients g;
    g.weights.resize(params.weights.size());
    g.biases.resize(params.biases.size());

    Tensor delta = grad_output;  // gradient w.r.t. current layer's post-activation
    std::size_t wi = params.weights.size();

    for (std::size_t li = spec.layers.size(); li-- > 0;) {
        const LayerSpec& l = spec.layers[li];
        const Tensor& pre = cache.pre[li];
        const Tensor& layer_input = li == 0 ? cache.input : cache.post[li - 1];

        // Through the activation: d post / d pre.
        if (l.activation != ActivationKind::identity) {
            if (delta.size() != pre.size()) throw Error("backward: cache/delta size mismatch");
            for (std::size_t i = 0; i < delta.size(); ++i)
                delta[i] *= activation_derivative(l.activation, l.leaky_slope, pre[i]);
        }

        switch (l.kind) {
        case LayerKind::conv: {
            --wi;
            const Tensor& w = params.weights[wi];
            const ConvGeometry& gm = l.geom;
            // dL/dX: scatter the delta back through the kernel.
            Tensor dpre({gm.output_channels, gm.output_height(), gm.output_width()},
                        delta.values());
            g.weights[wi] = Tensor(w.shape());
            Tensor dx = tconv2d_direct(dpre, w, gm);
            // dL/dK by direct accumulation.
            const std::size_t oh = gm.output_height(), ow = gm.output_width();
            for (std::size_t oc = 0; oc < gm.output_channels; ++oc)
                for (std::size_t oy = 0; oy < oh; ++oy)
                    for (std::size_t ox = 0; ox < ow; ++ox) {
                        const double d = dpre[(oc * oh + oy) * ow + ox];
                        if (d == 0.0) continue;
                        for (std::size_t ic = 0; ic < gm.input_channels; ++ic)
                            for (std::size_t ky = 0; ky < gm.kernel_height; ++ky)
                                for (std::size_t kx = 0; kx < gm.kernel_width; ++kx) {
                                    const std::ptrdiff_t iy =
                                        static_cast<std::ptrdiff_t>(oy * gm.stride + ky) -
                                        static_cast<std::ptrdiff_t>(gm.padding);
                                    const std::ptrdiff_t ix =
                                        static_cast<std::ptrdiff_t>(ox * gm.stride + kx) -
                                        static_cast<std::ptrdiff_t>(gm.padding);
                                    if (iy < 0 || ix < 0 ||
                                        iy >= static_cast<std::ptrdiff_t>(gm.input_height) ||
                                        ix >= static_cast<std::ptrdiff_t>(gm.input_width))
                                        continue;
                                    g.weights[wi][((oc * gm.input_channels + ic) *
                                                       gm.kernel_height + ky) *
                                                      gm.kernel_width + kx] +=
                                        d * layer_input[(ic * gm.input_height +
                                                         static_cast<std::size_t>(iy)) *
                                                            gm.input_width +
                                                        static_cast<std::size_t>(ix)];
                                }
                    }
            g.biases[wi] = Tensor();  // conv bias fixed at zero
            delta = std::move(dx);
            break;
        }
        case LayerKind::tconv: {
            --wi;
            const Tensor& w = params.weights[wi];
            const ConvGeometry& gm = l.geom;
            // Forward was y_out = K^T-scatter of y_in; the adjoint is the conv.
            Tensor dpre({gm.input_channels, gm.input_height, gm.input_width}, delta.values());
            Tensor dx = conv2d_direct(dpre, w, gm);
            g.weights[wi] = Tensor(w.shape());
            const std::size_t oh = gm.output_height(), ow = gm.output_width();
            const Tensor& y_in = layer_input;  // shape (out_channels, oh, ow)
            for (std::size_t oc = 0; oc < gm.output_channels; ++oc)
                for (std::size_t oy = 0; oy < oh; ++oy)
                    for (std::size_t ox = 0; ox < ow; ++ox) {
                        const double yv = y_in[(oc * oh + oy) * ow + ox];
                        if (yv == 0.0) continue;
                        for (std::size_t ic = 0; ic < gm.input_channels; ++ic)
                            for (std::size_t ky = 0; ky < gm.kernel_height; ++ky)
                                for (std::size_t kx = 0; kx < gm.kernel_width; ++kx) {
                                    const std::ptrdiff_t iy =
                                        static_cast<std::ptrdiff_t>(oy * gm.stride + ky) -
                                        static_cast<std::ptrdiff_t>(gm.padding);
                                    const std::ptrdiff_t ix =
                                        static_cast<std::ptrdiff_t>(ox * gm.stride + kx) -
                                        static_cast<std::ptrdiff_t>(gm.padding);
                                    if (iy < 0 || ix < 0 ||
                                        iy >= static_cast<std::ptrdiff_t>(gm.input_height) ||
                                        ix >= static_cast<std::ptrdiff_t>(gm.input_width))
                                        continue;
                                    g.weights[wi][((oc * gm.input_channels + ic) *
                                                       gm.kernel_height + ky) *
                                                      gm.kernel_width + kx] +=
                                        yv * dpre[(ic * gm.input_height +
                                                   static_cast<std::size_t>(iy)) *
                                                      gm.input_width +
                                                  static_cast<std::size_t>(ix)];
                                }
                    }
            g.biases[wi] = Tensor();
            delta = std::move(dx);
            break;
        }
        case LayerKind::dense: {
            --wi;
            const Tensor& w = params.weights[wi];
            g.weights[wi] = Tensor(w.shape());
            g.biases[wi] = Tensor({l.dense_out});
            Tensor dx({l.dense_in});
            for (std::size_t r = 0; r < l.dense_out; ++r) {
                const double d = delta[r];
                g.biases[wi][r] = d;
                const double* row = w.data() + r * l.dense_in;
                double* grow = g.weights[wi].data() + r * l.dense_in;
                for (std::size_t c = 0; c < l.dense_in; ++c) {
                    grow[c] = d * layer_input[c];
                    dx[c] += d * row[c];
                }
            }
            delta = std::move(dx);
            break;
        }
        case LayerKind::activation:
            break;  // delta already passed through the activation derivative
        case LayerKind::pool:
            throw ShapeError("pool layers are not supported");
        }
    }

    g.input = Tensor(spec.input_shape, delta.values());
    return g;
}

// ---------------------------------------------------------------------------
// FWB1 serialization
// ---------------------------------------------------------------------------

namespace {
constexpr std::uint32_t kModelVersion = 1;
}

void save_model(const NetworkSpec& spec, const NetworkParams& params,
                const std::filesystem::path& path) {
    if (params.weights.size() != spec.depth())
        throw ShapeError("save_model: params do not match spec depth");
    ByteWriter w;
    w.bytes("FWB1", 4);
    w.u32(kModelVersion);
    w.u32(static_cast<std::uint32_t>(spec.layers.size()));
    w.u32(static_cast<std::uint32_t>(spec.input_shape.size()));
    for (std::size_t d : spec.input_shape) w.u32(static_cast<std::uint32_t>(d));

    std::size_t wi = 0;
    for (const auto& l : spec.layers) {
        w.u8(static_cast<std::uint8_t>(l.kind));
        if (l.kind == LayerKind::conv || l.kind == LayerKind::tconv) {
            w.u32(static_cast<std::uint32_t>(l.geom.input_height));
            w.u32(static_cast<std::uint32_t>(l.geom.input_width));
            w.u32(static_cast<std::uint32_t>(l.geom.input_channels));
            w.u32(static_cast<std::uint32_t>(l.geom.output_channels));
            w.u32(static_cast<std::uint32_t>(l.geom.kernel_height));
            w.u32(static_cast<std::uint32_t>(l.geom.kernel_width));
            w.u32(static_cast<std::uint32_t>(l.geom.stride));
            w.u32(static_cast<std::uint32_t>(l.geom.padding));
        } else if (l.kind == LayerKind::dense) {
            w.u32(static_cast<std::uint32_t>(l.dense_in));
            w.u32(static_cast<std::uint32_t>(l.dense_out));
        }
        w.u8(static_cast<std::uint8_t>(l.activation));
        w.f64(l.leaky_slope);
        if (l.has_weights()) {
            w.tensor(params.weights[wi]);
            w.tensor(params.biases[wi]);
            ++wi;
        }
    }
    w.u32(w.crc());
    w.write_file(path);
}

std::pair<NetworkSpec, NetworkParams> load_model(const std::filesystem::path& path) {
    ByteReader r = ByteReader::from_file(path);
    {
        if (r.size() < 4) throw FormatError("model file: truncated magic", 0);
        const auto& b = r.buffer();
        if (!(b[0] == 'F' && b[1] == 'W' && b[2] == 'B' && b[3] == '1'))
            throw FormatError("model file: bad magic, expected \"FWB1\"", 0);
    }
    // Verify the trailing CRC before trusting any field.
    if (r.size() < 8) throw FormatError("model file: too short for checksum", r.size());
    {
        const auto& b = r.buffer();
        std::uint32_t stored = 0;
        for (int i = 0; i < 4; ++i)
            stored |= static_cast<std::uint32_t>(b[b.size() - 4 + i]) << (8 * i);
        if (crc32(b.data(), b.size() - 4) != stored)
            throw FormatError("model file: checksum mismatch", b.size() - 4);
    }

    r.u32();  // skip re-reading magic bytes as fields
    // The reader is now at offset 4.
    const std::uint32_t version = r.u32();
    if (version != kModelVersion)
        throw VersionError("model file: version " + std::to_string(version) +
                           " not supported (expected " + std::to_string(kModelVersion) + ")");
    const std::uint32_t n_layers = r.u32();
    const std::uint32_t in_rank = r.u32();
    if (in_rank > 8) throw FormatError("model file: input rank implausible", r.offset() - 4);

    NetworkSpec spec;
    spec.input_shape.resize(in_rank);
    for (std::uint32_t i = 0; i < in_rank; ++i) spec.input_shape[i] = r.u32();

    NetworkParams params;
    for (std::uint32_t i = 0; i < n_layers; ++i) {
        LayerSpec l;
        const std::uint8_t kind = r.u8();
        if (kind > 4) throw FormatError("model file: unknown layer kind", r.offset() - 1);
        l.kind = static_cast<LayerKind>(kind);
        if (l.kind == LayerKind::conv || l.kind == LayerKind::tconv) {
            l.geom.input_height = r.u32();
            l.geom.input_width = r.u32();
            l.geom.input_channels = r.u32();
            l.geom.output_channels = r.u32();
            l.geom.kernel_height = r.u32();
            l.geom.kernel_width = r.u32();
            l.geom.stride = r.u32();
            l.geom.padding = r.u32();
        } else if (l.kind == LayerKind::dense) {
            l.dense_in = r.u32();
            l.dense_out = r.u32();
        }
        const std::uint8_t act = r.u8();
        if (act > 2) throw FormatError("model file: unknown activation", r.offset() - 1);
        l.activation = static_cast<ActivationKind>(act);
        l.leaky_slope = r.f64();
        if (l.has_weights()) {
            params.weights.push_back(r.tensor());
            params.biases.push_back(r.tensor());
            if (params.weights.back().shape() != l.weight_shape())
                throw FormatError("model file: weight shape does not match layer", r.offset());
        }
        spec.layers.push_back(l);
    }
    r.u32();  // trailing CRC (already verified)
    r.expect_end("model file");
    spec.validate();
    return {std::move(spec), std::move(params)};
}

NetworkSpec make_encoder_decoder_spec(std::size_t in_channels, std::size_t in_height,
                                      std::size_t in_width, std::size_t out_height,
                                      std::size_t out_width, std::size_t base_channels) {
    auto halve = [](std::size_t v) { return (v - 1) / 2 + 1; };  // k3 s2 p1

    NetworkSpec spec;
    spec.input_shape = {in_channels, in_height, in_width};

    std::size_t ch = in_channels, h = in_height, w = in_width;
    std::size_t out_ch = base_channels;
    for (int i = 0; i < 4; ++i) {
        LayerSpec l;
        l.kind = LayerKind::conv;
        l.geom = {h, w, ch, out_ch, 3, 3, 2, 1};
        l.activation = ActivationKind::leaky_relu;
        l.leaky_slope = 0.1;
        spec.layers.push_back(l);
        ch = out_ch;
        h = halve(h);
        w = halve(w);
        out_ch *= 2;
    }

    // Decoder geometries mirror a virtual encoder running on the output map.
    std::size_t dh = out_height, dw = out_width;
    std::vector<std::pair<std::size_t, std::size_t>> dims{{dh, dw}};
    for (int i = 0; i < 4; ++i) {
        dh = halve(dh);
        dw = halve(dw);
        dims.push_back({dh, dw});
    }
    if (dims[4].first != h || dims[4].second != w)
        throw ShapeError("encoder bottleneck " + std::to_string(h) + "x" + std::to_string(w) +
                         " does not match decoder bottleneck " + std::to_string(dims[4].first) +
                         "x" + std::to_string(dims[4].second));

    std::size_t dec_ch[5] = {1, base_channels, base_channels * 2, base_channels * 4,
                             base_channels * 8};
    for (int i = 4; i >= 1; --i) {
        LayerSpec l;
        l.kind = LayerKind::tconv;
        // conv view: input = the larger map, output = the smaller one
        l.geom = {dims[i - 1].first, dims[i - 1].second, dec_ch[i - 1], dec_ch[i], 3, 3, 2, 1};
        l.activation = i == 1 ? ActivationKind::identity : ActivationKind::leaky_relu;
        l.leaky_slope = 0.1;
        spec.layers.push_back(l);
    }

    spec.validate();
    return spec;
}

} // namespace fwicert
