#include <pybind11/pybind11.h>
#include <pybind11/numpy.h>
#include <pybind11/stl.h>

#include "fwicert/bounds.hpp"
#include "fwicert/config.hpp"
#include "fwicert/experiments.hpp"
#include "fwicert/fwi_sim.hpp"
#include "fwicert/linop.hpp"
#include "fwicert/network.hpp"
#include "fwicert/train.hpp"

namespace py = pybind11;
using namespace fwicert;

namespace {

Tensor to_tensor(const py::array_t<double, py::array::c_style | py::array::forcecast>& arr) {
    std::vector<std::size_t> shape(arr.ndim());
    for (py::ssize_t i = 0; i < arr.ndim(); ++i)
        shape[static_cast<std::size_t>(i)] = static_cast<std::size_t>(arr.shape(i));
    std::vector<double> data(arr.data(), arr.data() + arr.size());
    return Tensor(std::move(shape), std::move(data));
}

py::array_t<double> to_array(const Tensor& t) {
    std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
    py::array_t<double> arr(shape);
    std::copy(t.data(), t.data() + t.size(), arr.mutable_data());
    return arr;
}

py::array_t<double> op_to_array(const OperatorMatrix& op) {
    py::array_t<double> arr({static_cast<py::ssize_t>(op.rows), static_cast<py::ssize_t>(op.cols)});
    std::copy(op.data.begin(), op.data.end(), arr.mutable_data());
    return arr;
}

ConvGeometry geom_from_kwargs(std::size_t ih, std::size_t iw, std::size_t ic, std::size_t oc,
                              std::size_t kh, std::size_t kw, std::size_t stride,
                              std::size_t padding) {
    return ConvGeometry{ih, iw, ic, oc, kh, kw, stride, padding};
}

} // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "fwicert core: convolution operators, norm certificates, FWI simulation";
    m.attr("__version__") = kToolVersion;

    py::class_<ConvGeometry>(m, "ConvGeometry")
        .def(py::init(&geom_from_kwargs), py::arg("input_height"), py::arg("input_width"),
             py::arg("input_channels") = 1, py::arg("output_channels") = 1,
             py::arg("kernel_height") = 3, py::arg("kernel_width") = 3, py::arg("stride") = 1,
             py::arg("padding") = 0)
        .def_readwrite("input_height", &ConvGeometry::input_height)
        .def_readwrite("input_width", &ConvGeometry::input_width)
        .def_readwrite("input_channels", &ConvGeometry::input_channels)
        .def_readwrite("output_channels", &ConvGeometry::output_channels)
        .def_readwrite("kernel_height", &ConvGeometry::kernel_height)
        .def_readwrite("kernel_width", &ConvGeometry::kernel_width)
        .def_readwrite("stride", &ConvGeometry::stride)
        .def_readwrite("padding", &ConvGeometry::padding)
        .def("output_height", &ConvGeometry::output_height)
        .def("output_width", &ConvGeometry::output_width);

    m.def("build_conv_operator",
          [](const py::array_t<double>& kernel, const ConvGeometry& g) {
              return op_to_array(build_conv_operator(to_tensor(kernel), g));
          },
          py::arg("kernel"), py::arg("geometry"),
          "Explicit matrix op with op @ x.ravel() == conv(x, kernel).ravel()");
    m.def("build_transposed_conv_operator",
          [](const py::array_t<double>& kernel, const ConvGeometry& g) {
              return op_to_array(build_transposed_conv_operator(to_tensor(kernel), g));
          },
          py::arg("kernel"), py::arg("geometry"));
    m.def("conv2d_direct",
          [](const py::array_t<double>& x, const py::array_t<double>& kernel,
             const ConvGeometry& g) { return to_array(conv2d_direct(to_tensor(x), to_tensor(kernel), g)); },
          py::arg("x"), py::arg("kernel"), py::arg("geometry"));
    m.def("tconv2d_direct",
          [](const py::array_t<double>& y, const py::array_t<double>& kernel,
             const ConvGeometry& g) { return to_array(tconv2d_direct(to_tensor(y), to_tensor(kernel), g)); },
          py::arg("y"), py::arg("kernel"), py::arg("geometry"));
    m.def("matrix_norm",
          [](const py::array_t<double>& a, const std::string& kind) {
              const auto arr = py::array_t<double, py::array::c_style | py::array::forcecast>(a);
              if (arr.ndim() != 2) throw Error("matrix_norm: expected a 2D array");
              OperatorMatrix op(static_cast<std::size_t>(arr.shape(0)),
                                static_cast<std::size_t>(arr.shape(1)));
              std::copy(arr.data(), arr.data() + arr.size(), op.data.begin());
              if (kind == "frobenius") return matrix_norm(op, NormKind::frobenius);
              if (kind == "spectral") return matrix_norm(op, NormKind::spectral);
              throw Error("matrix_norm: kind must be frobenius|spectral");
          },
          py::arg("matrix"), py::arg("kind"));

    m.def("ricker_wavelet",
          [](double f, double dt, std::size_t nt, double t0) {
              return to_array(ricker_wavelet(f, dt, nt, t0));
          },
          py::arg("f"), py::arg("dt"), py::arg("nt"), py::arg("t0"));

    m.def("synthesize_velocity_map",
          [](std::size_t height, std::size_t width, int faults, std::uint64_t seed) {
              MapConfig cfg;
              cfg.height = height;
              cfg.width = width;
              cfg.fault_count = faults;
              return to_array(synthesize_velocity_map(cfg, seed).grid);
          },
          py::arg("height") = 64, py::arg("width") = 64, py::arg("faults") = 1,
          py::arg("seed") = 0);

    m.def("simulate_shot",
          [](const py::array_t<double>& velocity, double dx, double dz, std::size_t src_row,
             std::size_t src_col, double frequency, double dt, std::size_t nt,
             std::size_t receiver_row) {
              VelocityMap vm;
              vm.grid = to_tensor(velocity);
              vm.dx = dx;
              vm.dz = dz;
              SourceConfig src;
              src.row = src_row;
              src.col = src_col;
              src.frequency = frequency;
              ReceiverLine recv;
              recv.row = receiver_row;
              recv.cols.resize(vm.width());
              for (std::size_t i = 0; i < vm.width(); ++i) recv.cols[i] = i;
              return to_array(simulate_shot(vm, src, recv, dt, nt));
          },
          py::arg("velocity"), py::arg("dx"), py::arg("dz"), py::arg("src_row"),
          py::arg("src_col"), py::arg("frequency"), py::arg("dt"), py::arg("nt"),
          py::arg("receiver_row") = 1);

    m.def("add_noise_snr",
          [](const py::array_t<double>& signal, const std::string& level, std::uint64_t seed) {
              return to_array(add_noise_snr(to_tensor(signal), SnrLevel::parse(level), seed));
          },
          py::arg("signal"), py::arg("snr"), py::arg("seed") = 0);

    m.def("ssim",
          [](const py::array_t<double>& x, const py::array_t<double>& y) {
              const SsimResult r = ssim(to_tensor(x), to_tensor(y));
              return py::make_tuple(r.clamped, r.raw);
          },
          py::arg("x"), py::arg("y"), "Returns (clamped, raw) SSIM over 8x8 windows");

    m.def("greedy_covering_number",
          [](const std::vector<py::array_t<double>>& points, double radius) {
              std::vector<Tensor> pts;
              pts.reserve(points.size());
              for (const auto& p : points) pts.push_back(to_tensor(p));
              const CoverResult r = greedy_covering_number(pts, radius);
              return py::make_tuple(r.count, r.centers);
          },
          py::arg("points"), py::arg("radius"));

    m.def("generalization_bound",
          [](double delta, double epsilon, double eta, double lipschitz, double max_train_loss,
             std::size_t n_train, std::size_t cover_count, double norm_product,
             bool lemma3_confidence) {
              GenBoundInputs in;
              in.delta = delta;
              in.epsilon = epsilon;
              in.eta = eta;
              in.lipschitz = lipschitz;
              in.max_train_loss = max_train_loss;
              in.n_train = n_train;
              in.cover_count = cover_count;
              in.norm_product = norm_product;
              in.lemma3_confidence = lemma3_confidence;
              const GenBoundReport r = generalization_bound(in);
              return py::make_tuple(r.bound, r.term1, r.term2);
          },
          py::arg("delta"), py::arg("epsilon"), py::arg("eta"), py::arg("lipschitz"),
          py::arg("max_train_loss"), py::arg("n_train"), py::arg("cover_count"),
          py::arg("norm_product"), py::arg("lemma3_confidence") = false,
          "Returns (bound, term1, term2) of the norm-based generalization bound");

    m.def("rb_mae_bound",
          static_cast<double (*)(double, double)>(&rb_mae_bound),
          py::arg("frobenius_operator_product"), py::arg("eta"));
    m.def("rb_mse_bound",
          [](double rb_mae, double eta, std::size_t d_in, double a, double L) {
              const RbMse r = rb_mse_bound(rb_mae, eta, d_in, a, L);
              return py::make_tuple(r.stated, r.solved, r.solved_bounded);
          },
          py::arg("rb_mae"), py::arg("eta"), py::arg("d_in"), py::arg("a"), py::arg("L"),
          "Returns (stated, solved, solved_bounded)");

    m.def("compute_loss",
          [](const py::array_t<double>& pred, const py::array_t<double>& target,
             const std::string& kind) {
              return compute_loss(to_tensor(pred), to_tensor(target), parse_loss_kind(kind));
          },
          py::arg("pred"), py::arg("target"), py::arg("kind"));

    py::register_exception<Error>(m, "FwicertError");
}
