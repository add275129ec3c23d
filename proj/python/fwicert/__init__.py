"""Robustness and generalization certificates for FWI networks.

Thin Python surface over the C++ core: convolution operators, norm-based
bounds, the acoustic forward simulator, SSIM, and covering numbers.
"""

from fwicert._core import (  # noqa: F401
    ConvGeometry,
    FwicertError,
    __version__,
    add_noise_snr,
    build_conv_operator,
    build_transposed_conv_operator,
    compute_loss,
    conv2d_direct,
    generalization_bound,
    greedy_covering_number,
    matrix_norm,
    rb_mae_bound,
    rb_mse_bound,
    ricker_wavelet,
    simulate_shot,
    ssim,
    synthesize_velocity_map,
    tconv2d_direct,
)

__all__ = [
    "ConvGeometry",
    "FwicertError",
    "__version__",
    "add_noise_snr",
    "build_conv_operator",
    "build_transposed_conv_operator",
    "compute_loss",
    "conv2d_direct",
    "generalization_bound",
    "greedy_covering_number",
    "matrix_norm",
    "rb_mae_bound",
    "rb_mse_bound",
    "ricker_wavelet",
    "simulate_shot",
    "ssim",
    "synthesize_velocity_map",
    "tconv2d_direct",
]
