#ifndef FWICERT_FWI_SIM_HPP
#define FWICERT_FWI_SIM_HPP

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "fwicert/tensor.hpp"
#include "fwicert/train.hpp"

namespace fwicert {

struct MapConfig {
    std::size_t height = 64;     // depth cells
    std::size_t width = 64;
    double dx = 10.0;            // meters
    double dz = 10.0;
    int fault_count = 1;         // 1..4
    double velocity_min = 1500.0;
    double velocity_max = 4500.0;
    // Layering distribution (declared here; the source papers leave these open).
    std::size_t min_layers = 4;
    std::size_t max_layers = 8;
    double interface_amp_min = 0.02;   // sinusoid amplitude, fraction of height
    double interface_amp_max = 0.06;
    double fault_throw_min = 0.08;     // vertical displacement, fraction of height
    double fault_throw_max = 0.18;
    double fault_dip_min_deg = 25.0;
    double fault_dip_max_deg = 65.0;
};

/// Subsurface model: velocities in m/s on a (depth x width) grid.
struct VelocityMap {
    Tensor grid;          // (height, width)
    double dx = 10.0;
    double dz = 10.0;
    int fault_count = 0;
    std::size_t n_layers = 0;

    std::size_t height() const { return grid.shape()[0]; }
    std::size_t width() const { return grid.shape()[1]; }
    double max_velocity() const;
    double min_velocity() const;
};

/// Curved layers with sinusoidal interfaces, velocity increasing with depth,
/// then fault_count planar displacements with random dip and throw.
VelocityMap synthesize_velocity_map(const MapConfig& config, std::uint64_t seed);

/// r(t) = (1 - 2 pi^2 f^2 (t-t0)^2) exp(-pi^2 f^2 (t-t0)^2), sampled at dt.
/// Requires f*dt < 0.5 (Nyquist).
Tensor ricker_wavelet(double f, double dt, std::size_t nt, double t0);

struct SourceConfig {
    std::size_t row = 2;           // grid indices
    std::size_t col = 0;
    double frequency = 15.0;       // Hz
    double amplitude = 1.0;
    double delay = 0.0;            // seconds; 0 means the default 1.2/f
};

struct ReceiverLine {
    std::size_t row = 1;
    std::vector<std::size_t> cols;
};

/// Largest stable dt for the 2nd-order scheme (0.5 * min(dx,dz) / v_max).
double cfl_max_dt(const VelocityMap& m);

/// Solves u_tt = v^2 Laplacian(u) + f with 2nd-order centered differences,
/// an exponential sponge on the sides and bottom (30 cells by default,
/// clamped so opposite tapers never overlap) and a free surface (u = 0) on
/// top. Returns the (nt x receivers) record. If energy_log is given, appends
/// the discrete leapfrog energy (kinetic + potential form) per step; the
/// displacement's plain sum of squares oscillates between the two forms and
/// is not monotone, so the conserved functional is what gets logged.
Tensor simulate_shot(const VelocityMap& m, const SourceConfig& src, const ReceiverLine& recv,
                     double dt, std::size_t nt, std::vector<double>* energy_log = nullptr,
                     std::size_t sponge_cells = 30);

struct AcquisitionConfig {
    std::size_t n_sources = 3;
    std::size_t nt_record = 64;        // recorded samples per trace
    double frequency = 15.0;           // Hz
    double amplitude = 1.0;
    // Fixed acquisition clock: the same source delay for every frequency.
    // A per-frequency delay (1.2/f) shifts the whole gather in time and
    // swamps the spectral differences between drifted frequencies.
    double source_delay = 0.08;        // seconds; fits any f >= 15 Hz
    std::size_t source_row = 2;
    std::size_t receiver_row = 1;
    std::size_t n_receivers = 0;       // 0 means one per column
};

struct DatasetManifest {
    std::size_t n_samples = 0;
    std::size_t grid_height = 0, grid_width = 0;
    double dx = 0, dz = 0;
    int fault_count = 1;
    std::size_t n_sources = 0, nt_record = 0, n_receivers = 0;
    double dt_record = 0;          // seconds between stored samples
    double frequency = 15.0;
    double velocity_min = 1500.0, velocity_max = 4500.0;  // normalization bounds
    std::uint64_t seed = 0;
    std::vector<std::string> provenance;  // echoed config / tool info

    std::string to_text() const;
    static DatasetManifest from_text(const std::string& text);
};

/// Writes `manifest` plus sample_%06d.vel / sample_%06d.seis pairs.
/// Deterministic per seed: a rerun produces byte-identical files.
DatasetManifest build_dataset(const std::filesystem::path& dir, std::size_t n_samples,
                              const MapConfig& map_config, const AcquisitionConfig& acq,
                              std::uint64_t seed,
                              const std::vector<std::string>& provenance = {});

struct LoadedDataset {
    DatasetManifest manifest;
    Dataset data;                      // normalized samples
    std::vector<Tensor> raw_velocity;  // m/s grids
    std::vector<Tensor> raw_seismic;   // unnormalized gathers
};

/// Loads a dataset directory. Seismic inputs are scaled to unit peak
/// amplitude per sample; velocity targets are min-max scaled to [0,1]
/// with the manifest's dataset-global bounds.
LoadedDataset load_dataset(const std::filesystem::path& dir, std::size_t max_samples = 0);

Tensor normalize_seismic(const Tensor& raw);
Tensor normalize_velocity(const Tensor& raw, const DatasetManifest& manifest);

struct ForwardLipschitzEstimate {
    double l_lower = 0.0;             // max observed ratio; lower estimate of L
    std::size_t pair_count = 0;
    std::size_t argmax_first = 0;
    std::size_t argmax_second = 0;
    std::size_t skipped_pairs = 0;    // zero-denominator pairs
};

/// Max over sampled distinct pairs of ||F(m1)-F(m2)||_2 / ||m1-m2||_2 in
/// normalized units. A certified lower estimate of the forward operator's
/// Lipschitz constant.
ForwardLipschitzEstimate estimate_forward_lipschitz(const LoadedDataset& ds,
                                                    std::size_t n_pairs, std::uint64_t seed);

} // namespace fwicert

#endif
