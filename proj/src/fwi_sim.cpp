#include "fwicert/fwi_sim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "fwicert/error.hpp"
#include "fwicert/rng.hpp"
#include "fwicert/serialize.hpp"

namespace fwicert {

double VelocityMap::max_velocity() const {
    double m = 0.0;
    for (std::size_t i = 0; i < grid.size(); ++i) m = std::max(m, grid[i]);
    return m;
}

double VelocityMap::min_velocity() const {
    double m = grid.size() ? grid[0] : 0.0;
    for (std::size_t i = 0; i < grid.size(); ++i) m = std::min(m, grid[i]);
    return m;
}

VelocityMap synthesize_velocity_map(const MapConfig& cfg, std::uint64_t seed) {
    if (cfg.fault_count < 1 || cfg.fault_count > 4)
        throw Error("synthesize_velocity_map: fault_count must be in 1..4");
    if (cfg.height < 32 || cfg.width < 32)
        throw Error("synthesize_velocity_map: grid must be at least 32x32");
    if (cfg.velocity_min < 1500.0 || cfg.velocity_max > 4500.0 ||
        cfg.velocity_min >= cfg.velocity_max)
        throw Error("synthesize_velocity_map: velocity bounds must lie within [1500, 4500]");

    Rng rng(derive_seed(seed, 0xFEEDULL));
    const std::size_t h = cfg.height, w = cfg.width;

    const std::size_t n_layers =
        cfg.min_layers + rng.index(cfg.max_layers - cfg.min_layers + 1);

    // Sinusoidal interfaces between layers, ordered by depth.
    struct Interface {
        double base, amp, periods, phase;
    };
    std::vector<Interface> ifaces(n_layers - 1);
    for (std::size_t k = 0; k < ifaces.size(); ++k) {
        const double fh = static_cast<double>(h);
        ifaces[k].base = fh * static_cast<double>(k + 1) / static_cast<double>(n_layers) +
                         rng.uniform(-0.25, 0.25) * fh / static_cast<double>(n_layers);
        ifaces[k].amp = fh * rng.uniform(cfg.interface_amp_min, cfg.interface_amp_max);
        ifaces[k].periods = 1.0 + static_cast<double>(rng.index(3));
        ifaces[k].phase = rng.uniform(0.0, 2.0 * M_PI);
    }

    // Layer velocities: strictly increasing with depth before faulting.
    std::vector<double> vel(n_layers);
    {
        std::vector<double> inc(n_layers);
        double total = 0.0;
        for (auto& v : inc) {
            v = rng.uniform(0.5, 1.5);
            total += v;
        }
        const double span = (cfg.velocity_max - cfg.velocity_min) * rng.uniform(0.75, 1.0);
        const double v0 = cfg.velocity_min +
                          rng.uniform(0.0, cfg.velocity_max - cfg.velocity_min - span);
        double cum = 0.0;
        for (std::size_t k = 0; k < n_layers; ++k) {
            vel[k] = v0 + span * cum / total;
            cum += inc[k];
        }
    }

    VelocityMap m;
    m.grid = Tensor({h, w});
    m.dx = cfg.dx;
    m.dz = cfg.dz;
    m.fault_count = cfg.fault_count;
    m.n_layers = n_layers;

    for (std::size_t x = 0; x < w; ++x) {
        for (std::size_t z = 0; z < h; ++z) {
            std::size_t layer = 0;
            for (const auto& f : ifaces) {
                const double zf = f.base + f.amp * std::sin(2.0 * M_PI * f.periods *
                                                                static_cast<double>(x) /
                                                                static_cast<double>(w) +
                                                            f.phase);
                if (static_cast<double>(z) >= zf) ++layer;
            }
            m.grid[z * w + x] = vel[layer];
        }
    }

    // Planar fault displacements: cells on the hanging side take the velocity
    // from `throw` cells shallower, producing a sharp offset of every layer.
    for (int fc = 0; fc < cfg.fault_count; ++fc) {
        const double pivot_x = rng.uniform(0.15, 0.85) * static_cast<double>(w);
        const double pivot_z = rng.uniform(0.25, 0.75) * static_cast<double>(h);
        const double dip_deg = rng.uniform(cfg.fault_dip_min_deg, cfg.fault_dip_max_deg);
        const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
        const double slope = sign / std::tan(dip_deg * M_PI / 180.0);
        const std::ptrdiff_t throw_cells = std::max<std::ptrdiff_t>(
            1, static_cast<std::ptrdiff_t>(
                   std::lround(rng.uniform(cfg.fault_throw_min, cfg.fault_throw_max) *
                               static_cast<double>(h))));
        const bool displace_right = rng.uniform() < 0.5;

        Tensor next = m.grid;
        for (std::size_t z = 0; z < h; ++z) {
            const double fault_x =
                pivot_x + slope * (static_cast<double>(z) - pivot_z);
            for (std::size_t x = 0; x < w; ++x) {
                const bool on_side = displace_right ? static_cast<double>(x) > fault_x
                                                    : static_cast<double>(x) < fault_x;
                if (!on_side) continue;
                const std::ptrdiff_t zs =
                    std::max<std::ptrdiff_t>(0, static_cast<std::ptrdiff_t>(z) - throw_cells);
                next[z * w + x] = m.grid[static_cast<std::size_t>(zs) * w + x];
            }
        }
        m.grid = std::move(next);
    }

    for (std::size_t i = 0; i < m.grid.size(); ++i)
        m.grid[i] = std::clamp(m.grid[i], cfg.velocity_min, cfg.velocity_max);
    return m;
}

Tensor ricker_wavelet(double f, double dt, std::size_t nt, double t0) {
    if (f <= 0.0 || dt <= 0.0) throw Error("ricker_wavelet: f and dt must be positive");
    if (f * dt >= 0.5)
        throw Error("ricker_wavelet: f*dt = " + std::to_string(f * dt) +
                    " violates Nyquist (must be < 0.5)");
    Tensor r({nt});
    const double pf = M_PI * f;
    for (std::size_t i = 0; i < nt; ++i) {
        const double tau = static_cast<double>(i) * dt - t0;
        const double a = pf * pf * tau * tau;
        r[i] = (1.0 - 2.0 * a) * std::exp(-a);
    }
    return r;
}

double cfl_max_dt(const VelocityMap& m) {
    return 0.5 * std::min(m.dx, m.dz) / m.max_velocity();
}

Tensor simulate_shot(const VelocityMap& m, const SourceConfig& src, const ReceiverLine& recv,
                     double dt, std::size_t nt, std::vector<double>* energy_log,
                     std::size_t sponge_cells) {
    const std::size_t h = m.height(), w = m.width();
    const double max_dt = cfl_max_dt(m);
    if (dt > max_dt)
        throw Error("simulate_shot: dt = " + std::to_string(dt) +
                    " violates CFL; max admissible dt = " + std::to_string(max_dt));
    if (src.row >= h || src.col >= w) throw Error("simulate_shot: source outside grid");
    for (std::size_t c : recv.cols)
        if (recv.row >= h || c >= w) throw Error("simulate_shot: receiver outside grid");

    const double t0 = src.delay > 0.0 ? src.delay : 1.2 / src.frequency;
    const Tensor wavelet = ricker_wavelet(src.frequency, dt, nt, t0);

    // Cerjan-style sponge on sides and bottom; free surface (u = 0) on top.
    // Clamped so two opposite tapers always leave an undamped interior on
    // small grids.
    const std::size_t sponge =
        std::min<std::size_t>(sponge_cells, (std::min(h, w) - 4) / 2);
    const double alpha = 0.3 / static_cast<double>(sponge);
    std::vector<double> taper(sponge);
    for (std::size_t d = 0; d < sponge; ++d) {
        const double a = alpha * static_cast<double>(sponge - d);
        taper[d] = std::exp(-a * a);
    }
    auto damp_factor = [&](std::size_t z, std::size_t x) {
        double g = 1.0;
        if (x < sponge) g *= taper[x];
        if (w - 1 - x < sponge) g *= taper[w - 1 - x];
        if (h - 1 - z < sponge) g *= taper[h - 1 - z];
        return g;
    };
    std::vector<double> damp(h * w);
    for (std::size_t z = 0; z < h; ++z)
        for (std::size_t x = 0; x < w; ++x) damp[z * w + x] = damp_factor(z, x);

    std::vector<double> u_prev(h * w, 0.0), u_cur(h * w, 0.0), u_next(h * w, 0.0);
    Tensor record({nt, recv.cols.size()});

    const double inv_dx2 = 1.0 / (m.dx * m.dx);
    const double inv_dz2 = 1.0 / (m.dz * m.dz);
    const double dt2 = dt * dt;
    const double cell_area = m.dx * m.dz;

    for (std::size_t step = 0; step < nt; ++step) {
        for (std::size_t z = 1; z + 1 < h; ++z) {
            const double* row = u_cur.data() + z * w;
            const double* up = u_cur.data() + (z - 1) * w;
            const double* dn = u_cur.data() + (z + 1) * w;
            double* out = u_next.data() + z * w;
            const double* pv = u_prev.data() + z * w;
            const double* vel = m.grid.data() + z * w;
            for (std::size_t x = 1; x + 1 < w; ++x) {
                const double lap = (row[x - 1] - 2.0 * row[x] + row[x + 1]) * inv_dx2 +
                                   (up[x] - 2.0 * row[x] + dn[x]) * inv_dz2;
                const double v2 = vel[x] * vel[x];
                out[x] = 2.0 * row[x] - pv[x] + dt2 * v2 * lap;
            }
        }

        // Additive point source, delta-normalized by the cell area so the
        // radiated field is grid-consistent under refinement.
        {
            const double v = m.grid[src.row * w + src.col];
            u_next[src.row * w + src.col] +=
                dt2 * v * v * src.amplitude * wavelet[step] / cell_area;
        }

        // Free surface on top.
        for (std::size_t x = 0; x < w; ++x) u_next[x] = 0.0;

        for (std::size_t i = 0; i < h * w; ++i) {
            u_next[i] *= damp[i];
            u_cur[i] *= damp[i];
        }

        std::swap(u_prev, u_cur);
        std::swap(u_cur, u_next);

        for (std::size_t r = 0; r < recv.cols.size(); ++r)
            record[step * recv.cols.size() + r] = u_cur[recv.row * w + recv.cols[r]];

        if (energy_log) {
            // E = 1/(2 dt^2) ||u^{n+1} - u^n||^2_{1/v^2} - 1/2 <u^{n+1}, L u^n>,
            // the functional the undamped leapfrog scheme conserves exactly.
            double kin = 0.0, pot = 0.0;
            for (std::size_t z = 1; z + 1 < h; ++z)
                for (std::size_t x = 1; x + 1 < w; ++x) {
                    const std::size_t i = z * w + x;
                    const double v = m.grid[i];
                    const double d = u_cur[i] - u_prev[i];
                    kin += d * d / (v * v);
                    const double lap =
                        (u_prev[i - 1] - 2.0 * u_prev[i] + u_prev[i + 1]) * inv_dx2 +
                        (u_prev[i - w] - 2.0 * u_prev[i] + u_prev[i + w]) * inv_dz2;
                    pot -= u_cur[i] * lap;
                }
            energy_log->push_back(0.5 * kin / dt2 + 0.5 * pot);
        }
    }
    return record;
}

// ---------------------------------------------------------------------------
// Dataset on disk
// ---------------------------------------------------------------------------

namespace {

std::string fmt_double(double v) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string sample_name(std::size_t i, const char* ext) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "sample_%06zu.%s", i, ext);
    return buf;
}

} // namespace

std::string DatasetManifest::to_text() const {
    std::ostringstream os;
    for (const auto& line : provenance) os << "# " << line << "\n";
    os << "n_samples = " << n_samples << "\n";
    os << "grid_height = " << grid_height << "\n";
    os << "grid_width = " << grid_width << "\n";
    os << "dx = " << fmt_double(dx) << "\n";
    os << "dz = " << fmt_double(dz) << "\n";
    os << "fault_count = " << fault_count << "\n";
    os << "n_sources = " << n_sources << "\n";
    os << "nt_record = " << nt_record << "\n";
    os << "n_receivers = " << n_receivers << "\n";
    os << "dt_record = " << fmt_double(dt_record) << "\n";
    os << "frequency = " << fmt_double(frequency) << "\n";
    os << "velocity_min = " << fmt_double(velocity_min) << "\n";
    os << "velocity_max = " << fmt_double(velocity_max) << "\n";
    os << "seed = " << seed << "\n";
    return os.str();
}

DatasetManifest DatasetManifest::from_text(const std::string& text) {
    DatasetManifest m;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        if (line[0] == '#') {
            if (line.size() > 2)
                m.provenance.push_back(line.substr(2));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw Error("manifest: malformed line: " + line);
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t");
            const auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        const std::string key = trim(line.substr(0, eq));
        const std::string val = trim(line.substr(eq + 1));
        if (key == "n_samples") m.n_samples = std::stoull(val);
        else if (key == "grid_height") m.grid_height = std::stoull(val);
        else if (key == "grid_width") m.grid_width = std::stoull(val);
        else if (key == "dx") m.dx = std::stod(val);
        else if (key == "dz") m.dz = std::stod(val);
        else if (key == "fault_count") m.fault_count = std::stoi(val);
        else if (key == "n_sources") m.n_sources = std::stoull(val);
        else if (key == "nt_record") m.nt_record = std::stoull(val);
        else if (key == "n_receivers") m.n_receivers = std::stoull(val);
        else if (key == "dt_record") m.dt_record = std::stod(val);
        else if (key == "frequency") m.frequency = std::stod(val);
        else if (key == "velocity_min") m.velocity_min = std::stod(val);
        else if (key == "velocity_max") m.velocity_max = std::stod(val);
        else if (key == "seed") m.seed = std::stoull(val);
        else throw Error("manifest: unknown key '" + key + "'");
    }
    return m;
}

DatasetManifest build_dataset(const std::filesystem::path& dir, std::size_t n_samples,
                              const MapConfig& map_config, const AcquisitionConfig& acq,
                              std::uint64_t seed,
                              const std::vector<std::string>& provenance) {
    std::filesystem::create_directories(dir);

    const std::size_t h = map_config.height, w = map_config.width;
    const std::size_t nrec = acq.n_receivers == 0 ? w : acq.n_receivers;

    // Uniform stepping across the dataset: CFL and trace coverage are sized
    // from the construction bounds, not per-map extrema.
    const double dt_sim = 0.5 * std::min(map_config.dx, map_config.dz) / map_config.velocity_max;
    const double diag = std::hypot(static_cast<double>(h) * map_config.dz,
                                   static_cast<double>(w) * map_config.dx);
    const double needed = 2.0 * diag / map_config.velocity_min;
    const std::size_t decim = std::max<std::size_t>(
        1, static_cast<std::size_t>(
               std::ceil(needed / (static_cast<double>(acq.nt_record) * dt_sim))));
    const std::size_t nt_sim = decim * acq.nt_record;

    DatasetManifest manifest;
    manifest.n_samples = n_samples;
    manifest.grid_height = h;
    manifest.grid_width = w;
    manifest.dx = map_config.dx;
    manifest.dz = map_config.dz;
    manifest.fault_count = map_config.fault_count;
    manifest.n_sources = acq.n_sources;
    manifest.nt_record = acq.nt_record;
    manifest.n_receivers = nrec;
    manifest.dt_record = static_cast<double>(decim) * dt_sim;
    manifest.frequency = acq.frequency;
    manifest.velocity_min = map_config.velocity_min;
    manifest.velocity_max = map_config.velocity_max;
    manifest.seed = seed;
    manifest.provenance = provenance;

    ReceiverLine recv;
    recv.row = acq.receiver_row;
    recv.cols.resize(nrec);
    for (std::size_t r = 0; r < nrec; ++r)
        recv.cols[r] = nrec == w ? r : (r * (w - 1)) / std::max<std::size_t>(1, nrec - 1);

    for (std::size_t i = 0; i < n_samples; ++i) {
        const VelocityMap m = synthesize_velocity_map(map_config, derive_seed(seed, i));

        Tensor seis({acq.n_sources, acq.nt_record, nrec});
        for (std::size_t s = 0; s < acq.n_sources; ++s) {
            SourceConfig src;
            src.row = acq.source_row;
            src.col = ((s + 1) * w) / (acq.n_sources + 1);
            src.frequency = acq.frequency;
            src.amplitude = acq.amplitude;
            src.delay = acq.source_delay;
            const Tensor full = simulate_shot(m, src, recv, dt_sim, nt_sim);
            // Boxcar-averaged decimation: each stored sample is the mean of
            // its record window, a crude anti-alias filter. Point decimation
            // aliases the upper Ricker band and folds high-frequency shots
            // back onto low-frequency ones.
            for (std::size_t t = 0; t < acq.nt_record; ++t)
                for (std::size_t r = 0; r < nrec; ++r) {
                    double acc = 0.0;
                    for (std::size_t j = t * decim; j < (t + 1) * decim; ++j)
                        acc += full[j * nrec + r];
                    seis[(s * acq.nt_record + t) * nrec + r] =
                        acc / static_cast<double>(decim);
                }
        }

        save_tensor(m.grid, dir / sample_name(i, "vel"));
        save_tensor(seis, dir / sample_name(i, "seis"));
    }

    std::ofstream os(dir / "manifest", std::ios::binary | std::ios::trunc);
    if (!os) throw Error("build_dataset: cannot write manifest in " + dir.string());
    os << manifest.to_text();
    return manifest;
}

Tensor normalize_seismic(const Tensor& raw) {
    const double peak = raw.max_abs();
    if (peak == 0.0) return raw;
    Tensor out = raw;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] /= peak;
    return out;
}

Tensor normalize_velocity(const Tensor& raw, const DatasetManifest& manifest) {
    const double span = manifest.velocity_max - manifest.velocity_min;
    Tensor out = raw;
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = (out[i] - manifest.velocity_min) / span;
    return out;
}

LoadedDataset load_dataset(const std::filesystem::path& dir, std::size_t max_samples) {
    std::ifstream is(dir / "manifest", std::ios::binary);
    if (!is) throw Error("load_dataset: no manifest in " + dir.string());
    std::stringstream ss;
    ss << is.rdbuf();

    LoadedDataset ds;
    ds.manifest = DatasetManifest::from_text(ss.str());
    const std::size_t n = max_samples == 0 ? ds.manifest.n_samples
                                           : std::min(max_samples, ds.manifest.n_samples);
    ds.data.samples.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        Tensor vel = load_tensor(dir / sample_name(i, "vel"));
        Tensor seis = load_tensor(dir / sample_name(i, "seis"));
        Sample s;
        s.input = normalize_seismic(seis);
        Tensor target = normalize_velocity(vel, ds.manifest);
        // Channel-major layout matching the network's (1, H, W) output.
        s.target = Tensor({1, target.shape()[0], target.shape()[1]}, target.values());
        ds.raw_velocity.push_back(std::move(vel));
        ds.raw_seismic.push_back(std::move(seis));
        ds.data.samples.push_back(std::move(s));
    }
    return ds;
}

ForwardLipschitzEstimate estimate_forward_lipschitz(const LoadedDataset& ds,
                                                    std::size_t n_pairs, std::uint64_t seed) {
    const std::size_t n = ds.data.size();
    if (n < 2) throw Error("estimate_forward_lipschitz: need at least 2 samples");

    ForwardLipschitzEstimate est;
    auto consider = [&](std::size_t i, std::size_t j) {
        Tensor dm = ds.data.samples[i].target;
        for (std::size_t k = 0; k < dm.size(); ++k) dm[k] -= ds.data.samples[j].target[k];
        const double denom = dm.l2_norm();
        if (denom == 0.0) {
            ++est.skipped_pairs;
            return;
        }
        Tensor du = ds.data.samples[i].input;
        for (std::size_t k = 0; k < du.size(); ++k) du[k] -= ds.data.samples[j].input[k];
        const double ratio = du.l2_norm() / denom;
        ++est.pair_count;
        if (ratio > est.l_lower) {
            est.l_lower = ratio;
            est.argmax_first = i;
            est.argmax_second = j;
        }
    };

    const std::size_t all_pairs = n * (n - 1) / 2;
    if (n_pairs >= all_pairs) {
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j) consider(i, j);
        return est;
    }

    Rng rng(derive_seed(seed, 0xA11ULL));
    std::set<std::uint64_t> seen;
    while (seen.size() < n_pairs) {
        std::size_t i = rng.index(n);
        std::size_t j = rng.index(n);
        if (i == j) continue;
        if (i > j) std::swap(i, j);
        const std::uint64_t key = static_cast<std::uint64_t>(i) * n + j;
        if (!seen.insert(key).second) continue;
        consider(i, j);
    }
    return est;
}

} // namespace fwicert
