#include "fwicert/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "fwicert/error.hpp"
#include "fwicert/rng.hpp"

namespace fwicert {

namespace {

std::string fmt_double(double v) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

double mean_of(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

double std_of(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    const double m = mean_of(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(v.size()));
}

} // namespace

SnrLevel SnrLevel::parse(const std::string& s) {
    if (s == "inf" || s == "Inf" || s == "INF") return SnrLevel::inf();
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (end == s.c_str() || *end != '\0' || !std::isfinite(v))
        throw ConfigError("invalid SNR level '" + s + "' (expected a number or 'inf')");
    return SnrLevel::of(v);
}

std::string SnrLevel::label() const {
    if (infinite) return "inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", db);
    return buf;
}

Tensor add_noise_snr(const Tensor& signal, SnrLevel level, std::uint64_t seed) {
    if (level.infinite) return signal;
    double power = 0.0;
    for (std::size_t i = 0; i < signal.size(); ++i) power += signal[i] * signal[i];
    power /= static_cast<double>(signal.size());
    if (power == 0.0)
        throw Error("add_noise_snr: zero-power signal with finite SNR level");
    const double sigma = std::sqrt(power / std::pow(10.0, level.db / 10.0));
    Rng rng(derive_seed(seed, 0x50EBULL));
    Tensor out = signal;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += sigma * rng.gaussian();
    return out;
}

SsimResult ssim(const Tensor& x, const Tensor& y) {
    if (x.rank() != 2 || !x.same_shape(y))
        throw ShapeError("ssim: inputs must share a 2D shape");
    const std::size_t h = x.shape()[0], w = x.shape()[1];
    if (h < 8 || w < 8) throw ShapeError("ssim: inputs must be at least 8x8");
    for (std::size_t i = 0; i < x.size(); ++i)
        if (x[i] < -1e-9 || x[i] > 1.0 + 1e-9 || y[i] < -1e-9 || y[i] > 1.0 + 1e-9)
            throw Error("ssim: values must lie in [0,1] (normalized units)");

    constexpr std::size_t win = 8;
    constexpr double c1 = 0.01 * 0.01;  // (K1 * L)^2 with L = 1
    constexpr double c2 = 0.03 * 0.03;
    const double n = static_cast<double>(win * win);

    double acc = 0.0;
    std::size_t count = 0;
    for (std::size_t r = 0; r + win <= h; ++r)
        for (std::size_t c = 0; c + win <= w; ++c) {
            double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
            for (std::size_t i = 0; i < win; ++i)
                for (std::size_t j = 0; j < win; ++j) {
                    const double a = x[(r + i) * w + (c + j)];
                    const double b = y[(r + i) * w + (c + j)];
                    sx += a;
                    sy += b;
                    sxx += a * a;
                    syy += b * b;
                    sxy += a * b;
                }
            const double mx = sx / n, my = sy / n;
            const double vx = sxx / n - mx * mx;
            const double vy = syy / n - my * my;
            const double cxy = sxy / n - mx * my;
            acc += ((2.0 * mx * my + c1) * (2.0 * cxy + c2)) /
                   ((mx * mx + my * my + c1) * (vx + vy + c2));
            ++count;
        }

    SsimResult res;
    res.raw = acc / static_cast<double>(count);
    res.clamped = std::clamp(res.raw, 0.0, 1.0);
    return res;
}

// ---------------------------------------------------------------------------
// ReportTable and rendering
// ---------------------------------------------------------------------------

void ReportTable::add_row(std::vector<Cell> row) {
    if (row.size() != columns.size())
        throw Error("ReportTable: row width " + std::to_string(row.size()) +
                    " != column count " + std::to_string(columns.size()));
    for (const auto& c : row)
        if (const double* d = std::get_if<double>(&c); d && !std::isfinite(*d))
            throw Error("ReportTable: non-finite numeric cell");
    rows.push_back(std::move(row));
}

namespace {

std::size_t column_index(const ReportTable& t, const std::string& column) {
    for (std::size_t i = 0; i < t.columns.size(); ++i)
        if (t.columns[i] == column) return i;
    throw Error("ReportTable: no column '" + column + "'");
}

} // namespace

double ReportTable::number_at(std::size_t row, const std::string& column) const {
    const Cell& c = rows.at(row).at(column_index(*this, column));
    if (const double* d = std::get_if<double>(&c)) return *d;
    throw Error("ReportTable: cell in '" + column + "' is not numeric");
}

std::string ReportTable::text_at(std::size_t row, const std::string& column) const {
    const Cell& c = rows.at(row).at(column_index(*this, column));
    if (const std::string* s = std::get_if<std::string>(&c)) return *s;
    return fmt_double(std::get<double>(c));
}

namespace {

void write_csv(const ReportTable& t, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw Error("write_report: cannot open " + path.string());
    for (const auto& p : t.provenance) os << "# " << p << "\n";
    for (std::size_t i = 0; i < t.columns.size(); ++i)
        os << (i ? "," : "") << t.columns[i];
    os << "\n";
    for (const auto& row : t.rows) {
        for (std::size_t i = 0; i < row.size(); ++i) {
            if (i) os << ",";
            if (const double* d = std::get_if<double>(&row[i])) {
                os << fmt_double(*d);
            } else {
                const std::string& s = std::get<std::string>(row[i]);
                if (s.find_first_of(",\"\n") != std::string::npos)
                    throw Error("write_report: cell contains CSV delimiter: " + s);
                os << s;
            }
        }
        os << "\n";
    }
    if (!os) throw Error("write_report: write failed: " + path.string());
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur += ch;
        }
    }
    out.push_back(cur);
    return out;
}

void write_svg(const ReportTable& t, const std::filesystem::path& path) {
    // Loss-vs-SNR line chart, one polyline per loss kind. Requires the
    // robustness-table columns.
    const std::size_t ci_kind = column_index(t, "loss_kind");
    const std::size_t ci_level = column_index(t, "snr_db");
    const std::size_t ci_loss = column_index(t, "test_loss");

    std::vector<std::string> kinds, levels;
    for (const auto& row : t.rows) {
        const std::string k = std::get<std::string>(row[ci_kind]);
        if (std::find(kinds.begin(), kinds.end(), k) == kinds.end()) kinds.push_back(k);
        std::string lv;
        if (const std::string* s = std::get_if<std::string>(&row[ci_level])) lv = *s;
        else lv = fmt_double(std::get<double>(row[ci_level]));
        if (std::find(levels.begin(), levels.end(), lv) == levels.end()) levels.push_back(lv);
    }

    double max_loss = 0.0;
    for (const auto& row : t.rows)
        max_loss = std::max(max_loss, std::get<double>(row[ci_loss]));
    if (max_loss <= 0.0) max_loss = 1.0;

    const double width = 640, height = 420, ml = 70, mr = 30, mt = 30, mb = 50;
    const double pw = width - ml - mr, ph = height - mt - mb;
    auto xpos = [&](std::size_t i) {
        return levels.size() < 2 ? ml + pw / 2
                                 : ml + pw * static_cast<double>(i) /
                                            static_cast<double>(levels.size() - 1);
    };
    auto ypos = [&](double loss) { return mt + ph * (1.0 - loss / max_loss); };

    std::ostringstream os;
    os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
       << height << "\" viewBox=\"0 0 " << width << " " << height << "\">\n";
    for (const auto& p : t.provenance) os << "<!-- " << p << " -->\n";
    os << "<rect x=\"0\" y=\"0\" width=\"" << width << "\" height=\"" << height
       << "\" fill=\"white\"/>\n";
    os << "<line x1=\"" << ml << "\" y1=\"" << mt + ph << "\" x2=\"" << ml + pw << "\" y2=\""
       << mt + ph << "\" stroke=\"black\"/>\n";
    os << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\"" << mt + ph
       << "\" stroke=\"black\"/>\n";
    for (std::size_t i = 0; i < levels.size(); ++i)
        os << "<text x=\"" << xpos(i) << "\" y=\"" << mt + ph + 20
           << "\" text-anchor=\"middle\" font-size=\"12\">" << levels[i] << "</text>\n";
    os << "<text x=\"" << ml + pw / 2 << "\" y=\"" << height - 12
       << "\" text-anchor=\"middle\" font-size=\"13\">snr_db</text>\n";
    os << "<text x=\"18\" y=\"" << mt + ph / 2
       << "\" text-anchor=\"middle\" font-size=\"13\" transform=\"rotate(-90 18 " << mt + ph / 2
       << ")\">test_loss</text>\n";

    const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd"};
    for (std::size_t k = 0; k < kinds.size(); ++k) {
        os << "<polyline fill=\"none\" stroke=\"" << palette[k % 4]
           << "\" stroke-width=\"2\" points=\"";
        bool first = true;
        for (std::size_t i = 0; i < levels.size(); ++i) {
            for (const auto& row : t.rows) {
                const std::string rk = std::get<std::string>(row[ci_kind]);
                std::string lv;
                if (const std::string* s = std::get_if<std::string>(&row[ci_level])) lv = *s;
                else lv = fmt_double(std::get<double>(row[ci_level]));
                if (rk == kinds[k] && lv == levels[i]) {
                    if (!first) os << " ";
                    os << xpos(i) << "," << ypos(std::get<double>(row[ci_loss]));
                    first = false;
                }
            }
        }
        os << "\"/>\n";
        os << "<text x=\"" << ml + pw - 4 << "\" y=\"" << mt + 16 + 16 * static_cast<double>(k)
           << "\" text-anchor=\"end\" font-size=\"12\" fill=\"" << palette[k % 4] << "\">"
           << kinds[k] << "</text>\n";
    }
    os << "</svg>\n";

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw Error("write_report: cannot open " + path.string());
    f << os.str();
    if (!f) throw Error("write_report: write failed: " + path.string());
}

} // namespace

void write_report(const ReportTable& table, const std::filesystem::path& path,
                  ReportFormat format) {
    if (format == ReportFormat::csv) write_csv(table, path);
    else write_svg(table, path);
}

ReportTable read_csv(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error("read_csv: cannot open " + path.string());
    ReportTable t;
    std::string line;
    bool have_header = false;
    while (std::getline(is, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (line[0] == '#') {
            t.provenance.push_back(line.size() > 2 ? line.substr(2) : "");
            continue;
        }
        if (!have_header) {
            t.columns = split_csv_line(line);
            have_header = true;
            continue;
        }
        std::vector<Cell> row;
        for (const std::string& field : split_csv_line(line)) {
            char* end = nullptr;
            const double v = std::strtod(field.c_str(), &end);
            if (!field.empty() && end == field.c_str() + field.size() && std::isfinite(v))
                row.emplace_back(v);
            else
                row.emplace_back(field);
        }
        t.add_row(std::move(row));
    }
    if (!have_header) throw Error("read_csv: missing header in " + path.string());
    return t;
}

// ---------------------------------------------------------------------------
// Robustness suite
// ---------------------------------------------------------------------------

namespace {

Tensor as_2d(const Tensor& t) {
    const auto& s = t.shape();
    if (s.size() == 2) return t;
    if (s.size() == 3 && s[0] == 1) return Tensor({s[1], s[2]}, t.values());
    throw ShapeError("expected a single-channel 2D map, got " + Tensor::shape_string(s));
}

Tensor clamp01(Tensor t) {
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = std::clamp(t[i], 0.0, 1.0);
    return t;
}

} // namespace

ReportTable run_robustness_suite(const RobustnessConfig& cfg) {
    if (!cfg.spec_mae || !cfg.params_mae || !cfg.spec_mse || !cfg.params_mse || !cfg.test)
        throw Error("run_robustness_suite: missing model or dataset");
    if (cfg.test->size() == 0) throw Error("run_robustness_suite: empty test set");
    if (cfg.snr_levels.empty()) throw Error("run_robustness_suite: no SNR levels");

    ReportTable table;
    table.columns = {"loss_kind", "snr_db",    "test_loss", "pct_gain", "ssim_mean",
                     "ssim_std",  "rb_mae",    "rb_mse_stated", "emp_gain_max"};
    table.provenance = cfg.provenance;

    struct ModelRef {
        const NetworkSpec* spec;
        const NetworkParams* params;
        LossKind loss;
    };
    const ModelRef models[2] = {{cfg.spec_mae, cfg.params_mae, LossKind::mae},
                                {cfg.spec_mse, cfg.params_mse, LossKind::mse}};

    for (std::size_t mi = 0; mi < 2; ++mi) {
        const ModelRef& m = models[mi];
        const NormProducts np = weight_norm_products(*m.spec, *m.params);
        std::size_t d_in = 1;
        for (std::size_t d : m.spec->input_shape) d_in *= d;
        const std::vector<double> clean = per_sample_losses(*m.spec, *m.params, *cfg.test, m.loss);
        const double a = *std::max_element(clean.begin(), clean.end());
        const double clean_mean = mean_of(clean);

        for (std::size_t li = 0; li < cfg.snr_levels.size(); ++li) {
            const SnrLevel level = cfg.snr_levels[li];
            // Noise streams are shared between the two models (keyed by level
            // only), pairing the comparison on identical noisy inputs.
            const std::uint64_t cell_seed = derive_seed(cfg.seed, li);

            std::vector<double> losses, ssims;
            double max_noise_norm = 0.0;
            double max_gain = 0.0;
            for (std::size_t s = 0; s < cfg.test->size(); ++s) {
                const Sample& sample = cfg.test->samples[s];
                for (std::size_t d = 0; d < cfg.draws_per_sample; ++d) {
                    const std::uint64_t draw_seed =
                        derive_seed(cell_seed, s * cfg.draws_per_sample + d);
                    Tensor noisy = level.infinite ? sample.input
                                                  : add_noise_snr(sample.input, level, draw_seed);
                    if (!level.infinite) {
                        double nn = 0.0;
                        for (std::size_t i = 0; i < noisy.size(); ++i) {
                            const double diff = noisy[i] - sample.input[i];
                            nn += diff * diff;
                        }
                        max_noise_norm = std::max(max_noise_norm, std::sqrt(nn));
                    }
                    const Tensor pred = forward(*m.params, *m.spec, noisy);
                    const double loss = compute_loss(pred, sample.target, m.loss);
                    losses.push_back(loss);
                    max_gain = std::max(max_gain, std::fabs(loss - clean[s]));
                    ssims.push_back(ssim(as_2d(clamp01(pred)), as_2d(sample.target)).clamped);
                }
            }

            const double test_loss = mean_of(losses);
            const double eta = level.infinite ? 0.0 : max_noise_norm;
            const double rb_mae = rb_mae_bound(np.frobenius_operator, eta);
            const RbMse rb_mse = rb_mse_bound(rb_mae, eta, d_in, a, np.spectral);

            std::vector<Cell> row;
            row.emplace_back(std::string(to_string(m.loss)));
            row.emplace_back(level.label());
            row.emplace_back(test_loss);
            if (level.infinite)
                row.emplace_back(std::string());
            else
                row.emplace_back((test_loss - clean_mean) / clean_mean);
            row.emplace_back(mean_of(ssims));
            row.emplace_back(std_of(ssims));
            row.emplace_back(rb_mae);
            row.emplace_back(rb_mse.stated);
            row.emplace_back(max_gain);
            table.add_row(std::move(row));
        }
    }
    return table;
}

// ---------------------------------------------------------------------------
// Generalization suite
// ---------------------------------------------------------------------------

ReportTable run_generalization_suite(const GeneralizationConfig& cfg) {
    if (!cfg.dataset) throw Error("run_generalization_suite: missing dataset");
    if (cfg.train_sizes.empty()) throw Error("run_generalization_suite: no training sizes");
    if (cfg.optimizers.size() < 1) throw Error("run_generalization_suite: no optimizers");
    const LoadedDataset& ds = *cfg.dataset;
    const std::size_t total = ds.data.size();
    const std::size_t max_train =
        *std::max_element(cfg.train_sizes.begin(), cfg.train_sizes.end());
    if (max_train + cfg.test_size > total)
        throw Error("run_generalization_suite: dataset too small for train size " +
                    std::to_string(max_train) + " + test " + std::to_string(cfg.test_size));

    const auto& in_shape = ds.data.samples[0].input.shape();
    const auto& out_shape = ds.data.samples[0].target.shape();

    Dataset test;
    test.samples.assign(ds.data.samples.end() - static_cast<std::ptrdiff_t>(cfg.test_size),
                        ds.data.samples.end());

    std::vector<std::size_t> widths = cfg.base_channels;
    if (widths.empty()) widths = {4};

    ReportTable table;
    table.columns = {"n_train", "m_over_sqrt_n", "frob_product", "err_g", "err_g_std"};
    table.provenance = cfg.provenance;

    std::size_t cell_idx = 0;
    for (std::size_t width : widths) {
        NetworkSpec spec = make_encoder_decoder_spec(in_shape[0], in_shape[1], in_shape[2],
                                                     out_shape[1], out_shape[2], width);
        for (std::size_t n_train : cfg.train_sizes) {
            Dataset train;
            train.samples.assign(ds.data.samples.begin(),
                                 ds.data.samples.begin() + static_cast<std::ptrdiff_t>(n_train));

            std::vector<double> errs, maxima, frobs;
            std::vector<double> cell_losses;
            std::size_t model_idx = 0;
            for (OptimizerKind opt : cfg.optimizers) {
                for (std::size_t sd = 0; sd < cfg.seeds_per_cell; ++sd, ++model_idx) {
                    const std::uint64_t model_seed =
                        derive_seed(cfg.seed, cell_idx * 1000 + model_idx);
                    NetworkParams params = init_params(spec, model_seed);
                    FitOptions opts;
                    opts.loss = cfg.loss;
                    opts.optimizer = opt;
                    opts.epochs = cfg.epochs;
                    opts.batch_size = cfg.batch_size;
                    opts.seed = derive_seed(model_seed, 7);
                    opts.workers = cfg.workers;
                    const TrainRecord rec = fit(spec, params, train, nullptr, opts);

                    const std::vector<double> tr =
                        per_sample_losses(spec, params, train, cfg.loss);
                    const std::vector<double> te =
                        per_sample_losses(spec, params, test, cfg.loss);
                    errs.push_back(std::fabs(mean_of(tr) - mean_of(te)));
                    maxima.push_back(rec.final_max_sample_loss());
                    frobs.push_back(
                        weight_norm_products(spec, params, false).frobenius_operator);
                    cell_losses.insert(cell_losses.end(), tr.begin(), tr.end());
                    cell_losses.insert(cell_losses.end(), te.begin(), te.end());
                }
            }

            table.add_row({static_cast<double>(n_train),
                           mean_of(maxima) / std::sqrt(static_cast<double>(n_train)),
                           mean_of(frobs), mean_of(errs), std_of(errs)});
            if (cfg.per_cell_sample_losses)
                cfg.per_cell_sample_losses->push_back(std::move(cell_losses));
            ++cell_idx;
        }
    }
    return table;
}

// ---------------------------------------------------------------------------
// Drift suite
// ---------------------------------------------------------------------------

ReportTable run_drift_suite(const DriftConfig& cfg) {
    if (cfg.models.empty()) throw Error("run_drift_suite: no models");
    if (cfg.fault_sets.empty() && cfg.freq_sets.empty())
        throw Error("run_drift_suite: no drifted test sets");

    ReportTable table;
    table.columns = {"model_id", "param_combo", "drift_kind", "drift_level", "err_g"};
    table.provenance = cfg.provenance;

    for (const DriftModel& m : cfg.models) {
        const double frob = weight_norm_products(m.spec, m.params, false).frobenius_operator;
        const double combo =
            m.n_train == 0 ? 0.0
                           : m.max_train_loss / static_cast<double>(m.n_train) * frob;
        auto run_axis = [&](const char* kind,
                            const std::vector<std::pair<std::string, const Dataset*>>& sets) {
            for (const auto& [level, data] : sets) {
                if (!data || data->size() == 0)
                    throw Error("run_drift_suite: missing drifted test set " + level);
                const double test_loss = evaluate(m.spec, m.params, *data, m.loss);
                table.add_row({m.id, combo, std::string(kind), level,
                               std::fabs(m.train_loss - test_loss)});
            }
        };
        run_axis("faults", cfg.fault_sets);
        run_axis("freq", cfg.freq_sets);
    }
    return table;
}

// ---------------------------------------------------------------------------
// Statistics helpers
// ---------------------------------------------------------------------------

double spearman_correlation(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size() || a.size() < 2)
        throw Error("spearman_correlation: need two equal-length series, n >= 2");
    auto ranks = [](const std::vector<double>& v) {
        const std::size_t n = v.size();
        std::vector<std::size_t> idx(n);
        for (std::size_t i = 0; i < n; ++i) idx[i] = i;
        std::sort(idx.begin(), idx.end(), [&](std::size_t i, std::size_t j) { return v[i] < v[j]; });
        std::vector<double> r(n);
        std::size_t i = 0;
        while (i < n) {
            std::size_t j = i;
            while (j + 1 < n && v[idx[j + 1]] == v[idx[i]]) ++j;
            const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
            for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
            i = j + 1;
        }
        return r;
    };
    const std::vector<double> ra = ranks(a), rb = ranks(b);
    const double ma = mean_of(ra), mb = mean_of(rb);
    double num = 0.0, da = 0.0, db = 0.0;
    for (std::size_t i = 0; i < ra.size(); ++i) {
        num += (ra[i] - ma) * (rb[i] - mb);
        da += (ra[i] - ma) * (ra[i] - ma);
        db += (rb[i] - mb) * (rb[i] - mb);
    }
    if (da == 0.0 || db == 0.0) return 0.0;
    return num / std::sqrt(da * db);
}

double sign_test_p_value(std::size_t successes, std::size_t trials) {
    if (successes > trials) throw Error("sign_test_p_value: successes > trials");
    // Exact one-sided binomial tail at p = 1/2.
    double p = 0.0;
    for (std::size_t k = successes; k <= trials; ++k) {
        double c = 1.0;
        for (std::size_t i = 0; i < k; ++i)
            c = c * static_cast<double>(trials - i) / static_cast<double>(i + 1);
        p += c;
    }
    return p * std::pow(0.5, static_cast<double>(trials));
}

} // namespace fwicert
