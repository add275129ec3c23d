#include "fwicert/cli.hpp"

#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>

#include "fwicert/bounds.hpp"
#include "fwicert/error.hpp"
#include "fwicert/experiments.hpp"
#include "fwicert/fwi_sim.hpp"
#include "fwicert/network.hpp"
#include "fwicert/rng.hpp"
#include "fwicert/train.hpp"

namespace fwicert {

namespace fs = std::filesystem;

namespace {

std::string fmt_double(double v) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

MapConfig map_config_from(const CliConfig& cfg, int faults, double /*freq*/) {
    MapConfig mc;
    mc.height = cfg.get_size("data.grid");
    mc.width = cfg.get_size("data.grid");
    mc.dx = cfg.get_double("data.dx");
    mc.dz = cfg.get_double("data.dz");
    mc.fault_count = faults;
    mc.velocity_min = cfg.get_double("data.velocity_min");
    mc.velocity_max = cfg.get_double("data.velocity_max");
    return mc;
}

AcquisitionConfig acq_config_from(const CliConfig& cfg, double freq) {
    AcquisitionConfig ac;
    ac.n_sources = cfg.get_size("data.sources");
    const std::size_t ntr = cfg.get_size("data.nt_record");
    ac.nt_record = ntr == 0 ? cfg.get_size("data.grid") : ntr;
    ac.frequency = freq;
    ac.amplitude = cfg.get_double("data.amplitude");
    return ac;
}

int cmd_gen_data(const CliConfig& cfg, std::ostream& out) {
    const std::string dir = cfg.get_string("data.out");
    if (dir.empty()) throw ConfigError("gen-data requires data.out (--out)");
    const MapConfig mc = map_config_from(cfg, static_cast<int>(cfg.get_int("data.faults")),
                                         cfg.get_double("data.freq"));
    const AcquisitionConfig ac = acq_config_from(cfg, cfg.get_double("data.freq"));
    const DatasetManifest m = build_dataset(dir, cfg.get_size("data.n"), mc, ac,
                                            cfg.get_u64("run.seed"), cfg.provenance());
    out << "wrote " << m.n_samples << " samples to " << dir << " (grid " << m.grid_height << "x"
        << m.grid_width << ", gather " << m.n_sources << "x" << m.nt_record << "x"
        << m.n_receivers << ")\n";
    return 0;
}

NetworkSpec spec_for_dataset(const LoadedDataset& ds, std::size_t base_channels) {
    const auto& in = ds.data.samples.at(0).input.shape();
    const auto& target = ds.data.samples.at(0).target.shape();
    return make_encoder_decoder_spec(in[0], in[1], in[2], target[1], target[2], base_channels);
}

void write_model_sidecar(const fs::path& model_path, const CliConfig& cfg,
                         const FitOptions& opts, const TrainRecord& rec, std::size_t n_train,
                         std::uint64_t init_seed, const std::string& dataset) {
    std::ofstream os(model_path.string() + ".prov", std::ios::binary | std::ios::trunc);
    if (!os) throw Error("cannot write model sidecar for " + model_path.string());
    for (const auto& line : cfg.provenance()) os << "# " << line << "\n";
    os << "loss = " << to_string(opts.loss) << "\n";
    os << "optimizer = " << to_string(opts.optimizer) << "\n";
    os << "n_train = " << n_train << "\n";
    os << "epochs = " << rec.epochs_run << "\n";
    os << "init_seed = " << init_seed << "\n";
    os << "dataset = " << dataset << "\n";
    os << "final_train_loss = " << fmt_double(rec.final_train_loss()) << "\n";
    os << "max_train_loss = " << fmt_double(rec.final_max_sample_loss()) << "\n";
    os << "diverged = " << (rec.diverged ? "true" : "false") << "\n";
}

int cmd_train(const CliConfig& cfg, std::ostream& out) {
    const std::string dataset_dir = cfg.get_string("train.dataset");
    const std::string out_model = cfg.get_string("train.out_model");
    if (dataset_dir.empty()) throw ConfigError("train requires train.dataset (--dataset)");
    if (out_model.empty()) throw ConfigError("train requires train.out_model (--out-model)");

    const LoadedDataset ds = load_dataset(dataset_dir);
    if (ds.data.size() == 0) throw Error("train: dataset is empty");

    const std::size_t holdout_n = cfg.get_size("train.holdout");
    std::size_t train_n = cfg.get_size("train.train_size");
    if (train_n == 0) train_n = ds.data.size() - std::min(holdout_n, ds.data.size());
    if (train_n + holdout_n > ds.data.size())
        throw Error("train: train_size + holdout exceeds dataset size");

    Dataset train_set, holdout_set;
    train_set.samples.assign(ds.data.samples.begin(), ds.data.samples.begin() + train_n);
    if (holdout_n > 0)
        holdout_set.samples.assign(ds.data.samples.end() - holdout_n, ds.data.samples.end());

    NetworkSpec spec = spec_for_dataset(ds, cfg.get_size("model.base_channels"));
    const std::uint64_t init_seed = derive_seed(cfg.get_u64("run.seed"), 0x171ULL);
    NetworkParams params = init_params(spec, init_seed);

    FitOptions opts;
    opts.loss = parse_loss_kind(cfg.get_string("train.loss"));
    opts.optimizer = parse_optimizer_kind(cfg.get_string("train.opt"));
    opts.learning_rate = cfg.get_double("train.lr");
    opts.weight_decay = cfg.get_double("train.weight_decay");
    opts.epochs = cfg.get_size("train.epochs");
    opts.batch_size = cfg.get_size("train.batch");
    opts.seed = derive_seed(cfg.get_u64("run.seed"), 0x5f1eULL);
    opts.workers = cfg.effective_workers();

    const TrainRecord rec =
        fit(spec, params, train_set, holdout_n > 0 ? &holdout_set : nullptr, opts);
    save_model(spec, params, out_model);
    write_model_sidecar(out_model, cfg, opts, rec, train_n, init_seed, dataset_dir);

    out << "trained " << to_string(opts.loss) << "/" << to_string(opts.optimizer) << " for "
        << rec.epochs_run << " epochs on " << train_n << " samples\n";
    out << "final_train_loss = " << fmt_double(rec.final_train_loss()) << "\n";
    if (!rec.holdout_loss.empty())
        out << "final_holdout_loss = " << fmt_double(rec.holdout_loss.back()) << "\n";
    out << "max_train_loss = " << fmt_double(rec.final_max_sample_loss()) << "\n";
    out << "model = " << out_model << "\n";
    if (rec.diverged) out << "warning: training diverged, aborted early\n";
    return 0;
}

int cmd_certify(const CliConfig& cfg, std::ostream& out) {
    const std::string model_path = cfg.get_string("certify.model");
    const std::string dataset_dir = cfg.get_string("certify.dataset");
    if (model_path.empty()) throw ConfigError("certify requires certify.model (--model)");
    if (dataset_dir.empty()) throw ConfigError("certify requires certify.dataset (--dataset)");

    auto [spec, params] = load_model(model_path);
    const std::size_t limit = cfg.get_size("certify.test_size");
    const LoadedDataset ds = load_dataset(dataset_dir, limit);
    if (ds.data.size() == 0) throw Error("certify: dataset is empty");

    const NoiseSpec noise =
        NoiseSpec::eta(cfg.get_double("certify.eta"), derive_seed(cfg.get_u64("run.seed"), 0xE7A));
    const BoundReport rep = make_bound_report(
        spec, params, ds.data, parse_loss_kind(cfg.get_string("certify.loss")), noise,
        cfg.get_size("certify.draws"), cfg.get_u64("run.seed"), cfg.effective_workers());

    for (const auto& line : cfg.provenance()) out << "# " << line << "\n";
    out << rep.to_text();
    out << "\n" << BoundReport::csv_header() << "\n" << rep.csv_row() << "\n";
    return 0;
}

int cmd_perturb(const CliConfig& cfg, std::ostream& out) {
    const std::string mae_path = cfg.get_string("perturb.model_mae");
    const std::string mse_path = cfg.get_string("perturb.model_mse");
    const std::string dataset_dir = cfg.get_string("perturb.dataset");
    const std::string out_dir = cfg.get_string("perturb.out");
    if (mae_path.empty() || mse_path.empty())
        throw ConfigError("perturb requires perturb.model_mae and perturb.model_mse");
    if (dataset_dir.empty()) throw ConfigError("perturb requires perturb.dataset (--dataset)");
    if (out_dir.empty()) throw ConfigError("perturb requires perturb.out (--out)");

    auto [spec_mae, params_mae] = load_model(mae_path);
    auto [spec_mse, params_mse] = load_model(mse_path);
    const LoadedDataset ds = load_dataset(dataset_dir, cfg.get_size("perturb.test_size"));
    if (ds.data.size() == 0) throw Error("perturb: dataset is empty");

    RobustnessConfig rc;
    rc.spec_mae = &spec_mae;
    rc.params_mae = &params_mae;
    rc.spec_mse = &spec_mse;
    rc.params_mse = &params_mse;
    rc.test = &ds.data;
    for (const auto& s : cfg.get_list("perturb.snr")) rc.snr_levels.push_back(SnrLevel::parse(s));
    rc.draws_per_sample = cfg.get_size("perturb.draws");
    rc.seed = cfg.get_u64("run.seed");
    rc.workers = cfg.effective_workers();
    rc.provenance = cfg.provenance();

    const ReportTable table = run_robustness_suite(rc);
    fs::create_directories(out_dir);
    const fs::path csv = fs::path(out_dir) / "robustness.csv";
    write_report(table, csv, ReportFormat::csv);
    out << "wrote " << csv.string() << " (" << table.rows.size() << " rows)\n";
    return 0;
}

int cmd_generalize(const CliConfig& cfg, std::ostream& out) {
    const std::string dataset_dir = cfg.get_string("generalize.dataset");
    const std::string out_dir = cfg.get_string("generalize.out");
    if (dataset_dir.empty()) throw ConfigError("generalize requires generalize.dataset");
    if (out_dir.empty()) throw ConfigError("generalize requires generalize.out");

    const LoadedDataset ds = load_dataset(dataset_dir);
    GeneralizationConfig gc;
    gc.dataset = &ds;
    gc.test_size = cfg.get_size("generalize.test_size");
    gc.train_sizes = cfg.get_size_list("generalize.sizes");
    gc.base_channels = cfg.get_size_list("generalize.archs");
    gc.seeds_per_cell = std::max<std::size_t>(1, cfg.get_size("generalize.seeds"));
    gc.loss = parse_loss_kind(cfg.get_string("train.loss"));
    gc.epochs = cfg.get_size("train.epochs");
    gc.batch_size = cfg.get_size("train.batch");
    gc.seed = cfg.get_u64("run.seed");
    gc.workers = cfg.effective_workers();
    gc.provenance = cfg.provenance();

    const ReportTable table = run_generalization_suite(gc);
    fs::create_directories(out_dir);
    const fs::path csv = fs::path(out_dir) / "generalization.csv";
    write_report(table, csv, ReportFormat::csv);
    out << "wrote " << csv.string() << " (" << table.rows.size() << " rows)\n";
    return 0;
}

int cmd_drift(const CliConfig& cfg, std::ostream& out, std::ostream& err) {
    const std::string out_dir = cfg.get_string("drift.out");
    const std::vector<std::string> model_paths = cfg.get_list("drift.models");
    if (model_paths.empty()) throw ConfigError("drift requires drift.models");
    if (out_dir.empty()) throw ConfigError("drift requires drift.out");

    fs::create_directories(out_dir);
    const std::string sets_dir_cfg = cfg.get_string("drift.sets_dir");
    const fs::path sets_dir =
        sets_dir_cfg.empty() ? fs::path(out_dir) / "drift_sets" : fs::path(sets_dir_cfg);

    const std::size_t test_n = cfg.get_size("drift.test_size");
    const std::uint64_t seed = cfg.get_u64("run.seed");

    // Synthesize any missing drifted test set from the declared distribution.
    auto ensure_set = [&](const std::string& tag, int faults, double freq) {
        const fs::path dir = sets_dir / tag;
        if (!fs::exists(dir / "manifest")) {
            err << "drift: synthesizing missing test set " << dir.string() << "\n";
            const MapConfig mc = map_config_from(cfg, faults, freq);
            const AcquisitionConfig ac = acq_config_from(cfg, freq);
            const std::uint64_t set_seed =
                derive_seed(derive_seed(seed, static_cast<std::uint64_t>(faults)),
                            static_cast<std::uint64_t>(freq * 1000.0));
            build_dataset(dir, test_n, mc, ac, set_seed, cfg.provenance());
        }
        return dir;
    };

    std::vector<LoadedDataset> loaded;  // keep alive for the suite
    DriftConfig dc;
    dc.provenance = cfg.provenance();

    std::vector<std::string> fault_levels = cfg.get_list("drift.faults");
    std::vector<std::string> freq_levels = cfg.get_list("drift.freqs");
    const double base_freq = cfg.get_double("data.freq");

    loaded.reserve(fault_levels.size() + freq_levels.size());
    std::vector<std::pair<std::string, std::size_t>> fault_ids, freq_ids;
    for (const auto& f : fault_levels) {
        const int count = static_cast<int>(std::stol(f));
        loaded.push_back(load_dataset(ensure_set("faults_" + f, count, base_freq)));
        fault_ids.emplace_back(f, loaded.size() - 1);
    }
    for (const auto& f : freq_levels) {
        const double freq = std::stod(f);
        loaded.push_back(load_dataset(ensure_set("freq_" + f, 1, freq)));
        freq_ids.emplace_back(f, loaded.size() - 1);
    }
    for (const auto& [lvl, idx] : fault_ids)
        dc.fault_sets.emplace_back(lvl, &loaded[idx].data);
    for (const auto& [lvl, idx] : freq_ids) dc.freq_sets.emplace_back(lvl, &loaded[idx].data);

    for (const auto& path : model_paths) {
        DriftModel dm;
        auto [spec, params] = load_model(path);
        dm.spec = std::move(spec);
        dm.params = std::move(params);
        dm.id = fs::path(path).stem().string();

        std::ifstream side(path + ".prov", std::ios::binary);
        if (!side)
            throw Error("drift: missing sidecar " + path +
                        ".prov (train writes it next to the model)");
        std::stringstream ss;
        ss << side.rdbuf();
        const auto kv = parse_key_values(ss.str());
        dm.train_loss = std::stod(kv.at("final_train_loss"));
        dm.max_train_loss = std::stod(kv.at("max_train_loss"));
        dm.n_train = std::stoull(kv.at("n_train"));
        dm.loss = parse_loss_kind(kv.at("loss"));
        dc.models.push_back(std::move(dm));
    }

    const ReportTable table = run_drift_suite(dc);
    const fs::path csv = fs::path(out_dir) / "drift.csv";
    write_report(table, csv, ReportFormat::csv);
    out << "wrote " << csv.string() << " (" << table.rows.size() << " rows)\n";
    return 0;
}

int cmd_report(const CliConfig& cfg, std::ostream& out) {
    const std::string in_path = cfg.get_string("report.in");
    const std::string out_path = cfg.get_string("report.out");
    const std::string format = cfg.get_string("report.format");
    if (in_path.empty()) throw ConfigError("report requires report.in (--in)");
    if (out_path.empty()) throw ConfigError("report requires report.out (--out)");

    const ReportTable table = read_csv(in_path);
    if (format == "csv") write_report(table, out_path, ReportFormat::csv);
    else if (format == "svg") write_report(table, out_path, ReportFormat::svg_plot);
    else throw ConfigError("report.format must be csv or svg, got '" + format + "'");
    out << "wrote " << out_path << "\n";
    return 0;
}

} // namespace

std::string usage_text() {
    return "usage: fwicert <command> [flags]\n"
           "commands:\n"
           "  gen-data    synthesize a velocity-map/shot-gather dataset\n"
           "  train       train an encoder-decoder model on a dataset\n"
           "  certify     compute robustness certificates for a model\n"
           "  perturb     robustness suite: SNR sweep over mae/mse models\n"
           "  generalize  generalization suite over training sizes/widths\n"
           "  drift       distribution-drift suite over fault counts/frequencies\n"
           "  report      re-render a suite CSV as csv or svg\n"
           "run 'fwicert <command> --help' for flags.\n";
}

int dispatch(const std::string& command, const CliConfig& config, std::ostream& out,
             std::ostream& err) {
    try {
        if (command == "gen-data") return cmd_gen_data(config, out);
        if (command == "train") return cmd_train(config, out);
        if (command == "certify") return cmd_certify(config, out);
        if (command == "perturb") return cmd_perturb(config, out);
        if (command == "generalize") return cmd_generalize(config, out);
        if (command == "drift") return cmd_drift(config, out, err);
        if (command == "report") return cmd_report(config, out);
        err << usage_text();
        return 2;
    } catch (const std::exception& e) {
        err << "error: " << command << ": " << e.what() << "\n";
        return 1;
    }
}

} // namespace fwicert
