#include <iostream>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "fwicert/cli.hpp"
#include "fwicert/config.hpp"

using fwicert::CliConfig;

int main(int argc, char** argv) {
    CLI::App app{"fwicert: robustness and generalization certificates for FWI networks"};
    app.require_subcommand(0, 1);
    app.allow_extras();

    std::string config_path;
    app.add_option("--config", config_path, "INI config file (defaults < file < flags)");
    std::vector<std::string> set_args;
    app.add_option("--set", set_args, "extra overrides as section.key=value")->take_all();

    std::vector<std::pair<std::string, std::string>> overrides;
    auto g = [&overrides](CLI::App* cmd, const std::string& flag, std::string key,
                          const std::string& help) {
        cmd->add_option_function<std::string>(
            flag,
            [&overrides, key = std::move(key)](const std::string& v) {
                overrides.emplace_back(key, v);
            },
            help);
    };

    CLI::App* gen = app.add_subcommand("gen-data", "synthesize a dataset");
    g(gen, "--n", "data.n", "number of samples");
    g(gen, "--faults", "data.faults", "fault count 1..4");
    g(gen, "--freq", "data.freq", "source central frequency, Hz");
    g(gen, "--grid", "data.grid", "grid size (height = width)");
    g(gen, "--seed", "run.seed", "master seed");
    g(gen, "--out", "data.out", "output dataset directory");
    g(gen, "--nt-record", "data.nt_record", "recorded samples per trace (0 = grid)");
    g(gen, "--sources", "data.sources", "number of sources");

    CLI::App* train = app.add_subcommand("train", "train a model");
    g(train, "--dataset", "train.dataset", "dataset directory");
    g(train, "--loss", "train.loss", "mae|mse");
    g(train, "--opt", "train.opt", "sgd|adagrad|adamw");
    g(train, "--epochs", "train.epochs", "training epochs");
    g(train, "--batch", "train.batch", "batch size");
    g(train, "--lr", "train.lr", "learning rate (0 = optimizer default)");
    g(train, "--seed", "run.seed", "master seed");
    g(train, "--out-model", "train.out_model", "output model path (.fwb)");
    g(train, "--train-size", "train.train_size", "training samples (0 = all minus holdout)");
    g(train, "--holdout", "train.holdout", "held-out samples from the dataset tail");
    g(train, "--base-channels", "model.base_channels", "encoder width");

    CLI::App* certify = app.add_subcommand("certify", "robustness certificates");
    g(certify, "--model", "certify.model", "model path");
    g(certify, "--dataset", "certify.dataset", "dataset directory");
    g(certify, "--eta", "certify.eta", "l2 noise budget");
    g(certify, "--draws", "certify.draws", "Monte Carlo draws");
    g(certify, "--loss", "certify.loss", "mae|mse");
    g(certify, "--seed", "run.seed", "master seed");
    g(certify, "--test-size", "certify.test_size", "limit on samples used (0 = all)");

    CLI::App* perturb = app.add_subcommand("perturb", "SNR robustness suite");
    g(perturb, "--model-mae", "perturb.model_mae", "MAE-trained model path");
    g(perturb, "--model-mse", "perturb.model_mse", "MSE-trained model path");
    g(perturb, "--dataset", "perturb.dataset", "dataset directory");
    g(perturb, "--snr", "perturb.snr", "comma list, e.g. inf,30,20,10,0");
    g(perturb, "--out", "perturb.out", "output directory");
    g(perturb, "--seed", "run.seed", "master seed");
    g(perturb, "--draws", "perturb.draws", "noise draws per sample");
    g(perturb, "--test-size", "perturb.test_size", "test samples used");

    CLI::App* generalize = app.add_subcommand("generalize", "generalization suite");
    g(generalize, "--dataset", "generalize.dataset", "dataset directory");
    g(generalize, "--sizes", "generalize.sizes", "comma list of training sizes");
    g(generalize, "--archs", "generalize.archs", "comma list of encoder widths");
    g(generalize, "--out", "generalize.out", "output directory");
    g(generalize, "--seed", "run.seed", "master seed");
    g(generalize, "--seeds", "generalize.seeds", "seeds per cell");
    g(generalize, "--epochs", "train.epochs", "training epochs");

    CLI::App* drift = app.add_subcommand("drift", "distribution drift suite");
    g(drift, "--models", "drift.models", "comma list of trained model paths");
    g(drift, "--faults", "drift.faults", "comma list of fault counts");
    g(drift, "--freqs", "drift.freqs", "comma list of frequencies, Hz");
    g(drift, "--out", "drift.out", "output directory");
    g(drift, "--seed", "run.seed", "master seed");
    g(drift, "--test-size", "drift.test_size", "samples per drifted set");
    g(drift, "--sets-dir", "drift.sets_dir", "directory for drifted test sets");

    CLI::App* report = app.add_subcommand("report", "re-render a suite CSV");
    g(report, "--in", "report.in", "input CSV path");
    g(report, "--out", "report.out", "output path");
    g(report, "--format", "report.format", "csv|svg");

    for (CLI::App* sub : {gen, train, certify, perturb, generalize, drift, report})
        sub->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    const auto subs = app.get_subcommands();
    if (subs.empty()) {
        if (!app.remaining().empty()) {
            std::cerr << fwicert::usage_text();
            return 2;
        }
        std::cout << fwicert::usage_text();
        return 0;
    }

    try {
        CliConfig cfg =
            config_path.empty() ? CliConfig::defaults() : CliConfig::from_file(config_path);
        for (const auto& s : set_args) {
            const auto eq = s.find('=');
            if (eq == std::string::npos) {
                std::cerr << "error: --set expects section.key=value, got '" << s << "'\n";
                return 1;
            }
            overrides.emplace_back(s.substr(0, eq), s.substr(eq + 1));
        }
        for (const auto& [key, value] : overrides) cfg.override_key(key, value);
        return fwicert::dispatch(subs.front()->get_name(), cfg, std::cout, std::cerr);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
