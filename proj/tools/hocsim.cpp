// hocsim: command-line driver for the OFDM / PA-distortion receiver study.
//
//   hocsim sweep    --config cfg.json [--out results.csv]
//   hocsim point    --config cfg.json --ibo -4 --ebn0 34 --instance 0
//   hocsim terms    [--config cfg.json]
//   hocsim alpha    [--config cfg.json]
//   hocsim sparsity [--config cfg.json] [--ibo -4] [--frames 5000]

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "hoc/hoc.hpp"

namespace {

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty()) out.push_back(item);
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"OFDM reception under PA nonlinearity: ZF, CNC and higher-order combining"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    std::optional<std::string> receivers;
    std::optional<int> instances;
    std::optional<std::size_t> frames;
    app.add_option("--config", config_path, "experiment config (JSON)")->check(CLI::ExistingFile);
    app.add_option("--seed", seed, "master seed");
    app.add_option("--out", out, "output CSV path");
    app.add_option("--receivers", receivers, "comma-separated receiver ids (zf,cnc,hoc3,hoc5,hoc-full3,lchoc)");
    app.add_option("--instances", instances, "number of channel instances");
    app.add_option("--frames", frames, "training and test frames per instance (sparsity: training frames)");

    auto* sweep_cmd = app.add_subcommand("sweep", "run the (ibo x ebn0 x instance) grid and write CSV");
    auto* point_cmd = app.add_subcommand("point", "run a single (ibo, ebn0, instance) point");
    double point_ibo = -4.0, point_ebn0 = 34.0;
    int point_instance = 0;
    point_cmd->add_option("--ibo", point_ibo, "input back-off [dB]");
    point_cmd->add_option("--ebn0", point_ebn0, "Eb/N0 [dB]");
    point_cmd->add_option("--instance", point_instance, "channel instance index");
    auto* terms_cmd = app.add_subcommand("terms", "per-subcarrier IMD3/IMD5 term counts");
    auto* alpha_cmd = app.add_subcommand("alpha", "Bussgang gain per back-off");
    auto* sparsity_cmd = app.add_subcommand("sparsity", "rank the coefficients of the full third-order combiner");
    double sparsity_ibo = -4.0;
    int sparsity_sc = -1;
    sparsity_cmd->add_option("--ibo", sparsity_ibo, "input back-off [dB]");
    sparsity_cmd->add_option("--subcarrier", sparsity_sc, "report only this subcarrier position");

    CLI11_PARSE(app, argc, argv);

    try {
        hoc::ExperimentConfig cfg = config_path.empty() ? hoc::ExperimentConfig{} : hoc::load_config(config_path);
        if (seed) cfg.master_seed = *seed;
        if (out) cfg.output = *out;
        if (receivers) cfg.receivers = split_list(*receivers);
        if (instances) cfg.n_channel_instances = *instances;
        if (frames && !sparsity_cmd->parsed()) cfg.n_train_frames = cfg.n_test_frames = *frames;

        if (sweep_cmd->parsed()) {
            cfg.validate();
            if (const auto dir = std::filesystem::path(cfg.output).parent_path(); !dir.empty())
                std::filesystem::create_directories(dir);
            std::ofstream csv(cfg.output);
            if (!csv) throw std::runtime_error("cannot open output " + cfg.output);
            const auto res = hoc::sweep(cfg, &csv, hoc::default_cache_dir(cfg));
            for (const auto& s : res.summary)
                std::cerr << s.mean.receiver << " ibo=" << s.mean.ibo_db << " ebn0=" << s.mean.ebn0_db
                          << " ber_test=" << s.mean.ber_test << " ber_train=" << s.mean.ber_train << "\n";
        } else if (point_cmd->parsed()) {
            cfg.ibo_db = {point_ibo};
            cfg.ebn0_db = {point_ebn0};
            cfg.validate();
            const auto ctx = hoc::prepare_ibo(cfg, 0, hoc::default_cache_dir(cfg));
            const auto res = hoc::run_point(cfg, ctx, 0, point_instance);
            std::cout << hoc::kCsvHeader << "\n";
            for (const auto& r : res.records) std::cout << hoc::csv_row(cfg.experiment, r, std::to_string(r.instance)) << "\n";
        } else if (terms_cmd->parsed()) {
            std::cout << hoc::report_terms(cfg);
        } else if (alpha_cmd->parsed()) {
            std::cout << hoc::report_alpha(cfg);
        } else if (sparsity_cmd->parsed()) {
            const auto reps = hoc::run_sparsity(cfg, sparsity_ibo, frames.value_or(5000));
            for (const auto& rep : reps)
                if (sparsity_sc < 0 || rep.target == sparsity_sc) std::cout << rep.to_text() << "\n";
        }
    } catch (const std::exception& e) {
        std::cerr << "hocsim: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
