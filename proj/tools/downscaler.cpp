#include <CLI11.hpp>

#include "downscaler/cli/commands.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Stochastic precipitation downscaling testbed: synthetic data generation, "
                 "CVAE and per-site Bernoulli-Gamma baselines, sampling and spatial evaluation"};
    app.require_subcommand(1);

    std::string config_path, out_path;
    auto* gen = app.add_subcommand("gen-data", "Generate a synthetic downscaling dataset");
    gen->add_option("--config", config_path, "Run configuration file")->required();
    gen->add_option("--out", out_path, "Output dataset path (DSET)")->required();

    std::string train_model, data_path, ckpt_out, loss_csv;
    auto* train = app.add_subcommand("train", "Train a model on the training slice");
    train->add_option("--model", train_model, "Model to train: cvae or baseline")->required();
    train->add_option("--data", data_path, "Dataset path (DSET)")->required();
    train->add_option("--config", config_path, "Run configuration file")->required();
    train->add_option("--ckpt-out", ckpt_out, "Checkpoint output path (CKPT)")->required();
    train->add_option("--loss-csv", loss_csv,
                      "Per-epoch loss CSV path (default: <ckpt-out>.loss.csv)");

    std::string ckpt_path, pgm_dir;
    int num_samples = 3;
    int pgm_day = 0;
    std::uint64_t seed = 1;
    auto* sample = app.add_subcommand("sample", "Sample fields over the test slice");
    sample->add_option("--ckpt", ckpt_path, "Checkpoint path")->required();
    sample->add_option("--data", data_path, "Dataset path (DSET)")->required();
    sample->add_option("--num-samples", num_samples, "Ensemble members per test day (default 3)");
    sample->add_option("--seed", seed, "Sampling seed (default 1)");
    sample->add_option("--out", out_path, "Output samples path (DSET)")->required();
    sample->add_option("--pgm-dir", pgm_dir, "Directory for PGM maps of one test day");
    sample->add_option("--pgm-day", pgm_day, "Test-relative day index for the maps (default 0)");

    std::string truth_path, cvae_samples, baseline_samples;
    auto* evaluate = app.add_subcommand("evaluate", "Compare sample sets against the truth");
    evaluate->add_option("--truth", truth_path, "Truth dataset path (DSET)")->required();
    evaluate->add_option("--cvae", cvae_samples, "CVAE samples path (DSET)")->required();
    evaluate->add_option("--baseline", baseline_samples, "Baseline samples path (DSET)")
        ->required();
    evaluate->add_option("--out", out_path, "Report CSV output path")->required();
    evaluate->add_option("--config", config_path, "Run configuration file (optional)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return downscaler::cli::kExitConfig;
    }

    if (gen->parsed()) return downscaler::cli::cmd_gen_data(config_path, out_path);
    if (train->parsed())
        return downscaler::cli::cmd_train(train_model, data_path, config_path, ckpt_out, loss_csv);
    if (sample->parsed())
        return downscaler::cli::cmd_sample(ckpt_path, data_path, num_samples, seed, out_path,
                                           pgm_dir, pgm_day);
    if (evaluate->parsed())
        return downscaler::cli::cmd_evaluate(truth_path, cvae_samples, baseline_samples, out_path,
                                             config_path);
    return downscaler::cli::kExitConfig;
}
