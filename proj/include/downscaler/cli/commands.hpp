#ifndef DOWNSCALER_CLI_COMMANDS_HPP
#define DOWNSCALER_CLI_COMMANDS_HPP

#include <cstdint>
#include <string>

namespace downscaler::cli {

// Exit codes shared by every command.
constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;  // bad config / unknown key / bad CLI usage
constexpr int kExitData = 3;    // corrupt or incompatible data / shape clash
constexpr int kExitNumeric = 4; // numeric failure during training

// Each command validates all inputs before creating any output file and
// returns one of the exit codes above; errors go to stderr.

int cmd_gen_data(const std::string& config_path, const std::string& out_path);

int cmd_train(const std::string& model, const std::string& data_path,
              const std::string& config_path, const std::string& ckpt_out,
              const std::string& loss_csv);

int cmd_sample(const std::string& ckpt_path, const std::string& data_path, int num_samples,
               std::uint64_t seed, const std::string& out_path, const std::string& pgm_dir,
               int pgm_day);

int cmd_evaluate(const std::string& truth_path, const std::string& cvae_samples_path,
                 const std::string& baseline_samples_path, const std::string& report_out,
                 const std::string& config_path);

} // namespace downscaler::cli

#endif
