#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "brushtrace/baseline.h"
#include "brushtrace/model.h"
#include "brushtrace/training.h"

namespace brushtrace {

// Environment variable naming the default output directory.
inline constexpr const char* kOutDirEnv = "BRUSHTRACE_OUT";
inline constexpr const char* kDefaultOutDir = "brushtrace_out";

// Fully resolved parameters of one invocation. Precedence: command-line flag,
// then config file, then environment (output directory only), then default.
struct RunConfig {
    std::string command;
    std::string config_file;
    std::string manifest;
    std::string annotations;
    std::string posteriors;
    std::string out;
    std::uint64_t seed = 0;
    int threads = 1;
    int patch_size = kDefaultPatchSize;
    int stride = kDefaultStride;
    double tau = 0.2;
    int epochs = 100;
    double lr = 1e-4;
    double momentum = 0.9;
    int batch_size = 64;
    std::array<double, 3> alphas = kDefaultAlphas;
    std::string model_scale = "paper";
    bool augment = true;
    int eval_every = 1;
    std::string holdout;
    int single_patch_seeds = 0;
    int n_human = 6;
    int n_robot = 6;
    int n_hybrid = 3;
    int size = 900;
    int n_trees = 100;
    int max_depth = 16;
    int min_leaf = 5;
    std::string source;  // posterior source: "best" or "final"

    ModelConfig model_config() const;
    TrainConfig train_config() const;
    ForestConfig forest_config() const;
    // Only the keys the command uses, in a fixed order.
    nlohmann::json to_json() const;
};

// Keys each subcommand accepts (long flag names without dashes).
const std::vector<std::string>& command_keys(const std::string& command);
const std::vector<std::string>& command_names();

// Merges flag values over config-file values over defaults and validates.
// Throws UsageError for unknown keys or malformed values.
RunConfig resolve_run_config(const std::string& command, const std::map<std::string, std::string>& flags,
                             const std::map<std::string, std::string>& file_values,
                             const std::optional<std::string>& env_out);

// Entry point behind the brushtrace executable. Returns 0 on success, 2 on
// usage errors, 1 on any other failure; diagnostics go to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace brushtrace
