#ifndef NEGMEM_CLI_HPP_
#define NEGMEM_CLI_HPP_

#include <filesystem>
#include <string>
#include <string_view>

#include "negmem/error.hpp"
#include "negmem/eval.hpp"

namespace negmem {

struct LoadedConfig {
  ExperimentConfig config;
  std::string digest;     // sha256 of the canonical document minus output_dir/workers
  std::string canonical;  // canonical JSON text
};

/// Parses an experiment config (JSON). Relative data paths resolve against
/// `base_dir`. Unknown keys and type mismatches raise ConfigError naming the
/// field. NEGMEM_OUTPUT_DIR and NEGMEM_WORKERS override output_dir and
/// workers.
LoadedConfig parse_config(std::string_view text, const std::filesystem::path& base_dir);
LoadedConfig load_config(const std::filesystem::path& path);

/// 1 for configuration errors, 2 for data errors, 3 otherwise.
int exit_code_for(ErrorCode code);

/// Entry point of the `negmem` command line tool.
int run_cli(int argc, const char* const* argv);

}  // namespace negmem

#endif  // NEGMEM_CLI_HPP_
