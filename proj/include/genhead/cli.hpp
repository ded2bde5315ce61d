#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "genhead/config_io.hpp"

namespace genhead {

enum class CommandKind { kTrainGan, kTrainSr, kCompare, kStats, kGradcheck };

std::string_view to_string(CommandKind kind);

enum class Regime { kGan, kSr };

struct Command {
  CommandKind kind = CommandKind::kGradcheck;
  RunConfig config;  // defaults, then config file, then flags
  std::optional<std::filesystem::path> config_path;
  std::filesystem::path out_dir;
  Regime regime = Regime::kGan;  // compare only
  std::size_t stats_size = kCifarSide;
  std::uint64_t gradcheck_seed = 2024;
  std::vector<std::string> argv;  // as given, for the manifest
};

// Bad command line or configuration. Maps to exit code 2.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

constexpr int kExitOk = 0;
constexpr int kExitFailed = 1;
constexpr int kExitUsage = 2;

// Throws UsageError on unknown flags, conflicting flags or an unreadable config.
// A --help request is reported through `help` with the help text filled in.
Command parse_args(int argc, const char* const* argv, std::string* help = nullptr);

// Runs a parsed command; returns the process exit code.
int dispatch(const Command& cmd, std::ostream& out, std::ostream& err);

// parse_args + dispatch with every error mapped to its exit code.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace genhead
