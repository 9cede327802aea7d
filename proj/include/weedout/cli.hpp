#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

namespace weedout {

inline constexpr int kExitOk = 0;
inline constexpr int kExitCellFailure = 1;
inline constexpr int kExitInvalid = 2;

struct RunArgs {
    std::filesystem::path config;
    std::optional<std::filesystem::path> out;  // sweep directory; overrides everything else
    std::size_t parallel = 1;                  // fitness evaluation threads
    bool resume = true;
    std::uint64_t seed_offset = 0;
};

/// Sweep directory for a config: --out if given, else
/// ($WEEDOUT_RUNS_DIR or the config's output_dir) / name.
std::filesystem::path resolve_sweep_dir(const std::filesystem::path& output_dir, const std::string& name,
                                        const std::optional<std::filesystem::path>& out);

int cmd_run(const RunArgs& args, std::ostream& out, std::ostream& err);

/// Writes aggregate.csv, plot.csv and comparison.csv into the sweep
/// directory and prints the comparison table.
int cmd_report(const std::filesystem::path& dir, std::ostream& out, std::ostream& err);

int cmd_inspect(const std::filesystem::path& dir, std::ostream& out, std::ostream& err);

}  // namespace weedout
