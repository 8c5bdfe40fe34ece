#pragma once

#include "pixpatch/config.hpp"
#include "pixpatch/evolve.hpp"

#include <filesystem>
#include <iosfwd>

namespace pixpatch {

struct OptimizeOptions {
    bool resume = false;
    std::filesystem::path checkpoint;  // empty: <out_dir>/checkpoint.txt
    /// Stop after this generation even if the budget is larger (negative: no limit).
    /// Used to emulate an interrupted run.
    long stop_after = -1;
    bool write_spectra = true;
};

/// Runs (or resumes) the GA in `out_dir`, writing generations.csv, per-generation
/// grids, checkpoint.txt and, at the end, seed/best S11 files. Progress goes to `log`.
GAState optimize(const RunConfig& cfg, const std::filesystem::path& out_dir, const OptimizeOptions& options,
                 std::ostream& log);

/// Reads an optimize output directory and writes summary.txt, summary.csv (one row per
/// generation), designs.csv and comparison.csv (seed vs best S11).
void report(const std::filesystem::path& dir, std::ostream& out);

/// Entry point of the command-line tool; returns the process exit code.
int run_cli(int argc, char** argv);

} // namespace pixpatch
