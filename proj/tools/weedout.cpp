#include <iostream>

#include "CLI11.hpp"
#include "weedout/cli.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Random search over sparse sub-networks of a randomly initialized parent"};
    app.require_subcommand(1);

    weedout::RunArgs run;
    std::string out;
    auto* run_cmd = app.add_subcommand("run", "run or resume a sweep");
    run_cmd->add_option("--config", run.config, "experiment config (JSON)")->required();
    run_cmd->add_option("--out", out, "sweep directory (default: $WEEDOUT_RUNS_DIR or output_dir, plus name)");
    run_cmd->add_option("--parallel", run.parallel, "fitness evaluation threads")->capture_default_str();
    run_cmd->add_flag("--resume,!--no-resume", run.resume, "skip cells that already completed")
        ->capture_default_str();
    run_cmd->add_option("--seed-offset", run.seed_offset, "added to every seed in the config")
        ->capture_default_str();

    std::string report_dir;
    auto* report_cmd = app.add_subcommand("report", "aggregate a sweep directory");
    report_cmd->add_option("dir", report_dir, "sweep directory")->required();

    std::string inspect_dir;
    auto* inspect_cmd = app.add_subcommand("inspect", "summarize one run directory");
    inspect_cmd->add_option("dir", inspect_dir, "run directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : weedout::kExitInvalid;
    }

    if (*run_cmd) {
        if (!out.empty()) run.out = out;
        return weedout::cmd_run(run, std::cout, std::cerr);
    }
    if (*report_cmd) return weedout::cmd_report(report_dir, std::cout, std::cerr);
    return weedout::cmd_inspect(inspect_dir, std::cout, std::cerr);
}
