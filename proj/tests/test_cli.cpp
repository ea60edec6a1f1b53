// Exercises the installed CLI binary end to end: subcommands, file outputs
// and the documented exit codes (0 ok, 2 config, 3 numerical, 4 contract).
// Usage: drawq_cli_tests <path-to-drawq-binary>

#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

namespace fs = std::filesystem;

namespace {

int failures = 0;

void check(bool ok, const std::string& what) {
    if (!ok) {
        ++failures;
        std::cerr << "FAILED: " << what << '\n';
    }
}

int run(const std::string& cmd) {
    const int status = std::system((cmd + " >/dev/null 2>&1").c_str());
    if (status == -1 || !WIFEXITED(status)) return -1;
    return WEXITSTATUS(status);
}

}  // namespace

int main(int argc, char** argv) {
    if (argc < 2) {
        std::cerr << "usage: drawq_cli_tests <drawq-binary>\n";
        return 2;
    }
    const std::string bin = argv[1];
    const fs::path tmp = "cli_test_tmp";
    fs::remove_all(tmp);
    fs::create_directories(tmp);

    const std::string out = (tmp / "run").string();
    const std::string cfg_path = (tmp / "run.cfg").string();
    {
        std::ofstream cfg(cfg_path);
        cfg << "episodes=50\nmax_iterations=20\nrestarts=1\nthreads=2\nseed=7\n";
    }

    check(run(bin + " calibrate --out " + out + " --seed 7") == 0, "calibrate exits 0");
    check(fs::exists(fs::path(out) / "calibration.txt"), "calibrate writes calibration.txt");

    check(run(bin + " oracle --out " + out + " --seed 7") == 0, "oracle exits 0");
    check(fs::exists(fs::path(out) / "oracle_summary.csv"), "oracle writes oracle_summary.csv");

    check(run(bin + " train --config " + cfg_path + " --out " + out) == 0, "train exits 0");
    check(fs::exists(fs::path(out) / "metrics.csv"), "train writes metrics.csv");
    check(fs::exists(fs::path(out) / "ensemble.txt"), "train writes ensemble.txt");

    check(run(bin + " evaluate --config " + cfg_path + " --out " + out) == 0, "evaluate exits 0");
    check(fs::exists(fs::path(out) / "evaluation.csv"), "evaluate writes evaluation.csv");

    // exit codes
    {
        std::ofstream bad((tmp / "bad.cfg").string());
        bad << "alpha=two\n";
    }
    check(run(bin + " train --config " + (tmp / "bad.cfg").string()) == 2,
          "malformed config exits 2");
    {
        std::ofstream bad((tmp / "unknown.cfg").string());
        bad << "not_a_key=1\n";
    }
    check(run(bin + " train --config " + (tmp / "unknown.cfg").string()) == 2,
          "unknown config key exits 2");
    check(run(bin + " train --config " + (tmp / "missing.cfg").string()) == 2,
          "missing config exits 2");
    check(run(bin + " frobnicate") != 0, "unknown subcommand fails");
    check(run(bin + " train --scenario sideways") == 2, "bad scenario flag exits 2");
    check(run(bin + " evaluate --out " + (tmp / "empty").string()) != 0,
          "evaluate without an ensemble fails");

    // small oracle with the matrix export
    check(run(bin + " oracle --out " + out + " --seed 7 --matrix") == 0, "oracle --matrix");
    check(fs::exists(fs::path(out) / "reward_matrix.csv"), "oracle writes reward_matrix.csv");

    fs::remove_all(tmp);
    if (failures == 0) {
        std::cout << "all cli checks passed\n";
        return 0;
    }
    std::cerr << failures << " cli checks failed\n";
    return 1;
}
