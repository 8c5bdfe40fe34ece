// Drives the pixpatch executable end to end. PIXPATCH_BIN points at it.
#include <doctest.h>

#include <array>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <unistd.h>

namespace fs = std::filesystem;

namespace {

struct Result {
    int code = -1;
    std::string out;
};

const fs::path& work_root() {
    static const fs::path root = [] {
        fs::path p = fs::temp_directory_path() / ("pixpatch-cli-" + std::to_string(::getpid()));
        fs::remove_all(p);
        fs::create_directories(p);
        std::atexit([] {
            std::error_code ec;
            fs::remove_all(work_root(), ec);
        });
        return p;
    }();
    return root;
}

// Shared so the incident trace is recorded once per test run.
std::string smoke() {
    return "--preset smoke --set cache_dir=" + (work_root() / "cache").string() + " ";
}

Result pixpatch(const std::string& args) {
    const char* bin = std::getenv("PIXPATCH_BIN");
    REQUIRE(bin != nullptr);
    const std::string cmd = "cd '" + work_root().string() + "' && '" + bin + "' " + args + " 2>&1";
    Result r;
    FILE* pipe = ::popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    std::array<char, 4096> buf{};
    std::size_t n = 0;
    while ((n = std::fread(buf.data(), 1, buf.size(), pipe)) > 0) {
        r.out.append(buf.data(), n);
    }
    const int status = ::pclose(pipe);
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

bool contains(const std::string& s, const std::string& needle) {
    return s.find(needle) != std::string::npos;
}

} // namespace

TEST_CASE("design prints the reference seed") {
    const Result r = pixpatch("design --paper-seed");
    CHECK(r.code == 0);
    CHECK(contains(r.out, "patch_w = 0.0117\n"));
    CHECK(contains(r.out, "inset_depth = 0.00133\n"));
}

TEST_CASE("design from the closed-form formulas") {
    const Result r = pixpatch("design --fc 16e9 --eps-r 2.2 --h 0.76e-3");
    CHECK(r.code == 0);
    CHECK(contains(r.out, "patch_w = 0.00740646087984"));
    CHECK(contains(r.out, "patch_l = 0.00583715072630"));
    CHECK(contains(r.out, "inset_depth = 0.00216097851043"));
    CHECK(contains(r.out, "# eps_eff = 2.00166749430575"));
}

TEST_CASE("invalid design input exits 2 naming the key") {
    const Result r = pixpatch("design --fc 0");
    CHECK(r.code == 2);
    CHECK(contains(r.out, "fc"));
    CHECK(pixpatch("--no-such-flag").code == 2);
    CHECK(pixpatch("--set frobnicate=1 --print-config").code == 2);
    CHECK(pixpatch("--help").code == 0);
}

TEST_CASE("printed configuration round trips through a file") {
    const Result a = pixpatch("--preset smoke --set population=5 --set alpha=0.3 --print-config");
    REQUIRE(a.code == 0);
    CHECK(contains(a.out, "population = 5\n"));
    CHECK(contains(a.out, "alpha = 0.29999999999999999\n"));
    std::ofstream(work_root() / "printed.txt") << a.out;
    const Result b = pixpatch("--preset paper --config printed.txt --print-config");
    CHECK(b.code == 0);
    CHECK(b.out == a.out);
    const Result c = pixpatch("--config printed.txt --set population=7 --workers 3 --print-config");
    CHECK(contains(c.out, "population = 7\n"));
    CHECK(contains(c.out, "workers = 3\n"));
}

TEST_CASE("simulate the seed on the smoke grid") {
    const Result a = pixpatch(smoke() + "--output sim-a simulate --all-ones");
    const Result b = pixpatch(smoke() + "--output sim-b simulate --all-ones");
    REQUIRE(a.code == 0);
    REQUIRE(b.code == 0);
    const std::string csv = slurp(work_root() / "sim-a" / "s11.csv");
    CHECK(csv.size() > 1000);
    CHECK(csv == slurp(work_root() / "sim-b" / "s11.csv"));
    // Recorded baseline for this grid.
    CHECK(contains(a.out, "bw_hz=4.90996e+08 rl_min_db=-24.7692 f_min_hz=1.592e+10 fit=0.618134"));
}

TEST_CASE("chromosome files are checked before simulating") {
    std::string grid;
    for (int row = 0; row < 17; ++row) {
        grid += row == 2 ? "1111111111x111111\n" : "11111111111111111\n";
    }
    std::ofstream(work_root() / "bad-grid.txt") << grid;
    const Result r = pixpatch(smoke() + "--output sim-bad simulate --chromosome bad-grid.txt");
    CHECK(r.code == 2);
    CHECK(contains(r.out, "line 3, column 11"));
    CHECK(pixpatch(smoke() + "simulate --chromosome missing.txt").code == 4);
}

TEST_CASE("optimize, refuse a foreign checkpoint, then report") {
    const std::string cfg = smoke() + "--set population=4 --set generations=1 --output opt ";
    const Result run = pixpatch(cfg + "optimize");
    REQUIRE(run.code == 0);
    CHECK(contains(run.out, "best_fit="));
    for (const char* f : {"config.txt", "generations.csv", "checkpoint.txt", "best.txt", "seed_s11.csv",
                          "best_s11.csv", "grids/generation-000.txt", "grids/generation-001.txt"}) {
        CAPTURE(f);
        CHECK(fs::exists(work_root() / "opt" / f));
    }

    const Result foreign = pixpatch(cfg + "--set seed=7 optimize --resume");
    CHECK(foreign.code == 2);
    CHECK(contains(foreign.out, "fingerprint"));

    const Result rep = pixpatch("report opt");
    REQUIRE(rep.code == 0);
    const std::string log = slurp(work_root() / "opt" / "generations.csv");
    const std::string summary = slurp(work_root() / "opt" / "summary.csv");
    CHECK(summary == log);
    std::istringstream rows(summary);
    std::string line;
    std::getline(rows, line);
    CHECK(line == "generation,best_fit,mean_fit,best_bw_hz,best_rl_db");
    int count = 0;
    double max_best = 0.0;
    while (std::getline(rows, line)) {
        ++count;
        const auto a = line.find(',');
        const auto b = line.find(',', a + 1);
        max_best = std::max(max_best, std::stod(line.substr(a + 1, b - a - 1)));
    }
    CHECK(count == 2);
    const std::string text = slurp(work_root() / "opt" / "summary.txt");
    CHECK(contains(text, "generations      2\n"));
    std::ostringstream want;
    want << "max best_fit     " << max_best << "\n";
    CHECK(contains(text, want.str()));
    CHECK(fs::exists(work_root() / "opt" / "designs.csv"));
    CHECK(fs::exists(work_root() / "opt" / "comparison.csv"));
}

TEST_CASE("report on a missing or corrupt run exits 4") {
    CHECK(pixpatch("report no-such-run").code == 4);
    fs::create_directories(work_root() / "broken");
    std::ofstream(work_root() / "broken" / "config.txt") << "population = 4\n";
    std::ofstream(work_root() / "broken" / "generations.csv") << "generation,best_fit\n0,abc\n";
    CHECK(pixpatch("report broken").code == 4);
}
