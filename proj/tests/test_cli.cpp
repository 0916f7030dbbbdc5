#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "m4l/io.hpp"

namespace fs = std::filesystem;

namespace {

const char* kCli = M4L_CLI_PATH;

struct TempDir {
    fs::path path;
    TempDir() {
        static int counter = 0;
        path = fs::temp_directory_path() /
               ("m4l_cli_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

int run(const std::string& args) {
    const std::string cmd = std::string(kCli) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("exit codes are stable") {
    CHECK(run("") == 2);                                 // usage: no subcommand
    CHECK(run("fit") == 2);                              // usage: missing --manifest
    CHECK(run("fit --manifest /nonexistent.mf") == 3);   // data: file missing
    CHECK(run("--help") == 0);
}

TEST_CASE("synth, fit, cv round trip on disk") {
    TempDir dir;
    const std::string data = (dir.path / "data").string();
    REQUIRE(run("synth --out " + data +
                " --bags 16 --instances 32 --labels 6 --rank 2 --seed 7") == 0);
    REQUIRE(fs::exists(dir.path / "data" / "manifest.mf"));
    REQUIRE(fs::exists(dir.path / "data" / "synth.run.txt"));

    // the dataset loads and validates through the library path as well
    m4l::FusionGraph g = m4l::loadGraph(dir.path / "data" / "manifest.mf");
    CHECK(g.numTypes() == 3);

    const std::string model = (dir.path / "model.txt").string();
    const std::string scores = (dir.path / "scores.txt").string();
    REQUIRE(run("fit --manifest " + data + "/manifest.mf --rank 3 --max-iters 15 --seed 1 " +
                "--out " + model + " --scores-out " + scores) == 0);
    m4l::FactorModel fitted = m4l::loadModel(model);
    CHECK(!fitted.history.empty());
    CHECK(fs::exists(model + ".run.txt"));
    m4l::Dense s = m4l::readDenseFile(scores, true);
    CHECK(s.rows() == 16);
    CHECK(s.cols() == 6);

    const std::string report = (dir.path / "report.txt").string();
    REQUIRE(run("cv --manifest " + data + "/manifest.mf --rank 3 --max-iters 10 " +
                "--folds 3 --rounds 2 --seed 1 --out " + report) == 0);
    auto samples = m4l::loadReportSamples(report);
    CHECK(samples.size() == 6);

    // paired comparison against our own report: identical, never significant
    const std::string report2 = (dir.path / "report2.txt").string();
    REQUIRE(run("cv --manifest " + data + "/manifest.mf --rank 3 --max-iters 10 " +
                "--folds 3 --rounds 2 --seed 1 --compare " + report + " --out " + report2) == 0);
    const std::string text = slurp(report2);
    CHECK(text.find("compare report") != std::string::npos);
    CHECK(text.find("significant 0") != std::string::npos);
}

TEST_CASE("dfmf mode runs the degenerate configuration") {
    TempDir dir;
    const std::string data = (dir.path / "data").string();
    REQUIRE(run("synth --out " + data + " --bags 12 --instances 24 --labels 5 --seed 3") == 0);
    const std::string model = (dir.path / "m.txt").string();
    CHECK(run("fit --manifest " + data + "/manifest.mf --mode dfmf --rank 2 --max-iters 8 "
              "--out " + model) == 0);
    CHECK(run("fit --manifest " + data + "/manifest.mf --mode bogus --rank 2 --out " + model) ==
          3);
}

TEST_CASE("synth is reproducible for a fixed seed") {
    TempDir dir;
    const std::string a = (dir.path / "a").string();
    const std::string b = (dir.path / "b").string();
    REQUIRE(run("synth --out " + a + " --seed 7 --noise-relations 3") == 0);
    REQUIRE(run("synth --out " + b + " --seed 7 --noise-relations 3") == 0);

    int relationSections = 0;
    for (const auto& entry : fs::directory_iterator(a)) {
        if (entry.path().filename() == "synth.run.txt") continue;  // has timing
        if (!entry.is_regular_file()) continue;
        CHECK(slurp(entry.path()) == slurp(fs::path(b) / entry.path().filename()));
    }
    const std::string manifest = slurp(fs::path(a) / "manifest.mf");
    std::size_t at = 0;
    while ((at = manifest.find("[relation]", at)) != std::string::npos) {
        ++relationSections;
        ++at;
    }
    CHECK(relationSections == 5);  // membership, supervision, three noise relations
}

TEST_CASE("sweep emits one row per grid cell") {
    TempDir dir;
    const std::string data = (dir.path / "data").string();
    REQUIRE(run("synth --out " + data +
                " --bags 12 --instances 24 --labels 5 --rank 2 --seed 5") == 0);
    const std::string table = (dir.path / "sweep.tsv").string();
    REQUIRE(run("sweep --manifest " + data + "/manifest.mf --rank 2 --max-iters 6 "
                "--alphas 1,10 --betas 1,100 --folds 2 --rounds 1 --jobs 2 --out " + table) == 0);
    std::ifstream in(table);
    std::string line;
    int rows = 0;
    std::getline(in, line);
    CHECK(line == "alpha\tbeta\td\tauroc_mean\tauroc_std\tstatus");
    while (std::getline(in, line))
        if (!line.empty()) ++rows;
    CHECK(rows == 4);

    const std::string dTable = (dir.path / "dsweep.tsv").string();
    REQUIRE(run("sweep --manifest " + data + "/manifest.mf --max-iters 6 --param d "
                "--values 2,3,4 --folds 2 --rounds 1 --out " + dTable) == 0);
    std::ifstream din(dTable);
    rows = 0;
    std::getline(din, line);
    while (std::getline(din, line))
        if (!line.empty()) ++rows;
    CHECK(rows == 3);
}
