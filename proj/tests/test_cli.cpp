#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sys/wait.h>

#include <json.hpp>
#include <pdelin/io.hpp>

namespace fs = std::filesystem;

namespace {

class Cli : public ::testing::Test {
protected:
    fs::path dir;

    void SetUp() override {
        dir = fs::temp_directory_path() / ("pdelin_cli_" + std::string(
                                                              ::testing::UnitTest::GetInstance()->current_test_info()->name()));
        fs::remove_all(dir);
        fs::create_directories(dir);
    }

    void write(const std::string& name, const std::string& text) const { std::ofstream(dir / name) << text; }

    int run(const std::string& args) const {
        const std::string cmd = "cd '" + dir.string() + "' && '" PDELIN_CLI "' " + args + " >log.txt 2>&1";
        const int status = std::system(cmd.c_str());
        return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    }

    std::string log() const { return pdelin::io::read_text(dir / "log.txt"); }

    static constexpr const char* volterra = "[problem]\ncase = volterra\n\n[simulate]\nn = 1e6\nseed = 7\n";
};

}  // namespace

TEST_F(Cli, SimulateWritesDataAndManifest) {
    write("v.ini", volterra);
    ASSERT_EQ(run("simulate v.ini -o a"), 0) << log();
    EXPECT_TRUE(fs::exists(dir / "a/observation.csv"));
    EXPECT_TRUE(fs::exists(dir / "a/observation.json"));
    const auto manifest = nlohmann::json::parse(pdelin::io::read_text(dir / "a/manifest.json"));
    EXPECT_EQ(manifest["seed"], 7);
    EXPECT_EQ(manifest["command"], "simulate");
    EXPECT_EQ(manifest["outputs"].size(), 2u);
}

TEST_F(Cli, SimulateIsDeterministic) {
    write("v.ini", volterra);
    ASSERT_EQ(run("simulate v.ini -o a"), 0);
    ASSERT_EQ(run("simulate v.ini -o b"), 0);
    EXPECT_EQ(pdelin::io::read_text(dir / "a/observation.csv"), pdelin::io::read_text(dir / "b/observation.csv"));
}

TEST_F(Cli, MissingKeyIsConfigError) {
    write("v.ini", "[problem]\ncase = volterra\n[simulate]\nseed = 1\n");
    EXPECT_EQ(run("simulate v.ini -o a"), 2);
    EXPECT_NE(log().find("simulate.n"), std::string::npos);
}

TEST_F(Cli, MalformedValueReportsLine) {
    write("v.ini", "[problem]\ncase = volterra\n[simulate]\nn = lots\n");
    EXPECT_EQ(run("simulate v.ini -o a"), 2);
    EXPECT_NE(log().find("v.ini:4"), std::string::npos) << log();
}

TEST_F(Cli, InferEbWritesTrace) {
    write("v.ini", volterra);
    ASSERT_EQ(run("simulate v.ini -o a"), 0);
    ASSERT_EQ(run("infer v.ini -o a --eb --draws 100"), 0) << log();
    const auto trace = pdelin::io::read_csv(dir / "a/eb_trace.csv");
    EXPECT_GE(trace.rows.size(), 64u);
    EXPECT_TRUE(fs::exists(dir / "a/bands.csv"));
    EXPECT_TRUE(fs::exists(dir / "a/posterior.csv"));
}

TEST_F(Cli, FixedAlphaSkipsTrace) {
    write("v.ini", volterra);
    ASSERT_EQ(run("simulate v.ini -o a"), 0);
    ASSERT_EQ(run("infer v.ini --data a/observation.csv -o b --alpha 1.0 --draws 100"), 0) << log();
    EXPECT_FALSE(fs::exists(dir / "b/eb_trace.csv"));
    EXPECT_TRUE(fs::exists(dir / "b/bands.csv"));
}

TEST_F(Cli, ConflictingPriorFlagsRejected) {
    write("v.ini", volterra);
    EXPECT_EQ(run("infer v.ini --alpha 1 --hb"), 2);
}

TEST_F(Cli, BasisMismatchIsConfigError) {
    write("v.ini", volterra);
    write("s.ini", "[problem]\ncase = schrodinger-1d-bump\n");
    ASSERT_EQ(run("simulate v.ini -o a"), 0);
    EXPECT_EQ(run("infer s.ini -o a --alpha 1"), 2);
}

TEST_F(Cli, FloorViolationIsDomainError) {
    write("v.ini", volterra);
    ASSERT_EQ(run("simulate v.ini -o a"), 0);
    EXPECT_EQ(run("infer v.ini -o a --alpha 1 --delta0 5 --draws 50"), 3);
    EXPECT_NE(log().find("minimum"), std::string::npos);
}

TEST_F(Cli, DesignDataRoundTrip) {
    write("d.ini", "[problem]\ncase = schrodinger-1d-bump\nintervals = 128\n[simulate]\nmodel = design\nn = 1e5\nm = 100\n");
    ASSERT_EQ(run("simulate d.ini -o a"), 0) << log();
    EXPECT_TRUE(fs::exists(dir / "a/design.csv"));
    ASSERT_EQ(run("infer d.ini -o a --alpha 1 --draws 100"), 0) << log();
}

TEST_F(Cli, UnknownStudyIsConfigError) { EXPECT_EQ(run("experiment bogus"), 2); }

TEST_F(Cli, DarcyRefinementStudyPasses) {
    ASSERT_EQ(run("experiment darcy-refinement -o r"), 0) << log();
    EXPECT_TRUE(fs::exists(dir / "r/refinement.csv"));
    EXPECT_TRUE(fs::exists(dir / "r/manifest.json"));
}

TEST_F(Cli, FailedAssertionsExitFour) {
    write("c.ini", "[experiment]\nn = 1e4, 1e5\nreps = 2\ndraws = 10\nbootstrap = 10\nnoiseless_n = 0\nalpha = 8\n");
    EXPECT_EQ(run("experiment contraction -c c.ini -o c"), 4) << log();
    EXPECT_NE(log().find("FAIL"), std::string::npos);
}

TEST_F(Cli, BasisAuditDumpsTable) {
    ASSERT_EQ(run("basis-audit volterra --max-index 5 -o b"), 0);
    const auto t = pdelin::io::read_csv(dir / "b/basis_volterra.csv");
    EXPECT_EQ(t.rows.size(), 5u);
    EXPECT_EQ(run("basis-audit nonsense"), 2);
}
