#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "srvsim/cli.hpp"

namespace fs = std::filesystem;

namespace
{
struct Outcome
{
    int code = 0;
    std::string out;
    std::string err;
};

Outcome invoke(std::vector<std::string> args)
{
    args.insert(args.begin(), "srvsim");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = srvsim::cli::main(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

std::string scenario(const std::string& name) { return std::string(SRVSIM_SCENARIO_DIR) + "/" + name + ".toml"; }

std::string slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string first_line(const fs::path& p)
{
    std::ifstream in(p);
    std::string line;
    std::getline(in, line);
    return line;
}

class Cli : public ::testing::Test
{
protected:
    void SetUp() override
    {
        dir = fs::temp_directory_path() /
            ("srvsim_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
        fs::remove_all(dir);
        unsetenv("SRV_SIM_SEED");
    }
    void TearDown() override
    {
        fs::remove_all(dir);
        unsetenv("SRV_SIM_SEED");
    }
    std::string sub(const std::string& name) const { return (dir / name).string(); }

    fs::path dir;
};
} // namespace

TEST_F(Cli, RunWithMemFenceStillLeaks)
{
    const auto r = invoke({"run", scenario("srv_leak"), "--mitigation=mem_fence", "--trials", "8", "--out", dir.string()});
    EXPECT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("accuracy: 1.0000"), std::string::npos) << r.out;
    EXPECT_NE(r.out.find("mitigation mem_fence"), std::string::npos);
    EXPECT_TRUE(fs::exists(dir / "srv_leak_report.txt"));
}

TEST_F(Cli, MissingScenarioFileExitsTwo)
{
    const auto r = invoke({"run", "/nonexistent/none.toml", "--out", dir.string()});
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("error"), std::string::npos);
}

TEST_F(Cli, UnknownMitigationListsValidNames)
{
    const auto r = invoke({"run", scenario("srv_leak"), "--mitigation=bogus", "--out", dir.string()});
    EXPECT_EQ(r.code, 2);
    for (auto m : srvsim::kAllMitigations) EXPECT_NE(r.err.find(srvsim::to_string(m)), std::string::npos) << r.err;
}

TEST_F(Cli, UnknownFlagAndUnknownEmitExitTwo)
{
    EXPECT_EQ(invoke({"run", scenario("srv_leak"), "--frobnicate"}).code, 2);
    EXPECT_EQ(invoke({"run", scenario("srv_leak"), "--emit=pdf", "--out", dir.string()}).code, 2);
    EXPECT_EQ(invoke({"run", scenario("srv_leak"), "--width=3", "--out", dir.string()}).code, 2);
    EXPECT_EQ(invoke({}).code, 2);
}

TEST_F(Cli, EmitTraceAndMldWriteVersionedJsonLines)
{
    const auto r = invoke({"run", scenario("srv_leak"), "--trials", "1", "--emit=trace,mld,csv,report", "--out", dir.string()});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(first_line(dir / "srv_leak_trace.jsonl"), R"({"format":"trace_v1"})");
    EXPECT_EQ(first_line(dir / "srv_leak_mld.jsonl"), R"({"format":"mld_v1"})");
    EXPECT_EQ(first_line(dir / "srv_leak_leak.csv"), "# srvsim leak_v1");
    EXPECT_EQ(first_line(dir / "srv_leak_report.txt"), "srvsim report_v1");
    const auto mld = slurp(dir / "srv_leak_mld.jsonl");
    EXPECT_NE(mld.find("mld_srv"), std::string::npos);
}

TEST_F(Cli, IdenticalInputsGiveByteIdenticalOutputs)
{
    const std::vector<std::string> base{"run", scenario("srv_leak"), "--trials", "4", "--jitter", "10", "--emit=trace,mld,csv,report"};
    auto a = base, b = base;
    a.insert(a.end(), {"--out", sub("a")});
    b.insert(b.end(), {"--out", sub("b")});
    ASSERT_EQ(invoke(a).code, 0);
    ASSERT_EQ(invoke(b).code, 0);
    for (const auto& f : fs::directory_iterator(dir / "a"))
        EXPECT_EQ(slurp(f.path()), slurp(dir / "b" / f.path().filename())) << f.path();
}

TEST_F(Cli, SeedPrecedenceFlagOverEnvironmentOverFile)
{
    auto amp = [&](std::vector<std::string> extra) {
        std::vector<std::string> args{"run", scenario("replay_amplification"), "--emit=report", "--out", dir.string()};
        args.insert(args.end(), extra.begin(), extra.end());
        const auto r = invoke(args);
        EXPECT_EQ(r.code, 0) << r.err;
        return r.out;
    };
    const auto seven = amp({"--seed", "7"});
    const auto eight = amp({"--seed", "8"});
    EXPECT_NE(seven, eight);
    setenv("SRV_SIM_SEED", "7", 1);
    EXPECT_EQ(amp({}), seven);
    EXPECT_EQ(amp({"--seed", "8"}), eight);
    setenv("SRV_SIM_SEED", "seven", 1);
    EXPECT_EQ(invoke({"run", scenario("replay_amplification"), "--out", dir.string()}).code, 2);
}

TEST_F(Cli, AmplificationRunReportsFifteenReplays)
{
    const auto r = invoke({"run", scenario("replay_amplification"), "--emit=csv,report", "--out", dir.string()});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("replays: 15"), std::string::npos);
    EXPECT_EQ(first_line(dir / "replay_amplification_amplification.csv"), "# srvsim amplification_v1");
}

TEST_F(Cli, DefaultMatrixHasTwentyEightCells)
{
    const auto r = invoke({"matrix", "--out", dir.string()});
    ASSERT_EQ(r.code, 0) << r.err;
    std::ifstream in(dir / "matrix.csv");
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line, "# srvsim matrix_v1");
    std::getline(in, line);
    unsigned rows = 0;
    while (std::getline(in, line)) ++rows;
    EXPECT_EQ(rows, 28u);
    EXPECT_EQ(first_line(dir / "matrix_report.txt"), "srvsim report_v1");
}

TEST_F(Cli, SingleCellMatrix)
{
    const auto r = invoke({"matrix", scenario("spectre_v1"), "--mitigations", "vfence", "--out", dir.string()});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto csv = slurp(dir / "matrix.csv");
    EXPECT_NE(csv.find("spectre_v1,vfence,64,1.0000,leak,1"), std::string::npos) << csv;
}

TEST_F(Cli, MatrixRejectsNonLeakScenario)
{
    EXPECT_EQ(invoke({"matrix", scenario("evict_time"), "--out", dir.string()}).code, 2);
}

TEST_F(Cli, SweepRecoversDefaultLlc)
{
    const auto r = invoke({"sweep", "--out", dir.string()});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("estimated LLC size: 32M"), std::string::npos) << r.out;
    EXPECT_EQ(first_line(dir / "latency.csv"), "# srvsim latency_v1");
}

TEST_F(Cli, SweepRejectsBadSizeLists)
{
    EXPECT_EQ(invoke({"sweep", "--sizes", "", "--out", dir.string()}).code, 2);
    EXPECT_EQ(invoke({"sweep", "--sizes", "8K,4K,16K", "--out", dir.string()}).code, 2);
    EXPECT_EQ(invoke({"sweep", "--sizes", "4Q", "--out", dir.string()}).code, 2);
}

TEST_F(Cli, SweepWithFlatTableReportsNoKnee)
{
    const auto r = invoke({"sweep", "--sizes", "4K,8K,16K", "--out", dir.string()});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("estimated LLC size: none"), std::string::npos) << r.out;
}

TEST_F(Cli, ListScenariosShowsShippedFiles)
{
    const auto r = invoke({"list-scenarios"});
    ASSERT_EQ(r.code, 0) << r.err;
    for (const char* n : {"srv_leak", "flexvec_gadget", "spectre_stl", "spectre_v1", "evict_time", "replay_amplification"})
        EXPECT_NE(r.out.find(n), std::string::npos) << n;
}

TEST_F(Cli, HelpExitsZero)
{
    const auto r = invoke({"--help"});
    EXPECT_EQ(r.code, 0);
    EXPECT_NE(r.out.find("matrix"), std::string::npos);
}
