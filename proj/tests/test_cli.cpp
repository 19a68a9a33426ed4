#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>
#include <string>

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

std::string binary() {
    const char* b = std::getenv("STORAGE_PRICER_BIN");
    return b ? b : "storage-pricer";
}

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("storage_pricer_cli_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

// Runs the CLI with stdout/stderr captured into dir; returns the exit code.
int run(const std::string& args, const fs::path& dir, const std::string& env = "") {
    const std::string cmd = env + " " + binary() + " " + args + " > " + (dir / "stdout.txt").string() + " 2> " +
                            (dir / "stderr.txt").string();
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string first_line(const fs::path& p) {
    std::ifstream in(p);
    std::string l;
    std::getline(in, l);
    return l;
}

json manifest(const fs::path& dir) { return json::parse(slurp(dir / "manifest.json")); }

}  // namespace

TEST(Cli, DispatchWritesSolutionAndAudit) {
    const fs::path d = scratch("dispatch");
    ASSERT_EQ(run("dispatch --synthetic --epsilon 0.05 --out " + (d / "run1").string(), d), 0) << slurp(d / "stderr.txt");
    const fs::path r = d / "run1";
    ASSERT_TRUE(fs::exists(r / "solution.csv"));
    ASSERT_TRUE(fs::exists(r / "dual_audit.json"));
    EXPECT_EQ(first_line(r / "solution.csv"), "t,g,p,b,e,phi,psi,lambda,theta,pi");
    const json audit = json::parse(slurp(r / "dual_audit.json"));
    EXPECT_EQ(audit["status"], "Optimal");
    EXPECT_TRUE(audit["equilibrium"]["pass"].get<bool>());
    EXPECT_LE(audit["solver_residuals"]["stationarity"].get<double>(), 1e-7);
    const json m = manifest(r);
    EXPECT_EQ(m["exit_code"], 0);
    EXPECT_EQ(m["config"]["command"], "dispatch");
    EXPECT_DOUBLE_EQ(m["config"]["epsilon"].get<double>(), 0.05);
}

TEST(Cli, VerifyTheoryIsDeterministic) {
    const fs::path d = scratch("verify");
    const int a = run("verify-theory --seed 7 --out " + (d / "a").string(), d);
    const int b = run("verify-theory --seed 7 --out " + (d / "b").string(), d);
    EXPECT_EQ(a, b);
    EXPECT_TRUE(a == 0 || a == 3);
    const std::string ra = slurp(d / "a" / "theory_report.json");
    ASSERT_FALSE(ra.empty());
    EXPECT_EQ(ra, slurp(d / "b" / "theory_report.json"));
    EXPECT_EQ(slurp(d / "a" / "manifest.json"), slurp(d / "b" / "manifest.json"));
}

TEST(Cli, CompareWritesBothMechanisms) {
    const fs::path d = scratch("compare");
    ASSERT_EQ(run("compare --scenarios 200 --retire-frac 0.2 --out " + d.string(), d), 0) << slurp(d / "stderr.txt");
    std::ifstream in(d / "comparison.csv");
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line, "mechanism,scenario,storage_profit,gen_cost,system_cost,payment");
    int welfare = 0, bids = 0;
    while (std::getline(in, line)) {
        welfare += line.rfind("welfare,", 0) == 0;
        bids += line.rfind("bids,", 0) == 0;
    }
    const json s = json::parse(slurp(d / "comparison_summary.json"));
    const int ok = 200 - s["failures"].get<int>();
    EXPECT_EQ(welfare, ok);
    EXPECT_EQ(bids, ok);
    EXPECT_GT(ok, 0);
    EXPECT_DOUBLE_EQ(manifest(d)["config"]["synthetic"]["retire_frac"].get<double>(), 0.2);
}

TEST(Cli, UnknownFlagPrintsUsage) {
    const fs::path d = scratch("unknown");
    EXPECT_EQ(run("dispatch --no-such-flag --out " + d.string(), d), 1);
    EXPECT_NE(slurp(d / "stderr.txt").find("Usage:"), std::string::npos);
    EXPECT_EQ(run("--out " + d.string(), d), 1);  // no subcommand
    EXPECT_EQ(run("--help", d), 0);
}

TEST(Cli, ConfigFileWithFlagOverride) {
    const fs::path d = scratch("config");
    std::ofstream(d / "run.cfg") << "# risk settings\nepsilon=0.1\nstorage-ratio=0.05\nseed=11\n";
    ASSERT_EQ(run("dispatch --config " + (d / "run.cfg").string() + " --epsilon 0.01 --out " + (d / "o").string(), d), 0)
        << slurp(d / "stderr.txt");
    const json m = manifest(d / "o");
    EXPECT_DOUBLE_EQ(m["config"]["epsilon"].get<double>(), 0.01);
    EXPECT_DOUBLE_EQ(m["config"]["synthetic"]["storage_ratio"].get<double>(), 0.05);
    EXPECT_EQ(m["config"]["seed"], 11);

    std::ofstream(d / "bad.cfg") << "no-such-key=3\n";
    EXPECT_EQ(run("dispatch --config " + (d / "bad.cfg").string() + " --out " + (d / "p").string(), d), 1);
}

TEST(Cli, ExitCodesByFailureKind) {
    const fs::path d = scratch("codes");
    // Two system sources.
    EXPECT_EQ(run("dispatch --synthetic --fleet f.csv --out " + (d / "a").string(), d), 1);
    EXPECT_EQ(manifest(d / "a")["exit_code"], 1);
    // Out-of-range risk level.
    EXPECT_EQ(run("dispatch --epsilon 1.5 --out " + (d / "b").string(), d), 1);
    // Small storage cannot carry the reserve at three times the forecast error.
    EXPECT_EQ(run("dispatch --storage-ratio 0.02 --sigma-scale 3 --out " + (d / "c").string(), d), 2);
    EXPECT_TRUE(fs::exists(d / "c" / "dual_audit.json"));
    // A decreasing sweep grid is rejected.
    EXPECT_EQ(run("sweep --axis sigma --from 2 --to 0.5 --points 3 --out " + (d / "e").string(), d), 1);
}

TEST(Cli, ThreadsFallBackToEnvironment) {
    const fs::path d = scratch("threads");
    ASSERT_EQ(run("fit-dist --samples 2000 --out " + d.string(), d, "STORAGE_PRICER_THREADS=3"), 0);
    EXPECT_EQ(manifest(d)["threads"], 3);
    ASSERT_EQ(run("fit-dist --samples 2000 --threads 2 --out " + d.string(), d, "STORAGE_PRICER_THREADS=3"), 0);
    EXPECT_EQ(manifest(d)["threads"], 2);
}

TEST(Cli, CsvSystemIsReadNotModified) {
    const fs::path d = scratch("csv");
    std::ofstream(d / "fleet.csv") << "gen_id,capacity_mw,c0,c1,c2\n1,300,0,10,0.01\n2,300,0,20,0.02\n3,300,0,40,0.04\n";
    std::ofstream(d / "load.csv") << "t,d_mw\n1,300\n2,450\n3,600\n4,400\n";
    std::ofstream(d / "errors.csv") << "t,mu_mw,sigma_mw\n1,0,10\n2,0,12\n3,0,15\n4,0,10\n";
    const std::string before = slurp(d / "fleet.csv") + slurp(d / "load.csv") + slurp(d / "errors.csv");
    const std::string src = "--fleet " + (d / "fleet.csv").string() + " --load " + (d / "load.csv").string() +
                            " --errors " + (d / "errors.csv").string() + " --fit-degree 2 --p-max 50 --e-max 150";
    ASSERT_EQ(run("dispatch " + src + " --out " + (d / "o").string(), d), 0) << slurp(d / "stderr.txt");
    EXPECT_EQ(before, slurp(d / "fleet.csv") + slurp(d / "load.csv") + slurp(d / "errors.csv"));
    EXPECT_EQ(manifest(d / "o")["config"]["source"], "csv");
    int rows = 0;
    std::ifstream in(d / "o" / "solution.csv");
    for (std::string l; std::getline(in, l);) ++rows;
    EXPECT_EQ(rows, 5);
    // Capacity sweeps need the synthetic generator.
    EXPECT_EQ(run("sweep --axis capacity " + src + " --out " + (d / "s").string(), d), 1);
}

TEST(Cli, SweepAndViolationArtifacts) {
    const fs::path d = scratch("sweep");
    ASSERT_EQ(run("sweep --axis soc --points 5 --out " + (d / "soc").string(), d), 0) << slurp(d / "stderr.txt");
    EXPECT_EQ(first_line(d / "soc" / "sweep.csv"), "axis_value,theta,sup_theta,inf_theta,case_label,verdict");
    ASSERT_EQ(run("sweep --axis renewable --points 3 --out " + (d / "ren").string(), d), 0);
    EXPECT_EQ(first_line(d / "ren" / "sweep.csv"), "axis_value,status,system_cost,mean_lambda,mean_theta,reserve_cost");
    ASSERT_EQ(run("violations --samples 5000 --out " + (d / "v").string(), d), 0);
    EXPECT_TRUE(manifest(d / "v")["summary"]["pass"].get<bool>());
    ASSERT_EQ(run("baseline --scenarios 10 --out " + (d / "b").string(), d), 0);
    EXPECT_TRUE(fs::exists(d / "b" / "bids.csv"));
    EXPECT_TRUE(manifest(d / "b")["summary"]["concave"].get<bool>());
}

TEST(Cli, FitDistRecoversSyntheticTruth) {
    const fs::path d = scratch("fit");
    ASSERT_EQ(run("fit-dist --versatile-a 1.5 --versatile-b 2.5 --versatile-c 0.5 --seed 4 --out " + d.string(), d), 0);
    const json f = json::parse(slurp(d / "fit.json"));
    EXPECT_NEAR(f["params"]["a"].get<double>(), 1.5, 0.075);
    EXPECT_NEAR(f["params"]["b"].get<double>(), 2.5, 0.125);
    std::ofstream(d / "few.csv") << "error_mw\n1\n2\n";
    EXPECT_EQ(run("fit-dist --input " + (d / "few.csv").string() + " --out " + (d / "g").string(), d), 1);
}
