#include "catch_amalgamated.hpp"

#include "capfirm/cli.hpp"
#include "support/temp_dir.hpp"

#include <filesystem>
#include <sstream>

using namespace capfirm;
using Catch::Approx;
namespace fs = std::filesystem;

namespace {

struct Run {
    int code = 0;
    std::string out, err;
};

Run run(const std::vector<std::string>& args) {
    std::ostringstream out, err;
    Run r;
    r.code = cli::run_cli(args, out, err);
    r.out = out.str();
    r.err = err.str();
    return r;
}

// Value printed after `label ` on stdout.
double printed(const std::string& text, const std::string& label) {
    const auto pos = text.find(label + " ");
    REQUIRE(pos != std::string::npos);
    return std::stod(text.substr(pos + label.size() + 1));
}

// Every regular file of `a` exists in `b` with identical bytes.
void require_identical_dirs(const std::string& a, const std::string& b) {
    std::size_t n = 0;
    for (const auto& e : fs::directory_iterator(a)) {
        const auto other = fs::path(b) / e.path().filename();
        INFO(e.path().filename().string());
        REQUIRE(fs::exists(other));
        CHECK(io::slurp(e.path().string()) == io::slurp(other.string()));
        ++n;
    }
    CHECK(n == static_cast<std::size_t>(std::distance(fs::directory_iterator(b), fs::directory_iterator{})));
}

} // namespace

TEST_CASE("plan with perfect information, then evaluate: same objective", "[cli]") {
    test_support::TempDir dir;
    const auto data = dir.sub("data");
    REQUIRE(run({"synth-data", "--days", "2", "--seed", "3", "--out", data}).code == 0);
    const auto pv = data + "/pv.csv";
    const auto plan = run({"plan", "--input", pv, "--planner", "dstar", "--out", dir.sub("plan")});
    REQUIRE(plan.code == 0);
    const auto eval = run({"evaluate", "--input", pv, "--nominations", dir.sub("plan") + "/nominations.csv", "--out",
                           dir.sub("eval")});
    INFO(eval.err);
    REQUIRE(eval.code == 0);
    const double j = printed(plan.out, "objective");
    CHECK(printed(eval.out, "objective_eval") == Approx(j).epsilon(1e-6));
    CHECK(fs::exists(dir.sub("eval") + "/dispatch.csv"));
    CHECK(io::slurp(dir.sub("eval") + "/dispatch.csv").rfind(io::kDispatchHeader, 0) == 0);
}

TEST_CASE("evaluating nominations that break the ramp rule fails", "[cli]") {
    test_support::TempDir dir;
    REQUIRE(run({"synth-data", "--days", "1", "--out", dir.path()}).code == 0);
    std::string noms = "day,period,e_star_kwh\n";
    for (int t = 1; t <= 96; ++t) noms += "0," + std::to_string(t) + "," + (t == 40 ? "100" : "0") + "\n";
    const auto np = dir.write("noms.csv", noms);
    const auto r = run({"evaluate", "--input", dir.path() + "/pv.csv", "--nominations", np, "--out", dir.sub("o")});
    CHECK(r.code != 0);
    CHECK(r.err.find("RampViolation") != std::string::npos);
    CHECK(r.err.find("periods 39 and 40") != std::string::npos);
}

TEST_CASE("usage and input errors exit nonzero with a diagnostic", "[cli]") {
    test_support::TempDir dir;
    auto r = run({"plan", "--bogus", "1"});
    CHECK(r.code != 0);
    CHECK(r.err.find("--bogus") != std::string::npos);
    r = run({"plan", "--out", dir.path()});
    CHECK(r.code != 0);
    CHECK(r.err.find("input.pv") != std::string::npos);
    r = run({"plan", "--input", dir.path() + "/none.csv", "--out", dir.path()});
    CHECK(r.code != 0);
    CHECK(r.err.find("IoError") != std::string::npos);
    REQUIRE(run({"synth-data", "--days", "1", "--out", dir.path()}).code == 0);
    r = run({"plan", "--input", dir.path() + "/pv.csv", "--planner", "x", "--out", dir.path()});
    CHECK(r.code != 0);
    r = run({"plan", "--input", dir.path() + "/pv.csv", "--ramp-limit-kw", "-3", "--out", dir.path()});
    CHECK(r.code != 0);
    CHECK(r.err.find("NegativeParameter") != std::string::npos);
    r = run({"plan", "--input", dir.path() + "/pv.csv", "--planner", "d", "--out", dir.path()});
    CHECK(r.code != 0);
    CHECK(r.err.find("forecast") != std::string::npos);
    CHECK(run({"nope"}).code != 0);
}

TEST_CASE("configuration file and flags resolve in order", "[cli][config]") {
    test_support::TempDir dir;
    const auto cfg = dir.write("run.cfg", "[tender]\nramp_limit_kw = 150\n[bess]\ncapacity_kwh = 500\n[scenario]\neps_max = 0.25\n");
    const auto kv = cli::resolve("plan", io::load_key_values(cfg), {{"bess.capacity_kwh", "250"}});
    CHECK(kv.at("tender.ramp_limit_kw") == "150");
    CHECK(kv.count("tender.ramp_limit_percent") == 0);
    CHECK(kv.at("bess.capacity_kwh") == "250");
    CHECK(std::stod(kv.at("scenario.sigma")) == Approx(scenariogen::sigma_from_eps_max(0.25, 0.9)).epsilon(1e-15));
    CHECK(kv.count("scenario.eps_max") == 0);
    CHECK_THROWS_AS(cli::resolve("plan", {{"tender.colour", "red"}}, {}), Error);
    CHECK_THROWS_AS(cli::resolve("evaluate", {{"scenario.p", "0.5"}}, {}), Error);
}

TEST_CASE("every command reruns byte-identically from its manifest", "[cli][reproducibility]") {
    test_support::TempDir dir;
    const auto data = dir.sub("data");
    REQUIRE(run({"synth-data", "--days", "2", "--seed", "9", "--forecast-sigma", "0.05", "--out", data}).code == 0);
    const auto pv = data + "/pv.csv";
    const std::vector<std::vector<std::string>> commands{
        {"synth-data", "--days", "2", "--seed", "9", "--forecast-sigma", "0.05"},
        {"plan", "--input", pv, "--planner", "s", "--n-scenarios", "4", "--eps-max", "0.5", "--seed", "5"},
        {"plan", "--input", pv, "--planner", "d", "--forecast", data + "/forecast.csv", "--jobs", "2"},
        {"simulate", "--input", pv, "--planner", "s", "--n-scenarios", "3", "--sigma", "0.07"},
        {"sweep-bess", "--input", pv, "--cases", "1000,500,250,0"},
        {"gen-scenarios", "--input", pv, "--n-scenarios", "3", "--seed", "12"},
    };
    int k = 0;
    for (auto args : commands) {
        const auto first = dir.sub("run" + std::to_string(k));
        const auto second = dir.sub("again" + std::to_string(k));
        ++k;
        args.push_back("--out");
        args.push_back(first);
        INFO(args[0]);
        const auto a = run(args);
        INFO(a.err);
        REQUIRE(a.code == 0);
        const auto b = run({"rerun", "--manifest", first + "/manifest.txt", "--out", second});
        INFO(b.err);
        REQUIRE(b.code == 0);
        require_identical_dirs(first, second);
    }
}

TEST_CASE("rerun refuses changed inputs", "[cli][reproducibility]") {
    test_support::TempDir dir;
    REQUIRE(run({"synth-data", "--days", "1", "--out", dir.path()}).code == 0);
    const auto pv = dir.path() + "/pv.csv";
    REQUIRE(run({"plan", "--input", pv, "--out", dir.sub("a")}).code == 0);
    const auto manifest = io::slurp(dir.sub("a") + "/manifest.txt");
    CHECK(manifest.find("digest.input.pv = " + io::file_sha256(pv)) != std::string::npos);
    CHECK(manifest.find("tool.version") != std::string::npos);
    CHECK(manifest.find("scenario.seed") != std::string::npos);
    CHECK(manifest.find("solver.tol") != std::string::npos);
    io::write_file(pv, io::slurp(pv) + "\n");
    const auto r = run({"rerun", "--manifest", dir.sub("a") + "/manifest.txt", "--out", dir.sub("b")});
    CHECK(r.code != 0);
    CHECK(r.err.find("changed") != std::string::npos);
}

TEST_CASE("simulate and sweep write indicator tables", "[cli]") {
    test_support::TempDir dir;
    REQUIRE(run({"synth-data", "--days", "2", "--out", dir.path()}).code == 0);
    const auto pv = dir.path() + "/pv.csv";
    const auto sim = run({"simulate", "--input", pv, "--out", dir.sub("sim"), "--timing", dir.sub("t.csv")});
    REQUIRE(sim.code == 0);
    CHECK(sim.out.find("mean solve time per day") != std::string::npos);
    CHECK(fs::exists(dir.sub("t.csv")));
    CHECK(!fs::exists(dir.sub("sim") + "/timing.csv"));
    const auto ind = io::slurp(dir.sub("sim") + "/indicators.csv");
    CHECK(ind.rfind(io::kIndicatorHeader, 0) == 0);
    const auto sw = run({"sweep-bess", "--input", pv, "--out", dir.sub("sw")});
    REQUIRE(sw.code == 0);
    const auto sizing = io::load_key_values(dir.sub("sw") + "/sizing.txt");
    CHECK(sizing.count("capex") == 1);
    CHECK((sizing.count("size_kwh") == 1 || sizing.count("status") == 1));
    const auto rows = io::slurp(dir.sub("sw") + "/sweep.csv");
    CHECK(std::count(rows.begin(), rows.end(), '\n') == 6);
}
