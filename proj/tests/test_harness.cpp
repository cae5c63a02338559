#include "tpmb/harness.hpp"
#include "tpmb/selftest.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace tpmb;
using nlohmann::json;

namespace {

std::filesystem::path temp_dir() {
    auto p = std::filesystem::temp_directory_path() /
             ("tpmb_harness_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) + "_" +
              ::testing::UnitTest::GetInstance()->current_test_info()->name());
    std::filesystem::create_directories(p);
    return p;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::size_t count_lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

json minimal_config() {
    return json::parse(R"({
        "schema_version": 1,
        "scenario": {"preset": "scenario1", "horizon": 12},
        "filters": [{"variant": "tpmb-alive"}],
        "runs": 2,
        "base_seed": 3
    })");
}

std::string config_error(const json& j) {
    try {
        campaign_from_json(j);
    } catch (const ConfigError& e) {
        return e.what();
    }
    return "";
}

CampaignConfig single_target_campaign() {
    CampaignConfig c;
    c.scenario = scenario1_config();
    c.scenario.models.sensor.p_detect = 1.0;
    c.scenario.models.sensor.clutter_rate = 0.0;
    Vector x(4);
    x << 50.0, 1.0, 80.0, 0.5;
    c.scenario.script = {{1, std::nullopt, x}};
    c.filters = {{FilterKind::TpmbAlive, FilterParams{}, ""}};
    c.runs = 1;
    return c;
}

void expect_same_metrics(const ResultTable& a, const ResultTable& b) {
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(a[i].filter, b[i].filter);
        EXPECT_EQ(a[i].sweep_key, b[i].sweep_key);
        EXPECT_EQ(a[i].sweep_value, b[i].sweep_value);
        EXPECT_EQ(a[i].L, b[i].L);
        EXPECT_EQ(a[i].d_T, b[i].d_T);
        EXPECT_EQ(a[i].loc, b[i].loc);
        EXPECT_EQ(a[i].missed, b[i].missed);
        EXPECT_EQ(a[i].false_targets, b[i].false_targets);
        EXPECT_EQ(a[i].d, b[i].d);
    }
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string(TPMB_CLI_PATH) + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(Config, MinimalConfigParses) {
    const auto c = campaign_from_json(minimal_config());
    EXPECT_EQ(c.scenario.horizon, 12);
    EXPECT_EQ(c.runs, 2);
    EXPECT_EQ(c.base_seed, 3u);
    ASSERT_EQ(c.filters.size(), 1u);
    EXPECT_EQ(c.filters[0].kind, FilterKind::TpmbAlive);
    EXPECT_EQ(c.filters[0].params.scan_length, FilterParams{}.scan_length);
    EXPECT_EQ(c.sweep_points().size(), 1u);
}

TEST(Config, ErrorsCarryFieldPaths) {
    auto j = minimal_config();
    j.erase("schema_version");
    EXPECT_EQ(config_error(j).rfind("schema_version", 0), 0u);

    j = minimal_config();
    j["schema_version"] = 2;
    EXPECT_EQ(config_error(j).rfind("schema_version", 0), 0u);

    j = minimal_config();
    j["filters"][0]["variant"] = "tpmbm";
    EXPECT_EQ(config_error(j).rfind("filters[0].variant", 0), 0u);

    j = minimal_config();
    j["filters"][0]["params"] = {{"scan_length", 0}};
    EXPECT_EQ(config_error(j).rfind("filters[0].params", 0), 0u);

    j = minimal_config();
    j["filters"][0]["params"] = {{"scan_lenght", 3}};
    EXPECT_EQ(config_error(j).rfind("filters[0].params.scan_lenght", 0), 0u);

    j = minimal_config();
    j["sweep"] = {{"clutter_rate", {10, -1}}};
    EXPECT_EQ(config_error(j).rfind("sweep.clutter_rate[1]", 0), 0u);

    j = minimal_config();
    j["sweep"] = {{"L", {1, 2.5}}};
    EXPECT_EQ(config_error(j).rfind("sweep.L[1]", 0), 0u);

    j = minimal_config();
    j["runs"] = 0;
    EXPECT_EQ(config_error(j).rfind("runs", 0), 0u);

    j = minimal_config();
    j["scenario"]["preset"] = "scenario3";
    EXPECT_EQ(config_error(j).rfind("scenario.preset", 0), 0u);

    j = minimal_config();
    j["scenario"]["models"] = {{"sensor", {{"kind", "sonar"}}}};
    EXPECT_EQ(config_error(j).rfind("scenario.models.sensor", 0), 0u);

    j = minimal_config();
    j["scenario"]["script"] = json::array({{{"birth", 1}, {"state", {1, 2, 3}}}});
    EXPECT_EQ(config_error(j).rfind("scenario", 0), 0u);
}

TEST(Config, ScenarioRoundTripsThroughJson) {
    for (const auto& original : {scenario1_config(), scenario2_config()}) {
        auto c = original;
        c.truth_seed = 99;
        const auto back = scenario_from_json(json::parse(scenario_to_json(c).dump()));
        EXPECT_EQ(back.horizon, c.horizon);
        EXPECT_EQ(back.truth_seed, c.truth_seed);
        EXPECT_EQ(back.truth_process_noise, c.truth_process_noise);
        EXPECT_EQ(back.models.motion.F, c.models.motion.F);
        EXPECT_EQ(back.models.motion.Q, c.models.motion.Q);
        EXPECT_EQ(back.models.sensor.R, c.models.sensor.R);
        EXPECT_EQ(back.models.sensor.kind, c.models.sensor.kind);
        EXPECT_EQ(back.models.birth.later_steps.size(), c.models.birth.later_steps.size());
        ASSERT_EQ(back.script.size(), c.script.size());
        for (std::size_t i = 0; i < c.script.size(); ++i) {
            EXPECT_EQ(back.script[i].initial_state, c.script[i].initial_state);
            EXPECT_EQ(back.script[i].death_step, c.script[i].death_step);
        }
        const auto t1 = generate_truth(c, 1), t2 = generate_truth(back, 1);
        ASSERT_EQ(t1.size(), t2.size());
        for (std::size_t i = 0; i < t1.size(); ++i) EXPECT_EQ(t1[i].stacked(), t2[i].stacked());
    }
}

TEST(Config, PresetOverrides) {
    auto j = minimal_config();
    j["scenario"]["clutter_rate"] = 25.0;
    j["scenario"]["p_detect"] = 0.7;
    const auto c = campaign_from_json(j);
    EXPECT_EQ(c.scenario.models.sensor.clutter_rate, 25.0);
    EXPECT_EQ(c.scenario.models.sensor.p_detect, 0.7);
}

TEST(Campaign, SingleTargetCleanScenarioIsAccurate) {
    const auto table = run_campaign(single_target_campaign());
    ASSERT_EQ(table.size(), 1u);
    EXPECT_LT(table[0].d_T, 1.0);  // 0.1 c
    EXPECT_EQ(table[0].missed, 0.0);
    EXPECT_EQ(table[0].false_targets, 0.0);
    EXPECT_EQ(table[0].d.size(), 81u);
}

TEST(Campaign, DeterministicAndIndependentOfJobs) {
    auto c = campaign_from_json(minimal_config());
    c.runs = 4;
    c.filters.push_back({FilterKind::TgnpmbAll, FilterParams{}, ""});
    c.sweep.clutter_rate = {20.0};
    const auto a = run_campaign(c, 1);
    const auto b = run_campaign(c, 1);
    const auto p = run_campaign(c, 4);
    expect_same_metrics(a, b);
    expect_same_metrics(a, p);
}

TEST(Campaign, TableShape) {
    auto c = campaign_from_json(minimal_config());
    c.runs = 1;
    c.scenario.horizon = 5;
    c.filters.push_back({FilterKind::TpmbAll, FilterParams{}, "custom"});
    c.sweep.p_detect = {0.8};
    c.sweep.clutter_rate = {20.0, 30.0};
    c.sweep.scan_lengths = {1, 5, 10};
    const auto t = run_campaign(c);
    ASSERT_EQ(t.size(), 2u * 4u * 3u);
    // Three L columns per (filter, sweep point), in order.
    for (std::size_t i = 0; i < t.size(); i += 3) {
        EXPECT_EQ(t[i].L, 1);
        EXPECT_EQ(t[i + 1].L, 5);
        EXPECT_EQ(t[i + 2].L, 10);
        EXPECT_EQ(t[i].sweep_key, t[i + 2].sweep_key);
    }
    EXPECT_EQ(t[0].sweep_key, "baseline");
    EXPECT_EQ(t[3].sweep_key, "p_detect");
    EXPECT_EQ(t[3].sweep_value, 0.8);
    EXPECT_EQ(t.back().filter, "custom");
    EXPECT_EQ(t.back().variant, "all");
    EXPECT_EQ(t.back().sweep_value, 30.0);
}

TEST(Campaign, FailingRunReportsSeed) {
    auto c = single_target_campaign();
    c.scenario = scenario2_config();
    c.scenario.models.sensor.p_detect = 1.0;
    Vector at_sensor(4);
    at_sensor << 100.0, 0.0, 100.0, 0.0;
    c.scenario.script = {{1, std::nullopt, at_sensor}};
    c.base_seed = 41;
    try {
        run_campaign(c);
        FAIL() << "expected a run failure";
    } catch (const RunFailure& e) {
        EXPECT_EQ(e.seed(), 41u);
        EXPECT_NE(std::string(e.what()).find("seed 41"), std::string::npos);
    }
}

TEST(Emit, EmptyTableIsHeaderOnly) {
    const auto dir = temp_dir();
    emit_results({}, OutputFormat::Csv, (dir / "r.csv").string());
    EXPECT_EQ(slurp(dir / "r.csv"), std::string(kResultCsvHeader) + "\n");
    EXPECT_EQ(slurp(dir / "r.csv.series.csv"), std::string(kSeriesCsvHeader) + "\n");
}

TEST(Emit, CsvAndSeriesStructure) {
    auto c = campaign_from_json(minimal_config());
    c.sweep.scan_lengths = {1, 5};
    const auto t = run_campaign(c);
    const auto dir = temp_dir();
    emit_results(t, OutputFormat::Csv, (dir / "r.csv").string());
    const auto csv = slurp(dir / "r.csv");
    EXPECT_EQ(count_lines(csv), 1 + t.size());
    EXPECT_EQ(count_lines(slurp(dir / "r.csv.series.csv")), 1 + t.size() * 12u);
    // Doubles are written with full precision.
    std::istringstream rows(csv);
    std::string header, first;
    std::getline(rows, header);
    std::getline(rows, first);
    std::vector<std::string> fields;
    std::stringstream fs(first);
    for (std::string f; std::getline(fs, f, ',');) fields.push_back(f);
    ASSERT_EQ(fields.size(), 10u);
    EXPECT_EQ(std::stod(fields[5]), t[0].d_T);
    EXPECT_EQ(std::stod(fields[9]), t[0].runtime_s);
}

TEST(Emit, JsonRoundTripsLosslessly) {
    ResultRecord r;
    r.filter = "tpmb-alive";
    r.variant = "alive";
    r.sweep_key = "clutter_rate";
    r.sweep_value = 20.0;
    r.L = 5;
    r.d_T = 4.8400000000000034;
    r.loc = 1.0 / 3.0;
    r.missed = std::sqrt(2.0);
    r.false_targets = 1e-300;
    r.runtime_s = 0.123456789012345678;
    r.d = {1.0, 2.0};
    r.d_loc = r.d_missed = r.d_false = {0.0, 0.0};
    const auto dir = temp_dir();
    emit_results({r}, OutputFormat::Json, (dir / "r.json").string());
    const auto back = results_from_json(json::parse(slurp(dir / "r.json")));
    ASSERT_EQ(back.size(), 1u);
    EXPECT_EQ(back[0].filter, r.filter);
    EXPECT_EQ(back[0].variant, r.variant);
    EXPECT_EQ(back[0].sweep_key, r.sweep_key);
    EXPECT_EQ(back[0].sweep_value, r.sweep_value);
    EXPECT_EQ(back[0].L, r.L);
    EXPECT_EQ(back[0].d_T, r.d_T);
    EXPECT_EQ(back[0].loc, r.loc);
    EXPECT_EQ(back[0].missed, r.missed);
    EXPECT_EQ(back[0].false_targets, r.false_targets);
    EXPECT_EQ(back[0].runtime_s, r.runtime_s);
    EXPECT_EQ(count_lines(slurp(dir / "r.json.series.csv")), 3u);
}

TEST(Emit, UnwritablePathThrows) {
    EXPECT_THROW(emit_results({}, OutputFormat::Csv, "/nonexistent-dir/x/r.csv"), std::runtime_error);
}

TEST(SelfTest, AllChecksPass) {
    for (const auto& r : run_selftest()) EXPECT_TRUE(r.passed) << r.name << ": " << r.detail;
}

TEST(Cli, ExitCodes) {
    const auto dir = temp_dir();
    const auto good = dir / "good.json";
    const auto bad = dir / "bad.json";
    {
        std::ofstream(good) << minimal_config().dump();
        auto j = minimal_config();
        j["filters"][0]["variant"] = "nope";
        std::ofstream(bad) << j.dump();
    }
    EXPECT_EQ(run_cli("count"), 0);
    EXPECT_EQ(run_cli("selftest"), 0);
    EXPECT_EQ(run_cli("run --config " + good.string() + " --out " + (dir / "o.csv").string() + " --runs 1"), 0);
    EXPECT_TRUE(std::filesystem::exists(dir / "o.csv.series.csv"));
    EXPECT_EQ(run_cli("run --config " + bad.string() + " --out " + (dir / "o2.csv").string()), 1);
    EXPECT_EQ(run_cli("run --config " + good.string() + " --out /nonexistent-dir/x/o.csv"), 2);
    EXPECT_EQ(run_cli("frobnicate"), 1);
}

TEST(Cli, CountOutputMatchesLibrary) {
    const auto dir = temp_dir();
    const std::string out = (dir / "count.csv").string();
    const std::string cmd = std::string(TPMB_CLI_PATH) + " count --m 14 --n 4 5 6 7 > " + out;
    ASSERT_EQ(std::system(cmd.c_str()), 0);
    EXPECT_EQ(slurp(out), "m,n,mbm,mbm01,pmbm\n14,4,33909,46328,1\n14,5,384091,583552,1\n14,6,4010455,6882352,1\n"
                          "14,7,38398641,75826144,1\n");
}

TEST(Cli, SeedOverrideChangesResults) {
    const auto dir = temp_dir();
    const auto cfg = dir / "config.json";
    std::ofstream(cfg) << minimal_config().dump();
    ASSERT_EQ(run_cli("run --config " + cfg.string() + " --out " + (dir / "a.json").string() + " --format json --seed 3"), 0);
    ASSERT_EQ(run_cli("run --config " + cfg.string() + " --out " + (dir / "b.json").string() + " --format json"), 0);
    ASSERT_EQ(run_cli("run --config " + cfg.string() + " --out " + (dir / "c.json").string() + " --format json --seed 4"), 0);
    const auto a = results_from_json(json::parse(slurp(dir / "a.json")));
    const auto b = results_from_json(json::parse(slurp(dir / "b.json")));
    const auto c = results_from_json(json::parse(slurp(dir / "c.json")));
    EXPECT_EQ(a[0].d_T, b[0].d_T);
    EXPECT_NE(a[0].d_T, c[0].d_T);
}
