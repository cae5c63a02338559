#include "tpmb/harness.hpp"
#include "tpmb/selftest.hpp"

#include "CLI11.hpp"

#include <iostream>

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitRuntime = 2;

struct RunOptions {
    std::string config;
    std::string out;
    std::string format = "csv";
    std::optional<std::uint64_t> seed;
    std::optional<int> runs;
    int jobs = 1;
};

int do_run(const RunOptions& o) {
    tpmb::CampaignConfig cfg;
    try {
        cfg = tpmb::load_campaign(o.config);
        if (o.seed) cfg.base_seed = *o.seed;
        if (o.runs) cfg.runs = *o.runs;
        cfg.validate();
    } catch (const tpmb::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    }
    try {
        const auto table = tpmb::run_campaign(cfg, o.jobs);
        tpmb::emit_results(table, o.format == "json" ? tpmb::OutputFormat::Json : tpmb::OutputFormat::Csv, o.out);
        std::cerr << "wrote " << table.size() << " records to " << o.out << " (series in " << tpmb::series_path(o.out)
                  << ")\n";
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitRuntime;
    }
    return kExitOk;
}

int do_count(int m, const std::vector<int>& ns, const std::string& format) {
    try {
        if (format == "json") {
            nlohmann::json rows = nlohmann::json::array();
            for (int n : ns)
                rows.push_back({{"m", m},
                                {"n", n},
                                {"mbm", tpmb::count_mbm_hypotheses(m, n).str()},
                                {"mbm01", tpmb::count_mbm01_hypotheses(m, n).str()},
                                {"pmbm", 1}});
            std::cout << rows.dump(2) << '\n';
        } else {
            std::cout << "m,n,mbm,mbm01,pmbm\n";
            for (int n : ns)
                std::cout << m << ',' << n << ',' << tpmb::count_mbm_hypotheses(m, n) << ','
                          << tpmb::count_mbm01_hypotheses(m, n) << ",1\n";
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitConfig;
    }
    return kExitOk;
}

int do_selftest() {
    bool ok = true;
    for (const auto& r : tpmb::run_selftest()) {
        std::cout << (r.passed ? "PASS " : "FAIL ") << r.name << ": " << r.detail << '\n';
        ok = ok && r.passed;
    }
    return ok ? kExitOk : kExitRuntime;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Trajectory PMB filter Monte Carlo harness"};
    app.require_subcommand(1);

    RunOptions run_opts;
    auto* run = app.add_subcommand("run", "Run a Monte Carlo campaign");
    run->add_option("--config", run_opts.config, "Campaign config (JSON)")->required()->check(CLI::ExistingFile);
    run->add_option("--out", run_opts.out, "Output path; per-step series go to <out>.series.csv")->required();
    run->add_option("--format", run_opts.format, "Output format")->check(CLI::IsMember({"csv", "json"}));
    run->add_option("--seed", run_opts.seed, "Override base_seed");
    run->add_option("--runs", run_opts.runs, "Override the number of runs")->check(CLI::PositiveNumber);
    run->add_option("--jobs", run_opts.jobs, "Worker threads")->check(CLI::PositiveNumber);

    int m = 14;
    std::vector<int> ns{4, 5, 6, 7};
    std::string count_format = "csv";
    auto* count = app.add_subcommand("count", "Global hypothesis counts for m measurements and n Bernoullis");
    count->add_option("--m", m, "Number of measurements");
    count->add_option("--n", ns, "Numbers of Bernoullis");
    count->add_option("--format", count_format, "Output format")->check(CLI::IsMember({"csv", "json"}));

    auto* selftest = app.add_subcommand("selftest", "Run the built-in invariant checks");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitConfig;
    }

    if (run->parsed()) return do_run(run_opts);
    if (count->parsed()) return do_count(m, ns, count_format);
    if (selftest->parsed()) return do_selftest();
    return kExitConfig;
}
