#pragma once

#include "tpmb/filter.hpp"
#include "tpmb/metrics.hpp"
#include "tpmb/simulator.hpp"

#include "json.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace tpmb {

inline constexpr int kConfigSchemaVersion = 1;
inline constexpr int kResultSchemaVersion = 1;

/// Invalid configuration; the message starts with the offending field path.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A run failed during a campaign; carries the seed that reproduces it.
class RunFailure : public std::runtime_error {
public:
    RunFailure(std::uint64_t seed, const std::string& what)
        : std::runtime_error("run with seed " + std::to_string(seed) + " failed: " + what), seed_(seed) {}
    std::uint64_t seed() const { return seed_; }

private:
    std::uint64_t seed_;
};

enum class FilterKind { TpmbAlive, TpmbAll, TgnpmbAlive, TgnpmbAll };

inline std::string to_string(FilterKind k) {
    switch (k) {
        case FilterKind::TpmbAlive: return "tpmb-alive";
        case FilterKind::TpmbAll: return "tpmb-all";
        case FilterKind::TgnpmbAlive: return "tgnpmb-alive";
        case FilterKind::TgnpmbAll: return "tgnpmb-all";
    }
    return "unknown";
}

inline std::optional<FilterKind> parse_filter_kind(const std::string& s) {
    for (auto k : {FilterKind::TpmbAlive, FilterKind::TpmbAll, FilterKind::TgnpmbAlive, FilterKind::TgnpmbAll})
        if (to_string(k) == s) return k;
    return std::nullopt;
}

inline Variant variant_of(FilterKind k) {
    return k == FilterKind::TpmbAll || k == FilterKind::TgnpmbAll ? Variant::All : Variant::Alive;
}

inline bool is_gnn(FilterKind k) { return k == FilterKind::TgnpmbAlive || k == FilterKind::TgnpmbAll; }

struct FilterSpec {
    FilterKind kind = FilterKind::TpmbAlive;
    FilterParams params;
    std::string name;  // defaults to the kind's name

    std::string label() const { return name.empty() ? to_string(kind) : name; }
};

/// One-at-a-time overrides applied to the baseline scenario, and scan lengths crossed with
/// every point.
struct SweepSpec {
    std::vector<double> p_detect;
    std::vector<double> clutter_rate;
    std::vector<int> scan_lengths;
};

struct SweepPoint {
    std::string key;  // "baseline", "p_detect" or "clutter_rate"
    double value = 0.0;
};

struct CampaignConfig {
    int schema_version = kConfigSchemaVersion;
    ScenarioConfig scenario = scenario1_config();
    std::vector<FilterSpec> filters;
    SweepSpec sweep;
    int runs = 1;
    std::uint64_t base_seed = 0;
    MetricParams metric;

    std::vector<SweepPoint> sweep_points() const {
        std::vector<SweepPoint> pts{{"baseline", 0.0}};
        for (double v : sweep.p_detect) pts.push_back({"p_detect", v});
        for (double v : sweep.clutter_rate) pts.push_back({"clutter_rate", v});
        return pts;
    }

    void validate() const {
        if (schema_version != kConfigSchemaVersion)
            throw ConfigError("schema_version: unsupported version " + std::to_string(schema_version));
        if (runs < 1) throw ConfigError("runs: must be >= 1");
        if (filters.empty()) throw ConfigError("filters: at least one filter required");
        for (std::size_t i = 0; i < filters.size(); ++i) {
            const std::string path = "filters[" + std::to_string(i) + "]";
            try {
                filters[i].params.validate();
            } catch (const std::invalid_argument& e) {
                throw ConfigError(path + ".params: " + e.what());
            }
            if (filters[i].label().find_first_of(",\"\n\r") != std::string::npos)
                throw ConfigError(path + ".name: must not contain commas, quotes or newlines");
        }
        for (std::size_t i = 0; i < sweep.p_detect.size(); ++i)
            if (!(sweep.p_detect[i] > 0.0 && sweep.p_detect[i] <= 1.0))
                throw ConfigError("sweep.p_detect[" + std::to_string(i) + "]: must lie in (0, 1]");
        for (std::size_t i = 0; i < sweep.clutter_rate.size(); ++i)
            if (!(sweep.clutter_rate[i] > 0.0))
                throw ConfigError("sweep.clutter_rate[" + std::to_string(i) + "]: must be positive");
        for (std::size_t i = 0; i < sweep.scan_lengths.size(); ++i)
            if (sweep.scan_lengths[i] < 1) throw ConfigError("sweep.L[" + std::to_string(i) + "]: must be >= 1");
        try {
            scenario.validate();
        } catch (const std::invalid_argument& e) {
            throw ConfigError(std::string("scenario: ") + e.what());
        }
        try {
            metric.validate();
        } catch (const std::invalid_argument& e) {
            throw ConfigError(std::string("metric: ") + e.what());
        }
    }
};

/// Per-step output of one filter run: unnormalised squared errors (summed over steps 1..k)
/// and the number of estimated trajectories ending at k.
struct RunOutcome {
    std::vector<GospaPowers> errors;
    std::vector<int> alive_estimates;
    double runtime_s = 0.0;
};

struct ResultRecord {
    std::string filter;
    std::string variant;
    std::string sweep_key;
    double sweep_value = 0.0;
    int L = 0;
    double d_T = 0.0;
    double loc = 0.0;
    double missed = 0.0;
    double false_targets = 0.0;
    double runtime_s = 0.0;
    std::vector<double> d;
    std::vector<double> d_loc;
    std::vector<double> d_missed;
    std::vector<double> d_false;
};

using ResultTable = std::vector<ResultRecord>;

enum class OutputFormat { Csv, Json };

inline ScenarioConfig apply_sweep_point(ScenarioConfig s, const SweepPoint& p) {
    if (p.key == "p_detect") s.models.sensor.p_detect = p.value;
    else if (p.key == "clutter_rate") s.models.sensor.clutter_rate = p.value;
    return s;
}

/// Simulates one run with the given seed, filters it and scores every step.
inline RunOutcome run_single(const ScenarioConfig& scenario, FilterKind kind, const FilterParams& params,
                             std::uint64_t seed, const MetricParams& metric = {}) {
    const auto truth = generate_truth(scenario, seed);
    const auto meas = generate_measurements(truth, scenario.models.sensor, scenario.horizon, seed);
    const Variant v = variant_of(kind);
    TpmbFilter filter(v, scenario.models, params, is_gnn(kind));

    RunOutcome out;
    out.errors.reserve(static_cast<std::size_t>(scenario.horizon));
    double filter_time = 0.0;
    for (int k = 1; k <= scenario.horizon; ++k) {
        const auto t0 = std::chrono::steady_clock::now();
        filter.step(meas[static_cast<std::size_t>(k - 1)]);
        const auto est = filter.estimate();
        filter_time += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        out.errors.push_back(trajectory_error_sum(truth_at(truth, k, v), est, k, metric));
        out.alive_estimates.push_back(
            static_cast<int>(std::count_if(est.begin(), est.end(), [k](const Trajectory& x) { return x.end_time() == k; })));
    }
    out.runtime_s = filter_time;
    return out;
}

/// Aggregates runs (in run-index order) into one result row.
inline ResultRecord aggregate_runs(const std::vector<RunOutcome>& runs) {
    if (runs.empty()) throw std::invalid_argument("aggregate_runs: no runs");
    const std::size_t n = runs.front().errors.size();
    ResultRecord r;
    std::vector<double> tot(runs.size()), loc(runs.size()), mis(runs.size()), fal(runs.size());
    for (std::size_t k = 0; k < n; ++k) {
        for (std::size_t i = 0; i < runs.size(); ++i) {
            const auto& e = runs[i].errors.at(k);
            tot[i] = e.total;
            loc[i] = e.localization;
            mis[i] = e.missed;
            fal[i] = e.false_targets;
        }
        const int step = static_cast<int>(k) + 1;
        r.d.push_back(rms_over_runs(tot, step));
        r.d_loc.push_back(rms_over_runs(loc, step));
        r.d_missed.push_back(rms_over_runs(mis, step));
        r.d_false.push_back(rms_over_runs(fal, step));
    }
    r.d_T = rms_total(r.d);
    r.loc = rms_total(r.d_loc);
    r.missed = rms_total(r.d_missed);
    r.false_targets = rms_total(r.d_false);
    double rt = 0.0;
    for (const auto& o : runs) rt += o.runtime_s;
    r.runtime_s = rt / static_cast<double>(runs.size());
    return r;
}

/// Runs every (filter, sweep point, L) cell over cfg.runs seeds on `jobs` worker threads.
/// Outputs other than runtime_s do not depend on `jobs`.
inline ResultTable run_campaign(const CampaignConfig& cfg, int jobs = 1) {
    cfg.validate();
    struct Cell {
        const FilterSpec* filter;
        SweepPoint point;
        ScenarioConfig scenario;
        FilterParams params;
    };
    std::vector<Cell> cells;
    for (const auto& f : cfg.filters)
        for (const auto& pt : cfg.sweep_points()) {
            const std::vector<int> ls = cfg.sweep.scan_lengths.empty() ? std::vector<int>{f.params.scan_length}
                                                                         : cfg.sweep.scan_lengths;
            for (int L : ls) {
                FilterParams p = f.params;
                p.scan_length = L;
                cells.push_back({&f, pt, apply_sweep_point(cfg.scenario, pt), p});
            }
        }

    const std::size_t runs = static_cast<std::size_t>(cfg.runs);
    const std::size_t total = cells.size() * runs;
    std::vector<std::vector<RunOutcome>> outcomes(cells.size(), std::vector<RunOutcome>(runs));
    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    std::mutex err_mutex;
    std::optional<std::pair<std::size_t, std::string>> first_error;

    const auto worker = [&] {
        for (std::size_t t = next++; t < total && !failed; t = next++) {
            const std::size_t c = t / runs, i = t % runs;
            try {
                outcomes[c][i] = run_single(cells[c].scenario, cells[c].filter->kind, cells[c].params,
                                            cfg.base_seed + i, cfg.metric);
            } catch (const std::exception& e) {
                std::lock_guard<std::mutex> lock(err_mutex);
                if (!first_error || t < first_error->first) first_error = {{t, e.what()}};
                failed = true;
            }
        }
    };
    const int nthreads = std::max(1, std::min<int>(jobs, static_cast<int>(total)));
    if (nthreads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int i = 0; i < nthreads; ++i) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    if (first_error) throw RunFailure(cfg.base_seed + first_error->first % runs, first_error->second);

    ResultTable table;
    for (std::size_t c = 0; c < cells.size(); ++c) {
        ResultRecord r = aggregate_runs(outcomes[c]);
        r.filter = cells[c].filter->label();
        r.variant = variant_of(cells[c].filter->kind) == Variant::Alive ? "alive" : "all";
        r.sweep_key = cells[c].point.key;
        r.sweep_value = cells[c].point.value;
        r.L = cells[c].params.scan_length;
        table.push_back(std::move(r));
    }
    return table;
}

// ---------------------------------------------------------------------------------------
// Configuration files

namespace detail {

using Json = nlohmann::json;

inline void check_keys(const Json& j, const std::string& path, std::initializer_list<const char*> allowed) {
    if (!j.is_object()) throw ConfigError(path + ": expected an object");
    for (const auto& [key, _] : j.items())
        if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; }))
            throw ConfigError(path + "." + key + ": unknown field");
}

inline std::string join(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }

inline double get_number(const Json& j, const std::string& path) {
    if (!j.is_number()) throw ConfigError(path + ": expected a number");
    return j.get<double>();
}

inline long long get_integer(const Json& j, const std::string& path) {
    if (!j.is_number_integer()) throw ConfigError(path + ": expected an integer");
    return j.get<long long>();
}

inline std::string get_string(const Json& j, const std::string& path) {
    if (!j.is_string()) throw ConfigError(path + ": expected a string");
    return j.get<std::string>();
}

inline Vector vector_from_json(const Json& j, const std::string& path) {
    if (!j.is_array() || j.empty()) throw ConfigError(path + ": expected a non-empty array of numbers");
    Vector v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i)
        v[static_cast<Eigen::Index>(i)] = get_number(j[i], path + "[" + std::to_string(i) + "]");
    return v;
}

inline Matrix matrix_from_json(const Json& j, const std::string& path) {
    if (!j.is_array() || j.empty()) throw ConfigError(path + ": expected a non-empty array of rows");
    const std::size_t rows = j.size();
    const Vector first = vector_from_json(j[0], path + "[0]");
    Matrix m(static_cast<Eigen::Index>(rows), first.size());
    for (std::size_t r = 0; r < rows; ++r) {
        const Vector row = vector_from_json(j[r], path + "[" + std::to_string(r) + "]");
        if (row.size() != first.size()) throw ConfigError(path + "[" + std::to_string(r) + "]: ragged matrix row");
        m.row(static_cast<Eigen::Index>(r)) = row.transpose();
    }
    return m;
}

inline Json to_json(const Vector& v) {
    Json j = Json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) j.push_back(v[i]);
    return j;
}

inline Json to_json(const Matrix& m) {
    Json j = Json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) j.push_back(to_json(Vector(m.row(r).transpose())));
    return j;
}

inline std::vector<BirthComponent> birth_list_from_json(const Json& j, const std::string& path) {
    if (!j.is_array()) throw ConfigError(path + ": expected an array");
    std::vector<BirthComponent> out;
    for (std::size_t i = 0; i < j.size(); ++i) {
        const std::string p = path + "[" + std::to_string(i) + "]";
        check_keys(j[i], p, {"weight", "mean", "covariance"});
        if (!j[i].contains("weight") || !j[i].contains("mean") || !j[i].contains("covariance"))
            throw ConfigError(p + ": weight, mean and covariance are required");
        out.push_back({get_number(j[i]["weight"], p + ".weight"), vector_from_json(j[i]["mean"], p + ".mean"),
                       matrix_from_json(j[i]["covariance"], p + ".covariance")});
    }
    return out;
}

inline Json birth_list_to_json(const std::vector<BirthComponent>& list) {
    Json j = Json::array();
    for (const auto& c : list) j.push_back({{"weight", c.weight}, {"mean", to_json(c.mean)}, {"covariance", to_json(c.covariance)}});
    return j;
}

inline MotionModel motion_from_json(const Json& j, const std::string& path) {
    check_keys(j, path, {"F", "Q", "p_survival"});
    for (const char* k : {"F", "Q", "p_survival"})
        if (!j.contains(k)) throw ConfigError(join(path, k) + ": required");
    MotionModel m;
    m.F = matrix_from_json(j["F"], join(path, "F"));
    m.Q = matrix_from_json(j["Q"], join(path, "Q"));
    m.p_survival = get_number(j["p_survival"], join(path, "p_survival"));
    return m;
}

inline BirthModel birth_from_json(const Json& j, const std::string& path) {
    check_keys(j, path, {"first_step", "later_steps"});
    for (const char* k : {"first_step", "later_steps"})
        if (!j.contains(k)) throw ConfigError(join(path, k) + ": required");
    return {birth_list_from_json(j["first_step"], join(path, "first_step")),
            birth_list_from_json(j["later_steps"], join(path, "later_steps"))};
}

inline SensorModel sensor_from_json(const Json& j, const std::string& path) {
    check_keys(j, path, {"kind", "H", "R", "position", "p_detect", "clutter_rate", "region_lower", "region_upper"});
    for (const char* k : {"kind", "R", "p_detect", "clutter_rate", "region_lower", "region_upper"})
        if (!j.contains(k)) throw ConfigError(join(path, k) + ": required");
    SensorModel s;
    const std::string kind = get_string(j["kind"], join(path, "kind"));
    if (kind == "linear") {
        s.kind = SensorKind::Linear;
        if (!j.contains("H")) throw ConfigError(join(path, "H") + ": required for linear sensors");
        s.H = matrix_from_json(j["H"], join(path, "H"));
    } else if (kind == "range-bearing") {
        s.kind = SensorKind::RangeBearing;
        if (!j.contains("position")) throw ConfigError(join(path, "position") + ": required for range-bearing sensors");
        const Vector p = vector_from_json(j["position"], join(path, "position"));
        if (p.size() != 2) throw ConfigError(join(path, "position") + ": expected two coordinates");
        s.position = p;
    } else {
        throw ConfigError(join(path, "kind") + ": expected \"linear\" or \"range-bearing\"");
    }
    s.R = matrix_from_json(j["R"], join(path, "R"));
    s.p_detect = get_number(j["p_detect"], join(path, "p_detect"));
    s.clutter_rate = get_number(j["clutter_rate"], join(path, "clutter_rate"));
    s.region_lower = vector_from_json(j["region_lower"], join(path, "region_lower"));
    s.region_upper = vector_from_json(j["region_upper"], join(path, "region_upper"));
    return s;
}

inline Json sensor_to_json(const SensorModel& s) {
    Json j = {{"kind", s.kind == SensorKind::Linear ? "linear" : "range-bearing"},
              {"R", to_json(s.R)},
              {"p_detect", s.p_detect},
              {"clutter_rate", s.clutter_rate},
              {"region_lower", to_json(s.region_lower)},
              {"region_upper", to_json(s.region_upper)}};
    if (s.kind == SensorKind::Linear) j["H"] = to_json(s.H);
    else j["position"] = to_json(Vector(s.position));
    return j;
}

inline FilterParams filter_params_from_json(const Json& j, const std::string& path) {
    check_keys(j, path,
               {"max_hypotheses", "poisson_prune", "bernoulli_prune", "alive_freeze", "estimate_threshold", "scan_length",
                "gate_threshold"});
    FilterParams p;
    if (j.contains("max_hypotheses")) p.max_hypotheses = static_cast<int>(get_integer(j["max_hypotheses"], join(path, "max_hypotheses")));
    if (j.contains("poisson_prune")) p.poisson_prune = get_number(j["poisson_prune"], join(path, "poisson_prune"));
    if (j.contains("bernoulli_prune")) p.bernoulli_prune = get_number(j["bernoulli_prune"], join(path, "bernoulli_prune"));
    if (j.contains("alive_freeze")) p.alive_freeze = get_number(j["alive_freeze"], join(path, "alive_freeze"));
    if (j.contains("estimate_threshold"))
        p.estimate_threshold = get_number(j["estimate_threshold"], join(path, "estimate_threshold"));
    if (j.contains("scan_length")) p.scan_length = static_cast<int>(get_integer(j["scan_length"], join(path, "scan_length")));
    if (j.contains("gate_threshold")) p.gate_threshold = get_number(j["gate_threshold"], join(path, "gate_threshold"));
    return p;
}

inline Json filter_params_to_json(const FilterParams& p) {
    return {{"max_hypotheses", p.max_hypotheses},     {"poisson_prune", p.poisson_prune},
            {"bernoulli_prune", p.bernoulli_prune},   {"alive_freeze", p.alive_freeze},
            {"estimate_threshold", p.estimate_threshold}, {"scan_length", p.scan_length},
            {"gate_threshold", p.gate_threshold}};
}

template <class T>
std::vector<T> number_list(const Json& j, const std::string& path) {
    if (!j.is_array()) throw ConfigError(path + ": expected an array");
    std::vector<T> out;
    for (std::size_t i = 0; i < j.size(); ++i) {
        const std::string p = path + "[" + std::to_string(i) + "]";
        if constexpr (std::is_integral_v<T>) out.push_back(static_cast<T>(get_integer(j[i], p)));
        else out.push_back(get_number(j[i], p));
    }
    return out;
}

}  // namespace detail

/// Reads a scenario from its config form: a named preset with optional overrides, or a fully
/// inline model set.
inline ScenarioConfig scenario_from_json(const nlohmann::json& j, const std::string& path = "scenario") {
    using namespace detail;
    check_keys(j, path,
               {"preset", "horizon", "truth_mode", "truth_process_noise", "truth_seed", "script", "models", "p_detect",
                "clutter_rate", "p_survival"});
    ScenarioConfig c;
    if (j.contains("preset")) {
        const std::string preset = get_string(j["preset"], join(path, "preset"));
        if (preset == "scenario1") c = scenario1_config();
        else if (preset == "scenario2") c = scenario2_config();
        else throw ConfigError(join(path, "preset") + ": unknown preset \"" + preset + "\"");
    } else {
        if (!j.contains("models")) throw ConfigError(join(path, "models") + ": required without a preset");
        c.script.clear();
    }
    if (j.contains("models")) {
        const std::string mp = join(path, "models");
        const Json& m = j["models"];
        check_keys(m, mp, {"motion", "birth", "sensor"});
        if (!j.contains("preset"))
            for (const char* k : {"motion", "birth", "sensor"})
                if (!m.contains(k)) throw ConfigError(join(mp, k) + ": required without a preset");
        if (m.contains("motion")) c.models.motion = motion_from_json(m["motion"], join(mp, "motion"));
        if (m.contains("birth")) c.models.birth = birth_from_json(m["birth"], join(mp, "birth"));
        if (m.contains("sensor")) c.models.sensor = sensor_from_json(m["sensor"], join(mp, "sensor"));
    }
    if (j.contains("horizon")) c.horizon = static_cast<int>(get_integer(j["horizon"], join(path, "horizon")));
    if (j.contains("truth_mode")) {
        const std::string mode = get_string(j["truth_mode"], join(path, "truth_mode"));
        if (mode == "fixed") c.truth_mode = TruthMode::Fixed;
        else if (mode == "sampled") c.truth_mode = TruthMode::Sampled;
        else throw ConfigError(join(path, "truth_mode") + ": expected \"fixed\" or \"sampled\"");
    }
    if (j.contains("truth_process_noise"))
        c.truth_process_noise = get_number(j["truth_process_noise"], join(path, "truth_process_noise"));
    if (j.contains("truth_seed")) {
        if (j["truth_seed"].is_null()) c.truth_seed.reset();
        else if (j["truth_seed"].is_number_unsigned()) c.truth_seed = j["truth_seed"].get<std::uint64_t>();
        else throw ConfigError(join(path, "truth_seed") + ": expected a non-negative integer or null");
    }
    if (j.contains("script")) {
        const std::string sp = join(path, "script");
        if (!j["script"].is_array()) throw ConfigError(sp + ": expected an array");
        c.script.clear();
        for (std::size_t i = 0; i < j["script"].size(); ++i) {
            const Json& t = j["script"][i];
            const std::string tp = sp + "[" + std::to_string(i) + "]";
            check_keys(t, tp, {"birth", "death", "state"});
            if (!t.contains("birth") || !t.contains("state")) throw ConfigError(tp + ": birth and state are required");
            ScriptedTarget st;
            st.birth_step = static_cast<int>(get_integer(t["birth"], tp + ".birth"));
            if (t.contains("death") && !t["death"].is_null())
                st.death_step = static_cast<int>(get_integer(t["death"], tp + ".death"));
            st.initial_state = vector_from_json(t["state"], tp + ".state");
            c.script.push_back(std::move(st));
        }
    }
    if (j.contains("p_detect")) c.models.sensor.p_detect = get_number(j["p_detect"], join(path, "p_detect"));
    if (j.contains("clutter_rate")) c.models.sensor.clutter_rate = get_number(j["clutter_rate"], join(path, "clutter_rate"));
    if (j.contains("p_survival")) c.models.motion.p_survival = get_number(j["p_survival"], join(path, "p_survival"));
    try {
        c.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(path + ": " + e.what());
    }
    return c;
}

/// Fully inline config form of a scenario.
inline nlohmann::json scenario_to_json(const ScenarioConfig& c) {
    using namespace detail;
    Json script = Json::array();
    for (const auto& t : c.script) {
        Json e = {{"birth", t.birth_step}, {"state", to_json(t.initial_state)}};
        e["death"] = t.death_step ? Json(*t.death_step) : Json(nullptr);
        script.push_back(std::move(e));
    }
    Json j = {{"horizon", c.horizon},
              {"truth_mode", c.truth_mode == TruthMode::Fixed ? "fixed" : "sampled"},
              {"truth_process_noise", c.truth_process_noise},
              {"script", script},
              {"models",
               {{"motion", {{"F", to_json(c.models.motion.F)}, {"Q", to_json(c.models.motion.Q)}, {"p_survival", c.models.motion.p_survival}}},
                {"birth", {{"first_step", birth_list_to_json(c.models.birth.first_step)},
                           {"later_steps", birth_list_to_json(c.models.birth.later_steps)}}},
                {"sensor", sensor_to_json(c.models.sensor)}}}};
    j["truth_seed"] = c.truth_seed ? Json(*c.truth_seed) : Json(nullptr);
    return j;
}

inline CampaignConfig campaign_from_json(const nlohmann::json& j) {
    using namespace detail;
    check_keys(j, "config", {"schema_version", "scenario", "filters", "sweep", "runs", "base_seed", "metric"});
    CampaignConfig c;
    if (!j.contains("schema_version")) throw ConfigError("schema_version: required");
    c.schema_version = static_cast<int>(get_integer(j["schema_version"], "schema_version"));
    if (c.schema_version != kConfigSchemaVersion)
        throw ConfigError("schema_version: unsupported version " + std::to_string(c.schema_version));
    if (!j.contains("scenario")) throw ConfigError("scenario: required");
    c.scenario = scenario_from_json(j["scenario"]);
    if (!j.contains("filters") || !j["filters"].is_array()) throw ConfigError("filters: expected an array");
    for (std::size_t i = 0; i < j["filters"].size(); ++i) {
        const Json& f = j["filters"][i];
        const std::string p = "filters[" + std::to_string(i) + "]";
        check_keys(f, p, {"variant", "params", "name"});
        if (!f.contains("variant")) throw ConfigError(p + ".variant: required");
        const std::string v = get_string(f["variant"], p + ".variant");
        const auto kind = parse_filter_kind(v);
        if (!kind) throw ConfigError(p + ".variant: unknown variant \"" + v + "\"");
        FilterSpec spec;
        spec.kind = *kind;
        if (f.contains("params")) spec.params = filter_params_from_json(f["params"], p + ".params");
        if (f.contains("name")) spec.name = get_string(f["name"], p + ".name");
        c.filters.push_back(std::move(spec));
    }
    if (j.contains("sweep")) {
        const Json& s = j["sweep"];
        check_keys(s, "sweep", {"p_detect", "clutter_rate", "L"});
        if (s.contains("p_detect")) c.sweep.p_detect = number_list<double>(s["p_detect"], "sweep.p_detect");
        if (s.contains("clutter_rate")) c.sweep.clutter_rate = number_list<double>(s["clutter_rate"], "sweep.clutter_rate");
        if (s.contains("L")) c.sweep.scan_lengths = number_list<int>(s["L"], "sweep.L");
    }
    if (j.contains("runs")) c.runs = static_cast<int>(get_integer(j["runs"], "runs"));
    if (j.contains("base_seed")) {
        if (!j["base_seed"].is_number_unsigned()) throw ConfigError("base_seed: expected a non-negative integer");
        c.base_seed = j["base_seed"].get<std::uint64_t>();
    }
    if (j.contains("metric")) {
        check_keys(j["metric"], "metric", {"p", "c", "alpha"});
        if (j["metric"].contains("p")) c.metric.p = get_number(j["metric"]["p"], "metric.p");
        if (j["metric"].contains("c")) c.metric.c = get_number(j["metric"]["c"], "metric.c");
        if (j["metric"].contains("alpha")) c.metric.alpha = get_number(j["metric"]["alpha"], "metric.alpha");
    }
    c.validate();
    return c;
}

inline CampaignConfig load_campaign(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open " + path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(std::string("config: parse error: ") + e.what());
    }
    return campaign_from_json(j);
}

// ---------------------------------------------------------------------------------------
// Results

namespace detail {

inline std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::ofstream open_output(const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path);
    return out;
}

inline void finish(std::ofstream& out, const std::string& path) {
    out.flush();
    if (!out) throw std::runtime_error("error writing " + path);
}

}  // namespace detail

inline constexpr const char* kResultCsvHeader = "filter,variant,sweep_key,sweep_value,L,d_T,loc,missed,false,runtime_s";
inline constexpr const char* kSeriesCsvHeader = "filter,variant,sweep_key,sweep_value,L,k,d,loc,missed,false";

inline std::string series_path(const std::string& path) { return path + ".series.csv"; }

inline std::string results_to_csv(const ResultTable& t) {
    using detail::fmt_double;
    std::ostringstream os;
    os << kResultCsvHeader << '\n';
    for (const auto& r : t)
        os << r.filter << ',' << r.variant << ',' << r.sweep_key << ',' << fmt_double(r.sweep_value) << ',' << r.L << ','
           << fmt_double(r.d_T) << ',' << fmt_double(r.loc) << ',' << fmt_double(r.missed) << ','
           << fmt_double(r.false_targets) << ',' << fmt_double(r.runtime_s) << '\n';
    return os.str();
}

inline std::string series_to_csv(const ResultTable& t) {
    using detail::fmt_double;
    std::ostringstream os;
    os << kSeriesCsvHeader << '\n';
    for (const auto& r : t)
        for (std::size_t k = 0; k < r.d.size(); ++k)
            os << r.filter << ',' << r.variant << ',' << r.sweep_key << ',' << fmt_double(r.sweep_value) << ',' << r.L << ','
               << k + 1 << ',' << fmt_double(r.d[k]) << ',' << fmt_double(r.d_loc[k]) << ','
               << fmt_double(r.d_missed[k]) << ',' << fmt_double(r.d_false[k]) << '\n';
    return os.str();
}

inline nlohmann::json results_to_json(const ResultTable& t) {
    nlohmann::json records = nlohmann::json::array();
    for (const auto& r : t)
        records.push_back({{"filter", r.filter},
                           {"variant", r.variant},
                           {"sweep_key", r.sweep_key},
                           {"sweep_value", r.sweep_value},
                           {"L", r.L},
                           {"d_T", r.d_T},
                           {"loc", r.loc},
                           {"missed", r.missed},
                           {"false", r.false_targets},
                           {"runtime_s", r.runtime_s}});
    return {{"schema_version", kResultSchemaVersion}, {"records", records}};
}

/// Summary fields of a JSON result document (series are stored in the companion file).
inline ResultTable results_from_json(const nlohmann::json& j) {
    ResultTable t;
    for (const auto& e : j.at("records")) {
        ResultRecord r;
        r.filter = e.at("filter").get<std::string>();
        r.variant = e.at("variant").get<std::string>();
        r.sweep_key = e.at("sweep_key").get<std::string>();
        r.sweep_value = e.at("sweep_value").get<double>();
        r.L = e.at("L").get<int>();
        r.d_T = e.at("d_T").get<double>();
        r.loc = e.at("loc").get<double>();
        r.missed = e.at("missed").get<double>();
        r.false_targets = e.at("false").get<double>();
        r.runtime_s = e.at("runtime_s").get<double>();
        t.push_back(std::move(r));
    }
    return t;
}

/// Writes the result table to `path` and the per-step series to its companion file.
inline void emit_results(const ResultTable& t, OutputFormat format, const std::string& path) {
    auto out = detail::open_output(path);
    if (format == OutputFormat::Csv) out << results_to_csv(t);
    else out << results_to_json(t).dump(2) << '\n';
    detail::finish(out, path);
    const std::string sp = series_path(path);
    auto series = detail::open_output(sp);
    series << series_to_csv(t);
    detail::finish(series, sp);
}

}  // namespace tpmb
