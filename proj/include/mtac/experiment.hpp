#ifndef MTAC_EXPERIMENT_HPP
#define MTAC_EXPERIMENT_HPP

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "driver.hpp"
#include "io.hpp"
#include "metrics.hpp"
#include "oracle.hpp"

namespace mtac {

namespace fs = std::filesystem;

// ---- specification ----

struct MdpSpec {
    std::string builder = "conflict_chain";  // conflict_chain | random | fixture
    double gamma = 0.5;
    double mixing = 0.1;
    std::uint64_t seed = 0;
    int num_states = 5;
    int num_actions = 2;
    int num_tasks = 2;
    fs::path fixture;
};

struct FeatureSpec {
    std::string kind = "one_hot";  // one_hot | random
    int dim = 0;
    std::uint64_t seed = 0;
    std::optional<int> duplicate_column;
};

struct SweepSpec {
    std::string parameter;
    std::vector<double> values;
};

struct ExperimentSpec {
    std::string name = "experiment";
    MdpSpec mdp;
    FeatureSpec features;
    MtacConfig config;
    std::vector<std::uint64_t> seeds{0};
    fs::path output_dir = "mtac_out";
    int workers = 1;
    bool trace_critic = false;
    bool trace_weights = false;
    std::optional<SweepSpec> sweep;
};

inline WeightOption parse_option(const std::string& s) {
    if (s == "ca") return WeightOption::CA;
    if (s == "fc") return WeightOption::FC;
    if (s == "fixed") return WeightOption::Fixed;
    throw ConfigError("config: algorithm must be one of ca, fc, fixed (got '" + s + "')");
}

inline const std::vector<std::string>& sweepable_parameters() {
    static const std::vector<std::string> names{"n_ca", "n_fc", "n_critic", "n_actor", "T", "beta", "c", "c_prime"};
    return names;
}

/// Sets a numeric MtacConfig field by name; integer fields must receive integral values.
inline void set_config_parameter(MtacConfig& cfg, const std::string& name, double value) {
    auto as_long = [&](long& field) {
        if (value != std::floor(value)) throw ConfigError("sweep: parameter '" + name + "' needs integer values");
        field = static_cast<long>(value);
    };
    if (name == "n_ca") as_long(cfg.n_ca);
    else if (name == "n_fc") as_long(cfg.n_fc);
    else if (name == "n_critic") as_long(cfg.n_critic);
    else if (name == "n_actor") as_long(cfg.n_actor);
    else if (name == "T") as_long(cfg.T);
    else if (name == "beta") cfg.beta = value;
    else if (name == "c") cfg.c = value;
    else if (name == "c_prime") cfg.c_prime = value;
    else throw ConfigError("sweep: unknown parameter '" + name + "'");
}

/// Validates and converts a config document. Relative fixture paths are
/// resolved against `base_dir`. Unknown keys are rejected by name.
inline ExperimentSpec parse_spec(const json& j, const fs::path& base_dir = ".") {
    using detail::get_required;
    detail::only_keys(j,
                      {"name", "mdp", "features", "algorithm", "fixed_lambda", "T", "n_critic", "n_actor", "n_ca", "n_fc",
                       "beta", "c", "c_prime", "lambda_a", "radius", "clamp_beta", "oracle_diagnostics",
                       "record_timing", "seeds", "output_dir", "workers", "trace_critic", "trace_weights", "sweep"},
                      "config");
    ExperimentSpec spec;
    const std::string w = "config";
    if (j.contains("name")) spec.name = get_required<std::string>(j, "name", w);

    if (j.contains("mdp")) {
        const json& m = j.at("mdp");
        const std::string mw = "config.mdp";
        if (!m.is_object()) throw ConfigError(mw + ": expected an object");
        spec.mdp.builder = m.contains("builder") ? get_required<std::string>(m, "builder", mw) : "conflict_chain";
        if (spec.mdp.builder == "conflict_chain") {
            detail::only_keys(m, {"builder", "gamma", "mixing"}, mw);
        } else if (spec.mdp.builder == "random") {
            detail::only_keys(m, {"builder", "gamma", "mixing", "seed", "num_states", "num_actions", "num_tasks"}, mw);
            spec.mdp.gamma = 0.9;
            if (m.contains("seed")) spec.mdp.seed = get_required<std::uint64_t>(m, "seed", mw);
            if (m.contains("num_states")) spec.mdp.num_states = get_required<int>(m, "num_states", mw);
            if (m.contains("num_actions")) spec.mdp.num_actions = get_required<int>(m, "num_actions", mw);
            if (m.contains("num_tasks")) spec.mdp.num_tasks = get_required<int>(m, "num_tasks", mw);
        } else if (spec.mdp.builder == "fixture") {
            detail::only_keys(m, {"builder", "path"}, mw);
            const fs::path p = get_required<std::string>(m, "path", mw);
            spec.mdp.fixture = p.is_absolute() ? p : base_dir / p;
        } else {
            throw ConfigError(mw + ": unknown builder '" + spec.mdp.builder + "'");
        }
        if (m.contains("gamma")) spec.mdp.gamma = get_required<double>(m, "gamma", mw);
        if (m.contains("mixing")) spec.mdp.mixing = get_required<double>(m, "mixing", mw);
    }

    if (j.contains("features")) {
        const json& f = j.at("features");
        const std::string fw = "config.features";
        detail::only_keys(f, {"kind", "dim", "seed", "duplicate_column"}, fw);
        if (f.contains("kind")) spec.features.kind = get_required<std::string>(f, "kind", fw);
        if (spec.features.kind != "one_hot" && spec.features.kind != "random")
            throw ConfigError(fw + ": kind must be one_hot or random");
        if (spec.features.kind == "random") spec.features.dim = get_required<int>(f, "dim", fw);
        else if (f.contains("dim")) throw ConfigError(fw + ": 'dim' applies only to random features");
        if (f.contains("seed")) spec.features.seed = get_required<std::uint64_t>(f, "seed", fw);
        if (f.contains("duplicate_column")) spec.features.duplicate_column = get_required<int>(f, "duplicate_column", fw);
    }

    auto& c = spec.config;
    if (j.contains("algorithm")) c.option = parse_option(get_required<std::string>(j, "algorithm", w));
    if (j.contains("fixed_lambda")) c.fixed_lambda = get_required<std::vector<double>>(j, "fixed_lambda", w);
    if (j.contains("T")) c.T = get_required<long>(j, "T", w);
    if (j.contains("n_critic")) c.n_critic = get_required<long>(j, "n_critic", w);
    if (j.contains("n_actor")) c.n_actor = get_required<long>(j, "n_actor", w);
    if (j.contains("n_ca")) c.n_ca = get_required<long>(j, "n_ca", w);
    if (j.contains("n_fc")) c.n_fc = get_required<long>(j, "n_fc", w);
    if (j.contains("beta")) c.beta = get_required<double>(j, "beta", w);
    if (j.contains("c")) c.c = get_required<double>(j, "c", w);
    if (j.contains("c_prime")) c.c_prime = get_required<double>(j, "c_prime", w);
    if (j.contains("lambda_a")) c.lambda_a = get_required<double>(j, "lambda_a", w);
    if (j.contains("radius")) c.radius = get_required<double>(j, "radius", w);
    if (j.contains("clamp_beta")) c.clamp_beta = get_required<bool>(j, "clamp_beta", w);
    if (j.contains("oracle_diagnostics")) c.oracle_diagnostics = get_required<bool>(j, "oracle_diagnostics", w);
    if (j.contains("record_timing")) c.record_timing = get_required<bool>(j, "record_timing", w);
    if (j.contains("seeds")) spec.seeds = get_required<std::vector<std::uint64_t>>(j, "seeds", w);
    if (spec.seeds.empty()) throw ConfigError("config: 'seeds' must not be empty");
    if (j.contains("output_dir")) spec.output_dir = get_required<std::string>(j, "output_dir", w);
    if (j.contains("workers")) spec.workers = get_required<int>(j, "workers", w);
    if (spec.workers < 1) throw ConfigError("config: workers must be >= 1");
    if (j.contains("trace_critic")) spec.trace_critic = get_required<bool>(j, "trace_critic", w);
    if (j.contains("trace_weights")) spec.trace_weights = get_required<bool>(j, "trace_weights", w);

    if (j.contains("sweep")) {
        const json& s = j.at("sweep");
        const std::string sw = "config.sweep";
        detail::only_keys(s, {"parameter", "values"}, sw);
        SweepSpec sweep{get_required<std::string>(s, "parameter", sw), get_required<std::vector<double>>(s, "values", sw)};
        if (sweep.values.empty()) throw ConfigError(sw + ": 'values' must not be empty");
        MtacConfig probe = c;
        for (double v : sweep.values) set_config_parameter(probe, sweep.parameter, v);
        spec.sweep = sweep;
    }
    c.validate();
    return spec;
}

inline ExperimentSpec load_spec(const fs::path& path) {
    const std::string text = read_file(path);
    return parse_spec(parse_json_text(text, path.string()), path.parent_path().empty() ? "." : path.parent_path());
}

/// MTAC_OUTPUT_DIR, when set and non-empty, replaces the configured output directory.
inline fs::path resolve_output_dir(const ExperimentSpec& spec) {
    if (const char* env = std::getenv("MTAC_OUTPUT_DIR"); env && *env) return fs::path(env);
    return spec.output_dir;
}

inline MultiTaskMdp build_mdp(const MdpSpec& m) {
    if (m.builder == "conflict_chain") return build_conflict_chain(m.gamma, m.mixing);
    if (m.builder == "random")
        return build_random_mdp(m.seed, m.num_states, m.num_actions, m.num_tasks, m.gamma, m.mixing);
    if (m.builder == "fixture") return mdp_from_json(parse_json_text(read_file(m.fixture), m.fixture.string()));
    throw ConfigError("config.mdp: unknown builder '" + m.builder + "'");
}

inline FeatureMap build_features(const FeatureSpec& f, const MultiTaskMdp& mdp) {
    FeatureMap map = f.kind == "random" ? build_random_features(mdp, f.dim, f.seed) : build_one_hot_features(mdp);
    if (f.duplicate_column) map = with_duplicate_column(std::move(map), *f.duplicate_column);
    return map;
}

inline json config_to_json(const MtacConfig& c) {
    json j = {{"algorithm", to_string(c.option)}, {"T", c.T},           {"n_critic", c.n_critic},
              {"n_actor", c.n_actor},             {"n_ca", c.n_ca},     {"n_fc", c.n_fc},
              {"beta", c.beta},                   {"c", c.c},           {"c_prime", c.c_prime},
              {"clamp_beta", c.clamp_beta},       {"oracle_diagnostics", c.oracle_diagnostics},
              {"record_timing", c.record_timing}, {"fixed_lambda", c.fixed_lambda}};
    j["lambda_a"] = c.lambda_a ? json(*c.lambda_a) : json(nullptr);
    j["radius"] = c.radius ? json(*c.radius) : json(nullptr);
    return j;
}

// ---- single runs and summaries ----

struct RunOutput {
    std::uint64_t seed = 0;
    TrainingTrace trace;
    std::string critic_csv;
    std::string weights_csv;
};

inline RunOutput execute_run(const MultiTaskMdp& mdp, const FeatureMap& features, MtacConfig config, std::uint64_t seed,
                             bool trace_critic, bool trace_weights) {
    config.seed = seed;
    RunOutput out;
    out.seed = seed;
    RunHooks hooks;
    const int K = mdp.num_tasks;
    if (trace_critic) {
        out.critic_csv = "# mtac-critic v1 columns=t,task,j,delta,err_to_fixed_point\nt,task,j,delta,err_to_fixed_point\n";
        hooks.critic_step = [&](long t, int k, long j, double delta, double err) {
            out.critic_csv += std::to_string(t) + "," + std::to_string(k) + "," + std::to_string(j) + "," +
                              fmt_double(delta) + "," + fmt_double(err) + "\n";
        };
    }
    if (trace_weights) {
        std::string cols = "t,i";
        for (int k = 1; k <= K; ++k) cols += ",lambda_" + std::to_string(k);
        cols += ",ca_distance";
        out.weights_csv = "# mtac-weights v1 columns=" + cols + "\n" + cols + "\n";
        hooks.weight_step = [&](long t, long i, const TaskWeights& l, double dist) {
            out.weights_csv += std::to_string(t) + "," + std::to_string(i);
            for (int k = 0; k < K; ++k) out.weights_csv += "," + fmt_double(l[k]);
            out.weights_csv += "," + fmt_double(dist) + "\n";
        };
    }
    out.trace = mtac_run(mdp, features, config, hooks);
    return out;
}

inline std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

/// Gap ratio uses the mean over the last min(20, T) rows against the row at t = 0.
inline json summarize_run(const TrainingTrace& trace, std::uint64_t seed, const std::vector<double>& optimal) {
    std::vector<double> gaps, ca, ms;
    for (const auto& r : trace.rows) {
        gaps.push_back(r.pareto_gap);
        ca.push_back(r.ca_distance);
        ms.push_back(r.elapsed_ms);
    }
    const double initial_gap = trace.rows.empty() ? trace.final_pareto_gap : trace.rows.front().pareto_gap;
    const std::size_t tail = std::min<std::size_t>(20, gaps.size());
    const double tail_gap = tail ? mean(std::vector<double>(gaps.end() - tail, gaps.end())) : trace.final_pareto_gap;
    std::vector<double> final_j = trace.final_objective.size() ? to_std(trace.final_objective) : std::vector<double>{};
    json run = {{"seed", seed},
                {"aborted", trace.aborted},
                {"abort_reason", trace.abort_reason},
                {"steps", trace.rows.size()},
                {"initial_pareto_gap", initial_gap},
                {"final_pareto_gap", trace.final_pareto_gap},
                {"tail_pareto_gap", tail_gap},
                {"gap_ratio", tail_gap / initial_gap},
                {"gap_slope", least_squares_slope(gaps)},
                {"mean_ca_distance", mean(ca)},
                {"mean_elapsed_ms", mean(ms)},
                {"final_objective", final_j},
                {"final_lambda", to_std(trace.final_lambda)},
                {"visitation_samples", trace.visitation_samples},
                {"critic_transitions", trace.critic_transitions},
                {"radius", trace.radius},
                {"beta", trace.beta},
                {"theta_hash", hex64(hash_theta(trace.final_theta))}};
    if (!final_j.empty() && optimal.size() == final_j.size()) {
        try {
            run["delta_m_vs_optimal"] = delta_m_percent(final_j, optimal, std::vector<bool>(final_j.size(), true));
        } catch (const std::domain_error&) {
            run["delta_m_vs_optimal"] = nullptr;
        }
    }
    json events = json::array();
    for (const auto& e : trace.events) events.push_back({{"t", e.t}, {"message", e.message}});
    run["events"] = events;
    return run;
}

namespace detail {
inline double json_number(const json& j) { return j.is_number() ? j.get<double>() : NAN; }

inline json aggregate_runs(const json& runs, int K) {
    auto med = [&](const char* key) {
        std::vector<double> v;
        for (const auto& r : runs) v.push_back(r.contains(key) ? json_number(r.at(key)) : NAN);
        return median(v);
    };
    json agg = {{"median_final_pareto_gap", med("final_pareto_gap")},
                {"median_gap_ratio", med("gap_ratio")},
                {"median_gap_slope", med("gap_slope")},
                {"median_mean_ca_distance", med("mean_ca_distance")},
                {"median_mean_elapsed_ms", med("mean_elapsed_ms")},
                {"median_delta_m_vs_optimal", med("delta_m_vs_optimal")}};
    std::vector<double> final_j;
    for (int k = 0; k < K; ++k) {
        std::vector<double> v;
        for (const auto& r : runs)
            if (r.at("final_objective").size() == static_cast<std::size_t>(K)) v.push_back(r.at("final_objective")[k]);
        final_j.push_back(median(v));
    }
    agg["median_final_objective"] = final_j;
    int aborted = 0;
    for (const auto& r : runs) aborted += r.at("aborted").get<bool>() ? 1 : 0;
    agg["aborted_runs"] = aborted;
    return agg;
}

// nlohmann writes NaN as null.
inline double nan_if_null(const json& j) { return j.is_null() ? NAN : j.get<double>(); }

/// Runs `jobs` callables on up to `workers` threads; rethrows the first failure.
inline void run_parallel(std::size_t jobs, int workers, const std::function<void(std::size_t)>& job) {
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto worker = [&] {
        for (std::size_t i = next++; i < jobs; i = next++) {
            try {
                job(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(failure_mutex);
                if (!failure) failure = std::current_exception();
            }
        }
    };
    const int n = std::max(1, std::min<int>(workers, static_cast<int>(jobs)));
    std::vector<std::thread> threads;
    for (int i = 1; i < n; ++i) threads.emplace_back(worker);
    worker();
    for (auto& t : threads) t.join();
    if (failure) std::rethrow_exception(failure);
}
}  // namespace detail

/// Runs every seed (in parallel up to spec.workers), writes one trace CSV per
/// seed plus summary.json into `out_dir`, and returns the summary document.
inline json run_experiment(const ExperimentSpec& spec, const fs::path& out_dir) {
    const MultiTaskMdp mdp = build_mdp(spec.mdp);
    const FeatureMap features = build_features(spec.features, mdp);
    features.check_consistent(mdp);
    spec.config.validate();
    const int K = mdp.num_tasks;

    std::vector<double> optimal;
    if (spec.config.oracle_diagnostics)
        for (int k = 0; k < K; ++k) optimal.push_back(optimal_objective(mdp, k));

    std::vector<json> runs(spec.seeds.size());
    detail::run_parallel(spec.seeds.size(), spec.workers, [&](std::size_t i) {
        const std::uint64_t seed = spec.seeds[i];
        RunOutput out = execute_run(mdp, features, spec.config, seed, spec.trace_critic, spec.trace_weights);
        const std::string stem = "seed" + std::to_string(seed);
        write_file_atomic(out_dir / ("trace_" + stem + ".csv"), trace_to_csv(out.trace, K));
        if (spec.trace_critic) write_file_atomic(out_dir / ("critic_" + stem + ".csv"), out.critic_csv);
        if (spec.trace_weights) write_file_atomic(out_dir / ("weights_" + stem + ".csv"), out.weights_csv);
        runs[i] = summarize_run(out.trace, seed, optimal);
    });

    json summary = {{"format", "mtac-summary/1"},
                    {"name", spec.name},
                    {"algorithm", to_string(spec.config.option)},
                    {"mdp_fingerprint", mdp_fingerprint(mdp)},
                    {"num_tasks", K},
                    {"seeds", spec.seeds},
                    {"config", config_to_json(spec.config)},
                    {"optimal_objective", optimal},
                    {"runs", runs}};
    summary["aggregate"] = detail::aggregate_runs(summary["runs"], K);
    write_file_atomic(out_dir / "summary.json", summary.dump(2) + "\n");
    return summary;
}

inline std::string sweep_label(const std::string& parameter, double value) {
    char v[40];
    std::snprintf(v, sizeof v, "%.10g", value);
    return parameter + "_" + v;
}

/// One experiment per sweep value, each in its own subdirectory, plus sweep.json.
inline json run_sweep(const ExperimentSpec& spec, const fs::path& out_dir) {
    if (!spec.sweep) throw ConfigError("config: 'sweep' section required for the sweep command");
    json points = json::array();
    for (double value : spec.sweep->values) {
        ExperimentSpec point = spec;
        set_config_parameter(point.config, spec.sweep->parameter, value);
        point.config.validate();
        point.name = spec.name + "/" + sweep_label(spec.sweep->parameter, value);
        const json summary = run_experiment(point, out_dir / sweep_label(spec.sweep->parameter, value));
        json row = {{"value", value}, {"aggregate", summary.at("aggregate")}};
        points.push_back(row);
    }
    json sweep = {{"format", "mtac-sweep/1"},
                  {"name", spec.name},
                  {"parameter", spec.sweep->parameter},
                  {"points", points}};
    write_file_atomic(out_dir / "sweep.json", sweep.dump(2) + "\n");
    return sweep;
}

inline bool any_aborted(const json& summary) { return summary.at("aggregate").at("aborted_runs").get<int>() > 0; }

// ---- oracle check ----

struct CheckResult {
    std::string property;
    std::string status;  // pass | fail | warn
    double value = NAN;
    std::string detail;
};

/// Read-only invariant suite over the configured MDP at theta_0 and a few seeded
/// random parameters. Never throws for a failed property; failures are reported.
inline std::vector<CheckResult> oracle_check(const ExperimentSpec& spec) {
    std::vector<CheckResult> results;
    auto add = [&](std::string name, bool ok, double value, std::string detail = "", bool warn_only = false) {
        results.push_back({std::move(name), ok ? "pass" : (warn_only ? "warn" : "fail"), value, std::move(detail)});
    };

    MultiTaskMdp mdp;
    try {
        mdp = build_mdp(spec.mdp);
        mdp.validate();
        add("mdp_invariants", true, 0.0);
    } catch (const ConfigError& e) {
        add("mdp_invariants", false, NAN, e.what());
        return results;
    }
    const FeatureMap features = build_features(spec.features, mdp);
    const bool one_hot = spec.features.kind == "one_hot" && !spec.features.duplicate_column;
    const int K = mdp.num_tasks;

    add("feature_bound", features.max_norm() <= features.c_phi_bound + 1e-12, features.max_norm(),
        "max ||phi|| vs C_phi = " + std::to_string(features.c_phi_bound));

    std::vector<SoftmaxPolicy> policies{SoftmaxPolicy::one_hot(mdp)};
    Rng rng(0x5EED);
    std::normal_distribution<double> normal;
    for (int i = 0; i < 3; ++i) {
        VectorXd theta(policies[0].dim());
        for (auto& x : theta) x = normal(rng);
        SoftmaxPolicy p = policies[0];
        p.set_theta(theta);
        policies.push_back(p);
    }

    double bellman = 0, stationarity = 0, identity = 0, score_max = 0, fd_err = 0, fw = 0, lambda_excess = -INFINITY,
           eps_app = 0, q_match = 0, td_res = 0;
    bool td_ok = true, negdef = true;
    std::string td_detail;
    for (const auto& policy : policies) {
        for (int k = 0; k < K; ++k) {
            const VectorXd q = exact_q(mdp, k, policy);
            bellman = std::max(bellman, bellman_residual(mdp, k, policy, q));
            const VectorXd d = exact_visitation(mdp, k, policy);
            stationarity = std::max({stationarity, visitation_residual(mdp, k, policy, d), std::abs(d.sum() - 1.0),
                                     std::max(0.0, -d.minCoeff())});
        }
        for (int s = 0; s < mdp.num_states; ++s) {
            VectorXd acc = VectorXd::Zero(policy.dim());
            for (int a = 0; a < mdp.num_actions; ++a) {
                const VectorXd psi = policy.score(s, a);
                acc += policy.action_probs(s)[a] * psi;
                score_max = std::max(score_max, psi.norm());
            }
            identity = std::max(identity, acc.norm());
        }

        // exact gradient vs (1 - gamma) times central differences of exact J
        const int m = policy.dim();
        std::vector<int> coords;
        if (m <= 256) {
            for (int i = 0; i < m; ++i) coords.push_back(i);
        } else {
            Rng pick(0xC0DE);
            for (int i = 0; i < 64; ++i) coords.push_back(static_cast<int>(pick() % static_cast<std::uint64_t>(m)));
        }
        for (int k = 0; k < K; ++k) {
            const VectorXd g = exact_policy_gradient(mdp, k, policy);
            VectorXd fd(coords.size()), gsub(coords.size());
            const double h = 1e-5;
            for (std::size_t c = 0; c < coords.size(); ++c) {
                SoftmaxPolicy plus = policy, minus = policy;
                VectorXd tp = policy.theta(), tm = policy.theta();
                tp[coords[c]] += h;
                tm[coords[c]] -= h;
                plus.set_theta(tp);
                minus.set_theta(tm);
                fd[c] = (1.0 - mdp.gamma) * (exact_objective(mdp, k, plus) - exact_objective(mdp, k, minus)) / (2 * h);
                gsub[c] = g[coords[c]];
            }
            const double err = (gsub - fd).norm();
            fd_err = std::max(fd_err, gsub.norm() > 1e-9 ? err / gsub.norm() : err);
        }

        const auto star = exact_lambda_star(exact_gradients(mdp, policy));
        fw = std::max(fw, star.fw_certificate);
        const GradientMatrix G = exact_gradients(mdp, policy);
        double best_random = INFINITY;
        for (int i = 0; i < 1000; ++i) {
            VectorXd l(K);
            for (auto& x : l) x = -std::log1p(-uniform01(rng));
            l /= l.sum();
            best_random = std::min(best_random, (G * l).squaredNorm());
        }
        lambda_excess = std::max(lambda_excess, star.gap - best_random);

        for (int k = 0; k < K; ++k) {
            try {
                const auto fp = exact_td_fixed_point(mdp, k, policy, features);
                td_res = std::max(td_res, fp.residual);
                negdef = negdef && fp.negative_definite;
                if (one_hot) q_match = std::max(q_match, (features.table[k] * fp.w_star - exact_q(mdp, k, policy)).cwiseAbs().maxCoeff());
            } catch (const NumericError& e) {
                td_ok = false;
                td_detail = e.what();
            }
        }
        if (td_ok) eps_app = std::max(eps_app, function_approx_error(mdp, policy, features));
    }

    add("bellman_residual", bellman <= 1e-10, bellman);
    add("visitation_stationarity", stationarity <= 1e-10, stationarity);
    add("score_identity", identity <= 1e-10, identity);
    add("score_bound", score_max <= 2.0 * policies[0].chi_bound() + 1e-12, score_max,
        "max ||psi|| vs 2 C_chi = " + std::to_string(2.0 * policies[0].chi_bound()));
    add("gradient_finite_difference", fd_err <= 1e-4, fd_err, "relative error, central differences h = 1e-5");
    add("lambda_star_certificate", fw <= 1e-9, fw, "Frank-Wolfe gap");
    add("lambda_star_vs_random", lambda_excess <= 1e-12, lambda_excess, "gap(lambda*) - min gap over 1000 random lambda");
    if (!td_ok) {
        add("td_fixed_point", false, NAN, td_detail);
        add("epsilon_app", false, NAN, "fixed point unavailable: " + td_detail);
    } else {
        add("td_fixed_point", td_res <= 1e-10, td_res, "||A w* + b||");
        add("critic_negative_definite", negdef, negdef ? 1.0 : 0.0,
            negdef ? "" : "symmetric part of A is not negative definite", true);
        if (one_hot) {
            add("epsilon_app", eps_app <= 1e-8, eps_app, "one-hot features must be exact");
            add("tabular_q_match", q_match <= 1e-8, q_match, "max |phi^T w* - Q|");
        } else {
            add("epsilon_app", std::isfinite(eps_app), eps_app, "max over checked parameters");
        }
    }
    return results;
}

/// Exact quantities at theta_0 for fixture generation: Q, d, gradients, w*, lambda*, gap.
inline json oracle_dump(const ExperimentSpec& spec) {
    const MultiTaskMdp mdp = build_mdp(spec.mdp);
    const FeatureMap features = build_features(spec.features, mdp);
    const SoftmaxPolicy policy = SoftmaxPolicy::one_hot(mdp);
    const ExactEvaluation ev = evaluate_exact(mdp, policy, features);
    const auto star = exact_lambda_star(exact_gradients(mdp, policy));
    json tasks = json::array();
    for (int k = 0; k < mdp.num_tasks; ++k)
        tasks.push_back({{"q", to_std(ev.q[k])},
                         {"v", to_std(ev.v[k])},
                         {"objective", ev.objective[k]},
                         {"visitation", to_std(ev.visitation[k])},
                         {"gradient", to_std(ev.gradient[k])},
                         {"w_star", to_std(ev.w_star[k])},
                         {"lambda_a", ev.lambda_a[k]}});
    return {{"format", "mtac-oracle/1"},
            {"mdp_fingerprint", mdp_fingerprint(mdp)},
            {"theta", to_std(policy.theta())},
            {"tasks", tasks},
            {"lambda_star", to_std(star.lambda.values())},
            {"pareto_gap", star.gap}};
}

inline bool checks_passed(const std::vector<CheckResult>& results) {
    for (const auto& r : results)
        if (r.status == "fail") return false;
    return true;
}

// ---- reports ----

struct ReportRow {
    std::string name;
    std::string algorithm;
    double median_final_gap = NAN;
    double median_gap_ratio = NAN;
    double median_ca_distance = NAN;
    double median_elapsed_ms = NAN;
    std::vector<double> median_final_objective;
    std::optional<double> delta_m;  // vs the named baseline
    std::string note;
};

/// Builds comparison rows. Delta m% against `baseline` is reported only when
/// the two summaries share the MDP fingerprint and the seed list; it is the
/// median over seeds of the per-seed value on final objectives (larger is better).
inline std::vector<ReportRow> compare_summaries(const std::vector<json>& summaries, const std::string& baseline) {
    const json* base = nullptr;
    for (const auto& s : summaries)
        if (s.at("name") == baseline) base = &s;
    if (!baseline.empty() && !base) throw ConfigError("report: no summary named '" + baseline + "'");

    std::vector<ReportRow> rows;
    for (const auto& s : summaries) {
        ReportRow r;
        const json& agg = s.at("aggregate");
        r.name = s.at("name").get<std::string>();
        r.algorithm = s.at("algorithm").get<std::string>();
        r.median_final_gap = detail::nan_if_null(agg.at("median_final_pareto_gap"));
        r.median_gap_ratio = detail::nan_if_null(agg.at("median_gap_ratio"));
        r.median_ca_distance = detail::nan_if_null(agg.at("median_mean_ca_distance"));
        r.median_elapsed_ms = detail::nan_if_null(agg.at("median_mean_elapsed_ms"));
        for (const auto& v : agg.at("median_final_objective")) r.median_final_objective.push_back(detail::nan_if_null(v));
        if (base) {
            if (s.at("mdp_fingerprint") != base->at("mdp_fingerprint")) {
                r.note = "different MDP";
            } else if (s.at("seeds") != base->at("seeds")) {
                r.note = "different seed set";
            } else {
                std::vector<double> per_seed;
                for (std::size_t i = 0; i < s.at("runs").size(); ++i) {
                    const auto m = s.at("runs")[i].at("final_objective").get<std::vector<double>>();
                    const auto b = base->at("runs")[i].at("final_objective").get<std::vector<double>>();
                    try {
                        per_seed.push_back(delta_m_percent(m, b, std::vector<bool>(m.size(), true)));
                    } catch (const std::exception&) {
                        per_seed.push_back(NAN);
                    }
                }
                r.delta_m = median(per_seed);
            }
        }
        rows.push_back(std::move(r));
    }
    return rows;
}

inline std::string format_report(const std::vector<ReportRow>& rows, const std::string& baseline) {
    std::string out;
    char buf[512];
    std::snprintf(buf, sizeof buf, "%-28s %-6s %12s %12s %12s %10s %10s  %s\n", "name", "algo", "final_gap",
                  "gap_ratio", "ca_distance", "ms/step", "dm%", "final J (median)");
    out += buf;
    for (const auto& r : rows) {
        std::string js;
        for (double v : r.median_final_objective) {
            std::snprintf(buf, sizeof buf, "%.4f ", v);
            js += buf;
        }
        std::string dm = r.note.empty() ? "-" : "n/a";
        if (r.delta_m) {
            std::snprintf(buf, sizeof buf, "%.2f", *r.delta_m);
            dm = buf;
        }
        std::snprintf(buf, sizeof buf, "%-28s %-6s %12.4g %12.4g %12.4g %10.3f %10s  %s%s\n", r.name.c_str(),
                      r.algorithm.c_str(), r.median_final_gap, r.median_gap_ratio, r.median_ca_distance,
                      r.median_elapsed_ms, dm.c_str(), js.c_str(), r.note.empty() ? "" : ("(" + r.note + ")").c_str());
        out += buf;
    }
    if (!baseline.empty()) out += "dm% is relative to '" + baseline + "' (lower is better)\n";
    return out;
}

/// Delta m% of every row of a static metric table against its baseline row.
inline std::vector<std::pair<std::string, double>> table_delta_m(const json& table) {
    detail::only_keys(table, {"format", "description", "tasks", "larger_is_better", "baseline", "rows"}, "table");
    if (detail::get_required<std::string>(table, "format", "table") != "mtac-table/1")
        throw ConfigError("table: unsupported format (expected mtac-table/1)");
    const auto larger = detail::get_required<std::vector<bool>>(table, "larger_is_better", "table");
    const auto baseline_name = detail::get_required<std::string>(table, "baseline", "table");
    const auto rows = detail::get_required<std::vector<json>>(table, "rows", "table");
    std::map<std::string, std::vector<double>> values;
    for (const auto& r : rows) {
        detail::only_keys(r, {"name", "values"}, "table.rows");
        values[detail::get_required<std::string>(r, "name", "table.rows")] =
            detail::get_required<std::vector<double>>(r, "values", "table.rows");
    }
    if (!values.count(baseline_name)) throw ConfigError("table: baseline row '" + baseline_name + "' not found");
    std::vector<std::pair<std::string, double>> out;
    for (const auto& r : rows) {
        const auto name = r.at("name").get<std::string>();
        if (name == baseline_name) continue;
        out.emplace_back(name, delta_m_percent(values[name], values[baseline_name], larger));
    }
    return out;
}

}  // namespace mtac

#endif  // MTAC_EXPERIMENT_HPP
