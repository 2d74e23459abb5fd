// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

#include <chrono>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include <mtac/experiment.hpp>

using namespace mtac;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, double a) {
    char buf[128];
    std::snprintf(buf, sizeof buf, f, a);
    return buf;
}

std::string fmt(const char* f, double a, double b) {
    char buf[160];
    std::snprintf(buf, sizeof buf, f, a, b);
    return buf;
}

std::string fmt(const char* f, double a, double b, double c) {
    char buf[200];
    std::snprintf(buf, sizeof buf, f, a, b, c);
    return buf;
}

fs::path source_path(const std::string& rel) { return fs::path(MTAC_SOURCE_DIR) / rel; }

SoftmaxPolicy random_policy(const MultiTaskMdp& mdp, Rng& rng, double scale = 1.0) {
    SoftmaxPolicy p = SoftmaxPolicy::one_hot(mdp);
    std::normal_distribution<double> n(0.0, scale);
    VectorXd theta(p.dim());
    for (auto& x : theta) x = n(rng);
    p.set_theta(theta);
    return p;
}

// ---- 1 ----
Outcome delta_m_fidelity() {
    const auto doc = parse_json_text(read_file(source_path("configs/mt10_table2.json")), "mt10_table2.json");
    const auto rows = table_delta_m(doc);
    double five = NAN, ten = NAN;
    for (const auto& [name, dm] : rows) {
        if (name == "5 steps") five = dm;
        if (name == "10 steps") ten = dm;
    }
    const bool ok = std::abs(five + 9.33) <= 0.01 && std::abs(ten + 15.67) <= 0.01;
    return {ok, fmt("5 steps %.4f (want -9.33), 10 steps %.4f (want -15.67)", five, ten)};
}

// ---- 2 ----
Outcome tabular_exactness() {
    const auto mdp = build_conflict_chain();
    const auto features = build_one_hot_features(mdp);
    Rng rng(2);
    std::vector<SoftmaxPolicy> policies{SoftmaxPolicy::one_hot(mdp)};
    for (int i = 0; i < 5; ++i) policies.push_back(random_policy(mdp, rng));
    double eps = 0.0, q_err = 0.0;
    for (const auto& p : policies) {
        eps = std::max(eps, function_approx_error(mdp, p, features));
        for (int k = 0; k < mdp.num_tasks; ++k) {
            const auto fp = exact_td_fixed_point(mdp, k, p, features);
            q_err = std::max(q_err, (features.table[k] * fp.w_star - exact_q(mdp, k, p)).cwiseAbs().maxCoeff());
        }
    }
    return {eps <= 1e-8 && q_err <= 1e-8, fmt("eps_app %.3g, max |phi^T w* - Q| %.3g over 6 policies", eps, q_err)};
}

// ---- 3 ----
Outcome critic_rate() {
    const auto mdp = build_conflict_chain();
    const auto features = build_one_hot_features(mdp);
    const auto policy = SoftmaxPolicy::one_hot(mdp);
    std::vector<TdFixedPoint> fps;
    double radius = 0.0;
    for (int k = 0; k < mdp.num_tasks; ++k) {
        fps.push_back(exact_td_fixed_point(mdp, k, policy, features));
        radius = std::max(radius, 1.5 * fps.back().w_star.norm());
    }
    const double u_delta = td_error_bound(mdp.gamma, features.c_phi_bound, radius);
    bool inside = true, bounded = true;
    double worst_ratio = INFINITY, max_delta = 0.0;
    for (int k = 0; k < mdp.num_tasks; ++k) {
        std::vector<double> small, large;
        for (std::uint64_t seed = 0; seed < 20; ++seed) {
            for (long n : {100L, 10000L}) {
                TdMonitor monitor;
                monitor.on_step = [&](long, const VectorXd& w, double delta) {
                    inside = inside && w.norm() <= radius * (1 + 1e-12);
                    bounded = bounded && std::abs(delta) <= u_delta;
                };
                Rng rng = make_stream(seed, {static_cast<std::uint64_t>(k), static_cast<std::uint64_t>(n)});
                const VectorXd w = run_td0(mdp, k, policy, features, n, TdStepSchedule(fps[k].lambda_a), radius,
                                           VectorXd::Zero(features.dim), rng, &monitor);
                max_delta = std::max(max_delta, monitor.max_abs_delta);
                (n == 100 ? small : large).push_back((w - fps[k].w_star).squaredNorm());
            }
        }
        worst_ratio = std::min(worst_ratio, median(small) / median(large));
    }
    return {worst_ratio >= 10.0 && inside && bounded,
            fmt("worst-task median ratio %.1f (need >= 10), max |delta| %.3f vs U_delta %.3f", worst_ratio, max_delta,
                u_delta) +
                (inside ? "" : ", iterate left the ball")};
}

// ---- 4 ----
// Minimum of lambda^T G lambda over the grid {i h} on the K=2 or K=3 simplex.
// For K=3 each line lambda_1 = i h is a convex quadratic in lambda_2, so its
// lattice minimum sits at one of the two lattice points around the
// continuous minimizer; this yields the exact grid minimum.
double grid_minimum(const MatrixXd& gram, int steps) {
    const double h = 1.0 / steps;
    const int K = static_cast<int>(gram.rows());
    auto value = [&](const VectorXd& l) { return l.dot(gram * l); };
    double best = INFINITY;
    if (K == 2) {
        for (int i = 0; i <= steps; ++i) {
            VectorXd l(2);
            l << i * h, 1.0 - i * h;
            best = std::min(best, value(l));
        }
        return best;
    }
    for (int i = 0; i <= steps; ++i) {
        const double a = i * h;
        const int max_j = steps - i;
        // f(b) = [a, b, 1-a-b] G [..]^T, quadratic in b
        auto f = [&](int j) {
            VectorXd l(3);
            l << a, j * h, std::max(0.0, 1.0 - a - j * h);
            return value(l);
        };
        const double f0 = f(0), f1 = max_j >= 1 ? f(1) : f0, f2 = max_j >= 2 ? f(2) : f1;
        int candidates[4] = {0, max_j, 0, max_j};
        if (max_j >= 2) {
            const double curv = (f2 - 2 * f1 + f0) / (h * h);
            const double slope0 = (f1 - f0) / h - 0.5 * curv * h;
            if (curv > 0) {
                const double b_star = -slope0 / curv;
                const int lo = std::clamp(static_cast<int>(std::floor(b_star / h)), 0, max_j);
                candidates[2] = lo;
                candidates[3] = std::min(lo + 1, max_j);
            }
        }
        for (int j : candidates) best = std::min(best, f(j));
    }
    return best;
}

Outcome min_norm_oracle() {
    Rng rng(4);
    std::normal_distribution<double> n;
    // closed form, K = 2
    double closed_err = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
        const int m = 1 + trial % 8;
        MatrixXd G(m, 2);
        for (auto& x : G.reshaped()) x = n(rng);
        const VectorXd g1 = G.col(0), g2 = G.col(1);
        const double denom = (g1 - g2).squaredNorm();
        const double l1 = denom > 0 ? std::clamp((g2 - g1).dot(g2) / denom, 0.0, 1.0) : 0.5;
        const double gap = (l1 * g1 + (1 - l1) * g2).squaredNorm();
        const auto star = exact_lambda_star(G);
        closed_err = std::max({closed_err, std::abs(star.gap - gap), denom > 0 ? std::abs(star.lambda[0] - l1) : 0.0});
    }
    // random feasible lambda, K <= 5, m <= 8
    double random_excess = -INFINITY;
    for (int trial = 0; trial < 1000; ++trial) {
        const int K = 1 + trial % 5, m = 1 + (trial / 5) % 8;
        MatrixXd G(m, K);
        for (auto& x : G.reshaped()) x = n(rng);
        const double gap = exact_lambda_star(G).gap;
        double best = INFINITY;
        for (int i = 0; i < 1000; ++i) {
            VectorXd l(K);
            for (auto& x : l) x = -std::log1p(-uniform01(rng));
            l /= l.sum();
            best = std::min(best, (G * l).squaredNorm());
        }
        random_excess = std::max(random_excess, gap - best);
    }
    // 1e-4 grids, K in {2, 3}
    double grid_excess = -INFINITY;
    for (int trial = 0; trial < 1000; ++trial) {
        const int K = 2 + trial % 2, m = 1 + (trial / 2) % 8;
        MatrixXd G(m, K);
        for (auto& x : G.reshaped()) x = n(rng);
        const double gap = exact_lambda_star(G).gap;
        grid_excess = std::max(grid_excess, gap - grid_minimum(G.transpose() * G, 10000));
    }
    const bool ok = closed_err <= 1e-8 && random_excess <= 0.0 && grid_excess <= 1e-6;
    return {ok, fmt("closed-form err %.2g, gap - best random %.2g, gap - grid min %.2g", closed_err, random_excess,
                    grid_excess)};
}

// ---- 5 ----
Outcome ca_convergence() {
    const auto mdp = build_conflict_chain();
    const auto policy = SoftmaxPolicy::one_hot(mdp);
    const GradientMatrix exact = exact_gradients(mdp, policy);
    const auto star = exact_lambda_star(exact);
    auto draw = [&] { return exact; };
    const TaskWeights lam = ca_iterate(TaskWeights::uniform(mdp.num_tasks), draw, draw, 10000, 1.0);
    const double exact_dist = ca_distance(lam, exact, star.lambda, exact);

    // sampled gradients: full runs on the golden MDP with N_CA swept
    auto spec = load_spec(source_path("configs/sweep_nca.json"));
    const auto features = build_features(spec.features, mdp);
    std::vector<double> medians;
    for (double n_ca : spec.sweep->values) {
        MtacConfig cfg = spec.config;
        set_config_parameter(cfg, "n_ca", n_ca);
        cfg.record_timing = false;
        std::vector<double> per_seed;
        for (auto seed : spec.seeds) {
            cfg.seed = seed;
            const auto trace = mtac_run(mdp, features, cfg);
            std::vector<double> d;
            for (const auto& r : trace.rows) d.push_back(r.ca_distance);
            per_seed.push_back(mean(d));
        }
        medians.push_back(median(per_seed));
    }
    bool decreasing = true;
    for (std::size_t i = 1; i < medians.size(); ++i) decreasing = decreasing && medians[i] < medians[i - 1];
    std::string sweep = "sweep medians";
    for (double v : medians) sweep += fmt(" %.4g", v);
    return {exact_dist < 1e-2 && decreasing, fmt("exact-gradient distance at N_CA=1e4 %.3g; ", exact_dist) + sweep};
}

// ---- 6 and 7 share the golden runs ----
struct GoldenRuns {
    std::vector<TrainingTrace> ca, fc;
};

GoldenRuns golden_runs() {
    const auto ca_spec = load_spec(source_path("configs/golden_ca.json"));
    const auto fc_spec = load_spec(source_path("configs/golden_fc.json"));
    const auto mdp = build_mdp(ca_spec.mdp);
    const auto features = build_features(ca_spec.features, mdp);
    GoldenRuns runs;
    // CA and FC alternate seed by seed
    for (std::size_t i = 0; i < ca_spec.seeds.size(); ++i) {
        MtacConfig ca = ca_spec.config, fc = fc_spec.config;
        ca.seed = ca_spec.seeds[i];
        fc.seed = fc_spec.seeds[i];
        runs.ca.push_back(mtac_run(mdp, features, ca));
        runs.fc.push_back(mtac_run(mdp, features, fc));
    }
    return runs;
}

Outcome pareto_gap_decrease(const GoldenRuns& runs) {
    bool ok = true;
    std::string detail;
    for (const auto* set : {&runs.ca, &runs.fc}) {
        std::vector<double> ratios, slopes;
        for (const auto& trace : *set) {
            if (trace.aborted || trace.rows.empty()) {
                ratios.push_back(NAN);
                continue;
            }
            std::vector<double> gaps;
            for (const auto& r : trace.rows) gaps.push_back(r.pareto_gap);
            ratios.push_back(trace.final_pareto_gap / trace.rows.front().pareto_gap);
            slopes.push_back(least_squares_slope(gaps));
        }
        const double ratio = median(ratios), slope = median(slopes);
        ok = ok && ratio <= 0.2 && slope < 0.0;
        detail += std::string(set == &runs.ca ? "CA" : " FC") + fmt(" ratio %.3g slope %.3g;", ratio, slope);
    }
    return {ok, detail};
}

Outcome ca_fc_tradeoff(const GoldenRuns& runs) {
    auto stats = [](const std::vector<TrainingTrace>& set) {
        std::vector<double> dist, ms;
        for (const auto& trace : set) {
            std::vector<double> d, e;
            for (const auto& r : trace.rows) {
                d.push_back(r.ca_distance);
                e.push_back(r.elapsed_ms);
            }
            dist.push_back(mean(d));
            ms.push_back(mean(e));
        }
        return std::pair{median(dist), median(ms)};
    };
    const auto [ca_dist, ca_ms] = stats(runs.ca);
    const auto [fc_dist, fc_ms] = stats(runs.fc);
    const bool budget = runs.ca.front().visitation_samples == runs.fc.front().visitation_samples;
    return {budget && ca_dist < fc_dist && fc_ms < ca_ms,
            fmt("CA distance %.4g vs FC %.4g; ", ca_dist, fc_dist) + fmt("ms/step CA %.3f vs FC %.3f", ca_ms, fc_ms) +
                (budget ? "" : "; sample budgets differ")};
}

// ---- 8 ----
Outcome gradient_fidelity() {
    const auto mdp = build_conflict_chain();
    const auto features = build_one_hot_features(mdp);
    Rng rng(8);
    double fd_err = 0.0;
    for (int i = 0; i < 20; ++i) {
        const auto policy = random_policy(mdp, rng);
        for (int k = 0; k < mdp.num_tasks; ++k) {
            const VectorXd g = exact_policy_gradient(mdp, k, policy);
            VectorXd fd(g.size());
            const double h = 1e-5;
            for (int c = 0; c < g.size(); ++c) {
                SoftmaxPolicy plus = policy, minus = policy;
                VectorXd tp = policy.theta(), tm = policy.theta();
                tp[c] += h;
                tm[c] -= h;
                plus.set_theta(tp);
                minus.set_theta(tm);
                fd[c] = (1.0 - mdp.gamma) * (exact_objective(mdp, k, plus) - exact_objective(mdp, k, minus)) / (2 * h);
            }
            fd_err = std::max(fd_err, (g - fd).norm() / g.norm());
        }
    }

    // samplers at 1e5 draws against their oracle expectations
    const long n = 100000;
    const auto policy = random_policy(mdp, rng, 0.5);
    double visitation_tv = 0.0, grad_err = 0.0, transition_tv = 0.0;
    CriticWeights critic = CriticWeights::zeros(mdp.num_tasks, features.dim, 10.0);
    for (int k = 0; k < mdp.num_tasks; ++k) {
        critic.w[k] = exact_td_fixed_point(mdp, k, policy, features).w_star;
        const VectorXd d = exact_visitation(mdp, k, policy);
        VectorXd counts = VectorXd::Zero(d.size());
        Rng s = make_stream(8, {static_cast<std::uint64_t>(k), 1});
        for (long i = 0; i < n; ++i) {
            const auto smp = sample_visitation(mdp, k, policy, s);
            counts[mdp.pair(smp.state, smp.action)] += 1.0;
        }
        visitation_tv = std::max(visitation_tv, 0.5 * (counts / n - d).cwiseAbs().sum());

        const int pair = mdp.pair(2, 1);
        VectorXd next = VectorXd::Zero(mdp.num_states);
        Rng t = make_stream(8, {static_cast<std::uint64_t>(k), 2});
        for (long i = 0; i < n; ++i) next[step(mdp, k, 2, 1, t).first] += 1.0;
        transition_tv = std::max(transition_tv, 0.5 * (next / n - mdp.transitions[k].row(pair).transpose()).cwiseAbs().sum());
    }
    Rng g = make_stream(8, {3});
    const GradientMatrix est = mean_gradient_matrix(mdp, policy, features, critic, n, g);
    for (int k = 0; k < mdp.num_tasks; ++k) {
        const VectorXd truth = exact_smoothed_gradient(mdp, k, policy, features, critic.w[k]);
        grad_err = std::max(grad_err, (est.col(k) - truth).norm() / truth.norm());
    }
    const bool ok = fd_err <= 1e-4 && visitation_tv <= 0.02 && transition_tv <= 0.02 && grad_err <= 0.02;
    return {ok, fmt("FD rel err %.2g; visitation TV %.4f, transition TV %.4f", fd_err, visitation_tv, transition_tv) +
                    fmt(", gradient estimator rel err %.4f", grad_err)};
}

// ---- 9 ----
Outcome determinism() {
    bool ok = true;
    std::string detail;
    for (const char* name : {"golden_ca.json", "golden_fc.json", "golden_fixed.json", "random_features.json"}) {
        auto spec = load_spec(source_path(std::string("configs/") + name));
        spec.config.T = std::min<long>(spec.config.T, 20);
        spec.config.record_timing = false;
        const auto mdp = build_mdp(spec.mdp);
        const auto features = build_features(spec.features, mdp);
        for (std::uint64_t seed : {spec.seeds.front(), spec.seeds.back()}) {
            const auto a = execute_run(mdp, features, spec.config, seed, true, true);
            const auto b = execute_run(mdp, features, spec.config, seed, true, true);
            const bool same = trace_to_csv(a.trace, mdp.num_tasks) == trace_to_csv(b.trace, mdp.num_tasks) &&
                              a.critic_csv == b.critic_csv && a.weights_csv == b.weights_csv &&
                              hash_theta(a.trace.final_theta) == hash_theta(b.trace.final_theta);
            ok = ok && same;
            if (!same) detail += std::string(name) + " seed " + std::to_string(seed) + " differs; ";
        }
    }
    return {ok, ok ? "4 configs x 2 seeds rerun to byte-identical trace, critic and weight CSVs" : detail};
}

}  // namespace

int main() {
    using clock = std::chrono::steady_clock;
    int failures = 0;
    auto report = [&](int id, const char* title, const std::function<Outcome()>& fn) {
        const auto start = clock::now();
        Outcome out;
        try {
            out = fn();
        } catch (const std::exception& e) {
            out = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(clock::now() - start).count();
        std::printf("%s criterion %d (%s): %s [%.1f s]\n", out.pass ? "PASS" : "FAIL", id, title, out.detail.c_str(),
                    secs);
        std::fflush(stdout);
        failures += out.pass ? 0 : 1;
    };

    report(1, "delta-m fidelity", delta_m_fidelity);
    report(2, "tabular exactness", tabular_exactness);
    report(3, "critic rate", critic_rate);
    report(4, "min-norm oracle", min_norm_oracle);
    report(5, "CA convergence", ca_convergence);
    GoldenRuns runs;
    const auto start = clock::now();
    try {
        runs = golden_runs();
    } catch (const std::exception& e) {
        std::printf("golden runs failed: %s\n", e.what());
    }
    std::printf("(golden CA/FC runs, 10 seeds each, took %.1f s)\n",
                std::chrono::duration<double>(clock::now() - start).count());
    report(6, "Pareto-gap decrease", [&] { return runs.ca.empty() ? Outcome{false, "no runs"} : pareto_gap_decrease(runs); });
    report(7, "CA-vs-FC trade-off", [&] { return runs.ca.empty() ? Outcome{false, "no runs"} : ca_fc_tradeoff(runs); });
    report(8, "gradient fidelity", gradient_fidelity);
    report(9, "determinism", determinism);
    std::printf("%d of 9 criteria failed\n", failures);
    return failures == 0 ? 0 : 1;
}
