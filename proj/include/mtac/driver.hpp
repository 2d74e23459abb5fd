#ifndef MTAC_DRIVER_HPP
#define MTAC_DRIVER_HPP

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "common.hpp"
#include "critic.hpp"
#include "direction.hpp"
#include "mdp.hpp"
#include "oracle.hpp"
#include "policy.hpp"
#include "weights.hpp"

namespace mtac {

enum class WeightOption { CA, FC, Fixed };

inline const char* to_string(WeightOption o) {
    switch (o) {
        case WeightOption::CA: return "ca";
        case WeightOption::FC: return "fc";
        case WeightOption::Fixed: return "fixed";
    }
    return "?";
}

struct MtacConfig {
    long T = 100;
    long n_critic = 1000;
    long n_actor = 100;
    long n_ca = 100;
    long n_fc = 100;
    double beta = 1.0;
    double c = 0.5;
    double c_prime = 0.05;
    WeightOption option = WeightOption::CA;
    std::vector<double> fixed_lambda;  // FIXED option; empty means uniform
    std::uint64_t seed = 0;
    bool oracle_diagnostics = true;
    std::optional<double> lambda_a;  // overrides the oracle value
    std::optional<double> radius;    // overrides 1.5 * max ||w*|| at theta_0
    bool clamp_beta = false;         // clamp beta to 1/L_J
    bool record_timing = true;

    void validate() const {
        if (T < 0) throw ConfigError("config: T must be >= 0");
        if (n_critic < 1 || n_actor < 1) throw ConfigError("config: n_critic and n_actor must be >= 1");
        if (option == WeightOption::CA && n_ca < 1) throw ConfigError("config: n_ca must be >= 1 for the CA option");
        if (option == WeightOption::FC && n_fc < 1) throw ConfigError("config: n_fc must be >= 1 for the FC option");
        if (!(beta > 0.0)) throw ConfigError("config: beta must be > 0");
        if (option == WeightOption::CA && !(c > 0.0)) throw ConfigError("config: c must be > 0");
        if (option == WeightOption::FC && !(c_prime > 0.0)) throw ConfigError("config: c_prime must be > 0");
        if (lambda_a && !(*lambda_a > 0.0)) throw ConfigError("config: lambda_a must be > 0");
        if (radius && !(*radius > 0.0)) throw ConfigError("config: radius must be > 0");
    }
};

/// Metrics for one outer step t, measured at theta_t with the freshly computed
/// lambda_{t+1} and critic w_{t+1}. Oracle columns are NaN when diagnostics are off.
struct TraceRow {
    long t = 0;
    VectorXd lambda;
    VectorXd objective;
    double pareto_gap = NAN;
    double ca_distance = NAN;
    double critic_err_max = NAN;
    double elapsed_ms = 0.0;
    std::uint64_t theta_hash = 0;
};

struct RunEvent {
    long t = 0;
    std::string message;
};

struct TrainingTrace {
    std::vector<TraceRow> rows;
    std::vector<RunEvent> events;
    VectorXd final_theta;
    VectorXd final_lambda;
    double radius = 0.0;
    double beta = 0.0;
    bool aborted = false;
    std::string abort_reason;
    long visitation_samples = 0;
    long critic_transitions = 0;
    /// Oracle objective and Pareto gap at the final theta (NaN without diagnostics).
    VectorXd final_objective;
    double final_pareto_gap = NAN;
};

/// Optional per-iteration sinks; used for verbose CSV tracing.
struct RunHooks {
    std::function<void(long t, int task, long j, double delta, double err_to_fixed_point)> critic_step;
    /// ca_distance is NaN unless oracle diagnostics are on.
    std::function<void(long t, long i, const TaskWeights& lambda, double ca_distance)> weight_step;
};

/// FNV-1a over the raw bytes of theta.
inline std::uint64_t hash_theta(const VectorXd& theta) {
    std::uint64_t h = 1469598103934665603ULL;
    const auto* bytes = reinterpret_cast<const unsigned char*>(theta.data());
    for (std::size_t i = 0; i < sizeof(double) * static_cast<std::size_t>(theta.size()); ++i) {
        h ^= bytes[i];
        h *= 1099511628211ULL;
    }
    return h;
}

/// Column k averages n_actor visitation samples of (phi^T w^k) psi.
template <class URBG>
GradientMatrix estimate_actor_gradients(const MultiTaskMdp& mdp, const SoftmaxPolicy& policy,
                                        const FeatureMap& features, const CriticWeights& critic, long n_actor,
                                        URBG& rng) {
    if (n_actor < 1) throw ConfigError("estimate_actor_gradients: n_actor must be >= 1");
    return mean_gradient_matrix(mdp, policy, features, critic, n_actor, rng);
}

/// theta' = theta + beta * sum_k lambda_k grads.col(k).
inline SoftmaxPolicy actor_step(const SoftmaxPolicy& policy, const TaskWeights& weights, const GradientMatrix& grads,
                                double beta) {
    if (beta < 0.0) throw ConfigError("actor_step: beta must be >= 0");
    require(grads.rows() == policy.dim(), "actor_step: gradient dimension mismatch");
    VectorXd theta = policy.theta() + beta * weights.combine(grads);
    if (!theta.allFinite()) throw NumericError("actor_step: non-finite theta after update");
    SoftmaxPolicy next = policy;
    next.set_theta(std::move(theta));
    return next;
}

/// Smoothness and step-size constants of the convergence analysis.
struct TheoryConstants {
    double l_pi = 0.0;
    double l_j = 0.0;
    double u_delta = 0.0;
    double beta_max = 0.0;
    double c_prime_max = 0.0;
    double c_phi = 0.0;
    double radius = 0.0;
    double lambda_a = 0.0;

    /// Upper bound on E||w_N - w*||^2 after N projected TD(0) steps.
    double critic_bound(long n) const {
        const double np1 = static_cast<double>(n + 1);
        return 4.0 * radius * radius / np1 +
               u_delta * u_delta * c_phi * c_phi * std::log(static_cast<double>(n)) / (4.0 * lambda_a * lambda_a * np1);
    }
};

inline TheoryConstants compute_theory_constants(double c_phi, double c_pi, double l_phi, double gamma, double m_erg,
                                                double rho, double b, double lambda_a) {
    if (!(rho > 0.0 && rho < 1.0)) throw ConfigError("theory constants: rho must lie in (0,1)");
    if (!(gamma >= 0.0 && gamma < 1.0)) throw ConfigError("theory constants: gamma must lie in [0,1)");
    if (!(c_phi > 0.0) || !(c_pi >= 0.0) || !(l_phi >= 0.0) || !(m_erg > 0.0) || !(b >= 0.0) || !(lambda_a > 0.0))
        throw ConfigError("theory constants: parameter out of domain");
    TheoryConstants tc;
    tc.c_phi = c_phi;
    tc.radius = b;
    tc.lambda_a = lambda_a;
    tc.l_pi = 0.5 * c_pi * (1.0 + std::ceil(std::log(m_erg) / std::log(rho)) + 1.0 / (1.0 - rho));
    tc.l_j = (4.0 * tc.l_pi * c_phi + l_phi) / ((1.0 - gamma) * (1.0 - gamma));
    tc.u_delta = td_error_bound(gamma, c_phi, b);
    tc.beta_max = tc.l_j > 0.0 ? 1.0 / tc.l_j : INFINITY;
    tc.c_prime_max = fc_step_limit(c_phi, b);
    return tc;
}

/// Doeblin minorization of the transition kernels: every row dominates
/// eps * nu, giving TV mixing m rho^t with m = 1, rho = 1 - eps.
inline double ergodicity_rate(const MultiTaskMdp& mdp) {
    double eps = 1.0;
    for (const auto& P : mdp.transitions) eps = std::min(eps, P.colwise().minCoeff().sum());
    return std::clamp(1.0 - eps, 1e-12, 1.0 - 1e-12);
}

namespace detail {
enum Stage : std::uint64_t { kCritic = 1, kWeightsFirst = 2, kWeightsSecond = 3, kActor = 4 };
}

/// The outer multi-task actor-critic loop.
///
/// Per outer step: projected TD(0) per task (warm-started), a weight update
/// (CA, FC or fixed), an actor gradient estimate and an ascent step using the
/// new weights. Every random draw comes from a stream keyed by
/// (seed, t, stage, task), so traces are reproducible. Oracle work (fixed
/// points, exact gradients, lambda*) is excluded from elapsed_ms.
inline TrainingTrace mtac_run(const MultiTaskMdp& mdp, const FeatureMap& features, const MtacConfig& config,
                              const RunHooks& hooks = {}) {
    config.validate();
    mdp.validate();
    features.check_consistent(mdp);
    const int K = mdp.num_tasks;

    SoftmaxPolicy policy = SoftmaxPolicy::one_hot(mdp);
    TrainingTrace trace;

    TaskWeights lambda = TaskWeights::uniform(K);
    if (config.option == WeightOption::Fixed && !config.fixed_lambda.empty()) {
        if (static_cast<int>(config.fixed_lambda.size()) != K)
            throw ConfigError("config: fixed_lambda must have one entry per task");
        lambda = TaskWeights(Eigen::Map<const VectorXd>(config.fixed_lambda.data(), K));
    }

    const bool need_oracle = config.oracle_diagnostics || !config.lambda_a || !config.radius;
    double radius = 0.0;
    if (config.radius) {
        radius = *config.radius;
    } else {
        double worst = 0.0;
        for (int k = 0; k < K; ++k)
            worst = std::max(worst, exact_td_fixed_point(mdp, k, policy, features).w_star.norm());
        radius = 1.5 * worst;
        if (radius <= 0.0) radius = 1.0;
    }
    trace.radius = radius;

    const double c_phi = std::max(2.0 * policy.chi_bound(), features.c_phi_bound);
    double beta = config.beta;
    if (config.clamp_beta) {
        Rng probe = make_stream(config.seed, {0xC0FFEE});
        const auto smooth = estimate_smoothness(policy, 64, 1.0, probe);
        const auto tc = compute_theory_constants(c_phi, smooth.c_pi, smooth.l_phi, mdp.gamma, 1.0,
                                                 ergodicity_rate(mdp), radius, 1.0);
        if (beta > tc.beta_max) {
            trace.events.push_back({0, "beta clamped from " + std::to_string(beta) + " to 1/L_J = " +
                                           std::to_string(tc.beta_max)});
            beta = tc.beta_max;
        }
    }
    trace.beta = beta;
    if (config.option == WeightOption::FC && config.c_prime > fc_step_limit(c_phi, radius))
        trace.events.push_back({0, "c_prime " + std::to_string(config.c_prime) + " exceeds 1/(8 C_phi^2 B) = " +
                                       std::to_string(fc_step_limit(c_phi, radius))});

    CriticWeights critic = CriticWeights::zeros(K, features.dim, radius);
    std::vector<bool> radius_warned(K, false), negdef_warned(K, false);
    using clock = std::chrono::steady_clock;

    for (long t = 0; t < config.T; ++t) {
        TraceRow row;
        row.t = t;
        row.theta_hash = hash_theta(policy.theta());
        double oracle_ms = 0.0;
        const auto start = clock::now();
        auto timed_oracle = [&](auto&& fn) {
            const auto o_start = clock::now();
            fn();
            oracle_ms += std::chrono::duration<double, std::milli>(clock::now() - o_start).count();
        };

        // oracle quantities at theta_t
        std::vector<TdFixedPoint> fixed_points;
        GradientMatrix exact(policy.dim(), K), smoothed(policy.dim(), K);
        LambdaStar star;
        try {
            if (need_oracle) {
                timed_oracle([&] {
                    for (int k = 0; k < K; ++k) {
                        fixed_points.push_back(exact_td_fixed_point(mdp, k, policy, features));
                        const auto& fp = fixed_points.back();
                        if (!fp.negative_definite && !negdef_warned[k]) {
                            negdef_warned[k] = true;
                            trace.events.push_back(
                                {t, "task " + std::to_string(k) + ": symmetric part of A is not negative definite"});
                        }
                        if (fp.w_star.norm() > radius && !radius_warned[k]) {
                            radius_warned[k] = true;
                            trace.events.push_back({t, "task " + std::to_string(k) + ": ||w*|| = " +
                                                           std::to_string(fp.w_star.norm()) +
                                                           " exceeds the projection radius " + std::to_string(radius)});
                        }
                    }
                    if (config.oracle_diagnostics) {
                        row.objective.resize(K);
                        for (int k = 0; k < K; ++k) {
                            row.objective[k] = exact_objective(mdp, k, policy);
                            exact.col(k) = exact_policy_gradient(mdp, k, policy);
                        }
                        star = exact_lambda_star(exact);
                        row.pareto_gap = star.gap;
                    }
                });
            }

            // critic
            for (int k = 0; k < K; ++k) {
                const double lambda_a = config.lambda_a ? *config.lambda_a : fixed_points[k].lambda_a;
                Rng rng = make_stream(config.seed, {static_cast<std::uint64_t>(t), detail::kCritic,
                                                    static_cast<std::uint64_t>(k)});
                TdMonitor monitor;
                TdMonitor* mon = nullptr;
                if (hooks.critic_step) {
                    const VectorXd* w_star = fixed_points.empty() ? nullptr : &fixed_points[k].w_star;
                    monitor.on_step = [&, k, w_star](long j, const VectorXd& w, double delta) {
                        hooks.critic_step(t, k, j, delta, w_star ? (w - *w_star).norm() : NAN);
                    };
                    mon = &monitor;
                }
                critic.w[k] = run_td0(mdp, k, policy, features, config.n_critic, TdStepSchedule(lambda_a), radius,
                                      critic.w[k], rng, mon);
                trace.critic_transitions += config.n_critic;
                trace.visitation_samples += 1;
            }
            if (config.oracle_diagnostics) {
                timed_oracle([&] {
                    double critic_err = 0.0;
                    for (int k = 0; k < K; ++k) {
                        smoothed.col(k) = exact_smoothed_gradient(mdp, k, policy, features, critic.w[k]);
                        critic_err = std::max(critic_err, (critic.w[k] - fixed_points[k].w_star).norm());
                    }
                    row.critic_err_max = critic_err;
                });
            }

            // weights
            Rng first = make_stream(config.seed, {static_cast<std::uint64_t>(t), detail::kWeightsFirst});
            Rng second = make_stream(config.seed, {static_cast<std::uint64_t>(t), detail::kWeightsSecond});
            WeightObserver observer;
            if (hooks.weight_step)
                observer = [&](long i, const TaskWeights& l) {
                    double dist = NAN;
                    if (config.oracle_diagnostics) timed_oracle([&] { dist = ca_distance(l, smoothed, star.lambda, exact); });
                    hooks.weight_step(t, i, l, dist);
                };
            switch (config.option) {
                case WeightOption::CA:
                    lambda = ca_update(lambda, mdp, policy, features, critic, config.n_ca, config.c, first, second,
                                       observer);
                    trace.visitation_samples += 2 * config.n_ca * K;
                    break;
                case WeightOption::FC:
                    lambda = fc_update(lambda, mdp, policy, features, critic, config.n_fc, config.c_prime, first,
                                       second);
                    if (observer) observer(0, lambda);
                    trace.visitation_samples += 2 * config.n_fc * K;
                    break;
                case WeightOption::Fixed:
                    if (observer) observer(0, lambda);
                    break;
            }

            // actor
            Rng actor_rng = make_stream(config.seed, {static_cast<std::uint64_t>(t), detail::kActor});
            const GradientMatrix grads =
                estimate_actor_gradients(mdp, policy, features, critic, config.n_actor, actor_rng);
            trace.visitation_samples += config.n_actor * K;
            const auto algo_end = clock::now();

            if (config.oracle_diagnostics) row.ca_distance = ca_distance(lambda, smoothed, star.lambda, exact);
            row.lambda = lambda.values();
            row.elapsed_ms = config.record_timing
                                 ? std::chrono::duration<double, std::milli>(algo_end - start).count() - oracle_ms
                                 : 0.0;
            trace.rows.push_back(row);

            policy = actor_step(policy, lambda, grads, beta);
        } catch (const NumericError& e) {
            trace.aborted = true;
            trace.abort_reason = e.what();
            trace.events.push_back({t, std::string("aborted: ") + e.what()});
            break;
        }
    }

    trace.final_theta = policy.theta();
    trace.final_lambda = lambda.values();
    if (config.oracle_diagnostics) {
        trace.final_objective.resize(K);
        for (int k = 0; k < K; ++k) trace.final_objective[k] = exact_objective(mdp, k, policy);
        trace.final_pareto_gap = pareto_gap(mdp, policy);
    }
    return trace;
}

}  // namespace mtac

#endif  // MTAC_DRIVER_HPP
