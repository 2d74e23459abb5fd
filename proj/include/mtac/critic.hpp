#ifndef MTAC_CRITIC_HPP
#define MTAC_CRITIC_HPP

#include <cmath>
#include <functional>
#include <vector>

#include "common.hpp"
#include "mdp.hpp"
#include "policy.hpp"

namespace mtac {

/// Per-task critic weights w^k, all inside the ball of radius B.
struct CriticWeights {
    std::vector<VectorXd> w;
    double radius = 1.0;

    static CriticWeights zeros(int num_tasks, int dim, double radius) {
        return {std::vector<VectorXd>(num_tasks, VectorXd::Zero(dim)), radius};
    }
    int num_tasks() const { return static_cast<int>(w.size()); }
};

/// alpha_j = 1 / (2 lambda_A (j+1)).
struct TdStepSchedule {
    double lambda_a = 1.0;

    explicit TdStepSchedule(double lambda_a_ = 1.0) : lambda_a(lambda_a_) {
        if (!(lambda_a > 0.0) || !std::isfinite(lambda_a)) throw ConfigError("TdStepSchedule: lambda_A must be > 0");
    }
    double operator()(long j) const { return 1.0 / (2.0 * lambda_a * static_cast<double>(j + 1)); }
};

/// delta = r + gamma <phi', w> - <phi, w>.
template <class V1, class V2, class V3>
double td_error(const V1& w, const V2& phi_sa, const V3& phi_next, double reward, double gamma) {
    require(w.size() == phi_sa.size() && w.size() == phi_next.size(), "td_error: dimension mismatch");
    return reward + gamma * phi_next.dot(w) - phi_sa.dot(w);
}

/// Projection onto {||w|| <= radius}.
inline VectorXd ball_project(const VectorXd& v, double radius) {
    if (!(radius > 0.0)) throw ContractError("ball_project: radius must be > 0");
    const double n = v.norm();
    if (n <= radius) return v;
    VectorXd out = v * (radius / n);
    // guard the last ulp so the norm never exceeds the radius
    const double after = out.norm();
    if (after > radius) out *= radius / after;
    return out;
}

/// U_delta = 1 + (1 + gamma) C_phi B, the almost-sure TD-error bound.
inline double td_error_bound(double gamma, double c_phi, double radius) { return 1.0 + (1.0 + gamma) * c_phi * radius; }

/// Per-step hook for run_td0 (iteration index, iterate after the update, TD error).
struct TdMonitor {
    std::function<void(long j, const VectorXd& w, double delta)> on_step;
    double max_abs_delta = 0.0;
    double max_norm = 0.0;
};

/// Projected TD(0) along one on-policy trajectory.
///
/// The starting pair is drawn from the visitation distribution; afterwards
/// s_{j+1} ~ P(.|s_j,a_j) and a_{j+1} ~ pi(.|s_{j+1}), with
/// w_{j+1} = T_B(w_j + alpha_j delta_j phi(s_j,a_j)).
template <class URBG>
VectorXd run_td0(const MultiTaskMdp& mdp, int task, const SoftmaxPolicy& policy, const FeatureMap& features,
                 long n_critic, const TdStepSchedule& schedule, double radius, const VectorXd& w_init, URBG& rng,
                 TdMonitor* monitor = nullptr) {
    if (n_critic < 1) throw ConfigError("run_td0: n_critic must be >= 1");
    require(w_init.size() == features.dim, "run_td0: w_init has the wrong dimension");
    require(w_init.norm() <= radius * (1.0 + 1e-12), "run_td0: w_init lies outside the projection ball");

    const auto& table = features.table[task];
    VectorXd w = w_init;
    auto start = sample_visitation(mdp, task, policy, rng);
    int s = start.state, a = start.action;
    for (long j = 0; j < n_critic; ++j) {
        const auto [s_next, reward] = step(mdp, task, s, a, rng);
        const int a_next = sample_index(policy.action_probs(s_next), rng);
        const int i = mdp.pair(s, a), i_next = mdp.pair(s_next, a_next);
        const double delta = td_error(w, table.row(i).transpose(), table.row(i_next).transpose(), reward, mdp.gamma);
        w.noalias() += schedule(j) * delta * table.row(i).transpose();
        w = ball_project(w, radius);
        if (monitor) {
            monitor->max_abs_delta = std::max(monitor->max_abs_delta, std::abs(delta));
            monitor->max_norm = std::max(monitor->max_norm, w.norm());
            if (monitor->on_step) monitor->on_step(j, w, delta);
        }
        s = s_next;
        a = a_next;
    }
    return w;
}

}  // namespace mtac

#endif  // MTAC_CRITIC_HPP
