#ifndef MTAC_DIRECTION_HPP
#define MTAC_DIRECTION_HPP

#include <cmath>
#include <functional>

#include "common.hpp"
#include "critic.hpp"
#include "mdp.hpp"
#include "policy.hpp"
#include "weights.hpp"

namespace mtac {

/// One-sample estimate (phi^T w^k) psi(s,a) with (s,a) ~ d^k_theta.
template <class URBG>
VectorXd sample_gradient(const MultiTaskMdp& mdp, const SoftmaxPolicy& policy, const FeatureMap& features,
                         const CriticWeights& critic, int task, URBG& rng) {
    const auto sa = sample_visitation(mdp, task, policy, rng);
    const double qhat = features.table[task].row(mdp.pair(sa.state, sa.action)).dot(critic.w[task]);
    return qhat * policy.score(sa.state, sa.action);
}

/// One sample per task, stacked as columns.
template <class URBG>
GradientMatrix sample_gradient_matrix(const MultiTaskMdp& mdp, const SoftmaxPolicy& policy, const FeatureMap& features,
                                      const CriticWeights& critic, URBG& rng) {
    GradientMatrix g(policy.dim(), mdp.num_tasks);
    for (int k = 0; k < mdp.num_tasks; ++k) g.col(k) = sample_gradient(mdp, policy, features, critic, k, rng);
    return g;
}

/// Per-task sample means over n draws.
template <class URBG>
GradientMatrix mean_gradient_matrix(const MultiTaskMdp& mdp, const SoftmaxPolicy& policy, const FeatureMap& features,
                                    const CriticWeights& critic, long n, URBG& rng) {
    require(n >= 1, "mean_gradient_matrix: need at least one sample");
    GradientMatrix g = GradientMatrix::Zero(policy.dim(), mdp.num_tasks);
    for (int k = 0; k < mdp.num_tasks; ++k) {
        for (long l = 0; l < n; ++l) g.col(k) += sample_gradient(mdp, policy, features, critic, k, rng);
        g.col(k) /= static_cast<double>(n);
    }
    return g;
}

/// Stochastic gradient of 1/2 ||lambda^T grad J||^2 from two independent estimates.
inline VectorXd weight_gradient(const TaskWeights& lambda, const GradientMatrix& first, const GradientMatrix& second) {
    return second.transpose() * (first * lambda.values());
}

/// Called after each CA iteration with (i, lambda_{i+1}).
using WeightObserver = std::function<void(long, const TaskWeights&)>;

/// Multi-step projected SGD on the weights with a warm start and double sampling:
/// lambda_{i+1} = T_Lambda(lambda_i - c/sqrt(i+1) * grad_{i'}^T (grad_i lambda_i)).
///
/// `draw_first` and `draw_second` each return an m x K matrix of one-sample
/// estimates and must not share randomness.
template <class DrawFirst, class DrawSecond>
TaskWeights ca_iterate(TaskWeights lambda, DrawFirst&& draw_first, DrawSecond&& draw_second, long n_ca, double c,
                       const WeightObserver& observer = {}) {
    if (n_ca < 1) throw ConfigError("ca_update: n_ca must be >= 1");
    if (!(c > 0.0)) throw ConfigError("ca_update: c must be > 0");
    for (long i = 0; i < n_ca; ++i) {
        const GradientMatrix g = draw_first();
        const GradientMatrix g_prime = draw_second();
        const double step = c / std::sqrt(static_cast<double>(i + 1));
        lambda = simplex_project(lambda.values() - step * weight_gradient(lambda, g, g_prime));
        if (observer) observer(i, lambda);
    }
    return lambda;
}

/// CA subprocedure on sampled gradients; the two sample streams are separate generators.
template <class URBG1, class URBG2>
TaskWeights ca_update(const TaskWeights& lambda_t, const MultiTaskMdp& mdp, const SoftmaxPolicy& policy,
                      const FeatureMap& features, const CriticWeights& critic, long n_ca, double c, URBG1& rng_first,
                      URBG2& rng_second, const WeightObserver& observer = {}) {
    return ca_iterate(
        lambda_t, [&] { return sample_gradient_matrix(mdp, policy, features, critic, rng_first); },
        [&] { return sample_gradient_matrix(mdp, policy, features, critic, rng_second); }, n_ca, c, observer);
}

/// Single-generator convenience form: splits two child streams off `rng`.
inline TaskWeights ca_update(const TaskWeights& lambda_t, const MultiTaskMdp& mdp, const SoftmaxPolicy& policy,
                             const FeatureMap& features, const CriticWeights& critic, long n_ca, double c, Rng& rng,
                             const WeightObserver& observer = {}) {
    Rng first(rng()), second(rng());
    return ca_update(lambda_t, mdp, policy, features, critic, n_ca, c, first, second, observer);
}

/// One projected step from two averaged gradient matrices:
/// lambda_{t+1} = T_Lambda(lambda_t - c' * mean'^T (mean lambda_t)).
inline TaskWeights fc_step(const TaskWeights& lambda_t, const GradientMatrix& mean, const GradientMatrix& mean_prime,
                           double c_prime) {
    if (!(c_prime > 0.0)) throw ConfigError("fc_update: c' must be > 0");
    return simplex_project(lambda_t.values() - c_prime * weight_gradient(lambda_t, mean, mean_prime));
}

/// FC subprocedure: 2 * n_fc samples per task, one update.
template <class URBG1, class URBG2>
TaskWeights fc_update(const TaskWeights& lambda_t, const MultiTaskMdp& mdp, const SoftmaxPolicy& policy,
                      const FeatureMap& features, const CriticWeights& critic, long n_fc, double c_prime,
                      URBG1& rng_first, URBG2& rng_second) {
    if (n_fc < 1) throw ConfigError("fc_update: n_fc must be >= 1");
    const GradientMatrix mean = mean_gradient_matrix(mdp, policy, features, critic, n_fc, rng_first);
    const GradientMatrix mean_prime = mean_gradient_matrix(mdp, policy, features, critic, n_fc, rng_second);
    return fc_step(lambda_t, mean, mean_prime, c_prime);
}

inline TaskWeights fc_update(const TaskWeights& lambda_t, const MultiTaskMdp& mdp, const SoftmaxPolicy& policy,
                             const FeatureMap& features, const CriticWeights& critic, long n_fc, double c_prime,
                             Rng& rng) {
    Rng first(rng()), second(rng());
    return fc_update(lambda_t, mdp, policy, features, critic, n_fc, c_prime, first, second);
}

/// Largest FC step constant covered by the convergence guarantee: 1 / (8 C_phi^2 B).
inline double fc_step_limit(double c_phi, double radius) { return 1.0 / (8.0 * c_phi * c_phi * radius); }

/// ||smoothed * lambda_hat - exact * lambda_star||.
inline double ca_distance(const TaskWeights& lambda_hat, const GradientMatrix& smoothed_grads,
                          const TaskWeights& lambda_star, const GradientMatrix& exact_grads) {
    require(smoothed_grads.rows() == exact_grads.rows() && smoothed_grads.cols() == exact_grads.cols(),
            "ca_distance: gradient matrices differ in shape");
    return (lambda_hat.combine(smoothed_grads) - lambda_star.combine(exact_grads)).norm();
}

}  // namespace mtac

#endif  // MTAC_DIRECTION_HPP
