#ifndef MTAC_ORACLE_HPP
#define MTAC_ORACLE_HPP

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "common.hpp"
#include "mdp.hpp"
#include "policy.hpp"
#include "weights.hpp"

// Exact dynamic-programming quantities on small MDPs. Everything here is a
// pure function of its inputs built on dense solves, capped at
// kMaxOraclePairs state-action pairs.

namespace mtac {

inline constexpr int kMaxOraclePairs = 4096;

namespace detail {

inline void check_oracle_size(const MultiTaskMdp& mdp) {
    if (mdp.num_pairs() > kMaxOraclePairs)
        throw ConfigError("oracle: |S||A| = " + std::to_string(mdp.num_pairs()) + " exceeds the dense-solve cap of " +
                          std::to_string(kMaxOraclePairs));
}

/// Pair-to-pair kernel P_pi[(s,a),(s',a')] = P(s'|s,a) pi(a'|s').
inline MatrixXd pair_kernel(const MultiTaskMdp& mdp, int task, const SoftmaxPolicy& policy) {
    const int n = mdp.num_pairs(), A = mdp.num_actions;
    const auto& P = mdp.transitions[task];
    MatrixXd K(n, n);
    for (int i = 0; i < n; ++i)
        for (int s2 = 0; s2 < mdp.num_states; ++s2)
            for (int a2 = 0; a2 < A; ++a2) K(i, s2 * A + a2) = P(i, s2) * policy.probs_table()(s2, a2);
    return K;
}

/// Scores psi(s,a) stacked as rows.
inline MatrixXd score_table(const SoftmaxPolicy& policy) {
    const int n = policy.num_states() * policy.num_actions();
    MatrixXd psi(n, policy.dim());
    for (int s = 0; s < policy.num_states(); ++s)
        for (int a = 0; a < policy.num_actions(); ++a)
            psi.row(s * policy.num_actions() + a) = policy.score(s, a).transpose();
    return psi;
}

}  // namespace detail

/// Q^k_pi as the solution of (I - gamma P_pi) Q = r.
inline VectorXd exact_q(const MultiTaskMdp& mdp, int task, const SoftmaxPolicy& policy) {
    detail::check_oracle_size(mdp);
    const int n = mdp.num_pairs();
    const MatrixXd K = detail::pair_kernel(mdp, task, policy);
    const MatrixXd system = MatrixXd::Identity(n, n) - mdp.gamma * K;
    VectorXd q = system.partialPivLu().solve(mdp.rewards[task]);
    if (!q.allFinite()) throw NumericError("exact_q: singular Bellman system");
    return q;
}

/// max |r + gamma P_pi Q - Q|.
inline double bellman_residual(const MultiTaskMdp& mdp, int task, const SoftmaxPolicy& policy, const VectorXd& q) {
    const MatrixXd K = detail::pair_kernel(mdp, task, policy);
    return (mdp.rewards[task] + mdp.gamma * K * q - q).cwiseAbs().maxCoeff();
}

inline VectorXd state_values(const SoftmaxPolicy& policy, const VectorXd& q) {
    VectorXd v(policy.num_states());
    for (int s = 0; s < policy.num_states(); ++s)
        v[s] = policy.action_probs(s).dot(q.segment(s * policy.num_actions(), policy.num_actions()).transpose());
    return v;
}

/// J^k(theta) = sum_s xi_0(s) sum_a pi(a|s) Q(s,a).
inline double exact_objective(const MultiTaskMdp& mdp, int task, const SoftmaxPolicy& policy) {
    return mdp.initial_dist[task].dot(state_values(policy, exact_q(mdp, task, policy)));
}

/// Normalized discounted occupancy d(s,a) = (1-gamma) sum_t gamma^t P(s_t=s, a_t=a),
/// i.e. the stationary law of the reset kernel gamma P + (1-gamma) xi_0 composed with pi.
inline VectorXd exact_visitation(const MultiTaskMdp& mdp, int task, const SoftmaxPolicy& policy) {
    detail::check_oracle_size(mdp);
    const int S = mdp.num_states, A = mdp.num_actions;
    const auto& P = mdp.transitions[task];
    const MatrixXd& pi = policy.probs_table();
    MatrixXd Ps = MatrixXd::Zero(S, S);
    for (int s = 0; s < S; ++s)
        for (int a = 0; a < A; ++a) Ps.row(s) += pi(s, a) * P.row(s * A + a);
    // nu^T (I - gamma Ps) = (1-gamma) xi^T
    const MatrixXd system = MatrixXd::Identity(S, S) - mdp.gamma * Ps.transpose();
    const VectorXd nu = system.partialPivLu().solve((1.0 - mdp.gamma) * mdp.initial_dist[task]);
    VectorXd d(S * A);
    for (int s = 0; s < S; ++s)
        for (int a = 0; a < A; ++a) d[s * A + a] = nu[s] * pi(s, a);
    if (!d.allFinite() || d.minCoeff() < -1e-12)
        throw NumericError("exact_visitation: occupancy solve failed (task " + std::to_string(task) + ")");
    d = d.cwiseMax(0.0);
    d /= d.sum();
    return d;
}

/// Residual max |d - d P~| of the reset kernel P~ = gamma P + (1-gamma) xi_0, composed with pi.
inline double visitation_residual(const MultiTaskMdp& mdp, int task, const SoftmaxPolicy& policy, const VectorXd& d) {
    const int S = mdp.num_states, A = mdp.num_actions;
    const VectorXd next_state = mdp.gamma * (mdp.transitions[task].transpose() * d) +
                                (1.0 - mdp.gamma) * d.sum() * mdp.initial_dist[task];
    double worst = 0.0;
    for (int s = 0; s < S; ++s)
        for (int a = 0; a < A; ++a)
            worst = std::max(worst, std::abs(next_state[s] * policy.probs_table()(s, a) - d[s * A + a]));
    return worst;
}

/// E_d[Q(s,a) psi(s,a)] under the normalized occupancy (no 1/(1-gamma) factor).
inline VectorXd exact_policy_gradient(const MultiTaskMdp& mdp, int task, const SoftmaxPolicy& policy) {
    const VectorXd d = exact_visitation(mdp, task, policy);
    const VectorXd q = exact_q(mdp, task, policy);
    const MatrixXd psi = detail::score_table(policy);
    return psi.transpose() * d.cwiseProduct(q);
}

/// Column k holds the exact gradient of task k.
inline GradientMatrix exact_gradients(const MultiTaskMdp& mdp, const SoftmaxPolicy& policy) {
    GradientMatrix g(policy.dim(), mdp.num_tasks);
    for (int k = 0; k < mdp.num_tasks; ++k) g.col(k) = exact_policy_gradient(mdp, k, policy);
    return g;
}

/// E_d[(phi^T w) psi(s,a)].
inline VectorXd exact_smoothed_gradient(const MultiTaskMdp& mdp, int task, const SoftmaxPolicy& policy,
                                        const FeatureMap& features, const VectorXd& w) {
    require(w.size() == features.dim, "exact_smoothed_gradient: weight dimension mismatch");
    const VectorXd d = exact_visitation(mdp, task, policy);
    const VectorXd qhat = features.table[task] * w;
    return detail::score_table(policy).transpose() * d.cwiseProduct(qhat);
}

struct TdFixedPoint {
    VectorXd w_star;
    MatrixXd A;
    VectorXd b;
    double lambda_a = 0.0;
    /// False when the symmetric part of A is not negative definite; lambda_a
    /// then falls back to the smallest |Re| eigenvalue of A.
    bool negative_definite = true;
    double residual = 0.0;
};

/// Solves A w* + b = 0 with A = E_d[phi (gamma phi' - phi)^T], b = E_d[phi r].
inline TdFixedPoint exact_td_fixed_point(const MultiTaskMdp& mdp, int task, const SoftmaxPolicy& policy,
                                         const FeatureMap& features) {
    features.check_consistent(mdp);
    const VectorXd d = exact_visitation(mdp, task, policy);
    const MatrixXd& phi = features.table[task];
    const MatrixXd next_phi = detail::pair_kernel(mdp, task, policy) * phi;  // E[phi(s',a') | s,a]
    const MatrixXd D = d.asDiagonal();
    TdFixedPoint out;
    out.A = phi.transpose() * D * (mdp.gamma * next_phi - phi);
    out.b = phi.transpose() * d.cwiseProduct(mdp.rewards[task]);

    Eigen::FullPivLU<MatrixXd> lu(out.A);
    lu.setThreshold(1e-10);
    if (lu.rank() < features.dim)
        throw NumericError("exact_td_fixed_point: A is rank deficient (rank " + std::to_string(lu.rank()) + " < m = " +
                           std::to_string(features.dim) + ") for task " + std::to_string(task) +
                           "; features are not linearly independent on the support of d");
    out.w_star = lu.solve(-out.b);
    out.residual = (out.A * out.w_star + out.b).norm();

    const MatrixXd sym = 0.5 * (out.A + out.A.transpose());
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(sym, Eigen::EigenvaluesOnly);
    const double top = es.eigenvalues().maxCoeff();
    if (top < 0.0) {
        out.lambda_a = -top;
    } else {
        out.negative_definite = false;
        Eigen::EigenSolver<MatrixXd> full(out.A, false);
        out.lambda_a = full.eigenvalues().real().cwiseAbs().minCoeff();
    }
    return out;
}

struct LambdaStar {
    TaskWeights lambda;
    double gap = 0.0;          // ||J lambda||^2
    double fw_certificate = 0.0;  // lambda^T G lambda - min_k (G lambda)_k
};

namespace detail {
inline double fw_gap(const MatrixXd& gram, const VectorXd& lambda) {
    const VectorXd grad = gram * lambda;
    return lambda.dot(grad) - grad.minCoeff();
}

/// Equality-constrained minimizer on the support of `x`:
/// [G_SS 1; 1^T 0] [l; mu] = [0; 1]. Empty optional-like flag when infeasible.
inline bool polish_on_support(const MatrixXd& gram, const VectorXd& x, VectorXd& out) {
    std::vector<int> support;
    for (int k = 0; k < x.size(); ++k)
        if (x[k] > 1e-9) support.push_back(k);
    const int n = static_cast<int>(support.size());
    if (n == 0) return false;
    MatrixXd kkt = MatrixXd::Zero(n + 1, n + 1);
    VectorXd rhs = VectorXd::Zero(n + 1);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) kkt(i, j) = gram(support[i], support[j]);
        kkt(i, n) = 1.0;
        kkt(n, i) = 1.0;
    }
    rhs[n] = 1.0;
    const VectorXd sol = kkt.completeOrthogonalDecomposition().solve(rhs);
    if (!sol.allFinite()) return false;
    out = VectorXd::Zero(x.size());
    for (int i = 0; i < n; ++i) {
        if (sol[i] < 0.0) return false;
        out[support[i]] = sol[i];
    }
    const double total = out.sum();
    if (std::abs(total - 1.0) > 1e-9) return false;
    out /= total;
    return true;
}

/// Exact KKT search over every support set; returns the feasible candidate
/// with the smallest Frank-Wolfe gap. Only used for small K.
inline bool enumerate_supports(const MatrixXd& gram, VectorXd& best) {
    const int K = static_cast<int>(gram.rows());
    double best_gap = INFINITY;
    for (unsigned mask = 1; mask < (1u << K); ++mask) {
        std::vector<int> support;
        for (int k = 0; k < K; ++k)
            if (mask & (1u << k)) support.push_back(k);
        const int n = static_cast<int>(support.size());
        MatrixXd kkt = MatrixXd::Zero(n + 1, n + 1);
        VectorXd rhs = VectorXd::Zero(n + 1);
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < n; ++j) kkt(i, j) = gram(support[i], support[j]);
            kkt(i, n) = 1.0;
            kkt(n, i) = 1.0;
        }
        rhs[n] = 1.0;
        Eigen::FullPivLU<MatrixXd> lu(kkt);
        if (!lu.isInvertible()) continue;
        const VectorXd sol = lu.solve(rhs);
        if (!sol.allFinite()) continue;
        VectorXd l = VectorXd::Zero(K);
        bool feasible = true;
        for (int i = 0; i < n; ++i) {
            if (sol[i] < -1e-12) feasible = false;
            l[support[i]] = std::max(0.0, sol[i]);
        }
        if (!feasible || !(l.sum() > 0.0)) continue;
        l /= l.sum();
        const double gap = fw_gap(gram, l);
        if (gap < best_gap) {
            best_gap = gap;
            best = l;
        }
    }
    return std::isfinite(best_gap);
}
}  // namespace detail

/// Min-norm point of the convex hull of the gradient columns.
///
/// For K <= 12 every support set is tried with an exact KKT solve. Otherwise,
/// or if that search fails numerically, accelerated projected gradient on
/// 1/2 lambda^T G lambda runs over the simplex, with periodic support
/// polishing, until the Frank-Wolfe gap (the reported certificate) is below
/// 1e-12 relative to the largest squared gradient norm.
inline LambdaStar exact_lambda_star(const GradientMatrix& grads) {
    const int K = static_cast<int>(grads.cols());
    require(K >= 1, "exact_lambda_star: need at least one task");
    if (!grads.allFinite()) throw NumericError("exact_lambda_star: non-finite gradients");
    LambdaStar out;
    if (K == 1) {
        out.lambda = TaskWeights(VectorXd::Ones(1));
        out.gap = grads.col(0).squaredNorm();
        return out;
    }
    const MatrixXd gram = grads.transpose() * grads;
    const double scale = std::max(1e-300, gram.diagonal().maxCoeff());
    const double tol = 1e-12 * std::max(1.0, scale);
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(gram, Eigen::EigenvaluesOnly);
    const double lip = std::max(es.eigenvalues().maxCoeff(), 1e-300);
    auto objective = [&](const VectorXd& l) { return 0.5 * l.dot(gram * l); };

    VectorXd exact;
    if (K <= 12 && detail::enumerate_supports(gram, exact) && detail::fw_gap(gram, exact) <= tol) {
        out.lambda = TaskWeights(exact);
        out.gap = (grads * exact).squaredNorm();
        out.fw_certificate = detail::fw_gap(gram, exact);
        return out;
    }

    VectorXd x = VectorXd::Constant(K, 1.0 / K), y = x, prev = x, polished;
    double momentum = 1.0;
    double best_obj = objective(x);
    for (int it = 0; it < 50000; ++it) {
        prev = x;
        x = simplex_project(y - (gram * y) / lip).values();
        const double obj = objective(x);
        if (obj > best_obj) {  // adaptive restart
            momentum = 1.0;
            y = prev;
            x = prev;
            continue;
        }
        best_obj = obj;
        const double next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * momentum * momentum));
        y = x + ((momentum - 1.0) / next) * (x - prev);
        momentum = next;
        if (it % 8 == 0) {
            if (detail::polish_on_support(gram, x, polished) && objective(polished) <= obj + tol &&
                detail::fw_gap(gram, polished) <= tol) {
                x = polished;
                break;
            }
            if (detail::fw_gap(gram, x) <= tol) break;
        }
    }
    out.lambda = TaskWeights(x);
    out.gap = (grads * x).squaredNorm();
    out.fw_certificate = detail::fw_gap(gram, x);
    return out;
}

/// Per-task ε_app at the current theta: sqrt(E_d[(phi^T w* - Q)^2]).
inline VectorXd approximation_errors(const MultiTaskMdp& mdp, const SoftmaxPolicy& policy, const FeatureMap& features) {
    VectorXd err(mdp.num_tasks);
    for (int k = 0; k < mdp.num_tasks; ++k) {
        const auto fp = exact_td_fixed_point(mdp, k, policy, features);
        const VectorXd d = exact_visitation(mdp, k, policy);
        const VectorXd diff = features.table[k] * fp.w_star - exact_q(mdp, k, policy);
        err[k] = std::sqrt(d.dot(diff.cwiseAbs2()));
    }
    return err;
}

/// Worst-task function approximation error at the current theta.
inline double function_approx_error(const MultiTaskMdp& mdp, const SoftmaxPolicy& policy, const FeatureMap& features) {
    return approximation_errors(mdp, policy, features).maxCoeff();
}

/// min over the simplex of ||lambda^T grad J||^2 with exact gradients.
inline double pareto_gap(const MultiTaskMdp& mdp, const SoftmaxPolicy& policy) {
    return exact_lambda_star(exact_gradients(mdp, policy)).gap;
}

/// Optimal J^k over all stationary policies (value iteration to 1e-13).
inline double optimal_objective(const MultiTaskMdp& mdp, int task) {
    const int S = mdp.num_states, A = mdp.num_actions;
    VectorXd v = VectorXd::Zero(S);
    for (int sweep = 0; sweep < 100000; ++sweep) {
        const VectorXd q = mdp.rewards[task] + mdp.gamma * mdp.transitions[task] * v;
        VectorXd next(S);
        for (int s = 0; s < S; ++s) next[s] = q.segment(s * A, A).maxCoeff();
        const double delta = (next - v).cwiseAbs().maxCoeff();
        v = next;
        if (delta < 1e-13) break;
    }
    return mdp.initial_dist[task].dot(v);
}

/// Everything the theory references for one policy, for every task.
struct ExactEvaluation {
    std::vector<VectorXd> q, v, visitation, gradient, w_star;
    std::vector<MatrixXd> a;
    std::vector<VectorXd> b;
    std::vector<double> lambda_a, objective;
};

inline ExactEvaluation evaluate_exact(const MultiTaskMdp& mdp, const SoftmaxPolicy& policy, const FeatureMap& features) {
    ExactEvaluation ev;
    for (int k = 0; k < mdp.num_tasks; ++k) {
        ev.q.push_back(exact_q(mdp, k, policy));
        ev.v.push_back(state_values(policy, ev.q.back()));
        ev.objective.push_back(mdp.initial_dist[k].dot(ev.v.back()));
        ev.visitation.push_back(exact_visitation(mdp, k, policy));
        ev.gradient.push_back(exact_policy_gradient(mdp, k, policy));
        auto fp = exact_td_fixed_point(mdp, k, policy, features);
        ev.w_star.push_back(fp.w_star);
        ev.a.push_back(fp.A);
        ev.b.push_back(fp.b);
        ev.lambda_a.push_back(fp.lambda_a);
    }
    return ev;
}

}  // namespace mtac

#endif  // MTAC_ORACLE_HPP
