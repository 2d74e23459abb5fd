#ifndef MTAC_MDP_HPP
#define MTAC_MDP_HPP

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "common.hpp"

namespace mtac {

/// K tabular tasks over a shared state/action space.
///
/// State-action pairs are flattened as `s * num_actions + a`. Transition
/// matrices have one row per pair and one column per next state. Rewards are
/// deterministic functions of (s,a).
struct MultiTaskMdp {
    int num_states = 0;
    int num_actions = 0;
    int num_tasks = 0;
    double gamma = 0.0;
    std::vector<MatrixXd> transitions;   // [task] (|S||A|) x |S|
    std::vector<VectorXd> rewards;       // [task] |S||A|
    std::vector<VectorXd> initial_dist;  // [task] |S|

    int num_pairs() const { return num_states * num_actions; }
    int pair(int s, int a) const { return s * num_actions + a; }

    /// Checks every structural invariant; throws ConfigError naming the first violation.
    void validate(double tol = 1e-12) const {
        if (num_states < 1 || num_actions < 1 || num_tasks < 1)
            throw ConfigError("mdp: sizes must be >= 1");
        if (!(gamma >= 0.0 && gamma < 1.0))
            throw ConfigError("mdp: gamma must lie in [0,1)");
        if (static_cast<int>(transitions.size()) != num_tasks ||
            static_cast<int>(rewards.size()) != num_tasks ||
            static_cast<int>(initial_dist.size()) != num_tasks)
            throw ConfigError("mdp: per-task arrays must have num_tasks entries");
        for (int k = 0; k < num_tasks; ++k) {
            const auto& P = transitions[k];
            if (P.rows() != num_pairs() || P.cols() != num_states)
                throw ConfigError("mdp: transition tensor of task " + std::to_string(k) + " has wrong shape");
            for (int i = 0; i < P.rows(); ++i) {
                if ((P.row(i).array() < 0.0).any() || !P.row(i).allFinite())
                    throw ConfigError("mdp: negative transition entry in task " + std::to_string(k));
                if (std::abs(P.row(i).sum() - 1.0) > tol)
                    throw ConfigError("mdp: transition row " + std::to_string(i) + " of task " +
                                      std::to_string(k) + " does not sum to 1");
            }
            const auto& r = rewards[k];
            if (r.size() != num_pairs())
                throw ConfigError("mdp: reward vector of task " + std::to_string(k) + " has wrong size");
            if (!r.allFinite() || (r.array() < 0.0).any() || (r.array() > 1.0).any())
                throw ConfigError("mdp: rewards of task " + std::to_string(k) + " must lie in [0,1]");
            const auto& xi = initial_dist[k];
            if (xi.size() != num_states || (xi.array() < 0.0).any() || std::abs(xi.sum() - 1.0) > tol)
                throw ConfigError("mdp: initial distribution of task " + std::to_string(k) + " is not a distribution");
        }
    }
};

/// Per-task linear features phi^k(s,a) in R^dim, stored row-per-pair.
struct FeatureMap {
    int dim = 0;
    std::vector<MatrixXd> table;  // [task] (|S||A|) x dim
    double c_phi_bound = 0.0;

    auto phi(int task, int pair) const { return table[task].row(pair).transpose(); }

    /// Largest feature norm over all tasks and pairs.
    double max_norm() const {
        double best = 0.0;
        for (const auto& t : table) best = std::max(best, t.rowwise().norm().maxCoeff());
        return best;
    }

    void check_consistent(const MultiTaskMdp& mdp) const {
        if (static_cast<int>(table.size()) != mdp.num_tasks)
            throw ConfigError("features: expected one table per task");
        for (const auto& t : table)
            if (t.rows() != mdp.num_pairs() || t.cols() != dim)
                throw ConfigError("features: table shape does not match the mdp");
    }
};

struct StateActionSample {
    int state = 0;
    int action = 0;
    int task = 0;
};

namespace detail {
inline void check_sizes(int num_states, int num_actions, int num_tasks, double gamma) {
    if (num_states < 1 || num_actions < 1 || num_tasks < 1)
        throw ConfigError("mdp: sizes must be >= 1");
    if (!(gamma >= 0.0 && gamma < 1.0))
        throw ConfigError("mdp: gamma must lie in [0,1)");
}
}  // namespace detail

/// Random tabular MDP. Rows are Dirichlet(1) draws blended with the uniform
/// row, so every entry is at least `mixing / num_states`.
inline MultiTaskMdp build_random_mdp(std::uint64_t seed, int num_states, int num_actions, int num_tasks,
                                     double gamma, double mixing) {
    detail::check_sizes(num_states, num_actions, num_tasks, gamma);
    if (!(mixing > 0.0 && mixing <= 1.0))
        throw ConfigError("mdp: mixing must lie in (0,1]");

    Rng rng(seed);
    MultiTaskMdp mdp;
    mdp.num_states = num_states;
    mdp.num_actions = num_actions;
    mdp.num_tasks = num_tasks;
    mdp.gamma = gamma;
    const int n = mdp.num_pairs();
    const double uniform = 1.0 / num_states;
    auto exp1 = [&] { return -std::log1p(-uniform01(rng)); };

    for (int k = 0; k < num_tasks; ++k) {
        MatrixXd P(n, num_states);
        for (int i = 0; i < n; ++i) {
            VectorXd row(num_states);
            for (int s = 0; s < num_states; ++s) row[s] = exp1();
            row /= row.sum();
            if (mixing == 1.0)
                P.row(i).setConstant(uniform);
            else
                P.row(i) = ((1.0 - mixing) * row.array() + mixing * uniform).matrix().transpose();
            P.row(i) /= P.row(i).sum();
        }
        VectorXd r(n);
        for (int i = 0; i < n; ++i) r[i] = uniform01(rng);
        VectorXd xi(num_states);
        for (int s = 0; s < num_states; ++s) xi[s] = exp1();
        xi /= xi.sum();
        mdp.transitions.push_back(std::move(P));
        mdp.rewards.push_back(std::move(r));
        mdp.initial_dist.push_back(std::move(xi));
    }
    return mdp;
}

/// Two-task, five-state chain with opposing goals ("conflict chain").
///
/// Actions: 0 moves left, 1 moves right (clamped at the ends), each blended
/// with the uniform row by `mixing`. Task 0 is paid for moving right (1.0 in
/// states 2-4, 0.2 in states 0-1); task 1 is paid for moving left (0.5 in
/// states 0-2, 0.1 in states 3-4). Both start uniformly. The per-state payoff
/// ratios differ, so the two gradients are opposed but not collinear.
inline MultiTaskMdp build_conflict_chain(double gamma = 0.5, double mixing = 0.1) {
    constexpr int S = 5, A = 2;
    detail::check_sizes(S, A, 2, gamma);
    if (!(mixing > 0.0 && mixing <= 1.0))
        throw ConfigError("mdp: mixing must lie in (0,1]");
    MultiTaskMdp mdp;
    mdp.num_states = S;
    mdp.num_actions = A;
    mdp.num_tasks = 2;
    mdp.gamma = gamma;
    MatrixXd P = MatrixXd::Constant(S * A, S, mixing / S);
    for (int s = 0; s < S; ++s) {
        P(s * A + 0, std::max(s - 1, 0)) += 1.0 - mixing;
        P(s * A + 1, std::min(s + 1, S - 1)) += 1.0 - mixing;
    }
    VectorXd r_right = VectorXd::Zero(S * A), r_left = VectorXd::Zero(S * A);
    for (int s = 0; s < S; ++s) {
        r_right[s * A + 1] = s >= 2 ? 1.0 : 0.2;
        r_left[s * A + 0] = s <= 2 ? 0.5 : 0.1;
    }
    const VectorXd start = VectorXd::Constant(S, 1.0 / S);
    mdp.transitions = {P, P};
    mdp.rewards = {r_right, r_left};
    mdp.initial_dist = {start, start};
    mdp.validate();
    return mdp;
}

/// Canonical basis features: phi^k(s,a) = e_{(s,a)} for every task.
inline FeatureMap build_one_hot_features(const MultiTaskMdp& mdp) {
    FeatureMap f;
    f.dim = mdp.num_pairs();
    f.table.assign(mdp.num_tasks, MatrixXd::Identity(f.dim, f.dim));
    f.c_phi_bound = 1.0;
    return f;
}

/// Gaussian random features scaled so every row has norm at most one.
inline FeatureMap build_random_features(const MultiTaskMdp& mdp, int dim, std::uint64_t seed) {
    if (dim < 1) throw ConfigError("features: dim must be >= 1");
    Rng rng(seed);
    std::normal_distribution<double> normal;
    FeatureMap f;
    f.dim = dim;
    for (int k = 0; k < mdp.num_tasks; ++k) {
        MatrixXd t(mdp.num_pairs(), dim);
        for (int i = 0; i < t.rows(); ++i)
            for (int j = 0; j < dim; ++j) t(i, j) = normal(rng);
        t /= t.rowwise().norm().maxCoeff();
        f.table.push_back(std::move(t));
    }
    f.c_phi_bound = 1.0;
    return f;
}

/// Copies feature column `column` into a new trailing column, making the
/// feature matrix rank deficient.
inline FeatureMap with_duplicate_column(FeatureMap f, int column) {
    if (column < 0 || column >= f.dim) throw ConfigError("features: duplicate_column out of range");
    for (auto& t : f.table) {
        MatrixXd wider(t.rows(), t.cols() + 1);
        wider << t, t.col(column);
        t = std::move(wider);
    }
    ++f.dim;
    f.c_phi_bound = f.max_norm();
    return f;
}

/// Samples s' ~ P_k(.|s,a); the reward is r_k(s,a).
template <class URBG>
std::pair<int, double> step(const MultiTaskMdp& mdp, int task, int state, int action, URBG& rng) {
    require(task >= 0 && task < mdp.num_tasks, "step: task index out of range");
    require(state >= 0 && state < mdp.num_states, "step: state index out of range");
    require(action >= 0 && action < mdp.num_actions, "step: action index out of range");
    const int i = mdp.pair(state, action);
    const int next = sample_index(mdp.transitions[task].row(i), rng);
    return {next, mdp.rewards[task][i]};
}

/// Draws (s,a) from the normalized discounted visitation distribution by
/// geometric resets: start at xi_0, and after each action stop with
/// probability 1 - gamma.
template <class Policy, class URBG>
StateActionSample sample_visitation(const MultiTaskMdp& mdp, int task, const Policy& policy, URBG& rng) {
    require(task >= 0 && task < mdp.num_tasks, "sample_visitation: task index out of range");
    int s = sample_index(mdp.initial_dist[task], rng);
    for (;;) {
        const int a = sample_index(policy.action_probs(s), rng);
        if (uniform01(rng) >= mdp.gamma) return {s, a, task};
        s = sample_index(mdp.transitions[task].row(mdp.pair(s, a)), rng);
    }
}

}  // namespace mtac

#endif  // MTAC_MDP_HPP
