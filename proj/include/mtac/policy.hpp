#ifndef MTAC_POLICY_HPP
#define MTAC_POLICY_HPP

#include <memory>
#include <utility>

#include "common.hpp"
#include "mdp.hpp"

namespace mtac {

/// Softmax policy over linear features: pi(a|s) ∝ exp(theta^T chi(s,a)).
///
/// The feature table chi is shared between copies; theta and the cached
/// action-probability table are per value. Every mutation goes through
/// set_theta so the cache stays in sync.
class SoftmaxPolicy {
public:
    SoftmaxPolicy() = default;

    SoftmaxPolicy(int num_states, int num_actions, std::shared_ptr<const MatrixXd> chi, VectorXd theta)
        : num_states_(num_states), num_actions_(num_actions), chi_(std::move(chi)) {
        if (!chi_ || chi_->rows() != num_states * num_actions)
            throw ConfigError("policy: feature table must have one row per state-action pair");
        set_theta(std::move(theta));
    }

    /// One-hot policy features over (s,a) with theta = 0 (uniform policy).
    static SoftmaxPolicy one_hot(int num_states, int num_actions) {
        const int n = num_states * num_actions;
        return SoftmaxPolicy(num_states, num_actions, std::make_shared<const MatrixXd>(MatrixXd::Identity(n, n)),
                             VectorXd::Zero(n));
    }
    static SoftmaxPolicy one_hot(const MultiTaskMdp& mdp) { return one_hot(mdp.num_states, mdp.num_actions); }

    int num_states() const { return num_states_; }
    int num_actions() const { return num_actions_; }
    int dim() const { return static_cast<int>(theta_.size()); }
    const VectorXd& theta() const { return theta_; }
    const MatrixXd& features() const { return *chi_; }
    std::shared_ptr<const MatrixXd> shared_features() const { return chi_; }

    /// Upper bound C_chi on ||chi(s,a)||.
    double chi_bound() const { return chi_->rowwise().norm().maxCoeff(); }

    void set_theta(VectorXd theta) {
        if (theta.size() != chi_->cols())
            throw ContractError("policy: theta has the wrong dimension");
        if (!theta.allFinite()) throw NumericError("policy: non-finite theta");
        theta_ = std::move(theta);
        const VectorXd logits = (*chi_) * theta_;
        probs_.resize(num_states_, num_actions_);
        for (int s = 0; s < num_states_; ++s) {
            const auto row = logits.segment(s * num_actions_, num_actions_);
            const double top = row.maxCoeff();
            double z = 0.0;
            for (int a = 0; a < num_actions_; ++a) {
                probs_(s, a) = std::exp(row[a] - top);
                z += probs_(s, a);
            }
            probs_.row(s) /= z;
        }
    }

    /// pi(.|s); entries are positive and sum to one.
    auto action_probs(int state) const {
        require(state >= 0 && state < num_states_, "policy: state index out of range");
        return probs_.row(state);
    }
    const MatrixXd& probs_table() const { return probs_; }

    double log_prob(int state, int action) const { return std::log(probs_(state, action)); }

    /// psi(s,a) = chi(s,a) - sum_b pi(b|s) chi(s,b).
    VectorXd score(int state, int action) const {
        require(state >= 0 && state < num_states_, "policy: state index out of range");
        require(action >= 0 && action < num_actions_, "policy: action index out of range");
        VectorXd psi = chi_->row(state * num_actions_ + action).transpose();
        for (int b = 0; b < num_actions_; ++b)
            psi.noalias() -= probs_(state, b) * chi_->row(state * num_actions_ + b).transpose();
        return psi;
    }

private:
    int num_states_ = 0;
    int num_actions_ = 0;
    std::shared_ptr<const MatrixXd> chi_;
    VectorXd theta_;
    MatrixXd probs_;
};

/// Empirical Lipschitz estimates of pi and log pi over random theta pairs,
/// used to instantiate the smoothness constants C_pi and L_phi.
struct SmoothnessEstimate {
    double c_pi = 0.0;
    double l_phi = 0.0;
};

inline SmoothnessEstimate estimate_smoothness(const SoftmaxPolicy& policy, int pairs, double scale, Rng& rng) {
    std::normal_distribution<double> normal;
    SmoothnessEstimate est;
    const int m = policy.dim();
    for (int p = 0; p < pairs; ++p) {
        VectorXd t1(m), t2(m);
        for (int i = 0; i < m; ++i) {
            t1[i] = scale * normal(rng);
            t2[i] = t1[i] + 1e-3 * scale * normal(rng);
        }
        SoftmaxPolicy p1 = policy, p2 = policy;
        p1.set_theta(t1);
        p2.set_theta(t2);
        const double dist = (t1 - t2).norm();
        if (dist == 0.0) continue;
        const MatrixXd dp = p1.probs_table() - p2.probs_table();
        const MatrixXd dl = p1.probs_table().array().log() - p2.probs_table().array().log();
        est.c_pi = std::max(est.c_pi, dp.cwiseAbs().maxCoeff() / dist);
        est.l_phi = std::max(est.l_phi, dl.cwiseAbs().maxCoeff() / dist);
    }
    return est;
}

}  // namespace mtac

#endif  // MTAC_POLICY_HPP
