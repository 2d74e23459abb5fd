#ifndef MTAC_TEST_HELPERS_HPP
#define MTAC_TEST_HELPERS_HPP

#include <mtac/mdp.hpp>
#include <mtac/policy.hpp>

namespace mtac::fixtures {

/// One state, `actions` actions, self loops, reward r(a) per task.
inline MultiTaskMdp single_state(int actions, double gamma, std::vector<std::vector<double>> rewards) {
    MultiTaskMdp m;
    m.num_states = 1;
    m.num_actions = actions;
    m.num_tasks = static_cast<int>(rewards.size());
    m.gamma = gamma;
    for (const auto& r : rewards) {
        m.transitions.push_back(MatrixXd::Ones(actions, 1));
        m.rewards.push_back(Eigen::Map<const VectorXd>(r.data(), actions));
        m.initial_dist.push_back(VectorXd::Ones(1));
    }
    m.validate();
    return m;
}

/// Random MDP with every reward set to `value`.
inline MultiTaskMdp constant_reward(double value, std::uint64_t seed = 3, double gamma = 0.9) {
    auto m = build_random_mdp(seed, 5, 3, 2, gamma, 0.2);
    for (auto& r : m.rewards) r.setConstant(value);
    return m;
}

inline SoftmaxPolicy random_policy(const MultiTaskMdp& mdp, Rng& rng, double scale = 1.0) {
    auto p = SoftmaxPolicy::one_hot(mdp);
    std::normal_distribution<double> normal;
    VectorXd theta(p.dim());
    for (auto& x : theta) x = scale * normal(rng);
    p.set_theta(theta);
    return p;
}

}  // namespace mtac::fixtures

#endif  // MTAC_TEST_HELPERS_HPP
