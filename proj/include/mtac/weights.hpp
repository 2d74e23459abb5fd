#ifndef MTAC_WEIGHTS_HPP
#define MTAC_WEIGHTS_HPP

#include <algorithm>
#include <functional>
#include <vector>

#include "common.hpp"

namespace mtac {

/// m x K matrix; column k is the (estimated or exact) policy gradient of task k.
using GradientMatrix = MatrixXd;

/// A point on the probability simplex over K tasks.
class TaskWeights {
public:
    TaskWeights() = default;

    /// Takes ownership of `values`; throws ContractError when they are not on the simplex.
    explicit TaskWeights(VectorXd values, double tol = 1e-10) : values_(std::move(values)) {
        if (values_.size() < 1 || !values_.allFinite() || values_.minCoeff() < -tol ||
            std::abs(values_.sum() - 1.0) > tol)
            throw ContractError("TaskWeights: values are not on the probability simplex");
        values_ = values_.cwiseMax(0.0);
    }

    static TaskWeights uniform(int k) { return TaskWeights(VectorXd::Constant(k, 1.0 / k)); }
    static TaskWeights vertex(int k, int i) {
        VectorXd v = VectorXd::Zero(k);
        v[i] = 1.0;
        return TaskWeights(std::move(v));
    }

    int size() const { return static_cast<int>(values_.size()); }
    const VectorXd& values() const { return values_; }
    double operator[](int k) const { return values_[k]; }

    /// lambda^T grad: the combined direction sum_k lambda_k grads.col(k).
    VectorXd combine(const GradientMatrix& grads) const {
        require(grads.cols() == values_.size(), "TaskWeights::combine: task count mismatch");
        return grads * values_;
    }

private:
    VectorXd values_;
};

/// Euclidean projection onto the simplex (sort-and-threshold).
inline TaskWeights simplex_project(const VectorXd& v) {
    if (v.size() < 1) throw ContractError("simplex_project: empty vector");
    if (!v.allFinite()) throw NumericError("simplex_project: non-finite input");
    const int n = static_cast<int>(v.size());
    std::vector<double> u(v.data(), v.data() + n);
    std::sort(u.begin(), u.end(), std::greater<>());
    double cumulative = 0.0, tau = 0.0;
    for (int j = 0; j < n; ++j) {
        cumulative += u[j];
        const double t = (cumulative - 1.0) / (j + 1);
        if (u[j] - t > 0.0) tau = t;
    }
    VectorXd out = (v.array() - tau).cwiseMax(0.0);
    // Renormalize away the rounding error of the threshold.
    out /= out.sum();
    return TaskWeights(std::move(out));
}

}  // namespace mtac

#endif  // MTAC_WEIGHTS_HPP
