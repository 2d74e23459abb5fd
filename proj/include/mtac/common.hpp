#ifndef MTAC_COMMON_HPP
#define MTAC_COMMON_HPP

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace mtac {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Thrown for malformed sizes, out-of-range parameters and schema violations.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Thrown when a computation produces non-finite values or hits a singular system.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Thrown when a caller breaks a precondition (dimension mismatch, bad index).
class ContractError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

using Rng = std::mt19937_64;

/// Uniform double in [0,1) from the top 53 bits of one draw; independent of
/// the standard library's distribution implementation.
template <class URBG>
double uniform01(URBG& rng) {
    static_assert(URBG::max() - URBG::min() == ~std::uint64_t{0}, "expects a 64-bit generator");
    return static_cast<double>((rng() - URBG::min()) >> 11) * 0x1.0p-53;
}

/// Inverse-CDF draw from a probability vector.
template <class URBG, class Probs>
int sample_index(const Probs& probs, URBG& rng) {
    const double u = uniform01(rng);
    double acc = 0.0;
    const int n = static_cast<int>(probs.size());
    for (int i = 0; i < n; ++i) {
        acc += probs[i];
        if (u < acc) return i;
    }
    // u landed in the rounding slack at the top; return the last non-zero entry
    for (int i = n - 1; i >= 0; --i)
        if (probs[i] > 0.0) return i;
    return n - 1;
}

/// Derives an independent generator from a root seed and a tuple of stream ids
/// (outer step, stage, task, ...). Streams never share state, so the draw
/// order inside one stream is independent of work in the others.
inline Rng make_stream(std::uint64_t seed, std::initializer_list<std::uint64_t> ids) {
    std::vector<std::uint32_t> words;
    words.reserve(2 + 2 * ids.size());
    words.push_back(static_cast<std::uint32_t>(seed));
    words.push_back(static_cast<std::uint32_t>(seed >> 32));
    for (auto id : ids) {
        words.push_back(static_cast<std::uint32_t>(id));
        words.push_back(static_cast<std::uint32_t>(id >> 32));
    }
    std::seed_seq s(words.begin(), words.end());
    return Rng(s);
}

inline bool all_finite(const Eigen::Ref<const MatrixXd>& m) { return m.allFinite(); }

inline void require(bool cond, const std::string& what) {
    if (!cond) throw ContractError(what);
}

}  // namespace mtac

#endif  // MTAC_COMMON_HPP
