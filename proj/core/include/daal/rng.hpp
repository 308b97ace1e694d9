#pragma once

#include <cstdint>
#include <random>

namespace daal {

/// splitmix64 mix; used to derive independent stream seeds from one master
/// seed so that every random draw in a run is a pure function of
/// (master seed, stream id).
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

/// Deterministic random source. Engine state follows the mt19937_64
/// standard sequence; uniform and normal draws are generated here rather
/// than through std distributions, whose output is
/// implementation-defined.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    /// Uniform in [0, 1).
    double uniform();
    /// Uniform in [lo, hi).
    double uniform(double lo, double hi);
    /// Standard normal via Box-Muller.
    double normal();
    double normal(double mean, double sigma);
    /// Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n);
    std::uint64_t raw() { return engine_(); }

    /// Fisher-Yates shuffle.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::swap(v[i - 1], v[below(i)]);
        }
    }

private:
    std::mt19937_64 engine_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

// Stream ids for the places a run draws randomness. Keeping them in one
// enum makes "all randomness flows from the single seed" auditable.
namespace stream {
inline constexpr std::uint64_t params = 1;
inline constexpr std::uint64_t discriminator = 2;
inline constexpr std::uint64_t source_data = 3;
inline constexpr std::uint64_t target_data = 4;
inline constexpr std::uint64_t eval_data = 5;
inline constexpr std::uint64_t projections = 6;
inline constexpr std::uint64_t shuffle = 7;
} // namespace stream

} // namespace daal
