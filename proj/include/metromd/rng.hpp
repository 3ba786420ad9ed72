#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

#include <Eigen/Core>

namespace metromd {

// Seedable stream with explicit splitting. Every consumer (initialization,
// thermostat noise, acceptance draws, each experiment leg) owns its own
// stream, so draw order never depends on scheduling and runs are bitwise
// reproducible from (seed, tag path) alone.
class RngStream {
public:
    explicit RngStream(std::uint64_t seed) : key_(seed) {
        std::uint32_t words[8];
        for (int k = 0; k < 4; ++k) {
            std::uint64_t w = mix(seed, static_cast<std::uint64_t>(k + 1));
            words[2 * k] = static_cast<std::uint32_t>(w);
            words[2 * k + 1] = static_cast<std::uint32_t>(w >> 32);
        }
        std::seed_seq seq(words, words + 8);
        engine_.seed(seq);
    }

    // Child stream derived from the parent's key (not its state): splitting is
    // insensitive to how many draws the parent has consumed.
    RngStream split(std::uint64_t tag) const {
        return RngStream(mix(key_, mix(tag, 0x632BE59BD9B4E019ULL)));
    }

    std::uint64_t next_u64() { return engine_(); }

    // uniform on [0, 1), 53-bit resolution
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // standard normal via Box-Muller; pinned here (not std::normal_distribution)
    // so the draw count per call is fixed across standard library versions
    double gaussian() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;  // (0, 1]
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 2.0 * std::numbers::pi * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    void fill_gaussian(Eigen::Ref<Eigen::VectorXd> out) {
        for (Eigen::Index i = 0; i < out.size(); ++i) out[i] = gaussian();
    }

private:
    static std::uint64_t mix(std::uint64_t z, std::uint64_t salt) {
        z += 0x9E3779B97F4A7C15ULL * (salt + 1);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }
    std::uint64_t key_;
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

// stream tags by purpose
inline constexpr std::uint64_t kStreamInit = 1;
inline constexpr std::uint64_t kStreamThermostat = 2;
inline constexpr std::uint64_t kStreamMetropolis = 3;

}  // namespace metromd
