#ifndef AFNET_COMMON_HPP
#define AFNET_COMMON_HPP

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace afnet {

// Bad inputs / malformed files / unknown flags. Maps to exit code 2 at the
// CLI boundary; everything else maps to 1.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

class RuntimeError : public std::runtime_error {
public:
    explicit RuntimeError(const std::string& msg) : std::runtime_error(msg) {}
};

// Deterministic RNG used everywhere. Streams are split by hashing the master
// seed with a stream index so parallel consumers stay reproducible.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    static Rng split(std::uint64_t master_seed, std::uint64_t stream) {
        std::uint64_t h = master_seed ^ (0x9e3779b97f4a7c15ULL + stream);
        h ^= h >> 30; h *= 0xbf58476d1ce4e5b9ULL;
        h ^= h >> 27; h *= 0x94d049bb133111ebULL;
        h ^= h >> 31;
        return Rng(h);
    }

    double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }
    double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(engine_); }
    double normal() { return std::normal_distribution<double>(0.0, 1.0)(engine_); }
    double normal(double mean, double sd) { return std::normal_distribution<double>(mean, sd)(engine_); }
    std::uint64_t integer(std::uint64_t n) { return std::uniform_int_distribution<std::uint64_t>(0, n - 1)(engine_); }
    bool bernoulli(double p) { return std::bernoulli_distribution(p)(engine_); }

    std::mt19937_64& engine() { return engine_; }

private:
    std::mt19937_64 engine_;
};

} // namespace afnet

#endif
