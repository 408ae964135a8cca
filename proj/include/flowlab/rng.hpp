#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace flowlab {

// Seedable portable generator. The engine is std::mt19937_64, whose output
// sequence is fixed by the standard; variates are produced by our own
// transforms because std distributions differ across library vendors.
//
// Streams are keyed by (seed, purpose, entity): the key is mixed through
// SplitMix64 so that adding entities never perturbs existing streams.
class Rng {
public:
    Rng(std::uint64_t seed, std::string_view purpose, std::uint64_t entity = 0);

    std::uint64_t next_u64() { return engine_(); }
    // Uniform on the open interval (0, 1).
    double uniform();
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    double normal();
    double normal(double mean, double sd) { return mean + sd * normal(); }
    double lognormal(double median, double dispersion) ;
    // Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n);

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t stream_key(std::uint64_t seed, std::string_view purpose, std::uint64_t entity);

}  // namespace flowlab
