#include "umt/rng.hpp"

#include <cmath>
#include <numbers>

#include "umt/error.hpp"

namespace umt {

double Rng::normal() {
    // 1 - u keeps the log argument in (0, 1].
    const double u1 = 1.0 - uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::size_t Rng::uniform_index(std::size_t n) {
    if (n == 0) {
        throw StateError("uniform_index(0)");
    }
    const std::uint64_t bound = static_cast<std::uint64_t>(n);
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
    std::uint64_t x = next_u64();
    while (x >= limit) {
        x = next_u64();
    }
    return static_cast<std::size_t>(x % bound);
}

}  // namespace umt
