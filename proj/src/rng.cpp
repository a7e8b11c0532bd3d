#include "svia/rng.hpp"

namespace svia {

std::vector<double> normal_vector(std::size_t n, std::uint64_t seed, std::uint64_t stream) {
    const CounterRng rng(seed, stream);
    std::vector<double> out(n);
    for (std::size_t k = 0; k < n; ++k) {
        out[k] = rng.normal(k);
    }
    return out;
}

} // namespace svia
