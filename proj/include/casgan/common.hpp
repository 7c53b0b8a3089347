#ifndef CASGAN_COMMON_HPP
#define CASGAN_COMMON_HPP

#include <cmath>
#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>

namespace casgan {

// Error taxonomy. `user_error` maps to CLI exit code 2, everything else to 1.
struct config_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct contract_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct state_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct io_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct user_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

namespace detail {
inline void format_into(std::ostringstream&) {}
template <typename A, typename... Rest>
void format_into(std::ostringstream& os, A&& a, Rest&&... rest) {
    os << std::forward<A>(a);
    format_into(os, std::forward<Rest>(rest)...);
}
} // namespace detail

template <typename... Args>
std::string format_msg(Args&&... args) {
    std::ostringstream os;
    detail::format_into(os, std::forward<Args>(args)...);
    return os.str();
}

#define CASGAN_CHECK(cond, ...)                                                     \
    do {                                                                            \
        if (!(cond))                                                                \
            throw ::casgan::contract_error(::casgan::format_msg(__VA_ARGS__));      \
    } while (0)

// --- Deterministic seeding -------------------------------------------------
//
// All stochastic decisions in the project are derived from a root seed through
// splitmix64 over (seed, tag, counters). Stateless derivation keeps training
// resumable: nothing needs an RNG state snapshot except replay buffer contents.

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag) {
    return splitmix64(seed ^ fnv1a64(tag));
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag, std::uint64_t a) {
    return splitmix64(derive_seed(seed, tag) + 0x9e3779b97f4a7c15ull * (a + 1));
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag, std::uint64_t a,
                                 std::uint64_t b) {
    return splitmix64(derive_seed(seed, tag, a) + 0xd1b54a32d192ed03ull * (b + 1));
}

// Minimal counter-free generator over splitmix64. Distribution code below is
// self-contained so that streams are identical across standard libraries.
class SplitMix {
public:
    explicit SplitMix(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        state_ += 0x9e3779b97f4a7c15ull;
        std::uint64_t x = state_;
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
        return x ^ (x >> 31);
    }

    // uniform in [0, 1)
    double next_unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * next_unit(); }

    // uniform integer in [0, n)
    std::uint64_t next_below(std::uint64_t n) { return n == 0 ? 0 : next_u64() % n; }

    // Box-Muller; one value per call, cached pair discarded for simplicity.
    double normal() {
        double u1 = next_unit();
        double u2 = next_unit();
        while (u1 <= 0.0)
            u1 = next_unit();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    }

private:
    std::uint64_t state_;
};

} // namespace casgan

#endif
