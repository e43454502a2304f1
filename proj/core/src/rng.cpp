#include "mvr/rng.hpp"

#include <bit>
#include <cmath>
#include <cstring>

#include "mvr/errors.hpp"

namespace mvr {

namespace {

constexpr uint64_t kGolden = 0x9e3779b97f4a7c15ull;

uint64_t splitmix64_next(uint64_t& state) {
    uint64_t z = (state += kGolden);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

}  // namespace

uint64_t hash_combine(uint64_t a, uint64_t b) {
    uint64_t s = a ^ (b + kGolden + (a << 6) + (a >> 2));
    return splitmix64_next(s);
}

uint64_t hash_combine(uint64_t a, uint64_t b, uint64_t c) {
    return hash_combine(hash_combine(a, b), c);
}

Rng::Rng(uint64_t seed) {
    // Expand the seed through splitmix64 as the xoshiro authors recommend;
    // this also makes seed 0 a perfectly good seed.
    uint64_t s = seed;
    for (auto& word : s_) word = splitmix64_next(s);
}

uint64_t Rng::next_u64() {
    const uint64_t result = std::rotl(s_[0] + s_[3], 23) + s_[0];
    const uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = std::rotl(s_[3], 45);
    return result;
}

double Rng::uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) {
    return lo + (hi - lo) * uniform();
}

int64_t Rng::uniform_int(int64_t n) {
    if (n <= 0) throw ContractError("Rng::uniform_int: n must be positive");
    const uint64_t un = static_cast<uint64_t>(n);
    // Rejection sampling to avoid modulo bias.
    const uint64_t limit = UINT64_MAX - UINT64_MAX % un;
    uint64_t x;
    do {
        x = next_u64();
    } while (x >= limit);
    return static_cast<int64_t>(x % un);
}

double Rng::normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    // 1 - uniform() lies in (0, 1], so the log is finite.
    const double u1 = 1.0 - uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * M_PI * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
}

double Rng::normal(double mean, double stddev) {
    return mean + stddev * normal();
}

std::array<uint64_t, 6> Rng::state() const {
    uint64_t spare_bits;
    std::memcpy(&spare_bits, &spare_, sizeof spare_bits);
    return {s_[0], s_[1], s_[2], s_[3], has_spare_ ? 1ull : 0ull, spare_bits};
}

void Rng::set_state(const std::array<uint64_t, 6>& s) {
    s_ = {s[0], s[1], s[2], s[3]};
    has_spare_ = s[4] != 0;
    std::memcpy(&spare_, &s[5], sizeof spare_);
}

}  // namespace mvr
