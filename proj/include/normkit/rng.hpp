#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace normkit {

// Counter-based random stream. The key is a hash of (seed, label); draw n is
// a pure function of (key, n), so streams with different labels never share
// state and the order in which modules draw cannot perturb one another.
class RngStream {
public:
    RngStream(std::uint64_t seed, std::string_view label);

    // Child stream keyed by "<label>/<child>".
    RngStream substream(std::string_view child) const;

    std::uint64_t next_u64();
    // Uniform on [0, 1).
    double uniform();
    // Standard normal via Box-Muller; consumes two raw draws.
    double normal();
    // Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n);

    std::uint64_t seed() const { return seed_; }
    const std::string& label() const { return label_; }
    std::uint64_t counter() const { return counter_; }

private:
    std::uint64_t seed_;
    std::string label_;
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

std::uint64_t mix64(std::uint64_t x);
std::uint64_t hash_label(std::uint64_t seed, std::string_view label);

} // namespace normkit
