#pragma once

#include <array>
#include <cstdint>

namespace da {

// Philox4x32-10 counter-based generator. Stateless: the same (key, counter)
// always yields the same block.
class Philox {
public:
    using Block = std::array<std::uint32_t, 4>;

    explicit Philox(std::uint64_t seed)
        : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)} {}

    Block operator()(Block ctr) const;

    // Uniform on (0, 1) from 53 random bits.
    double uniform(std::uint64_t stream, std::uint32_t index, std::uint32_t purpose = 0) const;

private:
    std::array<std::uint32_t, 2> key_;
};

}  // namespace da
