#pragma once

#include <cmath>
#include <cstdint>
#include <string>

#include "snsmix/common.hpp"

namespace snsmix {

/// Integer wavevector in Z^2 \ {0}.
struct WaveIndex {
    int kx = 0;
    int ky = 0;

    bool operator==(const WaveIndex&) const = default;

    /// Lexicographic "k > (0,0)" convention picking the sine branch.
    bool lex_positive() const { return kx > 0 || (kx == 0 && ky > 0); }

    WaveIndex negated() const { return {-kx, -ky}; }
    double norm2() const { return double(kx) * kx + double(ky) * ky; }
    double norm() const { return std::sqrt(norm2()); }
    /// k . j^perp with j^perp = (-j_y, j_x); zero iff k parallel j.
    long long cross(const WaveIndex& j) const {
        return static_cast<long long>(kx) * j.ky - static_cast<long long>(ky) * j.kx;
    }
    std::string str() const {
        return "(" + std::to_string(kx) + "," + std::to_string(ky) + ")";
    }
};

struct WaveIndexLess {
    bool operator()(const WaveIndex& a, const WaveIndex& b) const {
        return a.kx != b.kx ? a.kx < b.kx : a.ky < b.ky;
    }
};

/// Uniform periodic grid on [-pi,pi]^2. n is the number of points per axis.
/// Retained modes satisfy max(|k1|,|k2|) <= cutoff(); with dealias_fraction 1
/// the cutoff is capped at n/2-1 so every retained mode has a conjugate slot.
struct GridSpec {
    int n = 64;
    double dealias_fraction = 2.0 / 3.0;

    int cutoff() const {
        const int k = static_cast<int>(std::floor(dealias_fraction * n / 2.0));
        return std::min(k, n / 2 - 1);
    }

    bool operator==(const GridSpec&) const = default;

    void validate() const {
        if (n < 8 || (n & (n - 1)) != 0)
            throw ConfigError("GridSpec: n must be a power of two >= 8, got " + std::to_string(n));
        if (!(dealias_fraction > 0.0 && dealias_fraction <= 1.0))
            throw ConfigError("GridSpec: dealias_fraction must lie in (0,1]");
        if (cutoff() < 1) throw ConfigError("GridSpec: cutoff < 1");
    }

    /// Physical coordinate of grid node j along one axis.
    double coord(int j) const { return -kPi + kTwoPi * j / n; }
};

}  // namespace snsmix
