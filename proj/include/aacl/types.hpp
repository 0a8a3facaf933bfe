#pragma once

// Value types shared between the world, the embedding providers and the
// concept mapping.

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace aacl {

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

/// Heading in [0, 2pi), elevation in [-pi/2, pi/2].
class Direction {
public:
    Direction() = default;
    Direction(double heading, double elevation) : heading_(normalize_heading(heading)), elevation_(elevation) {
        if (!std::isfinite(heading) || !std::isfinite(elevation))
            throw std::invalid_argument("Direction: non-finite angle");
        if (elevation < -kPi / 2 || elevation > kPi / 2)
            throw std::invalid_argument("Direction: elevation " + std::to_string(elevation) +
                                        " outside [-pi/2, pi/2]");
    }

    double heading() const { return heading_; }
    double elevation() const { return elevation_; }

    friend bool operator==(const Direction&, const Direction&) = default;

    static double normalize_heading(double h) {
        double r = std::fmod(h, kTwoPi);
        if (r < 0) r += kTwoPi;
        if (r >= kTwoPi) r = 0.0;
        return r;
    }

private:
    double heading_ = 0.0;
    double elevation_ = 0.0;
};

/// Single view of a panorama as seen by the embedding providers.
struct ObservationView {
    std::string image_id;  // key into a file-backed store
    std::string label;     // planted object label (synthetic worlds)
    Direction direction;
    bool navigable = false;
};

}  // namespace aacl
