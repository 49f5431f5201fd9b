#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace cmpc {

using Vec3 = Eigen::Vector3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat3 = Eigen::Matrix3d;
using Mat6 = Eigen::Matrix<double, 6, 6>;
using Mat63 = Eigen::Matrix<double, 6, 3>;

/// Relative position/velocity of an inspector in the Hill frame [m, m/s].
struct RelativeState {
    Vec3 dr = Vec3::Zero();
    Vec3 dv = Vec3::Zero();

    Vec6 stacked() const {
        Vec6 x;
        x << dr, dv;
        return x;
    }

    static RelativeState from(const Vec6& x) { return {x.head<3>(), x.tail<3>()}; }
};

/// Base of every error raised by the library. `reason()` is a stable,
/// machine-readable token (e.g. "singular-radius") used in reports and exit paths.
class Error : public std::runtime_error {
public:
    Error(std::string reason, const std::string& what)
        : std::runtime_error(what), reason_(std::move(reason)) {}

    const std::string& reason() const noexcept { return reason_; }

private:
    std::string reason_;
};

class DegenerateOrbit : public Error {
public:
    explicit DegenerateOrbit(const std::string& what) : Error("degenerate-orbit", what) {}
};

class SingularRadius : public Error {
public:
    explicit SingularRadius(const std::string& what) : Error("singular-radius", what) {}
};

class KeplerNoConvergence : public Error {
public:
    explicit KeplerNoConvergence(const std::string& what) : Error("kepler-no-convergence", what) {}
};

class NoConvergence : public Error {
public:
    explicit NoConvergence(const std::string& what) : Error("no-convergence", what) {}
};

class BelowSurface : public Error {
public:
    explicit BelowSurface(const std::string& what) : Error("below-surface", what) {}
};

class InvalidArgument : public Error {
public:
    explicit InvalidArgument(const std::string& what) : Error("invalid-argument", what) {}
};

}  // namespace cmpc
