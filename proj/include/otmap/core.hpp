#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <stdexcept>
#include <string>

namespace otmap {

/// n points in R^d, one point per row.
using SampleSet = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Invalid configuration, arguments or inputs (CLI exit code 2).
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A numerical procedure could not produce a trustworthy result (CLI exit code 3).
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A query point lies outside the domain on which a field or model is defined.
class DomainError : public std::out_of_range {
public:
    DomainError(const std::string& what, std::size_t point, std::size_t axis)
        : std::out_of_range(what), point_(point), axis_(axis) {}

    [[nodiscard]] std::size_t point() const noexcept { return point_; }
    [[nodiscard]] std::size_t axis() const noexcept { return axis_; }

private:
    std::size_t point_;
    std::size_t axis_;
};

[[nodiscard]] inline std::size_t ipow(std::size_t base, std::size_t exp) {
    std::size_t r = 1;
    while (exp-- > 0) r *= base;
    return r;
}

}  // namespace otmap
