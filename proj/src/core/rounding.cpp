#include "xbias/core/rounding.hpp"

#include <cmath>

#include <fmt/format.h>

namespace xbias {

double round_half_up(double value, int decimals) {
    const double scale = std::pow(10.0, decimals);
    const double scaled = std::fabs(value) * scale;
    // Inputs are sums of one-decimal table cells; relative slack of 1e-9
    // absorbs accumulated binary error without moving true non-ties.
    const double rounded = std::floor(scaled + 0.5 + 1e-9 * std::max(1.0, scaled));
    return std::copysign(rounded / scale, value);
}

std::string format_1dp(double value) {
    double r = round_half_up(value, 1);
    if (r == 0.0) r = 0.0; // no "-0.0"
    return fmt::format("{:.1f}", r);
}

std::string format_1dp(const std::optional<double>& value, const std::string& undefined_marker) {
    return value ? format_1dp(*value) : undefined_marker;
}

} // namespace xbias
