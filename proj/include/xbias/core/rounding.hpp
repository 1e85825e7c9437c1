#pragma once

#include <optional>
#include <string>

namespace xbias {

/// Round half away from zero at `decimals` places, tolerant of binary
/// representation error (77.75 stored as 77.7499999... still rounds up).
double round_half_up(double value, int decimals = 1);

/// Fixed one-decimal rendering after half-up rounding, e.g. "19.4".
std::string format_1dp(double value);

/// Same, with `undefined_marker` for an empty optional.
std::string format_1dp(const std::optional<double>& value, const std::string& undefined_marker);

} // namespace xbias
