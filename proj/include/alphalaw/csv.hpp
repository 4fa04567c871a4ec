#pragma once

#include <optional>
#include <string>
#include <string_view>

namespace alphalaw::csv {

/// 10 significant digits, "inf"/"-inf"/"nan" for non-finite values.
std::string num(double v);
/// Empty field for a missing value.
std::string num(const std::optional<double>& v);
/// Quotes the field when it contains a comma, quote or newline.
std::string field(std::string_view text);

}  // namespace alphalaw::csv
