#pragma once

#include <string_view>

namespace hcite {

enum class Verdict { Positive, Negative };

constexpr std::string_view verdict_token(Verdict v) { return v == Verdict::Positive ? "YES" : "NO"; }
constexpr Verdict invert(Verdict v) { return v == Verdict::Positive ? Verdict::Negative : Verdict::Positive; }

}  // namespace hcite
