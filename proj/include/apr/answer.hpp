#pragma once

// Final-answer equivalence checking.
//
// The built-in checker canonicalizes LaTeX-ish answer strings (trim,
// whitespace collapse, \left/\right removal, \dfrac -> \frac, outer $
// stripping) and falls back to exact rational comparison so that e.g.
// "0.09", "9/100" and "\frac{9}{100}" all compare equal.  It is deliberately
// conservative: anything it cannot understand compares by canonical string
// only.  AnswerVerifier is the extension point for plugging in a stronger
// external checker.

#include <cctype>
#include <cstdint>
#include <numeric>
#include <optional>
#include <string>
#include <string_view>

#include "apr/codec.hpp"  // detail::is_space

namespace apr {

namespace detail {

inline void replace_all(std::string* s, std::string_view from,
                        std::string_view to) {
  std::size_t pos = 0;
  while ((pos = s->find(from, pos)) != std::string::npos) {
    s->replace(pos, from.size(), to);
    pos += to.size();
  }
}

}  // namespace detail

inline std::string canonicalize_answer(std::string_view raw) {
  std::string s(detail::trim(raw));
  // Strip matching outer math-mode dollar signs, repeatedly ("$$x$$", "$x$").
  while (s.size() >= 2 && s.front() == '$' && s.back() == '$') {
    s = std::string(detail::trim(std::string_view(s).substr(1, s.size() - 2)));
  }
  detail::replace_all(&s, "\\left", "");
  detail::replace_all(&s, "\\right", "");
  detail::replace_all(&s, "\\dfrac", "\\frac");
  // Collapse whitespace runs to a single space.
  std::string out;
  out.reserve(s.size());
  bool in_ws = false;
  for (char c : s) {
    if (detail::is_space(c)) {
      in_ws = true;
      continue;
    }
    if (in_ws && !out.empty()) out += ' ';
    in_ws = false;
    out += c;
  }
  return out;
}

namespace detail {

struct Rational {
  // Normalized: den > 0, gcd(|num|, den) == 1.
  std::int64_t num = 0;
  std::int64_t den = 1;
};

inline std::optional<Rational> make_rational(std::int64_t num,
                                             std::int64_t den) {
  if (den == 0) return std::nullopt;
  if (den < 0) {
    num = -num;
    den = -den;
  }
  const std::int64_t g = std::gcd(num < 0 ? -num : num, den);
  if (g > 1) {
    num /= g;
    den /= g;
  }
  return Rational{num, den};
}

// Parses a decimal or integer literal ("12", "-0.5", "+3.25") exactly.
inline std::optional<Rational> parse_decimal(std::string_view s) {
  if (s.empty()) return std::nullopt;
  std::size_t i = 0;
  bool neg = false;
  if (s[i] == '+' || s[i] == '-') {
    neg = s[i] == '-';
    ++i;
  }
  std::int64_t num = 0;
  std::int64_t den = 1;
  bool any_digit = false;
  bool after_point = false;
  for (; i < s.size(); ++i) {
    const char c = s[i];
    if (c == '.') {
      if (after_point) return std::nullopt;
      after_point = true;
      continue;
    }
    if (!std::isdigit(static_cast<unsigned char>(c))) return std::nullopt;
    // 17 significant digits keeps num/den comfortably inside int64.
    if (num > 922337203685477580LL / 10) return std::nullopt;
    num = num * 10 + (c - '0');
    if (after_point) {
      if (den > 922337203685477580LL / 10) return std::nullopt;
      den *= 10;
    }
    any_digit = true;
  }
  if (!any_digit) return std::nullopt;
  return make_rational(neg ? -num : num, den);
}

// Accepts decimals, "a/b", and "\frac{a}{b}" (numerator/denominator each a
// decimal or integer literal, optional leading sign outside the \frac).
inline std::optional<Rational> parse_rational(std::string_view s) {
  s = trim(s);
  if (s.empty()) return std::nullopt;

  bool neg = false;
  if (s.front() == '+' || s.front() == '-') {
    neg = s.front() == '-';
    s = trim(s.substr(1));
  }

  auto negate = [&](std::optional<Rational> r) -> std::optional<Rational> {
    if (r && neg) r->num = -r->num;
    return r;
  };

  constexpr std::string_view frac = "\\frac";
  if (s.substr(0, frac.size()) == frac) {
    std::string_view rest = trim(s.substr(frac.size()));
    if (rest.size() < 2 || rest.front() != '{') return std::nullopt;
    const std::size_t close_a = rest.find('}');
    if (close_a == std::string_view::npos) return std::nullopt;
    std::string_view a = rest.substr(1, close_a - 1);
    std::string_view tail = trim(rest.substr(close_a + 1));
    if (tail.size() < 2 || tail.front() != '{' || tail.back() != '}')
      return std::nullopt;
    std::string_view b = tail.substr(1, tail.size() - 2);
    const auto ra = parse_decimal(trim(a));
    const auto rb = parse_decimal(trim(b));
    if (!ra || !rb || rb->num == 0) return std::nullopt;
    // a/b with exact rational division: (an/ad) / (bn/bd) = an*bd / (ad*bn).
    const __int128 num = static_cast<__int128>(ra->num) * rb->den;
    const __int128 den = static_cast<__int128>(ra->den) * rb->num;
    if (num > INT64_MAX || num < INT64_MIN || den > INT64_MAX ||
        den < INT64_MIN) {
      return std::nullopt;
    }
    return negate(make_rational(static_cast<std::int64_t>(num),
                                static_cast<std::int64_t>(den)));
  }

  const std::size_t slash = s.find('/');
  if (slash != std::string_view::npos) {
    const auto a = parse_decimal(trim(s.substr(0, slash)));
    const auto b = parse_decimal(trim(s.substr(slash + 1)));
    if (!a || !b || b->num == 0) return std::nullopt;
    const __int128 num = static_cast<__int128>(a->num) * b->den;
    const __int128 den = static_cast<__int128>(a->den) * b->num;
    if (num > INT64_MAX || num < INT64_MIN || den > INT64_MAX ||
        den < INT64_MIN) {
      return std::nullopt;
    }
    return negate(make_rational(static_cast<std::int64_t>(num),
                                static_cast<std::int64_t>(den)));
  }

  return negate(parse_decimal(s));
}

}  // namespace detail

// True when candidate and gold are equivalent answers: equal after
// canonicalization, or both parse as rationals with equal value.
inline bool check_answer(std::string_view candidate, std::string_view gold) {
  const std::string c = canonicalize_answer(candidate);
  const std::string g = canonicalize_answer(gold);
  if (c == g) return !c.empty();
  const auto rc = detail::parse_rational(c);
  const auto rg = detail::parse_rational(g);
  if (rc && rg) {
    return static_cast<__int128>(rc->num) * rg->den ==
           static_cast<__int128>(rg->num) * rc->den;
  }
  return false;
}

// Extension point: swap in a stronger equivalence checker (e.g. an external
// CAS-backed process) without touching reward code.
class AnswerVerifier {
 public:
  virtual ~AnswerVerifier() = default;
  virtual bool equivalent(std::string_view candidate,
                          std::string_view gold) const = 0;
};

class BuiltinVerifier final : public AnswerVerifier {
 public:
  bool equivalent(std::string_view candidate,
                  std::string_view gold) const override {
    return check_answer(candidate, gold);
  }
};

}  // namespace apr
