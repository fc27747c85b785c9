#include "mf/eval/metrics.hpp"

#include <boost/multiprecision/cpp_int.hpp>
#include <charconv>
#include <cmath>
#include <stdexcept>

namespace mf::eval {

namespace {

using boost::multiprecision::cpp_int;
using boost::multiprecision::cpp_rational;

// Shortest decimal that round-trips v, as an exact rational.
cpp_rational decimal_value(double v) {
  if (!std::isfinite(v)) throw std::invalid_argument("metrics: non-finite input");
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::scientific);
  std::string s(buf, res.ptr);
  const auto e = s.find('e');
  const int exponent = std::stoi(s.substr(e + 1));
  std::string mant = s.substr(0, e);
  bool neg = false;
  if (mant[0] == '-') {
    neg = true;
    mant.erase(0, 1);
  }
  int frac_digits = 0;
  if (const auto dot = mant.find('.'); dot != std::string::npos) {
    frac_digits = static_cast<int>(mant.size() - dot - 1);
    mant.erase(dot, 1);
  }
  cpp_int num(mant);
  if (neg) num = -num;
  const int shift = exponent - frac_digits;
  cpp_int scale = boost::multiprecision::pow(cpp_int(10), static_cast<unsigned>(std::abs(shift)));
  return shift >= 0 ? cpp_rational(num * scale) : cpp_rational(num, scale);
}

void require_nonempty(const std::vector<RouteResult>& r, const char* what) {
  if (r.empty()) throw std::invalid_argument(std::string(what) + ": no routes");
}

}  // namespace

InfractionKind parse_infraction(const std::string& s) {
  if (s == "pedestrian") return InfractionKind::pedestrian;
  if (s == "vehicle") return InfractionKind::vehicle;
  if (s == "static") return InfractionKind::static_object;
  if (s == "red_light") return InfractionKind::red_light;
  if (s == "stop_sign") return InfractionKind::stop_sign;
  if (s == "off_road") return InfractionKind::off_road;
  throw std::invalid_argument("unknown infraction kind '" + s + "'");
}

std::string to_string(InfractionKind k) {
  switch (k) {
    case InfractionKind::pedestrian: return "pedestrian";
    case InfractionKind::vehicle: return "vehicle";
    case InfractionKind::static_object: return "static";
    case InfractionKind::red_light: return "red_light";
    case InfractionKind::stop_sign: return "stop_sign";
    default: return "off_road";
  }
}

void PenaltyCoefficients::set(InfractionKind k, double v) {
  if (k == InfractionKind::off_road) throw std::invalid_argument("off_road has no penalty coefficient");
  if (!(v > 0.0 && v <= 1.0)) throw std::invalid_argument("penalty coefficient must lie in (0, 1]");
  values[k] = v;
}

double infraction_multiplier(const std::vector<InfractionEvent>& events, const PenaltyCoefficients& coeffs) {
  cpp_rational p = 1;
  for (const auto& e : events) {
    if (e.kind == InfractionKind::off_road) continue;
    auto it = coeffs.values.find(e.kind);
    if (it == coeffs.values.end()) throw std::invalid_argument("no coefficient for infraction " + to_string(e.kind));
    p *= decimal_value(it->second);
  }
  const auto floor = decimal_value(coeffs.floor);
  return (p < floor ? floor : p).convert_to<double>();
}

double route_completion(const std::vector<RouteResult>& results) {
  require_nonempty(results, "route_completion");
  cpp_rational sum = 0;
  for (const auto& r : results) sum += decimal_value(r.completion);
  return (sum * 100 / results.size()).convert_to<double>();
}

double infraction_score(const std::vector<RouteResult>& results) {
  require_nonempty(results, "infraction_score");
  cpp_rational sum = 0;
  for (const auto& r : results) sum += decimal_value(r.multiplier);
  return (sum / results.size()).convert_to<double>();
}

double driving_score(const std::vector<RouteResult>& results) {
  require_nonempty(results, "driving_score");
  cpp_rational sum = 0;
  for (const auto& r : results) sum += decimal_value(r.completion) * decimal_value(r.multiplier);
  return (sum * 100 / results.size()).convert_to<double>();
}

double decimal_difference(double a, double b) { return (decimal_value(a) - decimal_value(b)).convert_to<double>(); }

MeanStd mean_std(const std::vector<double>& v) {
  if (v.empty()) return {};
  cpp_rational m = 0;
  for (double x : v) m += decimal_value(x);
  m /= v.size();
  cpp_rational s = 0;
  for (double x : v) {
    const cpp_rational d = decimal_value(x) - m;
    s += d * d;
  }
  s /= v.size();
  return {m.convert_to<double>(), std::sqrt(s.convert_to<double>())};
}

}  // namespace mf::eval
