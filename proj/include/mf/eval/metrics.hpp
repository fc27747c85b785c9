#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

namespace mf::eval {

enum class InfractionKind { pedestrian, vehicle, static_object, red_light, stop_sign, off_road };

InfractionKind parse_infraction(const std::string& s);
std::string to_string(InfractionKind k);

struct InfractionEvent {
  InfractionKind kind = InfractionKind::vehicle;
  std::size_t route_id = 0;
  double timestamp = 0.0;
};

/// Per-kind penalty coefficients. Off-road has no coefficient: it truncates completion instead.
struct PenaltyCoefficients {
  std::map<InfractionKind, double> values = {{InfractionKind::pedestrian, 0.50},
                                             {InfractionKind::vehicle, 0.60},
                                             {InfractionKind::static_object, 0.65},
                                             {InfractionKind::red_light, 0.70},
                                             {InfractionKind::stop_sign, 0.80}};
  double floor = 0.0;  // lower bound on the product

  void set(InfractionKind k, double v);
};

struct RouteResult {
  double completion = 0.0;  // R_i in [0, 1]
  double multiplier = 1.0;  // P_i in (0, 1]
};

// All aggregates are evaluated as exact rationals over the shortest decimal form of
// each input and rounded once, so hand-computed decimal examples come out exactly.

/// Product of coefficients over the events, floored.
double infraction_multiplier(const std::vector<InfractionEvent>& events, const PenaltyCoefficients& coeffs = {});
/// Mean R_i * 100.
double route_completion(const std::vector<RouteResult>& results);
/// Mean P_i (a fraction, not a percentage).
double infraction_score(const std::vector<RouteResult>& results);
/// Mean R_i * P_i * 100.
double driving_score(const std::vector<RouteResult>& results);

/// a - b evaluated on the shortest decimal forms of a and b, rounded once.
double decimal_difference(double a, double b);

struct MeanStd {
  double mean = 0.0, std = 0.0;
};
/// Population standard deviation.
MeanStd mean_std(const std::vector<double>& v);

}  // namespace mf::eval
