#pragma once

// Independent great-circle reference used only by tests. Vincenty's
// formula specialised to a sphere (atan2 form), which shares no code path
// with the haversine/asin route in src/geo.cpp.

#include <cmath>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

namespace pwcare::testing {

inline double vincenty_sphere_km(double lat1, double lon1, double lat2, double lon2,
                                 double radius_km) {
  constexpr double rad = std::numbers::pi / 180.0;
  const double p1 = lat1 * rad;
  const double p2 = lat2 * rad;
  const double dl = (lon2 - lon1) * rad;
  const double a = std::cos(p2) * std::sin(dl);
  const double b = std::cos(p1) * std::sin(p2) - std::sin(p1) * std::cos(p2) * std::cos(dl);
  const double num = std::hypot(a, b);
  const double den = std::sin(p1) * std::sin(p2) + std::cos(p1) * std::cos(p2) * std::cos(dl);
  return radius_km * std::atan2(num, den);
}

struct OraclePoint {
  std::string id;
  bool matches_kind;
  double lat;
  double lon;
};

// Plain exhaustive argmin with the (distance, id) lexicographic order.
inline std::optional<std::string> brute_force_nearest(double lat, double lon,
                                                      const std::vector<OraclePoint>& points,
                                                      double radius_km) {
  std::optional<std::string> best;
  double best_d = 0.0;
  for (const auto& p : points) {
    if (!p.matches_kind) continue;
    const double d = vincenty_sphere_km(lat, lon, p.lat, p.lon, radius_km);
    if (!best || d < best_d || (d == best_d && p.id < *best)) {
      best = p.id;
      best_d = d;
    }
  }
  return best;
}

}  // namespace pwcare::testing
