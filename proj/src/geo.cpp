#include "pwcare/geo.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <string>

#include "pwcare/error.hpp"

namespace pwcare::geo {

GeoPoint::GeoPoint(double lat, double lon) : lat_(lat), lon_(lon) {
  if (!std::isfinite(lat) || !std::isfinite(lon)) {
    throw Error(ErrorCode::MalformedCoordinate, "coordinate is not a finite number");
  }
  if (lat < -90.0 || lat > 90.0) {
    throw Error(ErrorCode::OutOfRange, "latitude " + std::to_string(lat) + " outside [-90, 90]");
  }
  if (lon <= -180.0 || lon > 180.0) {
    throw Error(ErrorCode::OutOfRange,
                "longitude " + std::to_string(lon) + " outside (-180, 180]");
  }
}

DistanceKm haversine_distance(const GeoPoint& a, const GeoPoint& b,
                              const EarthModel& earth) noexcept {
  constexpr double rad = EarthModel::deg_to_rad;
  const double phi1 = a.lat() * rad;
  const double phi2 = b.lat() * rad;
  const double half_dphi = std::sin((b.lat() - a.lat()) * rad / 2.0);
  const double half_dlambda = std::sin((b.lon() - a.lon()) * rad / 2.0);

  double h = half_dphi * half_dphi + std::cos(phi1) * std::cos(phi2) * half_dlambda * half_dlambda;
  h = std::clamp(h, 0.0, 1.0);
  return DistanceKm{2.0 * earth.radius_km * std::asin(std::min(1.0, std::sqrt(h)))};
}

namespace {

double parse_degrees(std::string_view text) {
  std::string_view body = text;
  if (!body.empty() && body.front() == '+') body.remove_prefix(1);
  if (body.empty() || body.front() == '+') {
    throw Error(ErrorCode::MalformedCoordinate, "coordinate '" + std::string(text) + "' is not numeric");
  }
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(body.data(), body.data() + body.size(), value,
                                   std::chars_format::fixed);
  if (ec == std::errc::result_out_of_range) {
    throw Error(ErrorCode::OutOfRange, "coordinate '" + std::string(text) + "' out of range");
  }
  if (ec != std::errc{} || ptr != body.data() + body.size() || !std::isfinite(value)) {
    throw Error(ErrorCode::MalformedCoordinate, "coordinate '" + std::string(text) + "' is not numeric");
  }
  return value;
}

}  // namespace

GeoPoint validate_point(std::string_view raw_lat, std::string_view raw_lon) {
  const double lat = parse_degrees(raw_lat);
  const double lon = parse_degrees(raw_lon);
  return GeoPoint(lat, lon);
}

std::string_view to_string(FacilityKind kind) noexcept {
  return kind == FacilityKind::Hospital ? "hospital" : "care_center";
}

FacilityKind facility_kind_from(std::string_view text) {
  if (text == "hospital") return FacilityKind::Hospital;
  if (text == "care_center") return FacilityKind::CareCenter;
  throw Error(ErrorCode::InvalidField, "unknown facility kind '" + std::string(text) + "'");
}

Nearest nearest_facility(const GeoPoint& origin, std::span<const Candidate> candidates,
                         FacilityKind kind, const EarthModel& earth) {
  const Candidate* best = nullptr;
  DistanceKm best_distance{};
  for (const auto& candidate : candidates) {
    if (candidate.kind != kind) continue;
    const DistanceKm d = haversine_distance(origin, candidate.location, earth);
    if (best == nullptr || d < best_distance || (d == best_distance && candidate.id < best->id)) {
      best = &candidate;
      best_distance = d;
    }
  }
  if (best == nullptr) {
    throw Error(ErrorCode::EmptyCandidateSet,
                "no " + std::string(to_string(kind)) + " registered");
  }
  return Nearest{best->id, best_distance};
}

}  // namespace pwcare::geo
