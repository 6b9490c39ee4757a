#pragma once

#include <compare>
#include <numbers>
#include <span>
#include <string>
#include <string_view>

namespace pwcare::geo {

// Latitude/longitude in decimal degrees. Invalid values never make it
// into a GeoPoint: the constructor throws pwcare::Error.
class GeoPoint {
 public:
  // Throws MalformedCoordinate for NaN/infinity, OutOfRange when
  // lat is outside [-90, 90] or lon outside (-180, 180].
  GeoPoint(double lat, double lon);

  double lat() const noexcept { return lat_; }
  double lon() const noexcept { return lon_; }

  friend bool operator==(const GeoPoint&, const GeoPoint&) = default;

 private:
  double lat_;
  double lon_;
};

struct DistanceKm {
  double value = 0.0;

  friend auto operator<=>(const DistanceKm&, const DistanceKm&) = default;
};

struct EarthModel {
  double radius_km = 6372.797;
  static constexpr double deg_to_rad = std::numbers::pi / 180.0;
};

inline constexpr EarthModel kEarth{};

DistanceKm haversine_distance(const GeoPoint& a, const GeoPoint& b,
                              const EarthModel& earth = kEarth) noexcept;

// Parses decimal-degree text as it arrives inside message payloads.
GeoPoint validate_point(std::string_view raw_lat, std::string_view raw_lon);

enum class FacilityKind { CareCenter, Hospital };

std::string_view to_string(FacilityKind kind) noexcept;
FacilityKind facility_kind_from(std::string_view text);  // throws InvalidField

struct Candidate {
  std::string id;
  FacilityKind kind;
  GeoPoint location;
};

struct Nearest {
  std::string id;
  DistanceKm distance;
};

// Exhaustive scan over candidates of the given kind. Ties resolve to the
// lexicographically smallest id. Throws EmptyCandidateSet when no
// candidate has the requested kind.
Nearest nearest_facility(const GeoPoint& origin, std::span<const Candidate> candidates,
                         FacilityKind kind, const EarthModel& earth = kEarth);

}  // namespace pwcare::geo
