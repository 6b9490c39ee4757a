#pragma once

#include <filesystem>
#include <random>
#include <string>

#include "pwcare/clock.hpp"
#include "pwcare/error.hpp"

namespace pwcare::testing {

inline constexpr double kPanelLat = 36.2062125;
inline constexpr double kPanelLon = 44.0307111;

inline Timestamp ts(const char* iso) { return *parse_timestamp(iso); }
inline Date date(const char* ymd) { return *parse_date(ymd); }

template <class F>
ErrorCode code_of(F&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::Internal;
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("pwcare-test-" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

// Two hospitals (one beside the control-panel coordinates, one ~40 km
// south) and two care centers.
inline const char* kFacilitiesCsv =
    "facility_id,kind,name,lat,lon,contact_phone\n"
    "H1,hospital,Maternity Hospital,36.2100000,44.0350000,+9646600000001\n"
    "H2,hospital,General Hospital,35.8500000,44.0307111,+9646600000002\n"
    "C1,care_center,Ankawa Care Center,36.2150000,44.0307111,+9646600000011\n"
    "C2,care_center,Shaqlawa Care Center,36.2700000,44.0307111,+9646600000012\n";

}  // namespace pwcare::testing
