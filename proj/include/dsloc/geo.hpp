#pragma once

#include <span>
#include <vector>

namespace dsloc {

struct GpsCoordinate {
    double lat_deg = 0.0;
    double lon_deg = 0.0;

    bool operator==(const GpsCoordinate&) const = default;
};

struct PlanarPoint {
    double x_m = 0.0;
    double y_m = 0.0;

    bool operator==(const PlanarPoint&) const = default;
};

/// Great-circle distance in meters on a sphere of radius 6371000 m.
double haversine_m(const GpsCoordinate& a, const GpsCoordinate& b);

/// Equirectangular projection about a fixed origin. Sub-millimeter error at
/// city scale, exactly invertible.
class PlanarProjection {
  public:
    explicit PlanarProjection(GpsCoordinate origin);
    static PlanarProjection around_centroid(std::span<const GpsCoordinate> points);

    PlanarPoint to_meters(const GpsCoordinate& p) const;
    GpsCoordinate to_gps(const PlanarPoint& p) const;
    GpsCoordinate origin() const { return origin_; }

  private:
    GpsCoordinate origin_;
    double cos_lat0_ = 1.0;
};

}  // namespace dsloc
