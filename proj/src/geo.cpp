#include "dsloc/geo.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace dsloc {

namespace {
constexpr double kEarthRadiusM = 6371000.0;
constexpr double kDegToRad = std::numbers::pi / 180.0;
}  // namespace

double haversine_m(const GpsCoordinate& a, const GpsCoordinate& b) {
    const double lat1 = a.lat_deg * kDegToRad;
    const double lat2 = b.lat_deg * kDegToRad;
    const double dlat = (b.lat_deg - a.lat_deg) * kDegToRad;
    const double dlon = (b.lon_deg - a.lon_deg) * kDegToRad;
    const double sl = std::sin(dlat / 2.0);
    const double so = std::sin(dlon / 2.0);
    double h = sl * sl + std::cos(lat1) * std::cos(lat2) * so * so;
    h = std::min(1.0, std::max(0.0, h));
    return 2.0 * kEarthRadiusM * std::asin(std::sqrt(h));
}

PlanarProjection::PlanarProjection(GpsCoordinate origin) : origin_(origin) {
    cos_lat0_ = std::cos(origin.lat_deg * kDegToRad);
}

PlanarProjection PlanarProjection::around_centroid(std::span<const GpsCoordinate> points) {
    if (points.empty()) throw std::invalid_argument("PlanarProjection: no points");
    double lat = 0.0, lon = 0.0;
    for (const auto& p : points) {
        lat += p.lat_deg;
        lon += p.lon_deg;
    }
    return PlanarProjection({lat / points.size(), lon / points.size()});
}

PlanarPoint PlanarProjection::to_meters(const GpsCoordinate& p) const {
    return {kEarthRadiusM * cos_lat0_ * (p.lon_deg - origin_.lon_deg) * kDegToRad,
            kEarthRadiusM * (p.lat_deg - origin_.lat_deg) * kDegToRad};
}

GpsCoordinate PlanarProjection::to_gps(const PlanarPoint& p) const {
    return {origin_.lat_deg + p.y_m / (kEarthRadiusM * kDegToRad),
            origin_.lon_deg + p.x_m / (kEarthRadiusM * cos_lat0_ * kDegToRad)};
}

}  // namespace dsloc
