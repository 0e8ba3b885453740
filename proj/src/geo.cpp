#include "rainsar/geo.hpp"

#include <cmath>
#include <cstdio>

#include "rainsar/error.hpp"

namespace rainsar {

namespace {
constexpr double kDeg = M_PI / 180.0;
}

Timestamp parse_timestamp(const std::string& iso) {
    int y, mo, d, h, mi, s;
    if (std::sscanf(iso.c_str(), "%d-%d-%dT%d:%d:%d", &y, &mo, &d, &h, &mi, &s) != 6)
        throw FormatError("bad timestamp '" + iso + "'");
    using namespace std::chrono;
    const year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
    if (!ymd.ok()) throw FormatError("bad date in timestamp '" + iso + "'");
    return sys_days{ymd} + hours{h} + minutes{mi} + seconds{s};
}

std::string format_timestamp(Timestamp t) {
    using namespace std::chrono;
    const auto day_point = floor<days>(t);
    const year_month_day ymd{day_point};
    const hh_mm_ss hms{t - day_point};
    char buf[64];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02ld:%02ld:%02ldZ", int(ymd.year()), unsigned(ymd.month()),
                  unsigned(ymd.day()), long(hms.hours().count()), long(hms.minutes().count()),
                  long(hms.seconds().count()));
    return buf;
}

double great_circle_km(const LatLon& a, const LatLon& b) {
    const double p1 = a.lat * kDeg, p2 = b.lat * kDeg;
    const double dp = p2 - p1, dl = (b.lon - a.lon) * kDeg;
    const double h = std::sin(dp / 2) * std::sin(dp / 2) + std::cos(p1) * std::cos(p2) * std::sin(dl / 2) * std::sin(dl / 2);
    return 2.0 * kEarthRadiusKm * std::atan2(std::sqrt(h), std::sqrt(1.0 - h));
}

double bearing_deg(const LatLon& from, const LatLon& to) {
    const double p1 = from.lat * kDeg, p2 = to.lat * kDeg, dl = (to.lon - from.lon) * kDeg;
    const double y = std::sin(dl) * std::cos(p2);
    const double x = std::cos(p1) * std::sin(p2) - std::sin(p1) * std::cos(p2) * std::cos(dl);
    double b = std::atan2(y, x) / kDeg;
    if (b < 0.0) b += 360.0;
    if (b >= 360.0) b -= 360.0;
    return b;
}

LatLon destination(const LatLon& origin, double bearing, double distance_km) {
    const double d = distance_km / kEarthRadiusKm, th = bearing * kDeg;
    const double p1 = origin.lat * kDeg, l1 = origin.lon * kDeg;
    const double p2 = std::asin(std::sin(p1) * std::cos(d) + std::cos(p1) * std::sin(d) * std::cos(th));
    const double l2 = l1 + std::atan2(std::sin(th) * std::sin(d) * std::cos(p1), std::cos(d) - std::sin(p1) * std::sin(p2));
    return {p2 / kDeg, l2 / kDeg};
}

bool GeoTransform::singular() const {
    const double scale = std::abs(t[1]) + std::abs(t[2]) + std::abs(t[4]) + std::abs(t[5]);
    return !std::isfinite(determinant()) || scale == 0.0 || std::abs(determinant()) <= 1e-15 * scale * scale;
}

std::pair<double, double> GeoTransform::to_pixel(const LatLon& p) const {
    if (singular()) throw GeometryError("singular geotransform");
    const double dx = p.lon - t[0], dy = p.lat - t[3];
    const double det = determinant();
    return {(t[5] * dx - t[2] * dy) / det, (-t[4] * dx + t[1] * dy) / det};
}

GeoTransform GeoTransform::north_up(const LatLon& origin, double resolution_m) {
    const double dlat = resolution_m / 1000.0 / kEarthRadiusKm / kDeg;
    const double dlon = dlat / std::cos(origin.lat * kDeg);
    return GeoTransform{{origin.lon, dlon, 0.0, origin.lat, 0.0, -dlat}};
}

}  // namespace rainsar
