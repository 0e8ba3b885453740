#pragma once

#include <array>
#include <chrono>
#include <string>
#include <utility>

namespace rainsar {

using Timestamp = std::chrono::sys_seconds;

/// Parses "YYYY-MM-DDTHH:MM:SSZ" (trailing Z optional).
Timestamp parse_timestamp(const std::string& iso);
std::string format_timestamp(Timestamp t);

struct LatLon {
    double lat = 0.0;
    double lon = 0.0;
};

inline constexpr double kEarthRadiusKm = 6371.0;

double great_circle_km(const LatLon& a, const LatLon& b);

/// Initial bearing from `from` to `to`, degrees clockwise from north in [0, 360).
double bearing_deg(const LatLon& from, const LatLon& to);

/// Point reached from `origin` along `bearing` after `distance_km` on the sphere.
LatLon destination(const LatLon& origin, double bearing_deg, double distance_km);

/// Affine pixel <-> geographic mapping, GDAL ordering:
///   lon = t0 + u*t1 + v*t2,  lat = t3 + u*t4 + v*t5
/// where (u, v) are continuous (column, row) coordinates with pixel (r, c)
/// covering [c, c+1) x [r, r+1).
struct GeoTransform {
    std::array<double, 6> t{0.0, 1.0, 0.0, 0.0, 0.0, -1.0};

    LatLon at(double u, double v) const { return {t[3] + u * t[4] + v * t[5], t[0] + u * t[1] + v * t[2]}; }
    LatLon pixel_center(long row, long col) const { return at(col + 0.5, row + 0.5); }

    double determinant() const { return t[1] * t[5] - t[2] * t[4]; }
    bool singular() const;

    /// Continuous (u, v) for a geographic point. Throws GeometryError if singular.
    std::pair<double, double> to_pixel(const LatLon& p) const;

    /// North-up grid of `resolution_m` pixels with its top-left corner at `origin`.
    static GeoTransform north_up(const LatLon& origin, double resolution_m);
};

}  // namespace rainsar
