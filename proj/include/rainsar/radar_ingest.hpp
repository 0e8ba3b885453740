#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "rainsar/raster.hpp"

namespace rainsar::radar {

/// One ground-radar sweep: azimuth bins of 1 degree by range gates.
/// Negative rates mark missing gates.
struct PolarScan {
    std::string station_id;
    LatLon station;
    double elevation_deg = 0.5;
    Timestamp timestamp{};
    double gate_spacing_m = 250.0;
    FieldF rates;  ///< [azimuth x range], mm/h

    Eigen::Index azimuth_bins() const { return rates.rows(); }
    Eigen::Index range_gates() const { return rates.cols(); }
    double azimuth_width_deg() const { return 360.0 / static_cast<double>(azimuth_bins()); }
    double max_range_m() const { return gate_spacing_m * static_cast<double>(range_gates()); }

    void validate() const;
    void write(const std::filesystem::path& path) const;
    static PolarScan read(const std::filesystem::path& path);
};

/// Composite product on its own rectilinear grid (rain channel).
using CompositeScan = GeoRaster;

/// Rain field projected onto a target grid; `valid` is false where missing.
struct ProjectedRain {
    FieldF rate;
    Mask valid;

    /// Rate with missing pixels written as kMissing.
    FieldF with_sentinel() const;
    double missing_fraction() const;
};

/// Scan closest in time to `sar_time`; ties go to the earlier scan.
/// Throws NoScanInWindow if the closest is further than `window_s`.
const PolarScan& temporal_match(Timestamp sar_time, std::span<const PolarScan> scans, double window_s);
std::size_t temporal_match_index(Timestamp sar_time, std::span<const Timestamp> times, double window_s);

/// Bilinear interpolation in (azimuth, range) at each target pixel centre,
/// wrapping across north. Beyond the last gate the pixel is missing.
ProjectedRain project_polar(const PolarScan& scan, const GeoRaster& target);

/// Bilinear interpolation on the source grid of a composite product.
ProjectedRain project_composite(const CompositeScan& scan, const GeoRaster& target);

/// True where the great-circle distance from the pixel centre to `station`
/// is at most `max_km`.
Mask range_mask(const GeoRaster& target, const LatLon& station, double max_km);

}  // namespace rainsar::radar
