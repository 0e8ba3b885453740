#pragma once

#include <filesystem>
#include <map>
#include <string>

#include <Eigen/Core>

#include "rainsar/geo.hpp"

namespace rainsar {

/// Row-major 2-D field; rows are image lines.
template <typename Scalar>
using Field = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using FieldF = Field<float>;
using Mask = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Missing precipitation marker in scans and projected rain channels.
inline constexpr float kMissing = -1.0f;

namespace channel {
inline const std::string kSsrVv = "ssr_vv";
inline const std::string kSsrVh = "ssr_vh";
/// 1 over ocean, 0 over land.
inline const std::string kLandMask = "land_mask";
inline const std::string kIncidence = "incidence";
inline const std::string kNesz = "nesz";
inline const std::string kWind = "wind";
inline const std::string kRain = "rain";
inline const std::string kSeg = "y_seg";
inline const std::string kRainRate = "y_rr";
}  // namespace channel

/// Geocoded multi-channel raster. Also used for composite radar products.
struct GeoRaster {
    Eigen::Index rows = 0;
    Eigen::Index cols = 0;
    double resolution_m = 200.0;
    GeoTransform transform;
    std::map<std::string, FieldF> channels;
    Timestamp timestamp{};
    std::map<std::string, std::string> metadata;

    GeoRaster() = default;
    GeoRaster(Eigen::Index rows, Eigen::Index cols, double resolution_m, const GeoTransform& transform);

    void set(const std::string& name, FieldF field);
    const FieldF& channel(const std::string& name) const;
    bool has(const std::string& name) const { return channels.count(name) != 0; }

    /// Throws FormatError on shape, resolution or land-mask violations.
    void validate() const;

    void write(const std::filesystem::path& path, const std::string& kind = "georaster") const;
    static GeoRaster read(const std::filesystem::path& path);
};

}  // namespace rainsar
