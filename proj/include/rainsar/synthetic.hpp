#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "rainsar/dataset.hpp"
#include "rainsar/radar_ingest.hpp"
#include "rainsar/raster.hpp"

namespace rainsar::synthetic {

struct SceneParams {
    std::uint64_t seed = 0;
    Eigen::Index rows = 128;
    Eigen::Index cols = 128;
    double resolution_m = 781.25;
    LatLon center{30.0, -80.0};
    std::array<int, 2> cells{0, 6};                   ///< rain-cell count range (inclusive)
    std::array<double, 2> amplitude_mmh{2.0, 40.0};
    std::array<double, 2> radius_km{2.0, 8.0};        ///< Gaussian standard deviation
    std::array<double, 2> wind_base{1.0, 18.0};       ///< m/s, drawn per scene
    double wind_gradient = 4.0;                       ///< m/s per 100 km along a random heading
    double prior_noise = 0.3;                         ///< m/s, forecast error of the wind prior
    double coupling_vv = 1.0;
    double coupling_vh = 3.0;
    double rain_scale_mmh = 10.0;                     ///< tanh saturation scale
    double vv_saturation_wind = 12.0;                 ///< m/s; rain signature in VV fades above
    double nesz_db = -25.0;
    double speckle = 0.1;                             ///< relative multiplicative noise
    double jitter_km = 0.0;                           ///< groundtruth shift, uniform per axis
    double land_probability = 0.3;
    bool all_land = false;
    std::array<double, 2> incidence_deg{30.0, 45.0};  ///< near and far range across columns

    void validate() const;
    nlohmann::json to_json() const;
    static SceneParams from_json(const nlohmann::json& j);
};

struct RainCell {
    double x_km, y_km;  ///< from the top-left corner; y grows with rows
    double amplitude_mmh;
    double sigma_km;
};

struct Scene {
    /// ssr_vv, ssr_vh, land_mask, incidence, nesz, wind (the prior).
    GeoRaster sar;
    FieldF truth;        ///< rain under the SAR footprint
    FieldF groundtruth;  ///< truth displaced by the jitter vector
    LatLon station;      ///< scene centre
    std::vector<RainCell> cells;
    std::array<double, 2> jitter_km{0.0, 0.0};  ///< (x, y)
    double wind_base = 0.0;

    /// Groundtruth rate at a point given in scene kilometres.
    double groundtruth_at(double x_km, double y_km) const;
    /// SAR raster with the groundtruth as its rain channel and the station
    /// recorded in the metadata.
    GeoRaster composite() const;
    /// Ground-radar sweep at the station sampling the groundtruth.
    radar::PolarScan polar_scan(double max_range_km = 175.0) const;
};

Scene generate_scene(const SceneParams& params);

/// Parameters of scene `index` of a dataset: a derived seed and per-scene
/// station / processing tags.
SceneParams scene_params(const SceneParams& base, int index);

struct SynthOptions {
    int n_scenes = 1;
    /// Route the groundtruth through polar scans and collocation; otherwise
    /// write composites directly.
    bool via_polar = true;
    dataset::BuildOptions build;
    int workers = 1;
};

/// Generates scenes into out_dir and runs the dataset pipeline on them.
/// The manifest is written to out_dir/manifest.json.
dataset::Manifest synth_dataset(const SceneParams& params, const SynthOptions& options,
                                const std::filesystem::path& out_dir);

}  // namespace rainsar::synthetic
