#include "rainsar/synthetic.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>

#include "rainsar/collocate.hpp"
#include "rainsar/error.hpp"
#include "rainsar/gmf.hpp"
#include "rainsar/parallel.hpp"
#include "rainsar/rng.hpp"

namespace rainsar::synthetic {

namespace fs = std::filesystem;

namespace {

constexpr double kDeg = M_PI / 180.0;

template <typename T>
void range_check(const std::array<T, 2>& r, T lo, const char* name) {
    if (!(r[0] >= lo && r[1] >= r[0])) throw ConfigError(std::string("invalid range for ") + name);
}

double cell_sum(const std::vector<RainCell>& cells, double x, double y) {
    double r = 0.0;
    for (const auto& c : cells) {
        const double dx = x - c.x_km, dy = y - c.y_km;
        r += c.amplitude_mmh * std::exp(-(dx * dx + dy * dy) / (2.0 * c.sigma_km * c.sigma_km));
    }
    return r;
}

}  // namespace

void SceneParams::validate() const {
    if (rows < 1 || cols < 1 || !(resolution_m > 0)) throw ConfigError("scene size and resolution must be positive");
    range_check(cells, 0, "cells");
    range_check(amplitude_mmh, 0.0, "amplitude_mmh");
    range_check(radius_km, 1e-6, "radius_km");
    range_check(wind_base, 0.0, "wind_base");
    range_check(incidence_deg, 16.0, "incidence_deg");
    if (incidence_deg[1] > 50.0) throw ConfigError("incidence beyond the GMF validity range");
    if (!(jitter_km >= 0 && jitter_km <= 5.0)) throw ConfigError("jitter_km must lie in [0, 5]");
    if (!(land_probability >= 0 && land_probability <= 1)) throw ConfigError("land_probability must lie in [0, 1]");
    if (!(speckle >= 0) || !(prior_noise >= 0) || !(rain_scale_mmh > 0) || !(vv_saturation_wind > 0))
        throw ConfigError("invalid noise or coupling parameter");
}

nlohmann::json SceneParams::to_json() const {
    return {{"seed", seed},
            {"rows", rows},
            {"cols", cols},
            {"resolution_m", resolution_m},
            {"center", {center.lat, center.lon}},
            {"cells", cells},
            {"amplitude_mmh", amplitude_mmh},
            {"radius_km", radius_km},
            {"wind_base", wind_base},
            {"wind_gradient", wind_gradient},
            {"prior_noise", prior_noise},
            {"coupling_vv", coupling_vv},
            {"coupling_vh", coupling_vh},
            {"rain_scale_mmh", rain_scale_mmh},
            {"vv_saturation_wind", vv_saturation_wind},
            {"nesz_db", nesz_db},
            {"speckle", speckle},
            {"jitter_km", jitter_km},
            {"land_probability", land_probability},
            {"all_land", all_land},
            {"incidence_deg", incidence_deg}};
}

SceneParams SceneParams::from_json(const nlohmann::json& j) {
    SceneParams p;
    p.seed = j.value("seed", p.seed);
    p.rows = j.value("rows", p.rows);
    p.cols = j.value("cols", p.cols);
    p.resolution_m = j.value("resolution_m", p.resolution_m);
    if (j.contains("center")) p.center = {j.at("center")[0].get<double>(), j.at("center")[1].get<double>()};
    if (j.contains("cells")) p.cells = j.at("cells").get<std::array<int, 2>>();
    if (j.contains("amplitude_mmh")) p.amplitude_mmh = j.at("amplitude_mmh").get<std::array<double, 2>>();
    if (j.contains("radius_km")) p.radius_km = j.at("radius_km").get<std::array<double, 2>>();
    if (j.contains("wind_base")) p.wind_base = j.at("wind_base").get<std::array<double, 2>>();
    p.wind_gradient = j.value("wind_gradient", p.wind_gradient);
    p.prior_noise = j.value("prior_noise", p.prior_noise);
    p.coupling_vv = j.value("coupling_vv", p.coupling_vv);
    p.coupling_vh = j.value("coupling_vh", p.coupling_vh);
    p.rain_scale_mmh = j.value("rain_scale_mmh", p.rain_scale_mmh);
    p.vv_saturation_wind = j.value("vv_saturation_wind", p.vv_saturation_wind);
    p.nesz_db = j.value("nesz_db", p.nesz_db);
    p.speckle = j.value("speckle", p.speckle);
    p.jitter_km = j.value("jitter_km", p.jitter_km);
    p.land_probability = j.value("land_probability", p.land_probability);
    p.all_land = j.value("all_land", p.all_land);
    if (j.contains("incidence_deg")) p.incidence_deg = j.at("incidence_deg").get<std::array<double, 2>>();
    p.validate();
    return p;
}

double Scene::groundtruth_at(double x_km, double y_km) const {
    return cell_sum(cells, x_km - jitter_km[0], y_km - jitter_km[1]);
}

GeoRaster Scene::composite() const {
    GeoRaster g = sar;
    g.set(channel::kRain, groundtruth);
    return g;
}

radar::PolarScan Scene::polar_scan(double max_range_km) const {
    radar::PolarScan scan;
    scan.station_id = sar.metadata.at("station_id");
    scan.station = station;
    scan.timestamp = sar.timestamp;
    const auto gates = static_cast<Eigen::Index>(std::ceil(max_range_km * 1000.0 / scan.gate_spacing_m));
    scan.rates.resize(360, gates);
    const double res_km = sar.resolution_m / 1000.0;
    for (Eigen::Index a = 0; a < 360; ++a) {
        for (Eigen::Index r = 0; r < gates; ++r) {
            const double range_km = (static_cast<double>(r) + 0.5) * scan.gate_spacing_m / 1000.0;
            const LatLon p = destination(station, static_cast<double>(a) + 0.5, range_km);
            const auto [u, v] = sar.transform.to_pixel(p);
            scan.rates(a, r) = static_cast<float>(groundtruth_at(u * res_km, v * res_km));
        }
    }
    return scan;
}

SceneParams scene_params(const SceneParams& base, int index) {
    SceneParams p = base;
    Rng rng(base.seed);
    p.seed = rng.fork(static_cast<std::uint64_t>(index) + 1).next();
    // a few stations spread along the coast, 4 degrees apart
    const int station = index % 4;
    p.center = {base.center.lat + 4.0 * station, base.center.lon + 1.0 * station};
    return p;
}

Scene generate_scene(const SceneParams& p) {
    p.validate();
    Rng rng(p.seed);
    Scene s;

    const double res_km = p.resolution_m / 1000.0;
    const double dlat = res_km / kEarthRadiusKm / kDeg;
    const LatLon origin_guess{p.center.lat + 0.5 * static_cast<double>(p.rows) * dlat, p.center.lon};
    const double dlon = dlat / std::cos(origin_guess.lat * kDeg);
    const LatLon origin{origin_guess.lat, p.center.lon - 0.5 * static_cast<double>(p.cols) * dlon};
    s.sar = GeoRaster(p.rows, p.cols, p.resolution_m, GeoTransform::north_up(origin, p.resolution_m));
    s.station = s.sar.transform.at(0.5 * static_cast<double>(p.cols), 0.5 * static_cast<double>(p.rows));

    const double width_km = static_cast<double>(p.cols) * res_km, height_km = static_cast<double>(p.rows) * res_km;
    const int n_cells = p.cells[0] + static_cast<int>(rng.below(static_cast<std::uint64_t>(p.cells[1] - p.cells[0] + 1)));
    for (int i = 0; i < n_cells; ++i) {
        RainCell c;
        c.x_km = rng.uniform(0.0, width_km);
        c.y_km = rng.uniform(0.0, height_km);
        c.amplitude_mmh = rng.uniform(p.amplitude_mmh[0], p.amplitude_mmh[1]);
        c.sigma_km = rng.uniform(p.radius_km[0], p.radius_km[1]);
        s.cells.push_back(c);
    }
    s.jitter_km = {rng.uniform(-p.jitter_km, p.jitter_km), rng.uniform(-p.jitter_km, p.jitter_km)};
    if (p.jitter_km == 0.0) s.jitter_km = {0.0, 0.0};

    s.wind_base = rng.uniform(p.wind_base[0], p.wind_base[1]);
    const double heading = rng.uniform(0.0, 2.0 * M_PI);
    const double wind_dir = rng.uniform(0.0, 360.0);

    struct Blob {
        double x, y, r;
    };
    std::vector<Blob> land;
    if (rng.uniform() < p.land_probability) {
        // a coastline-like disk centred outside one edge
        const double r = rng.uniform(0.2, 0.5) * std::max(width_km, height_km);
        const int edge = static_cast<int>(rng.below(4));
        const double t = rng.uniform(0.0, 1.0);
        const double x = edge == 0 ? -0.5 * r : edge == 1 ? width_km + 0.5 * r : t * width_km;
        const double y = edge == 2 ? -0.5 * r : edge == 3 ? height_km + 0.5 * r : t * height_km;
        land.push_back({x, y, r});
    }

    const auto& co = gmf::Cmod5n::shipped();
    const auto& cross = gmf::IncidenceGmf::shipped();
    const double nesz_lin = std::pow(10.0, p.nesz_db / 10.0);

    FieldF vv(p.rows, p.cols), vh(p.rows, p.cols), mask(p.rows, p.cols), inc(p.rows, p.cols), nesz(p.rows, p.cols),
        wind(p.rows, p.cols);
    s.truth.resize(p.rows, p.cols);
    s.groundtruth.resize(p.rows, p.cols);
    for (Eigen::Index r = 0; r < p.rows; ++r) {
        for (Eigen::Index c = 0; c < p.cols; ++c) {
            const double x = (static_cast<double>(c) + 0.5) * res_km, y = (static_cast<double>(r) + 0.5) * res_km;
            const double theta = p.incidence_deg[0] + (p.incidence_deg[1] - p.incidence_deg[0]) *
                                                          (static_cast<double>(c) + 0.5) / static_cast<double>(p.cols);
            const double along = ((x - 0.5 * width_km) * std::cos(heading) + (y - 0.5 * height_km) * std::sin(heading)) / 100.0;
            const double w = std::max(0.2, s.wind_base + p.wind_gradient * along);
            const double rain = cell_sum(s.cells, x, y);
            s.truth(r, c) = static_cast<float>(rain);
            s.groundtruth(r, c) = static_cast<float>(s.groundtruth_at(x, y));

            bool is_land = p.all_land;
            for (const auto& b : land) is_land = is_land || std::hypot(x - b.x, y - b.y) < b.r;

            const double roughening = std::tanh(rain / p.rain_scale_mmh);
            const double saturation = 1.0 / (1.0 + std::pow(w / p.vv_saturation_wind, 2.0));
            const double ref_vv = co(gmf::kReferenceWindSpeed, gmf::kReferenceDirection, theta);
            const double ref_vh = cross(theta);
            double s_vv = co(w, wind_dir, theta) / ref_vv + p.coupling_vv * roughening * saturation;
            double s_vh = std::pow(w / gmf::kReferenceWindSpeed, 1.5) + p.coupling_vh * roughening + nesz_lin / ref_vh;
            if (is_land) {
                s_vv = 1.0;
                s_vh = 1.0;
            }
            vv(r, c) = static_cast<float>(std::max(0.0, s_vv * (1.0 + p.speckle * rng.normal())));
            vh(r, c) = static_cast<float>(std::max(0.0, s_vh * (1.0 + p.speckle * rng.normal())));
            mask(r, c) = is_land ? 0.0f : 1.0f;
            inc(r, c) = static_cast<float>(theta);
            nesz(r, c) = static_cast<float>(p.nesz_db);
            wind(r, c) = static_cast<float>(w);
        }
    }
    // forecast prior: smooth, so one error per scene
    const double prior_error = p.prior_noise * rng.normal();
    wind = (wind + static_cast<float>(prior_error)).max(0.0f);

    s.sar.set(channel::kSsrVv, std::move(vv));
    s.sar.set(channel::kSsrVh, std::move(vh));
    s.sar.set(channel::kLandMask, std::move(mask));
    s.sar.set(channel::kIncidence, std::move(inc));
    s.sar.set(channel::kNesz, std::move(nesz));
    s.sar.set(channel::kWind, std::move(wind));
    s.sar.timestamp = Timestamp{std::chrono::seconds{1'600'000'000 + static_cast<long>(p.seed % 100'000'000)}};
    char lat[40], lon[40];
    std::snprintf(lat, sizeof lat, "%.17g", s.station.lat);
    std::snprintf(lon, sizeof lon, "%.17g", s.station.lon);
    s.sar.metadata["station_lat"] = lat;
    s.sar.metadata["station_lon"] = lon;
    s.sar.metadata["station_id"] = "SYN";
    s.sar.metadata["processing_version"] = "synthetic";
    return s;
}

dataset::Manifest synth_dataset(const SceneParams& params, const SynthOptions& options, const fs::path& out_dir) {
    params.validate();
    if (options.n_scenes < 1) throw ConfigError("n_scenes must be >= 1");
    static const char* versions[] = {"002.72", "003.10", "003.40"};
    const fs::path sar_dir = out_dir / "sar", radar_dir = out_dir / "radar", coll_dir = out_dir / "collocated";
    fs::create_directories(options.via_polar ? sar_dir : coll_dir);
    if (options.via_polar) fs::create_directories(radar_dir);

    std::vector<fs::path> rasters(static_cast<std::size_t>(options.n_scenes));
    parallel_for(rasters.size(), options.workers, [&](std::size_t i) {
        const SceneParams sp = scene_params(params, static_cast<int>(i));
        Scene scene = generate_scene(sp);
        char name[32];
        std::snprintf(name, sizeof name, "S%04zu", i);
        scene.sar.metadata["iw_id"] = name;
        scene.sar.metadata["station_id"] = "SYN" + std::to_string(i % 4);
        scene.sar.metadata["processing_version"] = versions[i % 3];
        const std::string file = std::string(name) + ".rsr";
        if (options.via_polar) {
            GeoRaster sar = scene.sar;
            sar.metadata.erase("station_lat");
            sar.metadata.erase("station_lon");
            sar.write(sar_dir / file);
            scene.polar_scan(options.build.extract.max_km).write(radar_dir / file);
        } else {
            scene.composite().write(coll_dir / file, "composite");
        }
        rasters[i] = coll_dir / file;
    });
    if (options.via_polar) {
        radar::CollocateOptions co;
        co.max_km = options.build.extract.max_km;
        const auto res = radar::collocate(sar_dir, radar_dir, coll_dir, co);
        rasters = res.outputs;
    }
    dataset::BuildOptions build = options.build;
    if (options.n_scenes < 3) build.require_partition = false;
    auto manifest = dataset::build_manifest(rasters, out_dir, build);
    manifest.config["synthetic"] = params.to_json();
    manifest.config["n_scenes"] = options.n_scenes;
    manifest.write(out_dir / "manifest.json");
    return manifest;
}

}  // namespace rainsar::synthetic
