#include "rainsar/radar_ingest.hpp"

#include <cmath>
#include <limits>

#include "rainsar/container.hpp"
#include "rainsar/error.hpp"

namespace rainsar::radar {

void PolarScan::validate() const {
    if (azimuth_bins() <= 0 || range_gates() <= 0) throw FormatError("polar scan has no gates");
    if (!(gate_spacing_m > 0.0)) throw FormatError("gate spacing must be positive");
    if (!rates.allFinite()) throw FormatError("polar scan contains non-finite rates");
}

void PolarScan::write(const std::filesystem::path& path) const {
    validate();
    Container c;
    c.kind = "polarscan";
    c.meta["station"] = {{"id", station_id}, {"lat", station.lat}, {"lon", station.lon}};
    c.meta["elevation_deg"] = elevation_deg;
    c.meta["timestamp"] = format_timestamp(timestamp);
    c.meta["azimuth_bins"] = azimuth_bins();
    c.meta["range_gates"] = range_gates();
    c.meta["gate_spacing_m"] = gate_spacing_m;
    c.add("rates", std::vector<float>(rates.data(), rates.data() + rates.size()));
    c.write(path);
}

PolarScan PolarScan::read(const std::filesystem::path& path) {
    const Container c = Container::read(path);
    if (c.kind != "polarscan") throw FormatError(path.string() + ": expected a polarscan container");
    PolarScan s;
    const auto& st = c.meta.at("station");
    s.station_id = st.value("id", std::string{});
    s.station = {st.at("lat").get<double>(), st.at("lon").get<double>()};
    s.elevation_deg = c.meta.at("elevation_deg").get<double>();
    s.timestamp = parse_timestamp(c.meta.at("timestamp").get<std::string>());
    s.gate_spacing_m = c.meta.value("gate_spacing_m", 250.0);
    const auto na = c.meta.at("azimuth_bins").get<Eigen::Index>();
    const auto nr = c.meta.at("range_gates").get<Eigen::Index>();
    const auto& v = c.f32("rates");
    if (static_cast<Eigen::Index>(v.size()) != na * nr) throw FormatError(path.string() + ": rate array size");
    s.rates = Eigen::Map<const FieldF>(v.data(), na, nr);
    s.validate();
    return s;
}

FieldF ProjectedRain::with_sentinel() const { return valid.select(rate, FieldF::Constant(rate.rows(), rate.cols(), kMissing)); }

double ProjectedRain::missing_fraction() const {
    if (valid.size() == 0) return 0.0;
    return 1.0 - static_cast<double>(valid.count()) / static_cast<double>(valid.size());
}

std::size_t temporal_match_index(Timestamp sar_time, std::span<const Timestamp> times, double window_s) {
    if (times.empty()) throw NoScanInWindow("no scans available");
    std::size_t best = 0;
    auto best_gap = std::numeric_limits<long long>::max();
    for (std::size_t i = 0; i < times.size(); ++i) {
        const long long gap = std::llabs((times[i] - sar_time).count());
        // strict '<' keeps the earlier scan on ties (inputs sorted by time)
        if (gap < best_gap || (gap == best_gap && times[i] < times[best])) {
            best = i;
            best_gap = gap;
        }
    }
    if (static_cast<double>(best_gap) > window_s)
        throw NoScanInWindow("closest scan is " + std::to_string(best_gap) + " s away (window " +
                             std::to_string(window_s) + " s)");
    return best;
}

const PolarScan& temporal_match(Timestamp sar_time, std::span<const PolarScan> scans, double window_s) {
    std::vector<Timestamp> times;
    times.reserve(scans.size());
    for (const auto& s : scans) times.push_back(s.timestamp);
    return scans[temporal_match_index(sar_time, times, window_s)];
}

namespace {

struct Corner {
    Eigen::Index row, col;
    double weight;
};

// Interpolates four weighted gates; missing if any gate with non-zero weight is missing.
bool blend(const FieldF& src, const std::array<Corner, 4>& corners, float& out) {
    double acc = 0.0;
    for (const auto& c : corners) {
        if (c.weight == 0.0) continue;
        const float v = src(c.row, c.col);
        if (v < 0.0f || !std::isfinite(v)) return false;
        acc += c.weight * static_cast<double>(v);
    }
    out = static_cast<float>(acc);
    return true;
}

// Splits a centre-registered coordinate into (lower index, fraction), clamped to [0, n-1].
std::pair<Eigen::Index, double> clamp_axis(double f, Eigen::Index n) {
    if (f <= 0.0) return {0, 0.0};
    if (f >= static_cast<double>(n - 1)) return {n - 1, 0.0};
    const double fl = std::floor(f);
    return {static_cast<Eigen::Index>(fl), f - fl};
}

}  // namespace

ProjectedRain project_polar(const PolarScan& scan, const GeoRaster& target) {
    scan.validate();
    if (target.transform.singular()) throw GeometryError("target geotransform is singular");
    const Eigen::Index na = scan.azimuth_bins(), nr = scan.range_gates();
    const double width = scan.azimuth_width_deg();
    const double max_range = scan.max_range_m();

    ProjectedRain out{FieldF::Zero(target.rows, target.cols), Mask::Constant(target.rows, target.cols, false)};
    for (Eigen::Index r = 0; r < target.rows; ++r) {
        for (Eigen::Index c = 0; c < target.cols; ++c) {
            const LatLon p = target.transform.pixel_center(r, c);
            const double range_m = great_circle_km(scan.station, p) * 1000.0;
            if (range_m > max_range) continue;
            const double az = bearing_deg(scan.station, p);

            const double fa = az / width - 0.5;
            const double fa_floor = std::floor(fa);
            const double ta = fa - fa_floor;
            auto a0 = static_cast<Eigen::Index>(fa_floor) % na;
            if (a0 < 0) a0 += na;
            const Eigen::Index a1 = (a0 + 1) % na;

            const auto [g0, tr] = clamp_axis(range_m / scan.gate_spacing_m - 0.5, nr);
            const Eigen::Index g1 = std::min(g0 + 1, nr - 1);

            const std::array<Corner, 4> corners{Corner{a0, g0, (1 - ta) * (1 - tr)}, Corner{a0, g1, (1 - ta) * tr},
                                                Corner{a1, g0, ta * (1 - tr)}, Corner{a1, g1, ta * tr}};
            float v;
            if (blend(scan.rates, corners, v)) {
                out.rate(r, c) = v;
                out.valid(r, c) = true;
            }
        }
    }
    return out;
}

ProjectedRain project_composite(const CompositeScan& scan, const GeoRaster& target) {
    if (target.transform.singular()) throw GeometryError("target geotransform is singular");
    if (scan.transform.singular()) throw GeometryError("composite geotransform is singular");
    const FieldF& src = scan.channel(channel::kRain);

    ProjectedRain out{FieldF::Zero(target.rows, target.cols), Mask::Constant(target.rows, target.cols, false)};
    for (Eigen::Index r = 0; r < target.rows; ++r) {
        for (Eigen::Index c = 0; c < target.cols; ++c) {
            const auto [u, v] = scan.transform.to_pixel(target.transform.pixel_center(r, c));
            if (u < 0.0 || v < 0.0 || u > static_cast<double>(scan.cols) || v > static_cast<double>(scan.rows))
                continue;
            const auto [c0, tx] = clamp_axis(u - 0.5, scan.cols);
            const auto [r0, ty] = clamp_axis(v - 0.5, scan.rows);
            const Eigen::Index c1 = std::min(c0 + 1, scan.cols - 1), r1 = std::min(r0 + 1, scan.rows - 1);
            const std::array<Corner, 4> corners{Corner{r0, c0, (1 - ty) * (1 - tx)}, Corner{r0, c1, (1 - ty) * tx},
                                                Corner{r1, c0, ty * (1 - tx)}, Corner{r1, c1, ty * tx}};
            float val;
            if (blend(src, corners, val)) {
                out.rate(r, c) = val;
                out.valid(r, c) = true;
            }
        }
    }
    return out;
}

Mask range_mask(const GeoRaster& target, const LatLon& station, double max_km) {
    Mask m(target.rows, target.cols);
    for (Eigen::Index r = 0; r < target.rows; ++r)
        for (Eigen::Index c = 0; c < target.cols; ++c)
            m(r, c) = great_circle_km(target.transform.pixel_center(r, c), station) <= max_km;
    return m;
}

}  // namespace rainsar::radar
