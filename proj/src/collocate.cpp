#include "rainsar/collocate.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "rainsar/container.hpp"
#include "rainsar/error.hpp"
#include "rainsar/radar_ingest.hpp"

namespace rainsar::radar {

namespace fs = std::filesystem;

std::vector<fs::path> list_files(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw InvalidArgument(dir.string() + " is not a directory");
    std::vector<fs::path> out;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file()) out.push_back(e.path());
    std::sort(out.begin(), out.end());
    return out;
}

CollocateResult collocate(const fs::path& sar_dir, const fs::path& radar_dir, const fs::path& out_dir,
                          const CollocateOptions& options) {
    const auto sar_files = list_files(sar_dir);
    std::vector<PolarScan> scans;
    for (const auto& p : list_files(radar_dir))
        if (Container::read_meta(p).kind == "polarscan") scans.push_back(PolarScan::read(p));

    fs::create_directories(out_dir);
    CollocateResult result;
    for (const auto& path : sar_files) {
        GeoRaster sar = GeoRaster::read(path);
        const auto it = sar.metadata.find("station_id");
        std::vector<const PolarScan*> candidates;
        std::vector<Timestamp> times;
        for (const auto& s : scans)
            if (it == sar.metadata.end() || s.station_id == it->second) {
                candidates.push_back(&s);
                times.push_back(s.timestamp);
            }
        try {
            if (candidates.empty()) throw NoScanInWindow("no scan for station of " + path.filename().string());
            const PolarScan& scan = *candidates[temporal_match_index(sar.timestamp, times, options.window_s)];
            const ProjectedRain rain = project_polar(scan, sar);
            FieldF rate = rain.with_sentinel();
            const Mask in_range = range_mask(sar, scan.station, options.max_km);
            rate = in_range.select(rate, FieldF::Constant(rate.rows(), rate.cols(), kMissing));
            sar.set(channel::kRain, std::move(rate));
            std::ostringstream lat, lon;
            lat << std::setprecision(17) << scan.station.lat;
            lon << std::setprecision(17) << scan.station.lon;
            sar.metadata["station_id"] = scan.station_id;
            sar.metadata["station_lat"] = lat.str();
            sar.metadata["station_lon"] = lon.str();
            sar.metadata["radar_timestamp"] = format_timestamp(scan.timestamp);
            const fs::path out = out_dir / path.filename();
            sar.write(out, "composite");
            result.outputs.push_back(out);
        } catch (const NoScanInWindow& e) {
            result.skipped.emplace_back(path, e.what());
        }
    }
    std::ofstream log(out_dir / "skipped.csv");
    log << "input,reason\n";
    for (const auto& [p, why] : result.skipped) log << p.filename().string() << ",\"" << why << "\"\n";
    return result;
}

}  // namespace rainsar::radar
