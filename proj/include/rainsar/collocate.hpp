#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace rainsar::radar {

struct CollocateOptions {
    double window_s = 900.0;
    /// Pixels further than this from the station get the missing sentinel.
    double max_km = 175.0;
};

struct CollocateResult {
    std::vector<std::filesystem::path> outputs;
    std::vector<std::pair<std::filesystem::path, std::string>> skipped;  ///< input and reason
};

/// Pairs every SAR raster in `sar_dir` with the polar scan of its station
/// (metadata "station_id"; any station when absent) closest in time, projects
/// the scan onto the raster grid and writes a composite container with a
/// "rain" channel to `out_dir`. Unmatched rasters are listed in
/// out_dir/skipped.csv.
CollocateResult collocate(const std::filesystem::path& sar_dir, const std::filesystem::path& radar_dir,
                          const std::filesystem::path& out_dir, const CollocateOptions& options = {});

/// Regular files of a directory in lexicographic order.
std::vector<std::filesystem::path> list_files(const std::filesystem::path& dir);

}  // namespace rainsar::radar
