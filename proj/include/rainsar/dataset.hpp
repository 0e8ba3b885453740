#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "rainsar/raster.hpp"
#include "rainsar/rng.hpp"

namespace rainsar::dataset {

inline constexpr int kWindClasses = 5;
inline constexpr int kClassCount = 10;
inline constexpr std::array<double, 4> kWindThresholds{2.0, 6.0, 10.0, 15.0};
inline constexpr double kRainRateThreshold = 3.0;  ///< mm/h
inline constexpr double kRainAreaFraction = 0.05;

enum class Subset { Train, Validation, Test };
std::string to_string(Subset s);
Subset subset_from_string(const std::string& s);

struct Label {
    bool rain_flag = false;
    int wind_class = 0;
    int class_id = 0;
};

inline int class_id(bool rain_flag, int wind_class) { return wind_class + kWindClasses * (rain_flag ? 1 : 0); }
inline Label decompose(int class_id) { return {class_id >= kWindClasses, class_id % kWindClasses, class_id}; }

/// Half-open wind intervals [0,2), [2,6), [6,10), [10,15), [15,inf).
int wind_class(double wind_speed);

/// Fraction of ocean pixels with rate strictly above `threshold`; missing
/// (negative) rates count as no rain. Returns 0 when there is no ocean.
double rain_area_fraction(const FieldF& rain, const FieldF& ocean, double threshold = kRainRateThreshold);

Label label_patch(const FieldF& rain, const FieldF& ocean, double wind_max);

struct PatchRecord {
    // provenance
    std::string iw_id;
    std::string source;  ///< raster container path, relative to the manifest
    std::string station_id;
    std::string processing_version;
    Eigen::Index row0 = 0;
    Eigen::Index col0 = 0;
    Eigen::Index size_px = 0;
    LatLon center;
    double station_distance_km = 0.0;

    // scalar inputs (patch means) and the labelling wind (patch maximum)
    double incidence = 0.0;
    double nesz = 0.0;
    double wind_prior = 0.0;
    double wind_max = 0.0;
    double missing_fraction = 0.0;

    bool rain_flag = false;
    int wind_class = 0;
    int class_id = 0;

    // pixels; empty when the record was read from a manifest without loading
    FieldF ssr_vv, ssr_vh, land_mask, rain;

    bool has_pixels() const { return ssr_vv.size() > 0; }
    nlohmann::json to_json() const;
    static PatchRecord from_json(const nlohmann::json& j);
};

struct ExtractOptions {
    double size_km = 25.0;
    double stride_km = 12.5;
    double max_km = 175.0;
    bool filter_range = true;
};

/// Number of patch origins along an axis of `length_km`.
Eigen::Index patch_count(double length_km, double size_km, double stride_km);

/// Overlapping grid-aligned patches whose centre lies within `max_km` of the
/// station. Patches without any ocean pixel are dropped.
std::vector<PatchRecord> extract_patches(const GeoRaster& raster, const LatLon& station,
                                         const ExtractOptions& options = {}, const std::string& source = {});

struct CapOptions {
    double bin_width = 0.5;
    double cap_fraction = 0.2;
    std::uint64_t seed = 0;
};

/// Wind histogram bin of a record (on wind_max).
long wind_bin(const PatchRecord& r, double bin_width);

/// Per wind bin, randomly keeps at most max(1, floor(cap_fraction * largest
/// bin count)) rainless records. Rain records are always kept; order is preserved.
std::vector<PatchRecord> cap_rainless(std::vector<PatchRecord> records, const CapOptions& options);

using ClassHistogram = std::array<double, kClassCount>;

struct PartitionOptions {
    std::array<double, 3> fractions{0.7, 0.1, 0.2};
    double fraction_weight = 2.0;
    int random_splits = 100;
    int iterations = 20000;
    int restarts = 8;
    std::uint64_t seed = 0;
};

/// Class histograms per IW, the unit of assignment.
struct GroupTable {
    std::vector<std::string> ids;
    std::vector<ClassHistogram> histograms;

    static GroupTable from_records(const std::vector<PatchRecord>& records);
};

/// Sum over subsets of the L1 distance between the subset and global class
/// distributions, plus fraction_weight * sum of |subset share - target|.
/// Infinite when a subset is empty.
double partition_objective(const GroupTable& groups, const std::vector<int>& assignment,
                           const std::array<double, 3>& fractions, double fraction_weight);

/// IW shuffle cut at the cumulative target fractions.
std::vector<int> random_split(const GroupTable& groups, const std::array<double, 3>& fractions, Rng& rng);

struct PartitionResult {
    std::vector<int> assignment;  ///< subset index per group
    double objective = 0.0;
    double best_random_objective = 0.0;
};

/// Seeded hill climbing (single moves and swaps) from the best random split.
PartitionResult partition(const GroupTable& groups, const PartitionOptions& options);

struct Manifest {
    std::vector<PatchRecord> records;
    std::map<std::string, Subset> split;
    std::vector<std::size_t> histogram;  ///< wind-bin counts after capping
    nlohmann::json config = nlohmann::json::object();
    std::filesystem::path base_dir;      ///< resolves record sources

    std::vector<const PatchRecord*> subset(Subset s) const;
    /// Throws if an IW is unassigned.
    void check_split() const;

    void write(const std::filesystem::path& path) const;
    static Manifest read(const std::filesystem::path& path);
    /// Reads the pixel data of every record from its source raster.
    void load_pixels();
};

/// Copies a patch's pixels out of a raster.
void fill_pixels(PatchRecord& record, const GeoRaster& raster);

struct BuildOptions {
    ExtractOptions extract;
    CapOptions cap;
    PartitionOptions partition;
    /// When false, fewer than three IWs all go to the training subset
    /// instead of raising InsufficientGroups.
    bool require_partition = true;

    nlohmann::json to_json() const;
    static BuildOptions from_json(const nlohmann::json& j);
};

/// extract -> label -> cap -> partition over collocated raster containers.
Manifest build_manifest(const std::vector<std::filesystem::path>& rasters, const std::filesystem::path& base_dir,
                        const BuildOptions& options);

}  // namespace rainsar::dataset
