#include "rainsar/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>

#include "rainsar/error.hpp"
#include "rainsar/rng.hpp"

namespace rainsar::dataset {

std::string to_string(Subset s) {
    switch (s) {
        case Subset::Train: return "train";
        case Subset::Validation: return "val";
        case Subset::Test: return "test";
    }
    return "?";
}

Subset subset_from_string(const std::string& s) {
    if (s == "train") return Subset::Train;
    if (s == "val") return Subset::Validation;
    if (s == "test") return Subset::Test;
    throw FormatError("unknown subset '" + s + "'");
}

int wind_class(double wind_speed) {
    int k = 0;
    while (k < 4 && wind_speed >= kWindThresholds[k]) ++k;
    return k;
}

double rain_area_fraction(const FieldF& rain, const FieldF& ocean, double threshold) {
    if (rain.rows() != ocean.rows() || rain.cols() != ocean.cols()) throw ShapeMismatch("rain and mask differ");
    const auto ocean_px = (ocean > 0.5f).count();
    if (ocean_px == 0) return 0.0;
    const auto wet = ((ocean > 0.5f) && (rain > static_cast<float>(threshold))).count();
    return static_cast<double>(wet) / static_cast<double>(ocean_px);
}

Label label_patch(const FieldF& rain, const FieldF& ocean, double wind_max) {
    if (rain.size() == 0) throw InvalidArgument("empty rain raster");
    const bool rain_flag = rain_area_fraction(rain, ocean) > kRainAreaFraction;
    const int wc = wind_class(wind_max);
    return {rain_flag, wc, class_id(rain_flag, wc)};
}

nlohmann::json PatchRecord::to_json() const {
    return {{"iw_id", iw_id},
            {"source", source},
            {"station_id", station_id},
            {"processing_version", processing_version},
            {"row0", row0},
            {"col0", col0},
            {"size_px", size_px},
            {"center", {center.lat, center.lon}},
            {"station_distance_km", station_distance_km},
            {"incidence", incidence},
            {"nesz", nesz},
            {"wind_prior", wind_prior},
            {"wind_max", wind_max},
            {"missing_fraction", missing_fraction},
            {"rain_flag", rain_flag},
            {"wind_class", wind_class},
            {"class_id", class_id}};
}

PatchRecord PatchRecord::from_json(const nlohmann::json& j) {
    PatchRecord r;
    r.iw_id = j.at("iw_id").get<std::string>();
    r.source = j.value("source", std::string{});
    r.station_id = j.value("station_id", std::string{});
    r.processing_version = j.value("processing_version", std::string{});
    r.row0 = j.at("row0").get<Eigen::Index>();
    r.col0 = j.at("col0").get<Eigen::Index>();
    r.size_px = j.at("size_px").get<Eigen::Index>();
    r.center = {j.at("center")[0].get<double>(), j.at("center")[1].get<double>()};
    r.station_distance_km = j.at("station_distance_km").get<double>();
    r.incidence = j.at("incidence").get<double>();
    r.nesz = j.at("nesz").get<double>();
    r.wind_prior = j.at("wind_prior").get<double>();
    r.wind_max = j.at("wind_max").get<double>();
    r.missing_fraction = j.value("missing_fraction", 0.0);
    r.rain_flag = j.at("rain_flag").get<bool>();
    r.wind_class = j.at("wind_class").get<int>();
    r.class_id = j.at("class_id").get<int>();
    if (r.class_id != dataset::class_id(r.rain_flag, r.wind_class) || r.class_id < 0 || r.class_id >= kClassCount)
        throw FormatError("inconsistent class_id for record of " + r.iw_id);
    return r;
}

Eigen::Index patch_count(double length_km, double size_km, double stride_km) {
    if (length_km < size_km) return 0;
    return static_cast<Eigen::Index>(std::floor((length_km - size_km) / stride_km + 1e-9)) + 1;
}

void fill_pixels(PatchRecord& rec, const GeoRaster& raster) {
    const auto n = rec.size_px;
    auto block = [&](const std::string& name) -> FieldF {
        return raster.channel(name).block(rec.row0, rec.col0, n, n);
    };
    rec.ssr_vv = block(channel::kSsrVv);
    rec.ssr_vh = block(channel::kSsrVh);
    rec.land_mask = block(channel::kLandMask);
    rec.rain = block(channel::kRain);
}

std::vector<PatchRecord> extract_patches(const GeoRaster& raster, const LatLon& station, const ExtractOptions& opt,
                                         const std::string& source) {
    raster.validate();
    const double res_km = raster.resolution_m / 1000.0;
    const double height_km = static_cast<double>(raster.rows) * res_km;
    const double width_km = static_cast<double>(raster.cols) * res_km;
    if (height_km < opt.size_km || width_km < opt.size_km) throw RasterTooSmall("raster is smaller than one patch");

    const auto size_px = static_cast<Eigen::Index>(std::lround(opt.size_km / res_km));
    const double stride_px = opt.stride_km / res_km;
    const Eigen::Index n_rows = patch_count(height_km, opt.size_km, opt.stride_km);
    const Eigen::Index n_cols = patch_count(width_km, opt.size_km, opt.stride_km);

    const FieldF& ocean = raster.channel(channel::kLandMask);
    const FieldF& rain = raster.channel(channel::kRain);
    const FieldF& inc = raster.channel(channel::kIncidence);
    const FieldF& nesz = raster.channel(channel::kNesz);
    const FieldF& wind = raster.channel(channel::kWind);

    auto meta = [&](const std::string& key, const std::string& fallback) {
        auto it = raster.metadata.find(key);
        return it == raster.metadata.end() ? fallback : it->second;
    };

    std::vector<PatchRecord> out;
    for (Eigen::Index i = 0; i < n_rows; ++i) {
        for (Eigen::Index j = 0; j < n_cols; ++j) {
            PatchRecord rec;
            rec.row0 = std::min<Eigen::Index>(std::lround(static_cast<double>(i) * stride_px), raster.rows - size_px);
            rec.col0 = std::min<Eigen::Index>(std::lround(static_cast<double>(j) * stride_px), raster.cols - size_px);
            rec.size_px = size_px;
            const double half = static_cast<double>(size_px) / 2.0;
            rec.center = raster.transform.at(static_cast<double>(rec.col0) + half, static_cast<double>(rec.row0) + half);
            rec.station_distance_km = great_circle_km(rec.center, station);
            if (opt.filter_range && rec.station_distance_km > opt.max_km) continue;

            const auto ob = ocean.block(rec.row0, rec.col0, size_px, size_px);
            if ((ob > 0.5f).count() == 0) continue;

            fill_pixels(rec, raster);
            const auto rb = rain.block(rec.row0, rec.col0, size_px, size_px);
            rec.missing_fraction = static_cast<double>((rb < 0.0f).count()) / static_cast<double>(rb.size());
            rec.incidence = inc.block(rec.row0, rec.col0, size_px, size_px).cast<double>().mean();
            rec.nesz = nesz.block(rec.row0, rec.col0, size_px, size_px).cast<double>().mean();
            const auto wb = wind.block(rec.row0, rec.col0, size_px, size_px).cast<double>();
            rec.wind_prior = wb.mean();
            rec.wind_max = wb.maxCoeff();

            const Label l = label_patch(rec.rain, rec.land_mask, rec.wind_max);
            rec.rain_flag = l.rain_flag;
            rec.wind_class = l.wind_class;
            rec.class_id = l.class_id;

            rec.iw_id = meta("iw_id", source);
            rec.source = source;
            rec.station_id = meta("station_id", "");
            rec.processing_version = meta("processing_version", "");
            out.push_back(std::move(rec));
        }
    }
    return out;
}

long wind_bin(const PatchRecord& r, double bin_width) { return static_cast<long>(std::floor(r.wind_max / bin_width)); }

std::vector<PatchRecord> cap_rainless(std::vector<PatchRecord> records, const CapOptions& opt) {
    if (records.empty()) return records;
    std::map<long, std::size_t> counts;
    std::map<long, std::vector<std::size_t>> rainless;
    for (std::size_t i = 0; i < records.size(); ++i) {
        const long b = wind_bin(records[i], opt.bin_width);
        ++counts[b];
        if (!records[i].rain_flag) rainless[b].push_back(i);
    }
    std::size_t largest = 0;
    for (const auto& [b, n] : counts) largest = std::max(largest, n);
    const auto cap = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(opt.cap_fraction * double(largest) + 1e-9)));

    Rng rng(opt.seed);
    std::vector<bool> keep(records.size(), true);
    for (auto& [b, idx] : rainless) {
        if (idx.size() <= cap) continue;
        rng.shuffle(idx.begin(), idx.end());
        for (std::size_t k = cap; k < idx.size(); ++k) keep[idx[k]] = false;
    }
    std::vector<PatchRecord> out;
    out.reserve(records.size());
    for (std::size_t i = 0; i < records.size(); ++i)
        if (keep[i]) out.push_back(std::move(records[i]));
    return out;
}

GroupTable GroupTable::from_records(const std::vector<PatchRecord>& records) {
    GroupTable g;
    std::map<std::string, std::size_t> index;
    for (const auto& r : records) {
        auto [it, inserted] = index.try_emplace(r.iw_id, g.ids.size());
        if (inserted) {
            g.ids.push_back(r.iw_id);
            g.histograms.push_back(ClassHistogram{});
        }
        g.histograms[it->second][r.class_id] += 1.0;
    }
    return g;
}

namespace {

using SubsetCounts = std::array<ClassHistogram, 3>;

double objective_from_counts(const SubsetCounts& counts, const ClassHistogram& global, double total,
                             const std::array<double, 3>& fractions, double fraction_weight) {
    double obj = 0.0;
    for (int s = 0; s < 3; ++s) {
        const double n = std::accumulate(counts[s].begin(), counts[s].end(), 0.0);
        if (n <= 0.0) return std::numeric_limits<double>::infinity();
        for (int k = 0; k < kClassCount; ++k) obj += std::abs(counts[s][k] / n - global[k] / total);
        obj += fraction_weight * std::abs(n / total - fractions[s]);
    }
    return obj;
}

SubsetCounts tally(const GroupTable& g, const std::vector<int>& assignment) {
    SubsetCounts c{};
    for (std::size_t i = 0; i < assignment.size(); ++i)
        for (int k = 0; k < kClassCount; ++k) c[assignment[i]][k] += g.histograms[i][k];
    return c;
}

ClassHistogram global_histogram(const GroupTable& g, double& total) {
    ClassHistogram h{};
    total = 0.0;
    for (const auto& gh : g.histograms)
        for (int k = 0; k < kClassCount; ++k) {
            h[k] += gh[k];
            total += gh[k];
        }
    return h;
}

void shift(SubsetCounts& c, const ClassHistogram& h, int from, int to) {
    for (int k = 0; k < kClassCount; ++k) {
        c[from][k] -= h[k];
        c[to][k] += h[k];
    }
}

}  // namespace

double partition_objective(const GroupTable& groups, const std::vector<int>& assignment,
                           const std::array<double, 3>& fractions, double fraction_weight) {
    double total;
    const ClassHistogram global = global_histogram(groups, total);
    return objective_from_counts(tally(groups, assignment), global, total, fractions, fraction_weight);
}

std::vector<int> random_split(const GroupTable& groups, const std::array<double, 3>& fractions, Rng& rng) {
    const std::size_t n = groups.ids.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order.begin(), order.end());
    double total;
    global_histogram(groups, total);
    std::vector<int> assignment(n, 2);
    double cumulative = 0.0;
    for (std::size_t idx : order) {
        const double size = std::accumulate(groups.histograms[idx].begin(), groups.histograms[idx].end(), 0.0);
        const double mid = (cumulative + size / 2.0) / total;
        assignment[idx] = mid < fractions[0] ? 0 : (mid < fractions[0] + fractions[1] ? 1 : 2);
        cumulative += size;
    }
    return assignment;
}

PartitionResult partition(const GroupTable& groups, const PartitionOptions& opt) {
    const std::size_t n = groups.ids.size();
    if (n < 3) throw InsufficientGroups("need at least 3 IW groups, got " + std::to_string(n));
    double total;
    const ClassHistogram global = global_histogram(groups, total);
    auto score = [&](const SubsetCounts& c) { return objective_from_counts(c, global, total, opt.fractions, opt.fraction_weight); };

    Rng rng(opt.seed);
    PartitionResult best;
    best.objective = std::numeric_limits<double>::infinity();
    for (int i = 0; i < std::max(1, opt.random_splits); ++i) {
        auto a = random_split(groups, opt.fractions, rng);
        const double o = score(tally(groups, a));
        if (o < best.objective) {
            best.objective = o;
            best.assignment = std::move(a);
        }
    }
    best.best_random_objective = best.objective;
    if (!std::isfinite(best.objective)) {
        // every random cut left a subset empty; seed with a round-robin assignment
        best.assignment.assign(n, 0);
        for (std::size_t i = 0; i < n; ++i) best.assignment[i] = static_cast<int>(i % 3);
        best.objective = score(tally(groups, best.assignment));
    }

    for (int restart = 0; restart < std::max(1, opt.restarts); ++restart) {
        std::vector<int> a = restart == 0 ? best.assignment : random_split(groups, opt.fractions, rng);
        SubsetCounts counts = tally(groups, a);
        double current = score(counts);
        for (int it = 0; it < opt.iterations; ++it) {
            const auto i = static_cast<std::size_t>(rng.below(n));
            if (rng.below(2) == 0) {
                const int to = static_cast<int>((a[i] + 1 + rng.below(2)) % 3);
                const int from = a[i];
                shift(counts, groups.histograms[i], from, to);
                const double o = score(counts);
                if (o <= current) {
                    a[i] = to;
                    current = o;
                } else {
                    shift(counts, groups.histograms[i], to, from);
                }
            } else {
                const auto j = static_cast<std::size_t>(rng.below(n));
                if (a[i] == a[j]) continue;
                const int si = a[i], sj = a[j];
                shift(counts, groups.histograms[i], si, sj);
                shift(counts, groups.histograms[j], sj, si);
                const double o = score(counts);
                if (o <= current) {
                    std::swap(a[i], a[j]);
                    current = o;
                } else {
                    shift(counts, groups.histograms[i], sj, si);
                    shift(counts, groups.histograms[j], si, sj);
                }
            }
        }
        // recompute from scratch to drop accumulated rounding
        current = score(tally(groups, a));
        if (current < best.objective) {
            best.objective = current;
            best.assignment = a;
        }
    }
    return best;
}

std::vector<const PatchRecord*> Manifest::subset(Subset s) const {
    std::vector<const PatchRecord*> out;
    for (const auto& r : records) {
        auto it = split.find(r.iw_id);
        if (it != split.end() && it->second == s) out.push_back(&r);
    }
    return out;
}

void Manifest::check_split() const {
    for (const auto& r : records)
        if (!split.count(r.iw_id)) throw FormatError("record of IW " + r.iw_id + " has no subset");
}

void Manifest::write(const std::filesystem::path& path) const {
    nlohmann::json j;
    j["format"] = "rainsar-manifest";
    j["version"] = 1;
    j["config"] = config;
    nlohmann::json s = nlohmann::json::object();
    for (const auto& [id, sub] : split) s[id] = to_string(sub);
    j["split"] = s;
    j["histogram"] = histogram;
    nlohmann::json recs = nlohmann::json::array();
    for (const auto& r : records) recs.push_back(r.to_json());
    j["records"] = recs;
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw FormatError("cannot write " + path.string());
    out << j.dump(1) << '\n';
}

Manifest Manifest::read(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open manifest " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
    Manifest m;
    m.base_dir = path.parent_path();
    m.config = j.value("config", nlohmann::json::object());
    for (auto& [id, sub] : j.at("split").items()) m.split[id] = subset_from_string(sub.get<std::string>());
    m.histogram = j.value("histogram", std::vector<std::size_t>{});
    for (const auto& r : j.at("records")) m.records.push_back(PatchRecord::from_json(r));
    m.check_split();
    return m;
}

void Manifest::load_pixels() {
    std::map<std::string, std::vector<PatchRecord*>> by_source;
    for (auto& r : records) by_source[r.source].push_back(&r);
    for (auto& [source, recs] : by_source) {
        const GeoRaster raster = GeoRaster::read(base_dir / source);
        for (auto* r : recs) fill_pixels(*r, raster);
    }
}

Manifest build_manifest(const std::vector<std::filesystem::path>& rasters, const std::filesystem::path& base_dir,
                        const BuildOptions& options) {
    std::vector<PatchRecord> all;
    for (const auto& path : rasters) {
        const GeoRaster raster = GeoRaster::read(path);
        auto get = [&](const std::string& k) {
            auto it = raster.metadata.find(k);
            if (it == raster.metadata.end()) throw FormatError(path.string() + ": missing metadata " + k);
            return std::stod(it->second);
        };
        const LatLon station{get("station_lat"), get("station_lon")};
        const auto rel = std::filesystem::relative(path, base_dir).generic_string();
        auto recs = extract_patches(raster, station, options.extract, rel);
        for (auto& r : recs) {
            if (raster.metadata.count("iw_id") == 0) r.iw_id = path.stem().string();
            all.push_back(std::move(r));
        }
    }

    Manifest m;
    m.base_dir = base_dir;
    m.records = cap_rainless(std::move(all), options.cap);
    const GroupTable groups = GroupTable::from_records(m.records);
    PartitionResult p;
    if (groups.ids.size() < 3 && !options.require_partition) {
        p.assignment.assign(groups.ids.size(), 0);
    } else {
        p = partition(groups, options.partition);
    }
    for (std::size_t i = 0; i < groups.ids.size(); ++i) m.split[groups.ids[i]] = static_cast<Subset>(p.assignment[i]);

    std::map<long, std::size_t> bins;
    long max_bin = 0;
    for (const auto& r : m.records) {
        const long b = std::max(0L, wind_bin(r, options.cap.bin_width));
        ++bins[b];
        max_bin = std::max(max_bin, b);
    }
    m.histogram.assign(m.records.empty() ? 0 : static_cast<std::size_t>(max_bin + 1), 0);
    for (const auto& [b, n] : bins) m.histogram[static_cast<std::size_t>(b)] = n;

    m.config = options.to_json();
    m.config["partition_objective"] = p.objective;
    m.config["best_random_objective"] = p.best_random_objective;
    return m;
}

nlohmann::json BuildOptions::to_json() const {
    return {{"size_km", extract.size_km},
            {"stride_km", extract.stride_km},
            {"max_km", extract.max_km},
            {"filter_range", extract.filter_range},
            {"bin_width", cap.bin_width},
            {"cap_fraction", cap.cap_fraction},
            {"cap_seed", cap.seed},
            {"fractions", partition.fractions},
            {"fraction_weight", partition.fraction_weight},
            {"random_splits", partition.random_splits},
            {"iterations", partition.iterations},
            {"restarts", partition.restarts},
            {"partition_seed", partition.seed},
            {"require_partition", require_partition}};
}

BuildOptions BuildOptions::from_json(const nlohmann::json& j) {
    static const std::set<std::string> known{
        "size_km",         "stride_km",     "max_km",     "filter_range", "bin_width",      "cap_fraction",     "cap_seed",
        "fractions",       "fraction_weight", "random_splits", "iterations", "restarts", "partition_seed", "require_partition"};
    for (const auto& [key, value] : j.items())
        if (!known.count(key)) throw ConfigError("unknown dataset option '" + key + "'");
    BuildOptions o;
    o.extract.size_km = j.value("size_km", o.extract.size_km);
    o.extract.stride_km = j.value("stride_km", o.extract.stride_km);
    o.extract.max_km = j.value("max_km", o.extract.max_km);
    o.extract.filter_range = j.value("filter_range", o.extract.filter_range);
    o.cap.bin_width = j.value("bin_width", o.cap.bin_width);
    o.cap.cap_fraction = j.value("cap_fraction", o.cap.cap_fraction);
    o.cap.seed = j.value("cap_seed", o.cap.seed);
    if (j.contains("fractions")) o.partition.fractions = j.at("fractions").get<std::array<double, 3>>();
    o.partition.fraction_weight = j.value("fraction_weight", o.partition.fraction_weight);
    o.partition.random_splits = j.value("random_splits", o.partition.random_splits);
    o.partition.iterations = j.value("iterations", o.partition.iterations);
    o.partition.restarts = j.value("restarts", o.partition.restarts);
    o.partition.seed = j.value("partition_seed", o.partition.seed);
    o.require_partition = j.value("require_partition", o.require_partition);
    if (!(o.extract.size_km > 0 && o.extract.stride_km > 0 && o.extract.max_km > 0 && o.cap.bin_width > 0 &&
          o.cap.cap_fraction > 0 && o.cap.cap_fraction <= 1))
        throw ConfigError("invalid dataset options " + j.dump());
    return o;
}

}  // namespace rainsar::dataset
