#include "rainsar/raster.hpp"

#include "rainsar/container.hpp"
#include "rainsar/error.hpp"

namespace rainsar {

GeoRaster::GeoRaster(Eigen::Index rows_, Eigen::Index cols_, double resolution, const GeoTransform& t)
    : rows(rows_), cols(cols_), resolution_m(resolution), transform(t) {}

void GeoRaster::set(const std::string& name, FieldF field) {
    if (field.rows() != rows || field.cols() != cols)
        throw ShapeMismatch("channel " + name + " is " + std::to_string(field.rows()) + "x" +
                            std::to_string(field.cols()) + ", raster is " + std::to_string(rows) + "x" +
                            std::to_string(cols));
    channels[name] = std::move(field);
}

const FieldF& GeoRaster::channel(const std::string& name) const {
    auto it = channels.find(name);
    if (it == channels.end()) throw FormatError("raster has no channel '" + name + "'");
    return it->second;
}

void GeoRaster::validate() const {
    if (!(resolution_m > 0.0)) throw FormatError("raster resolution must be positive");
    if (rows <= 0 || cols <= 0) throw FormatError("raster has no pixels");
    for (const auto& [name, f] : channels)
        if (f.rows() != rows || f.cols() != cols) throw FormatError("channel " + name + " has a different shape");
    if (has(channel::kLandMask)) {
        const auto& m = channel(channel::kLandMask);
        if (!((m == 0.0f) || (m == 1.0f)).all()) throw FormatError("land mask values must be 0 or 1");
    }
}

void GeoRaster::write(const std::filesystem::path& path, const std::string& kind) const {
    validate();
    Container c;
    c.kind = kind;
    c.meta["rows"] = rows;
    c.meta["cols"] = cols;
    c.meta["resolution_m"] = resolution_m;
    c.meta["timestamp"] = format_timestamp(timestamp);
    c.meta["metadata"] = metadata;
    nlohmann::json names = nlohmann::json::array();
    c.add("geotransform", std::vector<double>(transform.t.begin(), transform.t.end()));
    for (const auto& [name, f] : channels) {
        names.push_back(name);
        c.add("channel:" + name, std::vector<float>(f.data(), f.data() + f.size()));
    }
    c.meta["channels"] = names;
    c.write(path);
}

GeoRaster GeoRaster::read(const std::filesystem::path& path) {
    const Container c = Container::read(path);
    if (c.kind != "georaster" && c.kind != "composite")
        throw FormatError(path.string() + ": expected a raster container, found '" + c.kind + "'");
    GeoRaster r;
    r.rows = c.meta.at("rows").get<Eigen::Index>();
    r.cols = c.meta.at("cols").get<Eigen::Index>();
    r.resolution_m = c.meta.at("resolution_m").get<double>();
    r.timestamp = parse_timestamp(c.meta.at("timestamp").get<std::string>());
    r.metadata = c.meta.value("metadata", std::map<std::string, std::string>{});
    const auto& gt = c.f64("geotransform");
    if (gt.size() != 6) throw FormatError(path.string() + ": geotransform needs 6 terms");
    std::copy(gt.begin(), gt.end(), r.transform.t.begin());
    for (const auto& name : c.meta.at("channels")) {
        const auto& v = c.f32("channel:" + name.get<std::string>());
        if (static_cast<Eigen::Index>(v.size()) != r.rows * r.cols) throw FormatError(path.string() + ": channel size");
        r.channels[name.get<std::string>()] = Eigen::Map<const FieldF>(v.data(), r.rows, r.cols);
    }
    r.validate();
    return r;
}

}  // namespace rainsar
