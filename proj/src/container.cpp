#include "rainsar/container.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>

#include "rainsar/error.hpp"

namespace rainsar {

namespace {

constexpr std::array<char, 8> kMagic{'R', 'A', 'I', 'N', 'S', 'A', 'R', '\0'};
constexpr std::size_t kHeaderSize = 64;

template <typename T>
void put_le(std::string& out, T value) {
    using U = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
    const U bits = std::bit_cast<U>(value);
    for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

template <typename T>
T get_le(const unsigned char* p) {
    using U = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
    U bits = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) bits |= U(p[i]) << (8 * i);
    return std::bit_cast<T>(bits);
}

struct Parsed {
    std::uint64_t meta_len = 0;
    std::uint64_t payload_len = 0;
};

Parsed parse_header(const unsigned char* h, const std::filesystem::path& path) {
    if (std::memcmp(h, kMagic.data(), kMagic.size()) != 0) throw FormatError(path.string() + ": bad magic");
    const auto version = get_le<std::uint32_t>(h + 8);
    if (version != kContainerVersion)
        throw FormatError(path.string() + ": unsupported container version " + std::to_string(version));
    return {get_le<std::uint64_t>(h + 16), get_le<std::uint64_t>(h + 24)};
}

Container read_impl(const std::filesystem::path& path, bool with_payload) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open " + path.string());
    std::array<unsigned char, kHeaderSize> header{};
    if (!in.read(reinterpret_cast<char*>(header.data()), kHeaderSize))
        throw FormatError(path.string() + ": truncated header");
    const Parsed p = parse_header(header.data(), path);
    std::string meta_text(p.meta_len, '\0');
    if (!in.read(meta_text.data(), static_cast<std::streamsize>(p.meta_len)))
        throw FormatError(path.string() + ": truncated metadata");

    Container c;
    try {
        c.meta = nlohmann::json::parse(meta_text);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
    c.kind = c.meta.value("kind", std::string{});
    if (!with_payload) return c;

    std::vector<unsigned char> payload(p.payload_len);
    if (!in.read(reinterpret_cast<char*>(payload.data()), static_cast<std::streamsize>(p.payload_len)))
        throw FormatError(path.string() + ": truncated payload");
    for (const auto& b : c.meta.at("blocks")) {
        const auto name = b.at("name").get<std::string>();
        const auto dtype = b.at("dtype").get<std::string>();
        const auto offset = b.at("offset").get<std::uint64_t>();
        const auto count = b.at("count").get<std::uint64_t>();
        const std::uint64_t width = dtype == "f32" ? 4 : 8;
        if (offset + count * width > payload.size()) throw FormatError(path.string() + ": block " + name + " out of bounds");
        const unsigned char* base = payload.data() + offset;
        if (dtype == "f32") {
            std::vector<float> v(count);
            for (std::uint64_t i = 0; i < count; ++i) v[i] = get_le<float>(base + 4 * i);
            c.add(name, std::move(v));
        } else if (dtype == "f64") {
            std::vector<double> v(count);
            for (std::uint64_t i = 0; i < count; ++i) v[i] = get_le<double>(base + 8 * i);
            c.add(name, std::move(v));
        } else {
            throw FormatError(path.string() + ": unknown dtype " + dtype);
        }
    }
    return c;
}

}  // namespace

const std::vector<float>& Container::f32(const std::string& name) const {
    for (const auto& b : blocks)
        if (b.name == name) {
            if (auto* v = std::get_if<std::vector<float>>(&b.data)) return *v;
            throw FormatError("block " + name + " is not float32");
        }
    throw FormatError("missing block " + name);
}

const std::vector<double>& Container::f64(const std::string& name) const {
    for (const auto& b : blocks)
        if (b.name == name) {
            if (auto* v = std::get_if<std::vector<double>>(&b.data)) return *v;
            throw FormatError("block " + name + " is not float64");
        }
    throw FormatError("missing block " + name);
}

bool Container::has(const std::string& name) const {
    for (const auto& b : blocks)
        if (b.name == name) return true;
    return false;
}

void Container::write(const std::filesystem::path& path) const {
    std::string payload;
    nlohmann::json dir = nlohmann::json::array();
    for (const auto& b : blocks) {
        const std::uint64_t offset = payload.size();
        std::visit(
            [&](const auto& v) {
                using T = typename std::decay_t<decltype(v)>::value_type;
                for (T x : v) put_le(payload, x);
                dir.push_back({{"name", b.name},
                               {"dtype", sizeof(T) == 4 ? "f32" : "f64"},
                               {"offset", offset},
                               {"count", v.size()}});
            },
            b.data);
    }
    nlohmann::json m = meta;
    m["kind"] = kind;
    m["blocks"] = dir;
    const std::string meta_text = m.dump();

    std::string header(kMagic.begin(), kMagic.end());
    put_le(header, kContainerVersion);
    put_le(header, std::uint32_t{0});
    put_le(header, std::uint64_t{meta_text.size()});
    put_le(header, std::uint64_t{payload.size()});
    header.resize(kHeaderSize, '\0');

    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot write " + path.string());
    out.write(header.data(), static_cast<std::streamsize>(header.size()));
    out.write(meta_text.data(), static_cast<std::streamsize>(meta_text.size()));
    out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
    if (!out) throw FormatError("write failed for " + path.string());
}

Container Container::read(const std::filesystem::path& path) { return read_impl(path, true); }

Container Container::read_meta(const std::filesystem::path& path) { return read_impl(path, false); }

}  // namespace rainsar
