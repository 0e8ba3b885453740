#include "rainsar/gmf.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <openssl/evp.h>

#include "json.hpp"
#include "rainsar/error.hpp"

#ifndef RAINSAR_DATA_DIR
#define RAINSAR_DATA_DIR "data"
#endif

namespace rainsar::gmf {

namespace {

void check_incidence(double incidence, const std::array<double, 2>& valid) {
    if (!(incidence >= valid[0] && incidence <= valid[1])) {
        std::ostringstream os;
        os << "incidence " << incidence << " deg outside [" << valid[0] << ", " << valid[1] << "]";
        throw IncidenceOutOfRange(os.str());
    }
}

// Wrap to [0, 360) then fold onto [0, 180]; the model is even in direction.
double fold_direction(double phi) {
    double w = std::fmod(phi, 360.0);
    if (w < 0.0) w += 360.0;
    return w > 180.0 ? 360.0 - w : w;
}

}  // namespace

std::string coefficient_checksum(const std::vector<double>& coefficients) {
    std::vector<unsigned char> bytes;
    bytes.reserve(coefficients.size() * 8);
    for (double c : coefficients) {
        auto bits = std::bit_cast<std::uint64_t>(c);
        for (int i = 0; i < 8; ++i) bytes.push_back(static_cast<unsigned char>(bits >> (8 * i)));
    }
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr);
    std::ostringstream os;
    for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
    return os.str();
}

CoefficientFile CoefficientFile::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open coefficient file " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
    CoefficientFile f;
    f.name = j.at("name").get<std::string>();
    f.version = j.at("version").get<std::string>();
    f.form = j.value("form", std::string{});
    f.coefficients = j.at("coefficients").get<std::vector<double>>();
    auto range = j.at("valid_incidence_deg").get<std::vector<double>>();
    if (range.size() != 2 || !(range[0] < range[1])) throw FormatError(path.string() + ": bad valid_incidence_deg");
    f.valid_incidence_deg = {range[0], range[1]};
    f.sha256 = j.at("sha256").get<std::string>();
    if (coefficient_checksum(f.coefficients) != f.sha256)
        throw FormatError(path.string() + ": coefficient checksum mismatch");
    return f;
}

std::filesystem::path default_data_dir() {
    if (const char* env = std::getenv("RAINSAR_DATA_DIR")) return env;
    return RAINSAR_DATA_DIR;
}

Cmod5n::Cmod5n(const CoefficientFile& file) : valid_(file.valid_incidence_deg), version_(file.version) {
    if (file.coefficients.size() != 28)
        throw FormatError("CMOD5.N expects 28 coefficients, got " + std::to_string(file.coefficients.size()));
    for (std::size_t i = 0; i < 28; ++i) c_[i + 1] = file.coefficients[i];
}

const Cmod5n& Cmod5n::shipped() {
    static const Cmod5n instance(CoefficientFile::load(default_data_dir() / "gmf" / "cmod5n.json"));
    return instance;
}

double Cmod5n::operator()(const GmfInput& g) const {
    check_incidence(g.incidence, valid_);
    if (!(std::isfinite(g.wind_speed) && g.wind_speed >= 0.0))
        throw InvalidArgument("wind speed must be finite and non-negative");

    constexpr double kThetaMid = 40.0;
    constexpr double kThetaHalfRange = 25.0;
    constexpr double kPower = 1.6;
    const auto& c = c_;

    const double y0 = c[19];
    const double pn = c[20];
    const double a = c[19] - (c[19] - 1.0) / c[20];
    const double b = 1.0 / (c[20] * std::pow(c[19] - 1.0, c[20] - 1.0));

    const double fi = fold_direction(g.wind_direction) * M_PI / 180.0;
    const double csfi = std::cos(fi);
    const double cs2fi = 2.0 * csfi * csfi - 1.0;

    const double v = g.wind_speed;
    const double x = (g.incidence - kThetaMid) / kThetaHalfRange;
    const double xx = x * x;

    const double a0 = c[1] + c[2] * x + c[3] * xx + c[4] * x * xx;
    const double a1 = c[5] + c[6] * x;
    const double a2 = c[7] + c[8] * x;
    const double gam = c[9] + c[10] * x + c[11] * xx;
    const double s0 = c[12] + c[13] * x;

    const double s = a2 * v;
    double a3 = 1.0 / (1.0 + std::exp(-std::max(s, s0)));
    if (s < s0) a3 *= std::pow(s / s0, s0 * (1.0 - a3));
    const double b0 = std::pow(a3, gam) * std::pow(10.0, a0 + a1 * v);

    double b1 = c[15] * v * (0.5 + x - std::tanh(4.0 * (x + c[16] + c[17] * v)));
    b1 = c[14] * (1.0 + x) - b1;
    b1 /= std::exp(0.34 * (v - c[18])) + 1.0;

    const double v0 = c[21] + c[22] * x + c[23] * xx;
    const double d1 = c[24] + c[25] * x + c[26] * xx;
    const double d2 = c[27] + c[28] * x;
    double v2 = v / v0 + 1.0;
    if (v2 < y0) v2 = a + b * std::pow(v2 - 1.0, pn);
    const double b2 = (-d1 + d2 * v2) * std::exp(-v2);

    return b0 * std::pow(1.0 + b1 * csfi + b2 * cs2fi, kPower);
}

IncidenceGmf::IncidenceGmf(const CoefficientFile& file)
    : form_(file.form), coef_(file.coefficients), valid_(file.valid_incidence_deg) {
    if (form_ != "affine_db" || coef_.size() != 2)
        throw FormatError("unsupported incidence GMF form '" + form_ + "'");
}

const IncidenceGmf& IncidenceGmf::shipped() {
    static const IncidenceGmf instance(CoefficientFile::load(default_data_dir() / "gmf" / "cmod2pol.json"));
    return instance;
}

double IncidenceGmf::operator()(double incidence) const {
    check_incidence(incidence, valid_);
    const double db = coef_[0] + coef_[1] * incidence;
    return std::pow(10.0, db / 10.0);
}

double cmod5n(const GmfInput& g) { return Cmod5n::shipped()(g); }

double cmod2pol(double incidence) { return IncidenceGmf::shipped()(incidence); }

SsrPair normalize(double sigma0_vv, double sigma0_vh, double incidence, const Cmod5n& co,
                  const IncidenceGmf& cross) {
    const double ref_vv = co(kReferenceWindSpeed, kReferenceDirection, incidence);
    const double ref_vh = cross(incidence);
    return {sigma0_vv / ref_vv, sigma0_vh / ref_vh};
}

}  // namespace rainsar::gmf
