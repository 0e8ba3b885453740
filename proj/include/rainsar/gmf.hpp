#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <vector>

namespace rainsar::gmf {

struct GmfInput {
    double wind_speed = 0.0;     ///< m/s, >= 0
    double wind_direction = 0.0; ///< degrees relative to antenna look, any real
    double incidence = 0.0;      ///< degrees
};

struct SsrPair {
    double ssr_vv = 0.0;
    double ssr_vh = 0.0;
};

/// Contents of a GMF coefficient file. The checksum covers the coefficients
/// serialized as little-endian IEEE-754 float64, in order.
struct CoefficientFile {
    std::string name;
    std::string version;
    std::string form;
    std::vector<double> coefficients;
    std::array<double, 2> valid_incidence_deg{16.0, 50.0};
    std::string sha256;

    static CoefficientFile load(const std::filesystem::path& path);
};

std::string coefficient_checksum(const std::vector<double>& coefficients);

/// Directory holding the shipped coefficient files (RAINSAR_DATA_DIR overrides).
std::filesystem::path default_data_dir();

/// CMOD5.N co-polarized model function, 28-coefficient form.
class Cmod5n {
public:
    explicit Cmod5n(const CoefficientFile& file);
    static const Cmod5n& shipped();

    /// Linear sigma0 (VV). Throws IncidenceOutOfRange outside the validity range.
    double operator()(const GmfInput& g) const;
    double operator()(double wind_speed, double wind_direction, double incidence) const {
        return (*this)(GmfInput{wind_speed, wind_direction, incidence});
    }

    const std::array<double, 2>& valid_incidence() const { return valid_; }
    const std::string& version() const { return version_; }

private:
    std::array<double, 29> c_{};  // 1-based, c_[0] unused
    std::array<double, 2> valid_{};
    std::string version_;
};

/// Incidence-only cross-polarized reference response. The shipped form is
/// affine in dB: sigma0_dB = c0 + c1 * incidence.
class IncidenceGmf {
public:
    explicit IncidenceGmf(const CoefficientFile& file);
    static const IncidenceGmf& shipped();

    double operator()(double incidence) const;
    const std::array<double, 2>& valid_incidence() const { return valid_; }

private:
    std::string form_;
    std::vector<double> coef_;
    std::array<double, 2> valid_{};
};

double cmod5n(const GmfInput& g);
double cmod2pol(double incidence);

/// Sea-surface roughness: backscatter divided by the reference response at
/// 10 m/s, 45 degrees relative direction.
SsrPair normalize(double sigma0_vv, double sigma0_vh, double incidence,
                  const Cmod5n& co = Cmod5n::shipped(),
                  const IncidenceGmf& cross = IncidenceGmf::shipped());

inline constexpr double kReferenceWindSpeed = 10.0;
inline constexpr double kReferenceDirection = 45.0;

}  // namespace rainsar::gmf
