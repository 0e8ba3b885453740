#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "rainsar/dataset.hpp"
#include "rainsar/raster.hpp"

namespace rainsar::evaluation {

/// True iff the fraction of valid ocean pixels with rate strictly above
/// `threshold` is strictly above `area_fraction`.
bool categorize(const FieldF& rate, const FieldF& ocean, double threshold = dataset::kRainRateThreshold,
                double area_fraction = dataset::kRainAreaFraction);

struct Counts {
    double tp = 0, fp = 0, fn = 0, tn = 0;
};

/// Absent values are undefined ratios: precision without predicted
/// positives, recall without true positives. F1 is 0 when truth has
/// positives but nothing is predicted.
struct Prf {
    std::optional<double> precision, recall, f1;
    Counts counts;
};

Prf prf(const Counts& c);
Prf prf(const std::vector<bool>& truth, const std::vector<bool>& predicted);
/// Weighted confusion counts.
Prf prf(const std::vector<bool>& truth, const std::vector<bool>& predicted, const std::vector<double>& weights);

/// Per-patch weights moving the rain prevalence of `truth` to `reference`
/// while keeping the total mass: reference/p for rain, (1-reference)/(1-p)
/// otherwise. Empty when `truth` holds a single class.
std::optional<std::vector<double>> likelihood_weights(const std::vector<bool>& truth, double reference);

struct Interval {
    double lo = 0, hi = 0;
};

/// Percentile interval (linear interpolation between order statistics) of
/// `metric` over resamples with replacement of the indices [0, n). Resample
/// b draws from a stream forked from `seed` with index b. Resamples where the
/// metric is NaN are left out; the interval is NaN if none remain.
Interval bootstrap_ci(std::size_t n, const std::function<double(const std::vector<std::size_t>&)>& metric,
                      int n_resamples = 1000, double level = 0.95, std::uint64_t seed = 0);

struct ScatterStats {
    double pcc = 0, rmse = 0, slope = 0;
};

/// Pearson correlation, RMSE and the OLS slope of predicted on true.
/// Throws DegenerateInput for fewer than two points or a constant series.
ScatterStats scatter_stats(const std::vector<double>& truth, const std::vector<double>& predicted);

struct EnsembleStats {
    FieldF mean, std, relative_std;  ///< relative_std is NaN where absent
    Mask relative_valid;
};

/// Per-pixel mean, population standard deviation and std/mean; the ratio is
/// absent where the mean is below `min_mean`.
EnsembleStats ensemble_stats(const std::vector<FieldF>& runs, double min_mean = 1e-6);

/// One evaluated patch.
struct Outcome {
    bool truth = false;
    bool predicted = false;
    double wind = 0.0;  ///< wind prior (m/s)
    double max_true = 0.0, max_pred = 0.0;
    std::string station, version;
    LatLon center;
};

struct GroupMetrics {
    std::string group;
    std::size_t support = 0, positives = 0;
    std::optional<Prf> metrics;  ///< absent for degenerate groups
    Interval f1_ci{std::nan(""), std::nan("")};
    std::string diagnostic;
};

struct BootstrapOptions {
    int resamples = 1000;
    double level = 0.95;
    std::uint64_t seed = 0;
};

/// Wind bins [edges[i], edges[i+1]); within each bin the patches are
/// likelihood-weighted to `reference` prevalence (the overall prevalence
/// when absent). Single-class and empty bins are reported absent.
std::vector<GroupMetrics> wind_binned_metrics(const std::vector<Outcome>& outcomes, const std::vector<double>& edges,
                                              std::optional<double> reference = std::nullopt,
                                              const BootstrapOptions& bootstrap = {});

/// Unweighted metrics grouped by an arbitrary key.
std::vector<GroupMetrics> grouped_metrics(const std::vector<Outcome>& outcomes,
                                          const std::function<std::string(const Outcome&)>& key,
                                          const BootstrapOptions& bootstrap = {});

/// "lat,lon" of the south-west corner of the `size_deg` cell holding p.
std::string region_cell(const LatLon& p, double size_deg = 4.0);

struct SweepPatch {
    const FieldF* truth;
    const FieldF* predicted;
    const FieldF* ocean;
    double wind = 0.0;
};

struct SweepRow {
    std::string bin;
    double threshold = 0.0;
    Prf metrics;
};

struct SweepResult {
    std::vector<SweepRow> rows;
    std::map<std::string, double> best_threshold;  ///< per bin, first maximum of F1
};

/// Categorizes truth and prediction at every threshold, per wind bin plus an
/// "all" bin. Thresholds must be ascending.
SweepResult threshold_sweep(const std::vector<SweepPatch>& patches, const std::vector<double>& thresholds,
                            const std::vector<double>& wind_edges, double area_fraction = dataset::kRainAreaFraction);

nlohmann::json to_json(const Prf& p);
nlohmann::json to_json(const GroupMetrics& g);

struct EvaluateOptions {
    std::vector<double> thresholds{1.0, 3.0, 10.0};
    std::vector<double> wind_edges{0.0, 4.0, 8.0, 12.0, 16.0, 20.0};
    std::optional<double> reference_prevalence;
    BootstrapOptions bootstrap;
    dataset::Subset subset = dataset::Subset::Test;
    int workers = 1;  ///< checkpoints predicted concurrently
};

/// Predicts the chosen subset with every checkpoint, averages the ensemble
/// and writes report.json plus CSV tables into out_dir. Returns the report.
nlohmann::json evaluate(const dataset::Manifest& manifest, const std::vector<std::filesystem::path>& checkpoints,
                        const EvaluateOptions& options, const std::filesystem::path& out_dir);

}  // namespace rainsar::evaluation
