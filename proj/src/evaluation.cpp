#include "rainsar/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "rainsar/error.hpp"
#include "rainsar/parallel.hpp"
#include "rainsar/rng.hpp"
#include "rainsar/training.hpp"

namespace rainsar::evaluation {

namespace fs = std::filesystem;

bool categorize(const FieldF& rate, const FieldF& ocean, double threshold, double area_fraction) {
    return dataset::rain_area_fraction(rate, ocean, threshold) > area_fraction;
}

Prf prf(const Counts& c) {
    Prf p;
    p.counts = c;
    if (c.tp + c.fp > 0) p.precision = c.tp / (c.tp + c.fp);
    if (c.tp + c.fn > 0) p.recall = c.tp / (c.tp + c.fn);
    if (p.recall) {
        if (!p.precision) p.f1 = 0.0;
        else if (*p.precision + *p.recall > 0) p.f1 = 2.0 * *p.precision * *p.recall / (*p.precision + *p.recall);
        else p.f1 = 0.0;
    }
    return p;
}

Prf prf(const std::vector<bool>& truth, const std::vector<bool>& predicted) {
    return prf(truth, predicted, std::vector<double>(truth.size(), 1.0));
}

Prf prf(const std::vector<bool>& truth, const std::vector<bool>& predicted, const std::vector<double>& weights) {
    if (truth.size() != predicted.size() || truth.size() != weights.size())
        throw ShapeMismatch("prf inputs differ in length");
    Counts c;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        const double w = weights[i];
        if (truth[i] && predicted[i]) c.tp += w;
        else if (!truth[i] && predicted[i]) c.fp += w;
        else if (truth[i] && !predicted[i]) c.fn += w;
        else c.tn += w;
    }
    return prf(c);
}

std::optional<std::vector<double>> likelihood_weights(const std::vector<bool>& truth, double reference) {
    if (!(reference > 0 && reference < 1)) throw InvalidArgument("reference prevalence must lie in (0, 1)");
    const double n = static_cast<double>(truth.size());
    const double pos = static_cast<double>(std::count(truth.begin(), truth.end(), true));
    if (pos == 0 || pos == n) return std::nullopt;
    const double p = pos / n;
    const double w_rain = reference / p, w_dry = (1.0 - reference) / (1.0 - p);
    std::vector<double> w(truth.size());
    for (std::size_t i = 0; i < truth.size(); ++i) w[i] = truth[i] ? w_rain : w_dry;
    return w;
}

Interval bootstrap_ci(std::size_t n, const std::function<double(const std::vector<std::size_t>&)>& metric,
                      int n_resamples, double level, std::uint64_t seed) {
    if (n == 0) throw InvalidArgument("bootstrap of an empty sample");
    if (n_resamples < 1 || !(level > 0 && level < 1)) throw InvalidArgument("bad bootstrap settings");
    Rng master(seed);
    std::vector<double> stats;
    stats.reserve(static_cast<std::size_t>(n_resamples));
    std::vector<std::size_t> idx(n);
    for (int b = 0; b < n_resamples; ++b) {
        Rng rng = Rng(master).fork(static_cast<std::uint64_t>(b));
        for (auto& i : idx) i = static_cast<std::size_t>(rng.below(n));
        const double v = metric(idx);
        if (!std::isnan(v)) stats.push_back(v);
    }
    if (stats.empty()) return {std::nan(""), std::nan("")};
    std::sort(stats.begin(), stats.end());
    auto quantile = [&](double q) {
        const double pos = q * static_cast<double>(stats.size() - 1);
        const auto lo = static_cast<std::size_t>(std::floor(pos));
        const auto hi = std::min(lo + 1, stats.size() - 1);
        return stats[lo] + (pos - static_cast<double>(lo)) * (stats[hi] - stats[lo]);
    };
    const double alpha = 1.0 - level;
    return {quantile(alpha / 2.0), quantile(1.0 - alpha / 2.0)};
}

ScatterStats scatter_stats(const std::vector<double>& t, const std::vector<double>& p) {
    if (t.size() != p.size()) throw ShapeMismatch("scatter series differ in length");
    if (t.size() < 2) throw DegenerateInput("scatter statistics need at least two points");
    const double n = static_cast<double>(t.size());
    const double mt = std::accumulate(t.begin(), t.end(), 0.0) / n;
    const double mp = std::accumulate(p.begin(), p.end(), 0.0) / n;
    double stt = 0, spp = 0, stp = 0, se = 0;
    for (std::size_t i = 0; i < t.size(); ++i) {
        stt += (t[i] - mt) * (t[i] - mt);
        spp += (p[i] - mp) * (p[i] - mp);
        stp += (t[i] - mt) * (p[i] - mp);
        se += (p[i] - t[i]) * (p[i] - t[i]);
    }
    if (stt == 0 || spp == 0) throw DegenerateInput("constant series in scatter statistics");
    return {stp / std::sqrt(stt * spp), std::sqrt(se / n), stp / stt};
}

EnsembleStats ensemble_stats(const std::vector<FieldF>& runs, double min_mean) {
    if (runs.size() < 2) throw InvalidArgument("ensemble statistics need at least two runs");
    const auto rows = runs[0].rows(), cols = runs[0].cols();
    for (const auto& r : runs)
        if (r.rows() != rows || r.cols() != cols) throw ShapeMismatch("ensemble members differ in shape");
    Field<double> sum = Field<double>::Zero(rows, cols);
    for (const auto& r : runs) sum += r.cast<double>();
    const Field<double> mean = sum / static_cast<double>(runs.size());
    Field<double> var = Field<double>::Zero(rows, cols);
    for (const auto& r : runs) var += (r.cast<double>() - mean).square();
    const Field<double> sd = (var / static_cast<double>(runs.size())).sqrt();
    EnsembleStats e;
    e.mean = mean.cast<float>();
    e.std = sd.cast<float>();
    e.relative_valid = mean >= min_mean;
    e.relative_std = e.relative_valid.select((sd / mean).cast<float>(), FieldF::Constant(rows, cols, std::nanf("")));
    return e;
}

namespace {

GroupMetrics group_metrics(const std::string& name, const std::vector<const Outcome*>& members,
                           const std::optional<std::vector<double>>& weights, const BootstrapOptions& bs) {
    GroupMetrics g;
    g.group = name;
    g.support = members.size();
    for (const auto* o : members) g.positives += o->truth ? 1 : 0;
    if (members.empty()) {
        g.diagnostic = "empty group";
        return g;
    }
    std::vector<bool> t, p;
    for (const auto* o : members) {
        t.push_back(o->truth);
        p.push_back(o->predicted);
    }
    const std::vector<double> w = weights ? *weights : std::vector<double>(members.size(), 1.0);
    g.metrics = prf(t, p, w);
    g.f1_ci = bootstrap_ci(
        members.size(),
        [&](const std::vector<std::size_t>& idx) {
            Counts c;
            for (auto i : idx) {
                if (t[i] && p[i]) c.tp += w[i];
                else if (!t[i] && p[i]) c.fp += w[i];
                else if (t[i]) c.fn += w[i];
                else c.tn += w[i];
            }
            const auto r = prf(c);
            return r.f1 ? *r.f1 : std::nan("");
        },
        bs.resamples, bs.level, bs.seed);
    return g;
}

std::string bin_name(double lo, double hi) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "[%g,%g)", lo, hi);
    return buf;
}

}  // namespace

std::vector<GroupMetrics> wind_binned_metrics(const std::vector<Outcome>& outcomes, const std::vector<double>& edges,
                                              std::optional<double> reference, const BootstrapOptions& bootstrap) {
    if (edges.size() < 2 || !std::is_sorted(edges.begin(), edges.end())) throw InvalidArgument("bad wind bin edges");
    if (!reference) {
        const auto pos = std::count_if(outcomes.begin(), outcomes.end(), [](const Outcome& o) { return o.truth; });
        if (outcomes.empty() || pos == 0 || pos == static_cast<long>(outcomes.size()))
            throw DegenerateInput("reference prevalence undefined for a single-class set");
        reference = static_cast<double>(pos) / static_cast<double>(outcomes.size());
    }
    std::vector<GroupMetrics> out;
    for (std::size_t b = 0; b + 1 < edges.size(); ++b) {
        std::vector<const Outcome*> members;
        for (const auto& o : outcomes)
            if (o.wind >= edges[b] && o.wind < edges[b + 1]) members.push_back(&o);
        std::vector<bool> t;
        for (const auto* o : members) t.push_back(o->truth);
        const std::string name = bin_name(edges[b], edges[b + 1]);
        if (members.empty()) {
            GroupMetrics g;
            g.group = name;
            g.diagnostic = "empty bin";
            out.push_back(g);
            continue;
        }
        const auto w = likelihood_weights(t, *reference);
        if (!w) {
            GroupMetrics g;
            g.group = name;
            g.support = members.size();
            g.positives = static_cast<std::size_t>(std::count(t.begin(), t.end(), true));
            g.diagnostic = "single-class bin";
            out.push_back(g);
            continue;
        }
        out.push_back(group_metrics(name, members, w, bootstrap));
    }
    return out;
}

std::vector<GroupMetrics> grouped_metrics(const std::vector<Outcome>& outcomes,
                                          const std::function<std::string(const Outcome&)>& key,
                                          const BootstrapOptions& bootstrap) {
    std::map<std::string, std::vector<const Outcome*>> groups;
    for (const auto& o : outcomes) groups[key(o)].push_back(&o);
    std::vector<GroupMetrics> out;
    for (const auto& [name, members] : groups) out.push_back(group_metrics(name, members, std::nullopt, bootstrap));
    return out;
}

std::string region_cell(const LatLon& p, double size_deg) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%g,%g", std::floor(p.lat / size_deg) * size_deg,
                  std::floor(p.lon / size_deg) * size_deg);
    return buf;
}

SweepResult threshold_sweep(const std::vector<SweepPatch>& patches, const std::vector<double>& thresholds,
                            const std::vector<double>& wind_edges, double area_fraction) {
    if (thresholds.empty() || !std::is_sorted(thresholds.begin(), thresholds.end()))
        throw InvalidArgument("thresholds must be non-empty and ascending");
    std::vector<std::pair<std::string, std::vector<const SweepPatch*>>> bins{{"all", {}}};
    for (const auto& p : patches) bins[0].second.push_back(&p);
    for (std::size_t b = 0; b + 1 < wind_edges.size(); ++b) {
        bins.emplace_back(bin_name(wind_edges[b], wind_edges[b + 1]), std::vector<const SweepPatch*>{});
        for (const auto& p : patches)
            if (p.wind >= wind_edges[b] && p.wind < wind_edges[b + 1]) bins.back().second.push_back(&p);
    }
    SweepResult r;
    for (const auto& [name, members] : bins) {
        double best_f1 = -1.0;
        for (double t : thresholds) {
            std::vector<bool> truth, pred;
            for (const auto* p : members) {
                truth.push_back(categorize(*p->truth, *p->ocean, t, area_fraction));
                pred.push_back(categorize(*p->predicted, *p->ocean, t, area_fraction));
            }
            const Prf m = prf(truth, pred);
            r.rows.push_back({name, t, m});
            if (m.f1 && *m.f1 > best_f1) {
                best_f1 = *m.f1;
                r.best_threshold[name] = t;
            }
        }
    }
    return r;
}

nlohmann::json to_json(const Prf& p) {
    auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
    return {{"precision", opt(p.precision)},
            {"recall", opt(p.recall)},
            {"f1", opt(p.f1)},
            {"tp", p.counts.tp},
            {"fp", p.counts.fp},
            {"fn", p.counts.fn},
            {"tn", p.counts.tn}};
}

nlohmann::json to_json(const GroupMetrics& g) {
    auto num = [](double v) { return std::isnan(v) ? nlohmann::json(nullptr) : nlohmann::json(v); };
    nlohmann::json j{{"group", g.group},
                     {"support", g.support},
                     {"positives", g.positives},
                     {"metrics", g.metrics ? to_json(*g.metrics) : nlohmann::json(nullptr)},
                     {"f1_ci", {num(g.f1_ci.lo), num(g.f1_ci.hi)}}};
    if (!g.diagnostic.empty()) j["diagnostic"] = g.diagnostic;
    return j;
}

namespace {

std::string opt_csv(const std::optional<double>& v) {
    if (!v) return "";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.6g", *v);
    return buf;
}

std::string num_csv(double v) { return std::isnan(v) ? "" : opt_csv(v); }

void write_groups(const fs::path& path, const std::vector<GroupMetrics>& groups) {
    std::ofstream os(path);
    os << "group,support,positives,precision,recall,f1,f1_lo,f1_hi,diagnostic\n";
    for (const auto& g : groups) {
        os << '"' << g.group << "\"," << g.support << ',' << g.positives << ',';
        if (g.metrics) os << opt_csv(g.metrics->precision) << ',' << opt_csv(g.metrics->recall) << ',' << opt_csv(g.metrics->f1);
        else os << ",,";
        os << ',' << num_csv(g.f1_ci.lo) << ',' << num_csv(g.f1_ci.hi) << ',' << g.diagnostic << '\n';
    }
}

float masked_max(const FieldF& v, const FieldF& ocean) {
    float m = 0.0f;
    for (Eigen::Index i = 0; i < v.size(); ++i)
        if (ocean.data()[i] > 0.5f) m = std::max(m, v.data()[i]);
    return m;
}

}  // namespace

nlohmann::json evaluate(const dataset::Manifest& manifest, const std::vector<fs::path>& checkpoints,
                        const EvaluateOptions& options, const fs::path& out_dir) {
    if (checkpoints.empty()) throw InvalidArgument("no checkpoint to evaluate");
    const auto records = manifest.subset(options.subset);
    if (records.empty()) throw DegenerateInput("no patch in the " + dataset::to_string(options.subset) + " subset");

    std::vector<std::vector<training::Prediction>> runs(checkpoints.size());
    parallel_for(checkpoints.size(), options.workers, [&](std::size_t k) {
        const auto m = training::load_checkpoint<float>(checkpoints[k]);
        runs[k] = training::predict(m.net, m.config.transform, records);
    });

    std::vector<FieldF> rate(records.size());
    std::vector<Outcome> outcomes;
    double rel_sum = 0.0;
    std::size_t rel_n = 0;
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto& r = *records[i];
        if (runs.size() == 1) {
            rate[i] = runs[0][i].rate;
        } else {
            std::vector<FieldF> members;
            for (const auto& run : runs) members.push_back(run[i].rate);
            const auto e = ensemble_stats(members);
            rate[i] = e.mean;
            for (Eigen::Index k = 0; k < e.relative_std.size(); ++k)
                if (e.relative_valid.data()[k] && r.land_mask.data()[k] > 0.5f) {
                    rel_sum += e.relative_std.data()[k];
                    ++rel_n;
                }
        }
        Outcome o;
        o.truth = r.rain_flag;
        o.predicted = categorize(rate[i], r.land_mask);
        o.wind = r.wind_prior;
        o.max_true = masked_max(r.rain, r.land_mask);
        o.max_pred = masked_max(rate[i], r.land_mask);
        o.station = r.station_id;
        o.version = r.processing_version;
        o.center = r.center;
        outcomes.push_back(o);
    }

    fs::create_directories(out_dir);
    nlohmann::json report;
    report["subset"] = dataset::to_string(options.subset);
    report["patches"] = outcomes.size();
    report["checkpoints"] = checkpoints.size();

    std::vector<bool> t, p;
    for (const auto& o : outcomes) {
        t.push_back(o.truth);
        p.push_back(o.predicted);
    }
    const auto overall = grouped_metrics(outcomes, [](const Outcome&) { return std::string("all"); }, options.bootstrap);
    report["overall"] = to_json(overall.front());

    std::vector<double> mt, mp;
    for (const auto& o : outcomes)
        if (o.max_true > 0.0f) {
            mt.push_back(o.max_true);
            mp.push_back(o.max_pred);
        }
    try {
        const auto s = scatter_stats(mt, mp);
        report["scatter"] = {{"pcc", s.pcc}, {"rmse", s.rmse}, {"slope", s.slope}, {"points", mt.size()}};
    } catch (const DegenerateInput& e) {
        report["scatter"] = {{"diagnostic", e.what()}};
    }
    {
        std::ofstream os(out_dir / "scatter_max.csv");
        os << "max_true,max_pred\n";
        for (std::size_t i = 0; i < mt.size(); ++i) os << mt[i] << ',' << mp[i] << '\n';
    }

    std::vector<GroupMetrics> wind;  // left empty when every test patch shares one class
    try {
        wind = wind_binned_metrics(outcomes, options.wind_edges, options.reference_prevalence, options.bootstrap);
    } catch (const DegenerateInput& e) {
        report["wind_bins_diagnostic"] = e.what();
    }
    const auto stations = grouped_metrics(outcomes, [](const Outcome& o) { return o.station; }, options.bootstrap);
    const auto versions = grouped_metrics(outcomes, [](const Outcome& o) { return o.version; }, options.bootstrap);
    const auto cells = grouped_metrics(outcomes, [](const Outcome& o) { return region_cell(o.center); }, options.bootstrap);
    for (const auto& [key, groups, file] :
         {std::tuple{"wind_bins", static_cast<const std::vector<GroupMetrics>*>(&wind), "wind_bins.csv"}, std::tuple{"stations", &stations, "stations.csv"},
          std::tuple{"processing_versions", &versions, "processing_versions.csv"},
          std::tuple{"region_cells", &cells, "region_cells.csv"}}) {
        auto& arr = report[key] = nlohmann::json::array();
        for (const auto& g : *groups) arr.push_back(to_json(g));
        write_groups(out_dir / file, *groups);
    }

    std::vector<SweepPatch> sweep;
    for (std::size_t i = 0; i < records.size(); ++i)
        sweep.push_back({&records[i]->rain, &rate[i], &records[i]->land_mask, records[i]->wind_prior});
    const auto sw = threshold_sweep(sweep, options.thresholds, options.wind_edges);
    {
        std::ofstream os(out_dir / "threshold_sweep.csv");
        os << "bin,threshold,precision,recall,f1\n";
        auto& rows = report["threshold_sweep"] = nlohmann::json::array();
        for (const auto& row : sw.rows) {
            os << '"' << row.bin << "\"," << row.threshold << ',' << opt_csv(row.metrics.precision) << ','
               << opt_csv(row.metrics.recall) << ',' << opt_csv(row.metrics.f1) << '\n';
            rows.push_back({{"bin", row.bin}, {"threshold", row.threshold}, {"metrics", to_json(row.metrics)}});
        }
        report["best_threshold"] = sw.best_threshold;
    }
    if (runs.size() > 1) report["ensemble_mean_relative_std"] = rel_n ? rel_sum / static_cast<double>(rel_n) : 0.0;

    std::ofstream(out_dir / "report.json") << report.dump(2) << '\n';
    return report;
}

}  // namespace rainsar::evaluation
