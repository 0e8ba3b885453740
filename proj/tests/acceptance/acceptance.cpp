#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "../gradcheck.hpp"
#include "json.hpp"
#include "rainsar/dataset.hpp"
#include "rainsar/evaluation.hpp"
#include "rainsar/gmf.hpp"
#include "rainsar/losses.hpp"
#include "rainsar/radar_ingest.hpp"
#include "rainsar/sampler.hpp"
#include "rainsar/training.hpp"

using namespace rainsar;
namespace fs = std::filesystem;
using nlohmann::json;
using nn::Tensor;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

class Report {
public:
    void add(bool ok, const std::string& what) {
        pass_ = pass_ && ok;
        if (!detail_.empty()) detail_ += "; ";
        detail_ += what + (ok ? "" : " [failed]");
    }
    Outcome done() const { return {pass_, detail_}; }

private:
    bool pass_ = true;
    std::string detail_;
};

std::string num(double v, int digits = 4) {
    std::ostringstream os;
    os << std::setprecision(digits) << v;
    return os.str();
}

const fs::path kWork = fs::temp_directory_path() / "rainsar_acceptance";

int cli(const std::string& args, const std::string& log) {
    const std::string cmd = std::string(RAINSAR_CLI) + " " + args + " > " + (kWork / log).string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

std::vector<std::string> lines_of(const fs::path& p) {
    std::ifstream in(p);
    std::vector<std::string> out;
    for (std::string line; std::getline(in, line);) out.push_back(line);
    return out;
}

json read_json(const fs::path& p) { return json::parse(slurp(p)); }

void write_json(const fs::path& p, const json& j) { std::ofstream(p) << j.dump(2); }

// ---------------------------------------------------------------------------

Outcome gradients() {
    Report rep;
    double worst = 0.0;
    std::size_t kinks = 0, checks = 0;
    const auto cases = testing::op_cases();
    for (const auto& c : cases)
        for (std::uint64_t seed = 0; seed < 20; ++seed) {
            Rng rng(seed);
            const auto r = c.run(rng);
            worst = std::max(worst, r.max_error);
            kinks += r.kinks;
            checks += r.checked;
        }
    rep.add(worst < 1e-4, std::to_string(cases.size()) + " ops x 20 seeds max rel err " + num(worst));

    double composite = 0.0;
    std::size_t composite_kinks = 0, max_kinks = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto r = testing::composite_loss_case(seed);
        composite = std::max(composite, r.max_error);
        composite_kinks += r.kinks;
        max_kinks = std::max(max_kinks, r.kinks);
        checks += r.checked;
    }
    rep.add(composite < 1e-4, "composite x 20 seeds max rel err " + num(composite));
    rep.add(max_kinks <= 2, std::to_string(kinks + composite_kinks) + " kink elements of " + std::to_string(checks));
    return rep.done();
}

Outcome loss_values() {
    using nn::Buffer;
    Report rep;
    auto buf = [](std::initializer_list<double> v) {
        Buffer<double> b(static_cast<nn::Index>(v.size()));
        nn::Index i = 0;
        for (double x : v) b[i++] = x;
        return b;
    };
    const auto y = buf({0, 0, 0, 10}), seg = buf({0, 0, 0, 1}), mask = buf({1, 1, 1, 1});
    const Tensor<double> pred({1, 1, 2, 2}, buf({0, 0, 0, 7})), logits({1, 1, 2, 2}, buf({0, 0, 0, 0}));
    const auto c = training::loss_components(y, seg, mask, logits, pred, Tensor<double>());
    rep.add(c.max.item() == 9.0 && c.rr.item() == 1.5 && c.mean.item() == 0.75,
            "L_max " + num(c.max.item()) + " L_rr " + num(c.rr.item()) + " L_mean " + num(c.mean.item()));

    training::LossValues v;
    v.rr = 1.5;
    v.seg = 0.3;
    v.max = 9;
    v.mean = 0.75;
    v.d = 0.1;
    const double total = training::loss_total(v, training::LossWeights{});
    rep.add(std::abs(total - 8.26375) < 1e-9, "total " + num(total, 12));
    return rep.done();
}

Outcome sampler() {
    Report rep;
    std::vector<dataset::PatchRecord> recs;
    const std::array<int, dataset::kClassCount> sizes{3, 5, 7, 2, 9, 1, 4, 6, 8, 50};
    for (int c = 0; c < dataset::kClassCount; ++c)
        for (int k = 0; k < sizes[static_cast<std::size_t>(c)]; ++k)
            recs.push_back(testing::make_record("IW" + std::to_string(c), c));
    training::Pool pool;
    for (const auto& r : recs) pool.push_back(&r);
    const training::BalancedSampler s(pool, 2);

    Rng rng(2024);
    bool exact = true;
    std::map<const dataset::PatchRecord*, double> draws;
    for (int b = 0; b < 10000; ++b) {
        const auto batch = s.sample(rng);
        std::array<int, dataset::kClassCount> per{};
        for (const auto* r : batch) {
            ++per[static_cast<std::size_t>(r->class_id)];
            draws[r] += 1.0;
        }
        exact = exact && batch.size() == 20 && std::all_of(per.begin(), per.end(), [](int n) { return n == 2; });
    }
    rep.add(exact, "10000 batches of 20, 2 per class");

    double worst_p = 1.0;
    for (int c = 0; c < dataset::kClassCount; ++c) {
        if (sizes[static_cast<std::size_t>(c)] < 2) continue;
        std::vector<double> observed;
        for (const auto& r : recs)
            if (r.class_id == c) observed.push_back(draws[&r]);
        worst_p = std::min(worst_p, testing::chi_square_p(observed, 20000.0 / static_cast<double>(observed.size())));
    }
    rep.add(worst_p > 0.01, "min chi-square p " + num(worst_p));
    return rep.done();
}

Outcome partition() {
    using namespace dataset;
    Report rep;
    Rng rng(4);
    Manifest m;
    for (int iw = 0; iw < 200; ++iw)
        for (int c = 0; c < kClassCount; ++c) {
            const auto n = rng.below(c < 5 ? 20 : 6);
            for (std::uint64_t k = 0; k < n; ++k) m.records.push_back(testing::make_record("IW" + std::to_string(iw), c));
        }
    const auto groups = GroupTable::from_records(m.records);
    const PartitionOptions opt;
    const auto r = partition(groups, opt);
    for (std::size_t i = 0; i < groups.ids.size(); ++i) m.split[groups.ids[i]] = static_cast<Subset>(r.assignment[i]);

    bool leak_free = true;
    try {
        m.check_split();
    } catch (const std::exception&) {
        leak_free = false;
    }
    std::map<std::string, std::set<Subset>> seen;
    for (const auto& rec : m.records) seen[rec.iw_id].insert(m.split.at(rec.iw_id));
    for (const auto& [iw, s] : seen) leak_free = leak_free && s.size() == 1;
    rep.add(leak_free, std::to_string(groups.ids.size()) + " IWs, none spans subsets");

    std::array<double, 3> share{};
    for (const auto& rec : m.records) share[static_cast<std::size_t>(m.split.at(rec.iw_id))] += 1.0;
    double off = 0.0;
    for (std::size_t k = 0; k < 3; ++k)
        off = std::max(off, std::abs(share[k] / static_cast<double>(m.records.size()) - opt.fractions[k]));
    rep.add(off <= 0.03, "max fraction deviation " + num(off));

    Rng outer(123);
    double best_random = std::numeric_limits<double>::infinity();
    for (int i = 0; i < 100; ++i)
        best_random = std::min(best_random, partition_objective(groups, random_split(groups, opt.fractions, outer),
                                                                opt.fractions, opt.fraction_weight));
    rep.add(r.objective <= best_random, "objective " + num(r.objective) + " vs best random " + num(best_random));

    Rng small(99);
    bool matches = true;
    for (int trial = 0; trial < 10; ++trial) {
        GroupTable g;
        for (int i = 0; i < 6; ++i) {
            g.ids.push_back("IW" + std::to_string(i));
            ClassHistogram h{};
            for (auto& x : h) x = static_cast<double>(small.below(30));
            g.histograms.push_back(h);
        }
        PartitionOptions o;
        o.seed = static_cast<std::uint64_t>(trial);
        const auto found = dataset::partition(g, o);
        double best = std::numeric_limits<double>::infinity();
        std::vector<int> a(6);
        for (int code = 0; code < 729; ++code) {
            for (int i = 0, x = code; i < 6; ++i, x /= 3) a[static_cast<std::size_t>(i)] = x % 3;
            best = std::min(best, partition_objective(g, a, o.fractions, o.fraction_weight));
        }
        matches = matches && std::abs(found.objective - best) <= 1e-12 * std::max(1.0, best);
    }
    rep.add(matches, "6-IW search equals exhaustive optimum on 10 instances");
    return rep.done();
}

// Independent spherical geometry for the projection oracles.
constexpr double kPi = 3.14159265358979323846;

double haversine_km(const LatLon& a, const LatLon& b) {
    const double r = kPi / 180.0;
    const double h = std::pow(std::sin((b.lat - a.lat) * r / 2), 2) +
                     std::cos(a.lat * r) * std::cos(b.lat * r) * std::pow(std::sin((b.lon - a.lon) * r / 2), 2);
    return 2.0 * 6371.0 * std::asin(std::min(1.0, std::sqrt(h)));
}

double bearing(const LatLon& a, const LatLon& b) {
    const double r = kPi / 180.0;
    const double y = std::sin((b.lon - a.lon) * r) * std::cos(b.lat * r);
    const double x = std::cos(a.lat * r) * std::sin(b.lat * r) - std::sin(a.lat * r) * std::cos(b.lat * r) * std::cos((b.lon - a.lon) * r);
    return std::fmod(std::atan2(y, x) / r + 360.0, 360.0);
}

GeoRaster raster_around(const LatLon& centre, Eigen::Index n, double res_m) {
    const double dlat = res_m / 1000.0 / 6371.0 * 180.0 / kPi;
    const double dlon = dlat / std::cos(centre.lat * kPi / 180.0);
    return GeoRaster(n, n, res_m, GeoTransform::north_up({centre.lat + dlat * n / 2.0, centre.lon - dlon * n / 2.0}, res_m));
}

radar::PolarScan make_scan(const LatLon& station, Eigen::Index gates, float value) {
    radar::PolarScan s;
    s.station_id = "ACPT";
    s.station = station;
    s.timestamp = parse_timestamp("2020-06-01T12:00:00Z");
    s.rates = FieldF::Constant(360, gates, value);
    return s;
}

Outcome projection() {
    Report rep;
    const LatLon station{28.0, -81.0};

    const auto flat = radar::project_polar(make_scan(station, 200, 7.0f), raster_around(station, 60, 1000.0));
    double worst = 0.0;
    long n = 0;
    for (Eigen::Index i = 0; i < flat.rate.size(); ++i)
        if (flat.valid.data()[i]) worst = std::max(worst, std::abs(flat.rate.data()[i] - 7.0)), ++n;
    rep.add(worst < 1e-6 && n > 2000, "constant field max err " + num(worst) + " over " + std::to_string(n) + " px");

    auto ramp = make_scan(station, 400, 0.0f);
    for (Eigen::Index g = 0; g < 400; ++g) ramp.rates.col(g).setConstant(static_cast<float>(0.5 + g / 64.0));
    const auto target = raster_around(station, 90, 2000.0);
    const auto p = radar::project_polar(ramp, target);
    worst = 0.0;
    n = 0;
    for (Eigen::Index r = 0; r < target.rows; ++r)
        for (Eigen::Index c = 0; c < target.cols; ++c) {
            if (!p.valid(r, c)) continue;
            const double f = std::clamp(haversine_km(station, target.transform.pixel_center(r, c)) * 4.0 - 0.5, 0.0, 399.0);
            worst = std::max(worst, std::abs(p.rate(r, c) - (0.5 + f / 64.0)));
            ++n;
        }
    rep.add(worst < 1e-6 && n > 5000, "range-linear field max err " + num(worst));

    auto spin = make_scan(station, 120, 0.0f);
    for (Eigen::Index a = 0; a < 360; ++a) spin.rates.row(a).setConstant(static_cast<float>(a / 64.0));
    const auto small = raster_around(station, 50, 1000.0);
    const auto q = radar::project_polar(spin, small);
    worst = 0.0;
    for (Eigen::Index r = 0; r < small.rows; ++r)
        for (Eigen::Index c = 0; c < small.cols; ++c) {
            const double az = bearing(station, small.transform.pixel_center(r, c));
            if (!q.valid(r, c) || az < 2.0 || az > 358.0) continue;
            worst = std::max(worst, std::abs(q.rate(r, c) - (az - 0.5) / 64.0));
        }
    rep.add(worst < 1e-6, "azimuth-linear field max err " + num(worst));

    Rng rng(2024);
    const auto grid = raster_around(station, 16, 1000.0);
    long violations = 0, checked = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        auto scan = make_scan(station, 40, 0.0f);
        for (Eigen::Index i = 0; i < scan.rates.size(); ++i) scan.rates.data()[i] = static_cast<float>(rng.uniform(0, 50));
        const auto pr = radar::project_polar(scan, grid);
        for (Eigen::Index r = 0; r < grid.rows; ++r)
            for (Eigen::Index c = 0; c < grid.cols; ++c) {
                if (!pr.valid(r, c)) continue;
                const auto pt = grid.transform.pixel_center(r, c);
                const long a0 = (static_cast<long>(std::floor(bearing(station, pt) - 0.5)) + 360) % 360, a1 = (a0 + 1) % 360;
                const long g0 = static_cast<long>(std::floor(std::clamp(haversine_km(station, pt) * 4.0 - 0.5, 0.0, 39.0)));
                const long g1 = std::min(g0 + 1, 39L);
                const float v[4] = {scan.rates(a0, g0), scan.rates(a0, g1), scan.rates(a1, g0), scan.rates(a1, g1)};
                const float lo = *std::min_element(v, v + 4), hi = *std::max_element(v, v + 4);
                violations += pr.rate(r, c) < lo * (1 - 1e-6f) || pr.rate(r, c) > hi * (1 + 1e-6f);
                ++checked;
            }
    }
    rep.add(violations == 0, "convex bound on 1000 scans, " + std::to_string(checked) + " px, " +
                                 std::to_string(violations) + " violations");
    return rep.done();
}

Outcome gmf_oracle() {
    Report rep;
    const auto g = read_json(fs::path(RAINSAR_TEST_DATA) / "cmod5n_golden.json");
    double worst = 0.0;
    for (const auto& row : g.at("grid")) {
        const double want = row[3].get<double>();
        const double got = gmf::cmod5n({row[0].get<double>(), row[1].get<double>(), row[2].get<double>()});
        worst = std::max(worst, std::abs(got - want) / std::abs(want));
    }
    rep.add(g.at("grid").size() == 1000 && worst < 1e-10,
            std::to_string(g.at("grid").size()) + " points max rel err " + num(worst));

    Rng rng(6);
    bool identity = true, homogeneous = true;
    for (int i = 0; i < 2000; ++i) {
        const double th = rng.uniform(16, 50);
        const double s = gmf::cmod5n({gmf::kReferenceWindSpeed, gmf::kReferenceDirection, th}), x = gmf::cmod2pol(th);
        const auto unit = gmf::normalize(s, x, th);
        identity = identity && unit.ssr_vv == 1.0 && unit.ssr_vh == 1.0;
        // power-of-two factors keep the scaled input exact
        const double k = std::ldexp(1.0, static_cast<int>(rng.below(9)) - 4);
        const double a = rng.uniform(1e-4, 1.0), b = rng.uniform(1e-5, 0.1);
        const auto one = gmf::normalize(a, b, th), scaled = gmf::normalize(k * a, k * b, th);
        homogeneous = homogeneous && scaled.ssr_vv == k * one.ssr_vv && scaled.ssr_vh == k * one.ssr_vh &&
                      gmf::normalize(0.0, 0.0, th).ssr_vv == 0.0;
    }
    rep.add(identity, "reference response normalizes to 1 on 2000 incidences");
    rep.add(homogeneous, "normalize(k s) == k normalize(s)");
    return rep.done();
}

Outcome equivariance() {
    Report rep;
    model::ModelConfig c;
    c.depth = 3;
    c.base_channels = 4;
    c.patch_px = 32;
    model::RainNet<double> net(c, 9);
    Rng rng(4);
    for (const auto& p : net.parameters()) {
        auto t = p.tensor;
        for (auto& v : t.value()) v += rng.uniform(-0.1, 0.1);
    }
    const nn::Index h = 192, s = c.stride(), margin = 64;
    const auto x = testing::random_tensor<double>({1, 3, h, h}, rng, 0, 2, false);
    nn::Buffer<double> sc(3);
    sc << 35.0, -25.0, 8.0;
    const Tensor<double> scalars({1, 3}, sc);

    nn::Buffer<double> moved = nn::Buffer<double>::Zero(x.numel());
    for (nn::Index ch = 0; ch < 3; ++ch)
        for (nn::Index r = 0; r + s < h; ++r)
            for (nn::Index q = 0; q + s < h; ++q) moved[(ch * h + r + s) * h + q + s] = x.value()[(ch * h + r) * h + q];

    const auto a = net.forward(x, scalars), b = net.forward(Tensor<double>(x.shape(), moved), scalars);
    long compared = 0, mismatched = 0;
    for (nn::Index r = margin; r < h - s - margin; ++r)
        for (nn::Index q = margin; q < h - s - margin; ++q) {
            mismatched += b.y_rr.value()[(r + s) * h + q + s] != a.y_rr.value()[r * h + q];
            mismatched += b.seg_logits.value()[(r + s) * h + q + s] != a.seg_logits.value()[r * h + q];
            compared += 2;
        }
    rep.add(mismatched == 0 && compared > 1000, "shift " + std::to_string(s) + " px, " + std::to_string(compared) +
                                                    " interior values, " + std::to_string(mismatched) + " differ");
    return rep.done();
}

fs::path configs_dir() { return fs::path(RAINSAR_CONFIGS); }

double rain_area_ratio(const fs::path& manifest_path, const fs::path& checkpoint) {
    auto m = dataset::Manifest::read(manifest_path);
    m.load_pixels();
    const auto test = m.subset(dataset::Subset::Test);
    const auto ck = training::load_checkpoint<float>(checkpoint);
    const auto pred = training::predict(ck.net, ck.config.transform, test);
    double truth = 0, predicted = 0;
    for (std::size_t i = 0; i < test.size(); ++i) {
        const auto ocean = test[i]->land_mask > 0.5f;
        truth += (ocean && test[i]->rain > float(dataset::kRainRateThreshold)).count();
        predicted += (ocean && pred[i].rate > float(dataset::kRainRateThreshold)).count();
    }
    return truth > 0 ? predicted / truth : std::nan("");
}

struct Desk {
    fs::path manifest;
    std::size_t train_patches = 0;
    bool ok = false;
};

Desk desk_dataset() {
    static Desk desk;
    static bool built = false;
    if (built) return desk;
    built = true;
    const auto dir = kWork / "desk";
    if (cli("synth --config " + (configs_dir() / "synth_desk.json").string() + " --out-dir " + dir.string(),
            "synth_desk.log") != 0)
        return desk;
    desk.manifest = dir / "manifest.json";
    const auto m = dataset::Manifest::read(desk.manifest);
    desk.train_patches = m.subset(dataset::Subset::Train).size();
    desk.ok = true;
    return desk;
}

Outcome end_to_end() {
    Report rep;
    const auto desk = desk_dataset();
    if (!desk.ok) return {false, "synth failed, see " + (kWork / "synth_desk.log").string()};
    rep.add(desk.train_patches >= 2000, std::to_string(desk.train_patches) + " training patches");

    const auto cfg = (configs_dir() / "train_desk.json").string();
    const auto run = kWork / "full";
    if (cli("train --config " + cfg + " --manifest " + desk.manifest.string() + " --out-dir " + run.string(),
            "train_full.log") != 0)
        return {false, "training failed, see " + (kWork / "train_full.log").string()};
    const auto train_cfg = read_json(cfg).at("train");
    const auto log = lines_of(run / "train_log.csv");
    rep.add(static_cast<int>(log.size()) == train_cfg.at("max_validations").get<int>() + 1,
            std::to_string(log.size() - 1) + " validations");

    std::vector<std::string> cols;
    std::stringstream header(log.front());
    for (std::string c; std::getline(header, c, ',');) cols.push_back(c);
    const auto rr_col = static_cast<std::size_t>(std::find(cols.begin(), cols.end(), "val_rr") - cols.begin());
    auto field = [&](const std::string& line) {
        std::stringstream ss(line);
        std::string c;
        for (std::size_t i = 0; i <= rr_col; ++i) std::getline(ss, c, ',');
        return std::stod(c);
    };
    const double first = field(log[1]), last = field(log.back());
    rep.add(last <= 0.5 * first, "val L_rr " + num(first) + " -> " + num(last));

    if (cli("evaluate --manifest " + desk.manifest.string() + " --checkpoint " + (run / "best.ckpt").string() +
                " --report-out " + (kWork / "eval_full").string() + " --subset test",
            "eval_full.log") != 0)
        return {false, "evaluation failed"};
    const double f1 = read_json(kWork / "eval_full" / "report.json").at("overall").at("metrics").at("f1").get<double>();
    rep.add(f1 > 0.9, "held-out F1 " + num(f1));

    const auto again = kWork / "repeat";
    const int prefix = 3;
    if (cli("train --config " + (run / "train.config.json").string() + " --out-dir " + again.string() +
                " --max-validations " + std::to_string(prefix),
            "train_repeat.log") != 0)
        return {false, "repeat training failed"};
    const auto replay = lines_of(again / "train_log.csv");
    const bool same = replay.size() == static_cast<std::size_t>(prefix + 1) &&
                      std::equal(replay.begin(), replay.end(), log.begin());
    rep.add(same, "seeded rerun reproduces the first " + std::to_string(prefix) + " log rows");
    return rep.done();
}

Outcome ablations() {
    Report rep;
    const auto tiny = kWork / "tiny";
    const json synth{{"n_scenes", 4},
                     {"scene", {{"rows", 64}, {"cols", 64}, {"resolution_m", 1000.0}, {"cells", {2, 5}}}},
                     {"dataset", {{"size_km", 16.0}, {"stride_km", 8.0}, {"cap_fraction", 1.0}}}};
    const json train{{"train",
                      {{"model", {{"depth", 1}, {"base_channels", 4}, {"disc_base", 4}, {"disc_depth", 1}, {"patch_px", 16}}},
                       {"validation_every", 1},
                       {"validation_batches", 1},
                       {"max_validations", 1}}}};
    fs::create_directories(tiny);
    write_json(tiny / "synth.json", synth);
    write_json(tiny / "train.json", train);
    if (cli("synth --config " + (tiny / "synth.json").string() + " --out-dir " + (tiny / "syn").string() + " --seed 3",
            "tiny_synth.log") != 0)
        return {false, "tiny synth failed"};

    const std::string base =
        "train --config " + (tiny / "train.json").string() + " --manifest " + (tiny / "syn" / "manifest.json").string();
    int launched = 0, succeeded = 0;
    for (const char* a : {"no_rr", "no_seg", "no_max", "no_mean", "no_d"}) {
        ++launched;
        const auto out = tiny / a;
        succeeded += cli(base + " --out-dir " + out.string() + " --ablation " + a, "tiny_train.log") == 0 &&
                     fs::exists(out / "best.ckpt");
    }
    for (const char* in : {"vv", "vh", "mask", "nesz", "inc", "wspd"}) {
        ++launched;
        const auto out = tiny / (std::string("drop_") + in);
        succeeded += cli(base + " --out-dir " + out.string() + " --drop-input " + in, "tiny_train.log") == 0 &&
                      fs::exists(out / "best.ckpt");
    }
    rep.add(succeeded == launched, std::to_string(succeeded) + "/" + std::to_string(launched) + " ablation runs launched");

    const auto desk = desk_dataset();
    if (!desk.ok) return {false, "synth failed"};
    const auto run = kWork / "no_max";
    if (cli("train --config " + (configs_dir() / "train_desk.json").string() + " --manifest " + desk.manifest.string() +
                " --out-dir " + run.string() + " --ablation no_max",
            "train_no_max.log") != 0)
        return {false, "no_max training failed"};
    const double ratio = rain_area_ratio(desk.manifest, run / "best.ckpt");
    const double full = rain_area_ratio(desk.manifest, kWork / "full" / "best.ckpt");
    rep.add(ratio < 0.1, "no_max predicted/true rain area " + num(ratio) + " (full model " + num(full) + ")");
    return rep.done();
}

Outcome metrics() {
    using namespace evaluation;
    Report rep;
    Rng rng(17);
    auto bools = [&](std::size_t n, double p) {
        std::vector<bool> v(n);
        for (std::size_t i = 0; i < n; ++i) v[i] = rng.uniform() < p;
        return v;
    };
    int disagreements = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        const auto n = 1 + rng.below(60);
        const auto t = bools(n, rng.uniform()), p = bools(n, rng.uniform());
        long tp = 0, fp = 0, fn = 0;
        for (std::size_t i = 0; i < n; ++i) {
            tp += t[i] && p[i];
            fp += !t[i] && p[i];
            fn += t[i] && !p[i];
        }
        const auto r = prf(t, p);
        bool ok = r.counts.tp == tp && r.counts.fp == fp && r.counts.fn == fn;
        ok = ok && r.precision.has_value() == (tp + fp > 0) && r.recall.has_value() == (tp + fn > 0);
        if (tp + fp > 0) ok = ok && std::abs(*r.precision - double(tp) / double(tp + fp)) < 1e-12;
        if (tp + fn > 0) ok = ok && std::abs(*r.recall - double(tp) / double(tp + fn)) < 1e-12;
        if (tp + fn > 0) ok = ok && std::abs(*r.f1 - 2.0 * tp / (2.0 * tp + fp + fn)) < 1e-12;
        disagreements += !ok;
    }
    rep.add(disagreements == 0, "prf vs counting on 1000 vectors, " + std::to_string(disagreements) + " disagree");

    const auto hand = prf({true, true, true, true, false, false}, {true, true, false, false, true, false});
    rep.add(hand.f1 && std::abs(*hand.f1 - 4.0 / 7.0) < 1e-15, "hand F1 " + num(hand.f1.value_or(-1), 15));

    int covered = 0;
    const int trials = 500;
    for (int t = 0; t < trials; ++t) {
        std::vector<unsigned char> x(1000);
        for (auto& v : x) v = rng.uniform() < 0.5;
        const auto ci = bootstrap_ci(
            x.size(),
            [&](const std::vector<std::size_t>& idx) {
                long s = 0;
                for (auto i : idx) s += x[i];
                return double(s) / double(idx.size());
            },
            1000, 0.95, static_cast<std::uint64_t>(t));
        covered += ci.lo <= 0.5 && 0.5 <= ci.hi;
    }
    const double coverage = double(covered) / trials;
    rep.add(coverage >= 0.93 && coverage <= 0.97, "95% bootstrap coverage " + num(coverage));

    bool identity = true;
    for (int trial = 0; trial < 200; ++trial) {
        const auto n = 2 + rng.below(50);
        auto t = bools(n, 0.5);
        t[0] = true;
        t[1] = false;
        const auto p = bools(n, 0.5);
        const double prevalence = double(std::count(t.begin(), t.end(), true)) / double(n);
        const auto w = likelihood_weights(t, prevalence);
        if (!w) {
            identity = false;
            continue;
        }
        for (double x : *w) identity = identity && std::abs(x - 1.0) < 1e-12;
        const auto a = prf(t, p), b = prf(t, p, *w);
        for (auto [x, y] : {std::pair{a.precision, b.precision}, {a.recall, b.recall}, {a.f1, b.f1}})
            identity = identity && x.has_value() == y.has_value() && (!x || std::abs(*x - *y) < 1e-12);
    }
    rep.add(identity, "likelihood weights at bin prevalence are the identity");
    return rep.done();
}

struct Criterion {
    int id;
    std::string name;
    double budget_s;
    std::function<Outcome()> run;
};

}  // namespace

int main() {
    fs::remove_all(kWork);
    fs::create_directories(kWork);
    const std::vector<Criterion> criteria{
        {1, "gradient fidelity", 120, gradients},
        {2, "loss component values", 1, loss_values},
        {3, "sampler statistics", 60, sampler},
        {4, "partition constraints", 120, partition},
        {5, "projection correctness", 60, projection},
        {6, "gmf oracle equivalence", 10, gmf_oracle},
        {7, "translation equivariance", 30, equivariance},
        {8, "end-to-end synthetic learning", 1800, end_to_end},
        {9, "ablation structure", 2700, ablations},
        {10, "metrics oracle", 120, metrics},
    };

    std::ofstream report(RAINSAR_REPORT);
    int passed = 0;
    for (const auto& c : criteria) {
        const auto start = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        const bool in_time = secs < c.budget_s;
        const bool ok = o.pass && in_time;
        passed += ok;
        std::ostringstream line;
        line << (ok ? "PASS" : "FAIL") << " criterion " << c.id << " " << c.name << ": " << o.detail << " ("
             << num(secs, 3) << " s of " << c.budget_s << " s" << (in_time ? "" : ", over budget") << ")";
        std::cout << line.str() << std::endl;
        report << line.str() << std::endl;
    }
    const std::string summary = "acceptance complete: " + std::to_string(passed) + "/" +
                                std::to_string(criteria.size()) + " criteria pass";
    std::cout << summary << std::endl;
    report << summary << std::endl;
    return passed == static_cast<int>(criteria.size()) ? 0 : 1;
}
