#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "rainsar/collocate.hpp"
#include "rainsar/dataset.hpp"
#include "rainsar/error.hpp"
#include "rainsar/evaluation.hpp"
#include "rainsar/inference.hpp"
#include "rainsar/parallel.hpp"
#include "rainsar/synthetic.hpp"
#include "rainsar/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace rainsar;

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

json load_config(const std::string& path) {
    if (path.empty()) return json::object();
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config " + path);
    try {
        return json::parse(is);
    } catch (const json::parse_error& e) {
        throw ConfigError(path + ": " + e.what());
    }
}

void write_snapshot(const fs::path& dir, const std::string& subcommand, const json& config) {
    fs::create_directories(dir);
    json snap = config;
    snap["subcommand"] = subcommand;
    snap["version"] = RAINSAR_VERSION;
    std::ofstream(dir / (subcommand + ".config.json")) << snap.dump(2) << '\n';
}

std::string required(const json& cfg, const char* key) {
    if (!cfg.contains(key) || cfg.at(key).get<std::string>().empty())
        throw ConfigError(std::string("missing '") + key + "' (flag or config key)");
    return cfg.at(key).get<std::string>();
}

std::vector<double> parse_list(const std::string& text) {
    std::vector<double> v;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            v.push_back(std::stod(item));
        } catch (const std::logic_error&) {
            throw ConfigError("cannot parse number '" + item + "' in '" + text + "'");
        }
    }
    return v;
}

std::vector<std::string> checkpoint_list(const json& cfg) {
    if (!cfg.contains("checkpoints")) throw ConfigError("missing 'checkpoints'");
    auto v = cfg.at("checkpoints").get<std::vector<std::string>>();
    if (v.empty()) throw ConfigError("no checkpoint given");
    return v;
}

struct Common {
    std::string config;
};

template <typename T>
void set_if(json& cfg, const char* key, const std::optional<T>& v) {
    if (v) cfg[key] = *v;
}

int run_synth(const json& cfg) {
    const fs::path out = required(cfg, "out_dir");
    const auto scene = synthetic::SceneParams::from_json(cfg.value("scene", json::object()));
    synthetic::SynthOptions o;
    o.n_scenes = cfg.value("n_scenes", 1);
    o.via_polar = cfg.value("via_polar", true);
    o.build = dataset::BuildOptions::from_json(cfg.value("dataset", json::object()));
    o.workers = workers_from_env();
    json resolved = cfg;
    resolved["scene"] = scene.to_json();
    resolved["dataset"] = o.build.to_json();
    write_snapshot(out, "synth", resolved);
    const auto m = synthetic::synth_dataset(scene, o, out);
    std::cout << "wrote " << m.records.size() << " patches from " << o.n_scenes << " scenes to "
              << (out / "manifest.json").string() << '\n';
    return 0;
}

int run_collocate(const json& cfg) {
    const fs::path out = required(cfg, "out_dir");
    radar::CollocateOptions o;
    o.window_s = cfg.value("window_s", o.window_s);
    o.max_km = cfg.value("max_km", o.max_km);
    json resolved = cfg;
    resolved["window_s"] = o.window_s;
    resolved["max_km"] = o.max_km;
    write_snapshot(out, "collocate", resolved);
    const auto r = radar::collocate(required(cfg, "sar_dir"), required(cfg, "radar_dir"), out, o);
    std::cout << r.outputs.size() << " collocated, " << r.skipped.size() << " skipped (see "
              << (out / "skipped.csv").string() << ")\n";
    return 0;
}

int run_build_dataset(const json& cfg) {
    const fs::path rasters_dir = required(cfg, "rasters_dir");
    const fs::path manifest_path = required(cfg, "out");
    const auto build = dataset::BuildOptions::from_json(cfg.value("dataset", json::object()));
    json resolved = cfg;
    resolved["dataset"] = build.to_json();
    const fs::path base = manifest_path.has_parent_path() ? manifest_path.parent_path() : fs::path(".");
    write_snapshot(base, "build-dataset", resolved);
    std::vector<fs::path> rasters;
    for (const auto& p : radar::list_files(rasters_dir))
        if (p.extension() == ".rsr") rasters.push_back(p);
    const auto m = dataset::build_manifest(rasters, fs::absolute(base), build);
    m.write(manifest_path);
    std::cout << "wrote " << m.records.size() << " patches from " << rasters.size() << " rasters to "
              << manifest_path.string() << '\n';
    return 0;
}

int run_train(const json& cfg) {
    const fs::path out = required(cfg, "out_dir");
    auto config = training::TrainConfig::from_json(cfg.value("train", json::object()));
    json resolved = cfg;
    resolved["train"] = config.to_json();
    write_snapshot(out, "train", resolved);
    auto manifest = dataset::Manifest::read(required(cfg, "manifest"));
    manifest.load_pixels();
    const auto r = training::train(manifest, config, out, &std::cout);
    std::cout << "best validation " << r.best_validation << " (total " << r.best_loss << "), checkpoint "
              << r.best_checkpoint.string() << '\n';
    return 0;
}

int run_evaluate(const json& cfg) {
    const fs::path out = required(cfg, "report_out");
    evaluation::EvaluateOptions o;
    if (cfg.contains("thresholds")) o.thresholds = cfg.at("thresholds").get<std::vector<double>>();
    if (cfg.contains("wind_bins")) o.wind_edges = cfg.at("wind_bins").get<std::vector<double>>();
    if (cfg.contains("reference_prevalence")) o.reference_prevalence = cfg.at("reference_prevalence").get<double>();
    o.bootstrap.resamples = cfg.value("bootstrap_resamples", o.bootstrap.resamples);
    o.bootstrap.seed = cfg.value("seed", o.bootstrap.seed);
    o.subset = dataset::subset_from_string(cfg.value("subset", std::string("test")));
    o.workers = workers_from_env();
    std::vector<fs::path> ckpts;
    for (const auto& c : checkpoint_list(cfg)) ckpts.emplace_back(c);
    json resolved = cfg;
    resolved["thresholds"] = o.thresholds;
    resolved["wind_bins"] = o.wind_edges;
    resolved["bootstrap_resamples"] = o.bootstrap.resamples;
    resolved["seed"] = o.bootstrap.seed;
    resolved["subset"] = dataset::to_string(o.subset);
    write_snapshot(out, "evaluate", resolved);
    auto manifest = dataset::Manifest::read(required(cfg, "manifest"));
    manifest.load_pixels();
    const auto report = evaluation::evaluate(manifest, ckpts, o, out);
    std::cout << "overall " << report.at("overall").dump() << '\n';
    return 0;
}

int run_infer(const json& cfg) {
    const fs::path out = required(cfg, "out");
    const auto blend = inference::blend_from_string(cfg.value("blend", std::string("uniform")));
    const auto ckpts = checkpoint_list(cfg);
    write_snapshot(out.has_parent_path() ? out.parent_path() : fs::path("."), "infer", cfg);
    const GeoRaster scene = GeoRaster::read(required(cfg, "raster"));

    std::vector<inference::SceneOutput> runs;
    for (const auto& c : ckpts) {
        const auto m = training::load_checkpoint<float>(c);
        const auto patch = cfg.value("patch_px", static_cast<long>(m.config.model.patch_px));
        runs.push_back(inference::infer_scene(m.net, m.config.transform, scene, patch, blend));
    }
    GeoRaster result(scene.rows, scene.cols, scene.resolution_m, scene.transform);
    result.timestamp = scene.timestamp;
    result.metadata = scene.metadata;
    result.set(channel::kLandMask, scene.channel(channel::kLandMask));
    if (runs.size() == 1) {
        result.set(channel::kRainRate, runs[0].rate);
        result.set(channel::kSeg, runs[0].probability);
    } else {
        std::vector<FieldF> rates, probs;
        for (const auto& r : runs) {
            rates.push_back(r.rate);
            probs.push_back(r.probability);
        }
        const auto e = evaluation::ensemble_stats(rates);
        result.set(channel::kRainRate, e.mean);
        result.set(channel::kSeg, evaluation::ensemble_stats(probs).mean);
        result.set("y_rr_std", e.std);
        result.set("y_rr_relative_std",
                   e.relative_valid.select(e.relative_std, FieldF::Constant(e.mean.rows(), e.mean.cols(), kMissing)));
    }
    result.write(out);
    std::cout << "wrote " << out.string() << '\n';
    return 0;
}

int exit_code(ErrorKind k) {
    switch (k) {
        case ErrorKind::Validation: return kExitValidation;
        case ErrorKind::Data: return kExitData;
        case ErrorKind::Numeric: return kExitNumeric;
    }
    return 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Rain-rate estimation from SAR sea-surface roughness"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(RAINSAR_VERSION));

    std::string config_path;
    json cfg;

    auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset");
    auto* collocate = app.add_subcommand("collocate", "Pair SAR rasters with ground-radar scans");
    auto* build = app.add_subcommand("build-dataset", "Extract, label, cap and partition patches");
    auto* train = app.add_subcommand("train", "Train a model");
    auto* evaluate = app.add_subcommand("evaluate", "Score checkpoints on a manifest subset");
    auto* infer = app.add_subcommand("infer", "Predict rain over a full scene");
    for (auto* s : {synth, collocate, build, train, evaluate, infer})
        s->add_option("--config", config_path, "JSON config; flags override its keys")->check(CLI::ExistingFile);

    std::optional<std::string> out_dir, sar_dir, radar_dir, rasters_dir, out, manifest, report_out, raster, blend,
        loss_weights, thresholds, wind_bins, subset, ablation;
    std::optional<int> n_scenes, validation_every, validation_batches, max_validations, resamples;
    std::optional<long> patch_px;
    std::optional<std::uint64_t> seed;
    std::optional<double> window_s, max_km, jitter_km, lr, cap_fraction, bin_width;
    std::vector<std::string> drop_inputs, checkpoints;
    bool direct = false, float64 = false, signed_mean = false;

    synth->add_option("--out-dir", out_dir);
    synth->add_option("--n-scenes", n_scenes);
    synth->add_option("--seed", seed);
    synth->add_option("--jitter-km", jitter_km);
    synth->add_flag("--direct", direct, "Write composites directly instead of going through polar scans");

    collocate->add_option("--sar-dir", sar_dir);
    collocate->add_option("--radar-dir", radar_dir);
    collocate->add_option("--out-dir", out_dir);
    collocate->add_option("--window-s", window_s);
    collocate->add_option("--max-km", max_km);

    build->add_option("--input-dir,--rasters-dir", rasters_dir, "Directory of collocated rasters");
    build->add_option("--manifest-out,--out", out, "Manifest path");
    build->add_option("--seed", seed, "Capping and partition seed");
    build->add_option("--cap", cap_fraction, "Rainless cap as a fraction of the largest wind bin");
    build->add_option("--bin", bin_width, "Wind bin width for capping, m/s");

    train->add_option("--manifest", manifest);
    train->add_option("--out-dir", out_dir);
    train->add_option("--seed", seed);
    train->add_option("--loss-weights", loss_weights, "a,b,c,d,e");
    train->add_option("--ablation", ablation, "full|no_rr|no_seg|no_max|no_mean|no_d");
    train->add_option("--drop-input", drop_inputs, "vv|vh|mask|nesz|inc|wspd (repeatable)");
    train->add_option("--validation-every", validation_every);
    train->add_option("--validation-batches", validation_batches);
    train->add_option("--max-validations", max_validations);
    train->add_option("--lr", lr);
    train->add_flag("--float64", float64);
    train->add_flag("--signed-mean", signed_mean);

    evaluate->add_option("--manifest", manifest);
    evaluate->add_option("--checkpoint", checkpoints, "Repeat for an ensemble");
    evaluate->add_option("--report-out", report_out);
    evaluate->add_option("--thresholds", thresholds, "e.g. 1,3,10");
    evaluate->add_option("--wind-bins", wind_bins, "e.g. 0,4,8,12,16,20");
    evaluate->add_option("--subset", subset, "train|val|test");
    evaluate->add_option("--bootstrap-resamples", resamples);
    evaluate->add_option("--seed", seed);

    infer->add_option("--checkpoint", checkpoints, "Repeat for an ensemble");
    infer->add_option("--raster", raster);
    infer->add_option("--out", out);
    infer->add_option("--blend", blend, "uniform|cosine");
    infer->add_option("--patch-px", patch_px);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitValidation;
    }

    try {
        cfg = load_config(config_path);
        if (synth->parsed()) {
            set_if(cfg, "out_dir", out_dir);
            set_if(cfg, "n_scenes", n_scenes);
            if (seed) cfg["scene"]["seed"] = *seed;
            if (jitter_km) cfg["scene"]["jitter_km"] = *jitter_km;
            if (direct) cfg["via_polar"] = false;
            return run_synth(cfg);
        }
        if (collocate->parsed()) {
            set_if(cfg, "sar_dir", sar_dir);
            set_if(cfg, "radar_dir", radar_dir);
            set_if(cfg, "out_dir", out_dir);
            set_if(cfg, "window_s", window_s);
            set_if(cfg, "max_km", max_km);
            return run_collocate(cfg);
        }
        if (build->parsed()) {
            set_if(cfg, "rasters_dir", rasters_dir);
            set_if(cfg, "out", out);
            if (seed) {
                cfg["dataset"]["cap_seed"] = *seed;
                cfg["dataset"]["partition_seed"] = *seed;
            }
            if (cap_fraction) cfg["dataset"]["cap_fraction"] = *cap_fraction;
            if (bin_width) cfg["dataset"]["bin_width"] = *bin_width;
            return run_build_dataset(cfg);
        }
        if (train->parsed()) {
            set_if(cfg, "manifest", manifest);
            set_if(cfg, "out_dir", out_dir);
            auto& t = cfg["train"];
            if (t.is_null()) t = json::object();
            if (seed) t["seed"] = *seed;
            if (ablation) {
                bool found = false;
                for (const auto& [name, w] : training::LossWeights::ablations())
                    if (name == *ablation) {
                        t["loss_weights"] = w.to_json();
                        found = true;
                    }
                if (!found) throw ConfigError("unknown ablation '" + *ablation + "'");
            }
            if (loss_weights) t["loss_weights"] = training::LossWeights::parse(*loss_weights).to_json();
            if (!drop_inputs.empty()) t["model"]["drop_inputs"] = drop_inputs;
            if (validation_every) t["validation_every"] = *validation_every;
            if (validation_batches) t["validation_batches"] = *validation_batches;
            if (max_validations) t["max_validations"] = *max_validations;
            if (lr) {
                t["optimizer"]["learning_rate"] = *lr;
                t["disc_optimizer"]["learning_rate"] = *lr;
            }
            if (float64) t["float64"] = true;
            if (signed_mean) t["signed_mean"] = true;
            return run_train(cfg);
        }
        if (evaluate->parsed()) {
            set_if(cfg, "manifest", manifest);
            set_if(cfg, "report_out", report_out);
            if (!checkpoints.empty()) cfg["checkpoints"] = checkpoints;
            if (thresholds) cfg["thresholds"] = parse_list(*thresholds);
            if (wind_bins) cfg["wind_bins"] = parse_list(*wind_bins);
            set_if(cfg, "subset", subset);
            set_if(cfg, "bootstrap_resamples", resamples);
            set_if(cfg, "seed", seed);
            return run_evaluate(cfg);
        }
        if (infer->parsed()) {
            if (!checkpoints.empty()) cfg["checkpoints"] = checkpoints;
            set_if(cfg, "raster", raster);
            set_if(cfg, "out", out);
            set_if(cfg, "blend", blend);
            set_if(cfg, "patch_px", patch_px);
            return run_infer(cfg);
        }
    } catch (const Error& e) {
        std::cerr << "rainsar: " << e.what() << '\n';
        return exit_code(e.kind());
    } catch (const json::exception& e) {
        std::cerr << "rainsar: configuration: " << e.what() << '\n';
        return kExitValidation;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "rainsar: " << e.what() << '\n';
        return kExitData;
    } catch (const std::exception& e) {
        std::cerr << "rainsar: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
