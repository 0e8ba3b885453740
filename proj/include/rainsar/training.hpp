#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "json.hpp"
#include "rainsar/dataset.hpp"
#include "rainsar/losses.hpp"
#include "rainsar/model.hpp"
#include "rainsar/optim.hpp"
#include "rainsar/sampler.hpp"

namespace rainsar::training {

struct TrainConfig {
    model::ModelConfig model;
    LossWeights weights;
    LossOptions loss;
    nn::RmsPropOptions optimizer;
    nn::RmsPropOptions disc_optimizer;
    TargetTransform transform = TargetTransform::Log1p;
    int per_class = 2;
    int validation_every = 512;
    int validation_batches = 256;
    int max_validations = 100;
    int disc_steps = 1;  ///< discriminator updates per generator update
    double disc_max_km = 80.0;
    bool merge_empty_classes = true;
    bool float64 = false;
    std::uint64_t seed = 0;

    void validate() const;
    nlohmann::json to_json() const;
    static TrainConfig from_json(const nlohmann::json& j);
};

struct ValidationRow {
    int validation = 0;
    long step = 0;
    LossValues train;  ///< mean over the batches since the previous validation
    LossValues val;
    double disc_loss = 0.0;
};

struct TrainResult {
    std::vector<ValidationRow> log;
    int best_validation = 0;
    double best_loss = 0.0;
    std::filesystem::path best_checkpoint, last_checkpoint, log_path, timing_path;
    std::vector<std::string> warnings;
};

/// Alternating generator / discriminator updates on balanced batches with a
/// validation pass every `validation_every` batches. Writes into out_dir:
///   train_log.csv  one row per validation (deterministic for a seed)
///   timing.csv     wall-clock per validation
///   best.ckpt      lowest validation total loss
///   last.ckpt
/// The manifest must have its pixels loaded.
TrainResult train(const dataset::Manifest& manifest, const TrainConfig& config,
                  const std::filesystem::path& out_dir, std::ostream* progress = nullptr);

std::string log_header();
std::string log_line(const ValidationRow& row);

template <typename Scalar>
struct LoadedModel {
    TrainConfig config;
    model::RainNet<Scalar> net;
};

template <typename Scalar>
LoadedModel<Scalar> load_checkpoint(const std::filesystem::path& path);

/// Rain rate (mm/h) and segmentation probability per patch.
struct Prediction {
    FieldF rate;
    FieldF probability;
};

template <typename Scalar>
std::vector<Prediction> predict(const model::RainNet<Scalar>& net, TargetTransform transform,
                                const std::vector<const dataset::PatchRecord*>& records, std::size_t batch_size = 16);

}  // namespace rainsar::training
