#include "rainsar/training.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <ostream>

#include "rainsar/container.hpp"
#include "rainsar/error.hpp"

namespace rainsar::training {

namespace fs = std::filesystem;

void TrainConfig::validate() const {
    model.validate();
    weights.validate();
    if (per_class < 1) throw ConfigError("per_class must be >= 1");
    if (validation_every < 1 || validation_batches < 1 || max_validations < 1)
        throw ConfigError("validation schedule values must be >= 1");
    if (disc_steps < 0) throw ConfigError("disc_steps must be >= 0");
    if (!(disc_max_km > 0)) throw ConfigError("disc_max_km must be positive");
}

nlohmann::json TrainConfig::to_json() const {
    return {{"model", model.to_json()},
            {"loss_weights", weights.to_json()},
            {"signed_mean", loss.signed_mean},
            {"optimizer", optimizer.to_json()},
            {"disc_optimizer", disc_optimizer.to_json()},
            {"target_transform", to_string(transform)},
            {"per_class", per_class},
            {"validation_every", validation_every},
            {"validation_batches", validation_batches},
            {"max_validations", max_validations},
            {"disc_steps", disc_steps},
            {"disc_max_km", disc_max_km},
            {"merge_empty_classes", merge_empty_classes},
            {"float64", float64},
            {"seed", seed}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
    TrainConfig c;
    if (j.contains("model")) c.model = model::ModelConfig::from_json(j.at("model"));
    if (j.contains("loss_weights")) c.weights = LossWeights::from_json(j.at("loss_weights"));
    c.loss.signed_mean = j.value("signed_mean", false);
    if (j.contains("optimizer")) c.optimizer = nn::RmsPropOptions::from_json(j.at("optimizer"));
    if (j.contains("disc_optimizer")) c.disc_optimizer = nn::RmsPropOptions::from_json(j.at("disc_optimizer"));
    c.transform = target_transform_from_string(j.value("target_transform", std::string("log1p")));
    c.per_class = j.value("per_class", c.per_class);
    c.validation_every = j.value("validation_every", c.validation_every);
    c.validation_batches = j.value("validation_batches", c.validation_batches);
    c.max_validations = j.value("max_validations", c.max_validations);
    c.disc_steps = j.value("disc_steps", c.disc_steps);
    c.disc_max_km = j.value("disc_max_km", c.disc_max_km);
    c.merge_empty_classes = j.value("merge_empty_classes", c.merge_empty_classes);
    c.float64 = j.value("float64", c.float64);
    c.seed = j.value("seed", c.seed);
    c.validate();
    return c;
}

namespace {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

std::string values_csv(const LossValues& v) {
    return fmt(v.rr) + ',' + fmt(v.seg) + ',' + fmt(v.max) + ',' + fmt(v.mean) + ',' + fmt(v.d) + ',' + fmt(v.total);
}

void accumulate(LossValues& sum, const LossValues& v) {
    sum.rr += v.rr;
    sum.seg += v.seg;
    sum.max += v.max;
    sum.mean += v.mean;
    sum.d += v.d;
    sum.total += v.total;
}

LossValues averaged(LossValues v, double n) {
    v.rr /= n;
    v.seg /= n;
    v.max /= n;
    v.mean /= n;
    v.d /= n;
    v.total /= n;
    return v;
}

template <typename Scalar>
Tensor<Scalar> masked_prediction(const Tensor<Scalar>& y_rr, const Batch<Scalar>& b) {
    return y_rr * Tensor<Scalar>(y_rr.shape(), b.mask);
}

template <typename Scalar>
class Trainer {
public:
    Trainer(const dataset::Manifest& manifest, const TrainConfig& cfg, const fs::path& out_dir, std::ostream* progress)
        : cfg_(cfg),
          out_dir_(out_dir),
          progress_(progress),
          master_(cfg.seed),
          net_(cfg.model, master_.fork(1).next()),
          disc_(cfg.model, master_.fork(2).next()),
          opt_(net_.parameters(), cfg.optimizer),
          disc_opt_(disc_.parameters(), cfg.disc_optimizer),
          sample_rng_(master_.fork(3)),
          disc_rng_(master_.fork(5)),
          train_pool_(manifest.subset(dataset::Subset::Train)),
          sampler_(train_pool_, cfg.per_class, cfg.merge_empty_classes) {
        for (const auto& m : sampler_.merges()) warn("training sampler: " + m);
        for (const auto* r : train_pool_)
            if (r->station_distance_km < cfg.disc_max_km) near_pool_.push_back(r);
        if (adversarial()) {
            if (near_pool_.empty()) {
                warn("no training patch within " + fmt(cfg.disc_max_km) + " km; discriminator is not trained");
            } else {
                try {
                    near_sampler_ = std::make_unique<BalancedSampler>(near_pool_, cfg.per_class, true);
                    for (const auto& m : near_sampler_->merges()) warn("discriminator sampler: " + m);
                } catch (const EmptyClass& e) {
                    warn(std::string("discriminator sampler falls back to uniform draws: ") + e.what());
                }
            }
        }
        const auto val_pool = manifest.subset(dataset::Subset::Validation);
        const BalancedSampler val_sampler(val_pool, cfg.per_class, cfg.merge_empty_classes);
        for (const auto& m : val_sampler.merges()) warn("validation sampler: " + m);
        Rng val_rng = master_.fork(4);
        for (int i = 0; i < cfg.validation_batches; ++i)
            val_batches_.push_back(make_batch<Scalar>(val_sampler.sample(val_rng), cfg.transform));
    }

    TrainResult run() {
        fs::create_directories(out_dir_);
        result_.log_path = out_dir_ / "train_log.csv";
        result_.timing_path = out_dir_ / "timing.csv";
        result_.best_checkpoint = out_dir_ / "best.ckpt";
        result_.last_checkpoint = out_dir_ / "last.ckpt";
        std::ofstream log(result_.log_path), timing(result_.timing_path);
        if (!log || !timing) throw FormatError("cannot write training logs in " + out_dir_.string());
        log << log_header() << '\n';
        timing << "validation,step,seconds\n";
        const auto start = std::chrono::steady_clock::now();

        long step = 0;
        for (int v = 1; v <= cfg_.max_validations; ++v) {
            LossValues train_sum;
            double disc_sum = 0.0;
            for (int s = 0; s < cfg_.validation_every; ++s) {
                ++step;
                accumulate(train_sum, generator_step(step));
                disc_sum += discriminator_step();
            }
            ValidationRow row;
            row.validation = v;
            row.step = step;
            row.train = averaged(train_sum, cfg_.validation_every);
            row.disc_loss = disc_sum / cfg_.validation_every;
            row.val = validate(v);
            result_.log.push_back(row);
            log << log_line(row) << '\n' << std::flush;
            const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
            timing << v << ',' << step << ',' << fmt(seconds) << '\n' << std::flush;

            if (v == 1 || row.val.total < result_.best_loss) {
                result_.best_loss = row.val.total;
                result_.best_validation = v;
                save(result_.best_checkpoint, v, step);
            }
            if (progress_)
                *progress_ << "validation " << v << "/" << cfg_.max_validations << " step " << step << " train "
                           << fmt(row.train.total) << " val " << fmt(row.val.total) << " (L_rr " << fmt(row.val.rr)
                           << ")\n";
        }
        save(result_.last_checkpoint, cfg_.max_validations, step);
        return result_;
    }

private:
    bool adversarial() const { return cfg_.weights.e > 0.0 && cfg_.disc_steps > 0; }

    void warn(const std::string& message) {
        result_.warnings.push_back(message);
        if (progress_) *progress_ << "warning: " << message << '\n';
    }

    LossValues generator_step(long step) {
        opt_.zero_grad();
        disc_opt_.zero_grad();
        const auto batch = make_batch<Scalar>(sampler_.sample(sample_rng_), cfg_.transform);
        const auto out = net_.forward(batch.image, batch.scalars);
        Tensor<Scalar> score;
        if (adversarial()) score = disc_.forward(masked_prediction(out.y_rr, batch));
        const auto comps = loss_components(batch.target, batch.seg_target, batch.mask, out.seg_logits, out.y_rr, score,
                                           cfg_.loss);
        const auto values = values_of(comps, cfg_.weights, "training step " + std::to_string(step) + ", " + batch.provenance());
        loss_total(comps, cfg_.weights).backward();
        opt_.step();
        return values;
    }

    double discriminator_step() {
        if (!adversarial() || near_pool_.empty()) return 0.0;
        double total = 0.0;
        for (int k = 0; k < cfg_.disc_steps; ++k) {
            Pool records;
            if (near_sampler_) {
                records = near_sampler_->sample(disc_rng_);
            } else {
                for (std::size_t i = 0; i < sampler_.batch_size(); ++i)
                    records.push_back(near_pool_[disc_rng_.below(near_pool_.size())]);
            }
            const auto batch = make_batch<Scalar>(records, cfg_.transform);
            Tensor<Scalar> fake;
            {
                nn::NoGradGuard guard;
                fake = masked_prediction(net_.forward(batch.image, batch.scalars).y_rr, batch).detach();
            }
            opt_.zero_grad();
            disc_opt_.zero_grad();
            auto loss = discriminator_loss(disc_.forward(batch.real_map), disc_.forward(fake));
            const double value = static_cast<double>(loss.item());
            if (!std::isfinite(value)) throw NonFiniteLoss("discriminator loss is not finite (" + batch.provenance() + ")");
            loss.backward();
            disc_opt_.step();
            total += value;
        }
        return total / cfg_.disc_steps;
    }

    LossValues validate(int v) {
        nn::NoGradGuard guard;
        LossValues sum;
        for (const auto& batch : val_batches_) {
            const auto out = net_.forward(batch.image, batch.scalars);
            Tensor<Scalar> score;
            if (cfg_.weights.e > 0.0) score = disc_.forward(masked_prediction(out.y_rr, batch));
            const auto comps = loss_components(batch.target, batch.seg_target, batch.mask, out.seg_logits, out.y_rr,
                                               score, cfg_.loss);
            accumulate(sum, values_of(comps, cfg_.weights, "validation " + std::to_string(v) + ", " + batch.provenance()));
        }
        return averaged(sum, static_cast<double>(val_batches_.size()));
    }

    void save(const fs::path& path, int validation, long step) const {
        Container c;
        c.kind = "checkpoint";
        c.meta["config"] = cfg_.to_json();
        c.meta["validation"] = validation;
        c.meta["step"] = step;
        c.meta["rng"] = sample_rng_.state();
        nn::store_parameters(c, net_.parameters(), &opt_, "parameters");
        nn::store_parameters(c, disc_.parameters(), &disc_opt_, "discriminator");
        c.write(path);
    }

    TrainConfig cfg_;
    fs::path out_dir_;
    std::ostream* progress_;
    Rng master_;
    model::RainNet<Scalar> net_;
    model::Discriminator<Scalar> disc_;
    nn::RmsProp<Scalar> opt_, disc_opt_;
    Rng sample_rng_, disc_rng_;
    Pool train_pool_, near_pool_;
    BalancedSampler sampler_;
    std::unique_ptr<BalancedSampler> near_sampler_;
    std::vector<Batch<Scalar>> val_batches_;
    TrainResult result_;
};

}  // namespace

std::string log_header() {
    return "validation,step,train_rr,train_seg,train_max,train_mean,train_d,train_total,"
           "val_rr,val_seg,val_max,val_mean,val_d,val_total,disc_loss";
}

std::string log_line(const ValidationRow& row) {
    return std::to_string(row.validation) + ',' + std::to_string(row.step) + ',' + values_csv(row.train) + ',' +
           values_csv(row.val) + ',' + fmt(row.disc_loss);
}

TrainResult train(const dataset::Manifest& manifest, const TrainConfig& config, const fs::path& out_dir,
                  std::ostream* progress) {
    config.validate();
    for (const auto& r : manifest.records)
        if (manifest.split.count(r.iw_id) && manifest.split.at(r.iw_id) != dataset::Subset::Test &&
            r.size_px != config.model.patch_px)
            throw ShapeMismatch("patch of " + r.iw_id + " is " + std::to_string(r.size_px) + " px but the model expects " +
                                std::to_string(config.model.patch_px));
    if (config.float64) return Trainer<double>(manifest, config, out_dir, progress).run();
    return Trainer<float>(manifest, config, out_dir, progress).run();
}

template <typename Scalar>
LoadedModel<Scalar> load_checkpoint(const fs::path& path) {
    const auto c = Container::read(path);
    if (c.kind != "checkpoint") throw FormatError(path.string() + " is a '" + c.kind + "' container, not a checkpoint");
    auto config = TrainConfig::from_json(c.meta.at("config"));
    LoadedModel<Scalar> m{config, model::RainNet<Scalar>(config.model, 0)};
    const bool stored_f32 = c.meta.value("precision", std::string("float32")) == "float32";
    if (stored_f32 == std::is_same_v<Scalar, float>) {
        nn::load_parameters(c, m.net.parameters(), static_cast<nn::RmsProp<Scalar>*>(nullptr), "parameters");
    } else if (stored_f32) {
        model::RainNet<float> tmp(config.model, 0);
        nn::load_parameters(c, tmp.parameters(), static_cast<nn::RmsProp<float>*>(nullptr), "parameters");
        for (std::size_t i = 0; i < tmp.parameters().size(); ++i)
            m.net.parameters()[i].tensor.node()->value = tmp.parameters()[i].tensor.value().template cast<Scalar>();
    } else {
        model::RainNet<double> tmp(config.model, 0);
        nn::load_parameters(c, tmp.parameters(), static_cast<nn::RmsProp<double>*>(nullptr), "parameters");
        for (std::size_t i = 0; i < tmp.parameters().size(); ++i)
            m.net.parameters()[i].tensor.node()->value = tmp.parameters()[i].tensor.value().template cast<Scalar>();
    }
    return m;
}

template <typename Scalar>
std::vector<Prediction> predict(const model::RainNet<Scalar>& net, TargetTransform transform,
                                const std::vector<const dataset::PatchRecord*>& records, std::size_t batch_size) {
    nn::NoGradGuard guard;
    std::vector<Prediction> out;
    out.reserve(records.size());
    for (std::size_t first = 0; first < records.size(); first += batch_size) {
        const std::vector<const dataset::PatchRecord*> chunk(
            records.begin() + static_cast<std::ptrdiff_t>(first),
            records.begin() + static_cast<std::ptrdiff_t>(std::min(records.size(), first + batch_size)));
        const auto batch = make_batch<Scalar>(chunk, transform);
        const auto y = net.forward(batch.image, batch.scalars);
        const Index h = batch.image.dim(2), w = batch.image.dim(3), p = h * w;
        for (std::size_t i = 0; i < chunk.size(); ++i) {
            Prediction pr{FieldF(h, w), FieldF(h, w)};
            for (Index k = 0; k < p; ++k) {
                pr.rate.data()[k] = static_cast<float>(to_rate(static_cast<double>(y.y_rr.value()(Index(i) * p + k)), transform));
                pr.probability.data()[k] = static_cast<float>(y.y_seg.value()(Index(i) * p + k));
            }
            out.push_back(std::move(pr));
        }
    }
    return out;
}

template LoadedModel<float> load_checkpoint<float>(const fs::path&);
template LoadedModel<double> load_checkpoint<double>(const fs::path&);
template std::vector<Prediction> predict(const model::RainNet<float>&, TargetTransform,
                                         const std::vector<const dataset::PatchRecord*>&, std::size_t);
template std::vector<Prediction> predict(const model::RainNet<double>&, TargetTransform,
                                         const std::vector<const dataset::PatchRecord*>&, std::size_t);

}  // namespace rainsar::training
