#pragma once

#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "rainsar/dataset.hpp"
#include "rainsar/model.hpp"

namespace rainsar::training {

using nn::Buffer;
using nn::Index;
using nn::Tensor;

/// total = a*L_rr + b*L_seg + c*L_max + d*L_mean + e*L_D
struct LossWeights {
    double a = 5.0;
    double b = 1.0 / 15.0;
    double c = 1.0 / 40.0;
    double d = 1.0 / 40.0;
    double e = 5.0;

    /// "a,b,c,d,e"; fractions such as 1/15 are accepted.
    static LossWeights parse(const std::string& text);
    nlohmann::json to_json() const;
    static LossWeights from_json(const nlohmann::json& j);
    void validate() const;

    /// The full weight set followed by each term removed in turn:
    /// full, no_rr, no_seg, no_max, no_mean, no_d.
    static std::vector<std::pair<std::string, LossWeights>> ablations();
};

enum class TargetTransform { Identity, Log1p };
std::string to_string(TargetTransform t);
TargetTransform target_transform_from_string(const std::string& s);
double to_model_space(double rate_mmh, TargetTransform t);
double to_rate(double model_value, TargetTransform t);

struct LossOptions {
    /// Signed mean difference instead of its absolute value.
    bool signed_mean = false;
};

template <typename Scalar>
struct LossComponents {
    Tensor<Scalar> rr, seg, max, mean, d;  ///< each [1]; d undefined when no score is given
};

struct LossValues {
    double rr = 0, seg = 0, max = 0, mean = 0, d = 0, total = 0;
};

/// Per-patch masked statistics averaged over the patches that have at least
/// one valid pixel. All tensors are [N,1,H,W] except d_score ([N]); target,
/// seg_target and mask are constants of the same element count.
///   L_seg  = mean BCE(logits, seg_target)
///   L_rr   = sqrt(mean over patches of masked MSE)
///   L_max  = mean (max(M*y) - max(M*y_hat))^2
///   L_mean = mean |masked mean(y - y_hat)|
///   L_D    = mean d_score
template <typename Scalar>
LossComponents<Scalar> loss_components(const Buffer<Scalar>& target, const Buffer<Scalar>& seg_target,
                                       const Buffer<Scalar>& mask, const Tensor<Scalar>& seg_logits,
                                       const Tensor<Scalar>& y_rr, const Tensor<Scalar>& d_score,
                                       const LossOptions& options = {});

template <typename Scalar>
Tensor<Scalar> loss_total(const LossComponents<Scalar>& c, const LossWeights& w);

double loss_total(const LossValues& v, const LossWeights& w);

/// Reads the component values; throws NonFiniteLoss naming the first
/// non-finite component and `context`.
template <typename Scalar>
LossValues values_of(const LossComponents<Scalar>& c, const LossWeights& w, const std::string& context);

/// Hinge objective for the discriminator, scoring fakeness:
/// mean relu(1 + D(real)) + mean relu(1 - D(fake)).
template <typename Scalar>
Tensor<Scalar> discriminator_loss(const Tensor<Scalar>& real_score, const Tensor<Scalar>& fake_score);

/// Model inputs and constant targets for a set of patches.
template <typename Scalar>
struct Batch {
    Tensor<Scalar> image;     ///< [N,3,H,W]
    Tensor<Scalar> scalars;   ///< [N,3]
    Buffer<Scalar> target;    ///< rain in model space, 0 where invalid
    Buffer<Scalar> seg_target;
    Buffer<Scalar> mask;      ///< ocean and valid rain
    Tensor<Scalar> real_map;  ///< target * mask as [N,1,H,W]
    std::vector<const dataset::PatchRecord*> records;

    std::string provenance() const;
};

template <typename Scalar>
Batch<Scalar> make_batch(const std::vector<const dataset::PatchRecord*>& records, TargetTransform transform,
                         double rain_threshold = dataset::kRainRateThreshold);

}  // namespace rainsar::training
