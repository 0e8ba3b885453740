#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "rainsar/ops.hpp"
#include "rainsar/optim.hpp"
#include "rainsar/rng.hpp"

namespace rainsar::model {

using nn::Index;
using nn::Parameter;
using nn::Tensor;

/// Inputs that can be removed for ablations. Image: vv, vh, mask;
/// scalars: inc, nesz, wspd.
inline const std::array<std::string, 6> kInputNames{"vv", "vh", "mask", "inc", "nesz", "wspd"};
inline constexpr int kImageChannels = 3;
inline constexpr int kScalarChannels = 3;

struct ModelConfig {
    int depth = 3;
    int base_channels = 16;
    /// Optional (a, b) kernel counts per level, encoder levels then the
    /// bottleneck (depth + 1 entries). Empty means base * 2^level for both.
    std::vector<std::array<int, 2>> widths;
    int disc_base = 8;
    int disc_depth = 2;
    std::array<double, 3> scalar_offset{35.0, -25.0, 8.0};  ///< incidence deg, nesz dB, wind m/s
    std::array<double, 3> scalar_scale{10.0, 5.0, 5.0};
    std::vector<std::string> drop_inputs;
    Index patch_px = 64;
    /// Output heads start at zero (y_seg = 0.5, y_rr = softplus(0)).
    bool zero_init_heads = false;

    Index stride() const { return Index(1) << depth; }
    std::array<int, 2> level_widths(int level) const;
    bool dropped(const std::string& input) const;
    void validate() const;

    nlohmann::json to_json() const;
    static ModelConfig from_json(const nlohmann::json& j);
};

/// Closed-form parameter counts.
Index generator_parameter_count(const ModelConfig& c);
Index discriminator_parameter_count(const ModelConfig& c);

template <typename Scalar>
struct Conv {
    Tensor<Scalar> weight, bias;
    nn::Conv2dOptions options;
    bool transposed = false;

    Tensor<Scalar> operator()(const Tensor<Scalar>& x) const;
};

template <typename Scalar>
struct ModelOutput {
    Tensor<Scalar> seg_logits;  ///< [N,1,H,W]
    Tensor<Scalar> y_seg;       ///< sigmoid(seg_logits)
    Tensor<Scalar> y_rr;        ///< softplus, in the training target space
};

/// Encoder / scalar injection / decoder with skip connections and two 1x1
/// heads.
template <typename Scalar>
class RainNet {
public:
    RainNet(ModelConfig config, std::uint64_t seed);

    /// image [N,3,H,W] = (ssr_vv, ssr_vh, land_mask); scalars [N,3] raw
    /// (incidence, nesz, wind prior). H and W must be multiples of stride().
    ModelOutput<Scalar> forward(const Tensor<Scalar>& image, const Tensor<Scalar>& scalars) const;

    const ModelConfig& config() const { return config_; }
    const std::vector<Parameter<Scalar>>& parameters() const { return params_; }
    Index parameter_count() const;

private:
    Conv<Scalar> make(const std::string& name, Index ci, Index co, Index k, nn::Conv2dOptions opt, Rng& rng,
                      bool transposed = false, bool zero = false);
    Tensor<Scalar> block(const std::vector<Conv<Scalar>>& convs, std::size_t first, Tensor<Scalar> x) const;

    ModelConfig config_;
    std::vector<Conv<Scalar>> encoder_;     // two per level
    std::vector<Conv<Scalar>> bottleneck_;  // two
    std::vector<Conv<Scalar>> up_;          // one per level, deepest first
    std::vector<Conv<Scalar>> decoder_;     // two per level, deepest first
    Conv<Scalar> seg_head_, rr_head_;
    std::vector<Parameter<Scalar>> params_;
};

/// Strided 3x3 convolutions with ReLU and a 1x1 score layer. The score of a
/// sample is the mean of its score map.
template <typename Scalar>
class Discriminator {
public:
    Discriminator(const ModelConfig& config, std::uint64_t seed, bool zero_init = false);

    /// rain_map [N,1,H,W] -> [N]
    Tensor<Scalar> forward(const Tensor<Scalar>& rain_map) const;

    const std::vector<Parameter<Scalar>>& parameters() const { return params_; }
    Index parameter_count() const;

private:
    std::vector<Conv<Scalar>> layers_;
    std::vector<Parameter<Scalar>> params_;
};

extern template class RainNet<float>;
extern template class RainNet<double>;
extern template class Discriminator<float>;
extern template class Discriminator<double>;

}  // namespace rainsar::model
