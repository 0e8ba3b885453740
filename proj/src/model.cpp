#include "rainsar/model.hpp"

#include <algorithm>
#include <cmath>

#include "rainsar/error.hpp"

namespace rainsar::model {

std::array<int, 2> ModelConfig::level_widths(int level) const {
    if (!widths.empty()) return widths.at(static_cast<std::size_t>(level));
    const int w = base_channels << level;
    return {w, w};
}

bool ModelConfig::dropped(const std::string& input) const {
    return std::find(drop_inputs.begin(), drop_inputs.end(), input) != drop_inputs.end();
}

void ModelConfig::validate() const {
    if (depth < 1) throw ConfigError("model depth must be >= 1");
    if (base_channels < 1) throw ConfigError("base_channels must be >= 1");
    if (!widths.empty() && widths.size() != static_cast<std::size_t>(depth) + 1)
        throw ConfigError("widths needs depth + 1 entries");
    for (const auto& w : widths)
        if (w[0] < 1 || w[1] < 1) throw ConfigError("conv block widths must be positive");
    if (disc_base < 1 || disc_depth < 1) throw ConfigError("discriminator base and depth must be >= 1");
    for (double s : scalar_scale)
        if (!(s > 0)) throw ConfigError("scalar scales must be positive");
    for (const auto& d : drop_inputs)
        if (std::find(kInputNames.begin(), kInputNames.end(), d) == kInputNames.end())
            throw ConfigError("unknown input '" + d + "' (expected vv|vh|mask|inc|nesz|wspd)");
    if (patch_px < 1 || patch_px % stride() != 0)
        throw ConfigError("patch_px " + std::to_string(patch_px) + " is not a multiple of the stride " +
                          std::to_string(stride()));
}

nlohmann::json ModelConfig::to_json() const {
    nlohmann::json j{{"depth", depth},
                     {"base_channels", base_channels},
                     {"disc_base", disc_base},
                     {"disc_depth", disc_depth},
                     {"scalar_offset", scalar_offset},
                     {"scalar_scale", scalar_scale},
                     {"drop_inputs", drop_inputs},
                     {"patch_px", patch_px},
                     {"zero_init_heads", zero_init_heads}};
    if (!widths.empty()) j["widths"] = widths;
    return j;
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
    ModelConfig c;
    c.depth = j.value("depth", c.depth);
    c.base_channels = j.value("base_channels", c.base_channels);
    if (j.contains("widths")) c.widths = j.at("widths").get<std::vector<std::array<int, 2>>>();
    c.disc_base = j.value("disc_base", c.disc_base);
    c.disc_depth = j.value("disc_depth", c.disc_depth);
    if (j.contains("scalar_offset")) c.scalar_offset = j.at("scalar_offset").get<std::array<double, 3>>();
    if (j.contains("scalar_scale")) c.scalar_scale = j.at("scalar_scale").get<std::array<double, 3>>();
    if (j.contains("drop_inputs")) c.drop_inputs = j.at("drop_inputs").get<std::vector<std::string>>();
    c.patch_px = j.value("patch_px", c.patch_px);
    c.zero_init_heads = j.value("zero_init_heads", c.zero_init_heads);
    c.validate();
    return c;
}

namespace {

Index conv_count(Index ci, Index co, Index k) { return ci * co * k * k + co; }

Index block_count(Index ci, std::array<int, 2> w) { return conv_count(ci, w[0], 3) + conv_count(w[0], w[1], 3); }

}  // namespace

Index generator_parameter_count(const ModelConfig& c) {
    Index total = 0;
    Index ci = kImageChannels;
    for (int l = 0; l < c.depth; ++l) {
        total += block_count(ci, c.level_widths(l));
        ci = c.level_widths(l)[1];
    }
    total += block_count(ci + kScalarChannels, c.level_widths(c.depth));
    ci = c.level_widths(c.depth)[1];
    for (int l = c.depth - 1; l >= 0; --l) {
        const Index skip = c.level_widths(l)[1];
        total += conv_count(ci, skip, 2);
        total += block_count(2 * skip, c.level_widths(l));
        ci = c.level_widths(l)[1];
    }
    return total + 2 * conv_count(ci, 1, 1);
}

Index discriminator_parameter_count(const ModelConfig& c) {
    Index total = 0, ci = 1;
    for (int l = 0; l < c.disc_depth; ++l) {
        const Index co = Index(c.disc_base) << l;
        total += conv_count(ci, co, 3);
        ci = co;
    }
    return total + conv_count(ci, 1, 1);
}

template <typename Scalar>
Tensor<Scalar> Conv<Scalar>::operator()(const Tensor<Scalar>& x) const {
    return transposed ? nn::conv_transpose2d(x, weight, bias, options) : nn::conv2d(x, weight, bias, options);
}

namespace {

template <typename Scalar>
Conv<Scalar> init_conv(std::vector<Parameter<Scalar>>& params, const std::string& name, Index ci, Index co, Index k,
                       nn::Conv2dOptions opt, Rng& rng, bool transposed, bool zero) {
    Conv<Scalar> c;
    c.options = opt;
    c.transposed = transposed;
    const nn::Shape shape = transposed ? nn::Shape{ci, co, k, k} : nn::Shape{co, ci, k, k};
    const Index fan_in = transposed ? ci * k * k / (opt.stride * opt.stride) : ci * k * k;
    const double sd = std::sqrt(2.0 / static_cast<double>(std::max<Index>(fan_in, 1)));
    nn::Buffer<Scalar> w(nn::numel(shape));
    for (Index i = 0; i < w.size(); ++i) w(i) = zero ? Scalar(0) : static_cast<Scalar>(rng.normal() * sd);
    c.weight = Tensor<Scalar>(shape, std::move(w), true);
    c.bias = Tensor<Scalar>::zeros({co}, true);
    params.push_back({name + ".weight", c.weight});
    params.push_back({name + ".bias", c.bias});
    return c;
}

template <typename Scalar>
Tensor<Scalar> channel_gate(const Tensor<Scalar>& x, const std::vector<bool>& keep) {
    if (std::all_of(keep.begin(), keep.end(), [](bool k) { return k; })) return x;
    const Index n = x.dim(0), c = x.dim(1), plane = x.numel() / (n * c);
    nn::Buffer<Scalar> g(x.numel());
    for (Index i = 0; i < n; ++i)
        for (Index j = 0; j < c; ++j) g.segment((i * c + j) * plane, plane).setConstant(keep[j] ? Scalar(1) : Scalar(0));
    return x * Tensor<Scalar>(x.shape(), std::move(g));
}

}  // namespace

template <typename Scalar>
RainNet<Scalar>::RainNet(ModelConfig config, std::uint64_t seed) : config_(std::move(config)) {
    config_.validate();
    Rng rng(seed);
    const nn::Conv2dOptions same{1, 1};
    Index ci = kImageChannels;
    for (int l = 0; l < config_.depth; ++l) {
        const auto w = config_.level_widths(l);
        const std::string name = "enc" + std::to_string(l);
        encoder_.push_back(make(name + ".conv1", ci, w[0], 3, same, rng));
        encoder_.push_back(make(name + ".conv2", w[0], w[1], 3, same, rng));
        ci = w[1];
    }
    const auto wb = config_.level_widths(config_.depth);
    bottleneck_.push_back(make("mid.conv1", ci + kScalarChannels, wb[0], 3, same, rng));
    bottleneck_.push_back(make("mid.conv2", wb[0], wb[1], 3, same, rng));
    ci = wb[1];
    for (int l = config_.depth - 1; l >= 0; --l) {
        const auto w = config_.level_widths(l);
        const std::string name = "dec" + std::to_string(l);
        up_.push_back(make(name + ".up", ci, w[1], 2, {2, 0}, rng, true));
        decoder_.push_back(make(name + ".conv1", 2 * Index(w[1]), w[0], 3, same, rng));
        decoder_.push_back(make(name + ".conv2", w[0], w[1], 3, same, rng));
        ci = w[1];
    }
    seg_head_ = make("head.seg", ci, 1, 1, {1, 0}, rng, false, config_.zero_init_heads);
    rr_head_ = make("head.rr", ci, 1, 1, {1, 0}, rng, false, config_.zero_init_heads);
}

template <typename Scalar>
Conv<Scalar> RainNet<Scalar>::make(const std::string& name, Index ci, Index co, Index k, nn::Conv2dOptions opt,
                                   Rng& rng, bool transposed, bool zero) {
    return init_conv(params_, name, ci, co, k, opt, rng, transposed, zero);
}

template <typename Scalar>
Tensor<Scalar> RainNet<Scalar>::block(const std::vector<Conv<Scalar>>& convs, std::size_t first, Tensor<Scalar> x) const {
    x = nn::relu(convs[first](x));
    return nn::relu(convs[first + 1](x));
}

template <typename Scalar>
ModelOutput<Scalar> RainNet<Scalar>::forward(const Tensor<Scalar>& image, const Tensor<Scalar>& scalars) const {
    if (image.rank() != 4 || image.dim(1) != kImageChannels)
        throw ShapeMismatch("model image input must be [N,3,H,W], got " + nn::to_string(image.shape()));
    if (scalars.rank() != 2 || scalars.dim(0) != image.dim(0) || scalars.dim(1) != kScalarChannels)
        throw ShapeMismatch("model scalar input must be [N,3], got " + nn::to_string(scalars.shape()));
    const Index S = config_.stride();
    if (image.dim(2) % S != 0 || image.dim(3) % S != 0)
        throw ShapeMismatch("spatial size " + nn::to_string(image.shape()) + " not divisible by stride " +
                            std::to_string(S));
    if (!scalars.value().allFinite()) throw InvalidArgument("non-finite scalar input");

    Tensor<Scalar> x = channel_gate(image, {!config_.dropped("vv"), !config_.dropped("vh"), !config_.dropped("mask")});

    nn::Buffer<Scalar> sc(scalars.numel());
    const std::array<bool, 3> keep{!config_.dropped("inc"), !config_.dropped("nesz"), !config_.dropped("wspd")};
    for (Index i = 0; i < scalars.dim(0); ++i)
        for (Index j = 0; j < kScalarChannels; ++j)
            sc(i * kScalarChannels + j) =
                keep[j] ? static_cast<Scalar>((scalars.value()(i * kScalarChannels + j) - config_.scalar_offset[j]) /
                                              config_.scalar_scale[j])
                        : Scalar(0);
    const Tensor<Scalar> scalar_in(scalars.shape(), std::move(sc));

    std::vector<Tensor<Scalar>> skips;
    for (int l = 0; l < config_.depth; ++l) {
        x = block(encoder_, 2 * l, x);
        skips.push_back(x);
        x = nn::max_pool2d(x, 2);
    }
    x = nn::concat_channels<Scalar>({x, nn::broadcast_to_map(scalar_in, x.dim(2), x.dim(3))});
    x = block(bottleneck_, 0, x);
    for (int i = 0; i < config_.depth; ++i) {
        const int l = config_.depth - 1 - i;
        x = up_[i](x);
        x = nn::concat_channels<Scalar>({x, skips[l]});
        x = block(decoder_, 2 * i, x);
    }
    ModelOutput<Scalar> out;
    out.seg_logits = seg_head_(x);
    out.y_seg = nn::sigmoid(out.seg_logits);
    out.y_rr = nn::softplus(rr_head_(x));
    return out;
}

template <typename Scalar>
Index RainNet<Scalar>::parameter_count() const {
    Index n = 0;
    for (const auto& p : params_) n += p.tensor.numel();
    return n;
}

template <typename Scalar>
Discriminator<Scalar>::Discriminator(const ModelConfig& config, std::uint64_t seed, bool zero_init) {
    config.validate();
    Rng rng(seed);
    Index ci = 1;
    for (int l = 0; l < config.disc_depth; ++l) {
        const Index co = Index(config.disc_base) << l;
        layers_.push_back(init_conv(params_, "disc" + std::to_string(l), ci, co, 3, {2, 1}, rng, false, zero_init));
        ci = co;
    }
    layers_.push_back(init_conv(params_, "disc.score", ci, 1, 1, {1, 0}, rng, false, zero_init));
}

template <typename Scalar>
Tensor<Scalar> Discriminator<Scalar>::forward(const Tensor<Scalar>& rain_map) const {
    if (rain_map.rank() != 4 || rain_map.dim(1) != 1)
        throw ShapeMismatch("discriminator input must be [N,1,H,W], got " + nn::to_string(rain_map.shape()));
    Tensor<Scalar> x = rain_map;
    for (std::size_t i = 0; i + 1 < layers_.size(); ++i) x = nn::relu(layers_[i](x));
    return nn::mean_per_sample(layers_.back()(x));
}

template <typename Scalar>
Index Discriminator<Scalar>::parameter_count() const {
    Index n = 0;
    for (const auto& p : params_) n += p.tensor.numel();
    return n;
}

template struct Conv<float>;
template struct Conv<double>;
template class RainNet<float>;
template class RainNet<double>;
template class Discriminator<float>;
template class Discriminator<double>;

}  // namespace rainsar::model
