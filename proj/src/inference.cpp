#include "rainsar/inference.hpp"

#include <cmath>

#include "rainsar/error.hpp"

namespace rainsar::inference {

using nn::Index;
using nn::Tensor;

std::string to_string(Blend b) { return b == Blend::Cosine ? "cosine" : "uniform"; }

Blend blend_from_string(const std::string& s) {
    if (s == "uniform") return Blend::Uniform;
    if (s == "cosine") return Blend::Cosine;
    throw ConfigError("unknown blend '" + s + "' (expected uniform|cosine)");
}

std::vector<Index> tile_origins(Index length, Index patch) {
    if (patch < 2 || length < patch)
        throw ShapeMismatch("scene side " + std::to_string(length) + " is smaller than the patch " + std::to_string(patch));
    std::vector<Index> out;
    const Index step = patch / 2;
    for (Index o = 0; o + patch <= length; o += step) out.push_back(o);
    if (out.back() + patch < length) out.push_back(length - patch);
    return out;
}

namespace {

template <typename Scalar>
struct Tile {
    Tensor<Scalar> image, scalars;
};

template <typename Scalar>
Tile<Scalar> make_tile(const GeoRaster& scene, Index r0, Index c0, Index h, Index w) {
    const std::string names[] = {channel::kSsrVv, channel::kSsrVh, channel::kLandMask};
    nn::Buffer<Scalar> image(3 * h * w);
    for (int c = 0; c < 3; ++c) {
        const auto block = scene.channel(names[c]).block(r0, c0, h, w);
        for (Index i = 0; i < h; ++i)
            for (Index j = 0; j < w; ++j) image((c * h + i) * w + j) = static_cast<Scalar>(block(i, j));
    }
    nn::Buffer<Scalar> scalars(3);
    const std::string sc[] = {channel::kIncidence, channel::kNesz, channel::kWind};
    for (int k = 0; k < 3; ++k)
        scalars(k) = static_cast<Scalar>(scene.channel(sc[k]).block(r0, c0, h, w).template cast<double>().mean());
    return {Tensor<Scalar>({1, 3, h, w}, std::move(image)), Tensor<Scalar>({1, 3}, std::move(scalars))};
}

double window(Index i, Index n, Blend b) {
    if (b == Blend::Uniform) return 1.0;
    const double s = std::sin(M_PI * (static_cast<double>(i) + 0.5) / static_cast<double>(n));
    return s * s;
}

}  // namespace

template <typename Scalar>
SceneOutput infer_scene(const model::RainNet<Scalar>& net, training::TargetTransform transform, const GeoRaster& scene,
                        Index patch, Blend blend) {
    if (patch % net.config().stride() != 0)
        throw ShapeMismatch("patch " + std::to_string(patch) + " is not a multiple of the model stride");
    nn::NoGradGuard guard;
    const auto rows = tile_origins(scene.rows, patch), cols = tile_origins(scene.cols, patch);
    Field<double> rate = Field<double>::Zero(scene.rows, scene.cols), prob = rate, weight = rate;
    for (Index r0 : rows)
        for (Index c0 : cols) {
            const auto tile = make_tile<Scalar>(scene, r0, c0, patch, patch);
            const auto out = net.forward(tile.image, tile.scalars);
            for (Index i = 0; i < patch; ++i)
                for (Index j = 0; j < patch; ++j) {
                    const double w = window(i, patch, blend) * window(j, patch, blend);
                    const Index k = i * patch + j;
                    rate(r0 + i, c0 + j) += w * training::to_rate(static_cast<double>(out.y_rr.value()(k)), transform);
                    prob(r0 + i, c0 + j) += w * static_cast<double>(out.y_seg.value()(k));
                    weight(r0 + i, c0 + j) += w;
                }
        }
    return {(rate / weight).cast<float>(), (prob / weight).cast<float>()};
}

template <typename Scalar>
SceneOutput forward_scene(const model::RainNet<Scalar>& net, training::TargetTransform transform,
                          const GeoRaster& scene) {
    nn::NoGradGuard guard;
    const auto tile = make_tile<Scalar>(scene, 0, 0, scene.rows, scene.cols);
    const auto out = net.forward(tile.image, tile.scalars);
    SceneOutput s{FieldF(scene.rows, scene.cols), FieldF(scene.rows, scene.cols)};
    for (Index k = 0; k < s.rate.size(); ++k) {
        s.rate.data()[k] = static_cast<float>(training::to_rate(static_cast<double>(out.y_rr.value()(k)), transform));
        s.probability.data()[k] = static_cast<float>(out.y_seg.value()(k));
    }
    return s;
}

template SceneOutput infer_scene(const model::RainNet<float>&, training::TargetTransform, const GeoRaster&, Index, Blend);
template SceneOutput infer_scene(const model::RainNet<double>&, training::TargetTransform, const GeoRaster&, Index, Blend);
template SceneOutput forward_scene(const model::RainNet<float>&, training::TargetTransform, const GeoRaster&);
template SceneOutput forward_scene(const model::RainNet<double>&, training::TargetTransform, const GeoRaster&);

}  // namespace rainsar::inference
