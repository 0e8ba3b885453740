#pragma once

#include <string>

#include "rainsar/losses.hpp"
#include "rainsar/model.hpp"
#include "rainsar/raster.hpp"

namespace rainsar::inference {

enum class Blend { Uniform, Cosine };
std::string to_string(Blend b);
Blend blend_from_string(const std::string& s);

struct SceneOutput {
    FieldF rate;         ///< mm/h
    FieldF probability;  ///< segmentation output
};

/// First tile origins along an axis: half-patch steps, with a final tile
/// flush with the far edge.
std::vector<Eigen::Index> tile_origins(Eigen::Index length, Eigen::Index patch);

/// Tiles the scene with `patch`-pixel windows at half-patch stride, runs the
/// model on each (scalars are the tile means of incidence, nesz and wind) and
/// blends the overlaps. Uniform blending averages; cosine blending weights
/// each tile by a separable sin^2 window.
template <typename Scalar>
SceneOutput infer_scene(const model::RainNet<Scalar>& net, training::TargetTransform transform,
                        const GeoRaster& scene, Eigen::Index patch, Blend blend = Blend::Uniform);

/// Single forward pass over the whole raster with scene-mean scalars.
template <typename Scalar>
SceneOutput forward_scene(const model::RainNet<Scalar>& net, training::TargetTransform transform,
                          const GeoRaster& scene);

}  // namespace rainsar::inference
