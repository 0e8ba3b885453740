#include "../support.hpp"
#include "doctest.h"
#include "rainsar/error.hpp"
#include "rainsar/inference.hpp"
#include "rainsar/synthetic.hpp"

using namespace rainsar;
using namespace rainsar::inference;
using training::TargetTransform;

namespace {

model::ModelConfig small_model() {
    model::ModelConfig c;
    c.depth = 2;
    c.base_channels = 4;
    c.patch_px = 32;
    return c;
}

/// A trained network has non-trivial heads; perturb the zero-initialized
/// ones so outputs depend on the input.
model::RainNet<double> random_net(std::uint64_t seed) {
    model::RainNet<double> net(small_model(), seed);
    Rng rng(seed + 100);
    for (const auto& p : net.parameters()) {
        auto t = p.tensor;
        for (auto& v : t.value()) v += rng.uniform(-0.1, 0.1);
    }
    return net;
}

GeoRaster scene_with_constant_scalars(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
    synthetic::SceneParams p;
    p.seed = seed;
    p.rows = rows;
    p.cols = cols;
    p.cells = {3, 5};
    p.land_probability = 1.0;
    auto g = synthetic::generate_scene(p).sar;
    g.set(channel::kIncidence, FieldF::Constant(rows, cols, 36.0f));
    g.set(channel::kNesz, FieldF::Constant(rows, cols, -25.0f));
    g.set(channel::kWind, FieldF::Constant(rows, cols, 7.5f));
    return g;
}

}  // namespace

TEST_CASE("tile origins cover the scene at half-patch stride") {
    CHECK(tile_origins(32, 32) == std::vector<Eigen::Index>{0});
    CHECK(tile_origins(64, 32) == std::vector<Eigen::Index>{0, 16, 32});
    CHECK(tile_origins(70, 32) == std::vector<Eigen::Index>{0, 16, 32, 38});
    CHECK(tile_origins(33, 32) == std::vector<Eigen::Index>{0, 1});
    CHECK_THROWS_AS(tile_origins(31, 32), ShapeMismatch);
    for (Eigen::Index n = 32; n < 200; n += 7) {
        const auto o = tile_origins(n, 32);
        CHECK(o.front() == 0);
        CHECK(o.back() + 32 == n);
        for (std::size_t i = 1; i < o.size(); ++i) CHECK(o[i] - o[i - 1] <= 16);
    }
}

TEST_CASE("a scene of one patch equals a direct forward pass") {
    const auto net = random_net(1);
    synthetic::SceneParams p;
    p.seed = 4;
    p.rows = p.cols = 32;
    const auto scene = synthetic::generate_scene(p).sar;
    const auto tiled = infer_scene(net, TargetTransform::Log1p, scene, 32);
    const auto direct = forward_scene(net, TargetTransform::Log1p, scene);
    CHECK((tiled.rate == direct.rate).all());
    CHECK((tiled.probability == direct.probability).all());
    const auto cosine = infer_scene(net, TargetTransform::Log1p, scene, 32, Blend::Cosine);
    CHECK(((cosine.rate - direct.rate).abs() <= 1e-6f * direct.rate.abs().max(1.0f)).all());
}

namespace {

GeoRaster constant_scene(Eigen::Index rows, Eigen::Index cols) {
    GeoRaster g(rows, cols, 781.25, GeoTransform::north_up({30, -80}, 781.25));
    g.set(channel::kSsrVv, FieldF::Constant(rows, cols, 1.3f));
    g.set(channel::kSsrVh, FieldF::Constant(rows, cols, 2.0f));
    g.set(channel::kLandMask, FieldF::Ones(rows, cols));
    g.set(channel::kIncidence, FieldF::Constant(rows, cols, 33.0f));
    g.set(channel::kNesz, FieldF::Constant(rows, cols, -24.0f));
    g.set(channel::kWind, FieldF::Constant(rows, cols, 6.0f));
    return g;
}

GeoRaster crop(const GeoRaster& g, Eigen::Index r0, Eigen::Index c0, Eigen::Index h, Eigen::Index w) {
    GeoRaster t(h, w, g.resolution_m, g.transform);
    for (const auto& [name, f] : g.channels) t.set(name, f.block(r0, c0, h, w));
    return t;
}

}  // namespace

// Pooling and transposed convolutions make the response periodic in the
// total stride rather than constant.
TEST_CASE("a constant scene gives a stride-periodic output away from the zero padding") {
    const auto net = random_net(2);
    const Eigen::Index s = net.config().stride();
    const auto out = forward_scene(net, TargetTransform::Log1p, constant_scene(128, 128));
    const auto interior = out.rate.block(48, 48, 32, 32);
    CHECK((out.rate.block(48 + s, 48, 32, 32) == interior).all());
    CHECK((out.rate.block(48, 48 + s, 32, 32) == interior).all());
    CHECK(interior.minCoeff() > 0.0f);
}

TEST_CASE("blending a constant scene averages the single-tile response") {
    const auto net = random_net(2);
    const auto g = constant_scene(96, 80);
    const auto tile = forward_scene(net, TargetTransform::Log1p, crop(g, 0, 0, 32, 32)).rate;
    const auto rows = tile_origins(96, 32), cols = tile_origins(80, 32);
    for (Blend b : {Blend::Uniform, Blend::Cosine}) {
        const auto out = infer_scene(net, TargetTransform::Log1p, g, 32, b);
        double worst = 0.0;
        for (Eigen::Index r = 0; r < 96; ++r)
            for (Eigen::Index c = 0; c < 80; ++c) {
                double sum = 0.0, wsum = 0.0;
                for (auto r0 : rows)
                    for (auto c0 : cols) {
                        if (r < r0 || r >= r0 + 32 || c < c0 || c >= c0 + 32) continue;
                        auto win = [&](Eigen::Index i) {
                            if (b == Blend::Uniform) return 1.0;
                            const double s = std::sin(M_PI * (i + 0.5) / 32.0);
                            return s * s;
                        };
                        const double w = win(r - r0) * win(c - c0);
                        sum += w * tile(r - r0, c - c0);
                        wsum += w;
                    }
                worst = std::max(worst, std::abs(out.rate(r, c) - sum / wsum) / (1.0 + std::abs(sum / wsum)));
            }
        CHECK(worst < 1e-6);
    }
}

TEST_CASE("overlap blending tracks a full-scene forward pass better than disjoint tiles") {
    const auto net = random_net(3);
    const auto scene = scene_with_constant_scalars(96, 96, 12);
    const auto full = forward_scene(net, TargetTransform::Log1p, scene);
    const float scale = full.rate.abs().maxCoeff();
    REQUIRE(scale > 0.0f);

    FieldF disjoint(96, 96);
    for (Eigen::Index r = 0; r < 96; r += 32)
        for (Eigen::Index c = 0; c < 96; c += 32)
            disjoint.block(r, c, 32, 32) = forward_scene(net, TargetTransform::Log1p, crop(scene, r, c, 32, 32)).rate;
    const float disjoint_mean = (disjoint - full.rate).abs().mean() / scale;

    const auto uniform = infer_scene(net, TargetTransform::Log1p, scene, 32, Blend::Uniform);
    const auto cosine = infer_scene(net, TargetTransform::Log1p, scene, 32, Blend::Cosine);
    const float uniform_mean = (uniform.rate - full.rate).abs().mean() / scale;
    const float cosine_mean = (cosine.rate - full.rate).abs().mean() / scale;
    INFO("disjoint " << disjoint_mean << " uniform " << uniform_mean << " cosine " << cosine_mean);
    CHECK(uniform_mean < disjoint_mean);
    CHECK(cosine_mean < uniform_mean);
    CHECK((uniform.rate - full.rate).abs().maxCoeff() / scale < 0.5f);
}

TEST_CASE("inference rejects patches that do not fit the model") {
    const auto net = random_net(4);
    const auto scene = scene_with_constant_scalars(40, 40, 1);
    CHECK_THROWS_AS(infer_scene(net, TargetTransform::Log1p, scene, 18), ShapeMismatch);
    CHECK_THROWS_AS(infer_scene(net, TargetTransform::Log1p, scene, 64), ShapeMismatch);
    CHECK(blend_from_string("cosine") == Blend::Cosine);
    CHECK_THROWS_AS(blend_from_string("gauss"), ConfigError);
}
