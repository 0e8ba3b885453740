#include <cmath>

#include "../support.hpp"
#include "doctest.h"
#include "rainsar/error.hpp"
#include "rainsar/model.hpp"

using namespace rainsar;
using namespace rainsar::model;
using nn::Buffer;
using nn::Index;

namespace {

ModelConfig tiny(int depth = 1, int base = 2) {
    ModelConfig c;
    c.depth = depth;
    c.base_channels = base;
    c.disc_base = 2;
    c.disc_depth = 1;
    c.patch_px = 8;
    return c;
}

Tensor<double> scalars_for(Index n, Rng& rng) {
    Buffer<double> s(n * 3);
    for (Index i = 0; i < n; ++i) s.segment(3 * i, 3) << rng.uniform(25, 45), rng.uniform(-30, -20), rng.uniform(0, 20);
    return Tensor<double>({n, 3}, s);
}

/// Shifts every channel down and right by s pixels, filling with zeros.
Tensor<double> shifted(const Tensor<double>& x, Index s) {
    const Index n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    Buffer<double> out = Buffer<double>::Zero(x.numel());
    for (Index p = 0; p < n * c; ++p)
        for (Index r = 0; r + s < h; ++r)
            for (Index q = 0; q + s < w; ++q) out[(p * h + r + s) * w + q + s] = x.value()[(p * h + r) * w + q];
    return Tensor<double>(x.shape(), out);
}

}  // namespace

TEST_CASE("closed-form parameter counts") {
    // enc 56 + 38, bottleneck 184 + 148, up 34, dec 74 + 38, heads 3 + 3
    CHECK(generator_parameter_count(tiny()) == 578);
    CHECK(RainNet<double>(tiny(), 1).parameter_count() == 578);
    // 1 -> 2 strided 3x3 (20) and a 1x1 score (3)
    CHECK(discriminator_parameter_count(tiny()) == 23);
    CHECK(Discriminator<double>(tiny(), 1).parameter_count() == 23);

    for (int depth = 1; depth <= 4; ++depth)
        for (int base : {1, 4, 16}) {
            auto c = tiny(depth, base);
            c.disc_depth = depth;
            c.disc_base = base;
            c.patch_px = 16;
            CHECK(RainNet<float>(c, 0).parameter_count() == generator_parameter_count(c));
            CHECK(Discriminator<float>(c, 0).parameter_count() == discriminator_parameter_count(c));
        }

    auto custom = tiny(2, 4);
    custom.widths = {{3, 5}, {6, 7}, {8, 9}};
    CHECK(RainNet<float>(custom, 0).parameter_count() == generator_parameter_count(custom));
    CHECK(generator_parameter_count(ModelConfig{}) == RainNet<float>(ModelConfig{}, 0).parameter_count());
}

TEST_CASE("zero-initialized heads") {
    auto c = tiny(2, 4);
    c.zero_init_heads = true;
    RainNet<double> net(c, 3);
    Rng rng(1);
    const auto out = net.forward(testing::random_tensor<double>({2, 3, 8, 8}, rng, 0, 2, false), scalars_for(2, rng));
    CHECK((out.y_seg.value() == 0.5).all());
    CHECK((out.y_rr.value() == std::log(2.0)).all());

    Discriminator<double> d(c, 4, true);
    const auto score = d.forward(Tensor<double>::zeros({3, 1, 8, 8}));
    CHECK(score.shape() == nn::Shape{3});
    CHECK((score.value() == 0.0).all());
}

TEST_CASE("output shapes and ranges") {
    Rng rng(2);
    RainNet<double> net(tiny(2, 3), 5);
    const auto out = net.forward(testing::random_tensor<double>({3, 3, 16, 12}, rng, -3, 3, false), scalars_for(3, rng));
    CHECK(out.y_seg.shape() == nn::Shape{3, 1, 16, 12});
    CHECK(out.y_rr.shape() == nn::Shape{3, 1, 16, 12});
    CHECK((out.y_seg.value() > 0).all());
    CHECK((out.y_seg.value() < 1).all());
    CHECK((out.y_rr.value() >= 0).all());

    Discriminator<double> d(tiny(2, 3), 6);
    CHECK(d.forward(out.y_rr).shape() == nn::Shape{3});
}

TEST_CASE("forward rejects bad shapes") {
    Rng rng(3);
    RainNet<double> net(tiny(2, 2), 1);
    CHECK_THROWS_AS(net.forward(testing::random_tensor<double>({1, 3, 10, 8}, rng), scalars_for(1, rng)), ShapeMismatch);
    CHECK_THROWS_AS(net.forward(testing::random_tensor<double>({1, 2, 8, 8}, rng), scalars_for(1, rng)), ShapeMismatch);
    CHECK_THROWS_AS(net.forward(testing::random_tensor<double>({2, 3, 8, 8}, rng), scalars_for(1, rng)), ShapeMismatch);
    auto bad = tiny();
    bad.depth = 0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = tiny();
    bad.drop_inputs = {"rain"};
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("translation equivariance on the interior") {
    auto c = tiny(2, 4);
    RainNet<double> net(c, 9);
    Rng rng(4);
    const Index h = 96, s = c.stride(), margin = 32;
    const auto x = testing::random_tensor<double>({1, 3, h, h}, rng, 0, 2, false);
    const auto sc = scalars_for(1, rng);
    const auto a = net.forward(x, sc), b = net.forward(shifted(x, s), sc);
    long compared = 0;
    for (Index r = margin; r < h - s - margin; ++r)
        for (Index q = margin; q < h - s - margin; ++q) {
            CHECK(b.y_rr.value()[(r + s) * h + q + s] == a.y_rr.value()[r * h + q]);
            CHECK(b.seg_logits.value()[(r + s) * h + q + s] == a.seg_logits.value()[r * h + q]);
            ++compared;
        }
    CHECK(compared > 500);
}

TEST_CASE("fixed seed gives identical models and outputs") {
    Rng r1(7), r2(7);
    const auto x = testing::random_tensor<double>({2, 3, 8, 8}, r1, 0, 2, false);
    const auto sc = scalars_for(2, r1);
    const auto o1 = RainNet<double>(tiny(2, 2), 42).forward(x, sc);
    const auto o2 = RainNet<double>(tiny(2, 2), 42).forward(x, sc);
    const auto o3 = RainNet<double>(tiny(2, 2), 43).forward(x, sc);
    CHECK((o1.y_rr.value() == o2.y_rr.value()).all());
    CHECK_FALSE((o1.y_rr.value() == o3.y_rr.value()).all());
}

TEST_CASE("dropped inputs do not influence the output") {
    Rng rng(5);
    for (const auto& name : kInputNames) {
        auto c = tiny(1, 2);
        c.drop_inputs = {name};
        RainNet<double> net(c, 11);
        const auto x = testing::random_tensor<double>({1, 3, 4, 4}, rng, 0, 2, false);
        const auto sc = scalars_for(1, rng);
        auto x2 = Tensor<double>(x.shape(), x.value());
        auto sc2 = Tensor<double>(sc.shape(), sc.value());
        const std::size_t idx = static_cast<std::size_t>(&name - kInputNames.data());
        if (idx < 3)
            x2.value().segment(static_cast<Index>(idx) * 16, 16).setConstant(123.0);
        else
            sc2.value()[static_cast<Index>(idx) - 3] = 77.0;
        INFO(name);
        CHECK((net.forward(x, sc).y_rr.value() == net.forward(x2, sc2).y_rr.value()).all());
    }
}

TEST_CASE("model config json round trip") {
    auto c = tiny(3, 5);
    c.drop_inputs = {"vh", "wspd"};
    c.widths = {{1, 2}, {3, 4}, {5, 6}, {7, 8}};
    const auto back = ModelConfig::from_json(c.to_json());
    CHECK(back.to_json() == c.to_json());
    CHECK(back.stride() == 8);
}
