#include <map>

#include "../support.hpp"
#include "doctest.h"
#include "rainsar/error.hpp"
#include "rainsar/sampler.hpp"

using namespace rainsar;
using namespace rainsar::training;

namespace {

std::vector<dataset::PatchRecord> records_with_sizes(const std::array<int, dataset::kClassCount>& sizes) {
    std::vector<dataset::PatchRecord> out;
    for (int c = 0; c < dataset::kClassCount; ++c)
        for (int k = 0; k < sizes[c]; ++k) out.push_back(testing::make_record("IW" + std::to_string(c), c));
    return out;
}

Pool pointers(const std::vector<dataset::PatchRecord>& v) {
    Pool p;
    for (const auto& r : v) p.push_back(&r);
    return p;
}

}  // namespace

TEST_CASE("batches hold per_class draws of every class in class order") {
    const auto recs = records_with_sizes({3, 5, 7, 2, 9, 1, 4, 6, 8, 50});
    const BalancedSampler s(pointers(recs), 2);
    CHECK(s.batch_size() == 20);
    Rng rng(5);
    std::array<long, dataset::kClassCount> totals{};
    for (int b = 0; b < 10000; ++b) {
        const auto batch = s.sample(rng);
        REQUIRE(batch.size() == 20);
        for (std::size_t i = 0; i < batch.size(); ++i) {
            CHECK(batch[i]->class_id == static_cast<int>(i / 2));
            ++totals[static_cast<std::size_t>(batch[i]->class_id)];
        }
    }
    for (long t : totals) CHECK(t == 20000);
}

TEST_CASE("single-record class is drawn twice") {
    const auto recs = records_with_sizes({1, 1, 1, 1, 1, 1, 1, 1, 1, 1});
    const BalancedSampler s(pointers(recs), 2);
    Rng rng(1);
    const auto batch = s.sample(rng);
    for (int c = 0; c < dataset::kClassCount; ++c) {
        CHECK(batch[2 * c] == &recs[static_cast<std::size_t>(c)]);
        CHECK(batch[2 * c + 1] == &recs[static_cast<std::size_t>(c)]);
    }
}

TEST_CASE("within-class draws are uniform") {
    const auto recs = records_with_sizes({2, 2, 2, 2, 2, 2, 2, 2, 2, 50});
    const BalancedSampler s(pointers(recs), 2);
    std::map<const dataset::PatchRecord*, double> counts;
    Rng rng(123);
    for (int b = 0; b < 10000; ++b)
        for (const auto* r : s.sample(rng))
            if (r->class_id == 9) counts[r] += 1.0;
    REQUIRE(counts.size() == 50);
    std::vector<double> observed;
    for (const auto& [r, n] : counts) observed.push_back(n);
    CHECK(testing::chi_square_p(observed, 20000.0 / 50.0) > 0.01);
}

TEST_CASE("chi-square p-value helper") {
    // Q(k/2, x/2) for k = 2 is exp(-x/2)
    CHECK(testing::gamma_q(1.0, 1.5) == doctest::Approx(std::exp(-1.5)).epsilon(1e-12));
    CHECK(testing::gamma_q(1.0, 30.0) == doctest::Approx(std::exp(-30.0)).epsilon(1e-10));
    // chi-square 95th percentile with 49 degrees of freedom is 66.339
    CHECK(testing::gamma_q(24.5, 66.3386 / 2) == doctest::Approx(0.05).epsilon(1e-3));
    CHECK(testing::chi_square_p({10, 10, 10}, 10) == doctest::Approx(1.0));
}

TEST_CASE("empty classes") {
    const auto recs = records_with_sizes({3, 0, 2, 2, 2, 2, 2, 2, 0, 0});
    CHECK_THROWS_AS(BalancedSampler(pointers(recs), 2), EmptyClass);

    const BalancedSampler merged(pointers(recs), 2, true);
    REQUIRE(merged.merges().size() == 3);
    CHECK(merged.pool(1).front()->class_id == 0);  // tie between wind classes 0 and 2 goes low
    CHECK(merged.pool(8).front()->class_id == 7);
    CHECK(merged.pool(9).front()->class_id == 7);
    Rng rng(0);
    CHECK(merged.sample(rng).size() == 20);

    const auto no_rain = records_with_sizes({1, 1, 1, 1, 1, 0, 0, 0, 0, 0});
    CHECK_THROWS_AS(BalancedSampler(pointers(no_rain), 2, true), EmptyClass);
    CHECK_THROWS_AS(BalancedSampler(pointers(no_rain), 0), ConfigError);
}

TEST_CASE("sampling is seeded") {
    const auto recs = records_with_sizes({4, 4, 4, 4, 4, 4, 4, 4, 4, 4});
    const BalancedSampler s(pointers(recs), 2);
    Rng a(9), b(9);
    for (int i = 0; i < 50; ++i) CHECK(s.sample(a) == s.sample(b));
}
