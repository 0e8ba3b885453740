#include "rainsar/sampler.hpp"

#include <cstdlib>

#include "rainsar/error.hpp"

namespace rainsar::training {

BalancedSampler::BalancedSampler(const Pool& records, int per_class, bool merge_empty) : per_class_(per_class) {
    if (per_class < 1) throw ConfigError("per-class draw count must be >= 1");
    for (const auto* r : records) pools_.at(static_cast<std::size_t>(r->class_id)).push_back(r);
    for (int c = 0; c < dataset::kClassCount; ++c) {
        source_[c] = &pools_[c];
        if (!pools_[c].empty()) continue;
        const auto label = dataset::decompose(c);
        const std::string name = "class " + std::to_string(c) + " (wind class " + std::to_string(label.wind_class) +
                                 (label.rain_flag ? ", rain)" : ", no rain)");
        if (!merge_empty) throw EmptyClass(name + " has no records");
        int best = -1;
        for (int wc = 0; wc < dataset::kWindClasses; ++wc) {
            const int other = dataset::class_id(label.rain_flag, wc);
            if (pools_[other].empty()) continue;
            if (best < 0 || std::abs(wc - label.wind_class) < std::abs(dataset::decompose(best).wind_class - label.wind_class))
                best = other;
        }
        if (best < 0) throw EmptyClass(name + " has no records and no same-rain-flag class to merge with");
        source_[c] = &pools_[best];
        merges_.push_back(name + " is empty; drawing from class " + std::to_string(best));
    }
}

Pool BalancedSampler::sample(Rng& rng) const {
    Pool batch;
    batch.reserve(batch_size());
    for (const Pool* p : source_)
        for (int k = 0; k < per_class_; ++k) batch.push_back((*p)[rng.below(p->size())]);
    return batch;
}

}  // namespace rainsar::training
