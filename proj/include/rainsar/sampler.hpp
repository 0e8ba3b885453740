#pragma once

#include <array>
#include <string>
#include <vector>

#include "rainsar/dataset.hpp"
#include "rainsar/rng.hpp"

namespace rainsar::training {

using Pool = std::vector<const dataset::PatchRecord*>;

/// Draws `per_class` records with replacement from each of the ten
/// wind/rain classes, in class order.
class BalancedSampler {
public:
    /// With `merge_empty`, an empty class borrows the pool of the nearest
    /// non-empty wind class with the same rain flag (lower class on ties)
    /// and the merge is reported in merges(). Otherwise, and when no such
    /// class exists, EmptyClass is thrown.
    BalancedSampler(const Pool& records, int per_class, bool merge_empty = false);

    Pool sample(Rng& rng) const;

    int per_class() const { return per_class_; }
    std::size_t batch_size() const { return static_cast<std::size_t>(per_class_) * dataset::kClassCount; }
    const Pool& pool(int class_id) const { return *source_[static_cast<std::size_t>(class_id)]; }
    const std::vector<std::string>& merges() const { return merges_; }

private:
    std::array<Pool, dataset::kClassCount> pools_;
    std::array<const Pool*, dataset::kClassCount> source_{};
    int per_class_;
    std::vector<std::string> merges_;
};

}  // namespace rainsar::training
