#pragma once

#include <array>
#include <string>
#include <vector>

#include "fleeg/common.hpp"

namespace fleeg {

// Ordered, named, shaped parameter arrays for one module (or a whole model).
// Two WeightSets are compatible iff names and shapes match entrywise; entry
// order is a function of the architecture alone.
struct WeightSet {
    struct Entry {
        std::string name;
        std::array<int, 4> dims{0, 0, 0, 0};
        std::vector<double> values;

        std::int64_t size() const {
            return std::int64_t(dims[0]) * dims[1] * dims[2] * dims[3];
        }
    };

    std::vector<Entry> entries;

    std::int64_t total_values() const {
        std::int64_t n = 0;
        for (const auto& e : entries) n += e.size();
        return n;
    }

    bool compatible_with(const WeightSet& o) const {
        if (entries.size() != o.entries.size()) return false;
        for (std::size_t i = 0; i < entries.size(); ++i)
            if (entries[i].name != o.entries[i].name || entries[i].dims != o.entries[i].dims)
                return false;
        return true;
    }

    // Throws CompatError naming the first mismatched entry.
    void require_compatible(const WeightSet& o, const char* what) const;

    bool bit_equal(const WeightSet& o) const;
};

// Element-wise theta - eta * grad over every entry; shapes must match.
WeightSet sgd_step(const WeightSet& weights, const WeightSet& grads, double eta);

}  // namespace fleeg
