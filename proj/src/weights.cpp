#include "fleeg/weights.hpp"

#include "fleeg/kernels.hpp"

namespace fleeg {

void WeightSet::require_compatible(const WeightSet& o, const char* what) const {
    if (entries.size() != o.entries.size())
        throw CompatError(std::string(what) + ": entry count mismatch (" +
                          std::to_string(entries.size()) + " vs " +
                          std::to_string(o.entries.size()) + ")");
    for (std::size_t i = 0; i < entries.size(); ++i) {
        const auto& a = entries[i];
        const auto& b = o.entries[i];
        if (a.name != b.name)
            throw CompatError(std::string(what) + ": entry " + std::to_string(i) + " name '" +
                              a.name + "' vs '" + b.name + "'");
        if (a.dims != b.dims)
            throw CompatError(std::string(what) + ": entry '" + a.name + "' shape mismatch");
    }
}

bool WeightSet::bit_equal(const WeightSet& o) const {
    if (!compatible_with(o)) return false;
    for (std::size_t i = 0; i < entries.size(); ++i)
        if (entries[i].values != o.entries[i].values) return false;
    return true;
}

WeightSet sgd_step(const WeightSet& weights, const WeightSet& grads, double eta) {
    weights.require_compatible(grads, "sgd_step");
    WeightSet out = weights;
    const auto& k = kernels::active();
    for (std::size_t i = 0; i < out.entries.size(); ++i) {
        auto& e = out.entries[i];
        k.acc_scaled(e.values.data(), grads.entries[i].values.data(), -eta, e.values.size());
    }
    return out;
}

}  // namespace fleeg
