#pragma once

#include <array>
#include <cassert>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "fleeg/common.hpp"

namespace fleeg {

// Dense 4-D array of doubles, row-major with layout (batch, maps, height, width),
// batch outermost and width innermost. All values are finite by contract;
// constructors that take data enforce it, hot-path ops re-check in debug builds.
class Tensor4 {
public:
    Tensor4() : dims_{0, 0, 0, 0} {}

    Tensor4(int b, int m, int h, int w, std::vector<double> values)
        : dims_{b, m, h, w}, v_(std::move(values)) {
        if (static_cast<std::size_t>(size()) != v_.size())
            throw ShapeError("Tensor4: " + dims_str() + " needs " + std::to_string(size()) +
                             " values, got " + std::to_string(v_.size()));
        check_finite("Tensor4 constructor");
    }

    static Tensor4 zeros(int b, int m, int h, int w) {
        Tensor4 t;
        t.dims_ = {b, m, h, w};
        t.v_.assign(static_cast<std::size_t>(t.size()), 0.0);
        return t;
    }

    int batch() const { return dims_[0]; }
    int maps() const { return dims_[1]; }
    int height() const { return dims_[2]; }
    int width() const { return dims_[3]; }
    const std::array<int, 4>& dims() const { return dims_; }

    std::int64_t size() const {
        return std::int64_t(dims_[0]) * dims_[1] * dims_[2] * dims_[3];
    }

    std::size_t index(int b, int m, int h, int w) const {
        assert(b >= 0 && b < dims_[0] && m >= 0 && m < dims_[1]);
        assert(h >= 0 && h < dims_[2] && w >= 0 && w < dims_[3]);
        return ((std::size_t(b) * dims_[1] + m) * dims_[2] + h) * dims_[3] + w;
    }

    double at(int b, int m, int h, int w) const { return v_[index(b, m, h, w)]; }
    double& at(int b, int m, int h, int w) { return v_[index(b, m, h, w)]; }

    double* row(int b, int m, int h) { return v_.data() + index(b, m, h, 0); }
    const double* row(int b, int m, int h) const { return v_.data() + index(b, m, h, 0); }

    double* data() { return v_.data(); }
    const double* data() const { return v_.data(); }
    const std::vector<double>& values() const { return v_; }
    std::vector<double>& values() { return v_; }

    bool same_dims(const Tensor4& o) const { return dims_ == o.dims_; }

    std::string dims_str() const {
        return "(" + std::to_string(dims_[0]) + "," + std::to_string(dims_[1]) + "," +
               std::to_string(dims_[2]) + "," + std::to_string(dims_[3]) + ")";
    }

    void check_finite(const char* where) const {
        for (double x : v_)
            if (!std::isfinite(x))
                throw ContractError(std::string(where) + ": non-finite value in tensor " +
                                    dims_str());
    }

#ifdef FLEEG_DEBUG_CHECKS
    void debug_check(const char* where) const { check_finite(where); }
#else
    void debug_check(const char*) const {}
#endif

private:
    std::array<int, 4> dims_;
    std::vector<double> v_;
};

}  // namespace fleeg
