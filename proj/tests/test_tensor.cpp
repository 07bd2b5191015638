#include <limits>

#include "doctest.h"
#include "fleeg/tensor.hpp"
#include "fleeg/weights.hpp"

using namespace fleeg;

TEST_CASE("tensor layout is row-major, width innermost") {
    Tensor4 t = Tensor4::zeros(2, 3, 4, 5);
    CHECK(t.size() == 120);
    t.at(1, 2, 3, 4) = 7.0;
    CHECK(t.values().back() == 7.0);
    CHECK(t.index(0, 0, 1, 0) == 5);
    CHECK(t.index(0, 1, 0, 0) == 20);
    CHECK(t.index(1, 0, 0, 0) == 60);
}

TEST_CASE("construction rejects wrong length and non-finite values") {
    CHECK_THROWS_AS(Tensor4(1, 1, 1, 3, {1.0, 2.0}), ShapeError);
    CHECK_THROWS_AS(Tensor4(1, 1, 1, 2, {1.0, std::numeric_limits<double>::quiet_NaN()}),
                    ContractError);
    CHECK_THROWS_AS(Tensor4(1, 1, 1, 2, {1.0, std::numeric_limits<double>::infinity()}),
                    ContractError);
}

TEST_CASE("weight set compatibility names the first mismatch") {
    WeightSet a, b;
    a.entries.push_back({"w", {1, 1, 1, 2}, {0.0, 1.0}});
    b.entries.push_back({"w", {1, 1, 2, 1}, {0.0, 1.0}});
    CHECK(!a.compatible_with(b));
    CHECK_THROWS_WITH_AS(a.require_compatible(b, "test"),
                         doctest::Contains("entry 'w' shape mismatch"), CompatError);
    b.entries[0].dims = {1, 1, 1, 2};
    CHECK(a.compatible_with(b));
    CHECK(a.bit_equal(b));
}

TEST_CASE("weight-set sgd step") {
    WeightSet w, g;
    w.entries.push_back({"w", {1, 1, 1, 1}, {1.0}});
    g.entries.push_back({"w", {1, 1, 1, 1}, {0.5}});
    CHECK(sgd_step(w, g, 0.1).entries[0].values[0] == doctest::Approx(0.95).epsilon(1e-15));
    CHECK(sgd_step(w, g, 0.0).entries[0].values == w.entries[0].values);
    g.entries[0].values[0] = 0.0;
    CHECK(sgd_step(w, g, 0.1).entries[0].values == w.entries[0].values);
    g.entries[0].dims = {2, 1, 1, 1};
    CHECK_THROWS_AS(sgd_step(w, g, 0.1), CompatError);
}
