#include <cstring>
#include <vector>

#include "doctest.h"
#include "fleeg/common.hpp"
#include "fleeg/kernels.hpp"

using namespace fleeg;

namespace {

std::vector<double> random_vec(std::size_t n, std::uint64_t key) {
    Rng rng(key);
    std::vector<double> v(n);
    for (double& x : v) x = rng.uniform(-2.0, 2.0);
    return v;
}

bool bit_equal(const std::vector<double>& a, const std::vector<double>& b) {
    return a.size() == b.size() &&
           (a.empty() || std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0);
}

}  // namespace

TEST_CASE("every SIMD backend is bit-identical to the scalar reference") {
    const auto& ref = kernels::scalar_backend();
    for (const kernels::Backend* be : kernels::available_backends()) {
        CAPTURE(be->name);
        // Sweep widths across and around the vector tile sizes.
        for (std::size_t n : {1, 2, 3, 5, 7, 8, 15, 16, 17, 31, 33, 64, 100, 991}) {
            for (std::size_t ntaps : {1, 2, 3, 4, 7, 10, 13, 17, 22, 23}) {
                for (std::size_t nrows : {1, 2, 5}) {
                    const std::uint64_t key = mix_key(42, {n, ntaps, nrows});
                    const std::size_t stride = n + ntaps + 3;
                    const auto in = random_vec(stride * nrows + ntaps, key);
                    const auto taps = random_vec(ntaps * nrows + 2, key + 1);
                    const auto go = random_vec(n, key + 2);

                    auto out_ref = random_vec(n, key + 3);
                    auto out_be = out_ref;
                    ref.conv_acc_rows(out_ref.data(), in.data(), stride, taps.data(), ntaps,
                                      nrows, ntaps, n);
                    be->conv_acc_rows(out_be.data(), in.data(), stride, taps.data(), ntaps,
                                      nrows, ntaps, n);
                    CHECK(bit_equal(out_ref, out_be));

                    auto acc_ref = random_vec(n, key + 4);
                    auto acc_be = acc_ref;
                    ref.acc_scaled(acc_ref.data(), in.data(), 0.37, n);
                    be->acc_scaled(acc_be.data(), in.data(), 0.37, n);
                    CHECK(bit_equal(acc_ref, acc_be));

                    auto taps_ref = random_vec(ntaps * nrows + 2, key + 5);
                    auto taps_be = taps_ref;
                    ref.grad_taps_rows(taps_ref.data(), ntaps, in.data(), stride, go.data(),
                                       nrows, ntaps, n);
                    be->grad_taps_rows(taps_be.data(), ntaps, in.data(), stride, go.data(),
                                       nrows, ntaps, n);
                    CHECK(bit_equal(taps_ref, taps_be));

                    auto dot_ref = random_vec(nrows, key + 6);
                    auto dot_be = dot_ref;
                    ref.dot8_rows(dot_ref.data(), go.data(), in.data(), stride, nrows, n);
                    be->dot8_rows(dot_be.data(), go.data(), in.data(), stride, nrows, n);
                    CHECK(bit_equal(dot_ref, dot_be));
                    const double s_ref = ref.row_sum8(in.data(), n);
                    const double s_be = be->row_sum8(in.data(), n);
                    CHECK(std::memcmp(&s_ref, &s_be, sizeof(double)) == 0);
                }
            }
        }
    }
}

TEST_CASE("kernel primitives compute what they claim") {
    const auto& k = kernels::scalar_backend();

    std::vector<double> out{1.0, 1.0, 1.0};
    std::vector<double> in{1.0, 2.0, 3.0, 4.0};
    std::vector<double> taps{1.0, 1.0};
    k.conv_acc_rows(out.data(), in.data(), 0, taps.data(), 0, 1, 2, 3);
    CHECK(out == std::vector<double>{4.0, 6.0, 8.0});

    // two rows, distinct taps: out[x] += 1*in[x] + 2*in[4+x]
    std::vector<double> rows_in{1, 2, 3, 0, 10, 20, 30, 0};
    std::vector<double> rows_taps{1.0, 2.0};
    std::vector<double> out2{0.0, 0.0, 0.0};
    k.conv_acc_rows(out2.data(), rows_in.data(), 4, rows_taps.data(), 1, 2, 1, 3);
    CHECK(out2 == std::vector<double>{21.0, 42.0, 63.0});

    std::vector<double> acc{1.0, 2.0};
    std::vector<double> src{10.0, 20.0};
    k.acc_scaled(acc.data(), src.data(), 0.5, 2);
    CHECK(acc == std::vector<double>{6.0, 12.0});

    std::vector<double> g{0.0, 0.0};
    std::vector<double> go{1.0, 0.0, 2.0};
    k.grad_taps_rows(g.data(), 2, in.data(), 0, go.data(), 1, 2, 3);
    // g[t] = sum_x go[x] * in[x+t]
    CHECK(g == std::vector<double>{1.0 + 2.0 * 3.0, 2.0 + 2.0 * 4.0});

    double dots[2] = {0.0, 1.0};
    k.dot8_rows(dots, rows_in.data(), rows_in.data(), 4, 2, 3);
    CHECK(dots[0] == 1.0 + 4.0 + 9.0);          // row 0 with itself
    CHECK(dots[1] == 1.0 + 10.0 + 40.0 + 90.0); // 1 + row0 . row1
    CHECK(k.row_sum8(in.data(), 4) == 10.0);
    CHECK(k.row_sum8(in.data(), 0) == 0.0);
}

TEST_CASE("backend selection") {
    const auto backends = kernels::available_backends();
    REQUIRE(!backends.empty());
    CHECK(std::string(backends.back()->name) == "scalar");
    CHECK_THROWS(kernels::set_backend("no-such-isa"));
}
