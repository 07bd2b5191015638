#include <cmath>
#include <cstring>

#include "doctest.h"
#include "fleeg/nn.hpp"
#include "oracles.hpp"

using namespace fleeg;

namespace {

ConvLayer make_layer(int o, int i, int kh, int kw, std::uint64_t key, double bias = 0.0) {
    ConvLayer l;
    l.kernels = oracles::random_tensor(o, i, kh, kw, key);
    l.bias.assign(o, bias);
    return l;
}

// Loss = sum(output * probe) turns any layer into a scalar target whose
// output gradient is the probe itself.
double weighted_sum(const Tensor4& out, const Tensor4& probe) {
    double s = 0.0;
    for (std::int64_t i = 0; i < out.size(); ++i) s += out.data()[i] * probe.data()[i];
    return s;
}

}  // namespace

TEST_CASE("conv forward: direct summation examples") {
    Tensor4 in(1, 1, 1, 4, {1, 2, 3, 4});
    ConvLayer l;
    l.kernels = Tensor4(1, 1, 1, 2, {1, 1});
    l.bias = {0.0};
    Tensor4 out = conv2d_forward(in, l);
    CHECK(out.dims() == std::array<int, 4>{1, 1, 1, 3});
    CHECK(out.values() == std::vector<double>{3, 5, 7});
}

TEST_CASE("conv forward: temporal filter output shape on a 62x1000 trial") {
    Tensor4 in = oracles::random_tensor(1, 1, 62, 1000, 11);
    ConvLayer l = make_layer(25, 1, 1, 10, 12);
    Tensor4 out = conv2d_forward(in, l);
    CHECK(out.dims() == std::array<int, 4>{1, 25, 62, 991});
}

TEST_CASE("conv forward matches the quadruple-loop oracle") {
    Tensor4 in = oracles::random_tensor(2, 3, 5, 8, 7);
    ConvLayer l = make_layer(4, 3, 2, 3, 8, 0.25);
    Tensor4 out = conv2d_forward(in, l);
    Tensor4 expect = oracles::naive_conv2d(in, l.kernels, l.bias);
    CHECK(out.dims() == expect.dims());
    CHECK(oracles::max_rel_diff(out, expect) < 1e-13);
}

TEST_CASE("conv forward: shape errors name both shapes") {
    Tensor4 in = oracles::random_tensor(1, 2, 4, 4, 3);
    ConvLayer l = make_layer(1, 3, 2, 2, 4);
    CHECK_THROWS_WITH_AS(conv2d_forward(in, l), doctest::Contains("(1,2,4,4)"), ShapeError);
    ConvLayer big = make_layer(1, 2, 5, 2, 5);
    CHECK_THROWS_AS(conv2d_forward(in, big), ShapeError);
}

TEST_CASE("conv backward: zero grad_out gives zero gradients") {
    Tensor4 in = oracles::random_tensor(2, 2, 3, 6, 21);
    ConvLayer l = make_layer(3, 2, 2, 2, 22);
    ConvTape tape;
    Tensor4 out = conv2d_forward(in, l, &tape);
    Tensor4 gi;
    ConvGrads g = conv2d_backward(l, tape, Tensor4::zeros(2, 3, 2, 5), &gi);
    for (double v : g.kernels.values()) CHECK(v == 0.0);
    for (double v : g.bias) CHECK(v == 0.0);
    for (double v : gi.values()) CHECK(v == 0.0);
    (void)out;
}

TEST_CASE("conv backward: hand-computed 1-D chain rule") {
    Tensor4 in(1, 1, 1, 4, {1, 2, 3, 4});
    ConvLayer l;
    l.kernels = Tensor4(1, 1, 1, 2, {1, 1});
    l.bias = {0.0};
    ConvTape tape;
    conv2d_forward(in, l, &tape);
    Tensor4 gi;
    ConvGrads g = conv2d_backward(l, tape, Tensor4(1, 1, 1, 3, {1, 0, 0}), &gi);
    CHECK(g.kernels.values() == std::vector<double>{1, 2});
    CHECK(g.bias == std::vector<double>{1});
    CHECK(gi.values() == std::vector<double>{1, 1, 0, 0});
}

TEST_CASE("conv backward matches finite differences") {
    Tensor4 in = oracles::random_tensor(2, 2, 3, 9, 31);
    ConvLayer l = make_layer(3, 2, 2, 4, 32, 0.1);
    Tensor4 probe = oracles::random_tensor(2, 3, 2, 6, 33);

    Tensor4 gi;
    ConvGrads analytic;
    {
        ConvTape tape;
        conv2d_forward(in, l, &tape);
        analytic = conv2d_backward(l, tape, probe, &gi);
    }
    FdProblem p;
    p.params = {{l.kernels.values().data(), l.kernels.values().size()},
                {l.bias.data(), l.bias.size()},
                {in.values().data(), in.values().size()}};
    p.loss = [&] { return weighted_sum(conv2d_forward(in, l), probe); };
    p.flat_grads = [&] {
        std::vector<double> flat(analytic.kernels.values().begin(),
                                 analytic.kernels.values().end());
        flat.insert(flat.end(), analytic.bias.begin(), analytic.bias.end());
        flat.insert(flat.end(), gi.values().begin(), gi.values().end());
        return flat;
    };
    CHECK(finite_diff_check(p, 1e-5) < 1e-6);
}

TEST_CASE("conv backward is exactly linear in grad_out for power-of-two scales") {
    Tensor4 in = oracles::random_tensor(1, 2, 4, 7, 41);
    ConvLayer l = make_layer(2, 2, 2, 3, 42);
    Tensor4 go = oracles::random_tensor(1, 2, 3, 5, 43);
    Tensor4 go2 = go;
    for (double& v : go2.values()) v *= 2.0;

    ConvTape t1, t2;
    conv2d_forward(in, l, &t1);
    conv2d_forward(in, l, &t2);
    Tensor4 gi1, gi2;
    ConvGrads g1 = conv2d_backward(l, t1, go, &gi1);
    ConvGrads g2 = conv2d_backward(l, t2, go2, &gi2);
    for (std::int64_t i = 0; i < g1.kernels.size(); ++i)
        CHECK(2.0 * g1.kernels.data()[i] == g2.kernels.data()[i]);
    for (std::size_t i = 0; i < g1.bias.size(); ++i) CHECK(2.0 * g1.bias[i] == g2.bias[i]);
    for (std::int64_t i = 0; i < gi1.size(); ++i) CHECK(2.0 * gi1.data()[i] == gi2.data()[i]);
}

TEST_CASE("conv tape is single-use and validates grad shape") {
    Tensor4 in = oracles::random_tensor(1, 1, 2, 4, 51);
    ConvLayer l = make_layer(1, 1, 1, 2, 52);
    ConvTape tape;
    conv2d_forward(in, l, &tape);
    CHECK_THROWS_AS(conv2d_backward(l, tape, Tensor4::zeros(1, 1, 1, 1)), ContractError);
    // first failure already consumed the tape
    CHECK_THROWS_WITH_AS(conv2d_backward(l, tape, Tensor4::zeros(1, 1, 2, 3)),
                         doctest::Contains("consumed"), ContractError);
}

TEST_CASE("maxpool forward: window, truncation, argmax") {
    Tensor4 in(1, 1, 1, 3, {3, 5, 7});
    Tensor4 out = maxpool_forward(in, {1, 3});
    CHECK(out.values() == std::vector<double>{7});

    Tensor4 wide = oracles::random_tensor(1, 1, 1, 98, 61);
    CHECK(maxpool_forward(wide, {1, 3}).width() == 32);
    Tensor4 wider = oracles::random_tensor(1, 1, 1, 991, 62);
    CHECK(maxpool_forward(wider, {1, 5}).width() == 198);

    CHECK_THROWS_AS(maxpool_forward(in, {1, 0}), ContractError);
    CHECK_THROWS_AS(maxpool_forward(in, {2, 1}), ContractError);
}

TEST_CASE("maxpool backward: ties route to the lowest flat index") {
    Tensor4 in(1, 1, 1, 3, {2, 2, 2});
    PoolTape tape;
    maxpool_forward(in, {1, 3}, &tape);
    Tensor4 gi = maxpool_backward({1, 3}, tape, Tensor4(1, 1, 1, 1, {1.0}));
    CHECK(gi.values() == std::vector<double>{1, 0, 0});
}

TEST_CASE("maxpool backward: zeros propagate and FD agrees away from ties") {
    Tensor4 in = oracles::random_tensor(2, 3, 2, 12, 71);
    PoolTape tape;
    Tensor4 out = maxpool_forward(in, {2, 3}, &tape);
    {
        PoolTape t2;
        maxpool_forward(in, {2, 3}, &t2);
        Tensor4 gi = maxpool_backward({2, 3}, t2, Tensor4::zeros(2, 3, 1, 4));
        for (double v : gi.values()) CHECK(v == 0.0);
    }
    Tensor4 probe = oracles::random_tensor(2, 3, 1, 4, 72);
    Tensor4 analytic_gi = maxpool_backward({2, 3}, tape, probe);
    FdProblem p;
    p.params = {{in.values().data(), in.values().size()}};
    p.loss = [&] { return weighted_sum(maxpool_forward(in, {2, 3}), probe); };
    p.flat_grads = [&] {
        return std::vector<double>(analytic_gi.values().begin(), analytic_gi.values().end());
    };
    // random doubles: tie probability is zero, eps stays below any gap
    CHECK(finite_diff_check(p, 1e-7) < 1e-6);
    (void)out;
}

TEST_CASE("elu: closed-form values and finite differences") {
    Tensor4 in(1, 1, 1, 3, {0.0, 1.0, -1.0});
    Tensor4 out = elu_forward(in);
    CHECK(out.values()[0] == 0.0);
    CHECK(out.values()[1] == 1.0);
    CHECK(out.values()[2] == doctest::Approx(std::exp(-1.0) - 1.0).epsilon(1e-12));

    Tensor4 x = oracles::random_tensor(2, 2, 3, 5, 81, -3.0, 3.0);
    Tensor4 probe = oracles::random_tensor(2, 2, 3, 5, 82);
    EluTape tape;
    elu_forward(x, &tape);
    Tensor4 gi = elu_backward(tape, probe);
    FdProblem p;
    p.params = {{x.values().data(), x.values().size()}};
    p.loss = [&] { return weighted_sum(elu_forward(x), probe); };
    p.flat_grads = [&] {
        return std::vector<double>(gi.values().begin(), gi.values().end());
    };
    CHECK(finite_diff_check(p, 1e-5) < 1e-6);
}

TEST_CASE("softmax cross-entropy: values, stabilization, gradient") {
    Tensor4 logits(1, 2, 1, 1, {0.0, 0.0});
    int labels0[] = {0};
    auto r = softmax_cross_entropy(logits, labels0);
    CHECK(r.loss == doctest::Approx(std::log(2.0)).epsilon(1e-15));
    CHECK(r.probs.at(0, 0, 0, 0) == doctest::Approx(0.5));
    CHECK(r.probs.at(0, 1, 0, 0) == doctest::Approx(0.5));

    Tensor4 big(1, 2, 1, 1, {1000.0, 0.0});
    auto rb = softmax_cross_entropy(big, labels0);
    CHECK(rb.loss >= 0.0);
    CHECK(rb.loss < 1e-12);
    CHECK(std::isfinite(rb.probs.at(0, 1, 0, 0)));

    int bad[] = {2};
    CHECK_THROWS_AS(softmax_cross_entropy(logits, bad), ContractError);

    // per-sample probabilities sum to 1; loss is non-negative
    Tensor4 batch = oracles::random_tensor(16, 2, 1, 1, 91, -4.0, 4.0);
    std::vector<int> labels(16);
    for (int i = 0; i < 16; ++i) labels[i] = i % 2;
    auto rr = softmax_cross_entropy(batch, labels);
    CHECK(rr.loss >= 0.0);
    for (int b = 0; b < 16; ++b)
        CHECK(std::abs(rr.probs.at(b, 0, 0, 0) + rr.probs.at(b, 1, 0, 0) - 1.0) < 1e-12);

    FdProblem p;
    p.params = {{batch.values().data(), batch.values().size()}};
    p.loss = [&] { return softmax_cross_entropy(batch, labels).loss; };
    p.flat_grads = [&] {
        auto g = softmax_cross_entropy(batch, labels).grad_logits;
        return std::vector<double>(g.values().begin(), g.values().end());
    };
    CHECK(finite_diff_check(p, 1e-5) < 1e-6);
}

TEST_CASE("finite_diff_check rejects non-positive epsilon") {
    FdProblem p;
    double x = 1.0;
    p.params = {{&x, 1}};
    p.loss = [&] { return x * x; };
    p.flat_grads = [&] { return std::vector<double>{2.0 * x}; };
    CHECK_THROWS_AS(finite_diff_check(p, 0.0), ContractError);
    CHECK_THROWS_AS(finite_diff_check(p, -1e-5), ContractError);
    CHECK(finite_diff_check(p, 1e-6) < 1e-9);
}

TEST_CASE("shape algebra holds for random conv/pool stacks") {
    Rng rng(123);
    for (int trial = 0; trial < 50; ++trial) {
        const int h = 1 + int(rng.bounded(6)), w = 8 + int(rng.bounded(60));
        const int kh = 1 + int(rng.bounded(h)), kw = 1 + int(rng.bounded(5));
        const int ph = 1 + int(rng.bounded(2)), pw = 1 + int(rng.bounded(4));
        Tensor4 in = oracles::random_tensor(1, 2, h, w, 1000 + trial);
        ConvLayer l = make_layer(3, 2, kh, kw, 2000 + trial);
        Tensor4 c = conv2d_forward(in, l);
        CHECK(c.height() == h - kh + 1);
        CHECK(c.width() == w - kw + 1);
        if (ph <= c.height() && pw <= c.width()) {
            Tensor4 pooled = maxpool_forward(c, {ph, pw});
            CHECK(pooled.height() == c.height() / ph);
            CHECK(pooled.width() == c.width() / pw);
        }
    }
}

TEST_CASE("identical inputs give bit-identical results across repeated runs") {
    Tensor4 in = oracles::random_tensor(2, 3, 4, 20, 777);
    ConvLayer l = make_layer(4, 3, 2, 5, 778, 0.03);
    Tensor4 a = conv2d_forward(in, l);
    Tensor4 b = conv2d_forward(in, l);
    CHECK(std::memcmp(a.data(), b.data(), sizeof(double) * a.size()) == 0);
}
