#include <cstring>

#include "doctest.h"
#include "fleeg/kernels.hpp"
#include "fleeg/model.hpp"
#include "oracles.hpp"

using namespace fleeg;

namespace {

PersonalizedModel table_model(const std::string& name, std::uint64_t seed = 1,
                              std::uint32_t client = 0) {
    const auto [larch, garch] = build_from_table(name);
    (void)garch;
    return build_model(table_format(name), larch, seed, 0, client);
}

}  // namespace

TEST_CASE("all nine models narrow to their fixed feature widths and (2,1,1) logits") {
    const int expected[] = {32, 32, 30, 32, 30, 32, 31, 32, 30};
    int i = 0;
    for (const std::string& name : table_names()) {
        CAPTURE(name);
        PersonalizedModel m = table_model(name);
        const DatasetFormat f = m.format;
        Tensor4 trial = oracles::random_tensor(1, 1, f.channels, f.trial_samples,
                                               1000 + i, -0.5, 0.5);
        ModelTape tape;
        Tensor4 logits = forward(m, trial, &tape);
        CHECK(logits.dims() == std::array<int, 4>{1, 2, 1, 1});
        CHECK(tape.p3.out_dims == std::array<int, 4>{1, 100, 1, expected[i]});
        ++i;
    }
}

TEST_CASE("global module narrows 32 -> 23 -> 7 -> 1") {
    PersonalizedModel m = table_model("KU");
    Tensor4 batch = oracles::random_tensor(2, 1, 62, 1000, 5, -0.5, 0.5);
    ModelTape tape;
    forward(m, batch, &tape);
    CHECK(tape.p4.in_dims == std::array<int, 4>{2, 200, 1, 23});
    CHECK(tape.p4.out_dims == std::array<int, 4>{2, 200, 1, 7});
    CHECK(tape.c6.input.dims() == std::array<int, 4>{2, 200, 1, 7});
}

TEST_CASE("KU model on a batch of four produces four probability rows") {
    PersonalizedModel m = table_model("KU");
    Tensor4 batch = oracles::random_tensor(4, 1, 62, 1000, 6, -0.5, 0.5);
    Tensor4 probs = predict_probs(m, batch);
    CHECK(probs.dims() == std::array<int, 4>{4, 2, 1, 1});
    for (int b = 0; b < 4; ++b)
        CHECK(probs.at(b, 0, 0, 0) + probs.at(b, 1, 0, 0) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("zero-initialized head predicts 0.5/0.5") {
    PersonalizedModel m = table_model("Murat2018");
    for (double& v : m.conv_head.kernels.values()) v = 0.0;
    Tensor4 trial = oracles::random_tensor(3, 1, 22, 200, 7, -0.5, 0.5);
    Tensor4 probs = predict_probs(m, trial);
    for (int b = 0; b < 3; ++b) {
        CHECK(probs.at(b, 0, 0, 0) == doctest::Approx(0.5).epsilon(1e-12));
        CHECK(probs.at(b, 1, 0, 0) == doctest::Approx(0.5).epsilon(1e-12));
    }
}

TEST_CASE("format mismatch is rejected with the offending layer named") {
    PersonalizedModel m = table_model("Murat2018");
    Tensor4 wrong = oracles::random_tensor(1, 1, 21, 200, 8);
    CHECK_THROWS_WITH_AS(forward(m, wrong), doctest::Contains("local.conv_temporal"), ShapeError);
}

TEST_CASE("split/replace round-trips bit-exactly") {
    PersonalizedModel m = table_model("Murat2018", 3);
    const auto [local, global] = split_weights(m);
    PersonalizedModel m2 = m;
    set_global_weights(m2, global);
    set_local_weights(m2, local);
    CHECK(all_weights(m2).bit_equal(all_weights(m)));

    WeightSet zeros = global;
    for (auto& e : zeros.entries) std::fill(e.values.begin(), e.values.end(), 0.0);
    set_global_weights(m2, zeros);
    Tensor4 trial = oracles::random_tensor(1, 1, 22, 200, 9, -0.5, 0.5);
    Tensor4 probs = predict_probs(m2, trial);
    CHECK(probs.at(0, 0, 0, 0) == doctest::Approx(0.5).epsilon(1e-12));

    WeightSet bad = global;
    bad.entries[0].dims[0] = 7;
    CHECK_THROWS_AS(set_global_weights(m2, bad), CompatError);
}

TEST_CASE("global weight shapes are format-independent") {
    PersonalizedModel a = table_model("KU", 1, 0);
    PersonalizedModel b = table_model("Shin2017", 2, 1);
    CHECK(global_weights(a).compatible_with(global_weights(b)));
    CHECK(!local_weights(a).compatible_with(local_weights(b)));
}

TEST_CASE("initialization is keyed: same keys bit-equal, client changes local only") {
    DatasetFormat f = table_format("Murat2018");
    const auto larch = build_from_table("Murat2018").first;
    PersonalizedModel m1 = build_model(f, larch, 5, 0, 0);
    PersonalizedModel m2 = build_model(f, larch, 5, 0, 0);
    CHECK(all_weights(m1).bit_equal(all_weights(m2)));

    PersonalizedModel other_client = build_model(f, larch, 5, 0, 1);
    CHECK(global_weights(other_client).bit_equal(global_weights(m1)));
    CHECK(!local_weights(other_client).bit_equal(local_weights(m1)));

    PersonalizedModel other_fold = build_model(f, larch, 5, 1, 0);
    CHECK(!global_weights(other_fold).bit_equal(global_weights(m1)));
}

TEST_CASE("full-model gradients match finite differences on five seeds") {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        CAPTURE(seed);
        DatasetFormat f{"tiny", 4, 100.0, 122, 2, 8};
        PersonalizedModel m = build_model(f, seed, 0, 0);
        Tensor4 batch = oracles::random_tensor(2, 1, 4, 122, 9000 + seed, -1.0, 1.0);
        const int labels[] = {0, 1};
        CHECK(finite_diff_check(m, batch, labels, 1e-5, seed, 400) < 1e-4);
    }
}

TEST_CASE("model tape is single-use") {
    PersonalizedModel m = table_model("Murat2018");
    Tensor4 trial = oracles::random_tensor(1, 1, 22, 200, 10, -0.5, 0.5);
    ModelTape tape;
    Tensor4 logits = forward(m, trial, &tape);
    const int labels[] = {1};
    auto sm = softmax_cross_entropy(logits, labels);
    backward(m, tape, sm.grad_logits);
    CHECK_THROWS_AS(backward(m, tape, sm.grad_logits), ContractError);
}

TEST_CASE("forward and backward are bit-identical across kernel backends") {
    DatasetFormat f{"tiny", 5, 100.0, 150, 2, 8};
    Tensor4 batch = oracles::random_tensor(3, 1, 5, 150, 4242, -1.0, 1.0);
    const int labels[] = {0, 1, 1};

    struct Snapshot {
        Tensor4 logits;
        WeightSet stepped;
    };
    std::vector<Snapshot> runs;
    for (const auto* be : kernels::available_backends()) {
        kernels::set_backend(be->name);
        PersonalizedModel m = build_model(f, 99, 0, 0);
        ModelTape tape;
        Tensor4 logits = forward(m, batch, &tape);
        auto sm = softmax_cross_entropy(logits, labels);
        ModelGrads g = backward(m, tape, sm.grad_logits);
        sgd_apply(m, g, 0.05);
        runs.push_back({logits, all_weights(m)});
    }
    kernels::set_backend(kernels::available_backends().front()->name);
    for (std::size_t i = 1; i < runs.size(); ++i) {
        CHECK(std::memcmp(runs[0].logits.data(), runs[i].logits.data(),
                          sizeof(double) * runs[0].logits.size()) == 0);
        CHECK(runs[0].stepped.bit_equal(runs[i].stepped));
    }
}

TEST_CASE("architecture summary walks the expected shapes") {
    const auto [larch, garch] = build_from_table("KU");
    std::string s = arch_summary(larch, garch, 1000);
    CHECK(s.find("local.conv_temporal") != std::string::npos);
    CHECK(s.find("out=(100,1,32)") != std::string::npos);
    CHECK(s.find("out=(2,1,1)") != std::string::npos);
}
