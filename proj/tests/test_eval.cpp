#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "fleeg/eval.hpp"

using namespace fleeg;

namespace {

TrialStore tiny_store(std::uint64_t seed, int subjects = 2, int trials = 8) {
    SynthSpec s;
    s.format = {"tiny", 4, 100.0, 122, subjects, trials};
    s.class0_channels = {1};
    s.class1_channels = {2};
    s.erd_depth = 0.8;
    s.noise = 0.3;
    s.seed = seed;
    return generate(s);
}

std::vector<std::size_t> all_indices(const TrialStore& s) {
    std::vector<std::size_t> idx(s.n_trials());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    return idx;
}

}  // namespace

TEST_CASE("accuracy: tie rule, perfect predictions, and a 3-of-4 case") {
    TrialStore store = tiny_store(1);
    PersonalizedModel model = build_model(store.format, 5, 0, 0);
    const auto idx = all_indices(store);

    // zero head -> probs (0.5, 0.5) -> ties predict class 0
    PersonalizedModel uniform = model;
    for (double& v : uniform.conv_head.kernels.values()) v = 0.0;
    std::size_t zeros = 0;
    for (auto l : store.label) zeros += l == 0;
    CHECK(accuracy(uniform, store, idx) ==
          doctest::Approx(double(zeros) / double(idx.size())));

    // relabeling trials to the model's own predictions makes it perfect
    TrialStore echo = store;
    for (std::size_t i = 0; i < echo.n_trials(); ++i) {
        const Tensor4 probs = predict_probs(model, echo.trial_tensor(i));
        echo.label[i] = probs.at(0, 1, 0, 0) > probs.at(0, 0, 0, 0) ? 1 : 0;
    }
    // keep the store valid: both classes per subject are not needed here,
    // accuracy only reads labels
    std::vector<std::size_t> ten(idx.begin(), idx.begin() + 10);
    CHECK(accuracy(model, echo, ten) == 1.0);

    std::vector<std::size_t> four(idx.begin(), idx.begin() + 4);
    echo.label[2] ^= 1;  // flip one of the four
    CHECK(accuracy(model, echo, four) == 0.75);

    CHECK_THROWS_AS(accuracy(model, store, {}), ContractError);
}

TEST_CASE("improvement is the relative gain over baseline") {
    CHECK(improvement(0.5, 0.5) == 0.0);
    CHECK(improvement(0.6, 0.5) == doctest::Approx(0.2).epsilon(1e-12));
    // reported dataset-level values are outputs of this quotient
    CHECK(improvement(0.62 * 1.1670, 0.62) == doctest::Approx(0.1670).epsilon(1e-9));
    CHECK(improvement(0.71 * 0.9970, 0.71) == doctest::Approx(-0.0030).epsilon(1e-9));
    CHECK(improvement(0.7, 0.5) > improvement(0.6, 0.5));  // monotone in acc_fl
    CHECK_THROWS_AS(improvement(0.5, 0.0), ContractError);
}

TEST_CASE("saliency: zeroed spatial weights silence a channel") {
    TrialStore store = tiny_store(3);
    PersonalizedModel model = build_model(store.format, 9, 0, 0);
    // zero every spatial kernel's weight for channel 1
    for (int o = 0; o < model.conv_spatial.num_kernels(); ++o)
        for (int i = 0; i < model.conv_spatial.in_maps(); ++i)
            model.conv_spatial.kernels.at(o, i, 1, 0) = 0.0;
    const auto scores = saliency(model, store.trial_tensor(0), store.label[0]);
    REQUIRE(scores.size() == 4);
    CHECK(scores[1] == 0.0);
    for (double s : scores) CHECK(s >= 0.0);

    // exact function of (model, trial): repeated evaluation is bit-identical
    const auto again = saliency(model, store.trial_tensor(0), store.label[0]);
    CHECK(scores == again);

    CHECK_THROWS_AS(saliency(model, store.trial_tensor(0), 2), ContractError);
}

TEST_CASE("summarize averages repetitions and is order-invariant") {
    std::vector<FoldClientResult> fed{
        {0, "a", 0, 0.6, 3, 0.5},
        {1, "a", 1, 0.8, 2, 0.4},
        {2, "a", 0, 0.8, 1, 0.3},  // subject 0 held out twice: mean 0.7
    };
    std::vector<FoldClientResult> base{
        {0, "a", 0, 0.5, 1, 0.6},
        {1, "a", 1, 0.5, 1, 0.6},
        {2, "a", 0, 0.5, 1, 0.6},
    };
    Summary s = summarize(fed, base);
    REQUIRE(s.subjects.size() == 2);
    CHECK(s.subjects[0].subject == 0);
    CHECK(s.subjects[0].acc_fl == doctest::Approx(0.7));
    CHECK(s.subjects[0].repetitions == 2);
    CHECK(s.clients[0].acc_fl == doctest::Approx(0.75));
    CHECK(s.clients[0].improvement == doctest::Approx(0.5));

    std::vector<FoldClientResult> fed_shuffled{fed[2], fed[0], fed[1]};
    std::vector<FoldClientResult> base_shuffled{base[1], base[2], base[0]};
    Summary s2 = summarize(fed_shuffled, base_shuffled);
    CHECK(s2.subjects[0].acc_fl == doctest::Approx(0.7));
    CHECK(s2.clients[0].acc_fl == doctest::Approx(s.clients[0].acc_fl));

    base[1].held_out_subject = 0;  // schedule mismatch
    CHECK_THROWS_WITH_AS(summarize(fed, base), doctest::Contains("pair"), Error);
}

TEST_CASE("single fold, single client: summary equals that fold") {
    std::vector<FoldClientResult> fed{{0, "solo", 1, 0.625, 4, 0.3}};
    std::vector<FoldClientResult> base{{0, "solo", 1, 0.5, 2, 0.4}};
    Summary s = summarize(fed, base);
    CHECK(s.subjects.size() == 1);
    CHECK(s.clients[0].acc_fl == 0.625);
    CHECK(s.clients[0].improvement == doctest::Approx(0.25));
}

TEST_CASE("subjects csv has one row per subject plus one per client") {
    std::vector<FoldClientResult> fed{
        {0, "a", 0, 0.6, 1, 0.1}, {1, "a", 1, 0.7, 1, 0.1},
        {0, "b", 0, 0.5, 1, 0.1}, {1, "b", 1, 0.5, 1, 0.1},
    };
    Summary s = summarize(fed, fed);
    const std::string path = "/tmp/fleeg_subjects_test.csv";
    write_subjects_csv(s, path);
    std::ifstream in(path);
    std::string line;
    int rows = 0;
    std::getline(in, line);
    CHECK(line == "client,subject,acc_fl,acc_base,improvement");
    while (std::getline(in, line))
        if (!line.empty()) ++rows;
    CHECK(rows == 4 + 2);  // sum of subjects plus one summary row per client
    std::filesystem::remove(path);
}
