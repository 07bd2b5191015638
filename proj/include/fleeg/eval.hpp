#pragma once

#include <span>
#include <string>
#include <vector>

#include "fleeg/data.hpp"
#include "fleeg/fed.hpp"
#include "fleeg/model.hpp"

namespace fleeg {

// Argmax over the two class probabilities (ties predict class 0) vs labels.
double accuracy(const PersonalizedModel& model, const TrialStore& store,
                std::span<const std::size_t> indices);

// (acc_fl - acc_base) / acc_base.
double improvement(double acc_fl, double acc_base);

// |d logit_true / d input| averaged over the time axis: one non-negative
// score per channel.
std::vector<double> saliency(const PersonalizedModel& model, const Tensor4& trial, int label);

// One (fold, client) outcome of a leave-one-subject-out run.
struct FoldClientResult {
    int fold = 0;
    std::string client;
    int held_out_subject = 0;
    double test_acc = 0.0;
    int best_round = 0;
    double best_val_loss = 0.0;
};

struct SubjectResult {
    std::string client;
    int subject = 0;
    double acc_fl = 0.0;
    double acc_base = 0.0;
    int repetitions = 0;
};

struct ClientSummary {
    std::string client;
    double acc_fl = 0.0;
    double acc_base = 0.0;
    double improvement = 0.0;
};

struct Summary {
    std::vector<SubjectResult> subjects;
    std::vector<ClientSummary> clients;
};

// Averages repeated hold-outs per subject, then subjects per client; the two
// fold lists must come from runs with identical fold plans.
Summary summarize(std::span<const FoldClientResult> federated,
                  std::span<const FoldClientResult> baseline);

void write_subjects_csv(const Summary& summary, const std::string& path);
void write_saliency_csv(std::span<const double> scores, const std::string& path);

}  // namespace fleeg
