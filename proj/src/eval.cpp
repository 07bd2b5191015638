#include "fleeg/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>

namespace fleeg {

double accuracy(const PersonalizedModel& model, const TrialStore& store,
                std::span<const std::size_t> indices) {
    return evaluate_model(model, store, indices).accuracy;
}

double improvement(double acc_fl, double acc_base) {
    if (acc_base <= 0.0)
        throw ContractError("improvement: baseline accuracy must be positive");
    return (acc_fl - acc_base) / acc_base;
}

std::vector<double> saliency(const PersonalizedModel& model, const Tensor4& trial, int label) {
    if (label != 0 && label != 1)
        throw ContractError("saliency: label outside {0,1}");
    ModelTape tape;
    forward(model, trial, &tape);
    Tensor4 pick = Tensor4::zeros(trial.batch(), 2, 1, 1);
    for (int b = 0; b < trial.batch(); ++b) pick.at(b, label, 0, 0) = 1.0;
    Tensor4 grad_input;
    backward(model, tape, pick, &grad_input);

    const int C = trial.height(), T = trial.width();
    std::vector<double> scores(C, 0.0);
    for (int b = 0; b < trial.batch(); ++b)
        for (int c = 0; c < C; ++c) {
            const double* row = grad_input.row(b, 0, c);
            double s = 0.0;
            for (int t = 0; t < T; ++t) s += std::abs(row[t]);
            scores[c] += s / double(T);
        }
    if (trial.batch() > 1)
        for (double& s : scores) s /= double(trial.batch());
    return scores;
}

Summary summarize(std::span<const FoldClientResult> federated,
                  std::span<const FoldClientResult> baseline) {
    if (federated.size() != baseline.size() || federated.empty())
        throw Error("summarize: fold lists are empty or of different lengths");

    // keyed by (client, fold); both runs must share the hold-out schedule
    std::map<std::pair<std::string, int>, const FoldClientResult*> base_by_key;
    for (const auto& r : baseline) base_by_key[{r.client, r.fold}] = &r;

    struct Acc {
        double fl = 0.0, base = 0.0;
        int n = 0;
    };
    std::vector<std::string> client_order;
    std::map<std::string, std::map<int, Acc>> per_subject;
    for (const auto& r : federated) {
        auto it = base_by_key.find({r.client, r.fold});
        if (it == base_by_key.end() || it->second->held_out_subject != r.held_out_subject)
            throw Error("summarize: baseline run does not pair with fold " +
                        std::to_string(r.fold) + " of client " + r.client);
        if (!per_subject.contains(r.client)) client_order.push_back(r.client);
        Acc& a = per_subject[r.client][r.held_out_subject];
        a.fl += r.test_acc;
        a.base += it->second->test_acc;
        ++a.n;
    }

    Summary s;
    for (const std::string& client : client_order) {
        double fl_mean = 0.0, base_mean = 0.0;
        const auto& subjects = per_subject[client];
        for (const auto& [subj, acc] : subjects) {
            SubjectResult r;
            r.client = client;
            r.subject = subj;
            r.acc_fl = acc.fl / acc.n;
            r.acc_base = acc.base / acc.n;
            r.repetitions = acc.n;
            fl_mean += r.acc_fl;
            base_mean += r.acc_base;
            s.subjects.push_back(r);
        }
        fl_mean /= double(subjects.size());
        base_mean /= double(subjects.size());
        s.clients.push_back({client, fl_mean, base_mean, improvement(fl_mean, base_mean)});
    }
    return s;
}

namespace {

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

void write_subjects_csv(const Summary& summary, const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) throw Error("cannot write " + path);
    std::fputs("client,subject,acc_fl,acc_base,improvement\n", f);
    for (const auto& r : summary.subjects)
        std::fprintf(f, "%s,%d,%s,%s,%s\n", r.client.c_str(), r.subject, fmt(r.acc_fl).c_str(),
                     fmt(r.acc_base).c_str(),
                     fmt(improvement(r.acc_fl, r.acc_base)).c_str());
    for (const auto& c : summary.clients)
        std::fprintf(f, "%s,mean,%s,%s,%s\n", c.client.c_str(), fmt(c.acc_fl).c_str(),
                     fmt(c.acc_base).c_str(), fmt(c.improvement).c_str());
    std::fclose(f);
}

void write_saliency_csv(std::span<const double> scores, const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) throw Error("cannot write " + path);
    std::fputs("channel,score\n", f);
    for (std::size_t c = 0; c < scores.size(); ++c)
        std::fprintf(f, "%zu,%s\n", c, fmt(scores[c]).c_str());
    std::fclose(f);
}

}  // namespace fleeg
