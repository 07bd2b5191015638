#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fleeg/arch.hpp"
#include "fleeg/tensor.hpp"

namespace fleeg {

// One client's labeled trials, stored contiguously as trials x C x T doubles.
// Subjects are 0..S-1 and every subject carries both labels.
struct TrialStore {
    DatasetFormat format;
    std::vector<int> subject;        // per trial
    std::vector<std::uint8_t> label; // per trial, 0 or 1
    std::vector<double> values;      // trial-major, then channel, then sample
    std::string provenance;

    std::size_t n_trials() const { return subject.size(); }
    std::size_t trial_len() const {
        return std::size_t(format.channels) * format.trial_samples;
    }
    std::span<const double> trial_view(std::size_t i) const {
        return {values.data() + i * trial_len(), trial_len()};
    }
    std::span<double> trial_view(std::size_t i) {
        return {values.data() + i * trial_len(), trial_len()};
    }
    Tensor4 trial_tensor(std::size_t i) const;
    // Batch (indices.size(), 1, C, T) in the given order.
    Tensor4 gather_batch(std::span<const std::size_t> indices) const;

    void validate(const char* what) const;
};

// Parameters of the synthetic motor-imagery generator: a background of
// pink-like noise plus a shared rhythm whose amplitude drops on the class's
// informative channels (event-related desynchronization).
struct SynthSpec {
    DatasetFormat format;
    std::vector<int> class0_channels;
    std::vector<int> class1_channels;
    double rhythm_hz = 10.0;
    double erd_depth = 0.8;       // in (0,1): informative-channel attenuation
    double noise = 1.0;           // background noise RMS
    double subject_jitter = 0.2;  // per-subject gain spread
    std::uint64_t seed = 0;
};

TrialStore generate(const SynthSpec& spec);

// Zero-phase Butterworth band-pass applied per channel; length preserved.
TrialStore bandpass(const TrialStore& store, double low_hz, double high_hz);

// Keep every factor-th sample from index 0; updates sample_rate and
// trial_samples accordingly.
TrialStore decimate(const TrialStore& store, int factor);

// One fold of the simultaneous leave-one-subject-out schedule.
struct FoldAssignment {
    int held_out_subject = 0;
    std::vector<std::size_t> train_idx;
    std::vector<std::size_t> val_idx;
};

struct FoldPlan {
    int fold = 0;
    std::vector<FoldAssignment> clients;
};

// Fold f holds out subject f mod S_k on client k; remaining trials are
// shuffled by a fold-keyed permutation and split 9:1 into train/validation.
// Fold count is max over clients of S_k.
std::vector<FoldPlan> plan_folds(std::span<const TrialStore> stores, std::uint64_t seed);

// One client's assignment for one fold; depends only on that client's own
// store, so a remote client can plan without seeing its peers' data.
FoldAssignment plan_fold_for(const TrialStore& store, std::uint64_t seed, int fold,
                             std::size_t client_index);

// "FTR1" binary container, little-endian.
void save_trials(const TrialStore& store, const std::string& path);
TrialStore load_trials(const std::string& path);

}  // namespace fleeg
