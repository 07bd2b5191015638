#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>

#include "fleeg/arch.hpp"
#include "fleeg/nn.hpp"
#include "fleeg/weights.hpp"

namespace fleeg {

// Owner id used to key the global module's initialization so every client
// starts from the same server-side draw.
inline constexpr std::uint32_t kServerId = 0xffffffffu;

// A client's model: format-specific encoder followed by the shared classifier.
// Inference is head(features(encoder(x))); only the global layers are ever
// exchanged with the server.
struct PersonalizedModel {
    DatasetFormat format;
    LocalArch larch;
    GlobalArch garch;
    ConvLayer conv_temporal, conv_spatial, conv_block3, conv_block4;  // local
    ConvLayer conv_features, conv_head;                               // global
};

struct ModelTape {
    ConvTape c1, c2, c3, c4, c5, c6;
    EluTape e1, e2, e3, e4;
    PoolTape p1, p2, p3, p4;
    bool used = false;
};

struct ModelGrads {
    ConvGrads temporal, spatial, block3, block4, features, head;
};

// Glorot-uniform kernels, zero bias. Local layers are keyed by
// (seed, fold, client_id, layer); global layers by (seed, fold, server).
PersonalizedModel build_model(const DatasetFormat& format, const LocalArch& larch,
                              std::uint64_t seed, std::uint32_t fold, std::uint32_t client_id);
PersonalizedModel build_model(const DatasetFormat& format, std::uint64_t seed,
                              std::uint32_t fold, std::uint32_t client_id);

// The global module's initial WeightSet for a run, as the server draws it;
// bit-identical to the global entries of any build_model with the same keys.
WeightSet make_global_weightset(std::uint64_t seed, std::uint32_t fold);

// Batch must be (B, 1, C_k, T_k). Returns logits (B, 2, 1, 1).
Tensor4 forward(const PersonalizedModel& model, const Tensor4& batch, ModelTape* tape = nullptr);

// Softmax probabilities (B, 2, 1, 1) without a tape.
Tensor4 predict_probs(const PersonalizedModel& model, const Tensor4& batch);

// Consumes the tape. grad_input (set when non-null) is the gradient with
// respect to the batch, needed only for saliency.
ModelGrads backward(const PersonalizedModel& model, ModelTape& tape, const Tensor4& grad_logits,
                    Tensor4* grad_input = nullptr);

void sgd_apply(PersonalizedModel& model, const ModelGrads& grads, double eta);

// WeightSet views. Entry order is fixed by the architecture: the four local
// layers then the two global ones, each as .weight followed by .bias.
WeightSet local_weights(const PersonalizedModel& model);
WeightSet global_weights(const PersonalizedModel& model);
std::pair<WeightSet, WeightSet> split_weights(const PersonalizedModel& model);
WeightSet all_weights(const PersonalizedModel& model);
void set_global_weights(PersonalizedModel& model, const WeightSet& ws);
void set_local_weights(PersonalizedModel& model, const WeightSet& ws);
void set_all_weights(PersonalizedModel& model, const WeightSet& ws);

// One line per layer (name, kernel, pool, output shape) for fixture diffing.
std::string arch_summary(const LocalArch& larch, const GlobalArch& garch, int trial_samples);

double finite_diff_check(PersonalizedModel& model, const Tensor4& input,
                         std::span<const int> labels, double epsilon, std::uint64_t seed = 0,
                         std::size_t sample_limit = 2048);

}  // namespace fleeg
