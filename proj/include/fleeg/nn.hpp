#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "fleeg/tensor.hpp"

namespace fleeg {

// Valid cross-correlation, stride 1, no padding. kernels dims are
// (num_kernels, in_maps, kh, kw); bias has one value per kernel.
struct ConvLayer {
    Tensor4 kernels;
    std::vector<double> bias;

    int num_kernels() const { return kernels.batch(); }
    int in_maps() const { return kernels.maps(); }
    int kh() const { return kernels.height(); }
    int kw() const { return kernels.width(); }
};

// Max pooling; stride equals the window, trailing remainder is dropped.
struct PoolLayer {
    int ph = 1;
    int pw = 1;
};

// Per-layer forward caches, consumed exactly once by the matching backward.
struct ConvTape {
    Tensor4 input;
    bool used = false;
};

struct PoolTape {
    std::array<int, 4> in_dims{0, 0, 0, 0};
    std::array<int, 4> out_dims{0, 0, 0, 0};
    std::vector<std::int64_t> argmax;  // flat input index per output element
    bool used = false;
};

struct EluTape {
    Tensor4 input;
    bool used = false;
};

struct ConvGrads {
    Tensor4 kernels;
    std::vector<double> bias;
};

Tensor4 conv2d_forward(const Tensor4& input, const ConvLayer& layer, ConvTape* tape = nullptr,
                       const char* label = "conv2d");
// Moves the input into the tape instead of copying it.
Tensor4 conv2d_forward(Tensor4&& input, const ConvLayer& layer, ConvTape* tape,
                       const char* label = "conv2d");

// Returns kernel/bias gradients; writes the input gradient when grad_input is
// non-null (the first layer of a model only needs it for saliency).
ConvGrads conv2d_backward(const ConvLayer& layer, ConvTape& tape, const Tensor4& grad_out,
                          Tensor4* grad_input = nullptr, const char* label = "conv2d");

Tensor4 maxpool_forward(const Tensor4& input, const PoolLayer& layer, PoolTape* tape = nullptr,
                        const char* label = "maxpool");

Tensor4 maxpool_backward(const PoolLayer& layer, PoolTape& tape, const Tensor4& grad_out,
                         const char* label = "maxpool");

Tensor4 elu_forward(const Tensor4& input, EluTape* tape = nullptr);
Tensor4 elu_forward(Tensor4&& input, EluTape* tape);
Tensor4 elu_backward(EluTape& tape, const Tensor4& grad_out);

// Two-class softmax + mean cross-entropy. grad_logits is (probs - onehot) / denom,
// loss is sum(-log p_true) / denom; denom defaults to the batch size and exists
// so a batch can be processed in chunks that still average over the full batch.
struct SoftmaxResult {
    double loss = 0.0;
    Tensor4 probs;        // (B, 2, 1, 1)
    Tensor4 grad_logits;  // (B, 2, 1, 1)
};

SoftmaxResult softmax_cross_entropy(const Tensor4& logits, std::span<const int> labels,
                                    std::int64_t denom = 0);

void sgd_step_inplace(ConvLayer& layer, const ConvGrads& grads, double eta);

// A differentiable scalar target for gradient checking: mutable parameter views,
// a loss evaluator, and analytic gradients concatenated in parameter order.
struct FdProblem {
    std::vector<std::span<double>> params;
    std::function<double()> loss;
    std::function<std::vector<double>()> flat_grads;
};

// Central finite differences on every parameter, or on a seeded random subset
// of `sample_limit` once the total exceeds 10k. Returns the max relative error.
double finite_diff_check(FdProblem& problem, double epsilon, std::uint64_t seed = 0,
                         std::size_t sample_limit = 2048);

}  // namespace fleeg
