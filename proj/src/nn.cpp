#include "fleeg/nn.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "fleeg/kernels.hpp"

namespace fleeg {

namespace {

void require_kernel_fits(const Tensor4& in, const ConvLayer& l, const char* label) {
    if (in.maps() != l.in_maps())
        throw ShapeError(std::string(label) + ": input " + in.dims_str() + " has " +
                         std::to_string(in.maps()) + " maps but kernels " +
                         l.kernels.dims_str() + " expect " + std::to_string(l.in_maps()));
    if (l.kh() > in.height() || l.kw() > in.width())
        throw ShapeError(std::string(label) + ": kernel " + l.kernels.dims_str() +
                         " does not fit inside input " + in.dims_str());
    if (static_cast<int>(l.bias.size()) != l.num_kernels())
        throw ShapeError(std::string(label) + ": bias size " + std::to_string(l.bias.size()) +
                         " != num_kernels " + std::to_string(l.num_kernels()));
}

void consume(bool& used, const char* label) {
    if (used) throw ContractError(std::string(label) + ": tape already consumed");
    used = true;
}

}  // namespace

namespace {

Tensor4 conv2d_forward_impl(const Tensor4& input, const ConvLayer& layer, const char* label) {
    const int B = input.batch(), O = layer.num_kernels(), I = layer.in_maps();
    const int kh = layer.kh(), kw = layer.kw();
    const int hout = input.height() - kh + 1;
    const int wout = input.width() - kw + 1;
    const std::size_t plane = std::size_t(input.height()) * input.width();
    const auto& k = kernels::active();

    Tensor4 out = Tensor4::zeros(B, O, hout, wout);
    for (int b = 0; b < B; ++b) {
        for (int o = 0; o < O; ++o) {
            double* oplane = out.row(b, o, 0);
            std::fill(oplane, oplane + std::size_t(hout) * wout, layer.bias[o]);
            for (int y = 0; y < hout; ++y) {
                double* orow = out.row(b, o, y);
                if (kh == 1) {
                    k.conv_acc_rows(orow, input.row(b, 0, y), plane, layer.kernels.row(o, 0, 0),
                                    kw, I, kw, wout);
                } else {
                    for (int i = 0; i < I; ++i)
                        k.conv_acc_rows(orow, input.row(b, i, y), input.width(),
                                        layer.kernels.row(o, i, 0), kw, kh, kw, wout);
                }
            }
        }
    }
    out.debug_check(label);
    return out;
}

}  // namespace

Tensor4 conv2d_forward(const Tensor4& input, const ConvLayer& layer, ConvTape* tape,
                       const char* label) {
    require_kernel_fits(input, layer, label);
    if (!tape) return conv2d_forward_impl(input, layer, label);
    tape->input = input;
    tape->used = false;
    return conv2d_forward_impl(tape->input, layer, label);
}

Tensor4 conv2d_forward(Tensor4&& input, const ConvLayer& layer, ConvTape* tape,
                       const char* label) {
    require_kernel_fits(input, layer, label);
    if (!tape) return conv2d_forward_impl(input, layer, label);
    tape->input = std::move(input);
    tape->used = false;
    return conv2d_forward_impl(tape->input, layer, label);
}

ConvGrads conv2d_backward(const ConvLayer& layer, ConvTape& tape, const Tensor4& grad_out,
                          Tensor4* grad_input, const char* label) {
    consume(tape.used, label);
    const Tensor4& in = tape.input;
    const int B = in.batch(), O = layer.num_kernels(), I = layer.in_maps();
    const int hout = in.height() - layer.kh() + 1;
    const int wout = in.width() - layer.kw() + 1;
    const int kw = layer.kw(), kh = layer.kh();
    if (grad_out.dims() != std::array<int, 4>{B, O, hout, wout})
        throw ContractError(std::string(label) + ": grad_out " + grad_out.dims_str() +
                            " does not match forward output (" + std::to_string(B) + "," +
                            std::to_string(O) + "," + std::to_string(hout) + "," +
                            std::to_string(wout) + ")");
    const auto& k = kernels::active();

    ConvGrads g;
    g.kernels = Tensor4::zeros(O, I, kh, kw);
    g.bias.assign(O, 0.0);
    const std::size_t plane = std::size_t(in.height()) * in.width();

    for (int b = 0; b < B; ++b)
        for (int o = 0; o < O; ++o)
            for (int y = 0; y < hout; ++y) {
                const double* go = grad_out.row(b, o, y);
                g.bias[o] += k.row_sum8(go, wout);
                if (kw == 1) {
                    // width-1 kernels (the spatial filter) reduce to batched dots
                    if (kh == in.height())
                        k.dot8_rows(g.kernels.row(o, 0, 0), go, in.row(b, 0, y), in.width(),
                                    std::size_t(I) * kh, wout);
                    else
                        for (int i = 0; i < I; ++i)
                            k.dot8_rows(g.kernels.row(o, i, 0), go, in.row(b, i, y), in.width(),
                                        kh, wout);
                } else if (kh == 1) {
                    k.grad_taps_rows(g.kernels.row(o, 0, 0), kw, in.row(b, 0, y), plane, go, I,
                                     kw, wout);
                } else {
                    for (int i = 0; i < I; ++i)
                        k.grad_taps_rows(g.kernels.row(o, i, 0), kw, in.row(b, i, y),
                                         in.width(), go, kh, kw, wout);
                }
            }

    if (grad_input) {
        // Gather form: pad every output-gradient row with kw-1 zeros on each
        // side and correlate with the reversed taps, accumulating over all
        // output maps in one register-resident pass per input row.
        Tensor4 krev = Tensor4::zeros(O, I, kh, kw);
        for (int o = 0; o < O; ++o)
            for (int i = 0; i < I; ++i)
                for (int ky = 0; ky < kh; ++ky) {
                    const double* src = layer.kernels.row(o, i, ky);
                    double* dst = krev.row(o, i, ky);
                    for (int t = 0; t < kw; ++t) dst[t] = src[kw - 1 - t];
                }

        // grad_input may alias grad_out at the call site; build into a local.
        Tensor4 gi = Tensor4::zeros(B, I, in.height(), in.width());
        const std::size_t pad_w = std::size_t(wout) + 2 * (kw - 1);
        const std::size_t ostride = std::size_t(I) * kh * kw;
        std::vector<double> padded(pad_w * O, 0.0);
        const int win = in.width();
        for (int b = 0; b < B; ++b)
            for (int y = 0; y < hout; ++y) {
                for (int o = 0; o < O; ++o)
                    std::copy(grad_out.row(b, o, y), grad_out.row(b, o, y) + wout,
                              padded.begin() + o * pad_w + (kw - 1));
                for (int i = 0; i < I; ++i)
                    for (int ky = 0; ky < kh; ++ky)
                        k.conv_acc_rows(gi.row(b, i, y + ky), padded.data(), pad_w,
                                        krev.row(0, i, ky), ostride, O, kw, win);
            }
        gi.debug_check(label);
        *grad_input = std::move(gi);
    }
    g.kernels.debug_check(label);
    return g;
}

Tensor4 maxpool_forward(const Tensor4& input, const PoolLayer& layer, PoolTape* tape,
                        const char* label) {
    if (layer.ph < 1 || layer.pw < 1)
        throw ContractError(std::string(label) + ": zero-extent pooling window (" +
                            std::to_string(layer.ph) + "," + std::to_string(layer.pw) + ")");
    if (layer.ph > input.height() || layer.pw > input.width())
        throw ContractError(std::string(label) + ": window (" + std::to_string(layer.ph) + "," +
                            std::to_string(layer.pw) + ") exceeds input " + input.dims_str());
    const int B = input.batch(), M = input.maps();
    const int hout = input.height() / layer.ph;
    const int wout = input.width() / layer.pw;

    Tensor4 out = Tensor4::zeros(B, M, hout, wout);
    if (tape) {
        tape->in_dims = input.dims();
        tape->out_dims = out.dims();
        tape->argmax.assign(static_cast<std::size_t>(out.size()), 0);
        tape->used = false;
    }
    std::size_t oi = 0;
    for (int b = 0; b < B; ++b)
        for (int m = 0; m < M; ++m)
            for (int oy = 0; oy < hout; ++oy)
                for (int ox = 0; ox < wout; ++ox, ++oi) {
                    // Scan in flat order; strict > breaks ties to the lowest index.
                    std::size_t best_idx = input.index(b, m, oy * layer.ph, ox * layer.pw);
                    double best = input.data()[best_idx];
                    for (int ky = 0; ky < layer.ph; ++ky) {
                        const std::size_t row0 =
                            input.index(b, m, oy * layer.ph + ky, ox * layer.pw);
                        for (int kx = 0; kx < layer.pw; ++kx) {
                            const double v = input.data()[row0 + kx];
                            if (v > best) {
                                best = v;
                                best_idx = row0 + kx;
                            }
                        }
                    }
                    out.data()[oi] = best;
                    if (tape) tape->argmax[oi] = static_cast<std::int64_t>(best_idx);
                }
    return out;
}

Tensor4 maxpool_backward(const PoolLayer& layer, PoolTape& tape, const Tensor4& grad_out,
                         const char* label) {
    (void)layer;
    consume(tape.used, label);
    if (grad_out.dims() != tape.out_dims)
        throw ContractError(std::string(label) + ": grad_out " + grad_out.dims_str() +
                            " does not match pooled output shape");
    Tensor4 gi = Tensor4::zeros(tape.in_dims[0], tape.in_dims[1], tape.in_dims[2], tape.in_dims[3]);
    for (std::size_t i = 0; i < tape.argmax.size(); ++i)
        gi.data()[tape.argmax[i]] += grad_out.data()[i];
    return gi;
}

Tensor4 elu_forward(const Tensor4& input, EluTape* tape) {
    if (tape) {
        tape->input = input;
        tape->used = false;
    }
    Tensor4 out = input;
    for (double& x : out.values()) x = x > 0.0 ? x : std::expm1(x);
    return out;
}

Tensor4 elu_forward(Tensor4&& input, EluTape* tape) {
    if (!tape) {
        Tensor4 out = std::move(input);
        for (double& x : out.values()) x = x > 0.0 ? x : std::expm1(x);
        return out;
    }
    tape->input = std::move(input);
    tape->used = false;
    Tensor4 out = tape->input;
    for (double& x : out.values()) x = x > 0.0 ? x : std::expm1(x);
    return out;
}

Tensor4 elu_backward(EluTape& tape, const Tensor4& grad_out) {
    consume(tape.used, "elu");
    if (!grad_out.same_dims(tape.input))
        throw ContractError("elu: grad_out " + grad_out.dims_str() + " does not match input " +
                            tape.input.dims_str());
    Tensor4 gi = grad_out;
    const double* x = tape.input.data();
    double* g = gi.data();
    const std::int64_t n = gi.size();
    for (std::int64_t i = 0; i < n; ++i)
        if (x[i] <= 0.0) g[i] *= std::exp(x[i]);
    return gi;
}

SoftmaxResult softmax_cross_entropy(const Tensor4& logits, std::span<const int> labels,
                                    std::int64_t denom) {
    if (logits.maps() != 2 || logits.height() != 1 || logits.width() != 1)
        throw ShapeError("softmax_cross_entropy: logits must be (B,2,1,1), got " +
                         logits.dims_str());
    const int B = logits.batch();
    if (static_cast<int>(labels.size()) != B)
        throw ContractError("softmax_cross_entropy: " + std::to_string(labels.size()) +
                            " labels for batch " + std::to_string(B));
    if (denom == 0) denom = B;
    const double inv = 1.0 / static_cast<double>(denom);

    SoftmaxResult r;
    r.probs = Tensor4::zeros(B, 2, 1, 1);
    r.grad_logits = Tensor4::zeros(B, 2, 1, 1);
    double loss_sum = 0.0;
    for (int b = 0; b < B; ++b) {
        const int y = labels[b];
        if (y != 0 && y != 1)
            throw ContractError("softmax_cross_entropy: label " + std::to_string(y) +
                                " outside {0,1} at index " + std::to_string(b));
        const double l0 = logits.at(b, 0, 0, 0), l1 = logits.at(b, 1, 0, 0);
        const double m = std::max(l0, l1);
        const double e0 = std::exp(l0 - m), e1 = std::exp(l1 - m);
        const double z = e0 + e1;
        const double p0 = e0 / z, p1 = e1 / z;
        r.probs.at(b, 0, 0, 0) = p0;
        r.probs.at(b, 1, 0, 0) = p1;
        loss_sum += std::log(z) - ((y == 0 ? l0 : l1) - m);
        r.grad_logits.at(b, 0, 0, 0) = (p0 - (y == 0 ? 1.0 : 0.0)) * inv;
        r.grad_logits.at(b, 1, 0, 0) = (p1 - (y == 1 ? 1.0 : 0.0)) * inv;
    }
    r.loss = loss_sum * inv;
    return r;
}

void sgd_step_inplace(ConvLayer& layer, const ConvGrads& grads, double eta) {
    if (!grads.kernels.same_dims(layer.kernels) || grads.bias.size() != layer.bias.size())
        throw ContractError("sgd_step: gradient shape " + grads.kernels.dims_str() +
                            " does not match weights " + layer.kernels.dims_str());
    const auto& k = kernels::active();
    k.acc_scaled(layer.kernels.data(), grads.kernels.data(), -eta,
                 static_cast<std::size_t>(layer.kernels.size()));
    k.acc_scaled(layer.bias.data(), grads.bias.data(), -eta, layer.bias.size());
}

double finite_diff_check(FdProblem& problem, double epsilon, std::uint64_t seed,
                         std::size_t sample_limit) {
    if (epsilon <= 0.0) throw ContractError("finite_diff_check: epsilon must be > 0");

    std::size_t total = 0;
    for (auto s : problem.params) total += s.size();

    std::vector<std::size_t> indices;
    if (total <= 10000) {
        indices.resize(total);
        for (std::size_t i = 0; i < total; ++i) indices[i] = i;
    } else {
        Rng rng(mix_key(seed, {0x66646368u}));
        std::unordered_set<std::size_t> seen;
        while (seen.size() < std::min(sample_limit, total))
            seen.insert(static_cast<std::size_t>(rng.bounded(total)));
        indices.assign(seen.begin(), seen.end());
        std::sort(indices.begin(), indices.end());
    }

    const std::vector<double> analytic = problem.flat_grads();
    if (analytic.size() != total)
        throw ContractError("finite_diff_check: analytic gradient size mismatch");
    double gmax = 0.0;
    for (double a : analytic) gmax = std::max(gmax, std::abs(a));

    auto locate = [&](std::size_t flat) -> double& {
        for (auto s : problem.params) {
            if (flat < s.size()) return s[flat];
            flat -= s.size();
        }
        throw ContractError("finite_diff_check: parameter index out of range");
    };

    double max_rel = 0.0;
    for (std::size_t flat : indices) {
        double& p = locate(flat);
        const double saved = p;
        p = saved + epsilon;
        const double lp = problem.loss();
        p = saved - epsilon;
        const double lm = problem.loss();
        p = saved;
        const double numeric = (lp - lm) / (2.0 * epsilon);
        const double a = analytic[flat];
        const double denom = std::max({std::abs(a), std::abs(numeric), 1e-6 * gmax, 1e-12});
        max_rel = std::max(max_rel, std::abs(a - numeric) / denom);
    }
    return max_rel;
}

}  // namespace fleeg
