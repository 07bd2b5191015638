#include <cmath>

#include "fleeg/kernels.hpp"

// Reference kernels. These define the numerical semantics; SIMD backends must
// reproduce them bit for bit: same per-element accumulation order, every
// multiply-accumulate fused (std::fma and vector fmadd round identically).

namespace fleeg::kernels {

namespace {

void acc_scaled_scalar(double* out, const double* in, double c, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = std::fma(c, in[i], out[i]);
}

void conv_acc_rows_scalar(double* out, const double* in, std::size_t in_stride,
                          const double* taps, std::size_t taps_stride, std::size_t nrows,
                          std::size_t ntaps, std::size_t n) {
    if (nrows < 2) {
        for (std::size_t x = 0; x < n; ++x) {
            double acc = out[x];
            for (std::size_t t = 0; t < ntaps; ++t) acc = std::fma(taps[t], in[x + t], acc);
            out[x] = acc;
        }
        return;
    }
    for (std::size_t x = 0; x < n; ++x) {
        double even = out[x];
        double odd = 0.0;
        for (std::size_t r = 0; r < nrows; ++r) {
            const double* ip = in + r * in_stride + x;
            const double* tp = taps + r * taps_stride;
            double& acc = (r & 1) ? odd : even;
            for (std::size_t t = 0; t < ntaps; ++t) acc = std::fma(tp[t], ip[t], acc);
        }
        out[x] = even + odd;
    }
}

void grad_taps_rows_scalar(double* taps, std::size_t taps_stride, const double* in,
                           std::size_t in_stride, const double* go, std::size_t nrows,
                           std::size_t ntaps, std::size_t n_out) {
    for (std::size_t r = 0; r < nrows; ++r) {
        double* tp = taps + r * taps_stride;
        const double* rin = in + r * in_stride;
        for (std::size_t x = 0; x < n_out; ++x) {
            const double c = go[x];
            const double* p = rin + x;
            for (std::size_t t = 0; t < ntaps; ++t) tp[t] = std::fma(c, p[t], tp[t]);
        }
    }
}

double fold8(const double* s) {
    double r = s[0];
    for (int j = 1; j < 8; ++j) r += s[j];
    return r;
}

void dot8_rows_scalar(double* out, const double* a, const double* b, std::size_t b_stride,
                      std::size_t nrows, std::size_t n) {
    for (std::size_t r = 0; r < nrows; ++r) {
        const double* br = b + r * b_stride;
        double s[8] = {0, 0, 0, 0, 0, 0, 0, 0};
        std::size_t i = 0;
        for (; i + 8 <= n; i += 8)
            for (int j = 0; j < 8; ++j) s[j] = std::fma(a[i + j], br[i + j], s[j]);
        for (std::size_t t = 0; i + t < n; ++t) s[t] = std::fma(a[i + t], br[i + t], s[t]);
        out[r] += fold8(s);
    }
}

double row_sum8_scalar(const double* a, std::size_t n) {
    double s[8] = {0, 0, 0, 0, 0, 0, 0, 0};
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8)
        for (int j = 0; j < 8; ++j) s[j] += a[i + j];
    for (std::size_t r = 0; i + r < n; ++r) s[r] += a[i + r];
    return fold8(s);
}

}  // namespace

const Backend& scalar_backend() {
    static const Backend b{"scalar",
                           acc_scaled_scalar,
                           conv_acc_rows_scalar,
                           grad_taps_rows_scalar,
                           dot8_rows_scalar,
                           row_sum8_scalar};
    return b;
}

}  // namespace fleeg::kernels
