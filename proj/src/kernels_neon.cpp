#if defined(__aarch64__)

#include <arm_neon.h>

#include <cmath>

#include "fleeg/kernels.hpp"

// NEON variants (2-wide float64), mirroring the AVX backends' structure.
// vfmaq_f64 is the fused op matching the scalar backend's std::fma; ragged
// edges fall back to fused scalar arithmetic in the same per-element order.

namespace fleeg::kernels {

namespace {

void acc_scaled_neon(double* out, const double* in, double c, std::size_t n) {
    const float64x2_t cv = vdupq_n_f64(c);
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        vst1q_f64(out + i, vfmaq_f64(vld1q_f64(out + i), cv, vld1q_f64(in + i)));
        vst1q_f64(out + i + 2, vfmaq_f64(vld1q_f64(out + i + 2), cv, vld1q_f64(in + i + 2)));
        vst1q_f64(out + i + 4, vfmaq_f64(vld1q_f64(out + i + 4), cv, vld1q_f64(in + i + 4)));
        vst1q_f64(out + i + 6, vfmaq_f64(vld1q_f64(out + i + 6), cv, vld1q_f64(in + i + 6)));
    }
    for (; i + 2 <= n; i += 2)
        vst1q_f64(out + i, vfmaq_f64(vld1q_f64(out + i), cv, vld1q_f64(in + i)));
    for (; i < n; ++i) out[i] = std::fma(c, in[i], out[i]);
}

void conv_acc_rows_neon(double* out, const double* in, std::size_t in_stride,
                        const double* taps, std::size_t taps_stride, std::size_t nrows,
                        std::size_t ntaps, std::size_t n) {
    std::size_t x0 = 0;
    for (; x0 + 8 <= n; x0 += 8) {
        float64x2_t even[4], odd[4];
        for (std::size_t j = 0; j < 4; ++j) {
            even[j] = vld1q_f64(out + x0 + 2 * j);
            odd[j] = vdupq_n_f64(0.0);
        }
        for (std::size_t r = 0; r < nrows; ++r) {
            float64x2_t* acc = (nrows >= 2 && (r & 1)) ? odd : even;
            const double* ip = in + r * in_stride + x0;
            const double* tp = taps + r * taps_stride;
            for (std::size_t t = 0; t < ntaps; ++t) {
                const float64x2_t k = vdupq_n_f64(tp[t]);
                acc[0] = vfmaq_f64(acc[0], k, vld1q_f64(ip + t));
                acc[1] = vfmaq_f64(acc[1], k, vld1q_f64(ip + t + 2));
                acc[2] = vfmaq_f64(acc[2], k, vld1q_f64(ip + t + 4));
                acc[3] = vfmaq_f64(acc[3], k, vld1q_f64(ip + t + 6));
            }
        }
        for (std::size_t j = 0; j < 4; ++j)
            vst1q_f64(out + x0 + 2 * j,
                      nrows >= 2 ? vaddq_f64(even[j], odd[j]) : even[j]);
    }
    for (; x0 < n; ++x0) {
        if (nrows < 2) {
            double acc = out[x0];
            for (std::size_t t = 0; t < ntaps; ++t) acc = std::fma(taps[t], in[x0 + t], acc);
            out[x0] = acc;
            continue;
        }
        double even = out[x0], odd = 0.0;
        for (std::size_t r = 0; r < nrows; ++r) {
            const double* ip = in + r * in_stride + x0;
            const double* tp = taps + r * taps_stride;
            double& acc = (r & 1) ? odd : even;
            for (std::size_t t = 0; t < ntaps; ++t) acc = std::fma(tp[t], ip[t], acc);
        }
        out[x0] = even + odd;
    }
}

void grad_taps_rows_neon(double* taps, std::size_t taps_stride, const double* in,
                         std::size_t in_stride, const double* go, std::size_t nrows,
                         std::size_t ntaps, std::size_t n_out) {
    for (std::size_t r0 = 0; r0 < nrows; r0 += 4) {
        const std::size_t rcount = nrows - r0 < 4 ? nrows - r0 : 4;
        std::size_t t0 = 0;
        for (; t0 + 2 <= ntaps; t0 += 2) {
            float64x2_t acc[4];
            for (std::size_t r = 0; r < rcount; ++r)
                acc[r] = vld1q_f64(taps + (r0 + r) * taps_stride + t0);
            for (std::size_t x = 0; x < n_out; ++x) {
                const float64x2_t c = vdupq_n_f64(go[x]);
                for (std::size_t r = 0; r < rcount; ++r)
                    acc[r] = vfmaq_f64(acc[r], c, vld1q_f64(in + (r0 + r) * in_stride + x + t0));
            }
            for (std::size_t r = 0; r < rcount; ++r)
                vst1q_f64(taps + (r0 + r) * taps_stride + t0, acc[r]);
        }
        for (; t0 < ntaps; ++t0) {
            for (std::size_t r = 0; r < rcount; ++r) {
                double acc = taps[(r0 + r) * taps_stride + t0];
                const double* rin = in + (r0 + r) * in_stride + t0;
                for (std::size_t x = 0; x < n_out; ++x) acc = std::fma(go[x], rin[x], acc);
                taps[(r0 + r) * taps_stride + t0] = acc;
            }
        }
    }
}

double fold8(const double* s) {
    double r = s[0];
    for (int j = 1; j < 8; ++j) r += s[j];
    return r;
}

void dot8_rows_neon(double* out, const double* a, const double* b, std::size_t b_stride,
                    std::size_t nrows, std::size_t n) {
    for (std::size_t r0 = 0; r0 < nrows; r0 += 2) {
        const std::size_t rcount = nrows - r0 < 2 ? nrows - r0 : 2;
        float64x2_t acc[2][4];
        for (std::size_t r = 0; r < rcount; ++r)
            for (int j = 0; j < 4; ++j) acc[r][j] = vdupq_n_f64(0.0);
        std::size_t i = 0;
        for (; i + 8 <= n; i += 8) {
            float64x2_t va[4] = {vld1q_f64(a + i), vld1q_f64(a + i + 2), vld1q_f64(a + i + 4),
                                 vld1q_f64(a + i + 6)};
            for (std::size_t r = 0; r < rcount; ++r) {
                const double* br = b + (r0 + r) * b_stride + i;
                acc[r][0] = vfmaq_f64(acc[r][0], va[0], vld1q_f64(br));
                acc[r][1] = vfmaq_f64(acc[r][1], va[1], vld1q_f64(br + 2));
                acc[r][2] = vfmaq_f64(acc[r][2], va[2], vld1q_f64(br + 4));
                acc[r][3] = vfmaq_f64(acc[r][3], va[3], vld1q_f64(br + 6));
            }
        }
        for (std::size_t r = 0; r < rcount; ++r) {
            double s[8];
            for (int j = 0; j < 4; ++j) vst1q_f64(s + 2 * j, acc[r][j]);
            const double* br = b + (r0 + r) * b_stride;
            for (std::size_t t = 0; i + t < n; ++t) s[t] = std::fma(a[i + t], br[i + t], s[t]);
            out[r0 + r] += fold8(s);
        }
    }
}

double row_sum8_neon(const double* a, std::size_t n) {
    float64x2_t p0 = vdupq_n_f64(0.0), p1 = p0, p2 = p0, p3 = p0;
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        p0 = vaddq_f64(p0, vld1q_f64(a + i));
        p1 = vaddq_f64(p1, vld1q_f64(a + i + 2));
        p2 = vaddq_f64(p2, vld1q_f64(a + i + 4));
        p3 = vaddq_f64(p3, vld1q_f64(a + i + 6));
    }
    double s[8];
    vst1q_f64(s, p0);
    vst1q_f64(s + 2, p1);
    vst1q_f64(s + 4, p2);
    vst1q_f64(s + 6, p3);
    for (std::size_t r = 0; i + r < n; ++r) s[r] += a[i + r];
    return fold8(s);
}

}  // namespace

const Backend& neon_backend() {
    static const Backend b{"neon",
                           acc_scaled_neon,
                           conv_acc_rows_neon,
                           grad_taps_rows_neon,
                           dot8_rows_neon,
                           row_sum8_neon};
    return b;
}

}  // namespace fleeg::kernels

#endif  // __aarch64__
