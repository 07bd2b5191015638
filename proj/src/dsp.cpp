#include "fleeg/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <complex>

namespace fleeg {

namespace {

using cd = std::complex<double>;

// Steady-state filter state for a unit step, solved per section from the
// DF2T recurrence with constant input and output:
//   s1 = b1 - a1*y + s2,  s2 = b2 - a2*y,  y = (b0+b1+b2)/(1+a1+a2)
struct SectionZi {
    double s1, s2;
};

std::vector<SectionZi> step_zi(const std::vector<Biquad>& sos) {
    std::vector<SectionZi> zi(sos.size());
    double level = 1.0;  // dc level entering this section for unit step input
    for (std::size_t k = 0; k < sos.size(); ++k) {
        const Biquad& s = sos[k];
        const double dc = (s.b0 + s.b1 + s.b2) / (1.0 + s.a1 + s.a2);
        const double y = dc * level;
        zi[k].s2 = s.b2 * level - s.a2 * y;
        zi[k].s1 = s.b1 * level - s.a1 * y + zi[k].s2;
        level = y;
    }
    return zi;
}

void sosfilt_zi(const std::vector<Biquad>& sos, const std::vector<SectionZi>& zi, double x0,
                std::span<double> x) {
    for (std::size_t k = 0; k < sos.size(); ++k) {
        const Biquad& s = sos[k];
        double s1 = zi[k].s1 * x0;
        double s2 = zi[k].s2 * x0;
        for (double& v : x) {
            const double in = v;
            const double out = s.b0 * in + s1;
            s1 = s.b1 * in - s.a1 * out + s2;
            s2 = s.b2 * in - s.a2 * out;
            v = out;
        }
    }
}

}  // namespace

std::vector<Biquad> butter_bandpass(int n_sections, double low_hz, double high_hz, double fs) {
    if (n_sections < 1) throw ContractError("butter_bandpass: need at least one section");
    if (!(0.0 < low_hz && low_hz < high_hz && high_hz < fs / 2.0))
        throw ContractError("butter_bandpass: band [" + std::to_string(low_hz) + ", " +
                            std::to_string(high_hz) + "] Hz outside (0, " +
                            std::to_string(fs / 2.0) + ") at fs=" + std::to_string(fs));

    const int n = n_sections;  // prototype order; band-pass order is 2n
    const double fs2 = 2.0 * fs;
    const double w1 = fs2 * std::tan(M_PI * low_hz / fs);
    const double w2 = fs2 * std::tan(M_PI * high_hz / fs);
    const double bw = w2 - w1;
    const double w0 = std::sqrt(w1 * w2);

    // Butterworth prototype poles -> low-pass-to-band-pass -> bilinear.
    std::vector<cd> apoles;
    for (int k = 1; k <= n; ++k) {
        const cd p = std::exp(cd(0.0, M_PI * (2.0 * k + n - 1.0) / (2.0 * n)));
        const cd bp = bw * p / 2.0;
        const cd disc = std::sqrt(bp * bp - w0 * w0);
        apoles.push_back(bp + disc);
        apoles.push_back(bp - disc);
    }
    // analog gain: H(s) = (bw*s)^n / prod(s - p); evaluate at s = i*w0
    cd num = std::pow(cd(0.0, bw * w0), n);
    cd den = 1.0;
    for (const cd& p : apoles) den *= (cd(0.0, w0) - p);
    const double again = std::abs(num / den);

    std::vector<cd> zpoles;
    for (const cd& p : apoles) zpoles.push_back((fs2 + p) / (fs2 - p));
    // zeros: n at z=1 (from s=0), n at z=-1 (from s=inf)

    // digital gain referenced at the center frequency
    const double wc = 2.0 * std::atan(w0 / fs2);
    const cd z0 = std::exp(cd(0.0, wc));
    cd hz = 1.0;
    for (int k = 0; k < n; ++k) hz *= (z0 - 1.0) * (z0 + 1.0);
    for (const cd& p : zpoles) hz /= (z0 - p);
    const double k_total = again / std::abs(hz);

    // pair conjugate poles into sections; each section takes one (z-1)(z+1)
    std::sort(zpoles.begin(), zpoles.end(),
              [](const cd& a, const cd& b) { return a.imag() > b.imag(); });
    std::vector<Biquad> sos;
    std::vector<bool> used(zpoles.size(), false);
    for (std::size_t i = 0; i < zpoles.size(); ++i) {
        if (used[i]) continue;
        used[i] = true;
        std::size_t match = i;
        double best = 1e300;
        for (std::size_t j = i + 1; j < zpoles.size(); ++j) {
            if (used[j]) continue;
            const double d = std::abs(zpoles[j] - std::conj(zpoles[i]));
            if (d < best) {
                best = d;
                match = j;
            }
        }
        used[match] = true;
        const cd p1 = zpoles[i], p2 = zpoles[match];
        Biquad s;
        s.a1 = -(p1 + p2).real();
        s.a2 = (p1 * p2).real();
        s.b0 = 1.0;
        s.b1 = 0.0;  // (z-1)(z+1) = z^2 - 1
        s.b2 = -1.0;
        sos.push_back(s);
    }
    sos.front().b0 *= k_total;
    sos.front().b1 *= k_total;
    sos.front().b2 *= k_total;
    return sos;
}

void sosfilt(const std::vector<Biquad>& sos, std::span<double> x) {
    if (x.empty()) return;
    sosfilt_zi(sos, step_zi(sos), x[0], x);
}

std::vector<double> sosfiltfilt(const std::vector<Biquad>& sos, std::span<const double> x) {
    const std::size_t order = 2 * sos.size();
    const std::size_t pad = 3 * (order + 1);
    if (x.size() <= pad)
        throw ContractError("sosfiltfilt: signal length " + std::to_string(x.size()) +
                            " must exceed pad length " + std::to_string(pad));

    const std::size_t n = x.size();
    std::vector<double> ext(n + 2 * pad);
    // odd reflection about the end samples
    for (std::size_t i = 0; i < pad; ++i) ext[i] = 2.0 * x[0] - x[pad - i];
    std::copy(x.begin(), x.end(), ext.begin() + pad);
    for (std::size_t i = 0; i < pad; ++i) ext[pad + n + i] = 2.0 * x[n - 1] - x[n - 2 - i];

    const auto zi = step_zi(sos);
    sosfilt_zi(sos, zi, ext[0], ext);
    std::reverse(ext.begin(), ext.end());
    sosfilt_zi(sos, zi, ext[0], ext);
    std::reverse(ext.begin(), ext.end());

    return std::vector<double>(ext.begin() + pad, ext.begin() + pad + n);
}

double sos_gain_at(const std::vector<Biquad>& sos, double freq_hz, double fs) {
    const cd z = std::exp(cd(0.0, 2.0 * M_PI * freq_hz / fs));
    const cd zi1 = 1.0 / z, zi2 = 1.0 / (z * z);
    cd h = 1.0;
    for (const Biquad& s : sos)
        h *= (s.b0 + s.b1 * zi1 + s.b2 * zi2) / (1.0 + s.a1 * zi1 + s.a2 * zi2);
    return std::abs(h);
}

}  // namespace fleeg
