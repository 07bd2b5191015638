#pragma once

#include <span>
#include <vector>

#include "fleeg/common.hpp"

namespace fleeg {

// One second-order section, direct form II transposed, a0 normalized to 1.
struct Biquad {
    double b0, b1, b2;
    double a1, a2;
};

// Butterworth band-pass of order 2*n_sections designed by pole pre-warping and
// the bilinear transform. low/high in Hz, 0 < low < high < fs/2.
std::vector<Biquad> butter_bandpass(int n_sections, double low_hz, double high_hz, double fs);

// Single forward pass with initial state zi scaled by x0 (steady-state step
// response), writing through the cascade in place.
void sosfilt(const std::vector<Biquad>& sos, std::span<double> x);

// Zero-phase filtering: odd-reflect pad both ends by one filter length,
// filter forward and backward with step-matched initial conditions, crop.
std::vector<double> sosfiltfilt(const std::vector<Biquad>& sos, std::span<const double> x);

// |H(e^{i 2 pi f / fs})| of the cascade, for design checks.
double sos_gain_at(const std::vector<Biquad>& sos, double freq_hz, double fs);

}  // namespace fleeg
