#include <cmath>

#include "doctest.h"
#include "fleeg/dsp.hpp"

using namespace fleeg;

namespace {

double rms(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s / double(v.size()));
}

std::vector<double> sine(double freq, double fs, std::size_t n) {
    std::vector<double> x(n);
    for (std::size_t i = 0; i < n; ++i) x[i] = std::sin(2.0 * M_PI * freq * double(i) / fs);
    return x;
}

}  // namespace

TEST_CASE("band-pass design: edge gains and band validation") {
    auto sos = butter_bandpass(7, 0.3, 40.0, 250.0);
    CHECK(sos.size() == 7);
    CHECK(sos_gain_at(sos, 10.0, 250.0) == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(sos_gain_at(sos, 0.3, 250.0) == doctest::Approx(std::sqrt(0.5)).epsilon(1e-6));
    CHECK(sos_gain_at(sos, 40.0, 250.0) == doctest::Approx(std::sqrt(0.5)).epsilon(1e-6));
    CHECK(sos_gain_at(sos, 50.0, 250.0) < 0.224);

    CHECK_THROWS_AS(butter_bandpass(7, 0.0, 40.0, 250.0), ContractError);
    CHECK_THROWS_AS(butter_bandpass(7, 40.0, 0.3, 250.0), ContractError);
    CHECK_THROWS_AS(butter_bandpass(7, 0.3, 125.0, 250.0), ContractError);
}

TEST_CASE("zero-phase filtering: stop-band, pass-band and dc residuals") {
    auto sos = butter_bandpass(7, 0.3, 40.0, 250.0);

    auto x50 = sine(50.0, 250.0, 20001);
    CHECK(rms(sosfiltfilt(sos, x50)) / rms(x50) < 0.05);

    auto x10 = sine(10.0, 250.0, 20001);
    const double ratio = rms(sosfiltfilt(sos, x10)) / rms(x10);
    CHECK(ratio > 0.9);
    CHECK(ratio < 1.1);

    std::vector<double> dc(20001, 1.0);
    CHECK(rms(sosfiltfilt(sos, dc)) / rms(dc) < 0.05);
}

TEST_CASE("zero-phase filtering preserves length and rejects short signals") {
    auto sos = butter_bandpass(7, 0.3, 40.0, 250.0);
    auto x = sine(10.0, 250.0, 200);
    CHECK(sosfiltfilt(sos, x).size() == 200);
    std::vector<double> tiny(10, 0.0);
    CHECK_THROWS_AS(sosfiltfilt(sos, tiny), ContractError);
}
