#include <doctest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "renf/spectral.hpp"

using namespace renf;

TEST_CASE("dft of a constant vector is DC only") {
    const Spectrum s = dft_real({1.0, 1.0, 1.0, 1.0});
    CHECK(s.real[0] == doctest::Approx(4.0).epsilon(1e-12));
    for (std::size_t k = 1; k < 4; ++k) {
        CHECK(std::abs(s.real[k]) < 1e-12);
        CHECK(std::abs(s.imag[k]) < 1e-12);
    }
}

TEST_CASE("dft of an impulse is flat") {
    const Spectrum s = dft_real({1.0, 0.0, 0.0, 0.0});
    for (std::size_t k = 0; k < 4; ++k) {
        CHECK(s.real[k] == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(std::abs(s.imag[k]) < 1e-12);
    }
}

TEST_CASE("dft matches the naive oracle") {
    for (std::size_t n : {1u, 2u, 3u, 5u, 8u, 12u, 16u, 24u, 33u, 64u}) {
        const auto x = oracles::random_vector(n, 100 + static_cast<unsigned>(n));
        const Spectrum s = dft_real(x);
        const auto [re, im] = oracles::naive_dft(x);
        for (std::size_t k = 0; k < n; ++k) {
            CHECK(std::abs(s.real[k] - re[k]) < 1e-9);
            CHECK(std::abs(s.imag[k] - im[k]) < 1e-9);
        }
    }
}

TEST_CASE("conjugate symmetry for real input") {
    for (unsigned seed = 0; seed < 20; ++seed) {
        std::mt19937 rng(seed);
        const std::size_t n = 1 + rng() % 40;
        const auto x = oracles::random_vector(n, seed + 1000);
        const Spectrum s = dft_real(x);
        for (std::size_t k = 1; k < n; ++k) {
            CHECK(std::abs(s.real[k] - s.real[n - k]) < 1e-9);
            CHECK(std::abs(s.imag[k] + s.imag[n - k]) < 1e-9);
        }
    }
}

TEST_CASE("dft linearity") {
    for (unsigned seed = 0; seed < 10; ++seed) {
        const std::size_t n = 16;
        const auto x = oracles::random_vector(n, seed);
        const auto y = oracles::random_vector(n, seed + 77);
        const double a = 1.7, b = -0.4;
        std::vector<double> mix(n);
        for (std::size_t t = 0; t < n; ++t) mix[t] = a * x[t] + b * y[t];
        const Spectrum sm = dft_real(mix), sx = dft_real(x), sy = dft_real(y);
        for (std::size_t k = 0; k < n; ++k) {
            CHECK(std::abs(sm.real[k] - (a * sx.real[k] + b * sy.real[k])) < 1e-9);
            CHECK(std::abs(sm.imag[k] - (a * sx.imag[k] + b * sy.imag[k])) < 1e-9);
        }
    }
}

TEST_CASE("freq_l1 of identical sequences is zero") {
    const auto y = oracles::random_vector(12, 3);
    const auto [loss, grad] = freq_l1(y, y);
    CHECK(loss == 0.0);
    for (double g : grad) CHECK(g == 0.0);
}

TEST_CASE("freq_l1 of an impulse difference equals its magnitude") {
    // diff = [c, 0, ..., 0] has |Z_k| = |c| in every bin
    for (double c : {0.7, -2.5}) {
        std::vector<double> yhat(10, 0.0), y(10, 0.0);
        yhat[0] = c;
        const auto [loss, grad] = freq_l1(yhat, y);
        CHECK(loss == doctest::Approx(std::abs(c)).epsilon(1e-12));
    }
}

TEST_CASE("freq_l1 gradient matches finite differences") {
    for (unsigned seed = 0; seed < 10; ++seed) {
        const std::size_t n = seed % 2 == 0 ? 16 : 13;
        auto yhat = oracles::random_vector(n, seed);
        const auto y = oracles::random_vector(n, seed + 500);
        const auto grad = freq_l1(yhat, y).second;
        for (std::size_t t = 0; t < n; ++t) {
            const double num =
                oracles::central_diff([&] { return freq_l1(yhat, y).first; }, yhat[t]);
            const double denom = std::max({std::abs(grad[t]), std::abs(num), 1e-8});
            CHECK(std::abs(grad[t] - num) / denom < 1e-6);
        }
    }
}

TEST_CASE("freq_l1 is non-negative and zero only at equality") {
    for (unsigned seed = 0; seed < 20; ++seed) {
        const std::size_t n = 9;
        auto yhat = oracles::random_vector(n, seed);
        auto y = oracles::random_vector(n, seed + 999);
        const double loss = freq_l1(yhat, y).first;
        CHECK(loss >= 0.0);
        bool equal = true;
        for (std::size_t t = 0; t < n; ++t)
            if (std::abs(yhat[t] - y[t]) > 1e-12) equal = false;
        if (!equal) CHECK(loss > 1e-12);
    }
}

TEST_CASE("freq_l1 rejects mismatched lengths") { CHECK_THROWS(freq_l1({1.0, 2.0}, {1.0})); }
