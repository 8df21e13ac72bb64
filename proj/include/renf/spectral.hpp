#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>
#include <utility>
#include <vector>

#include "renf/matrix.hpp"

namespace renf {

/// Full unnormalized forward DFT of a real sequence: all len bins kept, so
/// bin k and bin len-k are conjugates.
struct Spectrum {
    std::vector<double> real;
    std::vector<double> imag;

    std::size_t size() const { return real.size(); }
    double modulus(std::size_t k) const { return std::hypot(real[k], imag[k]); }
};

namespace detail {

inline bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

/// cos/sin of -2*pi*m/n for m in [0, n). The twiddle exponent k*t only
/// matters mod n, so one table serves the whole O(n^2) evaluation.
struct TwiddleTable {
    std::vector<double> cos_v;
    std::vector<double> sin_v;

    explicit TwiddleTable(std::size_t n) : cos_v(n), sin_v(n) {
        for (std::size_t m = 0; m < n; ++m) {
            const double ang = -2.0 * std::numbers::pi * static_cast<double>(m) /
                               static_cast<double>(n);
            cos_v[m] = std::cos(ang);
            sin_v[m] = std::sin(ang);
        }
    }
};

/// In-place iterative radix-2 FFT, Z_k = sum_t z_t exp(-i 2 pi k t / n).
inline void fft_pow2(std::vector<double>& re, std::vector<double>& im) {
    const std::size_t n = re.size();
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) {
            std::swap(re[i], re[j]);
            std::swap(im[i], im[j]);
        }
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double ang = -2.0 * std::numbers::pi / static_cast<double>(len);
        const double wr = std::cos(ang), wi = std::sin(ang);
        for (std::size_t i = 0; i < n; i += len) {
            double cr = 1.0, ci = 0.0;
            for (std::size_t j = 0; j < len / 2; ++j) {
                const std::size_t a = i + j, b = i + j + len / 2;
                const double ur = re[a], ui = im[a];
                const double vr = re[b] * cr - im[b] * ci;
                const double vi = re[b] * ci + im[b] * cr;
                re[a] = ur + vr;
                im[a] = ui + vi;
                re[b] = ur - vr;
                im[b] = ui - vi;
                const double ncr = cr * wr - ci * wi;
                ci = cr * wi + ci * wr;
                cr = ncr;
            }
        }
    }
}

}  // namespace detail

/// Z_k = sum_t x_t exp(-i 2 pi k t / n). Radix-2 FFT for power-of-two
/// lengths, direct O(n^2) evaluation otherwise; both return the same values.
inline Spectrum dft_real(const std::vector<double>& x) {
    const std::size_t n = x.size();
    require(n >= 1, "dft_real: empty input");
    Spectrum s;
    if (detail::is_pow2(n)) {
        s.real = x;
        s.imag.assign(n, 0.0);
        detail::fft_pow2(s.real, s.imag);
        return s;
    }
    s.real.assign(n, 0.0);
    s.imag.assign(n, 0.0);
    const detail::TwiddleTable tw(n);
    for (std::size_t k = 0; k < n; ++k) {
        double sr = 0.0, si = 0.0;
        std::size_t m = 0;
        for (std::size_t t = 0; t < n; ++t) {
            sr += x[t] * tw.cos_v[m];
            si += x[t] * tw.sin_v[m];
            m += k;
            if (m >= n) m -= n;
        }
        s.real[k] = sr;
        s.imag[k] = si;
    }
    return s;
}

/**
 * Frequency-domain L1 distance between two equal-length sequences:
 *
 *   loss = (1/n) * sum_k |Z_k|,  Z = dft_real(yhat - y)
 *
 * The gradient w.r.t. yhat_t is (1/n) * sum_k Re(conj(Z_k) e^{-i2pikt/n}) / |Z_k|,
 * with bins of zero modulus contributing a zero subgradient. The phasor sum is
 * evaluated as the real part of the inverse transform of the unit spectrum
 * Z_k/|Z_k|, reusing the FFT when the length allows.
 */
inline std::pair<double, std::vector<double>> freq_l1(const std::vector<double>& yhat,
                                                      const std::vector<double>& y) {
    require(yhat.size() == y.size(), "freq_l1: length mismatch");
    const std::size_t n = yhat.size();
    std::vector<double> diff(n);
    for (std::size_t t = 0; t < n; ++t) diff[t] = yhat[t] - y[t];

    const Spectrum z = dft_real(diff);
    double loss = 0.0;
    std::vector<double> ur(n, 0.0), ui(n, 0.0);
    for (std::size_t k = 0; k < n; ++k) {
        const double m = z.modulus(k);
        loss += m;
        if (m > 0.0) {
            ur[k] = z.real[k] / m;
            ui[k] = z.imag[k] / m;
        }
    }
    loss /= static_cast<double>(n);

    std::vector<double> grad(n, 0.0);
    if (detail::is_pow2(n)) {
        // sum_k conj(u_k) e^{-i2pikt/n} = conj(sum_k u_k e^{+i2pikt/n});
        // forward FFT of conj(u) gives conj of that sum, same real part.
        for (std::size_t k = 0; k < n; ++k) ui[k] = -ui[k];
        detail::fft_pow2(ur, ui);
        for (std::size_t t = 0; t < n; ++t) grad[t] = ur[t] / static_cast<double>(n);
    } else {
        const detail::TwiddleTable tw(n);
        for (std::size_t t = 0; t < n; ++t) {
            double acc = 0.0;
            std::size_t m = 0;
            for (std::size_t k = 0; k < n; ++k) {
                acc += ur[k] * tw.cos_v[m] + ui[k] * tw.sin_v[m];
                m += t;
                if (m >= n) m -= n;
            }
            grad[t] = acc / static_cast<double>(n);
        }
    }
    return {loss, grad};
}

}  // namespace renf
