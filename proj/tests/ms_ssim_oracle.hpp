#pragma once

#include "dewarp/raster.hpp"

#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

namespace dewarp::testing {

// Straight-line MS-SSIM: explicit 11x11 window, variances as weighted
// central moments, one scale at a time.

struct RefImage {
    int h, w;
    std::vector<double> v;
    double at(int y, int x) const { return v[static_cast<std::size_t>(y) * w + x]; }
};

inline RefImage ref_halve(const RefImage& in) {
    RefImage out{(in.h + 1) / 2, (in.w + 1) / 2, {}};
    for (int y = 0; y < out.h; ++y) {
        for (int x = 0; x < out.w; ++x) {
            double s = 0.0;
            for (int dy = 0; dy < 2; ++dy)
                for (int dx = 0; dx < 2; ++dx) s += in.at(std::min(2 * y + dy, in.h - 1), std::min(2 * x + dx, in.w - 1));
            out.v.push_back(s / 4);
        }
    }
    return out;
}

inline std::pair<double, double> ref_scale(const RefImage& a, const RefImage& b) {
    double win[11][11];
    double total = 0.0;
    for (int j = 0; j < 11; ++j)
        for (int i = 0; i < 11; ++i) total += win[j][i] = std::exp(-((i - 5) * (i - 5) + (j - 5) * (j - 5)) / 4.5);
    double cs_sum = 0.0, ssim_sum = 0.0;
    int n = 0;
    for (int y = 0; y + 11 <= a.h; ++y) {
        for (int x = 0; x + 11 <= a.w; ++x) {
            double ma = 0.0, mb = 0.0;
            for (int j = 0; j < 11; ++j)
                for (int i = 0; i < 11; ++i) {
                    ma += win[j][i] / total * a.at(y + j, x + i);
                    mb += win[j][i] / total * b.at(y + j, x + i);
                }
            double va = 0.0, vb = 0.0, cov = 0.0;
            for (int j = 0; j < 11; ++j)
                for (int i = 0; i < 11; ++i) {
                    const double da = a.at(y + j, x + i) - ma;
                    const double db = b.at(y + j, x + i) - mb;
                    va += win[j][i] / total * da * da;
                    vb += win[j][i] / total * db * db;
                    cov += win[j][i] / total * da * db;
                }
            const double cs = (2 * cov + 9e-4) / (va + vb + 9e-4);
            cs_sum += cs;
            ssim_sum += cs * (2 * ma * mb + 1e-4) / (ma * ma + mb * mb + 1e-4);
            ++n;
        }
    }
    return {cs_sum / n, ssim_sum / n};
}

inline double ref_ms_ssim(const RasterF32& a, const RasterF32& b) {
    const double weights[5] = {0.0448, 0.2856, 0.3001, 0.2363, 0.1333};
    RefImage ra{a.height(), a.width(), {a.data().begin(), a.data().end()}};
    RefImage rb{b.height(), b.width(), {b.data().begin(), b.data().end()}};
    int scales = 0;
    for (int s = 5; s >= 1; --s) {
        if ((std::min(a.height(), a.width()) >> (s - 1)) >= 11) {
            scales = s;
            break;
        }
    }
    double wsum = 0.0;
    for (int s = 0; s < scales; ++s) wsum += weights[s];
    double out = 1.0;
    for (int s = 0; s < scales; ++s) {
        if (s > 0) {
            ra = ref_halve(ra);
            rb = ref_halve(rb);
        }
        const auto [cs, ssim] = ref_scale(ra, rb);
        out *= std::pow(std::max(s + 1 < scales ? cs : ssim, 0.0), weights[s] / wsum);
    }
    return std::clamp(out, 0.0, 1.0);
}

}  // namespace dewarp::testing
