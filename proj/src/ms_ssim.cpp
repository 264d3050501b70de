#include "dewarp/error.hpp"
#include "dewarp/geometry.hpp"
#include "dewarp/metrics.hpp"

#include <algorithm>
#include <cmath>

namespace dewarp {

namespace {

constexpr int kWindow = 11;
constexpr double kWindowSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

struct Plane {
    int h = 0;
    int w = 0;
    std::vector<double> v;
    double at(int y, int x) const { return v[static_cast<std::size_t>(y) * w + x]; }
};

Plane to_plane(const RasterF32& r) {
    Plane p{r.height(), r.width(), std::vector<double>(r.pixel_count())};
    for (std::size_t i = 0; i < p.v.size(); ++i) p.v[i] = r.data()[i];
    return p;
}

// 2x2 mean, clamped at the far edge for odd sizes.
Plane downsample(const Plane& in) {
    Plane out{(in.h + 1) / 2, (in.w + 1) / 2, {}};
    out.v.resize(static_cast<std::size_t>(out.h) * out.w);
    for (int y = 0; y < out.h; ++y) {
        const int y0 = 2 * y;
        const int y1 = std::min(2 * y + 1, in.h - 1);
        for (int x = 0; x < out.w; ++x) {
            const int x0 = 2 * x;
            const int x1 = std::min(2 * x + 1, in.w - 1);
            out.v[static_cast<std::size_t>(y) * out.w + x] =
                0.25 * (in.at(y0, x0) + in.at(y0, x1) + in.at(y1, x0) + in.at(y1, x1));
        }
    }
    return out;
}

// 'valid' separable filtering with the normalized 11-tap Gaussian.
Plane filter_valid(const Plane& in, const std::vector<double>& k) {
    const int n = static_cast<int>(k.size());
    const int ow = in.w - n + 1;
    const int oh = in.h - n + 1;
    std::vector<double> tmp(static_cast<std::size_t>(in.h) * ow);
#pragma omp parallel for schedule(static)
    for (int y = 0; y < in.h; ++y) {
        for (int x = 0; x < ow; ++x) {
            double acc = 0.0;
            for (int t = 0; t < n; ++t) acc += k[t] * in.at(y, x + t);
            tmp[static_cast<std::size_t>(y) * ow + x] = acc;
        }
    }
    Plane out{oh, ow, std::vector<double>(static_cast<std::size_t>(oh) * ow)};
#pragma omp parallel for schedule(static)
    for (int y = 0; y < oh; ++y) {
        for (int x = 0; x < ow; ++x) {
            double acc = 0.0;
            for (int t = 0; t < n; ++t) acc += k[t] * tmp[static_cast<std::size_t>(y + t) * ow + x];
            out.v[static_cast<std::size_t>(y) * ow + x] = acc;
        }
    }
    return out;
}

Plane product(const Plane& a, const Plane& b) {
    Plane out{a.h, a.w, std::vector<double>(a.v.size())};
    for (std::size_t i = 0; i < a.v.size(); ++i) out.v[i] = a.v[i] * b.v[i];
    return out;
}

MsSsimScale scale_stats(const Plane& a, const Plane& b, const std::vector<double>& k) {
    const Plane mu_a = filter_valid(a, k);
    const Plane mu_b = filter_valid(b, k);
    const Plane aa = filter_valid(product(a, a), k);
    const Plane bb = filter_valid(product(b, b), k);
    const Plane ab = filter_valid(product(a, b), k);
    double cs_sum = 0.0;
    double ssim_sum = 0.0;
    for (std::size_t i = 0; i < mu_a.v.size(); ++i) {
        const double ma = mu_a.v[i];
        const double mb = mu_b.v[i];
        const double va = aa.v[i] - ma * ma;
        const double vb = bb.v[i] - mb * mb;
        const double cov = ab.v[i] - ma * mb;
        const double cs = (2.0 * cov + kC2) / (va + vb + kC2);
        const double l = (2.0 * ma * mb + kC1) / (ma * ma + mb * mb + kC1);
        cs_sum += cs;
        ssim_sum += l * cs;
    }
    const double n = static_cast<double>(mu_a.v.size());
    return {cs_sum / n, ssim_sum / n};
}

}  // namespace

int ms_ssim_scale_count(int min_side) {
    int scales = 5;
    while (scales > 1 && (min_side >> (scales - 1)) < kWindow) --scales;
    return scales;
}

std::vector<MsSsimScale> ms_ssim_scales(const RasterF32& a, const RasterF32& b) {
    if (!a.same_shape(b)) fail(ErrorCode::InvalidArgument, "ms_ssim: dimension mismatch");
    if (a.channels() != 1) fail(ErrorCode::InvalidArgument, "ms_ssim: expects single-channel images");
    const int min_side = std::min(a.height(), a.width());
    if (min_side < kWindow) fail(ErrorCode::InvalidArgument, "ms_ssim: images smaller than the 11x11 window");

    const int scales = ms_ssim_scale_count(min_side);
    const std::vector<double> k = gaussian_kernel(kWindowSigma);
    Plane pa = to_plane(a);
    Plane pb = to_plane(b);
    std::vector<MsSsimScale> out;
    for (int s = 0; s < scales; ++s) {
        if (s > 0) {
            pa = downsample(pa);
            pb = downsample(pb);
        }
        out.push_back(scale_stats(pa, pb, k));
    }
    return out;
}

double ms_ssim(const RasterF32& a, const RasterF32& b) {
    const std::vector<MsSsimScale> s = ms_ssim_scales(a, b);
    const int m = static_cast<int>(s.size());
    double weight_sum = 0.0;
    for (int i = 0; i < m; ++i) weight_sum += kMsSsimWeights[i];
    double result = 1.0;
    for (int i = 0; i < m; ++i) {
        // Negative structure terms are clipped so fractional powers stay real.
        const double term = i + 1 < m ? s[i].cs : s[i].ssim;
        result *= std::pow(std::max(term, 0.0), kMsSsimWeights[i] / weight_sum);
    }
    return std::clamp(result, 0.0, 1.0);
}

}  // namespace dewarp
