#include "dewarp/metrics.hpp"

#include "dewarp/error.hpp"
#include "dewarp/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

namespace dewarp {

namespace {

void check_mask(const FlowField& flow, const RasterF32* mask, const char* who) {
    if (mask != nullptr && (mask->height() != flow.height || mask->width() != flow.width)) {
        fail(ErrorCode::InvalidArgument, std::string(who) + ": mask size differs from flow");
    }
}

bool selected(const RasterF32* mask, std::size_t i) {
    return mask == nullptr || mask->data()[i * mask->channels()] > 0.5f;
}

std::string format_value(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

std::string format_optional(const std::optional<double>& v) {
    return v ? format_value(*v) : std::string("-");
}

}  // namespace

double ld(const FlowField& flow, const RasterF32* mask) {
    check_mask(flow, mask, "ld");
    const std::size_t n = static_cast<std::size_t>(flow.height) * flow.width;
    std::vector<double> row_sum(static_cast<std::size_t>(flow.height), 0.0);
    std::vector<std::size_t> row_count(static_cast<std::size_t>(flow.height), 0);
#pragma omp parallel for schedule(static)
    for (int y = 0; y < flow.height; ++y) {
        for (int x = 0; x < flow.width; ++x) {
            const std::size_t i = static_cast<std::size_t>(y) * flow.width + x;
            if (!selected(mask, i)) continue;
            row_sum[y] += std::hypot(flow.d[2 * i], flow.d[2 * i + 1]);
            ++row_count[y];
        }
    }
    const double sum = std::accumulate(row_sum.begin(), row_sum.end(), 0.0);
    const std::size_t count = std::accumulate(row_count.begin(), row_count.end(), std::size_t{0});
    if (n == 0 || count == 0) fail(ErrorCode::DegenerateInput, "ld: empty evaluation domain");
    return sum / static_cast<double>(count);
}

AdAlignment ad_detail(const FlowField& flow, const RasterF32& gt_image, const RasterF32* mask) {
    if (gt_image.height() != flow.height || gt_image.width() != flow.width) {
        fail(ErrorCode::InvalidArgument, "ad: flow and image sizes differ");
    }
    check_mask(flow, mask, "ad");
    const RasterF32 grad = gradient_magnitude(gt_image);
    const int h = flow.height;
    const int w = flow.width;

    // Serial accumulation in pixel order keeps the result reproducible.
    double sw = 0.0, spx = 0.0, spy = 0.0, sqx = 0.0, sqy = 0.0;
    std::size_t count = 0;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const std::size_t i = static_cast<std::size_t>(y) * w + x;
            if (!selected(mask, i)) continue;
            const double wt = grad.data()[i];
            ++count;
            sw += wt;
            spx += wt * x;
            spy += wt * y;
            sqx += wt * (x + flow.d[2 * i]);
            sqy += wt * (y + flow.d[2 * i + 1]);
        }
    }
    if (count == 0 || !(sw > 0.0)) fail(ErrorCode::DegenerateInput, "ad: all weights are zero");
    // Normalizing weights to mean 1 leaves the weighted means unchanged.
    const double mpx = spx / sw, mpy = spy / sw, mqx = sqx / sw, mqy = sqy / sw;

    double num = 0.0, den = 0.0;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const std::size_t i = static_cast<std::size_t>(y) * w + x;
            if (!selected(mask, i)) continue;
            const double wt = grad.data()[i];
            const double px = x - mpx, py = y - mpy;
            const double qx = x + flow.d[2 * i] - mqx, qy = y + flow.d[2 * i + 1] - mqy;
            num += wt * (px * qx + py * qy);
            den += wt * (px * px + py * py);
        }
    }
    AdAlignment out;
    out.scale = den > 0.0 ? num / den : 1.0;
    out.tx = mqx - out.scale * mpx;
    out.ty = mqy - out.scale * mpy;

    double residual = 0.0;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const std::size_t i = static_cast<std::size_t>(y) * w + x;
            if (!selected(mask, i)) continue;
            const double rx = out.scale * x + out.tx - (x + flow.d[2 * i]);
            const double ry = out.scale * y + out.ty - (y + flow.d[2 * i + 1]);
            residual += grad.data()[i] * std::hypot(rx, ry);
        }
    }
    out.value = residual / sw / std::hypot(static_cast<double>(w), static_cast<double>(h));
    return out;
}

double ad(const FlowField& flow, const RasterF32& gt_image, const RasterF32* mask) {
    return ad_detail(flow, gt_image, mask).value;
}

std::u32string decode_utf8(std::string_view text) {
    constexpr char32_t kReplacement = 0xFFFD;
    std::u32string out;
    out.reserve(text.size());
    std::size_t i = 0;
    while (i < text.size()) {
        const auto b0 = static_cast<unsigned char>(text[i]);
        int len = 0;
        char32_t cp = 0;
        char32_t min = 0;
        if (b0 < 0x80) {
            out.push_back(b0);
            ++i;
            continue;
        } else if ((b0 & 0xE0) == 0xC0) {
            len = 2, cp = b0 & 0x1F, min = 0x80;
        } else if ((b0 & 0xF0) == 0xE0) {
            len = 3, cp = b0 & 0x0F, min = 0x800;
        } else if ((b0 & 0xF8) == 0xF0) {
            len = 4, cp = b0 & 0x07, min = 0x10000;
        } else {
            out.push_back(kReplacement);
            ++i;
            continue;
        }
        int k = 1;
        for (; k < len && i + k < text.size(); ++k) {
            const auto b = static_cast<unsigned char>(text[i + k]);
            if ((b & 0xC0) != 0x80) break;
            cp = (cp << 6) | (b & 0x3F);
        }
        if (k < len || cp < min || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) {
            out.push_back(kReplacement);
            i += std::max(k, 1);
            continue;
        }
        out.push_back(cp);
        i += len;
    }
    return out;
}

std::size_t edit_distance(std::u32string_view hyp, std::u32string_view ref) {
    std::vector<std::size_t> prev(ref.size() + 1);
    std::vector<std::size_t> cur(ref.size() + 1);
    std::iota(prev.begin(), prev.end(), std::size_t{0});
    for (std::size_t i = 1; i <= hyp.size(); ++i) {
        cur[0] = i;
        for (std::size_t j = 1; j <= ref.size(); ++j) {
            const std::size_t sub = prev[j - 1] + (hyp[i - 1] == ref[j - 1] ? 0 : 1);
            cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
        }
        std::swap(prev, cur);
    }
    return prev[ref.size()];
}

std::size_t edit_distance(std::string_view hyp, std::string_view ref) {
    return edit_distance(decode_utf8(hyp), decode_utf8(ref));
}

double cer(std::string_view hyp, std::string_view ref) {
    const std::u32string r = decode_utf8(ref);
    if (r.empty()) fail(ErrorCode::DegenerateInput, "cer: empty reference");
    return static_cast<double>(edit_distance(decode_utf8(hyp), r)) / static_cast<double>(r.size());
}

MetricsReport evaluate_sample(const std::string& image_id, const EvalInputs& in) {
    if (in.rectified == nullptr || in.gt == nullptr) {
        fail(ErrorCode::InvalidArgument, "evaluate_sample: rectified and ground-truth images are required");
    }
    const RasterF32& gt = *in.gt;
    const int long_side = std::max(gt.height(), gt.width());
    if (long_side < 1) fail(ErrorCode::InvalidDimension, "evaluate_sample: empty ground truth");
    const double scale = static_cast<double>(kEvalLongSide) / long_side;
    const int eh = std::max(1, static_cast<int>(std::lround(gt.height() * scale)));
    const int ew = std::max(1, static_cast<int>(std::lround(gt.width() * scale)));

    const RasterF32 a = to_luma(resize_bilinear(*in.rectified, eh, ew));
    const RasterF32 b = to_luma(resize_bilinear(gt, eh, ew));

    MetricsReport r;
    r.image_id = image_id;
    r.ms_ssim = ms_ssim(a, b);
    FlowField flow;
    if (in.exact != nullptr) {
        r.mode = FlowMode::Exact;
        flow = resize_flow(in.exact->flow, eh, ew);
    } else {
        r.mode = FlowMode::Estimated;
        flow = estimate_flow(a, b);
    }
    r.ld = ld(flow);
    r.ad = ad(flow, b);

    if (in.texts != nullptr && !in.texts->empty()) {
        double ed_sum = 0.0;
        double cer_sum = 0.0;
        for (const auto& [hyp, ref] : *in.texts) {
            ed_sum += static_cast<double>(edit_distance(hyp, ref));
            cer_sum += cer(hyp, ref);
        }
        const double n = static_cast<double>(in.texts->size());
        r.ed = ed_sum / n;
        r.cer = cer_sum / n;
    }
    return r;
}

std::string report_csv_header() { return "image_id,mode,ms_ssim,ld,ad,ed,cer"; }

std::string report_csv_row(const MetricsReport& r) {
    return r.image_id + "," + to_string(r.mode) + "," + format_value(r.ms_ssim) + "," + format_value(r.ld) +
           "," + format_value(r.ad) + "," + format_optional(r.ed) + "," + format_optional(r.cer);
}

std::string report_csv_mean_row(const std::vector<MetricsReport>& rows) {
    if (rows.empty()) return "MEAN,-,-,-,-,-,-";
    const bool mixed = std::any_of(rows.begin(), rows.end(), [&](const MetricsReport& r) {
        return r.mode != rows.front().mode;
    });
    double ms = 0.0, l = 0.0, a = 0.0, e = 0.0, c = 0.0;
    std::size_t text_rows = 0;
    for (const MetricsReport& r : rows) {
        ms += r.ms_ssim;
        l += r.ld;
        a += r.ad;
        if (r.ed && r.cer) {
            e += *r.ed;
            c += *r.cer;
            ++text_rows;
        }
    }
    const double n = static_cast<double>(rows.size());
    std::optional<double> ed_mean;
    std::optional<double> cer_mean;
    if (text_rows > 0) {
        ed_mean = e / static_cast<double>(text_rows);
        cer_mean = c / static_cast<double>(text_rows);
    }
    return std::string("MEAN,") + (mixed ? "mixed" : to_string(rows.front().mode)) + "," + format_value(ms / n) +
           "," + format_value(l / n) + "," + format_value(a / n) + "," + format_optional(ed_mean) + "," +
           format_optional(cer_mean);
}

}  // namespace dewarp
