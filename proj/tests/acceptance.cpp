// Acceptance suite. Run with no arguments for every criterion, or with
// `--criterion N` for one. Prints one PASS/FAIL line per criterion and exits
// nonzero if any failed.

#include "commands.hpp"
#include "dewarp/geometry.hpp"
#include "dewarp/losses.hpp"
#include "dewarp/metrics.hpp"
#include "dewarp/optimizer.hpp"
#include "dewarp/synth.hpp"
#include "ms_ssim_oracle.hpp"
#include "test_support.hpp"

#include <omp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace {

using namespace dewarp;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

struct Outcome {
    bool pass;
    std::string detail;
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

// 1. Finite-difference check of every loss term on a 64 px instance.
Outcome gradients() {
    omp_set_num_threads(1);
    const auto t0 = Clock::now();
    const GradcheckReport r = run_loss_gradchecks(make_gradcheck_instance(1, 64), 1e-4, 1);
    const double secs = seconds_since(t0);
    const bool ok = r.l_b < 1e-4 && r.l_t < 1e-4 && r.l_m < 1e-4 && r.total < 1e-4 && secs < 60.0;
    return {ok, fmt("max rel error l_b %.2e l_t %.2e l_m %.2e total %.2e (limit 1e-4); %.1f s single-threaded (limit 60)",
                    r.l_b, r.l_t, r.l_m, r.total, secs)};
}

// 2. fm_gt(bm_gt(p)) against p over the pixels whose source lies in the image.
Outcome map_round_trip() {
    const int n = 256;
    double sum = 0.0, worst = 0.0;
    std::size_t count = 0;
    for (int s = 0; s < 50; ++s) {
        const WarpSample w = generate_sample(7000 + s, Regime::Complete, n);
        const ComposedMap c = compose_maps(w.fm_gt, w.bm_gt);
        for (int v = 0; v < n; ++v) {
            for (int u = 0; u < n; ++u) {
                if (!c.valid[static_cast<std::size_t>(v) * n + u]) continue;
                const Point2 q = c.map.at(v, u);
                const double e = std::hypot(q.x * n - 0.5 - u, q.y * n - 0.5 - v);
                sum += e;
                worst = std::max(worst, e);
                ++count;
            }
        }
    }
    const double mean = sum / static_cast<double>(count);
    return {mean < 0.5 && worst < 2.0,
            fmt("50 warps at 256 px, %zu pixels: mean %.4f px (limit 0.5), max %.4f px (limit 2)", count, mean, worst)};
}

// 3. L_B alone recovers the ground-truth backward map.
Outcome supervised_recovery() {
    const int n = 256;
    const auto t0 = Clock::now();
    double sum = 0.0, worst = 0.0;
    int iters = 0;
    for (int s = 0; s < 20; ++s) {
        const WarpSample w = generate_sample(6000 + s, Regime::Complete, n);
        DewarpProblem p{n, n, {}};
        p.inputs.z_gt = &w.bm_gt;
        OptConfig cfg;
        cfg.max_iters = 400;
        const OptResult r = optimize(p, cfg);
        const double epe = mean_endpoint_error_px(r.bm, w.bm_gt);
        sum += epe;
        worst = std::max(worst, epe);
        iters = std::max(iters, r.iterations_run);
    }
    const double secs = seconds_since(t0);
    return {worst < 1.0 && secs < 300.0,
            fmt("20 warps at 256 px: endpoint error mean %.3f px, worst warp %.3f px (limit 1); at most %d iterations; "
                "%.1f s (limit 300)",
                sum / 20, worst, iters, secs)};
}

// Mean squared rectified-y spread of each line's control points around the
// line's ground-truth ordinate.
double textline_y_variance(const CoordMap& bm, const WarpSample& s) {
    const auto lines = remap_control_points(bm, s.fm_gt, s.textlines);
    double total = 0.0;
    int used = 0;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        double mean = 0.0;
        for (const Point2& p : s.textlines[i].points) mean += p.y;
        mean /= static_cast<double>(s.textlines[i].points.size());
        double v = 0.0;
        int k = 0;
        for (std::size_t j = 0; j < lines[i].points.size(); ++j) {
            if (!lines[i].valid[j]) continue;
            const double d = (lines[i].points[j].y - mean) * bm.height();
            v += d * d;
            ++k;
        }
        if (k >= 2) {
            total += v / k;
            ++used;
        }
    }
    return used ? total / used : 0.0;
}

// 4. Self-supervised ablation on incomplete-boundary samples.
Outcome ablation_ordering() {
    const int n = 256;
    const int count = 30;
    const Regime regimes[3] = {Regime::Overflow, Regime::Absence, Regime::Occlusion};
    enum { kBoth, kMargin, kText, kIdentity };
    double ad_sum[4] = {}, yvar_sum[4] = {};
    for (int s = 0; s < count; ++s) {
        const WarpSample w = generate_sample(5000 + s, regimes[s % 3], n);
        const RasterF32 bg = soft_background(w.dm_gt);
        const RasterF32 m = make_margin_gt(w);
        for (int c = 0; c < 4; ++c) {
            CoordMap bm;
            if (c == kIdentity) {
                bm = identity_map(n, n);
            } else {
                DewarpProblem p{n, n, {}};
                if (c != kText) {
                    p.inputs.background_soft = &bg;
                    p.inputs.m_gt = &m;
                }
                if (c != kMargin) {
                    p.inputs.fm_gt = &w.fm_gt;
                    p.inputs.textlines = w.textlines;
                }
                bm = optimize(p, OptConfig{}).bm;
            }
            const ExactFlow ef = exact_flow(bm, w.fm_gt);
            const RasterF32 rect = rectify(w.distorted, bm);
            EvalInputs in;
            in.rectified = &rect;
            in.gt = &w.flat;
            in.exact = &ef;
            ad_sum[c] += evaluate_sample(std::to_string(s), in).ad;
            yvar_sum[c] += textline_y_variance(bm, w);
        }
    }
    double ad[4], yv[4];
    for (int c = 0; c < 4; ++c) {
        ad[c] = ad_sum[c] / count;
        yv[c] = yvar_sum[c] / count;
    }
    const bool order = ad[kBoth] <= ad[kMargin] && ad[kBoth] <= ad[kText];
    const bool vs_identity = ad[kBoth] <= ad[kIdentity] && ad[kMargin] <= ad[kIdentity] && ad[kText] <= ad[kIdentity];
    const bool yvar = yv[kBoth] <= 0.5 * yv[kMargin];
    return {order && vs_identity && yvar,
            fmt("30 samples: AD both %.4f, L_M %.4f, L_T %.4f, identity %.4f; ordering %s, each <= identity %s; "
                "y-variance both %.3f vs L_M %.3f px^2 (<= 50%% %s)",
                ad[kBoth], ad[kMargin], ad[kText], ad[kIdentity], order ? "holds" : "violated",
                vs_identity ? "holds" : "violated", yv[kBoth], yv[kMargin], yvar ? "holds" : "violated")};
}

// 5. Margin loss at the truth and at the identity on overflow samples.
Outcome margin_behavior() {
    const int n = 432;
    const int count = 20;
    double at_gt = 0.0, at_id = 0.0;
    for (int s = 0; s < count; ++s) {
        const WarpSample w = generate_sample(8000 + s, Regime::Overflow, n);
        const RasterF32 bg = soft_background(w.dm_gt);
        const RasterF32 m = make_margin_gt(w);
        at_gt += loss_margin(w.bm_gt, bg, m).value;
        at_id += loss_margin(identity_map(n, n), bg, m).value;
    }
    at_gt /= count;
    at_id /= count;
    return {at_gt < 0.01 && at_id >= 5.0 * at_gt,
            fmt("20 overflow samples at 432 px: mean L_M at truth %.5f (limit 0.01), at identity %.5f (%.1fx, need 5x)",
                at_gt, at_id, at_id / at_gt)};
}

std::string utf8(const std::u32string& s) {
    std::string out;
    for (char32_t c : s) {
        if (c < 0x80) {
            out += static_cast<char>(c);
        } else if (c < 0x800) {
            out += static_cast<char>(0xC0 | (c >> 6));
            out += static_cast<char>(0x80 | (c & 0x3F));
        } else {
            out += static_cast<char>(0xE0 | (c >> 12));
            out += static_cast<char>(0x80 | ((c >> 6) & 0x3F));
            out += static_cast<char>(0x80 | (c & 0x3F));
        }
    }
    return out;
}

std::size_t dp_edit_distance(const std::u32string& a, const std::u32string& b) {
    std::vector<std::vector<std::size_t>> d(a.size() + 1, std::vector<std::size_t>(b.size() + 1));
    for (std::size_t i = 0; i <= a.size(); ++i) d[i][0] = i;
    for (std::size_t j = 0; j <= b.size(); ++j) d[0][j] = j;
    for (std::size_t i = 1; i <= a.size(); ++i) {
        for (std::size_t j = 1; j <= b.size(); ++j) {
            d[i][j] = std::min({d[i - 1][j] + 1, d[i][j - 1] + 1, d[i - 1][j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
        }
    }
    return d[a.size()][b.size()];
}

RasterF32 textured(int n, std::uint64_t seed) { return gaussian_blur(testing::random_raster(n, n, 1, seed), 1.5); }

// 6. Metric oracles.
Outcome metric_oracles() {
    std::vector<std::string> failures;

    std::mt19937_64 rng(123);
    const std::u32string alphabet = U"abcdeéß中";
    std::uniform_int_distribution<int> len(0, 12);
    std::uniform_int_distribution<std::size_t> pick(0, alphabet.size() - 1);
    int ed_mismatch = 0;
    for (int i = 0; i < 1000; ++i) {
        std::u32string a, b;
        for (int k = len(rng); k > 0; --k) a += alphabet[pick(rng)];
        for (int k = len(rng); k > 0; --k) b += alphabet[pick(rng)];
        if (edit_distance(utf8(a), utf8(b)) != dp_edit_distance(a, b)) ++ed_mismatch;
    }
    if (ed_mismatch) failures.push_back(fmt("edit_distance mismatched on %d pairs", ed_mismatch));

    const double c = cer("ab", "abc");
    if (c != 1.0 / 3.0) failures.push_back(fmt("cer(ab, abc) = %.17g", c));

    const RasterF32 img = textured(256, 1);
    const double self = ms_ssim(img, img);
    if (std::abs(self - 1.0) > 1e-6) failures.push_back(fmt("ms_ssim(I, I) = %.9f", self));
    double worst_ssim = 0.0;
    for (int i = 0; i < 10; ++i) {
        const RasterF32 a = textured(192, 100 + i);
        RasterF32 b = a;
        std::mt19937_64 noise(200 + i);
        std::uniform_real_distribution<double> u(-0.02 - 0.02 * i, 0.02 + 0.02 * i);
        for (float& v : b.data()) v = static_cast<float>(std::clamp(0.9 * v + 0.05 + u(noise), 0.0, 1.0));
        worst_ssim = std::max(worst_ssim, std::abs(ms_ssim(a, b) - testing::ref_ms_ssim(a, b)));
    }
    if (worst_ssim > 1e-6) failures.push_back(fmt("ms_ssim off the reference by %.2e", worst_ssim));

    FlowField uniform(64, 80);
    for (std::size_t i = 0; i < uniform.d.size(); i += 2) {
        uniform.d[i] = 3.0;
        uniform.d[i + 1] = 4.0;
    }
    const double l = ld(uniform);
    if (l != 5.0) failures.push_back(fmt("ld(uniform (3,4)) = %.17g", l));

    const int n = 128;
    const RasterF32 gt = textured(n, 7);
    FlowField shift(n, n), scale(n, n);
    for (int y = 0; y < n; ++y) {
        for (int x = 0; x < n; ++x) {
            const std::size_t i = (static_cast<std::size_t>(y) * n + x) * 2;
            shift.d[i] = 2.5;
            shift.d[i + 1] = -1.25;
            scale.d[i] = 0.07 * (x - 40.0);
            scale.d[i + 1] = 0.07 * (y - 70.0);
        }
    }
    const double ad_shift = ad(shift, gt);
    const double ad_scale = ad(scale, gt);
    if (ad_shift > 1e-9) failures.push_back(fmt("ad(translation) = %.3e", ad_shift));
    if (ad_scale > 1e-9) failures.push_back(fmt("ad(scale) = %.3e", ad_scale));

    std::string detail = fmt("1000 edit-distance pairs, %d mismatches; cer %.6f; ms_ssim self %.9f, max |ref diff| "
                             "%.2e over 10 pairs; ld %.3f; ad translation %.1e, scale %.1e",
                             ed_mismatch, c, self, worst_ssim, l, ad_shift, ad_scale);
    for (const std::string& f : failures) detail += "; " + f;
    return {failures.empty(), detail};
}

std::map<std::string, std::string> snapshot(const fs::path& root) {
    std::map<std::string, std::string> files;
    for (const auto& e : fs::recursive_directory_iterator(root)) {
        if (!e.is_regular_file()) continue;
        std::ifstream in(e.path(), std::ios::binary);
        std::ostringstream ss;
        ss << in.rdbuf();
        files[fs::relative(e.path(), root).string()] = ss.str();
    }
    return files;
}

// 7. Two invocations of synth and dewarp give byte-identical files.
Outcome determinism() {
    testing::TempDir tmp("acceptance");
    std::ostringstream out, err;
    const auto run = [&](std::vector<std::string> args) { return cli::run_cli(args, out, err); };
    int codes = 0;
    for (const char* d : {"s1", "s2"}) {
        codes |= run({"synth", "--count", "10", "--seed", "7", "--out", (tmp.path() / d).string()});
    }
    for (const char* d : {"d1", "d2"}) {
        codes |= run({"dewarp", "--sample", (tmp.path() / "s1" / "0000").string(), "--out", (tmp.path() / d).string()});
    }
    if (codes != 0) return {false, "a command failed: " + err.str()};
    const auto s1 = snapshot(tmp.path() / "s1");
    const auto d1 = snapshot(tmp.path() / "d1");
    const bool same_synth = s1 == snapshot(tmp.path() / "s2");
    const bool same_dewarp = d1 == snapshot(tmp.path() / "d2");
    return {same_synth && same_dewarp,
            fmt("synth --count 10 --seed 7: %zu files %s; dewarp of sample 0000: %zu files %s", s1.size(),
                same_synth ? "identical" : "DIFFER", d1.size(), same_dewarp ? "identical" : "DIFFER")};
}

// 8. Default mix over 188 samples.
Outcome regime_statistics() {
    const int expected[4] = {41, 107, 20, 20};
    bool ok = true;
    std::string detail;
    for (std::uint64_t seed : {0ull, 7ull, 12345ull}) {
        const std::vector<Regime> plan = plan_regimes(188, default_regime_mix(), seed);
        int counts[4] = {};
        for (Regime r : plan) ++counts[static_cast<int>(r)];
        for (int k = 0; k < 4; ++k) ok = ok && std::abs(counts[k] - expected[k]) <= 3;
        detail += fmt("%sseed %llu: %d/%d/%d/%d", detail.empty() ? "" : "; ", static_cast<unsigned long long>(seed),
                      counts[0], counts[1], counts[2], counts[3]);
    }
    return {ok, detail + " (target 41/107/20/20 +-3)"};
}

struct Criterion {
    int id;
    const char* name;
    std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
    const std::vector<Criterion> all{
        {1, "gradient correctness", gradients},       {2, "map round trip", map_round_trip},
        {3, "supervised recovery", supervised_recovery}, {4, "ablation ordering", ablation_ordering},
        {5, "margin behavior", margin_behavior},      {6, "metric oracles", metric_oracles},
        {7, "determinism", determinism},              {8, "regime statistics", regime_statistics},
    };
    int only = 0;
    for (int i = 1; i < argc; ++i) {
        const std::string a = argv[i];
        if (a == "--criterion" && i + 1 < argc) {
            only = std::atoi(argv[++i]);
        } else {
            std::fprintf(stderr, "usage: acceptance [--criterion N]\n");
            return 2;
        }
    }
    if (only < 0 || only > static_cast<int>(all.size())) {
        std::fprintf(stderr, "unknown criterion %d\n", only);
        return 2;
    }

    const int threads = omp_get_max_threads();
    bool all_pass = true;
    for (const Criterion& c : all) {
        if (only != 0 && c.id != only) continue;
        omp_set_num_threads(threads);
        const auto t0 = Clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        all_pass = all_pass && o.pass;
        std::printf("%s criterion %d (%s): %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str(),
                    seconds_since(t0));
        std::fflush(stdout);
    }
    return all_pass ? 0 : 1;
}
