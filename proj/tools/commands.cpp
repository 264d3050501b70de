#include "commands.hpp"

#include "dewarp/error.hpp"
#include "dewarp/geometry.hpp"
#include "dewarp/io.hpp"
#include "dewarp/losses.hpp"
#include "dewarp/metrics.hpp"
#include "dewarp/optimizer.hpp"
#include "dewarp/synth.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>

namespace dewarp::cli {

namespace fs = std::filesystem;

namespace {

constexpr double kGradcheckLimit = 1e-4;

/// A failure that maps straight to an exit status.
struct CommandError {
    int code;
    std::string message;
};

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::string fmt(double v, const char* spec = "%.9g") {
    char buf[64];
    std::snprintf(buf, sizeof buf, spec, v);
    return buf;
}

std::string sample_name(int index) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%04d", index);
    return buf;
}

// Replaces `--config FILE` with the file's key=value pairs, placed right after
// the subcommand so explicit flags given later take precedence.
std::vector<std::string> expand_config(const std::vector<std::string>& args) {
    std::vector<std::string> rest;
    std::optional<std::string> path;
    for (std::size_t i = 0; i < args.size(); ++i) {
        if (args[i] == "--config") {
            if (i + 1 >= args.size()) throw CommandError{kBadArguments, "--config needs a file"};
            path = args[++i];
        } else if (args[i].rfind("--config=", 0) == 0) {
            path = args[i].substr(9);
        } else {
            rest.push_back(args[i]);
        }
    }
    if (!path) return rest;
    if (rest.empty()) throw CommandError{kBadArguments, "--config given without a command"};

    std::ifstream in(*path);
    if (!in) throw CommandError{kBadArguments, "cannot read config file " + *path};
    std::vector<std::string> injected;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        line = trim(line);
        if (line.empty() || line[0] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw CommandError{kBadArguments, *path + ":" + std::to_string(lineno) + ": expected key=value"};
        }
        const std::string key = trim(line.substr(0, eq));
        if (key.empty() || key == "config") {
            throw CommandError{kBadArguments, *path + ":" + std::to_string(lineno) + ": invalid key"};
        }
        injected.push_back("--" + key + "=" + trim(line.substr(eq + 1)));
    }
    rest.insert(rest.begin() + 1, injected.begin(), injected.end());
    return rest;
}

RasterF32 read_image(const fs::path& p) {
    if (!fs::exists(p)) throw CommandError{kUnreadableInput, "missing input " + p.string()};
    try {
        return io::read_png(p);
    } catch (const Error& e) {
        throw CommandError{kUnreadableInput, e.what()};
    }
}

RasterF32 read_mask(const fs::path& p) { return to_luma(read_image(p)); }

CoordMap read_map(const fs::path& p) {
    if (!fs::exists(p)) throw CommandError{kUnreadableInput, "missing input " + p.string()};
    try {
        return io::read_dwmap(p);
    } catch (const Error& e) {
        throw CommandError{kUnreadableInput, e.what()};
    }
}

std::string read_text(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw CommandError{kUnreadableInput, "cannot read " + p.string()};
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<TextLine> read_textlines(const fs::path& p) {
    try {
        return parse_textlines(read_text(p));
    } catch (const Error& e) {
        throw CommandError{kUnreadableInput, e.what()};
    }
}

using TextPairs = std::vector<std::pair<std::string, std::string>>;

TextPairs read_text_pairs(const fs::path& p) {
    TextPairs pairs;
    std::istringstream in(read_text(p));
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos) {
            throw CommandError{kUnreadableInput, p.string() + ":" + std::to_string(lineno) + ": expected hyp<TAB>ref"};
        }
        pairs.emplace_back(line.substr(0, tab), line.substr(tab + 1));
    }
    return pairs;
}

// ---------------------------------------------------------------------------
// synth

struct SynthOptions {
    int count = 0;
    std::uint64_t seed = 0;
    std::string out;
    std::string regimes;
    int canvas = 432;
    int jobs = 1;
};

int cmd_synth(const SynthOptions& o, std::ostream& out) {
    RegimeMix mix = default_regime_mix();
    if (!o.regimes.empty()) {
        try {
            mix = parse_regime_mix(o.regimes);
        } catch (const Error& e) {
            throw CommandError{kBadArguments, e.what()};
        }
    }
    const std::vector<Regime> plan = plan_regimes(o.count, mix, o.seed);
    const fs::path root(o.out);
    try {
        fs::create_directories(root);
    } catch (const fs::filesystem_error& e) {
        throw CommandError{kGenerationFailure, e.what()};
    }

    std::vector<std::string> errors(plan.size());
#pragma omp parallel for schedule(dynamic) num_threads(o.jobs)
    for (int i = 0; i < o.count; ++i) {
        const fs::path final_dir = root / sample_name(i);
        const fs::path tmp_dir = root / (sample_name(i) + ".tmp");
        try {
            const WarpSample s = generate_sample(sample_seed(o.seed, i), plan[i], o.canvas);
            fs::remove_all(tmp_dir);
            write_sample(tmp_dir, s);
            fs::remove_all(final_dir);
            fs::rename(tmp_dir, final_dir);
        } catch (const std::exception& e) {
            std::error_code ec;
            fs::remove_all(tmp_dir, ec);
            errors[i] = sample_name(i) + ": " + e.what();
        }
    }
    for (const std::string& e : errors) {
        if (!e.empty()) throw CommandError{kGenerationFailure, e};
    }

    std::string manifest = "sample,regime,seed\n";
    std::array<int, 4> counts{};
    for (int i = 0; i < o.count; ++i) {
        ++counts[static_cast<std::size_t>(plan[i])];
        manifest += sample_name(i) + "," + to_string(plan[i]) + "," + std::to_string(sample_seed(o.seed, i)) + "\n";
    }
    io::write_text_atomic(root / "manifest.csv", manifest);
    out << "wrote " << o.count << " samples to " << root.string() << '\n';
    for (std::size_t r = 0; r < 4; ++r) {
        out << to_string(static_cast<Regime>(r)) << ' ' << counts[r] << '\n';
    }
    return kOk;
}

// ---------------------------------------------------------------------------
// dewarp

struct DewarpOptions {
    std::string sample;
    std::string image, mask, margin_gt, textlines, fm_gt, bm_gt;
    std::string out;
    bool supervised = false;
    bool no_text = false;
    bool no_margin = false;
    OptConfig cfg;
};

int cmd_dewarp(const DewarpOptions& o, std::ostream& out) {
    const bool from_sample = !o.sample.empty();
    if (!from_sample && o.image.empty()) throw CommandError{kBadArguments, "dewarp needs --sample or --image"};
    const fs::path dir(o.sample);
    const auto pick = [&](const std::string& flag, const char* file) -> std::optional<fs::path> {
        if (!flag.empty()) return fs::path(flag);
        if (from_sample) return dir / file;
        return std::nullopt;
    };

    const RasterF32 image = read_image(*pick(o.image, "distorted.png"));
    std::optional<CoordMap> bm_gt;
    if (const auto p = pick(o.bm_gt, "bm_gt.dwmap"); p && (o.supervised || fs::exists(*p))) bm_gt = read_map(*p);

    std::optional<RasterF32> background;
    std::optional<RasterF32> m_gt;
    if (!o.no_margin) {
        const auto pm = pick(o.mask, "dm_gt.png");
        const auto pg = pick(o.margin_gt, "m_gt.png");
        if (pm && pg) {
            background = soft_background(read_mask(*pm));
            m_gt = read_mask(*pg);
        }
    }
    std::optional<CoordMap> fm_gt;
    std::vector<TextLine> lines;
    if (!o.no_text) {
        const auto pf = pick(o.fm_gt, "fm_gt.dwmap");
        const auto pt = pick(o.textlines, "textlines.txt");
        if (pf && pt) {
            fm_gt = read_map(*pf);
            lines = read_textlines(*pt);
        }
    }

    DewarpProblem problem;
    if (bm_gt) {
        problem.height = bm_gt->height();
        problem.width = bm_gt->width();
    } else if (m_gt) {
        problem.height = m_gt->height();
        problem.width = m_gt->width();
    } else {
        problem.height = image.height();
        problem.width = image.width();
    }
    if (o.supervised) {
        if (!bm_gt) throw CommandError{kBadArguments, "--supervised needs a ground-truth backward map"};
        problem.inputs.z_gt = &*bm_gt;
    }
    if (background) {
        if (m_gt->height() != problem.height || m_gt->width() != problem.width) {
            throw CommandError{kBadArguments, "margin mask size does not match the rectified frame"};
        }
        problem.inputs.background_soft = &*background;
        problem.inputs.m_gt = &*m_gt;
    }
    if (fm_gt) {
        problem.inputs.fm_gt = &*fm_gt;
        problem.inputs.textlines = lines;
    }
    const LossInputs& in = problem.inputs;
    if (!in.has_b() && !in.has_m() && !in.has_t()) {
        throw CommandError{kNoObjective, "no active loss term (enable --supervised, margin or text inputs)"};
    }

    OptResult result;
    try {
        result = optimize(problem, o.cfg);
    } catch (const OptimizationFailure& e) {
        throw CommandError{kNumericFailure, e.what()};
    }

    std::string trace = "iteration,l_b,l_m,l_t,l_total\n";
    for (const TraceEntry& t : result.loss_trace) {
        trace += std::to_string(t.iteration) + "," + fmt(t.l_b, "%.17g") + "," + fmt(t.l_m, "%.17g") + "," +
                 fmt(t.l_t, "%.17g") + "," + fmt(t.l_total, "%.17g") + "\n";
    }
    std::string terms;
    for (const auto& [on, name] : {std::pair{in.has_b(), "l_b"}, {in.has_m(), "l_m"}, {in.has_t(), "l_t"}}) {
        if (!on) continue;
        if (!terms.empty()) terms += '+';
        terms += name;
    }
    std::string summary;
    summary += std::string("mode=") + (in.has_b() ? "supervised" : "self-supervised (extrapolation)") + "\n";
    summary += "terms=" + terms + "\n";
    summary += "iterations=" + std::to_string(result.iterations_run) + "\n";
    summary += std::string("converged=") + (result.converged ? "true" : "false") + "\n";
    summary += "final_l_total=" + fmt(result.loss_trace.back().l_total, "%.17g") + "\n";
    if (bm_gt && bm_gt->same_shape(result.bm)) {
        summary += "endpoint_error_px=" + fmt(mean_endpoint_error_px(result.bm, *bm_gt), "%.6f") + "\n";
    }

    const fs::path od(o.out);
    fs::create_directories(od);
    io::write_png(od / "rectified.png", rectify(image, result.bm));
    io::write_dwmap(od / "bm_pred.dwmap", result.bm);
    io::write_text_atomic(od / "trace.csv", trace);
    io::write_text_atomic(od / "summary.txt", summary);
    out << summary;
    return kOk;
}

// ---------------------------------------------------------------------------
// eval

struct EvalOptions {
    std::string samples, preds;
    std::string rectified, gt, bm_pred, fm_gt, texts, id = "image";
    std::string flow = "auto";
    std::string out;
    int jobs = 1;
};

struct EvalJob {
    std::string id;
    fs::path rectified, gt, bm_pred, fm_gt, texts;
};

MetricsReport run_eval_job(const EvalJob& job, const std::string& flow) {
    const RasterF32 rect = read_image(job.rectified);
    const RasterF32 gt = read_image(job.gt);
    const bool maps = !job.bm_pred.empty() && !job.fm_gt.empty() && fs::exists(job.bm_pred) && fs::exists(job.fm_gt);
    if (flow == "exact" && !maps) {
        throw CommandError{kUnreadableInput, job.id + ": exact flow needs bm_pred and fm_gt maps"};
    }
    std::optional<ExactFlow> exact;
    if (flow == "exact" || (flow == "auto" && maps)) {
        try {
            exact = exact_flow(read_map(job.bm_pred), read_map(job.fm_gt));
        } catch (const Error& e) {
            throw CommandError{kUnreadableInput, job.id + ": " + e.what()};
        }
    }
    std::optional<TextPairs> texts;
    if (!job.texts.empty() && fs::exists(job.texts)) texts = read_text_pairs(job.texts);

    EvalInputs in;
    in.rectified = &rect;
    in.gt = &gt;
    in.exact = exact ? &*exact : nullptr;
    in.texts = texts ? &*texts : nullptr;
    return evaluate_sample(job.id, in);
}

int cmd_eval(const EvalOptions& o, std::ostream& out) {
    std::vector<EvalJob> jobs;
    if (!o.samples.empty() || !o.preds.empty()) {
        if (o.samples.empty() || o.preds.empty()) throw CommandError{kBadArguments, "--samples and --preds go together"};
        if (!fs::is_directory(o.samples)) throw CommandError{kUnreadableInput, "not a directory: " + o.samples};
        std::vector<std::string> names;
        for (const auto& e : fs::directory_iterator(o.samples)) {
            if (e.is_directory() && fs::exists(e.path() / "flat.png")) names.push_back(e.path().filename().string());
        }
        std::sort(names.begin(), names.end());
        for (const std::string& n : names) {
            const fs::path s = fs::path(o.samples) / n;
            const fs::path p = fs::path(o.preds) / n;
            jobs.push_back({n, p / "rectified.png", s / "flat.png", p / "bm_pred.dwmap", s / "fm_gt.dwmap", p / "texts.tsv"});
        }
        if (jobs.empty()) throw CommandError{kUnreadableInput, "no samples found in " + o.samples};
    } else {
        if (o.rectified.empty() || o.gt.empty()) {
            throw CommandError{kBadArguments, "eval needs --samples/--preds or --rectified/--gt"};
        }
        if (!o.texts.empty() && !fs::exists(o.texts)) throw CommandError{kUnreadableInput, "missing " + o.texts};
        jobs.push_back({o.id, o.rectified, o.gt, o.bm_pred, o.fm_gt, o.texts});
    }

    std::vector<MetricsReport> reports(jobs.size());
    std::vector<std::optional<CommandError>> errors(jobs.size());
#pragma omp parallel for schedule(dynamic) num_threads(o.jobs)
    for (int i = 0; i < static_cast<int>(jobs.size()); ++i) {
        try {
            reports[i] = run_eval_job(jobs[i], o.flow);
        } catch (const CommandError& e) {
            errors[i] = e;
        } catch (const Error& e) {
            errors[i] = CommandError{kUnreadableInput, jobs[i].id + ": " + e.what()};
        }
    }
    for (const auto& e : errors) {
        if (e) throw *e;
    }

    std::string csv = report_csv_header() + "\n";
    for (const MetricsReport& r : reports) csv += report_csv_row(r) + "\n";
    const std::string mean = report_csv_mean_row(reports);
    csv += mean + "\n";
    io::write_text_atomic(o.out, csv);
    out << mean << '\n';
    return kOk;
}

// ---------------------------------------------------------------------------
// gradcheck

struct GradcheckOptions {
    std::uint64_t seed = 1;
    double eps = 1e-4;
    int size = 64;
};

int cmd_gradcheck(const GradcheckOptions& o, std::ostream& out) {
    GradcheckReport r;
    try {
        r = run_loss_gradchecks(make_gradcheck_instance(o.seed, o.size), o.eps, o.seed);
    } catch (const Error& e) {
        throw CommandError{kNumericFailure, e.what()};
    }
    const std::array<std::pair<const char*, double>, 4> rows{
        {{"l_b", r.l_b}, {"l_t", r.l_t}, {"l_m", r.l_m}, {"total", r.total}}};
    bool ok = true;
    for (const auto& [name, err] : rows) {
        const bool pass = err < kGradcheckLimit;
        ok = ok && pass;
        out << name << " max_rel_error=" << fmt(err, "%.6e") << (pass ? " ok" : " FAIL") << '\n';
    }
    return ok ? kOk : kGradcheckFailure;
}

}  // namespace

int run_cli(const std::vector<std::string>& raw_args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Document dewarping: synthetic data, per-image optimization and evaluation"};
    app.name("dewarp");
    app.require_subcommand(1);
    app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    app.set_version_flag("--version", "dewarp 1.0");

    SynthOptions so;
    auto* synth = app.add_subcommand("synth", "Generate synthetic warped-document samples");
    synth->add_option("--count", so.count, "Number of samples")->required()->check(CLI::NonNegativeNumber);
    synth->add_option("--seed", so.seed, "Batch seed")->envname("DEWARP_SEED");
    synth->add_option("--out", so.out, "Output directory")->required();
    synth->add_option("--regimes", so.regimes, "Mix, e.g. complete:0.3,overflow:0.4,absence:0.15,occlusion:0.15");
    synth->add_option("--canvas", so.canvas, "Canvas size in pixels")->check(CLI::Range(64, 4096));
    synth->add_option("--jobs", so.jobs, "Samples generated concurrently")->check(CLI::Range(1, 256));

    DewarpOptions dopt;
    auto* dw = app.add_subcommand("dewarp", "Optimize a backward map for one image and rectify it");
    dw->add_option("--sample", dopt.sample, "Sample directory in the synth layout");
    dw->add_option("--image", dopt.image, "Distorted image (overrides the sample's)");
    dw->add_option("--mask", dopt.mask, "Distorted document mask");
    dw->add_option("--margin-gt", dopt.margin_gt, "Rectified background mask (1 = margin)");
    dw->add_option("--textlines", dopt.textlines, "Text-line control points");
    dw->add_option("--fm-gt", dopt.fm_gt, "Forward map");
    dw->add_option("--bm-gt", dopt.bm_gt, "Ground-truth backward map");
    dw->add_option("--out", dopt.out, "Output directory")->required();
    dw->add_flag("--supervised", dopt.supervised, "Add the backward-map term (needs bm_gt)");
    dw->add_flag("--no-text", dopt.no_text, "Drop the text-line term");
    dw->add_flag("--no-margin", dopt.no_margin, "Drop the margin term");
    dw->add_option("--iters", dopt.cfg.max_iters, "Iteration cap")->check(CLI::PositiveNumber);
    dw->add_option("--lr", dopt.cfg.learning_rate, "Learning rate")->check(CLI::PositiveNumber);
    dw->add_option("--grid", dopt.cfg.grid_size, "Final control-grid size")->check(CLI::Range(2, 1024));
    dw->add_option("--patience", dopt.cfg.plateau_patience, "Plateau patience")->check(CLI::PositiveNumber);
    dw->add_option("--tolerance", dopt.cfg.plateau_tolerance, "Plateau relative tolerance")
        ->check(CLI::NonNegativeNumber);
    dw->add_option("--alpha", dopt.cfg.weights.alpha, "Margin term weight")->check(CLI::NonNegativeNumber);
    dw->add_option("--beta", dopt.cfg.weights.beta, "Text-line term weight")->check(CLI::NonNegativeNumber);
    dw->add_option("--seed", dopt.cfg.seed, "Run seed")->envname("DEWARP_SEED");

    EvalOptions eo;
    auto* ev = app.add_subcommand("eval", "Score rectified images against ground truth");
    ev->add_option("--samples", eo.samples, "Synth sample root");
    ev->add_option("--preds", eo.preds, "Prediction root (NNNN/rectified.png, NNNN/bm_pred.dwmap)");
    ev->add_option("--rectified", eo.rectified, "Single rectified image");
    ev->add_option("--gt", eo.gt, "Single ground-truth image");
    ev->add_option("--bm-pred", eo.bm_pred, "Predicted backward map (exact flow)");
    ev->add_option("--fm-gt", eo.fm_gt, "Ground-truth forward map (exact flow)");
    ev->add_option("--texts", eo.texts, "hyp<TAB>ref pairs, UTF-8");
    ev->add_option("--id", eo.id, "Image id in single mode");
    ev->add_option("--flow", eo.flow, "auto, exact or estimated")
        ->check(CLI::IsMember({"auto", "exact", "estimated"}));
    ev->add_option("--out", eo.out, "report.csv path")->required();
    ev->add_option("--jobs", eo.jobs, "Samples evaluated concurrently")->check(CLI::Range(1, 256));

    GradcheckOptions go;
    auto* gc = app.add_subcommand("gradcheck", "Finite-difference check of every loss gradient");
    gc->add_option("--seed", go.seed, "Instance seed")->envname("DEWARP_SEED");
    gc->add_option("--eps", go.eps, "Central-difference step")->check(CLI::PositiveNumber);
    gc->add_option("--size", go.size, "Instance size in pixels")->check(CLI::Range(32, 512));

    try {
        const std::vector<std::string> args = expand_config(raw_args);
        std::vector<std::string> storage{"dewarp"};
        storage.insert(storage.end(), args.begin(), args.end());
        std::vector<char*> argv;
        for (std::string& s : storage) argv.push_back(s.data());
        try {
            app.parse(static_cast<int>(argv.size()), argv.data());
        } catch (const CLI::ParseError& e) {
            const int code = app.exit(e, out, err);
            return code == 0 ? kOk : kBadArguments;
        }

        if (synth->parsed()) return cmd_synth(so, out);
        if (dw->parsed()) return cmd_dewarp(dopt, out);
        if (ev->parsed()) return cmd_eval(eo, out);
        if (gc->parsed()) return cmd_gradcheck(go, out);
        return kBadArguments;
    } catch (const CommandError& e) {
        err << "error: " << e.message << '\n';
        return e.code;
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        switch (e.code()) {
            case ErrorCode::NumericFailure: return kNumericFailure;
            case ErrorCode::GenerationFailure: return kGenerationFailure;
            case ErrorCode::Io: return kUnreadableInput;
            default: return kBadArguments;
        }
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kUnreadableInput;
    }
}

}  // namespace dewarp::cli
