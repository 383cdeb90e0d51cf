#include "quanta/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <mutex>
#include <random>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "quanta/denoise.hpp"
#include "quanta/flow.hpp"

namespace quanta {

namespace fs = std::filesystem;

namespace {

std::string format_ppp(double ppp) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", ppp);
    return buf;
}

void write_json_file(const nlohmann::json& j, const fs::path& path) {
    std::ofstream out(path);
    if (!out)
        throw IoError("cannot open " + path.string() + " for writing");
    out << j.dump(2) << '\n';
    if (!out)
        throw IoError("short write to " + path.string());
}

nlohmann::json read_json_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in)
        throw IoError("cannot open " + path.string());
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw IoError("malformed JSON in " + path.string() + ": " + e.what());
    }
}

fs::path write_manifest(const std::string& command, const PipelineConfig& cfg,
                        const fs::path& out_dir) {
    const nlohmann::json j{{"command", command}, {"seed", cfg.seed}, {"config", cfg.to_json()}};
    const fs::path path = out_dir / "manifest.json";
    write_json_file(j, path);
    return path;
}

void finalize_seed(PipelineConfig& cfg) {
    if (cfg.seed_set) return;
    std::random_device rd;
    cfg.seed = (static_cast<uint64_t>(rd()) << 32) ^ static_cast<uint64_t>(rd());
    cfg.seed_set = true;
}

/// Keeps the RNG streams of independent (clip, ppp) cells disjoint; the
/// capture/synthetic/sampler spaces are separated inside the library.
uint64_t stream_block(size_t cell_index) { return static_cast<uint64_t>(cell_index) << 20; }

FluxVideo clip_prefix_as_flux(const VideoClip& clip, int frames, const std::string& what) {
    if (static_cast<int>(clip.frames.size()) < frames)
        throw InputDomainError(what + ": clip has " + std::to_string(clip.frames.size()) +
                               " frames, need " + std::to_string(frames));
    FluxVideo video;
    video.frames.assign(clip.frames.begin(), clip.frames.begin() + frames);
    return video;
}

double video_max(const FluxVideo& video) {
    double m = 0.0;
    for (const auto& f : video.frames) m = std::max(m, image_max(f));
    return m;
}

ImageD normalized_clamped(const ImageD& image, double scale) {
    ImageD out = image;
    for (double& v : out.values) v = std::clamp(v * scale, 0.0, 1.0);
    return out;
}

/// Restored frames for one method on one burst, with the absolute frame
/// index each emitted image corresponds to.
struct MethodOutput {
    FluxVideo restored;
    std::vector<int> frame_ids;
    std::vector<StepDiagnostics> steps;
};

MethodOutput run_method(const MethodConfig& method, const QuantaBurst& burst,
                        const PipelineConfig& cfg, uint64_t block, const StepObserver& observer) {
    ReconstructionRequest request;
    request.burst = burst;
    request.params = cfg.sensor;
    request.reference = cfg.reference;

    MethodOutput out;
    if (method.name == "average") {
        out.restored.frames.push_back(naive_average(burst, cfg.sensor));
        out.frame_ids.push_back(request.reference_index());
    } else if (method.name == "align-merge") {
        out.restored.frames.push_back(align_merge(request, method.align_merge));
        out.frame_ids.push_back(request.reference_index());
    } else if (method.name == "qudi") {
        SamplerConfig sampler = method.sampler;
        if (cfg.auto_base_ppp) sampler.synthetic_base_ppp = estimate_ppp(burst, cfg.sensor);
        SamplerResult res = qudi_sample(request, sampler, RngSeed{cfg.seed, block}, observer);
        out.restored = std::move(res.restored);
        out.steps = std::move(res.steps);
        for (int f = 0; f < static_cast<int>(out.restored.frames.size()); ++f)
            out.frame_ids.push_back(f);
    } else {
        throw InputDomainError("unknown method \"" + method.name +
                               "\" (expected average, align-merge or qudi)");
    }
    return out;
}

nlohmann::json steps_to_json(const std::vector<StepDiagnostics>& steps) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& s : steps)
        arr.push_back(nlohmann::json{{"step", s.step},
                                     {"alpha_bar", s.alpha_bar},
                                     {"synthetic_ppp", s.synthetic_ppp},
                                     {"fusion_weight", s.fusion_weight},
                                     {"refine_strength", s.refine_strength},
                                     {"consistency", s.consistency},
                                     {"max_update", s.max_update}});
    return arr;
}

} // namespace

// ----------------------------------------------------------------- config

void MethodConfig::validate() const {
    if (name != "average" && name != "align-merge" && name != "qudi")
        throw InputDomainError("unknown method \"" + name +
                               "\" (expected average, align-merge or qudi)");
    align_merge.validate();
    sampler.validate();
}

MethodConfig MethodConfig::from_json(const nlohmann::json& j) {
    MethodConfig m;
    try {
        m.name = j.at("method").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw InputDomainError(std::string("method entry needs a \"method\" key: ") + e.what());
    }
    if (j.contains("config")) {
        if (m.name == "align-merge")
            m.align_merge = AlignMergeConfig::from_json(j.at("config"));
        else if (m.name == "qudi")
            m.sampler = SamplerConfig::from_json(j.at("config"));
    }
    m.validate();
    return m;
}

nlohmann::json MethodConfig::to_json() const {
    nlohmann::json j{{"method", name}};
    if (name == "align-merge") j["config"] = align_merge.to_json();
    if (name == "qudi") j["config"] = sampler.to_json();
    return j;
}

PipelineConfig::PipelineConfig() {
    methods.resize(3);
    methods[0].name = "average";
    methods[1].name = "align-merge";
    methods[2].name = "qudi";
}

void PipelineConfig::validate() const {
    sensor.validate();
    if (ppp.empty())
        throw InputDomainError("pipeline: ppp list is empty");
    for (double p : ppp)
        if (!(p > 0.0) || !std::isfinite(p))
            throw InputDomainError("pipeline: ppp values must be > 0");
    if (frames < 1)
        throw InputDomainError("pipeline: frames must be >= 1");
    if (reference < -1)
        throw InputDomainError("pipeline: reference must be -1 (middle) or a frame index");
    if (methods.empty())
        throw InputDomainError("pipeline: method list is empty");
    for (const auto& m : methods) m.validate();
    if (workers < 0)
        throw InputDomainError("pipeline: workers must be >= 0");
}

PipelineConfig PipelineConfig::from_json(const nlohmann::json& j) {
    PipelineConfig cfg;
    try {
        if (j.contains("sensor")) {
            const auto& js = j.at("sensor");
            if (js.is_string()) {
                cfg.sensor_preset = js.get<std::string>();
                cfg.sensor = SensorParams::preset(cfg.sensor_preset);
            } else {
                cfg.sensor = SensorParams::from_json(js);
                cfg.sensor_preset.clear();
            }
        }
        if (j.contains("ppp")) cfg.ppp = j.at("ppp").get<std::vector<double>>();
        cfg.frames = j.value("frames", cfg.frames);
        cfg.reference = j.value("reference", cfg.reference);
        if (j.contains("methods")) {
            cfg.methods.clear();
            for (const auto& jm : j.at("methods")) cfg.methods.push_back(MethodConfig::from_json(jm));
        }
        if (j.contains("seed")) {
            cfg.seed = j.at("seed").get<uint64_t>();
            cfg.seed_set = true;
        }
        cfg.input = j.value("input", cfg.input);
        cfg.input_pattern = j.value("input_pattern", cfg.input_pattern);
        if (j.contains("inputs")) cfg.inputs = j.at("inputs").get<std::vector<std::string>>();
        cfg.burst_root = j.value("burst_root", cfg.burst_root);
        cfg.metrics = j.value("metrics", cfg.metrics);
        cfg.debug_steps = j.value("debug_steps", cfg.debug_steps);
        cfg.workers = j.value("workers", cfg.workers);
        cfg.auto_base_ppp = j.value("auto_base_ppp", cfg.auto_base_ppp);
    } catch (const nlohmann::json::exception& e) {
        throw InputDomainError(std::string("pipeline config: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

nlohmann::json PipelineConfig::to_json() const {
    nlohmann::json j;
    if (!sensor_preset.empty())
        j["sensor"] = sensor_preset;
    else
        j["sensor"] = sensor.to_json();
    j["ppp"] = ppp;
    j["frames"] = frames;
    j["reference"] = reference;
    nlohmann::json jm = nlohmann::json::array();
    for (const auto& m : methods) jm.push_back(m.to_json());
    j["methods"] = jm;
    if (seed_set) j["seed"] = seed;
    j["input"] = input;
    j["input_pattern"] = input_pattern;
    if (!inputs.empty()) j["inputs"] = inputs;
    j["burst_root"] = burst_root;
    j["metrics"] = metrics;
    j["debug_steps"] = debug_steps;
    j["workers"] = workers;
    j["auto_base_ppp"] = auto_base_ppp;
    return j;
}

PipelineConfig load_pipeline_config(const fs::path& path) {
    nlohmann::json j = read_json_file(path);
    if (j.contains("command") && j.contains("config")) {
        PipelineConfig cfg = PipelineConfig::from_json(j.at("config"));
        if (j.contains("seed")) {
            cfg.seed = j.at("seed").get<uint64_t>();
            cfg.seed_set = true;
        }
        return cfg;
    }
    return PipelineConfig::from_json(j);
}

// ---------------------------------------------------------------- workers

int resolve_workers(int requested) {
    if (requested > 0) return requested;
    if (const char* env = std::getenv("QUANTA_WORKERS")) {
        const int n = std::atoi(env);
        if (n > 0) return n;
    }
    return 1;
}

void parallel_for(int count, int workers, const std::function<void(int)>& body) {
    workers = std::max(1, std::min(workers, count));
    if (workers <= 1) {
        for (int i = 0; i < count; ++i) body(i);
        return;
    }
    std::atomic<int> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (;;) {
                const int i = next.fetch_add(1);
                if (i >= count) return;
                try {
                    body(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(error_mutex);
                    if (!error) error = std::current_exception();
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

// --------------------------------------------------------------- commands

CommandResult cmd_simulate(PipelineConfig cfg, const fs::path& out_dir) {
    finalize_seed(cfg);
    cfg.validate();
    if (cfg.input.empty())
        throw InputDomainError("simulate: config needs an input clip directory");

    const VideoClip clip = read_image_sequence(cfg.input, cfg.input_pattern);
    const FluxVideo base = clip_prefix_as_flux(clip, cfg.frames, "simulate");

    fs::create_directories(out_dir);
    CommandResult result;
    for (size_t k = 0; k < cfg.ppp.size(); ++k) {
        const double ppp = cfg.ppp[k];
        const FluxVideo scaled = scale_flux_to_ppp(base, cfg.sensor, ppp);
        const QuantaBurst burst = simulate_burst(
            scaled, cfg.sensor, RngSeed{cfg.seed, stream_space::capture + stream_block(k)});
        const fs::path dir = out_dir / ("ppp_" + format_ppp(ppp));
        write_quanta_sequence(burst, dir);
        result.outputs.push_back(dir);
    }
    result.manifest = write_manifest("simulate", cfg, out_dir);
    return result;
}

CommandResult cmd_reconstruct(PipelineConfig cfg, const fs::path& out_dir) {
    finalize_seed(cfg);
    cfg.validate();
    if (cfg.burst_root.empty())
        throw InputDomainError("reconstruct: config needs burst_root pointing at simulated bursts");
    const bool has_gt = !cfg.input.empty();
    if (cfg.metrics && !has_gt)
        throw InputDomainError(
            "reconstruct: metrics requested but no ground-truth input clip is configured");

    std::vector<QuantaBurst> bursts;
    bursts.reserve(cfg.ppp.size());
    for (double ppp : cfg.ppp) {
        const fs::path dir = fs::path(cfg.burst_root) / ("ppp_" + format_ppp(ppp));
        if (!fs::is_directory(dir))
            throw IoError("reconstruct: missing burst directory " + dir.string());
        bursts.push_back(read_quanta_sequence(dir, "frame_*.pgm"));
    }

    VideoClip gt_clip;
    if (has_gt) gt_clip = read_image_sequence(cfg.input, cfg.input_pattern);

    fs::create_directories(out_dir);
    CommandResult result;
    MetricReport report;

    for (const auto& method : cfg.methods) {
        for (size_t k = 0; k < cfg.ppp.size(); ++k) {
            const double ppp = cfg.ppp[k];
            const QuantaBurst& burst = bursts[k];
            const int n = static_cast<int>(burst.frames.size());
            const fs::path method_dir = out_dir / method.name / ("ppp_" + format_ppp(ppp));

            StepObserver observer;
            if (cfg.debug_steps && method.name == "qudi") {
                const fs::path steps_dir = method_dir / "steps";
                fs::create_directories(steps_dir);
                observer = [steps_dir](const FluxVideo& estimate, const StepDiagnostics& diag) {
                    for (size_t r = 0; r < estimate.frames.size(); ++r) {
                        const double peak = image_max(estimate.frames[r]);
                        const ImageD img =
                            normalized_clamped(estimate.frames[r], peak > 0.0 ? 1.0 / peak : 1.0);
                        char name[48];
                        std::snprintf(name, sizeof name, "step_%02d_frame_%04zu.pgm", diag.step, r);
                        write_gray_image(img, steps_dir / name, 16);
                    }
                };
            }

            const MethodOutput mo =
                run_method(method, burst, cfg, stream_block(k), observer);

            FluxVideo gt_flux;
            double out_scale = 1.0;
            if (has_gt) {
                const FluxVideo prefix = clip_prefix_as_flux(gt_clip, n, "reconstruct");
                const double s = flux_scale_for_ppp(prefix, cfg.sensor, ppp);
                gt_flux = prefix;
                for (auto& f : gt_flux.frames)
                    for (double& v : f.values) v *= s;
                out_scale = 1.0 / s;
            } else {
                const double peak = video_max(mo.restored);
                out_scale = peak > 0.0 ? 1.0 / peak : 1.0;
            }

            VideoClip out_clip;
            out_clip.frames.reserve(mo.restored.frames.size());
            for (const auto& f : mo.restored.frames) {
                ImageD img = f;
                for (double& v : img.values) v *= out_scale;
                out_clip.frames.push_back(std::move(img));
            }
            result.clamped_pixels += write_image_sequence(out_clip, method_dir, 16);
            result.outputs.push_back(method_dir);

            if (cfg.debug_steps && method.name == "qudi")
                write_json_file(steps_to_json(mo.steps), method_dir / "steps.json");

            if (has_gt) {
                double temporal = std::numeric_limits<double>::quiet_NaN();
                if (method.name == "qudi" && mo.restored.frames.size() >= 2) {
                    const double peak = video_max(gt_flux);
                    const double s = peak > 0.0 ? 1.0 / peak : 1.0;
                    std::vector<ImageD> norm;
                    norm.reserve(mo.restored.frames.size());
                    for (const auto& f : mo.restored.frames)
                        norm.push_back(normalized_clamped(f, s));
                    const FlowConfig fc;
                    std::vector<FlowField> flows;
                    flows.reserve(norm.size() - 1);
                    for (size_t i = 0; i + 1 < norm.size(); ++i)
                        flows.push_back(estimate_flow(norm[i], norm[i + 1], fc));
                    temporal = temporal_consistency(norm, flows);
                }
                for (size_t i = 0; i < mo.restored.frames.size(); ++i) {
                    const int f = mo.frame_ids[i];
                    const ImageD& ref = gt_flux.frames[f];
                    MetricRow row;
                    row.method = method.name;
                    row.ppp = ppp;
                    row.frame = f;
                    row.psnr = psnr_flux(ref, mo.restored.frames[i]);
                    row.ssim = ssim_flux(ref, mo.restored.frames[i]);
                    const double ref_peak = image_max(ref);
                    row.tv = total_variation(normalized_clamped(
                        mo.restored.frames[i], ref_peak > 0.0 ? 1.0 / ref_peak : 1.0));
                    row.temporal = temporal;
                    report.rows.push_back(row);
                }
            }
        }
    }

    if (has_gt) {
        write_json_file(report.to_json(), out_dir / "metrics.json");
        std::ofstream csv(out_dir / "metrics.csv");
        if (!csv)
            throw IoError("cannot open " + (out_dir / "metrics.csv").string() + " for writing");
        csv << report.to_csv();
        result.outputs.push_back(out_dir / "metrics.json");
        result.outputs.push_back(out_dir / "metrics.csv");
    }
    result.report = std::move(report);
    result.manifest = write_manifest("reconstruct", cfg, out_dir);
    return result;
}

CommandResult cmd_sweep(PipelineConfig cfg, const fs::path& out_dir) {
    finalize_seed(cfg);
    cfg.validate();
    std::vector<std::string> clips = cfg.inputs;
    if (clips.empty() && !cfg.input.empty()) clips.push_back(cfg.input);
    if (clips.empty())
        throw InputDomainError("sweep: config needs \"inputs\" (or \"input\") clip directories");

    std::vector<double> levels = cfg.ppp;
    std::sort(levels.begin(), levels.end());

    // Ground truth and bursts per (clip, ppp) pair; cell methods share them.
    struct PairData {
        FluxVideo gt_flux;
        QuantaBurst burst;
        std::string error;
    };
    const size_t n_clips = clips.size();
    const size_t n_levels = levels.size();
    const size_t n_methods = cfg.methods.size();
    std::vector<PairData> pairs(n_clips * n_levels);

    for (size_t ci = 0; ci < n_clips; ++ci) {
        VideoClip clip;
        std::string clip_error;
        try {
            clip = read_image_sequence(clips[ci], cfg.input_pattern);
        } catch (const std::exception& e) {
            clip_error = e.what();
        }
        for (size_t li = 0; li < n_levels; ++li) {
            PairData& pair = pairs[ci * n_levels + li];
            if (!clip_error.empty()) {
                pair.error = clip_error;
                continue;
            }
            try {
                const FluxVideo base = clip_prefix_as_flux(clip, cfg.frames, "sweep");
                pair.gt_flux = scale_flux_to_ppp(base, cfg.sensor, levels[li]);
                pair.burst = simulate_burst(
                    pair.gt_flux, cfg.sensor,
                    RngSeed{cfg.seed,
                            stream_space::capture + stream_block(ci * n_levels + li)});
            } catch (const std::exception& e) {
                pair.error = e.what();
            }
        }
    }

    std::vector<SweepCell> cells(n_clips * n_levels * n_methods);
    const int workers = resolve_workers(cfg.workers);
    parallel_for(static_cast<int>(cells.size()), workers, [&](int idx) {
        const size_t mi = static_cast<size_t>(idx) % n_methods;
        const size_t li = (static_cast<size_t>(idx) / n_methods) % n_levels;
        const size_t ci = static_cast<size_t>(idx) / (n_methods * n_levels);
        SweepCell& cell = cells[idx];
        cell.clip = clips[ci];
        cell.ppp = levels[li];
        cell.method = cfg.methods[mi].name;

        const PairData& pair = pairs[ci * n_levels + li];
        if (!pair.error.empty()) {
            cell.status = pair.error;
            return;
        }
        try {
            const MethodOutput mo = run_method(cfg.methods[mi], pair.burst, cfg,
                                               stream_block(ci * n_levels + li), nullptr);
            double psnr_sum = 0.0, ssim_sum = 0.0;
            for (size_t i = 0; i < mo.restored.frames.size(); ++i) {
                const ImageD& ref = pair.gt_flux.frames[mo.frame_ids[i]];
                psnr_sum += psnr_flux(ref, mo.restored.frames[i]);
                ssim_sum += ssim_flux(ref, mo.restored.frames[i]);
            }
            const double count = static_cast<double>(mo.restored.frames.size());
            cell.mean_psnr = psnr_sum / count;
            cell.mean_ssim = ssim_sum / count;
            cell.status = "ok";
        } catch (const std::exception& e) {
            cell.status = e.what();
        }
    });

    fs::create_directories(out_dir);
    {
        std::ofstream csv(out_dir / "sweep.csv");
        if (!csv)
            throw IoError("cannot open " + (out_dir / "sweep.csv").string() + " for writing");
        csv << "clip,ppp,method,mean_psnr,mean_ssim,status\n";
        for (const auto& c : cells) {
            char nums[64];
            std::snprintf(nums, sizeof nums, "%.9g,%.9g", c.mean_psnr, c.mean_ssim);
            std::string status = c.status;
            std::replace(status.begin(), status.end(), ',', ';');
            csv << c.clip << "," << format_ppp(c.ppp) << "," << c.method << "," << nums << ","
                << status << "\n";
        }
    }
    {
        std::ofstream txt(out_dir / "sweep.txt");
        if (!txt)
            throw IoError("cannot open " + (out_dir / "sweep.txt").string() + " for writing");
        char line[256];
        std::snprintf(line, sizeof line, "%-28s %8s %-12s %10s %8s  %s\n", "clip", "ppp",
                      "method", "psnr", "ssim", "status");
        txt << line;
        for (const auto& c : cells) {
            std::snprintf(line, sizeof line, "%-28s %8s %-12s %10.3f %8.4f  %s\n",
                          c.clip.c_str(), format_ppp(c.ppp).c_str(), c.method.c_str(),
                          c.mean_psnr, c.mean_ssim, c.status.c_str());
            txt << line;
        }
    }

    CommandResult result;
    result.cells = std::move(cells);
    result.outputs.push_back(out_dir / "sweep.csv");
    result.outputs.push_back(out_dir / "sweep.txt");
    result.manifest = write_manifest("sweep", cfg, out_dir);
    return result;
}

CommandResult cmd_sum_bitplanes(const SumBitplanesOptions& options, const fs::path& out_dir) {
    const BitPlaneStream stream = read_bit_plane_stream(options.input);
    const VideoClip clip = sum_bit_planes(stream, options.group_size, options.target_bits,
                                          options.allow_clamp, options.input_frame_rate);
    const QuantaBurst burst = clip_to_burst(clip, options.target_bits);

    fs::create_directories(out_dir);
    const fs::path frames_dir = out_dir / "frames";
    write_quanta_sequence(burst, frames_dir);

    double sum = 0.0;
    size_t count = 0;
    for (const auto& f : clip.frames) {
        for (double v : f.values) sum += v;
        count += f.size();
    }

    CommandResult result;
    result.measured_ppp = count ? sum / static_cast<double>(count) : 0.0;
    result.outputs.push_back(frames_dir);

    const nlohmann::json manifest{
        {"command", "sum-bitplanes"},
        {"config",
         {{"input", options.input.string()},
          {"group_size", options.group_size},
          {"target_bits", options.target_bits},
          {"allow_clamp", options.allow_clamp},
          {"input_frame_rate", options.input_frame_rate}}},
        {"measured_ppp", result.measured_ppp},
        {"output_frame_rate", clip.frame_rate},
        {"frames", clip.frames.size()}};
    result.manifest = out_dir / "manifest.json";
    write_json_file(manifest, result.manifest);
    return result;
}

} // namespace quanta
