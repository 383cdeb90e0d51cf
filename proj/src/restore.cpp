#include "quanta/restore.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <nlohmann/json.hpp>

namespace quanta {

namespace {

nlohmann::json flow_to_json(const FlowConfig& cfg) {
    return nlohmann::json{{"levels", cfg.levels},
                          {"iterations", cfg.iterations},
                          {"window_radius", cfg.window_radius},
                          {"damping", cfg.damping},
                          {"chain", cfg.chain}};
}

FlowConfig flow_from_json(const nlohmann::json& j, const FlowConfig& defaults) {
    FlowConfig cfg = defaults;
    cfg.levels = j.value("levels", cfg.levels);
    cfg.iterations = j.value("iterations", cfg.iterations);
    cfg.window_radius = j.value("window_radius", cfg.window_radius);
    cfg.damping = j.value("damping", cfg.damping);
    cfg.chain = j.value("chain", cfg.chain);
    return cfg;
}

void validate_flow(const FlowConfig& cfg, const char* what) {
    if (cfg.levels < 1)
        throw InputDomainError(std::string(what) + ": flow levels must be >= 1");
    if (cfg.iterations < 1)
        throw InputDomainError(std::string(what) + ": flow iterations must be >= 1");
    if (cfg.window_radius < 1)
        throw InputDomainError(std::string(what) + ": flow window radius must be >= 1");
    if (!(cfg.damping >= 0.0) || !std::isfinite(cfg.damping))
        throw InputDomainError(std::string(what) + ": flow damping must be >= 0");
}

/// Shared intensity scale so flow estimation sees values roughly in [0, 1].
std::vector<ImageD> normalize_for_flow(const std::vector<ImageD>& frames) {
    double peak = 0.0;
    for (const auto& f : frames) peak = std::max(peak, image_max(f));
    const double s = peak > 0.0 ? 1.0 / peak : 1.0;
    std::vector<ImageD> out = frames;
    for (auto& f : out)
        for (double& v : f.values) v *= s;
    return out;
}

/// Consecutive-frame flows estimated once and shared by every reference.
struct ConsecutiveFlows {
    std::vector<FlowField> fwd; ///< fwd[i]: frame-i coordinates into frame i+1
    std::vector<FlowField> bwd; ///< bwd[i]: frame-(i+1) coordinates into frame i
};

ConsecutiveFlows consecutive_flows(const std::vector<ImageD>& frames, const FlowConfig& cfg) {
    const int n = static_cast<int>(frames.size());
    ConsecutiveFlows cons;
    cons.fwd.resize(n > 1 ? n - 1 : 0);
    cons.bwd.resize(n > 1 ? n - 1 : 0);
    for (int i = 0; i + 1 < n; ++i) {
        cons.fwd[i] = estimate_flow(frames[i], frames[i + 1], cfg);
        cons.bwd[i] = estimate_flow(frames[i + 1], frames[i], cfg);
    }
    return cons;
}

/// Composes the shared consecutive flows outward from the reference; same
/// ordering contract as bidirectional_flows (ascending, reference skipped).
std::vector<FlowField> flows_to_reference(const ConsecutiveFlows& cons, int width, int height,
                                          int n, int reference) {
    std::vector<FlowField> to_frame(n);
    to_frame[reference] = FlowField(width, height);
    for (int k = reference + 1; k < n; ++k)
        to_frame[k] = compose_flows(to_frame[k - 1], cons.fwd[k - 1]);
    for (int k = reference - 1; k >= 0; --k)
        to_frame[k] = compose_flows(to_frame[k + 1], cons.bwd[k]);

    std::vector<FlowField> out;
    out.reserve(n > 0 ? n - 1 : 0);
    for (int k = 0; k < n; ++k)
        if (k != reference) out.push_back(std::move(to_frame[k]));
    return out;
}

/// Validity-gated consistency-weighted average of warped neighbors around
/// the reference frame. flows follow the bidirectional_flows ordering.
FluxImage merge_to_reference(const std::vector<ImageD>& denoised,
                             const std::vector<FlowField>& flows, int reference,
                             double merge_sigma) {
    const ImageD& ref = denoised[reference];
    ImageD acc = ref;                         // reference contributes with weight 1
    ImageD weight(ref.width, ref.height, 1.0);
    const double inv_two_sigma2 = 1.0 / (2.0 * merge_sigma * merge_sigma);

    size_t fi = 0;
    for (size_t j = 0; j < denoised.size(); ++j) {
        if (static_cast<int>(j) == reference) continue;
        const WarpResult warped = warp_catmull_rom(denoised[j], flows[fi++]);
        for (size_t p = 0; p < ref.size(); ++p) {
            if (!warped.valid[p]) continue;
            const double d = warped.image[p] - ref[p];
            const double w = std::exp(-d * d * inv_two_sigma2);
            acc[p] += w * warped.image[p];
            weight[p] += w;
        }
    }
    for (size_t p = 0; p < acc.size(); ++p) acc[p] /= weight[p];
    return acc;
}

/// Sensor copy with a deep ADC for the in-loop synthetic stream: the ramped
/// photon budget would clip hard against a low-bit ADC and bias the
/// synthetic data low once mapped back to flux units. Dark current and read
/// noise are dropped too — the dark mean is subtracted right back out when
/// the counts are normalized, so for self-generated data those terms only
/// add variance that the sampler would have to denoise away again. The
/// photon shot noise of the scheduled budget is kept, and the captured data
/// is never touched by this.
SensorParams synthetic_readout_params(const SensorParams& captured) {
    SensorParams wide = captured;
    if (wide.n_bits < 12) wide.n_bits = 12;
    const uint32_t needed = (1u << wide.n_bits) - 1;
    if (wide.fwc < needed) wide.fwc = needed;
    wide.dark_current = 0.0;
    wide.read_noise_sigma = 0.0;
    return wide;
}

ImageD counts_to_flux(const QuantaFrame& frame, const SensorParams& params, double flux_scale) {
    ImageD out(frame.width, frame.height);
    const double inv = 1.0 / (params.qe * flux_scale);
    for (size_t p = 0; p < frame.size(); ++p)
        out[p] = (static_cast<double>(frame.values[p]) - params.dark_current) * inv;
    return out;
}

} // namespace

int ReconstructionRequest::reference_index() const {
    return reference < 0 ? frame_count() / 2 : reference;
}

void ReconstructionRequest::validate() const {
    params.validate();
    if (burst.frames.empty())
        throw InputDomainError("reconstruction request: empty burst");
    const QuantaFrame& first = burst.frames.front();
    if (first.width <= 0 || first.height <= 0)
        throw InputDomainError("reconstruction request: empty frames");
    for (const auto& f : burst.frames) {
        if (f.width != first.width || f.height != first.height)
            throw InputDomainError("reconstruction request: frame dimensions differ");
        if (f.n_bits != params.n_bits)
            throw InputDomainError("reconstruction request: frame bit depth " +
                                   std::to_string(f.n_bits) + " does not match sensor n_bits " +
                                   std::to_string(params.n_bits));
    }
    if (reference < -1 || reference >= frame_count())
        throw InputDomainError("reconstruction request: reference index " +
                               std::to_string(reference) + " outside [0, " +
                               std::to_string(frame_count() - 1) + "]");
}

void AlignMergeConfig::validate() const {
    denoiser.validate();
    validate_flow(flow, "align_merge");
    if (!(merge_sigma > 0.0) || !std::isfinite(merge_sigma))
        throw InputDomainError("align_merge: merge_sigma must be > 0");
}

AlignMergeConfig AlignMergeConfig::from_json(const nlohmann::json& j) {
    AlignMergeConfig cfg;
    if (j.contains("denoiser")) cfg.denoiser = DenoiserSpec::from_json(j.at("denoiser"));
    if (j.contains("flow")) cfg.flow = flow_from_json(j.at("flow"), cfg.flow);
    cfg.merge_sigma = j.value("merge_sigma", cfg.merge_sigma);
    cfg.validate();
    return cfg;
}

nlohmann::json AlignMergeConfig::to_json() const {
    return nlohmann::json{{"denoiser", denoiser.to_json()},
                          {"flow", flow_to_json(flow)},
                          {"merge_sigma", merge_sigma}};
}

double SamplerConfig::alpha_bar(int t) const {
    if (t < 0 || t > total_steps)
        throw InputDomainError("sampler: schedule step " + std::to_string(t) + " outside [0, " +
                               std::to_string(total_steps) + "]");
    const double s = schedule_shift;
    const auto signal = [&](double x) {
        const double arg =
            (x / (total_steps + 1.0) + s) / (1.0 + s) * (std::numbers::pi / 2.0);
        const double c = std::cos(arg);
        return c * c;
    };
    return signal(static_cast<double>(t)) / signal(0.0);
}

double SamplerConfig::fusion_weight(int t) const {
    if (t < 1 || t > total_steps)
        throw InputDomainError("sampler: fusion weight step outside [1, total_steps]");
    const double u = static_cast<double>(total_steps - t) /
                     static_cast<double>(std::max(1, total_steps - 1));
    return fusion_weight_start + (fusion_weight_end - fusion_weight_start) * u;
}

double SamplerConfig::refine_strength(int t) const {
    if (t < 1 || t > total_steps)
        throw InputDomainError("sampler: refine strength step outside [1, total_steps]");
    const double u = static_cast<double>(total_steps - t) /
                     static_cast<double>(std::max(1, total_steps - 1));
    return refine_strength_start + (refine_strength_end - refine_strength_start) * u;
}

SyntheticSchedule SamplerConfig::synthetic_schedule() const {
    return SyntheticSchedule{total_steps, synthetic_base_ppp, synthetic_gain};
}

void SamplerConfig::validate() const {
    if (total_steps < 1)
        throw InputDomainError("sampler: total_steps must be >= 1");
    if (!(schedule_shift > 0.0) || !(schedule_shift < 1.0))
        throw InputDomainError("sampler: schedule_shift must be in (0, 1)");
    if (!(synthetic_base_ppp > 0.0))
        throw InputDomainError("sampler: synthetic_base_ppp must be > 0");
    if (!(synthetic_gain >= 0.0))
        throw InputDomainError("sampler: synthetic_gain must be >= 0");
    for (double w : {fusion_weight_start, fusion_weight_end})
        if (!(w >= 0.0) || !(w <= 1.0))
            throw InputDomainError("sampler: fusion weights must be in [0, 1]");
    if (fusion_weight_end < fusion_weight_start)
        throw InputDomainError("sampler: fusion weight must not decrease towards t = 1");
    for (double s : {refine_strength_start, refine_strength_end})
        if (!(s >= 0.0) || !std::isfinite(s))
            throw InputDomainError("sampler: refine strengths must be >= 0");
    if (!(self_conditioning >= 0.0) || !(self_conditioning <= 1.0))
        throw InputDomainError("sampler: self_conditioning must be in [0, 1]");
    if (!(merge_sigma > 0.0) || !std::isfinite(merge_sigma))
        throw InputDomainError("sampler: merge_sigma must be > 0");
    predenoiser.validate();
    validate_flow(flow, "sampler");

    double prev = alpha_bar(0);
    if (prev != 1.0)
        throw InputDomainError("sampler: alpha_bar(0) must be 1");
    for (int t = 1; t <= total_steps; ++t) {
        const double a = alpha_bar(t);
        if (!(a > 0.0) || !(a < prev))
            throw InputDomainError("sampler: alpha_bar must be strictly decreasing in (0, 1]");
        prev = a;
    }
}

SamplerConfig SamplerConfig::from_json(const nlohmann::json& j) {
    SamplerConfig cfg;
    cfg.total_steps = j.value("total_steps", cfg.total_steps);
    cfg.schedule_shift = j.value("schedule_shift", cfg.schedule_shift);
    cfg.synthetic_base_ppp = j.value("synthetic_base_ppp", cfg.synthetic_base_ppp);
    cfg.synthetic_gain = j.value("synthetic_gain", cfg.synthetic_gain);
    cfg.fusion_weight_start = j.value("fusion_weight_start", cfg.fusion_weight_start);
    cfg.fusion_weight_end = j.value("fusion_weight_end", cfg.fusion_weight_end);
    cfg.refine_strength_start = j.value("refine_strength_start", cfg.refine_strength_start);
    cfg.refine_strength_end = j.value("refine_strength_end", cfg.refine_strength_end);
    cfg.self_conditioning = j.value("self_conditioning", cfg.self_conditioning);
    cfg.merge_sigma = j.value("merge_sigma", cfg.merge_sigma);
    cfg.deterministic = j.value("deterministic", cfg.deterministic);
    if (j.contains("predenoiser")) cfg.predenoiser = DenoiserSpec::from_json(j.at("predenoiser"));
    if (j.contains("flow")) cfg.flow = flow_from_json(j.at("flow"), cfg.flow);
    cfg.validate();
    return cfg;
}

nlohmann::json SamplerConfig::to_json() const {
    return nlohmann::json{{"total_steps", total_steps},
                          {"schedule_shift", schedule_shift},
                          {"synthetic_base_ppp", synthetic_base_ppp},
                          {"synthetic_gain", synthetic_gain},
                          {"fusion_weight_start", fusion_weight_start},
                          {"fusion_weight_end", fusion_weight_end},
                          {"refine_strength_start", refine_strength_start},
                          {"refine_strength_end", refine_strength_end},
                          {"self_conditioning", self_conditioning},
                          {"merge_sigma", merge_sigma},
                          {"deterministic", deterministic},
                          {"predenoiser", predenoiser.to_json()},
                          {"flow", flow_to_json(flow)}};
}

FluxImage naive_average(const QuantaBurst& burst, const SensorParams& params) {
    params.validate();
    if (burst.frames.empty())
        throw InputDomainError("naive_average: empty burst");
    const QuantaFrame& first = burst.frames.front();
    FluxImage out(first.width, first.height);
    for (const auto& f : burst.frames) {
        if (f.width != first.width || f.height != first.height)
            throw InputDomainError("naive_average: frame dimensions differ");
        for (size_t p = 0; p < out.size(); ++p) out[p] += static_cast<double>(f.values[p]);
    }
    const double inv_n = 1.0 / static_cast<double>(burst.frames.size());
    for (double& v : out.values)
        v = std::max(0.0, (v * inv_n - params.dark_current) / params.qe);
    return out;
}

double estimate_ppp(const QuantaBurst& burst, const SensorParams& params) {
    params.validate();
    if (burst.frames.empty())
        throw InputDomainError("estimate_ppp: empty burst");
    double sum = 0.0;
    size_t count = 0;
    for (const auto& f : burst.frames) {
        for (uint16_t v : f.values) sum += static_cast<double>(v);
        count += f.size();
    }
    const double mean = sum / static_cast<double>(count);
    return std::max(0.05, mean - params.dark_current);
}

FluxImage align_merge(const ReconstructionRequest& request, const AlignMergeConfig& cfg) {
    request.validate();
    cfg.validate();

    const int n = request.frame_count();
    std::vector<ImageD> denoised;
    denoised.reserve(n);
    for (const auto& f : request.burst.frames)
        denoised.push_back(predenoise_frame(f, request.params, cfg.denoiser));
    if (n == 1) return denoised.front();

    const int ref = request.reference_index();
    const std::vector<ImageD> flow_input = normalize_for_flow(denoised);
    const std::vector<FlowField> flows = bidirectional_flows(flow_input, ref, cfg.flow);
    return merge_to_reference(denoised, flows, ref, cfg.merge_sigma);
}

SamplerResult qudi_sample(const ReconstructionRequest& request, const SamplerConfig& cfg,
                          RngSeed seed, const StepObserver& observer) {
    request.validate();
    cfg.validate();

    const int n = request.frame_count();
    const int width = request.burst.width();
    const int height = request.burst.height();
    const int ref = request.reference_index();
    const int total = cfg.total_steps;
    const SensorParams& params = request.params;
    const SensorParams synthetic_params = synthetic_readout_params(params);

    // Captured burst mapped to (unclamped) flux units once; the mean count
    // doubles as the Poisson variance proxy for the fusion noise model.
    std::vector<ImageD> captured_flux;
    captured_flux.reserve(n);
    double captured_count_mean = 0.0;
    for (const auto& f : request.burst.frames) {
        for (uint16_t v : f.values) captured_count_mean += static_cast<double>(v);
        captured_flux.push_back(counts_to_flux(f, params, 1.0));
    }
    captured_count_mean /=
        static_cast<double>(n) * static_cast<double>(width) * static_cast<double>(height);

    // Initial clean estimate: align-and-merge around every reference frame,
    // sharing the consecutive flow estimates across references.
    FluxVideo x_hat;
    {
        std::vector<ImageD> denoised;
        denoised.reserve(n);
        for (const auto& f : request.burst.frames)
            denoised.push_back(predenoise_frame(f, params, cfg.predenoiser));
        if (n == 1) {
            x_hat.frames.push_back(denoised.front());
        } else {
            const std::vector<ImageD> flow_input = normalize_for_flow(denoised);
            if (cfg.flow.chain) {
                const ConsecutiveFlows cons = consecutive_flows(flow_input, cfg.flow);
                for (int r = 0; r < n; ++r)
                    x_hat.frames.push_back(merge_to_reference(
                        denoised, flows_to_reference(cons, width, height, n, r), r,
                        cfg.merge_sigma));
            } else {
                for (int r = 0; r < n; ++r)
                    x_hat.frames.push_back(merge_to_reference(
                        denoised, bidirectional_flows(flow_input, r, cfg.flow), r,
                        cfg.merge_sigma));
            }
        }
    }

    // The diffusion iterate lives in a normalized domain so the schedule is
    // independent of the scene's absolute photon level.
    double flux_scale = 0.0;
    for (const auto& f : x_hat.frames) flux_scale = std::max(flux_scale, image_max(f));
    if (!(flux_scale > 0.0)) flux_scale = 1.0;
    const double inv_flux_scale = 1.0 / flux_scale;

    // x_T ~ Gaussian(0, I), one iterate per output frame.
    std::vector<ImageD> x_t;
    x_t.reserve(n);
    for (int r = 0; r < n; ++r) {
        ImageD noise(width, height);
        const uint64_t stream = stream_space::sampler + seed.stream +
                                static_cast<uint64_t>(total) * static_cast<uint64_t>(n) +
                                static_cast<uint64_t>(r);
        for (size_t p = 0; p < noise.size(); ++p) {
            PixelRng rng(seed.seed, stream, p);
            noise[p] = rng.next_gaussian();
        }
        x_t.push_back(std::move(noise));
    }

    SamplerResult result;
    result.steps.reserve(total);

    for (int t = total; t >= 1; --t) {
        // 1. Synthetic measurements from the current estimate at this step's
        //    photon budget, on streams disjoint from the captured data.
        const SyntheticBurst synthetic = simulate_synthetic_measurements(
            x_hat, synthetic_params, t, cfg.synthetic_schedule(), seed);

        // 2. Convex per-pixel fusion of synthetic and captured data, both in
        //    flux units.
        double w = cfg.fusion_weight(t);
        if (const char* fw = std::getenv("QUDI_FORCE_W")) w = std::atof(fw);  // TEMP
        double synthetic_count_mean = 0.0;
        std::vector<ImageD> fused;
        fused.reserve(n);
        for (int j = 0; j < n; ++j) {
            const QuantaFrame& syn = synthetic.burst.frames[j];
            for (uint16_t v : syn.values) synthetic_count_mean += static_cast<double>(v);
            ImageD syn_flux = counts_to_flux(syn, synthetic_params, synthetic.flux_scale);
            for (size_t p = 0; p < syn_flux.size(); ++p)
                syn_flux[p] = w * syn_flux[p] + (1.0 - w) * captured_flux[j][p];
            fused.push_back(std::move(syn_flux));
        }
        synthetic_count_mean /=
            static_cast<double>(n) * static_cast<double>(width) * static_cast<double>(height);

        // 3. Predenoise, flows, temporal fusion per reference frame. The
        //    variance stabilizer assumes single-capture Poisson noise, but the
        //    fused frames carry only w^2/s^2-scaled synthetic plus
        //    (1-w)^2-scaled captured variance, so the denoiser strength is
        //    shrunk by the analytic ratio to avoid over-smoothing.
        const double s2 = synthetic.flux_scale * synthetic.flux_scale;
        const double fused_var = w * w * synthetic_count_mean / std::max(s2, 1e-12) +
                                 (1.0 - w) * (1.0 - w) * captured_count_mean;
        const double noise_ratio =
            std::sqrt(std::clamp(fused_var / std::max(captured_count_mean, 1e-12), 0.0, 1.0));
        // Intermediate steps under-smooth on purpose: their output recycles
        // through the synthetic channel, so residual bias compounds while
        // residual noise is re-averaged. The terminal step never recycles and
        // takes the per-frame MSE-optimal strength instead.
        DenoiserSpec loop_denoiser = cfg.predenoiser;
        loop_denoiser.strength =
            cfg.predenoiser.strength * (t == 1 ? std::sqrt(noise_ratio) : noise_ratio);

        std::vector<ImageD> denoised;
        denoised.reserve(n);
        for (const auto& z : fused)
            denoised.push_back(predenoise_flux(z, params, loop_denoiser));

        const double merge_sigma = cfg.merge_sigma;
        std::vector<ImageD> candidates;
        candidates.reserve(n);
        if (n == 1) {
            candidates.push_back(denoised.front());
        } else {
            const std::vector<ImageD> flow_input = normalize_for_flow(denoised);
            if (cfg.flow.chain) {
                const ConsecutiveFlows cons = consecutive_flows(flow_input, cfg.flow);
                for (int r = 0; r < n; ++r)
                    candidates.push_back(merge_to_reference(
                        denoised, flows_to_reference(cons, width, height, n, r), r,
                        merge_sigma));
            } else {
                for (int r = 0; r < n; ++r)
                    candidates.push_back(merge_to_reference(
                        denoised, bidirectional_flows(flow_input, r, cfg.flow), r,
                        merge_sigma));
            }
        }

        // 4. Refinement with self-conditioning: blend the fused candidate
        //    with the previous estimate, then denoise at the scheduled
        //    strength (in the variance-stabilized domain via predenoise_flux).
        const double gamma = cfg.self_conditioning;
        const double strength = cfg.refine_strength(t);
        DenoiserSpec refine = cfg.predenoiser;
        refine.strength = strength;

        FluxVideo next_x_hat;
        next_x_hat.frames.reserve(n);
        double max_update = 0.0;
        for (int r = 0; r < n; ++r) {
            ImageD blend = candidates[r];
            for (size_t p = 0; p < blend.size(); ++p)
                blend[p] = gamma * blend[p] + (1.0 - gamma) * x_hat.frames[r][p];
            ImageD refined = predenoise_flux(blend, params, refine);
            for (size_t p = 0; p < refined.size(); ++p) {
                if (!std::isfinite(refined[p]))
                    throw NumericalError("qudi_sample: non-finite estimate at step " +
                                         std::to_string(t));
                max_update = std::max(max_update,
                                      std::abs(refined[p] - x_hat.frames[r][p]));
            }
            next_x_hat.frames.push_back(std::move(refined));
        }

        // 5. Chain update (DDIM form) in the normalized domain; the
        //    stochastic variant adds posterior-scaled fresh noise.
        const double ab_t = cfg.alpha_bar(t);
        const double ab_prev = cfg.alpha_bar(t - 1);
        const double eps_scale = 1.0 / std::sqrt(1.0 - ab_t);
        double sigma_t = 0.0;
        if (!cfg.deterministic && ab_prev < 1.0)
            sigma_t = std::sqrt((1.0 - ab_prev) / (1.0 - ab_t) * (1.0 - ab_t / ab_prev));
        for (int r = 0; r < n; ++r) {
            const uint64_t noise_stream = stream_space::sampler + seed.stream +
                                          static_cast<uint64_t>(t - 1) *
                                              static_cast<uint64_t>(n) +
                                          static_cast<uint64_t>(r);
            for (size_t p = 0; p < x_t[r].size(); ++p) {
                const double xh = next_x_hat.frames[r][p] * inv_flux_scale;
                const double eps = (x_t[r][p] - std::sqrt(ab_t) * xh) * eps_scale;
                double next = std::sqrt(ab_prev) * xh + std::sqrt(1.0 - ab_prev) * eps;
                if (sigma_t > 0.0) {
                    PixelRng rng(seed.seed, noise_stream, p);
                    next += sigma_t * rng.next_gaussian();
                }
                x_t[r][p] = next;
            }
        }

        StepDiagnostics diag;
        diag.step = t;
        diag.alpha_bar = ab_t;
        diag.synthetic_ppp = synthetic_ppp_schedule(t, total, cfg.synthetic_base_ppp,
                                                    cfg.synthetic_gain);
        diag.fusion_weight = w;
        diag.refine_strength = strength;
        diag.consistency =
            forward_consistency(next_x_hat.frames[ref], request.burst.frames[ref], params);
        diag.max_update = max_update;
        result.steps.push_back(diag);

        x_hat = std::move(next_x_hat);
        if (observer) {
            if (std::getenv("QUDI_OBSERVE_CANDIDATE")) {  // TEMP instrumentation
                FluxVideo cand;
                cand.frames.assign(candidates.begin(), candidates.end());
                observer(cand, diag);
            } else
            observer(x_hat, diag);
        }
    }

    result.restored = std::move(x_hat);
    return result;
}

namespace {

/// Readout pmf tables shared across pixels of one forward_consistency call.
/// bin[e * (adc_max + 1) + k] = P(readout bin k | e electrons before read
/// noise); rows cover the explicitly enumerated electron counts 0..e_cap.
struct ReadoutTables {
    int adc_max = 0;
    int e_cap = 0;
    bool lump_at_cap = false; ///< e_cap == fwc: tail mass lumped into the last row
    std::vector<double> bin;
    std::vector<double> log_factorial;
};

double gaussian_cdf(double x) { return 0.5 * std::erfc(-x * std::numbers::sqrt2 / 2.0); }

ReadoutTables build_readout_tables(const SensorParams& params) {
    ReadoutTables t;
    t.adc_max = params.adc_max();
    const double sigma = params.read_noise_sigma;

    // Electron counts above adc_max + ~10 sigma land in the top ADC bin with
    // probability indistinguishable from 1, so the Poisson tail beyond e_cap
    // is folded into the top bin analytically (or lumped at fwc if smaller).
    const int spread = static_cast<int>(std::ceil(10.0 * sigma)) + 10;
    int cap = t.adc_max + spread;
    if (static_cast<uint32_t>(cap) >= params.fwc) {
        cap = static_cast<int>(params.fwc);
        t.lump_at_cap = true;
    }
    t.e_cap = cap;

    t.bin.resize(static_cast<size_t>(cap + 1) * (t.adc_max + 1));
    for (int e = 0; e <= cap; ++e) {
        for (int k = 0; k <= t.adc_max; ++k) {
            double p;
            if (sigma > 0.0) {
                const double lo = (k - 0.5 - e) / sigma;
                const double hi = (k + 0.5 - e) / sigma;
                if (k == 0)
                    p = gaussian_cdf(hi);
                else if (k == t.adc_max)
                    p = 1.0 - gaussian_cdf(lo);
                else
                    p = gaussian_cdf(hi) - gaussian_cdf(lo);
            } else {
                const int quantized = std::clamp(e, 0, t.adc_max);
                p = (quantized == k) ? 1.0 : 0.0;
            }
            t.bin[static_cast<size_t>(e) * (t.adc_max + 1) + k] = p;
        }
    }

    t.log_factorial.resize(cap + 1);
    for (int e = 0; e <= cap; ++e) t.log_factorial[e] = std::lgamma(static_cast<double>(e) + 1.0);
    return t;
}

double pixel_nll(double lambda, int y, const ReadoutTables& t) {
    constexpr double kFloor = 1e-300;
    const int stride = t.adc_max + 1;
    double prob = 0.0;

    if (lambda <= 0.0) {
        prob = t.bin[static_cast<size_t>(y)]; // all mass at e = 0
    } else {
        const double log_lambda = std::log(lambda);
        double cdf = 0.0;
        for (int e = 0; e <= t.e_cap; ++e) {
            double pe;
            if (t.lump_at_cap && e == t.e_cap) {
                pe = std::max(0.0, 1.0 - cdf); // full-well lump
            } else {
                pe = std::exp(e * log_lambda - lambda - t.log_factorial[e]);
            }
            cdf += pe;
            prob += pe * t.bin[static_cast<size_t>(e) * stride + y];
        }
        if (!t.lump_at_cap && y == t.adc_max) prob += std::max(0.0, 1.0 - cdf);
    }
    return -std::log(std::max(prob, kFloor));
}

} // namespace

double forward_consistency(const FluxImage& estimate, const QuantaFrame& frame,
                           const SensorParams& params) {
    params.validate();
    if (estimate.width != frame.width || estimate.height != frame.height)
        throw InputDomainError("forward_consistency: estimate and frame dimensions differ");
    if (estimate.size() == 0)
        throw InputDomainError("forward_consistency: empty inputs");

    const ReadoutTables tables = build_readout_tables(params);
    double total = 0.0;
    for (size_t p = 0; p < estimate.size(); ++p) {
        const double flux = std::max(0.0, estimate[p]);
        const double lambda = params.qe * flux + params.dark_current;
        const int y = std::clamp(static_cast<int>(frame.values[p]), 0, tables.adc_max);
        total += pixel_nll(lambda, y, tables);
    }
    return total / static_cast<double>(estimate.size());
}

double forward_consistency(const FluxImage& estimate, const QuantaBurst& burst,
                           const SensorParams& params) {
    if (burst.frames.empty())
        throw InputDomainError("forward_consistency: empty burst");
    double total = 0.0;
    for (const auto& f : burst.frames) total += forward_consistency(estimate, f, params);
    return total / static_cast<double>(burst.frames.size());
}

} // namespace quanta
