#include "quanta/sensor.hpp"

#include <cmath>

#include <nlohmann/json.hpp>

namespace quanta {

void SensorParams::validate() const {
    if (!(qe > 0.0) || qe > 1.0)
        throw InputDomainError("sensor: qe must be in (0, 1], got " + std::to_string(qe));
    if (!(dark_current >= 0.0) || !std::isfinite(dark_current))
        throw InputDomainError("sensor: dark_current must be >= 0, got " + std::to_string(dark_current));
    if (!(read_noise_sigma >= 0.0) || !std::isfinite(read_noise_sigma))
        throw InputDomainError("sensor: read_noise_sigma must be >= 0, got " +
                               std::to_string(read_noise_sigma));
    if (n_bits < 1 || n_bits > 16)
        throw InputDomainError("sensor: n_bits must be in [1, 16], got " + std::to_string(n_bits));
    if (fwc < static_cast<uint32_t>((1 << n_bits) - 1))
        throw InputDomainError("sensor: fwc (" + std::to_string(fwc) +
                               ") must be >= 2^n_bits - 1 = " + std::to_string((1 << n_bits) - 1));
}

SensorParams SensorParams::preset(const std::string& name) {
    // fwc well above the 3-bit ceiling so saturation is ADC-dominated
    if (name == "paper-spd") return SensorParams{0.80, 1.6, 0.2, 3, 100};
    std::string avail;
    for (const auto& n : preset_names()) avail += (avail.empty() ? "" : ", ") + n;
    throw InputDomainError("unknown sensor preset \"" + name + "\"; available: " + avail);
}

std::vector<std::string> SensorParams::preset_names() { return {"paper-spd"}; }

SensorParams SensorParams::from_json(const nlohmann::json& j) {
    SensorParams p;
    try {
        p.qe = j.at("qe").get<double>();
        p.dark_current = j.at("dark_current").get<double>();
        p.read_noise_sigma = j.at("read_noise_sigma").get<double>();
        p.n_bits = j.at("n_bits").get<int>();
        p.fwc = j.at("fwc").get<uint32_t>();
    } catch (const nlohmann::json::exception& e) {
        throw InputDomainError(std::string("sensor json: ") + e.what());
    }
    p.validate();
    return p;
}

nlohmann::json SensorParams::to_json() const {
    return nlohmann::json{{"qe", qe},
                          {"dark_current", dark_current},
                          {"read_noise_sigma", read_noise_sigma},
                          {"n_bits", n_bits},
                          {"fwc", fwc}};
}

double synthetic_ppp_schedule(int t, int total_steps, double base_ppp, double gain) {
    if (total_steps < 1)
        throw InputDomainError("schedule: total_steps must be >= 1");
    if (t < 1 || t > total_steps)
        throw InputDomainError("schedule: step index " + std::to_string(t) + " outside [1, " +
                               std::to_string(total_steps) + "]");
    if (!(base_ppp > 0.0))
        throw InputDomainError("schedule: base_ppp must be > 0");
    if (!(gain >= 0.0))
        throw InputDomainError("schedule: gain must be >= 0");
    return base_ppp * (1.0 + gain * static_cast<double>(total_steps - t) /
                                 static_cast<double>(total_steps));
}

QuantaFrame simulate_frame(const FluxImage& flux, const SensorParams& params, RngSeed seed) {
    params.validate();
    if (flux.width <= 0 || flux.height <= 0)
        throw InputDomainError("simulate_frame: empty flux image");
    check_flux(flux, "simulate_frame");

    QuantaFrame out(flux.width, flux.height, params.n_bits);
    const double adc_max = static_cast<double>(out.max_value());
    const double fwc = static_cast<double>(params.fwc);
    const double sigma = params.read_noise_sigma;

    for (size_t p = 0; p < flux.size(); ++p) {
        PixelRng rng(seed.seed, seed.stream, p);
        const double lambda = params.qe * flux[p] + params.dark_current;
        double e = static_cast<double>(rng.next_poisson(lambda));
        if (e > fwc) e = fwc; // charge-domain saturation precedes readout noise
        double a = e;
        if (sigma > 0.0) a += sigma * rng.next_gaussian();
        double y = std::round(a); // half away from zero
        if (y < 0.0) y = 0.0;
        if (y > adc_max) y = adc_max;
        out.values[p] = static_cast<uint16_t>(y);
    }
    return out;
}

QuantaBurst simulate_burst(const FluxVideo& video, const SensorParams& params, RngSeed seed) {
    if (video.frames.empty())
        throw InputDomainError("simulate_burst: empty video");
    for (size_t i = 1; i < video.frames.size(); ++i)
        check_same_dims(video.frames[0], video.frames[i], "simulate_burst");

    QuantaBurst burst;
    burst.frames.reserve(video.frames.size());
    for (size_t i = 0; i < video.frames.size(); ++i)
        burst.frames.push_back(
            simulate_frame(video.frames[i], params, RngSeed{seed.seed, seed.stream + i}));
    return burst;
}

double flux_scale_for_ppp(const FluxVideo& video, const SensorParams& params, double target_ppp) {
    params.validate();
    if (video.frames.empty())
        throw InputDomainError("scale_flux_to_ppp: empty video");
    if (!(target_ppp > 0.0))
        throw InputDomainError("scale_flux_to_ppp: target_ppp must be > 0");

    double sum = 0.0;
    size_t count = 0;
    for (const auto& f : video.frames) {
        check_flux(f, "scale_flux_to_ppp");
        for (double v : f.values) sum += v;
        count += f.size();
    }
    const double mean_signal = params.qe * sum / static_cast<double>(count);
    if (mean_signal <= 0.0)
        throw InputDomainError("scale_flux_to_ppp: video is all zero, cannot scale");
    return target_ppp / mean_signal;
}

FluxVideo scale_flux_to_ppp(const FluxVideo& video, const SensorParams& params, double target_ppp) {
    const double s = flux_scale_for_ppp(video, params, target_ppp);
    FluxVideo out = video;
    for (auto& f : out.frames)
        for (double& v : f.values) v *= s;
    return out;
}

SyntheticBurst simulate_synthetic_measurements(const FluxVideo& estimate, const SensorParams& params,
                                               int t, const SyntheticSchedule& schedule, RngSeed seed) {
    if (estimate.frames.empty())
        throw InputDomainError("simulate_synthetic_measurements: empty estimate");

    FluxVideo clamped = estimate;
    double sum = 0.0;
    for (auto& f : clamped.frames) {
        for (double& v : f.values) {
            if (!std::isfinite(v))
                throw NumericalError("simulate_synthetic_measurements: non-finite estimate value");
            if (v < 0.0) v = 0.0;
            sum += v;
        }
    }

    const double ppp = synthetic_ppp_schedule(t, schedule.total_steps, schedule.base_ppp, schedule.gain);
    double scale = 1.0;
    if (sum > 0.0) {
        scale = flux_scale_for_ppp(clamped, params, ppp);
        for (auto& f : clamped.frames)
            for (double& v : f.values) v *= scale;
    }

    const uint64_t n = clamped.frames.size();
    const uint64_t stream0 =
        stream_space::synthetic + seed.stream + static_cast<uint64_t>(t) * n;
    return SyntheticBurst{simulate_burst(clamped, params, RngSeed{seed.seed, stream0}), scale};
}

} // namespace quanta
