#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "quanta/metrics.hpp"
#include "quanta/restore.hpp"
#include "quanta/sensor.hpp"
#include "quanta/video_io.hpp"

#include <nlohmann/json_fwd.hpp>

namespace quanta {

/// One reconstruction method plus its configuration.
struct MethodConfig {
    std::string name = "qudi"; ///< "average" | "align-merge" | "qudi"
    AlignMergeConfig align_merge;
    SamplerConfig sampler;

    void validate() const;
    static MethodConfig from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;
};

/// Everything a pipeline command needs; serializes to/from the JSON config
/// and manifest files. Manifests wrap this as {"command", "seed", "config"}.
struct PipelineConfig {
    SensorParams sensor = SensorParams::preset("paper-spd");
    std::string sensor_preset = "paper-spd"; ///< empty when given inline

    std::vector<double> ppp = {3.25, 9.75, 26.0};
    int frames = 11;
    int reference = -1; ///< -1 selects the middle frame
    std::vector<MethodConfig> methods;

    uint64_t seed = 0;
    bool seed_set = false; ///< absent seeds are drawn from entropy and recorded

    std::string input;                        ///< clip directory (source / ground truth)
    std::string input_pattern = "frame_*.pgm";
    std::vector<std::string> inputs;          ///< sweep clip list; falls back to {input}
    std::string burst_root;                   ///< reconstruct: directory holding ppp_* bursts

    bool metrics = false;     ///< reconstruct: fail if ground truth is missing
    bool debug_steps = false; ///< dump per-step sampler snapshots and diagnostics
    int workers = 0;          ///< 0: QUANTA_WORKERS environment variable, then 1
    bool auto_base_ppp = true; ///< derive the sampler's synthetic base PPP from the burst

    PipelineConfig();

    void validate() const;
    static PipelineConfig from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;
};

/// Reads a config file; a manifest {"command", "seed", "config"} is unwrapped
/// so commands can be re-run from their own manifests.
PipelineConfig load_pipeline_config(const std::filesystem::path& path);

/// One sweep table entry; status is "ok" or the error that stopped the cell.
struct SweepCell {
    std::string clip;
    double ppp = 0.0;
    std::string method;
    double mean_psnr = std::numeric_limits<double>::quiet_NaN();
    double mean_ssim = std::numeric_limits<double>::quiet_NaN();
    std::string status;
};

struct CommandResult {
    std::filesystem::path manifest;
    std::vector<std::filesystem::path> outputs; ///< directories/files written
    MetricReport report;                        ///< reconstruct
    std::vector<SweepCell> cells;               ///< sweep
    double measured_ppp = 0.0;                  ///< sum-bitplanes
    size_t clamped_pixels = 0;                  ///< values clamped while writing images
};

/// Simulates quanta bursts of the input clip at every configured PPP level
/// and writes them under out_dir/ppp_<level>/ plus a manifest.
CommandResult cmd_simulate(PipelineConfig cfg, const std::filesystem::path& out_dir);

/// Runs every configured method on the bursts under burst_root and writes
/// restored sequences (and metrics JSON/CSV when ground truth is supplied).
CommandResult cmd_reconstruct(PipelineConfig cfg, const std::filesystem::path& out_dir);

/// Full cross product clip x PPP x method, aggregated into a CSV and an
/// aligned text table; cell failures are recorded and the sweep continues.
CommandResult cmd_sweep(PipelineConfig cfg, const std::filesystem::path& out_dir);

struct SumBitplanesOptions {
    std::filesystem::path input;
    int group_size = 7;
    int target_bits = 3;
    bool allow_clamp = false;
    double input_frame_rate = 0.0;
};

/// Sums groups of binary frames into quanta frames, writes them as a PGM
/// sequence, and reports the measured PPP (mean frame value).
CommandResult cmd_sum_bitplanes(const SumBitplanesOptions& options,
                                const std::filesystem::path& out_dir);

/// Worker count resolution: explicit request, then the QUANTA_WORKERS
/// environment variable, then 1.
int resolve_workers(int requested);

/// Runs body(0..count-1) across up to `workers` threads; exceptions are
/// rethrown on the calling thread after all workers finish.
void parallel_for(int count, int workers, const std::function<void(int)>& body);

} // namespace quanta
