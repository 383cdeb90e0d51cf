#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "quanta/errors.hpp"
#include "quanta/pipeline.hpp"

namespace {

struct CommonArgs {
    std::string config;
    std::string out;
    uint64_t seed = 0;
    int workers = 0;
    bool debug_steps = false;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config, "JSON config file or a previously emitted manifest")
        ->check(CLI::ExistingFile);
    cmd->add_option("--out", args.out, "output directory")->required();
    cmd->add_option("--seed", args.seed, "RNG seed (omitted: drawn from entropy and recorded)");
    cmd->add_option("--workers", args.workers,
                    "worker threads (0: QUANTA_WORKERS environment variable, then 1)");
    cmd->add_flag("--debug-steps", args.debug_steps,
                  "write per-step sampler snapshots and diagnostics");
}

quanta::PipelineConfig make_config(const CLI::App* cmd, const CommonArgs& args) {
    quanta::PipelineConfig cfg;
    if (!args.config.empty()) cfg = quanta::load_pipeline_config(args.config);
    if (cmd->count("--seed") > 0) {
        cfg.seed = args.seed;
        cfg.seed_set = true;
    }
    if (cmd->count("--workers") > 0) cfg.workers = args.workers;
    if (args.debug_steps) cfg.debug_steps = true;
    return cfg;
}

void report_clamps(const quanta::CommandResult& result) {
    if (result.clamped_pixels > 0)
        std::fprintf(stderr, "warning: %zu pixel values clamped to [0,1] while writing images\n",
                     result.clamped_pixels);
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Seeded single-photon video capture simulator and multi-frame restorer"};
    app.require_subcommand(1);

    CommonArgs sim_args;
    std::string sim_input, sim_pattern, sim_preset;
    std::vector<double> sim_ppp;
    int sim_frames = 0;
    CLI::App* sim = app.add_subcommand("simulate", "simulate quanta bursts from a clip");
    add_common(sim, sim_args);
    sim->add_option("--input", sim_input, "directory holding the source image sequence");
    sim->add_option("--pattern", sim_pattern, "sequence filename pattern, e.g. frame_*.pgm");
    sim->add_option("--preset", sim_preset, "sensor preset name");
    sim->add_option("--ppp", sim_ppp, "photons-per-pixel levels to simulate");
    sim->add_option("--frames", sim_frames, "frames per burst");

    CommonArgs rec_args;
    std::string rec_bursts, rec_input, rec_pattern;
    bool rec_metrics = false;
    CLI::App* rec = app.add_subcommand("reconstruct", "restore bursts with each configured method");
    add_common(rec, rec_args);
    rec->add_option("--bursts", rec_bursts, "directory holding ppp_* burst subdirectories");
    rec->add_option("--input", rec_input, "ground-truth clip directory (enables metrics)");
    rec->add_option("--pattern", rec_pattern, "ground-truth filename pattern");
    rec->add_flag("--metrics", rec_metrics, "require ground truth and emit metrics JSON/CSV");

    CommonArgs sweep_args;
    std::vector<std::string> sweep_inputs;
    int sweep_frames = 0;
    CLI::App* sweep = app.add_subcommand("sweep", "clip x ppp x method comparison table");
    add_common(sweep, sweep_args);
    sweep->add_option("--input", sweep_inputs, "clip directories (repeatable)");
    sweep->add_option("--frames", sweep_frames, "frames per burst");

    quanta::SumBitplanesOptions sb_options;
    std::string sb_out;
    CLI::App* sb = app.add_subcommand("sum-bitplanes",
                                      "sum packed 1-bit frames into multi-bit quanta frames");
    std::string sb_input;
    sb->add_option("--input", sb_input, "bit-plane stream file (QBPS)")
        ->required()
        ->check(CLI::ExistingFile);
    sb->add_option("--out", sb_out, "output directory")->required();
    sb->add_option("--group", sb_options.group_size, "binary frames summed per output frame");
    sb->add_option("--bits", sb_options.target_bits, "output bit depth");
    sb->add_flag("--allow-clamp", sb_options.allow_clamp,
                 "clamp sums that exceed the output bit depth");
    sb->add_option("--fps", sb_options.input_frame_rate, "input stream frame rate");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? quanta::exit_code::ok : quanta::exit_code::config;
    }

    try {
        if (sim->parsed()) {
            quanta::PipelineConfig cfg = make_config(sim, sim_args);
            if (!sim_input.empty()) cfg.input = sim_input;
            if (!sim_pattern.empty()) cfg.input_pattern = sim_pattern;
            if (!sim_preset.empty()) {
                cfg.sensor = quanta::SensorParams::preset(sim_preset);
                cfg.sensor_preset = sim_preset;
            }
            if (!sim_ppp.empty()) cfg.ppp = sim_ppp;
            if (sim_frames > 0) cfg.frames = sim_frames;
            const quanta::CommandResult result = quanta::cmd_simulate(cfg, sim_args.out);
            std::printf("wrote %zu burst directories under %s\n", result.outputs.size(),
                        sim_args.out.c_str());
            std::printf("manifest: %s\n", result.manifest.string().c_str());
        } else if (rec->parsed()) {
            quanta::PipelineConfig cfg = make_config(rec, rec_args);
            if (!rec_bursts.empty()) cfg.burst_root = rec_bursts;
            if (!rec_input.empty()) cfg.input = rec_input;
            if (!rec_pattern.empty()) cfg.input_pattern = rec_pattern;
            if (rec_metrics) cfg.metrics = true;
            const quanta::CommandResult result = quanta::cmd_reconstruct(cfg, rec_args.out);
            report_clamps(result);
            for (const auto& row : result.report.rows)
                std::printf("%-12s ppp=%-6g frame=%-3d psnr=%7.3f ssim=%6.4f\n",
                            row.method.c_str(), row.ppp, row.frame, row.psnr, row.ssim);
            std::printf("manifest: %s\n", result.manifest.string().c_str());
        } else if (sweep->parsed()) {
            quanta::PipelineConfig cfg = make_config(sweep, sweep_args);
            if (!sweep_inputs.empty()) cfg.inputs = sweep_inputs;
            if (sweep_frames > 0) cfg.frames = sweep_frames;
            const quanta::CommandResult result = quanta::cmd_sweep(cfg, sweep_args.out);
            std::printf("%-28s %8s %-12s %10s %8s  %s\n", "clip", "ppp", "method", "psnr",
                        "ssim", "status");
            for (const auto& cell : result.cells)
                std::printf("%-28s %8g %-12s %10.3f %8.4f  %s\n", cell.clip.c_str(), cell.ppp,
                            cell.method.c_str(), cell.mean_psnr, cell.mean_ssim,
                            cell.status.c_str());
            std::printf("manifest: %s\n", result.manifest.string().c_str());
        } else if (sb->parsed()) {
            sb_options.input = sb_input;
            const quanta::CommandResult result = quanta::cmd_sum_bitplanes(sb_options, sb_out);
            std::printf("measured PPP: %.4f\n", result.measured_ppp);
            std::printf("manifest: %s\n", result.manifest.string().c_str());
        }
        return quanta::exit_code::ok;
    } catch (const quanta::InputDomainError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return quanta::exit_code::config;
    } catch (const quanta::IoError& e) {
        std::fprintf(stderr, "i/o error: %s\n", e.what());
        return quanta::exit_code::io;
    } catch (const quanta::NumericalError& e) {
        std::fprintf(stderr, "numerical error: %s\n", e.what());
        return quanta::exit_code::numerical;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return quanta::exit_code::unexpected;
    }
}
