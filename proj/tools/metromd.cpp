#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "metromd/harness.hpp"

using json = nlohmann::json;
using namespace metromd;

namespace {

struct Cli {
    std::string config_path;
    std::string out_dir = "out";
    std::uint64_t seed = 0;
    bool seed_set = false;
    std::int64_t samples = 0;
    bool samples_set = false;
    bool plot = false;
};

void add_common(CLI::App* sub, Cli& cli) {
    sub->add_option("--config", cli.config_path, "key = value experiment configuration")
        ->required()
        ->check(CLI::ExistingFile);
    sub->add_option("--seed", cli.seed, "override the config seed")
        ->each([&cli](const std::string&) { cli.seed_set = true; });
    sub->add_option("--out", cli.out_dir, "output directory (created if absent)");
    sub->add_option("--samples", cli.samples, "override the config sample/step budget")
        ->each([&cli](const std::string&) { cli.samples_set = true; });
    sub->add_flag("--plot", cli.plot, "also write svg log-log plots");
}

void progress(const std::string& line) { std::cerr << line << "\n"; }

std::string hname(double h) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", h);
    return buf;
}

// collects run products, hashing each as written
struct OutputSink {
    std::filesystem::path dir;
    json hashes = json::object();

    explicit OutputSink(const std::string& d) : dir(d) { std::filesystem::create_directories(dir); }
    void add(const std::string& name, const std::string& content) {
        write_text_file(dir / name, content);
        hashes[name] = git_blob_sha1(content);
    }
    void manifest(const std::string& experiment, const json& config, std::uint64_t seed,
                  const json& summary, std::int64_t wall_ms) {
        json m = {{"experiment", experiment}, {"config", config},   {"seed", seed},
                  {"outputs", hashes},       {"summary", summary}, {"wall_ms", wall_ms}};
        write_text_file(dir / "manifest.json", m.dump(2) + "\n");
        std::cout << (dir / "manifest.json").string() << "\n";
    }
};

struct Stopwatch {
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
    std::int64_t ms() const {
        return std::chrono::duration_cast<std::chrono::milliseconds>(
                   std::chrono::steady_clock::now() - start)
            .count();
    }
};

json echo(const FluidAutocorrConfig& c) {
    return {{"n_particles", c.n_particles},
            {"dim", c.dim},
            {"density", c.density},
            {"box_length", c.box_length},
            {"temperature", c.temperature},
            {"gamma", c.gamma},
            {"r_cut", c.r_cut},
            {"proposal", c.proposal},
            {"n_fast", c.n_fast},
            {"r_split", c.r_split},
            {"step_sizes", c.step_sizes},
            {"partitions", c.partitions},
            {"t_corr", c.t_corr},
            {"n_samples", c.n_samples},
            {"n_burn", c.n_burn},
            {"seed", c.seed}};
}

json echo(const DumbbellAutocorrConfig& c) {
    return {{"n_dumbbells", c.n_dumbbells},
            {"dim", c.dim},
            {"density", c.density},
            {"box_length", c.box_length},
            {"temperature", c.temperature},
            {"gamma", c.gamma},
            {"r_cut", c.r_cut},
            {"bond_length", c.bond_length},
            {"step_sizes", c.step_sizes},
            {"t_corr", c.t_corr},
            {"n_samples", c.n_samples},
            {"n_burn", c.n_burn},
            {"seed", c.seed}};
}

json echo(const ScalingConfig& c) {
    return {{"n_ladder", c.n_ladder},
            {"dim", c.dim},
            {"density", c.density},
            {"temperature", c.temperature},
            {"gamma", c.gamma},
            {"r_cut", c.r_cut},
            {"h", c.h},
            {"partitions", c.partitions},
            {"n_steps", c.n_steps},
            {"n_burn", c.n_burn},
            {"seed", c.seed}};
}

json echo(const StationarityConfig& c) {
    return {{"box_length", c.box_length},
            {"beta", c.beta},
            {"mass", c.mass},
            {"gamma", c.gamma},
            {"h", c.h},
            {"n_steps", c.n_steps},
            {"n_burn", c.n_burn},
            {"thin", c.thin},
            {"n_bins", c.n_bins},
            {"seed", c.seed}};
}

json echo(const BlowupConfig& c) {
    return {{"n_particles", c.n_particles},
            {"dim", c.dim},
            {"density", c.density},
            {"box_length", c.box_length},
            {"temperature", c.temperature},
            {"gamma", c.gamma},
            {"r_cut", c.r_cut},
            {"h", c.h},
            {"max_steps", c.max_steps},
            {"record_every", c.record_every},
            {"seed", c.seed}};
}

json summarize(const AutocorrReport& report) {
    json curves = json::array();
    for (const auto& c : report.curves)
        curves.push_back({{"partition", c.partition},
                          {"h", c.h},
                          {"mean_accept_per_particle", c.stats.mean_acceptance()},
                          {"solver_failures", c.stats.solver_failures},
                          {"max_bond_residual", c.max_bond_residual},
                          {"max_tangency", c.max_tangency}});
    json summaries = json::array();
    for (const auto& s : report.summaries) {
        json entry = {{"partition", s.partition}, {"hs", s.hs}, {"eps", s.eps}};
        if (s.hs.size() >= 2) {  // a one-point ladder has no order fit
            entry["slope"] = s.fit.slope;
            entry["intercept"] = s.fit.intercept;
        }
        summaries.push_back(entry);
    }
    return {{"curves", curves}, {"richardson", summaries}};
}

void add_richardson_plot(OutputSink& out, const AutocorrReport& report) {
    std::vector<PlotSeries> series;
    for (const auto& s : report.summaries) series.push_back({s.partition, s.hs, s.eps});
    out.add("richardson.svg",
            svg_loglog("two-resolution gap vs step size", "h", "relative sup gap", series));
}

int run_fluid(Cli& cli) {
    auto kv = KeyValueConfig::parse_file(cli.config_path);
    auto cfg = FluidAutocorrConfig::from(kv);
    kv.finish();
    if (cli.seed_set) cfg.seed = cli.seed;
    if (cli.samples_set) cfg.n_samples = cli.samples;
    cfg.validate();
    Stopwatch watch;
    auto report = run_autocorr_fluid(cfg, progress);
    OutputSink out(cli.out_dir);
    for (const auto& c : report.curves)
        out.add("autocorr_fluid_" + c.partition + "_h" + hname(c.h) + ".csv", autocorr_csv(c));
    if (cli.plot) add_richardson_plot(out, report);
    out.manifest("autocorr_fluid", echo(cfg), cfg.seed, summarize(report), watch.ms());
    return 0;
}

int run_dumbbell(Cli& cli) {
    auto kv = KeyValueConfig::parse_file(cli.config_path);
    auto cfg = DumbbellAutocorrConfig::from(kv);
    kv.finish();
    if (cli.seed_set) cfg.seed = cli.seed;
    if (cli.samples_set) cfg.n_samples = cli.samples;
    cfg.validate();
    Stopwatch watch;
    auto report = run_autocorr_dumbbell(cfg, progress);
    OutputSink out(cli.out_dir);
    for (const auto& c : report.curves)
        out.add("autocorr_dumbbell_h" + hname(c.h) + ".csv", autocorr_csv(c));
    if (cli.plot) add_richardson_plot(out, report);
    out.manifest("autocorr_dumbbell", echo(cfg), cfg.seed, summarize(report), watch.ms());
    std::int64_t failures = 0;
    for (const auto& c : report.curves) failures += c.stats.solver_failures;
    if (failures > 0) {
        std::cerr << "constraint solver failed on " << failures << " proposals\n";
        return 3;
    }
    return 0;
}

int run_scaling_cmd(Cli& cli) {
    auto kv = KeyValueConfig::parse_file(cli.config_path);
    auto cfg = ScalingConfig::from(kv);
    kv.finish();
    if (cli.seed_set) cfg.seed = cli.seed;
    if (cli.samples_set) cfg.n_steps = cli.samples;
    cfg.validate();
    Stopwatch watch;
    auto report = run_scaling(cfg, progress);
    OutputSink out(cli.out_dir);
    out.add("scaling.csv", scaling_csv(report));
    if (cli.plot) {
        std::vector<PlotSeries> series;
        for (const auto& pname : cfg.partitions) {
            PlotSeries s{pname, {}, {}};
            for (const auto& pt : report.points)
                if (pt.partition == pname) {
                    s.x.push_back(pt.n_particles);
                    s.y.push_back(pt.mean_accept);
                }
            series.push_back(std::move(s));
        }
        out.add("scaling.svg", svg_loglog("mean acceptance vs system size", "n particles",
                                          "mean acceptance per particle", series));
    }
    json points = json::array();
    for (const auto& pt : report.points)
        points.push_back({{"n_particles", pt.n_particles},
                          {"partition", pt.partition},
                          {"mean_accept_per_particle", pt.mean_accept},
                          {"r_cut_effective", pt.r_cut_effective}});
    json summary = {{"points", points},
                    {"trivial_slope", report.trivial_fit.slope},
                    {"trivial_intercept", report.trivial_fit.intercept},
                    {"per_particle_min", report.per_particle_min}};
    out.manifest("scaling", echo(cfg), cfg.seed, summary, watch.ms());
    return 0;
}

int run_stationarity_cmd(Cli& cli) {
    auto kv = KeyValueConfig::parse_file(cli.config_path);
    auto cfg = StationarityConfig::from(kv);
    kv.finish();
    if (cli.seed_set) cfg.seed = cli.seed;
    if (cli.samples_set) cfg.n_steps = cli.samples;
    cfg.validate();
    Stopwatch watch;
    auto report = run_stationarity(cfg, progress);
    OutputSink out(cli.out_dir);
    std::string csv = "bin_center,count,expected\n";
    double width = cfg.box_length / cfg.n_bins;
    for (int b = 0; b < cfg.n_bins; ++b) {
        csv += format_double((b + 0.5) * width);
        csv += ',';
        csv += std::to_string(report.counts[b]);
        csv += ',';
        csv += format_double(report.expected[b]);
        csv += '\n';
    }
    out.add("stationarity_histogram.csv", csv);
    json summary = {{"chi2", report.chi2},
                    {"p_value", report.p_value},
                    {"momentum_var", report.momentum_var},
                    {"momentum_var_target", report.momentum_var_target},
                    {"cos_mean", report.cos_mean},
                    {"cos_mean_target", report.cos_mean_target},
                    {"cos_stderr", report.cos_stderr},
                    {"mean_accept_per_particle", report.stats.mean_acceptance()}};
    out.manifest("stationarity", echo(cfg), cfg.seed, summary, watch.ms());
    return 0;
}

int run_blowup_cmd(Cli& cli) {
    auto kv = KeyValueConfig::parse_file(cli.config_path);
    auto cfg = BlowupConfig::from(kv);
    kv.finish();
    if (cli.seed_set) cfg.seed = cli.seed;
    if (cli.samples_set) cfg.max_steps = cli.samples;
    cfg.validate();
    Stopwatch watch;
    auto report = run_blowup_demo(cfg, progress);
    OutputSink out(cli.out_dir);
    out.add("blowup_patched_records.csv", step_records_csv(report.patched_records));
    if (cli.plot) {
        PlotSeries energy{"patched energy", {}, {}};
        for (const auto& r : report.patched_records) {
            energy.x.push_back(static_cast<double>(r.step));
            energy.y.push_back(r.energy);
        }
        out.add("blowup.svg",
                svg_loglog("total energy along the patched chain", "step", "energy", {energy}));
    }
    json summary = {{"unpatched_blew_up", report.unpatched_blew_up},
                    {"unpatched_steps", report.unpatched_steps},
                    {"patched_completed", report.patched_completed},
                    {"patched_max_energy", report.patched_max_energy},
                    {"patched_mean_accept", report.patched_mean_accept}};
    out.manifest("blowup_demo", echo(cfg), cfg.seed, summary, watch.ms());
    if (!report.patched_completed) {
        std::cerr << "patched chain blew up\n";
        return 3;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Metropolis-corrected explicit integrators for constant-temperature dynamics"};
    app.require_subcommand(1);
    Cli cli;
    auto* fluid = app.add_subcommand(
        "autocorr_fluid", "velocity autocorrelation step-size study of the periodic fluid");
    auto* dumbbell = app.add_subcommand(
        "autocorr_dumbbell", "constrained dumbbell fluid autocorrelation step-size study");
    auto* scaling =
        app.add_subcommand("scaling", "acceptance versus system size for both partitions");
    auto* stationarity = app.add_subcommand(
        "stationarity", "equilibrium histogram and moment checks for the periodic well");
    auto* blowup = app.add_subcommand(
        "blowup_demo", "side-by-side divergence of the uncorrected chain at a large step");
    for (auto* sub : {fluid, dumbbell, scaling, stationarity, blowup}) add_common(sub, cli);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (fluid->parsed()) return run_fluid(cli);
        if (dumbbell->parsed()) return run_dumbbell(cli);
        if (scaling->parsed()) return run_scaling_cmd(cli);
        if (stationarity->parsed()) return run_stationarity_cmd(cli);
        return run_blowup_cmd(cli);
    } catch (const std::invalid_argument& e) {
        std::cerr << "configuration error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "run aborted: " << e.what() << "\n";
        return 3;
    }
}
