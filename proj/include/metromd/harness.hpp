#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "metromd/integrate.hpp"
#include "metromd/model.hpp"
#include "metromd/observe.hpp"

namespace metromd {

// Flat "key = value" text, one pair per line, # starts a comment. Every key
// present must be consumed by a getter before finish(); leftovers are
// configuration errors, so typos never silently fall back to defaults.
class KeyValueConfig {
  public:
    static KeyValueConfig parse_file(const std::filesystem::path& path);
    static KeyValueConfig parse_text(std::string_view text);

    double get_double(const std::string& key, double fallback);
    std::int64_t get_int(const std::string& key, std::int64_t fallback);
    std::uint64_t get_uint(const std::string& key, std::uint64_t fallback);
    std::string get_string(const std::string& key, std::string fallback);
    // comma- or whitespace-separated
    std::vector<double> get_doubles(const std::string& key, std::vector<double> fallback);
    std::vector<std::int64_t> get_ints(const std::string& key, std::vector<std::int64_t> fallback);
    std::vector<std::string> get_strings(const std::string& key,
                                         std::vector<std::string> fallback);

    void finish() const;  // throws std::invalid_argument listing unknown keys

  private:
    std::map<std::string, std::string> entries_;
    std::set<std::string> used_;
};

using ProgressFn = std::function<void(const std::string&)>;

// ---- experiment configurations (defaults follow the reference parameters) --

struct FluidAutocorrConfig {
    int n_particles = 25;
    int dim = 2;
    double density = 0.8442;
    double box_length = 0.0;  // 0 derives (n/density)^(1/dim)
    double temperature = 0.728;
    double gamma = 1.0;
    double r_cut = 2.5;
    std::string proposal = "verlet";  // or "respa"
    int n_fast = 4;                   // respa only
    double r_split = 1.5;             // respa only
    std::vector<double> step_sizes = {0.01, 0.005, 0.0025, 0.00125, 0.000625};
    std::vector<std::string> partitions = {"trivial", "per_particle"};
    double t_corr = 1.0;
    std::int64_t n_samples = 10'000'000;
    std::int64_t n_burn = 100'000;
    std::uint64_t seed = 1;

    static FluidAutocorrConfig from(KeyValueConfig& kv);
    double box() const;
    double beta() const { return 1.0 / temperature; }
    void validate() const;
};

struct DumbbellAutocorrConfig {
    int n_dumbbells = 15;
    int dim = 2;
    double density = 0.998;   // particle density: box = (2 n / density)^(1/2)
    double box_length = 0.0;
    double temperature = 3.0;
    double gamma = 1.0;
    double r_cut = 2.5;       // half-box limit at the 15-dumbbell default
    double bond_length = 1.0;
    std::vector<double> step_sizes = {0.01, 0.005, 0.0025, 0.00125, 0.000625};
    double t_corr = 1.0;
    std::int64_t n_samples = 1'000'000;
    std::int64_t n_burn = 100'000;
    std::uint64_t seed = 1;

    static DumbbellAutocorrConfig from(KeyValueConfig& kv);
    double box() const;
    double beta() const { return 1.0 / temperature; }
    void validate() const;
};

struct ScalingConfig {
    std::vector<std::int64_t> n_ladder = {27, 64, 125, 216, 512};
    int dim = 3;
    double density = 0.8442;
    double temperature = 0.728;
    double gamma = 1.0;
    double r_cut = 2.5;  // clamped per leg to half the box edge
    double h = 0.01;
    std::vector<std::string> partitions = {"trivial", "per_particle"};
    std::int64_t n_steps = 100'000;
    std::int64_t n_burn = 10'000;
    std::uint64_t seed = 1;

    static ScalingConfig from(KeyValueConfig& kv);
    double beta() const { return 1.0 / temperature; }
    void validate() const;
};

struct StationarityConfig {
    double box_length = 5.0;
    double beta = 1.0;
    double mass = 1.0;
    double gamma = 1.0;
    double h = 0.05;
    std::int64_t n_steps = 10'000'000;
    std::int64_t n_burn = 100'000;
    std::int64_t thin = 500;  // steps between histogram samples
    int n_bins = 50;
    std::uint64_t seed = 1;

    static StationarityConfig from(KeyValueConfig& kv);
    void validate() const;
};

struct BlowupConfig {
    int n_particles = 25;
    int dim = 2;
    double density = 0.8442;
    double box_length = 0.0;
    double temperature = 0.728;
    double gamma = 1.0;
    double r_cut = 2.5;
    double h = 0.1;
    std::int64_t max_steps = 1'000'000;
    std::int64_t record_every = 1000;
    std::uint64_t seed = 1;

    static BlowupConfig from(KeyValueConfig& kv);
    double box() const;
    double beta() const { return 1.0 / temperature; }
    void validate() const;
};

// ---- results ---------------------------------------------------------------

struct AutocorrCurve {
    std::string partition;
    double h = 0.0;
    Eigen::VectorXd A;  // lag grid k h, k = 0 .. round(t_corr / h)
    AcceptanceStats stats;
    double max_bond_residual = 0.0;  // constrained runs only
    double max_tangency = 0.0;
};

struct RichardsonSummary {
    std::string partition;
    std::vector<double> hs;  // step sizes whose doubled curve was also run
    std::vector<double> eps;
    SlopeFit fit{};
};

struct AutocorrReport {
    std::vector<AutocorrCurve> curves;
    std::vector<RichardsonSummary> summaries;  // one per partition
};

struct ScalingPoint {
    int n_particles = 0;
    std::string partition;
    double mean_accept = 0.0;
    double r_cut_effective = 0.0;
};

struct ScalingReport {
    std::vector<ScalingPoint> points;
    SlopeFit trivial_fit{};          // log mean acceptance vs log n
    double per_particle_min = 1.0;   // worst per-particle acceptance over the ladder
};

struct StationarityReport {
    std::vector<std::int64_t> counts;
    std::vector<double> expected;
    double chi2 = 0.0;
    double p_value = 0.0;
    double momentum_var = 0.0;
    double momentum_var_target = 0.0;
    double cos_mean = 0.0;
    double cos_mean_target = 0.0;
    double cos_stderr = 0.0;
    AcceptanceStats stats;
};

struct TimedRecord {
    std::int64_t step = 0;
    StepRecord rec;
    double energy = 0.0;
};

struct BlowupReport {
    bool unpatched_blew_up = false;
    std::int64_t unpatched_steps = 0;  // steps taken when the detector fired
    bool patched_completed = false;
    double patched_max_energy = 0.0;
    double patched_mean_accept = 0.0;
    std::vector<TimedRecord> patched_records;  // thinned
};

// ---- runners ----------------------------------------------------------------
// All runners are deterministic in (config, seed); legs run sequentially but
// draw from independent split streams, so execution order never matters.
// `progress` (optional) receives one line per finished leg.

AutocorrReport run_autocorr_fluid(const FluidAutocorrConfig& cfg, const ProgressFn& progress = {});
AutocorrReport run_autocorr_dumbbell(const DumbbellAutocorrConfig& cfg,
                                     const ProgressFn& progress = {});

// paired lattice sites for the 2j / 2j+1 particles of each dumbbell, bonds
// rescaled to length, Maxwell momenta projected tangent to the constraints
void dumbbell_lattice_init(const SystemSpec& spec, const DumbbellConstraints& cons,
                           RngStream& init_rng, PhaseState& s);
ScalingReport run_scaling(const ScalingConfig& cfg, const ProgressFn& progress = {});
StationarityReport run_stationarity(const StationarityConfig& cfg,
                                    const ProgressFn& progress = {});
BlowupReport run_blowup_demo(const BlowupConfig& cfg, const ProgressFn& progress = {});

// ---- output plumbing ---------------------------------------------------------

// "%.17g" formatting: shortest round-trippable decimal is not needed, full
// precision is, so repeated runs diff clean
std::string format_double(double v);

std::string autocorr_csv(const AutocorrCurve& curve);
std::string scaling_csv(const ScalingReport& report);
std::string step_records_csv(std::span<const TimedRecord> records);

// git blob content hash: sha1("blob <size>\0" + content), lowercase hex
std::string git_blob_sha1(std::string_view content);

void write_text_file(const std::filesystem::path& path, std::string_view content);

struct PlotSeries {
    std::string label;
    std::vector<double> x;
    std::vector<double> y;
};

// minimal static log-log scatter/line plot
std::string svg_loglog(const std::string& title, const std::string& x_label,
                       const std::string& y_label, const std::vector<PlotSeries>& series);

}  // namespace metromd
