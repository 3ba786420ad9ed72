#include "metromd/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <numbers>
#include <optional>
#include <sstream>
#include <stdexcept>

#include "metromd/constraints.hpp"
#include "metromd/potential.hpp"
#include "metromd/thermostat.hpp"

namespace metromd {

namespace {

std::string trim(std::string_view s) {
    size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return "";
    size_t e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

}  // namespace

KeyValueConfig KeyValueConfig::parse_text(std::string_view text) {
    KeyValueConfig kv;
    std::istringstream in{std::string(text)};
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        std::string t = trim(line);
        if (t.empty()) continue;
        auto eq = t.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("config line " + std::to_string(lineno) +
                                        ": expected key = value");
        std::string key = trim(t.substr(0, eq));
        std::string value = trim(t.substr(eq + 1));
        if (key.empty())
            throw std::invalid_argument("config line " + std::to_string(lineno) + ": empty key");
        if (!kv.entries_.emplace(key, value).second)
            throw std::invalid_argument("config line " + std::to_string(lineno) +
                                        ": duplicate key '" + key + "'");
    }
    return kv;
}

KeyValueConfig KeyValueConfig::parse_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open config file: " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_text(buf.str());
}

namespace {

std::vector<std::string> split_list(const std::string& value) {
    std::string v = value;
    std::replace(v.begin(), v.end(), ',', ' ');
    std::istringstream in(v);
    std::vector<std::string> out;
    for (std::string tok; in >> tok;) out.push_back(tok);
    return out;
}

double parse_double(const std::string& key, const std::string& value) {
    try {
        size_t used = 0;
        double d = std::stod(value, &used);
        if (used != value.size()) throw std::invalid_argument("");
        return d;
    } catch (const std::exception&) {
        throw std::invalid_argument("config key '" + key + "': not a number: '" + value + "'");
    }
}

std::int64_t parse_int(const std::string& key, const std::string& value) {
    try {
        size_t used = 0;
        std::int64_t i = std::stoll(value, &used);
        if (used != value.size()) throw std::invalid_argument("");
        return i;
    } catch (const std::exception&) {
        throw std::invalid_argument("config key '" + key + "': not an integer: '" + value + "'");
    }
}

}  // namespace

double KeyValueConfig::get_double(const std::string& key, double fallback) {
    auto it = entries_.find(key);
    if (it == entries_.end()) return fallback;
    used_.insert(key);
    return parse_double(key, it->second);
}

std::int64_t KeyValueConfig::get_int(const std::string& key, std::int64_t fallback) {
    auto it = entries_.find(key);
    if (it == entries_.end()) return fallback;
    used_.insert(key);
    return parse_int(key, it->second);
}

std::uint64_t KeyValueConfig::get_uint(const std::string& key, std::uint64_t fallback) {
    auto it = entries_.find(key);
    if (it == entries_.end()) return fallback;
    used_.insert(key);
    try {
        size_t used = 0;
        std::uint64_t u = std::stoull(it->second, &used);
        if (used != it->second.size() || it->second[0] == '-') throw std::invalid_argument("");
        return u;
    } catch (const std::exception&) {
        throw std::invalid_argument("config key '" + key + "': not an unsigned integer: '" +
                                    it->second + "'");
    }
}

std::string KeyValueConfig::get_string(const std::string& key, std::string fallback) {
    auto it = entries_.find(key);
    if (it == entries_.end()) return fallback;
    used_.insert(key);
    return it->second;
}

std::vector<double> KeyValueConfig::get_doubles(const std::string& key,
                                                std::vector<double> fallback) {
    auto it = entries_.find(key);
    if (it == entries_.end()) return fallback;
    used_.insert(key);
    std::vector<double> out;
    for (const auto& tok : split_list(it->second)) out.push_back(parse_double(key, tok));
    return out;
}

std::vector<std::int64_t> KeyValueConfig::get_ints(const std::string& key,
                                                   std::vector<std::int64_t> fallback) {
    auto it = entries_.find(key);
    if (it == entries_.end()) return fallback;
    used_.insert(key);
    std::vector<std::int64_t> out;
    for (const auto& tok : split_list(it->second)) out.push_back(parse_int(key, tok));
    return out;
}

std::vector<std::string> KeyValueConfig::get_strings(const std::string& key,
                                                     std::vector<std::string> fallback) {
    auto it = entries_.find(key);
    if (it == entries_.end()) return fallback;
    used_.insert(key);
    return split_list(it->second);
}

void KeyValueConfig::finish() const {
    std::string unknown;
    for (const auto& [key, value] : entries_)
        if (!used_.contains(key)) unknown += (unknown.empty() ? "" : ", ") + key;
    if (!unknown.empty()) throw std::invalid_argument("unknown config keys: " + unknown);
}

// ---- configurations ---------------------------------------------------------

namespace {

void require(bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(std::string("config: ") + what);
}

void check_partition_names(const std::vector<std::string>& names) {
    require(!names.empty(), "partitions must not be empty");
    for (const auto& p : names)
        require(p == "trivial" || p == "per_particle",
                "partitions entries must be trivial or per_particle");
}

void check_step_sizes(const std::vector<double>& hs) {
    require(!hs.empty(), "step_sizes must not be empty");
    for (double h : hs) require(h > 0.0, "step_sizes must be positive");
}

}  // namespace

FluidAutocorrConfig FluidAutocorrConfig::from(KeyValueConfig& kv) {
    FluidAutocorrConfig c;
    c.n_particles = static_cast<int>(kv.get_int("n_particles", c.n_particles));
    c.dim = static_cast<int>(kv.get_int("dim", c.dim));
    c.density = kv.get_double("density", c.density);
    c.box_length = kv.get_double("box_length", c.box_length);
    c.temperature = kv.get_double("temperature", c.temperature);
    c.gamma = kv.get_double("gamma", c.gamma);
    c.r_cut = kv.get_double("r_cut", c.r_cut);
    c.proposal = kv.get_string("proposal", c.proposal);
    c.n_fast = static_cast<int>(kv.get_int("n_fast", c.n_fast));
    c.r_split = kv.get_double("r_split", c.r_split);
    c.step_sizes = kv.get_doubles("step_sizes", c.step_sizes);
    c.partitions = kv.get_strings("partitions", c.partitions);
    c.t_corr = kv.get_double("t_corr", c.t_corr);
    c.n_samples = kv.get_int("n_samples", c.n_samples);
    c.n_burn = kv.get_int("n_burn", c.n_burn);
    c.seed = kv.get_uint("seed", c.seed);
    return c;
}

double FluidAutocorrConfig::box() const {
    return box_length > 0.0 ? box_length : std::pow(n_particles / density, 1.0 / dim);
}

void FluidAutocorrConfig::validate() const {
    require(n_particles >= 1, "n_particles must be positive");
    require(dim >= 1 && dim <= 3, "dim must be 1, 2 or 3");
    require(density > 0.0 || box_length > 0.0, "density or box_length must be positive");
    require(temperature > 0.0, "temperature must be positive");
    require(gamma >= 0.0, "gamma must be nonnegative");
    require(r_cut > 0.0, "r_cut must be positive");
    require(proposal == "verlet" || proposal == "respa", "proposal must be verlet or respa");
    if (proposal == "respa") {
        require(n_fast >= 1, "n_fast must be positive");
        require(r_split > 0.0 && r_split < r_cut, "r_split must lie in (0, r_cut)");
    }
    check_step_sizes(step_sizes);
    check_partition_names(partitions);
    require(t_corr > 0.0, "t_corr must be positive");
    require(n_samples >= 1, "n_samples must be positive");
    require(n_burn >= 0, "n_burn must be nonnegative");
}

DumbbellAutocorrConfig DumbbellAutocorrConfig::from(KeyValueConfig& kv) {
    DumbbellAutocorrConfig c;
    c.n_dumbbells = static_cast<int>(kv.get_int("n_dumbbells", c.n_dumbbells));
    c.dim = static_cast<int>(kv.get_int("dim", c.dim));
    c.density = kv.get_double("density", c.density);
    c.box_length = kv.get_double("box_length", c.box_length);
    c.temperature = kv.get_double("temperature", c.temperature);
    c.gamma = kv.get_double("gamma", c.gamma);
    c.r_cut = kv.get_double("r_cut", c.r_cut);
    c.bond_length = kv.get_double("bond_length", c.bond_length);
    c.step_sizes = kv.get_doubles("step_sizes", c.step_sizes);
    c.t_corr = kv.get_double("t_corr", c.t_corr);
    c.n_samples = kv.get_int("n_samples", c.n_samples);
    c.n_burn = kv.get_int("n_burn", c.n_burn);
    c.seed = kv.get_uint("seed", c.seed);
    return c;
}

double DumbbellAutocorrConfig::box() const {
    return box_length > 0.0 ? box_length : std::pow(2.0 * n_dumbbells / density, 1.0 / dim);
}

void DumbbellAutocorrConfig::validate() const {
    require(n_dumbbells >= 1, "n_dumbbells must be positive");
    require(dim == 2 || dim == 3, "dim must be 2 or 3");
    require(density > 0.0 || box_length > 0.0, "density or box_length must be positive");
    require(temperature > 0.0, "temperature must be positive");
    require(gamma >= 0.0, "gamma must be nonnegative");
    require(r_cut > 0.0, "r_cut must be positive");
    require(bond_length > 0.0, "bond_length must be positive");
    check_step_sizes(step_sizes);
    require(t_corr > 0.0, "t_corr must be positive");
    require(n_samples >= 1, "n_samples must be positive");
    require(n_burn >= 0, "n_burn must be nonnegative");
}

ScalingConfig ScalingConfig::from(KeyValueConfig& kv) {
    ScalingConfig c;
    c.n_ladder = kv.get_ints("n_ladder", c.n_ladder);
    c.dim = static_cast<int>(kv.get_int("dim", c.dim));
    c.density = kv.get_double("density", c.density);
    c.temperature = kv.get_double("temperature", c.temperature);
    c.gamma = kv.get_double("gamma", c.gamma);
    c.r_cut = kv.get_double("r_cut", c.r_cut);
    c.h = kv.get_double("h", c.h);
    c.partitions = kv.get_strings("partitions", c.partitions);
    c.n_steps = kv.get_int("n_steps", c.n_steps);
    c.n_burn = kv.get_int("n_burn", c.n_burn);
    c.seed = kv.get_uint("seed", c.seed);
    return c;
}

void ScalingConfig::validate() const {
    require(!n_ladder.empty(), "n_ladder must not be empty");
    for (auto n : n_ladder) require(n >= 1, "n_ladder entries must be positive");
    require(dim >= 1 && dim <= 3, "dim must be 1, 2 or 3");
    require(density > 0.0, "density must be positive");
    require(temperature > 0.0, "temperature must be positive");
    require(gamma >= 0.0, "gamma must be nonnegative");
    require(r_cut > 0.0, "r_cut must be positive");
    require(h > 0.0, "h must be positive");
    check_partition_names(partitions);
    require(n_steps >= 1, "n_steps must be positive");
    require(n_burn >= 0, "n_burn must be nonnegative");
}

StationarityConfig StationarityConfig::from(KeyValueConfig& kv) {
    StationarityConfig c;
    c.box_length = kv.get_double("box_length", c.box_length);
    c.beta = kv.get_double("beta", c.beta);
    c.mass = kv.get_double("mass", c.mass);
    c.gamma = kv.get_double("gamma", c.gamma);
    c.h = kv.get_double("h", c.h);
    c.n_steps = kv.get_int("n_steps", c.n_steps);
    c.n_burn = kv.get_int("n_burn", c.n_burn);
    c.thin = kv.get_int("thin", c.thin);
    c.n_bins = static_cast<int>(kv.get_int("n_bins", c.n_bins));
    c.seed = kv.get_uint("seed", c.seed);
    return c;
}

void StationarityConfig::validate() const {
    require(box_length > 0.0, "box_length must be positive");
    require(beta > 0.0, "beta must be positive");
    require(mass > 0.0, "mass must be positive");
    require(gamma >= 0.0, "gamma must be nonnegative");
    require(h > 0.0, "h must be positive");
    require(n_steps >= 1, "n_steps must be positive");
    require(n_burn >= 0, "n_burn must be nonnegative");
    require(thin >= 1, "thin must be positive");
    require(n_bins >= 2, "n_bins must be at least 2");
}

BlowupConfig BlowupConfig::from(KeyValueConfig& kv) {
    BlowupConfig c;
    c.n_particles = static_cast<int>(kv.get_int("n_particles", c.n_particles));
    c.dim = static_cast<int>(kv.get_int("dim", c.dim));
    c.density = kv.get_double("density", c.density);
    c.box_length = kv.get_double("box_length", c.box_length);
    c.temperature = kv.get_double("temperature", c.temperature);
    c.gamma = kv.get_double("gamma", c.gamma);
    c.r_cut = kv.get_double("r_cut", c.r_cut);
    c.h = kv.get_double("h", c.h);
    c.max_steps = kv.get_int("max_steps", c.max_steps);
    c.record_every = kv.get_int("record_every", c.record_every);
    c.seed = kv.get_uint("seed", c.seed);
    return c;
}

double BlowupConfig::box() const {
    return box_length > 0.0 ? box_length : std::pow(n_particles / density, 1.0 / dim);
}

void BlowupConfig::validate() const {
    require(n_particles >= 1, "n_particles must be positive");
    require(dim >= 1 && dim <= 3, "dim must be 1, 2 or 3");
    require(density > 0.0 || box_length > 0.0, "density or box_length must be positive");
    require(temperature > 0.0, "temperature must be positive");
    require(gamma >= 0.0, "gamma must be nonnegative");
    require(r_cut > 0.0, "r_cut must be positive");
    require(h > 0.0, "h must be positive");
    require(max_steps >= 1, "max_steps must be positive");
    require(record_every >= 1, "record_every must be positive");
}

// ---- runners ----------------------------------------------------------------

namespace {

SystemSpec make_spec(int n, int dim, double box, double beta, double mass = 1.0) {
    SystemSpec spec;
    spec.n_particles = n;
    spec.dim = dim;
    spec.box_length = box;
    spec.beta = beta;
    spec.mass = Eigen::VectorXd::Constant(n, mass);
    spec.validate();
    return spec;
}

Partition make_partition(const std::string& name, int n) {
    if (name == "trivial") return Partition::trivial(n);
    if (name == "per_particle") return Partition::per_particle(n);
    throw std::invalid_argument("unknown partition: " + name);
}

PhaseState fluid_init(const SystemSpec& spec, RngStream init_rng) {
    PhaseState s;
    s.q.resize(spec.dof());
    s.p.resize(spec.dof());
    lattice_init(spec, s.q);
    sample_maxwell(spec, init_rng, s.p);
    return s;
}

void check_alive(const SystemSpec& spec, const PhaseState& s, const Potential& total,
                 const char* where) {
    if (blew_up(hamiltonian(spec, s, total)))
        throw std::runtime_error(std::string("metropolized chain blew up during ") + where);
}

// burn-in plus sampling loop shared by the two autocorrelation experiments
AutocorrCurve autocorr_leg(const SystemSpec& spec, Integrator& integ, const Potential& total,
                           const DumbbellConstraints* cons, PhaseState& s,
                           const RngStream& leg_rng, std::int64_t n_burn, std::int64_t n_samples,
                           double t_corr, double h, const std::string& partition) {
    auto th = leg_rng.split(kStreamThermostat);
    auto mt = leg_rng.split(kStreamMetropolis);
    for (std::int64_t t = 0; t < n_burn; ++t) {
        integ.step(s, th, mt);
        if ((t & 1023) == 0) check_alive(spec, s, total, "burn-in");
    }
    AutocorrCurve curve;
    curve.partition = partition;
    curve.h = h;
    int n_lags = static_cast<int>(std::lround(t_corr / h)) + 1;
    AutocorrAccumulator acc(spec.dof(), n_lags);
    for (std::int64_t t = 0; t < n_samples; ++t) {
        StepRecord rec = integ.step(s, th, mt);
        curve.stats.add(rec);
        acc.add(s.p);
        if (cons != nullptr) {
            curve.max_bond_residual =
                std::max(curve.max_bond_residual, cons->max_abs_value(s.q));
            curve.max_tangency =
                std::max(curve.max_tangency, cons->max_abs_tangency(spec, s.q, s.p));
        }
        if ((t & 1023) == 0) check_alive(spec, s, total, "sampling");
    }
    curve.A = acc.estimate();
    return curve;
}

void summarize_richardson(AutocorrReport& report, const std::vector<std::string>& partitions) {
    for (const auto& pname : partitions) {
        std::vector<const AutocorrCurve*> curves;
        for (const auto& c : report.curves)
            if (c.partition == pname) curves.push_back(&c);
        if (curves.empty()) continue;
        const AutocorrCurve* finest = curves.front();
        for (const auto* c : curves)
            if (c->h < finest->h) finest = c;
        RichardsonSummary sum;
        sum.partition = pname;
        for (const auto* c : curves) {
            const AutocorrCurve* doubled = nullptr;
            for (const auto* d : curves)
                if (std::abs(d->h - 2.0 * c->h) <= 1e-9 * c->h) doubled = d;
            if (doubled == nullptr) continue;
            sum.hs.push_back(c->h);
            sum.eps.push_back(richardson_error(c->A, c->h, doubled->A, finest->A));
        }
        bool fittable = sum.hs.size() >= 2;
        for (double e : sum.eps) fittable = fittable && e > 0.0;
        if (fittable) sum.fit = fit_loglog_slope(sum.hs, sum.eps);
        report.summaries.push_back(std::move(sum));
    }
}

std::string leg_line(const AutocorrCurve& c) {
    std::ostringstream out;
    out << "partition=" << c.partition << " h=" << c.h
        << " accept=" << c.stats.mean_acceptance();
    if (c.stats.solver_failures > 0) out << " solver_failures=" << c.stats.solver_failures;
    return out.str();
}

}  // namespace

AutocorrReport run_autocorr_fluid(const FluidAutocorrConfig& cfg, const ProgressFn& progress) {
    cfg.validate();
    double box = cfg.box();
    SystemSpec spec = make_spec(cfg.n_particles, cfg.dim, box, cfg.beta());
    LennardJonesFluid pot =
        LennardJonesFluid::truncated(cfg.n_particles, cfg.dim, box, cfg.r_cut);
    std::optional<LJSplit> lj_split;
    if (cfg.proposal == "respa")
        lj_split.emplace(cfg.n_particles, cfg.dim, box, cfg.r_split, cfg.r_cut);

    AutocorrReport report;
    RngStream root(cfg.seed);
    std::uint64_t leg = 0;
    for (const auto& pname : cfg.partitions) {
        Partition part = make_partition(pname, cfg.n_particles);
        for (double h : cfg.step_sizes) {
            auto leg_rng = root.split(leg++);
            PhaseState s = fluid_init(spec, leg_rng.split(kStreamInit));
            Proposal prop =
                cfg.proposal == "respa" ? Proposal::respa(h, cfg.n_fast) : Proposal::verlet(h);
            std::optional<Integrator> integ;
            const Potential* total = nullptr;
            if (lj_split) {
                integ.emplace(spec, part, lj_split->split, prop, cfg.gamma);
                total = &lj_split->split;
            } else {
                integ.emplace(spec, part, pot, prop, cfg.gamma);
                total = &pot;
            }
            report.curves.push_back(autocorr_leg(spec, *integ, *total, nullptr, s, leg_rng,
                                                 cfg.n_burn, cfg.n_samples, cfg.t_corr, h, pname));
            if (progress) progress("autocorr_fluid " + leg_line(report.curves.back()));
        }
    }
    summarize_richardson(report, cfg.partitions);
    return report;
}

void dumbbell_lattice_init(const SystemSpec& spec, const DumbbellConstraints& cons,
                           RngStream& init_rng, PhaseState& s) {
    int np = spec.n_particles;
    if (np != 2 * cons.count())
        throw std::invalid_argument("dumbbell init: particle count mismatch");
    // even lattice edge keeps the sites of each pair x-adjacent in one row
    int edge = 1;
    while (std::pow(edge, spec.dim) < np) ++edge;
    if (edge % 2 != 0) ++edge;
    double spacing = spec.box_length / edge;
    s.q.resize(spec.dof());
    s.p.resize(spec.dof());
    for (int i = 0; i < np; ++i) {
        int rest = i;
        for (int k = 0; k < spec.dim; ++k) {
            s.q[i * spec.dim + k] = (rest % edge) * spacing;
            rest /= edge;
        }
    }
    sample_maxwell(spec, init_rng, s.p);
    project_to_manifold(spec, cons, s);  // bonds to length, momenta to tangent
    wrap_positions(s.q, spec.box_length);
}

AutocorrReport run_autocorr_dumbbell(const DumbbellAutocorrConfig& cfg,
                                     const ProgressFn& progress) {
    cfg.validate();
    double box = cfg.box();
    int np = 2 * cfg.n_dumbbells;
    SystemSpec spec = make_spec(np, cfg.dim, box, cfg.beta());
    DumbbellConstraints cons(cfg.n_dumbbells, cfg.dim, box, cfg.bond_length);
    LennardJonesFluid pot =
        LennardJonesFluid::truncated(np, cfg.dim, box, cfg.r_cut, cons.bonded_pairs());
    Partition part = Partition::per_dumbbell(cfg.n_dumbbells);

    AutocorrReport report;
    RngStream root(cfg.seed);
    std::uint64_t leg = 0;
    for (double h : cfg.step_sizes) {
        auto leg_rng = root.split(leg++);
        PhaseState s;
        auto init_rng = leg_rng.split(kStreamInit);
        dumbbell_lattice_init(spec, cons, init_rng, s);
        Integrator integ(spec, part, pot, cons, Proposal::rattle(h), cfg.gamma);
        report.curves.push_back(autocorr_leg(spec, integ, pot, &cons, s, leg_rng, cfg.n_burn,
                                             cfg.n_samples, cfg.t_corr, h, "per_dumbbell"));
        if (progress) progress("autocorr_dumbbell " + leg_line(report.curves.back()));
    }
    summarize_richardson(report, {"per_dumbbell"});
    return report;
}

ScalingReport run_scaling(const ScalingConfig& cfg, const ProgressFn& progress) {
    cfg.validate();
    ScalingReport report;
    RngStream root(cfg.seed);
    std::uint64_t leg = 0;
    std::vector<double> trivial_n, trivial_accept;
    for (const auto& pname : cfg.partitions) {
        for (std::int64_t n64 : cfg.n_ladder) {
            int n = static_cast<int>(n64);
            double box = std::pow(n / cfg.density, 1.0 / cfg.dim);
            double r_eff = std::min(cfg.r_cut, 0.5 * box);
            SystemSpec spec = make_spec(n, cfg.dim, box, cfg.beta());
            LennardJonesFluid pot = LennardJonesFluid::truncated(n, cfg.dim, box, r_eff);
            Partition part = make_partition(pname, n);
            auto leg_rng = root.split(leg++);
            PhaseState s = fluid_init(spec, leg_rng.split(kStreamInit));
            auto th = leg_rng.split(kStreamThermostat);
            auto mt = leg_rng.split(kStreamMetropolis);
            Integrator integ(spec, part, pot, Proposal::verlet(cfg.h), cfg.gamma);
            for (std::int64_t t = 0; t < cfg.n_burn; ++t) {
                integ.step(s, th, mt);
                if ((t & 1023) == 0) check_alive(spec, s, pot, "burn-in");
            }
            AcceptanceStats stats;
            for (std::int64_t t = 0; t < cfg.n_steps; ++t) {
                stats.add(integ.step(s, th, mt));
                if ((t & 1023) == 0) check_alive(spec, s, pot, "sampling");
            }
            ScalingPoint pt{n, pname, stats.mean_acceptance(), r_eff};
            if (pname == "trivial") {
                trivial_n.push_back(static_cast<double>(n));
                trivial_accept.push_back(pt.mean_accept);
            } else {
                report.per_particle_min = std::min(report.per_particle_min, pt.mean_accept);
            }
            report.points.push_back(pt);
            if (progress) {
                std::ostringstream out;
                out << "scaling partition=" << pname << " n=" << n
                    << " accept=" << pt.mean_accept;
                progress(out.str());
            }
        }
    }
    if (trivial_n.size() >= 2) {
        bool positive = true;
        for (double a : trivial_accept) positive = positive && a > 0.0;
        if (positive) report.trivial_fit = fit_loglog_slope(trivial_n, trivial_accept);
    }
    return report;
}

StationarityReport run_stationarity(const StationarityConfig& cfg, const ProgressFn& progress) {
    cfg.validate();
    SystemSpec spec = make_spec(1, 1, cfg.box_length, cfg.beta, cfg.mass);
    CosineWell pot(1, 1, cfg.box_length);
    Partition part = Partition::trivial(1);
    Integrator integ(spec, part, pot, Proposal::verlet(cfg.h), cfg.gamma);

    RngStream root(cfg.seed);
    auto leg_rng = root.split(0);
    PhaseState s = fluid_init(spec, leg_rng.split(kStreamInit));
    auto th = leg_rng.split(kStreamThermostat);
    auto mt = leg_rng.split(kStreamMetropolis);
    for (std::int64_t t = 0; t < cfg.n_burn; ++t) integ.step(s, th, mt);

    StationarityReport report;
    report.counts.assign(cfg.n_bins, 0);
    double two_pi_over_l = 2.0 * std::numbers::pi / cfg.box_length;
    double sum_p = 0.0, sum_p2 = 0.0;
    double sum_cos = 0.0, sum_cos2 = 0.0;
    std::int64_t n_thin = 0;
    for (std::int64_t t = 0; t < cfg.n_steps; ++t) {
        report.stats.add(integ.step(s, th, mt));
        sum_p += s.p[0];
        sum_p2 += s.p[0] * s.p[0];
        if ((t + 1) % cfg.thin == 0) {
            int bin = static_cast<int>(s.q[0] / cfg.box_length * cfg.n_bins);
            bin = std::clamp(bin, 0, cfg.n_bins - 1);
            ++report.counts[bin];
            double c = std::cos(two_pi_over_l * s.q[0]);
            sum_cos += c;
            sum_cos2 += c * c;
            ++n_thin;
        }
    }
    double mean_p = sum_p / static_cast<double>(cfg.n_steps);
    report.momentum_var = sum_p2 / static_cast<double>(cfg.n_steps) - mean_p * mean_p;
    report.momentum_var_target = cfg.mass / cfg.beta;

    auto well = [&](double x) { return 1.0 - std::cos(two_pi_over_l * x); };
    auto weight = [&](double x) { return std::exp(-cfg.beta * well(x)); };
    double z = simpson(weight, 0.0, cfg.box_length, 10000);
    report.expected.resize(cfg.n_bins);
    double bin_width = cfg.box_length / cfg.n_bins;
    for (int b = 0; b < cfg.n_bins; ++b)
        report.expected[b] =
            simpson(weight, b * bin_width, (b + 1) * bin_width, 200) / z * n_thin;
    report.chi2 = chi2_statistic(report.counts, report.expected);
    report.p_value = chi2_sf(report.chi2, cfg.n_bins - 1);

    report.cos_mean = sum_cos / n_thin;
    double cos_var =
        (sum_cos2 / n_thin - report.cos_mean * report.cos_mean) * n_thin / (n_thin - 1.0);
    report.cos_stderr = std::sqrt(cos_var / n_thin);
    report.cos_mean_target =
        gibbs_moment([&](double x) { return std::cos(two_pi_over_l * x); }, well, cfg.beta,
                     cfg.box_length);
    if (progress) {
        std::ostringstream out;
        out << "stationarity p=" << report.p_value << " momentum_var=" << report.momentum_var
            << " accept=" << report.stats.mean_acceptance();
        progress(out.str());
    }
    return report;
}

BlowupReport run_blowup_demo(const BlowupConfig& cfg, const ProgressFn& progress) {
    cfg.validate();
    double box = cfg.box();
    SystemSpec spec = make_spec(cfg.n_particles, cfg.dim, box, cfg.beta());
    LennardJonesFluid pot =
        LennardJonesFluid::truncated(cfg.n_particles, cfg.dim, box, cfg.r_cut);
    Partition part = Partition::trivial(cfg.n_particles);
    RngStream root(cfg.seed);
    BlowupReport report;

    {
        auto leg_rng = root.split(0);
        PhaseState s = fluid_init(spec, leg_rng.split(kStreamInit));
        auto th = leg_rng.split(kStreamThermostat);
        Integrator integ(spec, part, pot, Proposal::verlet(cfg.h), cfg.gamma);
        for (std::int64_t t = 1; t <= cfg.max_steps; ++t) {
            integ.step_unpatched(s, th);
            if (blew_up(hamiltonian(spec, s, pot))) {
                report.unpatched_blew_up = true;
                report.unpatched_steps = t;
                break;
            }
        }
        if (!report.unpatched_blew_up) report.unpatched_steps = cfg.max_steps;
        if (progress) {
            std::ostringstream out;
            out << "blowup unpatched " << (report.unpatched_blew_up ? "diverged at step " : "survived ")
                << report.unpatched_steps;
            progress(out.str());
        }
    }

    {
        auto leg_rng = root.split(1);
        PhaseState s = fluid_init(spec, leg_rng.split(kStreamInit));
        auto th = leg_rng.split(kStreamThermostat);
        auto mt = leg_rng.split(kStreamMetropolis);
        Integrator integ(spec, part, pot, Proposal::verlet(cfg.h), cfg.gamma);
        AcceptanceStats stats;
        report.patched_completed = true;
        report.patched_max_energy = -std::numeric_limits<double>::infinity();
        for (std::int64_t t = 1; t <= cfg.max_steps; ++t) {
            StepRecord rec = integ.step(s, th, mt);
            stats.add(rec);
            double energy = hamiltonian(spec, s, pot);
            report.patched_max_energy = std::max(report.patched_max_energy, energy);
            if (t % cfg.record_every == 0) report.patched_records.push_back({t, rec, energy});
            if (blew_up(energy)) {
                report.patched_completed = false;
                break;
            }
        }
        report.patched_mean_accept = stats.mean_acceptance();
        if (progress) {
            std::ostringstream out;
            out << "blowup patched completed=" << (report.patched_completed ? "yes" : "no")
                << " max_energy=" << report.patched_max_energy
                << " accept=" << report.patched_mean_accept;
            progress(out.str());
        }
    }
    return report;
}

// ---- output plumbing ----------------------------------------------------------

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string autocorr_csv(const AutocorrCurve& curve) {
    std::string out = "tau,A_h\n";
    for (Eigen::Index k = 0; k < curve.A.size(); ++k) {
        out += format_double(static_cast<double>(k) * curve.h);
        out += ',';
        out += format_double(curve.A[k]);
        out += '\n';
    }
    return out;
}

std::string scaling_csv(const ScalingReport& report) {
    std::string out = "n_particles,partition_kind,mean_accept_per_particle\n";
    for (const auto& pt : report.points) {
        out += std::to_string(pt.n_particles);
        out += ',';
        out += pt.partition;
        out += ',';
        out += format_double(pt.mean_accept);
        out += '\n';
    }
    return out;
}

std::string step_records_csv(std::span<const TimedRecord> records) {
    std::string out = "step,accepted,mean_delta_h,solver_failures\n";
    for (const auto& r : records) {
        out += std::to_string(r.step);
        out += ',';
        out += std::to_string(r.rec.accepted);
        out += ',';
        out += format_double(r.rec.mean_delta_h);
        out += ',';
        out += std::to_string(r.rec.solver_failures);
        out += '\n';
    }
    return out;
}

namespace {

// byte-oriented SHA-1, enough for content addressing of run outputs
struct Sha1 {
    std::uint32_t h[5] = {0x67452301u, 0xEFCDAB89u, 0x98BADCFEu, 0x10325476u, 0xC3D2E1F0u};
    std::uint64_t total = 0;
    unsigned char buf[64];
    std::size_t fill = 0;

    static std::uint32_t rol(std::uint32_t x, int s) { return (x << s) | (x >> (32 - s)); }

    void block(const unsigned char* p) {
        std::uint32_t w[80];
        for (int i = 0; i < 16; ++i)
            w[i] = static_cast<std::uint32_t>(p[4 * i]) << 24 |
                   static_cast<std::uint32_t>(p[4 * i + 1]) << 16 |
                   static_cast<std::uint32_t>(p[4 * i + 2]) << 8 |
                   static_cast<std::uint32_t>(p[4 * i + 3]);
        for (int i = 16; i < 80; ++i) w[i] = rol(w[i - 3] ^ w[i - 8] ^ w[i - 14] ^ w[i - 16], 1);
        std::uint32_t a = h[0], b = h[1], c = h[2], d = h[3], e = h[4];
        for (int i = 0; i < 80; ++i) {
            std::uint32_t f, k;
            if (i < 20) {
                f = (b & c) | (~b & d);
                k = 0x5A827999u;
            } else if (i < 40) {
                f = b ^ c ^ d;
                k = 0x6ED9EBA1u;
            } else if (i < 60) {
                f = (b & c) | (b & d) | (c & d);
                k = 0x8F1BBCDCu;
            } else {
                f = b ^ c ^ d;
                k = 0xCA62C1D6u;
            }
            std::uint32_t t = rol(a, 5) + f + e + k + w[i];
            e = d;
            d = c;
            c = rol(b, 30);
            b = a;
            a = t;
        }
        h[0] += a;
        h[1] += b;
        h[2] += c;
        h[3] += d;
        h[4] += e;
    }

    void update(const void* data, std::size_t len) {
        const auto* p = static_cast<const unsigned char*>(data);
        total += len;
        while (len > 0) {
            std::size_t take = std::min(len, sizeof buf - fill);
            std::memcpy(buf + fill, p, take);
            fill += take;
            p += take;
            len -= take;
            if (fill == sizeof buf) {
                block(buf);
                fill = 0;
            }
        }
    }

    std::string hex_digest() {
        std::uint64_t bits = total * 8;
        unsigned char pad = 0x80, zero = 0;
        update(&pad, 1);
        while (fill != 56) update(&zero, 1);
        unsigned char len_be[8];
        for (int i = 0; i < 8; ++i) len_be[i] = static_cast<unsigned char>(bits >> (56 - 8 * i));
        update(len_be, 8);
        char out[41];
        for (int i = 0; i < 5; ++i) std::snprintf(out + 8 * i, 9, "%08x", h[i]);
        return std::string(out, 40);
    }
};

}  // namespace

std::string git_blob_sha1(std::string_view content) {
    Sha1 sha;
    char header[32];
    int n = std::snprintf(header, sizeof header, "blob %zu", content.size());
    sha.update(header, static_cast<std::size_t>(n) + 1);  // trailing NUL is part of the header
    sha.update(content.data(), content.size());
    return sha.hex_digest();
}

void write_text_file(const std::filesystem::path& path, std::string_view content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

std::string svg_loglog(const std::string& title, const std::string& x_label,
                       const std::string& y_label, const std::vector<PlotSeries>& series) {
    const int width = 640, height = 480;
    const int ml = 70, mr = 20, mt = 40, mb = 50;
    const double pw = width - ml - mr, ph = height - mt - mb;
    static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"};

    double lo_x = 0.0, hi_x = 0.0, lo_y = 0.0, hi_y = 0.0;
    bool any = false;
    for (const auto& s : series)
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            if (!(s.x[i] > 0.0) || !(s.y[i] > 0.0)) continue;
            double lx = std::log10(s.x[i]), ly = std::log10(s.y[i]);
            if (!any) {
                lo_x = hi_x = lx;
                lo_y = hi_y = ly;
                any = true;
            }
            lo_x = std::min(lo_x, lx);
            hi_x = std::max(hi_x, lx);
            lo_y = std::min(lo_y, ly);
            hi_y = std::max(hi_y, ly);
        }
    if (!any) {
        lo_x = lo_y = -1.0;
        hi_x = hi_y = 1.0;
    }
    // a little slack so extreme points are not on the frame
    double px = 0.05 * std::max(hi_x - lo_x, 0.5), py = 0.05 * std::max(hi_y - lo_y, 0.5);
    lo_x -= px;
    hi_x += px;
    lo_y -= py;
    hi_y += py;

    auto sx = [&](double x) { return ml + (std::log10(x) - lo_x) / (hi_x - lo_x) * pw; };
    auto sy = [&](double y) { return height - mb - (std::log10(y) - lo_y) / (hi_y - lo_y) * ph; };
    auto num = [](double v) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.6g", v);
        return std::string(buf);
    };

    std::ostringstream out;
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
        << height << "\" viewBox=\"0 0 " << width << ' ' << height << "\">\n"
        << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
        << "<text x=\"" << width / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">"
        << title << "</text>\n"
        << "<text x=\"" << ml + pw / 2 << "\" y=\"" << height - 12
        << "\" text-anchor=\"middle\" font-size=\"12\">" << x_label << "</text>\n"
        << "<text x=\"16\" y=\"" << mt + ph / 2
        << "\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 16 "
        << mt + ph / 2 << ")\">" << y_label << "</text>\n";

    for (int d = static_cast<int>(std::ceil(lo_x)); d <= static_cast<int>(std::floor(hi_x)); ++d) {
        double x = sx(std::pow(10.0, d));
        out << "<line x1=\"" << num(x) << "\" y1=\"" << mt << "\" x2=\"" << num(x) << "\" y2=\""
            << height - mb << "\" stroke=\"#dddddd\"/>\n"
            << "<text x=\"" << num(x) << "\" y=\"" << height - mb + 16
            << "\" text-anchor=\"middle\" font-size=\"11\">1e" << d << "</text>\n";
    }
    for (int d = static_cast<int>(std::ceil(lo_y)); d <= static_cast<int>(std::floor(hi_y)); ++d) {
        double y = sy(std::pow(10.0, d));
        out << "<line x1=\"" << ml << "\" y1=\"" << num(y) << "\" x2=\"" << width - mr
            << "\" y2=\"" << num(y) << "\" stroke=\"#dddddd\"/>\n"
            << "<text x=\"" << ml - 6 << "\" y=\"" << num(y + 4)
            << "\" text-anchor=\"end\" font-size=\"11\">1e" << d << "</text>\n";
    }
    out << "<rect x=\"" << ml << "\" y=\"" << mt << "\" width=\"" << num(pw) << "\" height=\""
        << num(ph) << "\" fill=\"none\" stroke=\"black\"/>\n";

    for (std::size_t si = 0; si < series.size(); ++si) {
        const auto& s = series[si];
        const char* color = colors[si % (sizeof colors / sizeof colors[0])];
        out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            if (!(s.x[i] > 0.0) || !(s.y[i] > 0.0)) continue;
            out << num(sx(s.x[i])) << ',' << num(sy(s.y[i])) << ' ';
        }
        out << "\"/>\n";
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            if (!(s.x[i] > 0.0) || !(s.y[i] > 0.0)) continue;
            out << "<circle cx=\"" << num(sx(s.x[i])) << "\" cy=\"" << num(sy(s.y[i]))
                << "\" r=\"3\" fill=\"" << color << "\"/>\n";
        }
        out << "<text x=\"" << width - mr - 8 << "\" y=\"" << mt + 18 + 16 * si
            << "\" text-anchor=\"end\" font-size=\"12\" fill=\"" << color << "\">" << s.label
            << "</text>\n";
    }
    out << "</svg>\n";
    return out.str();
}

}  // namespace metromd
