// pdelin: simulate data, run posterior inference and reproduce the studies.

#include <CLI11.hpp>

#include <chrono>
#include <cstdlib>
#include <iostream>

#include <pdelin/config.hpp>
#include <pdelin/experiments.hpp>
#include <pdelin/observe.hpp>

namespace fs = std::filesystem;
using namespace pdelin;

namespace {

constexpr int exit_ok = 0;
constexpr int exit_config = 2;
constexpr int exit_domain = 3;
constexpr int exit_acceptance = 4;

struct Manifest {
    std::string command;
    std::vector<std::string> argv;
    std::string config;
    std::uint64_t seed = 0;
    std::vector<fs::path> outputs;
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();

    void write(const fs::path& dir) const {
        nlohmann::ordered_json j;
        j["command"] = command;
        j["argv"] = argv;
        j["config"] = config;
        j["seed"] = seed;
        j["version"] = PDELIN_VERSION;
        j["outputs"] = nlohmann::json::array();
        for (const auto& p : outputs) j["outputs"].push_back(p.string());
        j["wall_time_s"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        fs::create_directories(dir);
        io::write_atomic(dir / "manifest.json", j.dump(2) + "\n");
    }
};

// The problem a data set belongs to: one of the sequence-model cases.
struct Problem {
    std::string name;
    double beta = 1.0;
    int intervals = 1024;
    int m = 63;

    static Problem from(const Config& cfg) {
        Problem p;
        p.name = cfg.get_string("problem.case");
        p.beta = cfg.get_double("problem.beta", p.beta);
        p.intervals = static_cast<int>(cfg.get_int("problem.intervals", p.intervals));
        p.m = static_cast<int>(cfg.get_int("problem.m", p.m));
        const auto& known = figure_cases();
        if (p.name != "volterra" && std::find(known.begin(), known.end(), p.name) == known.end())
            throw ConfigError(cfg.where("problem.case") + ": unknown case `" + p.name + "`");
        if (p.name == "schrodinger-1d-spline") throw ConfigError(cfg.where("problem.case") + ": basis unavailable");
        if (p.intervals < 2 || p.m < 1 || !(p.beta > 0.0)) throw ConfigError(cfg.source() + ": invalid [problem] values");
        return p;
    }

    int d() const { return name == "schrodinger-2d" ? 2 : 1; }
    double p() const { return name == "volterra" ? 1.0 : 2.0; }

    SequenceCase build(std::size_t rows) const {
        if (name == "volterra") {
            const int terms = std::max<int>(4096, static_cast<int>(rows));
            return volterra_case(beta, terms, rows, intervals);
        }
        if (name == "schrodinger-2d") return schrodinger_2d_case(m, rows);
        return schrodinger_1d_case(name, rows, intervals);
    }
};

bool is_design(const Config& cfg) {
    const auto model = cfg.get_string("simulate.model", "sequence");
    if (model != "sequence" && model != "design")
        throw ConfigError(cfg.where("simulate.model") + ": model must be `sequence` or `design`");
    return model == "design";
}

// Design data observe u = Kv + g~ for the one-dimensional Schrödinger cases only,
// where g~(x) = 1 + x is available in closed form.
void require_design_support(const Problem& p) {
    if (p.name == "volterra" || p.d() != 1)
        throw ConfigError("design observations are supported for the 1-D Schrödinger cases only");
}

double gtilde_1d(std::span<const double> x) { return 1.0 + x[0]; }

int cmd_simulate(const fs::path& config_path, const fs::path& out, Manifest& man) {
    const auto cfg = Config::load(config_path);
    const auto prob = Problem::from(cfg);
    const double n = cfg.get_double("simulate.n");
    if (!(n > 0.0)) throw ConfigError(cfg.where("simulate.n") + ": n must be positive");
    man.seed = cfg.get_seed("simulate.seed", man.seed);
    fs::create_directories(out);
    if (is_design(cfg)) {
        require_design_support(prob);
        const auto m = static_cast<int>(cfg.get_int("simulate.m"));
        if (m < 2) throw ConfigError(cfg.where("simulate.m") + ": m must be at least 2");
        const auto c = prob.build(std::max<std::size_t>(4096, static_cast<std::size_t>(m)));
        const CoeffSeq v0{c.sys.id, 1, c.v0};
        auto u = [&](std::span<const double> x) { return evaluate_K(v0, c.sys, x) + gtilde_1d(x); };
        // Noise sd sqrt(m / n) puts the projected coordinates at level n.
        const double sd = std::sqrt(static_cast<double>(m) / n);
        auto obs = simulate_design(u, m, 1, man.seed, true);
        std::mt19937_64 rng(man.seed);
        std::normal_distribution<double> z;
        for (auto& y : obs.y) y += sd * z(rng);
        const auto path = out / "design.csv";
        write_design_observation(path, obs);
        nlohmann::ordered_json meta{{"n", n}, {"m", m}, {"d", 1}};
        io::write_atomic(out / "design.json", meta.dump(2) + "\n");
        man.outputs = {path, out / "design.json"};
    } else {
        const auto cap = static_cast<std::size_t>(cfg.get_int("simulate.truncation", 0));
        std::size_t N = default_truncation(n, prob.d(), prob.p());
        if (cap) N = std::min(N, cap);
        if (prob.d() == 2) N = std::min<std::size_t>(N, 2048);
        const auto c = prob.build(N);
        N = std::min(N, c.rows());
        const auto obs = simulate_case(c, n, N, man.seed);
        const auto path = out / "observation.csv";
        write_seq_observation(path, obs);
        man.outputs = {path, out / "observation.json"};
    }
    return exit_ok;
}

struct InferOptions {
    fs::path config;
    fs::path data;
    fs::path out = ".";
    std::optional<double> alpha;
    bool eb = false;
    bool hb = false;
    int draws = 500;
    double level = 0.95;
    double delta0 = 0.0;
    double max_excluded = 0.01;
    int kept_draws = 20;
};

int cmd_infer(const InferOptions& o, Manifest& man) {
    const auto cfg = Config::load(o.config);
    const auto prob = Problem::from(cfg);
    if (o.draws < 2) throw ConfigError("--draws must be at least 2");
    if (!(o.level > 0.0 && o.level < 1.0)) throw ConfigError("--level must lie in (0, 1)");
    const PriorMode mode = o.alpha ? PriorMode::fixed : (o.hb ? PriorMode::hb : PriorMode::eb);
    if (o.alpha && !(*o.alpha > 0.0)) throw ConfigError("--alpha must be positive");

    fs::path data = o.data;
    if (data.empty()) data = o.out / (is_design(cfg) ? "design.csv" : "observation.csv");
    if (!fs::exists(data)) throw ConfigError(data.string() + ": data file not found");
    const auto text = io::read_text(data);
    const auto header = io::split(text.substr(0, text.find('\n')));
    const bool design = !header.empty() && header.front() == "x1";

    SequenceCase c;
    SeqObservation obs;
    if (design) {
        require_design_support(prob);
        auto dobs = read_design_observation(data);
        c = prob.build(static_cast<std::size_t>(dobs.m));
        obs = design_to_seq(dobs, c.sys, gtilde_1d);
        // Unit-variance design noise gives level m; simulate records the level it used.
        auto meta_path = data;
        meta_path.replace_extension(".json");
        if (fs::exists(meta_path)) obs.n = nlohmann::json::parse(io::read_text(meta_path)).at("n").get<double>();
        const auto N = std::min(obs.size(), c.rows());
        obs.y.resize(N);
        obs.kappa.resize(N);
        obs.sign.resize(N);
    } else {
        // The sidecar fixes the length; build a case wide enough for it.
        auto meta_path = data;
        meta_path.replace_extension(".json");
        std::size_t N = 0;
        try {
            N = nlohmann::json::parse(io::read_text(meta_path)).at("N").get<std::size_t>();
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError(meta_path.string() + ": " + e.what());
        }
        c = prob.build(N);
        obs = read_seq_observation(data, c.sys);
        if (obs.size() > c.rows()) throw ConfigError(data.string() + ": more coefficients than the problem basis");
    }

    const auto cp = infer_coefficients(obs, mode, o.alpha.value_or(1.0), o.draws, derive_seed(man.seed, 1, 0));
    const auto pf = push_forward(c, cp.draws, cp.mean, o.delta0);
    if (pf.kept.empty() || pf.excluded_fraction() > o.max_excluded)
        throw InversionDomainError("excluded draw fraction " + io::format_double(pf.excluded_fraction()) +
                                       " exceeds " + io::format_double(o.max_excluded) + "; minimum denominator " +
                                       io::format_double(pf.min_denominator) + " against floor " +
                                       io::format_double(pf.delta0),
                                   pf.min_denominator);
    const auto b = summarize_bands(c, pf, o.level, o.kept_draws);

    fs::create_directories(o.out);
    io::CsvWriter post({"ell", "mean", "draw_sd"});
    for (Eigen::Index l = 0; l < cp.draws.rows(); ++l) {
        const auto row = cp.draws.row(l).array();
        const double sd = std::sqrt((row - row.mean()).square().sum() / static_cast<double>(row.size() - 1));
        post.row(l + 1, cp.mean[static_cast<std::size_t>(l)], sd);
    }
    post.save(o.out / "posterior.csv");

    std::vector<std::string> head = c.d == 2 ? std::vector<std::string>{"x1", "x2"} : std::vector<std::string>{"x"};
    head.insert(head.end(), {"truth", "mean", "lo", "hi", "plugin"});
    io::CsvWriter bands(head);
    for (std::size_t j = 0; j < c.grid.size(); ++j) {
        auto row = c.grid.point(j);
        row.insert(row.end(), {b.truth[j], b.mean[j], b.lo[j], b.hi[j], pf.plugin[j]});
        bands.row(row);
    }
    bands.save(o.out / "bands.csv");
    man.outputs = {o.out / "posterior.csv", o.out / "bands.csv"};

    if (mode == PriorMode::eb) {
        io::CsvWriter trace({"alpha", "objective"});
        for (const auto& [a, v] : cp.eb_trace) trace.row(a, v);
        trace.save(o.out / "eb_trace.csv");
        man.outputs.push_back(o.out / "eb_trace.csv");
    }
    std::cout << "alpha " << io::format_double(cp.alpha) << ", truncation " << obs.size() << ", kept "
              << pf.kept.size() << "/" << o.draws << ", containment " << io::format_double(b.containment) << "\n";
    return exit_ok;
}

int cmd_experiment(const std::string& study, const std::string& name, const fs::path& config_path,
                   const std::optional<std::uint64_t>& seed, const fs::path& out, Manifest& man) {
    const auto& studies = study_names();
    if (std::find(studies.begin(), studies.end(), study) == studies.end())
        throw ConfigError("unknown study `" + study + "`");
    auto cfg = config_path.empty() ? default_experiment(study, name)
                                   : experiment_from_config(Config::load(config_path), study, name);
    if (seed) cfg.seed = *seed;
    cfg.output = out;
    man.seed = cfg.seed;
    const auto checks = run_study(cfg);
    for (const auto& e : fs::directory_iterator(out))
        if (e.path().filename() != "manifest.json") man.outputs.push_back(e.path());
    std::sort(man.outputs.begin(), man.outputs.end());
    int failed = 0;
    for (const auto& c : checks) {
        std::cout << (c.passed ? "PASS " : "FAIL ") << c.name << " (" << c.detail << ")\n";
        failed += c.passed ? 0 : 1;
    }
    if (failed) {
        std::cerr << failed << " of " << checks.size() << " checks failed\n";
        return exit_acceptance;
    }
    return exit_ok;
}

int cmd_basis_audit(const std::string& system, int d, int max_index, const fs::path& out, Manifest& man) {
    if (max_index < 1) throw ConfigError("--max-index must be positive");
    SvdSystem sys;
    if (system == "laplacian") {
        if (d < 1 || d > 3) throw ConfigError("--d must be 1, 2 or 3");
        sys = laplacian_system(d, max_index);
    } else if (system == "volterra") {
        sys = volterra_system(max_index);
    } else if (system == "darcy-dirichlet") {
        sys = darcy1d_system(max_index, Darcy1dBoundary::dirichlet);
    } else if (system == "darcy-mixed") {
        sys = darcy1d_system(max_index, Darcy1dBoundary::mixed);
    } else {
        throw ConfigError("unknown system `" + system + "`");
    }
    const auto path = out / ("basis_" + system + ".csv");
    fs::create_directories(out);
    write_system_csv(path, sys);
    man.outputs = {path};
    return exit_ok;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Posterior inference for PDE inverse problems by linearization"};
    app.require_subcommand(1);
    Manifest man;
    man.argv.assign(argv, argv + argc);
    std::optional<std::uint64_t> seed;
    fs::path out = ".";

    auto* sim = app.add_subcommand("simulate", "Simulate observations from a config file");
    fs::path sim_config;
    sim->add_option("config", sim_config, "INI config with [problem] and [simulate]")->required();
    sim->add_option("-o,--output", out, "Output directory");

    auto* inf = app.add_subcommand("infer", "Posterior bands for f from observations");
    InferOptions io_opts;
    inf->add_option("config", io_opts.config, "INI config with [problem]")->required();
    inf->add_option("--data", io_opts.data, "Observation CSV (default: output directory)");
    auto* a = inf->add_option("--alpha", io_opts.alpha, "Fixed prior smoothness");
    auto* eb = inf->add_flag("--eb", io_opts.eb, "Empirical Bayes smoothness (default)");
    auto* hb = inf->add_flag("--hb", io_opts.hb, "Hierarchical prior on the smoothness");
    a->excludes(eb, hb);
    eb->excludes(hb);
    inf->add_option("--draws", io_opts.draws, "Posterior draws");
    inf->add_option("--level", io_opts.level, "Pointwise band level");
    inf->add_option("--delta0", io_opts.delta0, "Denominator floor (0: automatic)");
    inf->add_option("--max-excluded", io_opts.max_excluded, "Largest tolerated fraction of excluded draws");
    inf->add_option("--seed", seed, "Seed (default 0)");
    inf->add_option("-o,--output", io_opts.out, "Output directory");

    auto* exp = app.add_subcommand("experiment", "Run a study and check its acceptance assertions");
    std::string study, name;
    fs::path exp_config;
    exp->add_option("study", study, "figure | contraction | coverage | darcy-refinement")->required();
    exp->add_option("name", name, "Figure case");
    exp->add_option("-c,--config", exp_config, "INI overrides in [experiment]");
    exp->add_option("--seed", seed, "Seed (default 0)");
    fs::path exp_out;
    exp->add_option("-o,--output", exp_out, "Output directory (default runs/<study>[/<name>])");

    auto* aud = app.add_subcommand("basis-audit", "Dump a singular system table");
    std::string system;
    int d = 1, max_index = 16;
    aud->add_option("system", system, "laplacian | volterra | darcy-dirichlet | darcy-mixed")->required();
    aud->add_option("--d", d, "Dimension (laplacian)");
    aud->add_option("--max-index", max_index, "Largest index per axis");
    aud->add_option("-o,--output", out, "Output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return exit_config;
    }

    man.seed = seed.value_or(0);
    int code = exit_ok;
    fs::path manifest_dir = out;
    try {
        if (*sim) {
            man.command = "simulate";
            man.config = sim_config.string();
            code = cmd_simulate(sim_config, out, man);
        } else if (*inf) {
            man.command = "infer";
            man.config = io_opts.config.string();
            manifest_dir = io_opts.out;
            code = cmd_infer(io_opts, man);
        } else if (*exp) {
            man.command = "experiment";
            man.config = exp_config.string();
            manifest_dir = exp_out.empty() ? fs::path("runs") / study / name : exp_out;
            code = cmd_experiment(study, name, exp_config, seed, manifest_dir, man);
        } else {
            man.command = "basis-audit";
            code = cmd_basis_audit(system, d, max_index, out, man);
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return exit_config;
    } catch (const InversionDomainError& e) {
        std::cerr << "inversion domain error: " << e.what() << " (minimum " << io::format_double(e.value()) << ")\n";
        return exit_domain;
    } catch (const DimensionError& e) {
        std::cerr << "schema error: " << e.what() << "\n";
        return exit_config;
    } catch (const Error& e) {
        std::cerr << "domain error: " << e.what() << "\n";
        return exit_domain;
    }
    man.write(manifest_dir);
    return code;
}
