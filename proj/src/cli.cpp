#include "pixpatch/cli.hpp"

#include "pixpatch/errors.hpp"
#include "pixpatch/io.hpp"
#include "pixpatch/seed_design.hpp"
#include "pixpatch/spectra.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>
#include <fmt/ostream.h>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>

namespace fs = std::filesystem;

namespace pixpatch {

namespace {

constexpr const char* kLogHeader = "generation,best_fit,mean_fit,best_bw_hz,best_rl_db\n";

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) {
        throw IoError(fmt::format("cannot create directory {}: {}", dir.string(), ec.message()));
    }
}

IncidentCache load_incident(const RunConfig& cfg, std::ostream& log) {
    IncidentStore store(cfg.resolved_cache_dir());
    const auto fp = incident_fingerprint(cfg.dims, cfg.mesh, cfg.source);
    if (auto cached = store.load(fp); cached && cached->trace.samples.size() == static_cast<std::size_t>(cfg.source.n_steps)) {
        return *std::move(cached);
    }
    log << "recording incident trace (" << to_hex(fp) << ")\n";
    ensure_dir(cfg.resolved_cache_dir());
    return store.load_or_record(cfg.dims, cfg.mesh, cfg.source);
}

FdtdEvaluator make_evaluator(const RunConfig& cfg, std::ostream& log) {
    return FdtdEvaluator(cfg.dims, cfg.mesh, cfg.source, load_incident(cfg, log), cfg.freqs.values(), cfg.fitness,
                         cfg.freqs.noise_floor_rel);
}

std::string spectrum_csv(const Spectrum& s) {
    std::ostringstream os;
    write_s11_csv(s, os);
    return os.str();
}

std::string log_row(const GAState& state) {
    double sum = 0.0;
    for (const Individual& ind : state.population) {
        sum += ind.record.fit;
    }
    const double mean = state.population.empty() ? 0.0 : sum / static_cast<double>(state.population.size());
    return fmt::format("{},{:.17g},{:.17g},{:.17g},{:.17g}\n", state.generation, state.best.record.fit, mean,
                       state.best.record.bw_hz, state.best.record.rl_min_db);
}

// Keeps the header and every row up to and including `generation`.
std::string truncate_log(const std::string& text, long generation) {
    std::istringstream in(text);
    std::string out = kLogHeader;
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
        if (line.empty()) {
            continue;
        }
        const long g = std::strtol(line.c_str(), nullptr, 10);
        if (g <= generation) {
            out += line + "\n";
        }
    }
    return out;
}

void save_generation(const GAState& state, std::uint64_t fp, const fs::path& dir, std::string& log_text) {
    log_text += log_row(state);
    write_file_atomic(dir / "generations.csv", log_text);
    write_file_atomic(dir / "grids" / fmt::format("generation-{:03}.txt", state.generation),
                      format_grid(state.best.genes));
    std::ostringstream cp;
    write_checkpoint(state, fp, cp);
    write_file_atomic(dir / "checkpoint.txt", cp.str());
}

void print_progress(const GAState& state, std::ostream& log) {
    fmt::print(log, "generation {} best_fit={:.6f} bw_hz={:.6g} rl_min_db={:.3f}\n", state.generation,
               state.best.record.fit, state.best.record.bw_hz, state.best.record.rl_min_db);
}

struct LogRow {
    long generation = 0;
    double best_fit = 0, mean_fit = 0, bw = 0, rl = 0;
};

std::vector<LogRow> read_log(const fs::path& path) {
    std::istringstream in(read_file(path));
    std::string line;
    std::getline(in, line);
    if (line + "\n" != kLogHeader) {
        throw IoError(fmt::format("{}: unexpected header", path.string()));
    }
    std::vector<LogRow> rows;
    while (std::getline(in, line)) {
        if (line.empty()) {
            continue;
        }
        std::vector<std::string_view> cells;
        std::string_view rest(line);
        while (true) {
            const auto comma = rest.find(',');
            cells.push_back(rest.substr(0, comma));
            if (comma == std::string_view::npos) {
                break;
            }
            rest.remove_prefix(comma + 1);
        }
        if (cells.size() != 5) {
            throw IoError(fmt::format("{}: malformed row '{}'", path.string(), line));
        }
        LogRow r;
        r.generation = static_cast<long>(parse_double(cells[0]));
        r.best_fit = parse_double(cells[1]);
        r.mean_fit = parse_double(cells[2]);
        r.bw = parse_double(cells[3]);
        r.rl = parse_double(cells[4]);
        rows.push_back(r);
    }
    return rows;
}

Spectrum read_spectrum(const fs::path& path) {
    std::istringstream in(read_file(path));
    return read_s11_csv(in);
}

int env_workers() {
    const char* v = std::getenv("PIXPATCH_WORKERS");
    if (v == nullptr || *v == '\0') {
        return 0;
    }
    char* end = nullptr;
    const long n = std::strtol(v, &end, 10);
    if (*end != '\0' || n < 1) {
        throw ValidationError(fmt::format("PIXPATCH_WORKERS: expected a positive integer, got '{}'", v));
    }
    return static_cast<int>(n);
}

} // namespace

GAState optimize(const RunConfig& cfg, const fs::path& out_dir, const OptimizeOptions& options, std::ostream& log) {
    cfg.validate();
    ensure_dir(out_dir / "grids");
    const std::uint64_t fp = cfg.fingerprint();
    const fs::path cp_path = out_dir / "checkpoint.txt";
    const fs::path resume_from = options.checkpoint.empty() ? cp_path : options.checkpoint;

    const FdtdEvaluator evaluator = make_evaluator(cfg, log);
    MemoizedEvaluator memo([&evaluator](const Chromosome& c) { return evaluator(c); });
    const EvaluateFn evaluate = [&memo](const Chromosome& c) { return memo(c); };

    GAState state;
    std::string log_text;
    if (options.resume) {
        std::istringstream in(read_file(resume_from));
        std::uint64_t stored = 0;
        state = read_checkpoint(in, stored);
        if (stored != fp) {
            throw ValidationError(fmt::format(
                "checkpoint: configuration fingerprint {} does not match the current configuration {}",
                to_hex(stored), to_hex(fp)));
        }
        const fs::path log_path = out_dir / "generations.csv";
        log_text = truncate_log(fs::exists(log_path) ? read_file(log_path) : std::string(kLogHeader), state.generation);
        write_file_atomic(log_path, log_text);
        log << "resuming at generation " << state.generation << "\n";
    } else {
        write_file_atomic(out_dir / "config.txt", format_config(cfg));
        log_text = kLogHeader;
        state = initial_state(cfg.ga, evaluate, cfg.workers);
        save_generation(state, fp, out_dir, log_text);
        print_progress(state, log);
    }

    while (state.generation < cfg.ga.generations &&
           (options.stop_after < 0 || state.generation < options.stop_after)) {
        state = evolve_step(state, cfg.ga, evaluate, cfg.workers);
        save_generation(state, fp, out_dir, log_text);
        print_progress(state, log);
    }

    if (options.write_spectra && state.generation >= cfg.ga.generations) {
        const Evaluation seed = evaluator.evaluate_full(Chromosome::all_ones());
        const Evaluation best = evaluator.evaluate_full(state.best.genes);
        write_file_atomic(out_dir / "seed_s11.csv", spectrum_csv(seed.spectrum));
        write_file_atomic(out_dir / "best_s11.csv", spectrum_csv(best.spectrum));
        write_file_atomic(out_dir / "best.txt", format_grid(state.best.genes));
    }
    return state;
}

void report(const fs::path& dir, std::ostream& out) {
    const RunConfig cfg = parse_config(read_file(dir / "config.txt"));
    const auto rows = read_log(dir / "generations.csv");
    if (rows.empty()) {
        throw IoError(fmt::format("{}: no generations logged", (dir / "generations.csv").string()));
    }
    const Spectrum seed = read_spectrum(dir / "seed_s11.csv");
    const Spectrum best = read_spectrum(dir / "best_s11.csv");
    if (seed.freqs != best.freqs) {
        throw IoError("seed_s11.csv and best_s11.csv use different frequency grids");
    }

    const auto summarize = [&](const Spectrum& s) {
        const MinReturnLoss m = min_return_loss(s, cfg.source.fc);
        const double bw = bandwidth(s, cfg.fitness.bw_threshold_db, cfg.source.fc, cfg.fitness.bandwidth_mode);
        return std::tuple{bw, m.db, m.freq, fitness(bw, m.db, cfg.fitness)};
    };
    const auto [seed_bw, seed_rl, seed_f, seed_fit] = summarize(seed);
    const auto [best_bw, best_rl, best_f, best_fit] = summarize(best);

    double max_fit = rows.front().best_fit;
    for (const LogRow& r : rows) {
        max_fit = std::max(max_fit, r.best_fit);
    }

    std::string text;
    text += fmt::format("generations      {}\n", rows.size());
    text += fmt::format("max best_fit     {:.6f}\n", max_fit);
    text += fmt::format("seed             bw {:.4f} GHz  rl_min {:.2f} dB at {:.4f} GHz  fit {:.4f}\n", seed_bw / 1e9,
                        seed_rl, seed_f / 1e9, seed_fit);
    text += fmt::format("best             bw {:.4f} GHz  rl_min {:.2f} dB at {:.4f} GHz  fit {:.4f}\n", best_bw / 1e9,
                        best_rl, best_f / 1e9, best_fit);
    if (fs::exists(dir / "best.txt")) {
        text += "best layout (row 0 at the feed)\n" + read_file(dir / "best.txt");
    }
    write_file_atomic(dir / "summary.txt", text);

    std::string csv = kLogHeader;
    for (const LogRow& r : rows) {
        csv += fmt::format("{},{:.17g},{:.17g},{:.17g},{:.17g}\n", r.generation, r.best_fit, r.mean_fit, r.bw, r.rl);
    }
    write_file_atomic(dir / "summary.csv", csv);

    std::string designs = "design,bw_hz,rl_min_db,f_min_hz,fit\n";
    designs += fmt::format("seed,{:.17g},{:.17g},{:.17g},{:.17g}\n", seed_bw, seed_rl, seed_f, seed_fit);
    designs += fmt::format("best,{:.17g},{:.17g},{:.17g},{:.17g}\n", best_bw, best_rl, best_f, best_fit);
    write_file_atomic(dir / "designs.csv", designs);

    std::string cmp = "freq_hz,seed_db,best_db\n";
    for (std::size_t i = 0; i < seed.size(); ++i) {
        cmp += fmt::format("{:.17g},{:.17g},{:.17g}\n", seed.freqs[i], seed.db[i], best.db[i]);
    }
    write_file_atomic(dir / "comparison.csv", cmp);
    out << text;
}

int run_cli(int argc, char** argv) {
    CLI::App app{"Pixelated microstrip patch optimizer (FDTD + genetic algorithm)", "pixpatch"};
    app.require_subcommand(0, 1);

    std::string preset_name = "paper";
    std::string config_path;
    std::vector<std::string> sets;
    bool print_config = false;
    int workers = 0;
    std::string output;
    app.add_option("--preset", preset_name, "Base preset: paper or smoke")->capture_default_str();
    app.add_option("--config", config_path, "Configuration file (key = value lines)");
    app.add_option("--set", sets, "Override one key, e.g. --set n_steps=9000")->take_all();
    app.add_flag("--print-config", print_config, "Print the resolved configuration and exit");
    app.add_option("--workers", workers, "Parallel evaluations (overrides PIXPATCH_WORKERS)");
    app.add_option("--output", output, "Output directory");

    auto* design = app.add_subcommand("design", "Closed-form seed dimensions");
    design->set_help_flag("--help", "Print this help message and exit");
    bool paper = false;
    double fc = 16e9, eps_r = 2.2, h = 0.76e-3, z0 = 50.0;
    design->add_flag("--paper-seed", paper, "Print the reference seed instead of computing one");
    design->add_option("--fc", fc, "Design frequency in Hz")->capture_default_str();
    design->add_option("--eps-r", eps_r, "Substrate relative permittivity")->capture_default_str();
    design->add_option("--h", h, "Substrate height in m")->capture_default_str();
    design->add_option("--z0", z0, "Feed impedance in ohm")->capture_default_str();

    auto* incident = app.add_subcommand("incident", "Record (or load) the incident port trace");

    auto* simulate = app.add_subcommand("simulate", "Simulate one layout and report S11 metrics");
    std::string chromosome_path;
    simulate->add_flag("--all-ones", "Simulate the full seed patch (default)");
    simulate->add_option("--chromosome", chromosome_path, "17x17 grid file of 0/1");

    auto* opt = app.add_subcommand("optimize", "Run the genetic algorithm");
    std::string resume_path;
    auto* resume_opt = opt->add_option("--resume", resume_path,
                                       "Continue from a checkpoint (default: checkpoint.txt in the output directory)")
                           ->expected(0, 1);

    auto* rep = app.add_subcommand("report", "Summarize an optimize output directory");
    std::string report_dir;
    rep->add_option("dir", report_dir, "Output directory of an optimize run")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (*rep) {
            report(report_dir, std::cout);
            return 0;
        }
        if (*design && !print_config) {
            const auto print_dims = [](const SeedDimensions& d) {
                fmt::print("patch_w = {:.17g}\npatch_l = {:.17g}\nfeed_w = {:.17g}\ninset_gap = {:.17g}\n"
                           "inset_depth = {:.17g}\neps_r = {:.17g}\nsubstrate_h = {:.17g}\n",
                           d.patch_width, d.patch_length, d.feed_width, d.inset_gap, d.inset_depth, d.eps_r,
                           d.substrate_height);
            };
            if (paper) {
                print_dims(paper_seed());
            } else {
                const PatchDesign pd = design_patch(fc, eps_r, h, z0);
                print_dims(pd.dims);
                fmt::print("# eps_eff = {:.17g}\n# delta_l = {:.17g}\n# g1 = {:.17g}\n# rin_edge = {:.17g}\n",
                           pd.eps_eff, pd.delta_l, pd.g1, pd.rin_edge);
            }
            return 0;
        }

        RunConfig cfg = preset(preset_name);
        if (!config_path.empty()) {
            cfg = parse_config(read_file(config_path), cfg);
        }
        for (const std::string& s : sets) {
            const auto eq = s.find('=');
            if (eq == std::string::npos) {
                throw ValidationError(fmt::format("--set: expected key=value, got '{}'", s));
            }
            apply_setting(cfg, s.substr(0, eq), s.substr(eq + 1));
        }
        if (const int n = env_workers(); n > 0) {
            cfg.workers = n;
        }
        if (workers != 0) {
            cfg.workers = workers;
        }
        if (!output.empty()) {
            cfg.output_dir = output;
        }
        cfg.validate();

        if (print_config) {
            std::cout << format_config(cfg);
            return 0;
        }
        if (*incident) {
            const IncidentCache cache = load_incident(cfg, std::cerr);
            const fs::path path = IncidentStore(cfg.resolved_cache_dir()).path_for(cache.fingerprint);
            fmt::print("fingerprint={} samples={} dt={:.17g} path={}\n", to_hex(cache.fingerprint),
                       cache.trace.samples.size(), cache.trace.dt, path.string());
            return 0;
        }
        if (*simulate) {
            const Chromosome c =
                chromosome_path.empty() ? Chromosome::all_ones() : parse_grid(read_file(chromosome_path));
            const FdtdEvaluator evaluator = make_evaluator(cfg, std::cerr);
            const Evaluation ev = evaluator.evaluate_full(c);
            ensure_dir(cfg.output_dir);
            write_file_atomic(fs::path(cfg.output_dir) / "s11.csv", spectrum_csv(ev.spectrum));
            fmt::print("bw_hz={:.6g} rl_min_db={:.4f} f_min_hz={:.6g} fit={:.6f}\n", ev.record.bw_hz,
                       ev.record.rl_min_db, ev.record.f_min_hz, ev.record.fit);
            return 0;
        }
        if (*opt) {
            OptimizeOptions o;
            if (resume_opt->count() > 0) {
                o.resume = true;
                o.checkpoint = resume_path;
            }
            const GAState final_state = optimize(cfg, cfg.output_dir, o, std::cerr);
            fmt::print("best_fit={:.6f} bw_hz={:.6g} rl_min_db={:.4f}\n", final_state.best.record.fit,
                       final_state.best.record.bw_hz, final_state.best.record.rl_min_db);
            return 0;
        }
        std::cerr << app.help();
        return 2;
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const DivergenceError& e) {
        std::cerr << "error: simulation diverged at step " << e.step() << ": " << e.what() << "\n";
        return 3;
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

} // namespace pixpatch
