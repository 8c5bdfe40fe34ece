#include "pixpatch/config.hpp"

#include "pixpatch/constants.hpp"
#include "pixpatch/errors.hpp"
#include "pixpatch/io.hpp"
#include "pixpatch/seed_design.hpp"
#include "pixpatch/spectra.hpp"

#include <fmt/format.h>

#include <charconv>
#include <cmath>
#include <functional>

namespace pixpatch {

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) {
        s.remove_prefix(1);
    }
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
        s.remove_suffix(1);
    }
    return s;
}

double to_double(std::string_view key, std::string_view v) {
    try {
        return parse_double(v);
    } catch (const IoError&) {
        throw ValidationError(fmt::format("{}: invalid number '{}'", key, v));
    }
}

template <class Int>
Int to_int(std::string_view key, std::string_view v) {
    Int value{};
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), value);
    if (ec != std::errc() || ptr != v.data() + v.size()) {
        throw ValidationError(fmt::format("{}: invalid integer '{}'", key, v));
    }
    return value;
}

std::string num(double v) { return fmt::format("{:.17g}", v); }

struct Field {
    const char* key;
    bool affects_results;
    std::function<std::string(const RunConfig&)> get;
    std::function<void(RunConfig&, std::string_view, std::string_view)> set;
};

#define PIXPATCH_DOUBLE(name, member, affects)                                                            \
    Field {                                                                                               \
        name, affects, [](const RunConfig& c) { return num(c.member); },                                  \
            [](RunConfig& c, std::string_view k, std::string_view v) { c.member = to_double(k, v); }      \
    }
#define PIXPATCH_INT(name, member, type, affects)                                                         \
    Field {                                                                                               \
        name, affects, [](const RunConfig& c) { return std::to_string(c.member); },                       \
            [](RunConfig& c, std::string_view k, std::string_view v) { c.member = to_int<type>(k, v); }   \
    }

const std::vector<Field>& fields() {
    static const std::vector<Field> table = {
        PIXPATCH_DOUBLE("patch_w", dims.patch_width, true),
        PIXPATCH_DOUBLE("patch_l", dims.patch_length, true),
        PIXPATCH_DOUBLE("feed_w", dims.feed_width, true),
        PIXPATCH_DOUBLE("inset_gap", dims.inset_gap, true),
        PIXPATCH_DOUBLE("inset_depth", dims.inset_depth, true),
        PIXPATCH_DOUBLE("eps_r", dims.eps_r, true),
        PIXPATCH_DOUBLE("substrate_h", dims.substrate_height, true),
        PIXPATCH_DOUBLE("z0", z0, true),
        PIXPATCH_INT("cells_per_pixel_x", mesh.cells_per_pixel_x, int, true),
        PIXPATCH_INT("cells_per_pixel_y", mesh.cells_per_pixel_y, int, true),
        PIXPATCH_DOUBLE("dz", mesh.dz, true),
        PIXPATCH_INT("air_margin_cells", mesh.air_margin_cells, int, true),
        PIXPATCH_INT("upml_cells", mesh.upml_cells, int, true),
        PIXPATCH_DOUBLE("courant", mesh.courant, true),
        PIXPATCH_INT("feed_length_cells", mesh.feed_length_cells, int, true),
        PIXPATCH_INT("source_offset_cells", mesh.source_offset_cells, int, true),
        PIXPATCH_INT("port_offset_cells", mesh.port_offset_cells, int, true),
        PIXPATCH_DOUBLE("e0", source.amplitude, true),
        PIXPATCH_DOUBLE("t0", source.t0, true),
        PIXPATCH_DOUBLE("fc", source.fc, true),
        PIXPATCH_DOUBLE("fb", source.fb, true),
        PIXPATCH_INT("n_steps", source.n_steps, long, true),
        PIXPATCH_DOUBLE("freq_start_hz", freqs.start, true),
        PIXPATCH_DOUBLE("freq_stop_hz", freqs.stop, true),
        PIXPATCH_INT("freq_points", freqs.points, int, true),
        PIXPATCH_DOUBLE("noise_floor_rel", freqs.noise_floor_rel, true),
        PIXPATCH_DOUBLE("alpha", fitness.alpha, true),
        PIXPATCH_DOUBLE("bw_target_hz", fitness.bw_target, true),
        PIXPATCH_DOUBLE("rl_target_db", fitness.rl_target_db, true),
        PIXPATCH_DOUBLE("bw_threshold_db", fitness.bw_threshold_db, true),
        Field{"bandwidth_mode", true,
              [](const RunConfig& c) {
                  return std::string(c.fitness.bandwidth_mode == BandwidthMode::band ? "band" : "union");
              },
              [](RunConfig& c, std::string_view k, std::string_view v) {
                  if (v == "band") {
                      c.fitness.bandwidth_mode = BandwidthMode::band;
                  } else if (v == "union") {
                      c.fitness.bandwidth_mode = BandwidthMode::union_;
                  } else {
                      throw ValidationError(fmt::format("{}: expected 'band' or 'union', got '{}'", k, v));
                  }
              }},
        PIXPATCH_INT("population", ga.population, int, true),
        PIXPATCH_INT("generations", ga.generations, int, false),
        PIXPATCH_DOUBLE("swap_prob", ga.swap_prob, true),
        PIXPATCH_DOUBLE("mutation_prob", ga.mutation_prob, true),
        PIXPATCH_DOUBLE("init_flip_prob", ga.init_flip_prob, true),
        PIXPATCH_INT("seed", ga.seed, std::uint64_t, true),
        Field{"crossover", true,
              [](const RunConfig& c) {
                  return std::string(c.ga.crossover == CrossoverKind::uniform_exchange ? "uniform" : "shuffle");
              },
              [](RunConfig& c, std::string_view k, std::string_view v) {
                  if (v == "uniform") {
                      c.ga.crossover = CrossoverKind::uniform_exchange;
                  } else if (v == "shuffle") {
                      c.ga.crossover = CrossoverKind::shuffle;
                  } else {
                      throw ValidationError(fmt::format("{}: expected 'uniform' or 'shuffle', got '{}'", k, v));
                  }
              }},
        PIXPATCH_INT("workers", workers, int, false),
        Field{"output_dir", false, [](const RunConfig& c) { return c.output_dir; },
              [](RunConfig& c, std::string_view, std::string_view v) { c.output_dir = std::string(v); }},
        Field{"cache_dir", false, [](const RunConfig& c) { return c.cache_dir; },
              [](RunConfig& c, std::string_view, std::string_view v) { c.cache_dir = std::string(v); }},
    };
    return table;
}

#undef PIXPATCH_DOUBLE
#undef PIXPATCH_INT

} // namespace

std::vector<double> FrequencyGrid::values() const {
    return linear_frequencies(start, stop, points);
}

RunConfig::RunConfig() : dims(paper_seed()) {
    mesh.dz = dims.substrate_height / 3.0;
    source.n_steps = 17000;
}

void RunConfig::validate() const {
    dims.validate();
    mesh.validate(dims);
    source.validate();
    if (source.n_steps < 1) {
        throw ValidationError("n_steps: must be >= 1");
    }
    fitness.validate();
    ga.validate();
    if (!(z0 > 0)) {
        throw ValidationError("z0: must be > 0");
    }
    if (workers < 1) {
        throw ValidationError("workers: must be >= 1");
    }
    if (freqs.points < 2) {
        throw ValidationError("freq_points: must be >= 2");
    }
    if (!(freqs.start > 0)) {
        throw ValidationError("freq_start_hz: must be > 0");
    }
    if (!(freqs.stop > freqs.start)) {
        throw ValidationError("freq_stop_hz: must exceed freq_start_hz");
    }
    if (!(freqs.noise_floor_rel >= 0 && freqs.noise_floor_rel < 1)) {
        throw ValidationError("noise_floor_rel: must lie in [0, 1)");
    }
    const double dx = dims.patch_width / (kPixelCols * mesh.cells_per_pixel_x);
    const double dy = dims.patch_length / (kPixelRows * mesh.cells_per_pixel_y);
    const double dt = cfl_timestep(dx, dy, mesh.dz, mesh.courant);
    if (freqs.stop >= 0.5 / dt) {
        throw ValidationError("freq_stop_hz: at or above the Nyquist frequency of the time step");
    }
    if (!(source.fc > freqs.start && source.fc < freqs.stop)) {
        throw ValidationError("fc: must lie inside the frequency grid");
    }
    // The window has to contain the pulse peak plus two envelope widths.
    const double pulse_end = source.t0 + 2.0 / (2.0 * constants::pi * source.fb);
    if (static_cast<double>(source.n_steps) * dt < pulse_end) {
        throw ValidationError(fmt::format("n_steps: window of {:.4g} s ends before the excitation pulse ({:.4g} s)",
                                          static_cast<double>(source.n_steps) * dt, pulse_end));
    }
}

std::string RunConfig::resolved_cache_dir() const {
    return cache_dir.empty() ? output_dir + "/cache" : cache_dir;
}

std::uint64_t RunConfig::fingerprint() const {
    std::string text;
    for (const Field& f : fields()) {
        if (f.affects_results) {
            text += fmt::format("{}={};", f.key, f.get(*this));
        }
    }
    return fnv1a64(text);
}

bool RunConfig::operator==(const RunConfig& other) const {
    return format_config(*this) == format_config(other);
}

RunConfig preset(std::string_view name) {
    RunConfig cfg;
    if (name == "paper") {
        return cfg;
    }
    if (name == "smoke") {
        cfg.mesh.cells_per_pixel_x = 1;
        cfg.mesh.cells_per_pixel_y = 1;
        cfg.mesh.dz = cfg.dims.substrate_height / 2.0;
        cfg.mesh.air_margin_cells = 5;
        cfg.mesh.upml_cells = 6;
        cfg.mesh.feed_length_cells = 12;
        cfg.mesh.source_offset_cells = 3;
        cfg.mesh.port_offset_cells = 8;
        cfg.source.n_steps = 8000;
        cfg.ga.population = 8;
        cfg.ga.generations = 10;
        cfg.output_dir = "pixpatch-smoke";
        return cfg;
    }
    throw ValidationError(fmt::format("preset: unknown preset '{}' (expected 'paper' or 'smoke')", name));
}

void apply_setting(RunConfig& cfg, std::string_view key, std::string_view value) {
    for (const Field& f : fields()) {
        if (key == f.key) {
            f.set(cfg, key, trim(value));
            return;
        }
    }
    throw ValidationError(fmt::format("{}: unknown configuration key", key));
}

RunConfig parse_config(std::string_view text, RunConfig base) {
    int line_no = 0;
    while (!text.empty()) {
        const auto end = text.find('\n');
        std::string_view line = text.substr(0, end);
        text.remove_prefix(end == std::string_view::npos ? text.size() : end + 1);
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string_view::npos) {
            line = line.substr(0, hash);
        }
        line = trim(line);
        if (line.empty()) {
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) {
            throw ValidationError(fmt::format("config line {}: expected 'key = value'", line_no));
        }
        apply_setting(base, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return base;
}

std::string format_config(const RunConfig& cfg) {
    std::string out = "# pixpatch run configuration\n";
    for (const Field& f : fields()) {
        out += fmt::format("{} = {}\n", f.key, f.get(cfg));
    }
    return out;
}

std::vector<std::string> config_keys() {
    std::vector<std::string> keys;
    for (const Field& f : fields()) {
        keys.emplace_back(f.key);
    }
    return keys;
}

} // namespace pixpatch
