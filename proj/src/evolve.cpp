#include "pixpatch/evolve.hpp"

#include "pixpatch/errors.hpp"
#include "pixpatch/io.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <atomic>
#include <exception>
#include <iostream>
#include <numeric>
#include <sstream>
#include <thread>
#include <unordered_map>

namespace pixpatch {

std::string Chromosome::to_string() const {
    std::string s(kPixelCount, '0');
    for (std::size_t k = 0; k < size(); ++k) {
        if (bits_[k]) {
            s[k] = '1';
        }
    }
    return s;
}

Chromosome Chromosome::from_string(std::string_view text) {
    if (text.size() != size()) {
        throw ValidationError(fmt::format("chromosome: expected {} genes, got {}", size(), text.size()));
    }
    Chromosome c;
    for (std::size_t k = 0; k < size(); ++k) {
        if (text[k] != '0' && text[k] != '1') {
            throw ValidationError(fmt::format("chromosome: gene {} is '{}', expected 0 or 1", k, text[k]));
        }
        c.bits_[k] = text[k] == '1';
    }
    return c;
}

void FitnessConfig::validate() const {
    if (!(alpha >= 0.0 && alpha <= 1.0)) {
        throw ValidationError("alpha: must lie in [0, 1]");
    }
    if (!(bw_target > 0)) {
        throw ValidationError("bw_target_hz: must be > 0");
    }
    if (!(rl_target_db < 0)) {
        throw ValidationError("rl_target_db: must be < 0");
    }
}

double fitness(double bw_hz, double rl_min_db, const FitnessConfig& cfg) {
    const double fit_bw = std::clamp(bw_hz / cfg.bw_target, 0.0, 1.0);
    const double fit_rl = std::clamp(rl_min_db / cfg.rl_target_db, 0.0, 1.0);
    return cfg.alpha * fit_bw + (1.0 - cfg.alpha) * fit_rl;
}

double uniform01(Rng& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

Rng generation_rng(std::uint64_t seed, long generation) {
    const auto g = static_cast<std::uint64_t>(generation);
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(g), static_cast<std::uint32_t>(g >> 32), 0x9e3779b9u};
    return Rng(seq);
}

std::size_t roulette_select(std::span<const double> fitnesses, Rng& rng) {
    if (fitnesses.empty()) {
        throw ValidationError("roulette_select: empty population");
    }
    double total = 0.0;
    for (double f : fitnesses) {
        if (f < 0.0) {
            throw ValidationError("roulette_select: negative fitness");
        }
        total += f;
    }
    const double u = uniform01(rng);
    if (total <= 0.0) {
        return std::min(fitnesses.size() - 1, static_cast<std::size_t>(u * static_cast<double>(fitnesses.size())));
    }
    const double target = u * total;
    double cumulative = 0.0;
    std::size_t last_positive = 0;
    for (std::size_t i = 0; i < fitnesses.size(); ++i) {
        if (fitnesses[i] <= 0.0) {
            continue;
        }
        last_positive = i;
        cumulative += fitnesses[i];
        if (target < cumulative) {
            return i;
        }
    }
    return last_positive;
}

std::pair<Chromosome, Chromosome> crossover(const Chromosome& p1, const Chromosome& p2, double swap_prob,
                                            Rng& rng, CrossoverKind kind) {
    Chromosome c1 = p1;
    Chromosome c2 = p2;
    const auto exchange = [&](std::size_t k) {
        c1.set_gene(k, p2.gene(k));
        c2.set_gene(k, p1.gene(k));
    };
    if (kind == CrossoverKind::uniform_exchange) {
        for (std::size_t k = 0; k < Chromosome::size(); ++k) {
            if (uniform01(rng) < swap_prob) {
                exchange(k);
            }
        }
        return {c1, c2};
    }
    // Shuffle crossover: a single cut on randomly permuted positions. Genes
    // after the cut (in permuted order) are exchanged; unshuffling is implicit.
    std::vector<std::size_t> order(Chromosome::size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = order.size() - 1; i > 0; --i) {
        const auto j = static_cast<std::size_t>(uniform01(rng) * static_cast<double>(i + 1));
        std::swap(order[i], order[std::min(j, i)]);
    }
    const auto cut = 1 + static_cast<std::size_t>(uniform01(rng) * static_cast<double>(order.size() - 1));
    for (std::size_t q = cut; q < order.size(); ++q) {
        exchange(order[q]);
    }
    return {c1, c2};
}

Chromosome mutate(const Chromosome& c, double p, Rng& rng) {
    Chromosome out = c;
    for (std::size_t k = 0; k < Chromosome::size(); ++k) {
        if (uniform01(rng) < p) {
            out.set_gene(k, !c.gene(k));
        }
    }
    return out;
}

void GaSettings::validate() const {
    if (population < 2) {
        throw ValidationError("population: must be >= 2");
    }
    if (generations < 0) {
        throw ValidationError("generations: must be >= 0");
    }
    if (!(swap_prob >= 0.0 && swap_prob <= 1.0)) {
        throw ValidationError("swap_prob: must lie in [0, 1]");
    }
    if (!(mutation_prob >= 0.0 && mutation_prob <= 1.0)) {
        throw ValidationError("mutation_prob: must lie in [0, 1]");
    }
    if (!(init_flip_prob >= 0.0 && init_flip_prob <= 1.0)) {
        throw ValidationError("init_flip_prob: must lie in [0, 1]");
    }
}

std::vector<FitnessRecord> evaluate_all(std::span<const Chromosome> batch, const EvaluateFn& evaluate, int workers) {
    std::vector<std::size_t> unique;
    std::vector<std::size_t> slot(batch.size());
    std::unordered_map<Chromosome::Bits, std::size_t> seen;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        auto [it, inserted] = seen.emplace(batch[i].bits(), unique.size());
        if (inserted) {
            unique.push_back(i);
        }
        slot[i] = it->second;
    }

    std::vector<FitnessRecord> results(unique.size());
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    const auto work = [&] {
        for (std::size_t q = next++; q < unique.size(); q = next++) {
            try {
                results[q] = evaluate(batch[unique[q]]);
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) {
                    failure = std::current_exception();
                }
            }
        }
    };
    const auto threads = static_cast<std::size_t>(std::max(1, workers));
    if (threads == 1 || unique.size() <= 1) {
        work();
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t t = 0; t < std::min(threads, unique.size()); ++t) {
            pool.emplace_back(work);
        }
    }
    if (failure) {
        std::rethrow_exception(failure);
    }

    std::vector<FitnessRecord> out(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) {
        out[i] = results[slot[i]];
    }
    return out;
}

namespace {

const Individual& fittest(const std::vector<Individual>& population) {
    return *std::max_element(population.begin(), population.end(),
                             [](const Individual& a, const Individual& b) { return a.record.fit < b.record.fit; });
}

} // namespace

GAState initial_state(const GaSettings& settings, const EvaluateFn& evaluate, int workers) {
    settings.validate();
    Rng rng = generation_rng(settings.seed, 0);
    std::vector<Chromosome> genes;
    genes.push_back(Chromosome::all_ones());
    while (genes.size() < static_cast<std::size_t>(settings.population)) {
        genes.push_back(mutate(Chromosome::all_ones(), settings.init_flip_prob, rng));
    }
    const auto records = evaluate_all(genes, evaluate, workers);

    GAState state;
    state.generation = 0;
    state.seed = settings.seed;
    for (std::size_t i = 0; i < genes.size(); ++i) {
        state.population.push_back({genes[i], records[i]});
    }
    state.best = fittest(state.population);
    return state;
}

GAState evolve_step(const GAState& state, const GaSettings& settings, const EvaluateFn& evaluate, int workers) {
    if (state.population.empty()) {
        throw ValidationError("evolve_step: empty population");
    }
    const std::size_t n = state.population.size();
    GAState next;
    next.generation = state.generation + 1;
    next.seed = state.seed;

    Rng rng = generation_rng(state.seed, next.generation);
    std::vector<double> fits;
    fits.reserve(n);
    for (const Individual& ind : state.population) {
        fits.push_back(ind.record.fit);
    }

    std::vector<Chromosome> children;
    while (children.size() + 1 < n) {
        const std::size_t a = roulette_select(fits, rng);
        const std::size_t b = roulette_select(fits, rng);
        auto [c1, c2] = crossover(state.population[a].genes, state.population[b].genes, settings.swap_prob, rng,
                                  settings.crossover);
        children.push_back(mutate(c1, settings.mutation_prob, rng));
        if (children.size() + 1 < n) {
            children.push_back(mutate(c2, settings.mutation_prob, rng));
        }
    }
    const auto records = evaluate_all(children, evaluate, workers);

    next.population.push_back(fittest(state.population));
    for (std::size_t i = 0; i < children.size(); ++i) {
        next.population.push_back({children[i], records[i]});
    }
    next.best = state.best;
    for (const Individual& ind : next.population) {
        if (ind.record.fit > next.best.record.fit) {
            next.best = ind;
        }
    }
    return next;
}

FitnessRecord MemoizedEvaluator::operator()(const Chromosome& c) {
    const std::string key = c.to_string();
    {
        std::lock_guard lock(mutex_);
        if (auto it = memo_.find(key); it != memo_.end()) {
            return it->second;
        }
    }
    const FitnessRecord record = inner_(c);
    std::lock_guard lock(mutex_);
    ++misses_;
    memo_.emplace(key, record);
    return record;
}

std::size_t MemoizedEvaluator::misses() const {
    std::lock_guard lock(mutex_);
    return misses_;
}

FdtdEvaluator::FdtdEvaluator(SeedDimensions dims, MeshConfig mesh, SourceSpec source, IncidentCache incident,
                             std::vector<double> freqs, FitnessConfig fitness, double noise_floor_rel)
    : dims_(dims), mesh_(mesh), source_(std::move(source)), incident_(std::move(incident)),
      freqs_(std::move(freqs)), fitness_(fitness), noise_floor_rel_(noise_floor_rel) {
    if (incident_.fingerprint != incident_fingerprint(dims_, mesh_, source_)) {
        throw ValidationError("incident cache fingerprint does not match the configuration");
    }
    if (incident_.trace.samples.size() != static_cast<std::size_t>(source_.n_steps)) {
        throw ValidationError("incident cache length does not match n_steps");
    }
    incident_spectrum_ = dft(incident_.trace, freqs_);
}

Evaluation FdtdEvaluator::evaluate_full(const Chromosome& c) const {
    const Layout layout = build_layout(dims_, c.to_pixels(), mesh_);
    SourceSpec driven = source_;
    driven.injection = layout.port.source_cells;
    const Probe probe = port_probe(layout.port, "total");
    const auto traces = run(layout.grid, driven, std::span(&probe, 1));
    const ProbeTrace reflected = reflected_trace(traces.front(), incident_.trace);

    Evaluation out;
    out.spectrum = s11(dft(reflected, freqs_), incident_spectrum_, freqs_, noise_floor_rel_);
    const MinReturnLoss m = min_return_loss(out.spectrum, source_.fc);
    out.record.bw_hz = bandwidth(out.spectrum, fitness_.bw_threshold_db, source_.fc, fitness_.bandwidth_mode);
    out.record.rl_min_db = m.db;
    out.record.f_min_hz = m.freq;
    out.record.fit = fitness(out.record.bw_hz, out.record.rl_min_db, fitness_);
    return out;
}

FitnessRecord FdtdEvaluator::operator()(const Chromosome& c) const {
    try {
        return evaluate_full(c).record;
    } catch (const DivergenceError& e) {
        std::cerr << "pixpatch: individual " << c.to_string() << " diverged: " << e.what() << '\n';
        FitnessRecord failed;
        failed.ok = false;
        return failed;
    }
}

FitnessRecord evaluate(const Chromosome& c, const SeedDimensions& dims, const MeshConfig& mesh,
                       const SourceSpec& source, const IncidentCache& cache, const FitnessConfig& fitness,
                       std::span<const double> freqs) {
    const FdtdEvaluator evaluator(dims, mesh, source, cache, std::vector<double>(freqs.begin(), freqs.end()),
                                  fitness);
    return evaluator(c);
}

std::string format_grid(const Chromosome& c) {
    std::string out;
    const std::string genes = c.to_string();
    for (int row = 0; row < kPixelRows; ++row) {
        out.append(genes, static_cast<std::size_t>(row * kPixelCols), kPixelCols);
        out.push_back('\n');
    }
    return out;
}

Chromosome parse_grid(std::string_view text) {
    std::vector<std::string_view> lines;
    while (!text.empty()) {
        const auto end = text.find('\n');
        std::string_view line = text.substr(0, end);
        if (!line.empty() && line.back() == '\r') {
            line.remove_suffix(1);
        }
        lines.push_back(line);
        if (end == std::string_view::npos) {
            break;
        }
        text.remove_prefix(end + 1);
    }
    while (!lines.empty() && lines.back().empty()) {
        lines.pop_back();
    }
    if (lines.size() != static_cast<std::size_t>(kPixelRows)) {
        throw ValidationError(fmt::format("pixel grid: expected {} lines, found {}", kPixelRows, lines.size()));
    }
    Chromosome c;
    for (int row = 0; row < kPixelRows; ++row) {
        const std::string_view line = lines[static_cast<std::size_t>(row)];
        for (std::size_t col = 0; col < line.size(); ++col) {
            if (line[col] != '0' && line[col] != '1') {
                throw ValidationError(fmt::format("pixel grid: line {}, column {}: unexpected character '{}'",
                                                  row + 1, col + 1, line[col]));
            }
        }
        if (line.size() != static_cast<std::size_t>(kPixelCols)) {
            throw ValidationError(fmt::format("pixel grid: line {}, column {}: expected {} characters, found {}",
                                              row + 1, std::min(line.size(), static_cast<std::size_t>(kPixelCols)) + 1,
                                              kPixelCols, line.size()));
        }
        for (int col = 0; col < kPixelCols; ++col) {
            c.set_gene(static_cast<std::size_t>(row * kPixelCols + col), line[static_cast<std::size_t>(col)] == '1');
        }
    }
    return c;
}

namespace {

std::string format_individual(const char* tag, const Individual& ind) {
    const FitnessRecord& r = ind.record;
    return fmt::format("{} {} {:.17g} {:.17g} {:.17g} {:.17g} {}\n", tag, ind.genes.to_string(), r.bw_hz,
                       r.rl_min_db, r.f_min_hz, r.fit, r.ok ? 1 : 0);
}

Individual parse_individual(std::istream& in, const char* tag) {
    std::string t;
    std::string genes;
    std::string bw;
    std::string rl;
    std::string fmin;
    std::string fit;
    int ok = 0;
    if (!(in >> t >> genes >> bw >> rl >> fmin >> fit >> ok) || t != tag) {
        throw IoError(fmt::format("checkpoint: malformed '{}' record", tag));
    }
    Individual ind;
    try {
        ind.genes = Chromosome::from_string(genes);
    } catch (const ValidationError& e) {
        throw IoError(fmt::format("checkpoint: {}", e.what()));
    }
    ind.record = {parse_double(bw), parse_double(rl), parse_double(fmin), parse_double(fit), ok != 0};
    return ind;
}

} // namespace

void write_checkpoint(const GAState& state, std::uint64_t config_fingerprint, std::ostream& out) {
    out << "pixpatch-checkpoint 1\n";
    out << "config " << to_hex(config_fingerprint) << '\n';
    out << "seed " << state.seed << '\n';
    out << "generation " << state.generation << '\n';
    out << "population " << state.population.size() << '\n';
    out << format_individual("best", state.best);
    for (const Individual& ind : state.population) {
        out << format_individual("ind", ind);
    }
}

GAState read_checkpoint(std::istream& in, std::uint64_t& config_fingerprint) {
    std::string tag;
    int version = 0;
    if (!(in >> tag >> version) || tag != "pixpatch-checkpoint" || version != 1) {
        throw IoError("checkpoint: not a version-1 pixpatch checkpoint");
    }
    std::string hex;
    if (!(in >> tag >> hex) || tag != "config") {
        throw IoError("checkpoint: missing config fingerprint");
    }
    config_fingerprint = from_hex(hex);
    GAState state;
    std::size_t n = 0;
    if (!(in >> tag >> state.seed) || tag != "seed") {
        throw IoError("checkpoint: missing seed");
    }
    if (!(in >> tag >> state.generation) || tag != "generation") {
        throw IoError("checkpoint: missing generation");
    }
    if (!(in >> tag >> n) || tag != "population") {
        throw IoError("checkpoint: missing population size");
    }
    state.best = parse_individual(in, "best");
    for (std::size_t i = 0; i < n; ++i) {
        state.population.push_back(parse_individual(in, "ind"));
    }
    return state;
}

} // namespace pixpatch
