#pragma once

#include "pixpatch/mesh.hpp"
#include "pixpatch/solver.hpp"
#include "pixpatch/spectra.hpp"

#include <bitset>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <mutex>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace pixpatch {

/// 289 genes; gene k is pixel (k / 17, k % 17).
class Chromosome {
  public:
    using Bits = std::bitset<kPixelCount>;

    Chromosome() = default;
    explicit Chromosome(const Bits& bits) : bits_(bits) {}

    static Chromosome all_ones() { return Chromosome(Bits().set()); }
    static Chromosome from_pixels(const PixelMap& pixels) { return Chromosome(pixels.bits()); }
    PixelMap to_pixels() const { return PixelMap(bits_); }

    static constexpr std::size_t size() noexcept { return kPixelCount; }
    bool gene(std::size_t k) const { return bits_[k]; }
    void set_gene(std::size_t k, bool value) { bits_[k] = value; }
    std::size_t popcount() const noexcept { return bits_.count(); }
    const Bits& bits() const noexcept { return bits_; }

    /// 289 characters of '0'/'1', gene 0 first.
    std::string to_string() const;
    static Chromosome from_string(std::string_view text);

    bool operator==(const Chromosome&) const = default;

  private:
    Bits bits_;
};

struct FitnessConfig {
    double alpha = 0.5;
    double bw_target = 2.0e9;       // Hz
    double rl_target_db = -25.0;
    double bw_threshold_db = -10.0;
    BandwidthMode bandwidth_mode = BandwidthMode::band;

    void validate() const;
    bool operator==(const FitnessConfig&) const = default;
};

struct FitnessRecord {
    double bw_hz = 0.0;
    double rl_min_db = 0.0;
    double f_min_hz = 0.0;
    double fit = 0.0;
    bool ok = true;  // false when the simulation diverged

    bool operator==(const FitnessRecord&) const = default;
};

/// alpha * clamp(bw / bw_target) + (1 - alpha) * clamp(rl_min / rl_target), each clamp to [0, 1].
double fitness(double bw_hz, double rl_min_db, const FitnessConfig& cfg);

using Rng = std::mt19937_64;

/// Uniform double in [0, 1) from the top 53 bits of one draw.
double uniform01(Rng& rng);

/// Deterministic stream for one generation's breeding, derived from the run seed.
Rng generation_rng(std::uint64_t seed, long generation);

/// Fitness-proportionate choice. All-zero fitness falls back to a uniform pick.
std::size_t roulette_select(std::span<const double> fitnesses, Rng& rng);

enum class CrossoverKind {
    uniform_exchange,  // per-gene swap with probability swap_prob
    shuffle,           // shuffle positions, single cut, unshuffle
};

std::pair<Chromosome, Chromosome> crossover(const Chromosome& p1, const Chromosome& p2, double swap_prob,
                                            Rng& rng, CrossoverKind kind = CrossoverKind::uniform_exchange);

/// Flips each gene independently with probability p.
Chromosome mutate(const Chromosome& c, double p, Rng& rng);

struct Individual {
    Chromosome genes;
    FitnessRecord record;

    bool operator==(const Individual&) const = default;
};

struct GaSettings {
    int population = 30;
    int generations = 50;
    double swap_prob = 0.5;
    double mutation_prob = 0.001;
    double init_flip_prob = 0.1;
    std::uint64_t seed = 42;
    CrossoverKind crossover = CrossoverKind::uniform_exchange;

    void validate() const;
    bool operator==(const GaSettings&) const = default;
};

struct GAState {
    long generation = 0;
    std::uint64_t seed = 0;
    std::vector<Individual> population;
    Individual best;

    bool operator==(const GAState&) const = default;
};

using EvaluateFn = std::function<FitnessRecord(const Chromosome&)>;

/// Evaluates every chromosome with up to `workers` threads. Identical
/// chromosomes within the batch are evaluated once. Results are in input order.
std::vector<FitnessRecord> evaluate_all(std::span<const Chromosome> batch, const EvaluateFn& evaluate, int workers);

/// Generation 0: the all-ones seed plus perturbed copies of it, all evaluated.
GAState initial_state(const GaSettings& settings, const EvaluateFn& evaluate, int workers = 1);

/// One generation: elite copied, the rest bred by roulette selection,
/// crossover and mutation, then evaluated.
GAState evolve_step(const GAState& state, const GaSettings& settings, const EvaluateFn& evaluate, int workers = 1);

/// Thread-safe memo in front of a pure evaluator.
class MemoizedEvaluator {
  public:
    explicit MemoizedEvaluator(EvaluateFn inner) : inner_(std::move(inner)) {}

    FitnessRecord operator()(const Chromosome& c);
    std::size_t misses() const;

  private:
    EvaluateFn inner_;
    mutable std::mutex mutex_;
    std::map<std::string, FitnessRecord> memo_;
    std::size_t misses_ = 0;
};

struct Evaluation {
    FitnessRecord record;
    Spectrum spectrum;
};

/// FDTD-backed evaluation against a cached incident trace.
class FdtdEvaluator {
  public:
    FdtdEvaluator(SeedDimensions dims, MeshConfig mesh, SourceSpec source, IncidentCache incident,
                  std::vector<double> freqs, FitnessConfig fitness, double noise_floor_rel = 1e-9);

    /// Throws DivergenceError if the solver diverges.
    Evaluation evaluate_full(const Chromosome& c) const;

    /// Divergence yields fitness 0 with ok = false.
    FitnessRecord operator()(const Chromosome& c) const;

  private:
    SeedDimensions dims_;
    MeshConfig mesh_;
    SourceSpec source_;
    IncidentCache incident_;
    std::vector<double> freqs_;
    std::vector<Complex> incident_spectrum_;
    FitnessConfig fitness_;
    double noise_floor_rel_;
};

/// One-shot form of FdtdEvaluator. Requires cache.fingerprint to match the configuration.
FitnessRecord evaluate(const Chromosome& c, const SeedDimensions& dims, const MeshConfig& mesh,
                       const SourceSpec& source, const IncidentCache& cache, const FitnessConfig& fitness,
                       std::span<const double> freqs);

/// 17 lines of 17 '0'/'1' characters, row 0 first.
std::string format_grid(const Chromosome& c);
/// Throws ValidationError naming the line and column of the first bad character.
Chromosome parse_grid(std::string_view text);

/// Text checkpoint:
///   pixpatch-checkpoint 1
///   config <hex fingerprint>
///   seed <u64>
///   generation <g>
///   population <n>
///   best <genes> <bw> <rl> <fmin> <fit> <ok>
///   ind <genes> <bw> <rl> <fmin> <fit> <ok>     (n lines)
/// The breeding stream for generation g is generation_rng(seed, g), so the
/// generation index is the stream position.
void write_checkpoint(const GAState& state, std::uint64_t config_fingerprint, std::ostream& out);
GAState read_checkpoint(std::istream& in, std::uint64_t& config_fingerprint);

} // namespace pixpatch
