#pragma once

#include "pixpatch/mesh.hpp"
#include "pixpatch/solver.hpp"

#include <complex>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace pixpatch {

using Complex = std::complex<double>;

inline constexpr double kDbFloor = -120.0;

/// Incident port trace from the matched-line run, keyed by a fingerprint of
/// every parameter that affects it.
struct IncidentCache {
    static constexpr int kFormatVersion = 1;

    ProbeTrace trace;
    std::uint64_t fingerprint = 0;
    std::string created;  // free-form creation note
};

struct Spectrum {
    std::vector<double> freqs;     // Hz, strictly increasing
    std::vector<Complex> s11;
    std::vector<double> db;        // 20 log10 |S11|, floored at kDbFloor
    std::vector<char> valid;       // false where the incident spectrum is below the noise floor

    std::size_t size() const noexcept { return freqs.size(); }
};

enum class BandwidthMode {
    band,   // contiguous band around the global minimum
    union_, // total width of every sub-threshold band
};

/// Linearly spaced frequency list including both end points.
std::vector<double> linear_frequencies(double start, double stop, int points);

/// Stable 64-bit FNV-1a hash over the canonical text of the run parameters.
std::uint64_t incident_fingerprint(const SeedDimensions& dims, const MeshConfig& cfg, const SourceSpec& spec);

/// Matched "infinite" line run: no patch, feed through to the far UPML.
IncidentCache record_incident(const SeedDimensions& dims, const MeshConfig& cfg, const SourceSpec& spec);

/// total - incident, pointwise.
ProbeTrace reflected_trace(const ProbeTrace& total, const ProbeTrace& incident);

/// X(f) = sum_n x[n] exp(-i 2 pi f n dt) dt at arbitrary frequencies below Nyquist.
std::vector<Complex> dft(const ProbeTrace& trace, std::span<const double> freqs);

double to_db(double magnitude);

/// reflected / incident per frequency; frequencies where |incident| falls below
/// noise_floor_rel * max|incident| are flagged invalid.
Spectrum s11(std::span<const Complex> reflected, std::span<const Complex> incident,
             std::span<const double> freqs, double noise_floor_rel = 1e-9);

double bandwidth(const Spectrum& spectrum, double threshold_db, double fc,
                 BandwidthMode mode = BandwidthMode::band);

struct MinReturnLoss {
    double db = 0.0;
    double freq = 0.0;
};

/// Minimum over valid samples; ties resolve to the frequency nearest fc.
MinReturnLoss min_return_loss(const Spectrum& spectrum, double fc);

/// CSV with header "freq_hz,s11_re,s11_im,s11_db".
void write_s11_csv(const Spectrum& spectrum, std::ostream& out);
Spectrum read_s11_csv(std::istream& in);

/// Versioned text container:
///   pixpatch-incident 1
///   fingerprint <16 hex digits>
///   dt <seconds>
///   samples <n>
///   created <text>
///   <n lines, one sample each, 17 significant digits>
void write_incident(const IncidentCache& cache, std::ostream& out);
IncidentCache read_incident(std::istream& in);

/// Directory of incident files named incident-<fingerprint>.txt.
class IncidentStore {
  public:
    explicit IncidentStore(std::filesystem::path dir) : dir_(std::move(dir)) {}

    std::filesystem::path path_for(std::uint64_t fingerprint) const;
    std::optional<IncidentCache> load(std::uint64_t fingerprint) const;
    void save(const IncidentCache& cache);

    /// Loads the cache for this configuration or records and stores a fresh one.
    IncidentCache load_or_record(const SeedDimensions& dims, const MeshConfig& cfg, const SourceSpec& spec);

  private:
    std::filesystem::path dir_;
    std::mutex write_mutex_;
};

} // namespace pixpatch
