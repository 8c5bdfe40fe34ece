#include "pixpatch/spectra.hpp"

#include "pixpatch/constants.hpp"
#include "pixpatch/errors.hpp"
#include "pixpatch/io.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>

namespace pixpatch {

namespace fs = std::filesystem;

std::vector<double> linear_frequencies(double start, double stop, int points) {
    if (points < 2 || !(start > 0) || !(stop > start)) {
        throw ValidationError("freq_points: need >= 2 points over 0 < freq_start_hz < freq_stop_hz");
    }
    std::vector<double> f(static_cast<std::size_t>(points));
    const double step = (stop - start) / (points - 1);
    for (int n = 0; n < points; ++n) {
        f[static_cast<std::size_t>(n)] = start + n * step;
    }
    f.back() = stop;
    return f;
}

std::uint64_t incident_fingerprint(const SeedDimensions& d, const MeshConfig& c, const SourceSpec& s) {
    const std::string text = fmt::format(
        "incident-v{};W={:.17g};L={:.17g};W1={:.17g};g={:.17g};Y0={:.17g};eps_r={:.17g};h={:.17g};"
        "cpx={};cpy={};dz={:.17g};air={};upml={};courant={:.17g};feed={};src={};port={};"
        "e0={:.17g};t0={:.17g};fc={:.17g};fb={:.17g};n={}",
        IncidentCache::kFormatVersion, d.patch_width, d.patch_length, d.feed_width, d.inset_gap,
        d.inset_depth, d.eps_r, d.substrate_height, c.cells_per_pixel_x, c.cells_per_pixel_y, c.dz,
        c.air_margin_cells, c.upml_cells, c.courant, c.feed_length_cells, c.source_offset_cells,
        c.port_offset_cells, s.amplitude, s.t0, s.fc, s.fb, s.n_steps);
    return fnv1a64(text);
}

IncidentCache record_incident(const SeedDimensions& dims, const MeshConfig& cfg, const SourceSpec& spec) {
    const Layout layout = build_layout(dims, PixelMap::all_zeros(), cfg, FeedMode::matched_line);
    SourceSpec driven = spec;
    driven.injection = layout.port.source_cells;
    const Probe probe = port_probe(layout.port, "incident");
    auto traces = run(layout.grid, driven, std::span(&probe, 1));
    IncidentCache cache;
    cache.trace = std::move(traces.front());
    cache.fingerprint = incident_fingerprint(dims, cfg, spec);
    cache.created = utc_timestamp();
    return cache;
}

ProbeTrace reflected_trace(const ProbeTrace& total, const ProbeTrace& incident) {
    if (total.samples.size() != incident.samples.size()) {
        throw ValidationError(fmt::format("reflected_trace: length mismatch ({} vs {})",
                                          total.samples.size(), incident.samples.size()));
    }
    if (total.dt != incident.dt) {
        throw ValidationError("reflected_trace: time step mismatch");
    }
    ProbeTrace out{"reflected", std::vector<double>(total.samples.size()), total.dt};
    for (std::size_t n = 0; n < out.samples.size(); ++n) {
        out.samples[n] = total.samples[n] - incident.samples[n];
    }
    return out;
}

std::vector<Complex> dft(const ProbeTrace& trace, std::span<const double> freqs) {
    if (trace.samples.empty()) {
        throw ValidationError("dft: empty trace");
    }
    const double nyquist = 0.5 / trace.dt;
    for (double f : freqs) {
        if (!(f > 0) || f >= nyquist) {
            throw ValidationError(fmt::format("dft: frequency {:g} Hz outside (0, {:g}) Hz", f, nyquist));
        }
    }
    std::size_t first = 0;
    while (first < trace.samples.size() && trace.samples[first] == 0.0) {
        ++first;
    }
    std::vector<Complex> out;
    out.reserve(freqs.size());
    for (double f : freqs) {
        const double w = 2.0 * constants::pi * f * trace.dt;
        double re = 0.0;
        double im = 0.0;
        for (std::size_t n = first; n < trace.samples.size(); ++n) {
            const double phase = w * static_cast<double>(n);
            re += trace.samples[n] * std::cos(phase);
            im -= trace.samples[n] * std::sin(phase);
        }
        out.emplace_back(re * trace.dt, im * trace.dt);
    }
    return out;
}

double to_db(double magnitude) {
    if (magnitude <= 0.0) {
        return kDbFloor;
    }
    return std::max(kDbFloor, 20.0 * std::log10(magnitude));
}

Spectrum s11(std::span<const Complex> reflected, std::span<const Complex> incident,
             std::span<const double> freqs, double noise_floor_rel) {
    if (reflected.size() != incident.size() || reflected.size() != freqs.size()) {
        throw ValidationError("s11: spectra and frequency list differ in length");
    }
    for (std::size_t n = 1; n < freqs.size(); ++n) {
        if (!(freqs[n] > freqs[n - 1])) {
            throw ValidationError("s11: frequencies must be strictly increasing");
        }
    }
    double peak = 0.0;
    for (const Complex& c : incident) {
        peak = std::max(peak, std::abs(c));
    }
    const double floor = noise_floor_rel * peak;
    Spectrum out;
    out.freqs.assign(freqs.begin(), freqs.end());
    out.s11.resize(freqs.size());
    out.db.resize(freqs.size());
    out.valid.resize(freqs.size());
    for (std::size_t n = 0; n < freqs.size(); ++n) {
        const double mag = std::abs(incident[n]);
        out.valid[n] = mag > 0.0 && mag >= floor;
        out.s11[n] = mag > 0.0 ? reflected[n] / incident[n] : Complex{};
        out.db[n] = to_db(std::abs(out.s11[n]));
    }
    return out;
}

MinReturnLoss min_return_loss(const Spectrum& spectrum, double fc) {
    std::optional<std::size_t> best;
    for (std::size_t n = 0; n < spectrum.size(); ++n) {
        if (!spectrum.valid[n]) {
            continue;
        }
        if (!best || spectrum.db[n] < spectrum.db[*best] ||
            (spectrum.db[n] == spectrum.db[*best] &&
             std::abs(spectrum.freqs[n] - fc) < std::abs(spectrum.freqs[*best] - fc))) {
            best = n;
        }
    }
    if (!best) {
        return {0.0, fc};
    }
    return {spectrum.db[*best], spectrum.freqs[*best]};
}

namespace {

// Width of the sub-threshold run [lo, hi] with edges interpolated against the
// neighbouring above-threshold samples.
double run_width(const Spectrum& s, std::size_t lo, std::size_t hi, double threshold) {
    const auto crossing = [&](std::size_t outside, std::size_t inside) {
        const double d0 = s.db[outside];
        const double d1 = s.db[inside];
        const double frac = (threshold - d0) / (d1 - d0);
        return s.freqs[outside] + frac * (s.freqs[inside] - s.freqs[outside]);
    };
    const double left = (lo > 0 && s.valid[lo - 1]) ? crossing(lo - 1, lo) : s.freqs[lo];
    const double right = (hi + 1 < s.size() && s.valid[hi + 1]) ? crossing(hi + 1, hi) : s.freqs[hi];
    return right - left;
}

} // namespace

double bandwidth(const Spectrum& spectrum, double threshold_db, double fc, BandwidthMode mode) {
    const auto below = [&](std::size_t n) { return spectrum.valid[n] && spectrum.db[n] <= threshold_db; };
    if (mode == BandwidthMode::union_) {
        double total = 0.0;
        std::size_t n = 0;
        while (n < spectrum.size()) {
            if (!below(n)) {
                ++n;
                continue;
            }
            std::size_t hi = n;
            while (hi + 1 < spectrum.size() && below(hi + 1)) {
                ++hi;
            }
            total += run_width(spectrum, n, hi, threshold_db);
            n = hi + 1;
        }
        return total;
    }
    const MinReturnLoss m = min_return_loss(spectrum, fc);
    if (m.db > threshold_db) {
        return 0.0;
    }
    const auto it = std::find(spectrum.freqs.begin(), spectrum.freqs.end(), m.freq);
    const std::size_t centre = static_cast<std::size_t>(it - spectrum.freqs.begin());
    std::size_t lo = centre;
    std::size_t hi = centre;
    while (lo > 0 && below(lo - 1)) {
        --lo;
    }
    while (hi + 1 < spectrum.size() && below(hi + 1)) {
        ++hi;
    }
    return run_width(spectrum, lo, hi, threshold_db);
}

void write_s11_csv(const Spectrum& spectrum, std::ostream& out) {
    out << "freq_hz,s11_re,s11_im,s11_db\n";
    for (std::size_t n = 0; n < spectrum.size(); ++n) {
        out << fmt::format("{:.17g},{:.17g},{:.17g},{:.17g}\n", spectrum.freqs[n], spectrum.s11[n].real(),
                           spectrum.s11[n].imag(), spectrum.db[n]);
    }
}

Spectrum read_s11_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || line != "freq_hz,s11_re,s11_im,s11_db") {
        throw IoError("S11 CSV: missing or unexpected header");
    }
    Spectrum s;
    int row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty()) {
            continue;
        }
        std::vector<double> v;
        std::istringstream fields(line);
        for (std::string cell; std::getline(fields, cell, ',');) {
            v.push_back(parse_double(cell));
        }
        if (v.size() != 4) {
            throw IoError(fmt::format("S11 CSV: malformed row {}", row));
        }
        s.freqs.push_back(v[0]);
        s.s11.emplace_back(v[1], v[2]);
        s.db.push_back(v[3]);
        s.valid.push_back(1);
    }
    return s;
}

void write_incident(const IncidentCache& cache, std::ostream& out) {
    out << "pixpatch-incident " << IncidentCache::kFormatVersion << '\n';
    out << "fingerprint " << to_hex(cache.fingerprint) << '\n';
    out << fmt::format("dt {:.17g}\n", cache.trace.dt);
    out << "samples " << cache.trace.samples.size() << '\n';
    out << "created " << cache.created << '\n';
    for (double v : cache.trace.samples) {
        out << fmt::format("{:.17g}\n", v);
    }
}

IncidentCache read_incident(std::istream& in) {
    IncidentCache cache;
    std::string tag;
    int version = 0;
    if (!(in >> tag >> version) || tag != "pixpatch-incident") {
        throw IoError("incident cache: not a pixpatch incident file");
    }
    if (version != IncidentCache::kFormatVersion) {
        throw IoError(fmt::format("incident cache: unsupported format version {}", version));
    }
    std::string hex;
    std::size_t n = 0;
    if (!(in >> tag >> hex) || tag != "fingerprint") {
        throw IoError("incident cache: missing fingerprint");
    }
    cache.fingerprint = from_hex(hex);
    std::string token;
    if (!(in >> tag >> token) || tag != "dt") {
        throw IoError("incident cache: missing dt");
    }
    cache.trace.dt = parse_double(token);
    if (!(in >> tag >> n) || tag != "samples") {
        throw IoError("incident cache: missing sample count");
    }
    if (!(in >> tag) || tag != "created") {
        throw IoError("incident cache: missing creation note");
    }
    std::getline(in, cache.created);
    if (!cache.created.empty() && cache.created.front() == ' ') {
        cache.created.erase(0, 1);
    }
    cache.trace.id = "incident";
    cache.trace.samples.resize(n);
    for (std::size_t q = 0; q < n; ++q) {
        if (!(in >> token)) {
            throw IoError(fmt::format("incident cache: truncated at sample {}", q));
        }
        cache.trace.samples[q] = parse_double(token);
    }
    return cache;
}

fs::path IncidentStore::path_for(std::uint64_t fingerprint) const {
    return dir_ / fmt::format("incident-{}.txt", to_hex(fingerprint));
}

std::optional<IncidentCache> IncidentStore::load(std::uint64_t fingerprint) const {
    const fs::path path = path_for(fingerprint);
    if (!fs::exists(path)) {
        return std::nullopt;
    }
    std::istringstream in(read_file(path));
    IncidentCache cache = read_incident(in);
    if (cache.fingerprint != fingerprint) {
        return std::nullopt;
    }
    return cache;
}

void IncidentStore::save(const IncidentCache& cache) {
    std::ostringstream out;
    write_incident(cache, out);
    std::lock_guard lock(write_mutex_);
    write_file_atomic(path_for(cache.fingerprint), out.str());
}

IncidentCache IncidentStore::load_or_record(const SeedDimensions& dims, const MeshConfig& cfg,
                                            const SourceSpec& spec) {
    const std::uint64_t fp = incident_fingerprint(dims, cfg, spec);
    if (auto cached = load(fp); cached && cached->trace.samples.size() == static_cast<std::size_t>(spec.n_steps)) {
        return *std::move(cached);
    }
    IncidentCache fresh = record_incident(dims, cfg, spec);
    save(fresh);
    return fresh;
}

} // namespace pixpatch
