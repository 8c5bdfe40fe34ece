#include "pixpatch/config.hpp"
#include "pixpatch/constants.hpp"
#include "pixpatch/errors.hpp"
#include "pixpatch/spectra.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>
#include <sstream>

using namespace pixpatch;

namespace {

Spectrum from_db(const std::vector<double>& freqs, const std::vector<double>& db) {
    std::vector<Complex> refl;
    std::vector<Complex> inc(freqs.size(), Complex{1.0, 0.0});
    for (double d : db) {
        refl.emplace_back(std::pow(10.0, d / 20.0), 0.0);
    }
    return s11(refl, inc, freqs);
}

ProbeTrace make_trace(std::size_t n, double dt, const std::function<double(std::size_t)>& f) {
    ProbeTrace t{"t", std::vector<double>(n), dt};
    for (std::size_t q = 0; q < n; ++q) {
        t.samples[q] = f(q);
    }
    return t;
}

// Independent reference for negative frequencies.
Complex reference_dft(const ProbeTrace& t, double f) {
    Complex sum{};
    for (std::size_t n = 0; n < t.samples.size(); ++n) {
        sum += t.samples[n] * std::polar(1.0, -2.0 * constants::pi * f * static_cast<double>(n) * t.dt);
    }
    return sum * t.dt;
}

const std::vector<double> kGrid = linear_frequencies(12e9, 20e9, 401);

} // namespace

TEST_CASE("linear frequency grid") {
    CHECK(kGrid.size() == 401);
    CHECK(kGrid.front() == 12e9);
    CHECK(kGrid.back() == 20e9);
    CHECK(kGrid[200] == doctest::Approx(16e9).epsilon(1e-15).scale(0));
    CHECK_THROWS_AS(linear_frequencies(1e9, 1e9, 10), ValidationError);
    CHECK_THROWS_AS(linear_frequencies(1e9, 2e9, 1), ValidationError);
}

TEST_CASE("reflected trace") {
    const ProbeTrace inc = make_trace(100, 1e-12, [](std::size_t n) { return std::sin(0.1 * n); });
    const ProbeTrace r0 = reflected_trace(inc, inc);
    CHECK(std::all_of(r0.samples.begin(), r0.samples.end(), [](double x) { return x == 0.0; }));

    const ProbeTrace zero = make_trace(100, 1e-12, [](std::size_t) { return 0.0; });
    CHECK(reflected_trace(inc, zero).samples == inc.samples);

    // Shifted, scaled echo added to the incident trace is recovered exactly.
    const ProbeTrace echo = make_trace(100, 1e-12, [&](std::size_t n) { return n >= 30 ? -0.25 * inc.samples[n - 30] : 0.0; });
    ProbeTrace total = inc;
    for (std::size_t n = 0; n < 100; ++n) {
        total.samples[n] += echo.samples[n];
    }
    const ProbeTrace rec = reflected_trace(total, inc);
    for (std::size_t n = 0; n < 100; ++n) {
        CHECK(rec.samples[n] == doctest::Approx(echo.samples[n]).epsilon(1e-15).scale(1.0));
    }

    CHECK_THROWS_AS(reflected_trace(inc, make_trace(99, 1e-12, [](std::size_t) { return 0.0; })), ValidationError);
    CHECK_THROWS_AS(reflected_trace(inc, make_trace(100, 2e-12, [](std::size_t) { return 0.0; })), ValidationError);
}

TEST_CASE("dft examples") {
    const double dt = 1e-12;
    const std::size_t n = 1000;
    const ProbeTrace ones = make_trace(n, dt, [](std::size_t) { return 1.0; });
    const std::vector<double> f_int{1e10, 2e10, 1e11};  // integer number of periods over n dt
    for (const Complex& x : dft(ones, f_int)) {
        CHECK(std::abs(x) < 1e-12 * n * dt);
    }

    const double f0 = 2e10;
    const ProbeTrace cosine = make_trace(n, dt, [&](std::size_t q) { return std::cos(2 * constants::pi * f0 * q * dt); });
    const std::vector<double> at{f0};
    CHECK(std::abs(dft(cosine, at)[0]) == doctest::Approx(n * dt / 2).epsilon(1e-9).scale(0));

    CHECK_THROWS_AS(dft(ones, std::vector<double>{0.5 / dt}), ValidationError);
    CHECK_THROWS_AS(dft(ones, std::vector<double>{0.0}), ValidationError);
    CHECK_THROWS_AS(dft(ProbeTrace{"e", {}, dt}, f_int), ValidationError);
}

TEST_CASE("dft linearity and conjugate symmetry") {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> normal;
    const ProbeTrace a = make_trace(500, 1e-12, [&](std::size_t) { return normal(rng); });
    const ProbeTrace b = make_trace(500, 1e-12, [&](std::size_t) { return normal(rng); });
    ProbeTrace sum = a;
    for (std::size_t n = 0; n < 500; ++n) {
        sum.samples[n] += b.samples[n];
    }
    const auto xa = dft(a, kGrid);
    const auto xb = dft(b, kGrid);
    const auto xs = dft(sum, kGrid);
    for (std::size_t k = 0; k < kGrid.size(); ++k) {
        CHECK(std::abs(xs[k] - (xa[k] + xb[k])) <= 1e-12 * std::max(std::abs(xs[k]), 1e-300));
    }
    for (std::size_t k = 0; k < kGrid.size(); k += 40) {
        const Complex neg = reference_dft(a, -kGrid[k]);
        CHECK(std::abs(neg - std::conj(xa[k])) <= 1e-10 * std::abs(xa[k]));
    }
}

TEST_CASE("leading zeros do not change the transform") {
    ProbeTrace t = make_trace(400, 1e-12, [](std::size_t n) { return n < 150 ? 0.0 : std::sin(0.3 * n); });
    const auto fast = dft(t, kGrid);
    for (std::size_t k = 0; k < kGrid.size(); k += 50) {
        CHECK(std::abs(fast[k] - reference_dft(t, kGrid[k])) <= 1e-10 * std::abs(fast[k]));
    }
}

TEST_CASE("s11 examples") {
    std::vector<Complex> inc;
    for (double f : kGrid) {
        inc.push_back(std::polar(1.0 + f / 1e11, f / 3e9));
    }
    const std::vector<Complex> zero(kGrid.size());
    const Spectrum s0 = s11(zero, inc, kGrid);
    for (double d : s0.db) {
        CHECK(d == kDbFloor);
    }
    const Spectrum s1 = s11(inc, inc, kGrid);
    for (double d : s1.db) {
        CHECK(std::abs(d) < 1e-12);
    }
    std::vector<Complex> half;
    for (const Complex& c : inc) {
        half.push_back(0.5 * c);
    }
    for (double d : s11(half, inc, kGrid).db) {
        CHECK(d == doctest::Approx(-6.0206).epsilon(1e-5).scale(0));
    }
    CHECK_THROWS_AS(s11(half, inc, std::vector<double>(3, 1.0)), ValidationError);
}

TEST_CASE("noise floor flags and excludes weak incident bins") {
    std::vector<Complex> inc(kGrid.size(), Complex{1.0, 0.0});
    std::vector<Complex> refl(kGrid.size(), Complex{0.9, 0.0});
    inc[10] = Complex{1e-12, 0.0};
    refl[10] = Complex{1e-13, 0.0};  // would read as -20 dB
    inc[11] = Complex{0.0, 0.0};
    const Spectrum s = s11(refl, inc, kGrid);
    CHECK_FALSE(s.valid[10]);
    CHECK_FALSE(s.valid[11]);
    CHECK(s.valid[12]);
    const MinReturnLoss m = min_return_loss(s, 16e9);
    CHECK(m.db == doctest::Approx(20 * std::log10(0.9)).scale(0));
    CHECK(bandwidth(s, -10.0, 16e9) == 0.0);
}

TEST_CASE("bandwidth examples") {
    const double spacing = kGrid[1] - kGrid[0];

    const Spectrum flat = from_db(kGrid, std::vector<double>(kGrid.size(), -5.0));
    CHECK(bandwidth(flat, -10.0, 16e9) == 0.0);

    std::vector<double> rect;
    for (double f : kGrid) {
        rect.push_back(f >= 15e9 - 1 && f <= 17e9 + 1 ? -15.0 : -5.0);
    }
    CHECK(bandwidth(from_db(kGrid, rect), -10.0, 16e9) == doctest::Approx(2e9).epsilon(spacing / 2e9).scale(0));

    std::vector<double> dip;
    for (double f : kGrid) {
        const double x = (f - 16e9) / 1e9;
        dip.push_back(x < 0 ? -30.0 + 20.0 * x * x / (0.9 * 0.9) : -30.0 + 20.0 * x * x);
    }
    const Spectrum ds = from_db(kGrid, dip);
    CHECK(std::abs(bandwidth(ds, -10.0, 16e9) - 1.9e9) <= spacing);
    const MinReturnLoss m = min_return_loss(ds, 16e9);
    CHECK(m.db == doctest::Approx(-30.0).epsilon(1e-12).scale(0));
    CHECK(m.freq == doctest::Approx(16e9).epsilon(1e-15).scale(0));
}

TEST_CASE("bandwidth modes on a two-dip curve") {
    std::vector<double> db;
    for (double f : kGrid) {
        const double a = (f - 14e9) / 0.3e9;
        const double b = (f - 18e9) / 0.5e9;
        db.push_back(std::min(-2.0 + (-20.0 + 2.0) * std::exp(-a * a), -2.0 + (-25.0 + 2.0) * std::exp(-b * b)));
    }
    const Spectrum s = from_db(kGrid, db);
    const double band = bandwidth(s, -10.0, 16e9, BandwidthMode::band);
    const double all = bandwidth(s, -10.0, 16e9, BandwidthMode::union_);
    CHECK(band > 0.0);
    CHECK(all > band);
    // Band mode measures the deeper dip at 18 GHz.
    CHECK(min_return_loss(s, 16e9).freq == doctest::Approx(18e9).scale(0));
    const double expected_b = 2 * 0.5e9 * std::sqrt(std::log(23.0 / 8.0));
    CHECK(band == doctest::Approx(expected_b).epsilon(0.02).scale(0));
}

TEST_CASE("min return loss tie-breaking") {
    std::vector<double> down;
    for (std::size_t k = 0; k < kGrid.size(); ++k) {
        down.push_back(-static_cast<double>(k) * 0.01);
    }
    CHECK(min_return_loss(from_db(kGrid, down), 16e9).freq == kGrid.back());
    const Spectrum flat = from_db(kGrid, std::vector<double>(kGrid.size(), -3.0));
    CHECK(min_return_loss(flat, 16.013e9).freq == doctest::Approx(16.02e9).scale(0));
    CHECK(min_return_loss(flat, 11e9).freq == kGrid.front());
}

TEST_CASE("bandwidth is zero whenever the minimum is above threshold") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(-30.0, 0.0);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<double> db(kGrid.size());
        for (double& d : db) {
            d = u(rng);
        }
        const Spectrum s = from_db(kGrid, db);
        const double threshold = -10.0 - 20.0 * (trial % 2);
        if (min_return_loss(s, 16e9).db > threshold) {
            CHECK(bandwidth(s, threshold, 16e9) == 0.0);
        } else {
            CHECK(bandwidth(s, threshold, 16e9) > 0.0);
        }
    }
}

TEST_CASE("s11 csv round trip") {
    std::vector<Complex> refl;
    std::vector<Complex> inc;
    for (double f : kGrid) {
        refl.push_back(std::polar(0.3 + 1e-310 * f, f / 1e9));
        inc.emplace_back(1.0 + f / 1e12, -0.5);
    }
    refl[3] = Complex{};
    const Spectrum s = s11(refl, inc, kGrid);
    std::stringstream io;
    write_s11_csv(s, io);
    CHECK(io.str().rfind("freq_hz,s11_re,s11_im,s11_db\n", 0) == 0);
    const Spectrum back = read_s11_csv(io);
    CHECK(back.freqs == s.freqs);
    CHECK(back.s11 == s.s11);
    CHECK(back.db == s.db);

    std::istringstream bad("freq_hz,s11_re,s11_im,s11_db\n1,2,x,4\n");
    CHECK_THROWS_AS(read_s11_csv(bad), IoError);
    std::istringstream wrong("f,re,im,db\n");
    CHECK_THROWS_AS(read_s11_csv(wrong), IoError);
}

TEST_CASE("incident file round trip") {
    IncidentCache c;
    c.trace = {"incident", {0.0, 1.5, -2.25e-7, 4.9e-324, 1e300}, 9.25e-13};
    c.fingerprint = 0x0123456789abcdefULL;
    c.created = "2026-01-01T00:00:00Z";
    std::stringstream io;
    write_incident(c, io);
    CHECK(io.str().rfind("pixpatch-incident 1\nfingerprint 0123456789abcdef\n", 0) == 0);
    const IncidentCache back = read_incident(io);
    CHECK(back.fingerprint == c.fingerprint);
    CHECK(back.trace.dt == c.trace.dt);
    CHECK(back.trace.samples == c.trace.samples);
    CHECK(back.created == c.created);

    std::string text = io.str();
    std::istringstream wrong_version("pixpatch-incident 9\n" + text.substr(text.find('\n') + 1));
    CHECK_THROWS_AS(read_incident(wrong_version), IoError);
    std::istringstream truncated(text.substr(0, text.size() - 40));
    CHECK_THROWS_AS(read_incident(truncated), IoError);
    std::istringstream junk("hello\n");
    CHECK_THROWS_AS(read_incident(junk), IoError);
}

TEST_CASE("incident store") {
    const auto dir = std::filesystem::temp_directory_path() / "pixpatch-test-store";
    std::filesystem::remove_all(dir);
    IncidentStore store(dir);
    CHECK_FALSE(store.load(42).has_value());
    IncidentCache c;
    c.trace = {"incident", {1.0, 2.0}, 1e-12};
    c.fingerprint = 42;
    c.created = "test";
    std::filesystem::create_directories(dir);
    store.save(c);
    CHECK(store.path_for(42).filename() == "incident-000000000000002a.txt");
    const auto loaded = store.load(42);
    REQUIRE(loaded.has_value());
    CHECK(loaded->trace.samples == c.trace.samples);
    // A file whose recorded fingerprint disagrees with its name is not reused.
    std::filesystem::copy_file(store.path_for(42), store.path_for(43));
    CHECK_FALSE(store.load(43).has_value());
    std::filesystem::remove_all(dir);
}

TEST_CASE("incident recording on the smoke grid") {
    const RunConfig cfg = preset("smoke");
    const IncidentCache a = record_incident(cfg.dims, cfg.mesh, cfg.source);
    const IncidentCache b = record_incident(cfg.dims, cfg.mesh, cfg.source);
    CHECK(a.fingerprint == b.fingerprint);
    CHECK(a.trace.samples == b.trace.samples);
    CHECK(a.trace.samples.size() == static_cast<std::size_t>(cfg.source.n_steps));

    SourceSpec changed = cfg.source;
    changed.fc = 15e9;
    CHECK(incident_fingerprint(cfg.dims, cfg.mesh, changed) != a.fingerprint);
    MeshConfig mesh = cfg.mesh;
    mesh.port_offset_cells += 1;
    CHECK(incident_fingerprint(cfg.dims, mesh, cfg.source) != a.fingerprint);

    // The matched line delivers a delayed copy of the excitation waveform.
    const auto& v = a.trace.samples;
    const std::size_t n = v.size();
    std::vector<double> s(n);
    for (std::size_t q = 0; q < n; ++q) {
        s[q] = source_value(static_cast<double>(q) * a.trace.dt, cfg.source);
    }
    double vv = 0.0;
    double ss = 0.0;
    for (std::size_t q = 0; q < n; ++q) {
        vv += v[q] * v[q];
        ss += s[q] * s[q];
    }
    double best = 0.0;
    for (std::size_t lag = 0; lag < 200; ++lag) {
        double acc = 0.0;
        for (std::size_t q = lag; q < n; ++q) {
            acc += v[q] * s[q - lag];
        }
        best = std::max(best, std::abs(acc) / std::sqrt(vv * ss));
    }
    CHECK(best > 0.99);
}
