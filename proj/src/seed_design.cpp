#include "pixpatch/seed_design.hpp"

#include "pixpatch/constants.hpp"
#include "pixpatch/errors.hpp"

#include <fmt/format.h>

#include <cmath>
#include <functional>

namespace pixpatch {

namespace {

constexpr double kQuadratureTolerance = 1e-12;

double simpson(double a, double b, double fa, double fm, double fb) {
    return (b - a) / 6.0 * (fa + 4.0 * fm + fb);
}

double adaptive_simpson(const std::function<double(double)>& f, double a, double b, double fa, double fm,
                        double fb, double whole, double tol, int depth) {
    const double m = 0.5 * (a + b);
    const double lm = 0.5 * (a + m);
    const double rm = 0.5 * (m + b);
    const double flm = f(lm);
    const double frm = f(rm);
    const double left = simpson(a, m, fa, flm, fm);
    const double right = simpson(m, b, fm, frm, fb);
    const double delta = left + right - whole;
    if (depth <= 0 || std::abs(delta) <= 15.0 * tol) {
        return left + right + delta / 15.0;
    }
    return adaptive_simpson(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
           adaptive_simpson(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}

double integrate(const std::function<double(double)>& f, double a, double b, double rel_tol) {
    const double fa = f(a);
    const double fb = f(b);
    const double fm = f(0.5 * (a + b));
    const double coarse = simpson(a, b, fa, fm, fb);
    return adaptive_simpson(f, a, b, fa, fm, fb, coarse, rel_tol * std::max(std::abs(coarse), 1e-300), 50);
}

} // namespace

SeedDimensions paper_seed() {
    SeedDimensions d;
    d.patch_width = 11.70e-3;
    d.patch_length = 8.87e-3;
    d.feed_width = 1.40e-3;
    d.inset_gap = 0.7e-3;
    d.inset_depth = 1.33e-3;
    d.eps_r = 2.2;
    d.substrate_height = 0.76e-3;
    return d;
}

double effective_permittivity(double eps_r, double h, double w) {
    return (eps_r + 1.0) / 2.0 + (eps_r - 1.0) / 2.0 / std::sqrt(1.0 + 12.0 * h / w);
}

double microstrip_width(double z0, double eps_r, double h) {
    const double a = z0 / 60.0 * std::sqrt((eps_r + 1.0) / 2.0) +
                     (eps_r - 1.0) / (eps_r + 1.0) * (0.23 + 0.11 / eps_r);
    double ratio = 8.0 * std::exp(a) / (std::exp(2.0 * a) - 2.0);
    if (ratio > 2.0) {
        const double b = 377.0 * constants::pi / (2.0 * z0 * std::sqrt(eps_r));
        ratio = 2.0 / constants::pi *
                (b - 1.0 - std::log(2.0 * b - 1.0) +
                 (eps_r - 1.0) / (2.0 * eps_r) * (std::log(b - 1.0) + 0.39 - 0.61 / eps_r));
    }
    return ratio * h;
}

double slot_conductance(double w, double k0) {
    // I1 = int_0^pi [sin(k0 W cos t / 2) / cos t]^2 sin^3 t dt
    const double half = 0.5 * k0 * w;
    const auto integrand = [half](double t) {
        const double c = std::cos(t);
        const double s = std::sin(t);
        const double arg = half * c;
        // sin(x)/c = half * sinc(x), which stays finite at t = pi/2.
        const double sinc = std::abs(arg) < 1e-8 ? 1.0 - arg * arg / 6.0 : std::sin(arg) / arg;
        const double v = half * sinc;
        return v * v * s * s * s;
    };
    const double i1 = integrate(integrand, 0.0, 0.5 * constants::pi, kQuadratureTolerance) +
                      integrate(integrand, 0.5 * constants::pi, constants::pi, kQuadratureTolerance);
    return i1 / (120.0 * constants::pi * constants::pi);
}

PatchDesign design_patch(double fc, double eps_r, double h, double z0) {
    if (!(fc > 0)) {
        throw ValidationError("fc: must be > 0");
    }
    if (!(eps_r >= 1.0)) {
        throw ValidationError("eps_r: must be >= 1");
    }
    if (!(h > 0)) {
        throw ValidationError("substrate_h: must be > 0");
    }
    if (!(z0 > 0)) {
        throw ValidationError("z0: must be > 0");
    }
    const double lambda0 = constants::c0 / fc;
    if (!(h < 0.1 * lambda0)) {
        throw ValidationError("substrate_h: substrate must be thin compared to the wavelength");
    }

    PatchDesign out;
    out.z0 = z0;
    SeedDimensions& d = out.dims;
    d.eps_r = eps_r;
    d.substrate_height = h;
    d.patch_width = constants::c0 / (2.0 * fc) * std::sqrt(2.0 / (eps_r + 1.0));
    out.eps_eff = effective_permittivity(eps_r, h, d.patch_width);
    const double wh = d.patch_width / h;
    out.delta_l = 0.412 * h * (out.eps_eff + 0.3) * (wh + 0.264) / ((out.eps_eff - 0.258) * (wh + 0.8));
    d.patch_length = constants::c0 / (2.0 * fc * std::sqrt(out.eps_eff)) - 2.0 * out.delta_l;

    const double k0 = 2.0 * constants::pi / lambda0;
    out.g1 = slot_conductance(d.patch_width, k0);
    out.rin_edge = 1.0 / (2.0 * out.g1);
    if (out.rin_edge < z0) {
        throw ValidationError(fmt::format(
            "inset_depth: edge resistance {:.3f} ohm is below z0 = {:g} ohm; choose the inset manually",
            out.rin_edge, z0));
    }
    d.inset_depth = d.patch_length / constants::pi * std::acos(std::sqrt(z0 / out.rin_edge));
    d.feed_width = microstrip_width(z0, eps_r, h);
    d.inset_gap = d.feed_width / 2.0;
    return out;
}

} // namespace pixpatch
