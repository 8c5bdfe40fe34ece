#pragma once

#include "pixpatch/mesh.hpp"

namespace pixpatch {

/// Transmission-line / cavity model design of an inset-fed rectangular patch.
struct PatchDesign {
    SeedDimensions dims;
    double eps_eff = 0.0;       // effective permittivity of the patch
    double delta_l = 0.0;       // fringing length extension, m
    double g1 = 0.0;            // single-slot radiation conductance, S
    double rin_edge = 0.0;      // Rin(0) = 1 / (2 G1), ohm
    double z0 = 50.0;           // target feed impedance, ohm
};

/// Closed-form design for resonance at fc on a substrate (eps_r, h).
/// Throws ValidationError for invalid inputs or when Rin(0) < z0, in which
/// case no inset position reaches z0 and the inset must be chosen by hand.
PatchDesign design_patch(double fc, double eps_r, double h, double z0 = 50.0);

/// The dimensions the reference optimisation started from.
SeedDimensions paper_seed();

/// Microstrip effective permittivity for a strip of width w on (eps_r, h).
double effective_permittivity(double eps_r, double h, double w);

/// Strip width realising characteristic impedance z0 on (eps_r, h).
double microstrip_width(double z0, double eps_r, double h);

/// Radiation conductance of one radiating slot of width w at free-space wavenumber k0.
double slot_conductance(double w, double k0);

} // namespace pixpatch
