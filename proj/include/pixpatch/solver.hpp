#pragma once

#include "pixpatch/mesh.hpp"

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace pixpatch {

/// Morlet excitation E0 exp[-(2 pi fb (t - t0))^2] cos[2 pi fc (t - t0)],
/// injected additively into Ez at the injection nodes.
struct SourceSpec {
    double amplitude = 22.0;   // E0, V/m
    double t0 = 5.02e-9;       // s
    double fc = 16e9;          // Hz
    double fb = 2e9;           // Hz
    long n_steps = 8000;
    std::vector<Index3> injection;

    void validate() const;
};

double source_value(double t, const SourceSpec& spec);

/// Observes scale * sum_k Ez(i, j, k) for k in [k_begin, k_end).
/// With scale = dz over the substrate this is the port voltage.
struct Probe {
    std::string id;
    int i = 0;
    int j = 0;
    int k_begin = 0;
    int k_end = 1;
    double scale = 1.0;
};

/// Voltage probe under the strip centreline at the port reference plane.
Probe port_probe(const PortDescriptor& port, std::string id = "port");

struct ProbeTrace {
    std::string id;
    std::vector<double> samples;
    double dt = 0.0;
};

/// Field update ordering within one step. Either way E is the field sampled
/// at integer steps and the source for step n is evaluated at t = n dt.
enum class StepOrder {
    h_then_e,
    e_then_h,
};

/// Staggered fields plus the UPML flux densities (D, B).
/// All arrays have (nx+1)(ny+1)(nz+1) entries with x fastest.
struct FieldState {
    explicit FieldState(const SimulationGrid& grid);

    std::size_t index(int i, int j, int k) const {
        return (static_cast<std::size_t>(k) * (ny + 1) + j) * (nx + 1) + i;
    }

    bool all_finite() const;
    double max_abs_e() const;

    int nx = 0;
    int ny = 0;
    int nz = 0;
    long step = 0;
    std::vector<double> ex, ey, ez;
    std::vector<double> hx, hy, hz;
    std::vector<double> dfx, dfy, dfz;  // D
    std::vector<double> bfx, bfy, bfz;  // B
};

/// Owns one simulation's field state and the precomputed update coefficients.
class Solver {
  public:
    Solver(const SimulationGrid& grid, SourceSpec spec, StepOrder order = StepOrder::h_then_e);

    /// One leapfrog step: half-step of H and E (in the configured order), soft
    /// source injection at t = step * dt, PEC re-zeroing. Checks finiteness every
    /// 100 steps and throws DivergenceError on failure.
    void step();

    double sample(const Probe& probe) const;

    const FieldState& state() const noexcept { return state_; }
    FieldState& state() noexcept { return state_; }
    const SimulationGrid& grid() const noexcept { return grid_; }

  private:
    struct AxisCoefficients {
        // Indexed by node (size n+1) or half node (size n).
        std::vector<double> c1_node, c2_node, cp_node, cm_node;
        std::vector<double> c1_half, c2_half, cp_half, cm_half;
        std::vector<char> zero_node, zero_half;
    };

    void update_h();
    void update_e();
    void apply_pec();
    void inject(double t);
    void check_finite() const;

    const SimulationGrid& grid_;
    SourceSpec spec_;
    StepOrder order_;
    FieldState state_;
    std::array<AxisCoefficients, 3> axes_;
    std::vector<double> inv_eps_x_, inv_eps_y_, inv_eps_z_;
    std::vector<std::size_t> pec_ex_, pec_ey_;
    std::vector<std::size_t> injection_;
};

/// Runs spec.n_steps steps from a zero state and records every probe after
/// each step. Leading steps whose source value is exactly zero leave the
/// fields exactly zero and are not executed.
std::vector<ProbeTrace> run(const SimulationGrid& grid, const SourceSpec& spec,
                            std::span<const Probe> probes, StepOrder order = StepOrder::h_then_e);

/// CSV with header "step,time_s,value", 17 significant digits.
void write_trace_csv(const ProbeTrace& trace, std::ostream& out);

} // namespace pixpatch
