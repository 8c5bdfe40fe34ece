#include "pixpatch/solver.hpp"

#include "pixpatch/constants.hpp"
#include "pixpatch/errors.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <ostream>

namespace pixpatch {

namespace {

constexpr long kFiniteCheckInterval = 100;

// First and one-past-last index of the zero-conductivity run in a profile,
// intersected with [lo, hi).
std::pair<int, int> clear_range(const std::vector<char>& zero, int lo, int hi) {
    int a = lo;
    while (a < hi && !zero[a]) {
        ++a;
    }
    int b = a;
    while (b < hi && zero[b]) {
        ++b;
    }
    return {a, b};
}

} // namespace

void SourceSpec::validate() const {
    if (!(amplitude > 0)) {
        throw ValidationError("e0: source amplitude must be > 0");
    }
    if (!(t0 > 0)) {
        throw ValidationError("t0: must be > 0");
    }
    if (!(fc > 0)) {
        throw ValidationError("fc: must be > 0");
    }
    if (!(fb > 0)) {
        throw ValidationError("fb: must be > 0");
    }
    if (n_steps < 0) {
        throw ValidationError("n_steps: must be >= 0");
    }
}

double source_value(double t, const SourceSpec& spec) {
    const double tau = t - spec.t0;
    const double envelope = 2.0 * constants::pi * spec.fb * tau;
    return spec.amplitude * std::exp(-envelope * envelope) *
           std::cos(2.0 * constants::pi * spec.fc * tau);
}

Probe port_probe(const PortDescriptor& port, std::string id) {
    return {std::move(id), port.center_x, port.probe_y, 0, port.substrate_cells, port.dz};
}

FieldState::FieldState(const SimulationGrid& grid) : nx(grid.nx), ny(grid.ny), nz(grid.nz) {
    const std::size_t n = static_cast<std::size_t>(nx + 1) * (ny + 1) * (nz + 1);
    for (auto* v : {&ex, &ey, &ez, &hx, &hy, &hz, &dfx, &dfy, &dfz, &bfx, &bfy, &bfz}) {
        v->assign(n, 0.0);
    }
}

bool FieldState::all_finite() const {
    for (const auto* v : {&ex, &ey, &ez, &hx, &hy, &hz}) {
        for (double x : *v) {
            if (!std::isfinite(x)) {
                return false;
            }
        }
    }
    return true;
}

double FieldState::max_abs_e() const {
    double m = 0.0;
    for (const auto* v : {&ex, &ey, &ez}) {
        for (double x : *v) {
            m = std::max(m, std::abs(x));
        }
    }
    return m;
}

Solver::Solver(const SimulationGrid& grid, SourceSpec spec, StepOrder order)
    : grid_(grid), spec_(std::move(spec)), order_(order), state_(grid) {
    const double dt = grid.dt;
    for (int a = 0; a < 3; ++a) {
        const UpmlProfile& p = grid.upml[a];
        AxisCoefficients& c = axes_[a];
        const auto fill = [dt](const std::vector<double>& sigma, std::vector<double>& c1,
                               std::vector<double>& c2, std::vector<double>& cp,
                               std::vector<double>& cm, std::vector<char>& zero) {
            const std::size_t n = sigma.size();
            c1.resize(n);
            c2.resize(n);
            cp.resize(n);
            cm.resize(n);
            zero.resize(n);
            for (std::size_t q = 0; q < n; ++q) {
                const double s = sigma[q] * dt / (2.0 * constants::eps0);
                c1[q] = (1.0 - s) / (1.0 + s);
                c2[q] = 1.0 / (1.0 + s);
                cp[q] = 1.0 + s;
                cm[q] = 1.0 - s;
                zero[q] = sigma[q] == 0.0;
            }
        };
        fill(p.sigma_node, c.c1_node, c.c2_node, c.cp_node, c.cm_node, c.zero_node);
        fill(p.sigma_half, c.c1_half, c.c2_half, c.cp_half, c.cm_half, c.zero_half);
    }

    // Edge permittivity is the mean over the (up to four) cells sharing the edge.
    const int nx = grid.nx;
    const int ny = grid.ny;
    const int nz = grid.nz;
    const std::size_t n = state_.ex.size();
    inv_eps_x_.assign(n, 0.0);
    inv_eps_y_.assign(n, 0.0);
    inv_eps_z_.assign(n, 0.0);
    const auto edge_inv_eps = [&](int i0, int i1, int j0, int j1, int k0, int k1) {
        double sum = 0.0;
        int count = 0;
        for (int k = std::max(k0, 0); k <= std::min(k1, nz - 1); ++k) {
            for (int j = std::max(j0, 0); j <= std::min(j1, ny - 1); ++j) {
                for (int i = std::max(i0, 0); i <= std::min(i1, nx - 1); ++i) {
                    sum += grid.eps_cell(i, j, k);
                    ++count;
                }
            }
        }
        return count / sum;
    };
    for (int k = 0; k <= nz; ++k) {
        for (int j = 0; j <= ny; ++j) {
            for (int i = 0; i <= nx; ++i) {
                const std::size_t id = state_.index(i, j, k);
                if (i < nx) {
                    inv_eps_x_[id] = edge_inv_eps(i, i, j - 1, j, k - 1, k);
                }
                if (j < ny) {
                    inv_eps_y_[id] = edge_inv_eps(i - 1, i, j, j, k - 1, k);
                }
                if (k < nz) {
                    inv_eps_z_[id] = edge_inv_eps(i - 1, i, j - 1, j, k, k);
                }
            }
        }
    }

    for (int k = 1; k < nz; ++k) {
        for (int j = 0; j < ny; ++j) {
            for (int i = 0; i < nx; ++i) {
                if (!grid.pec.z_face(i, j, k)) {
                    continue;
                }
                pec_ex_.push_back(state_.index(i, j, k));
                pec_ex_.push_back(state_.index(i, j + 1, k));
                pec_ey_.push_back(state_.index(i, j, k));
                pec_ey_.push_back(state_.index(i + 1, j, k));
            }
        }
    }
    for (auto* v : {&pec_ex_, &pec_ey_}) {
        std::sort(v->begin(), v->end());
        v->erase(std::unique(v->begin(), v->end()), v->end());
    }

    for (const Index3& c : spec_.injection) {
        if (c.i < 0 || c.i > nx || c.j < 0 || c.j > ny || c.k < 0 || c.k >= nz) {
            throw ValidationError(fmt::format("source injection node ({}, {}, {}) outside grid", c.i, c.j, c.k));
        }
        injection_.push_back(state_.index(c.i, c.j, c.k));
    }
}

void Solver::update_h() {
    FieldState& s = state_;
    const int nx = s.nx;
    const int ny = s.ny;
    const int nz = s.nz;
    const std::size_t sy = static_cast<std::size_t>(nx + 1);
    const std::size_t sz = sy * (ny + 1);
    const double dt = grid_.dt;
    const double idx = 1.0 / grid_.dx;
    const double idy = 1.0 / grid_.dy;
    const double idz = 1.0 / grid_.dz;
    const double inv_mu = 1.0 / constants::mu0;
    const double fast = dt * inv_mu;
    const AxisCoefficients& ax = axes_[0];
    const AxisCoefficients& ay = axes_[1];
    const AxisCoefficients& az = axes_[2];

    double* hx = s.hx.data();
    double* hy = s.hy.data();
    double* hz = s.hz.data();
    double* bx = s.bfx.data();
    double* by = s.bfy.data();
    double* bz = s.bfz.data();
    const double* ex = s.ex.data();
    const double* ey = s.ey.data();
    const double* ez = s.ez.data();

    // Hx(i, j+1/2, k+1/2): B along y(half), decay z(half), bracket x(node).
    {
        const auto [lo, hi] = clear_range(ax.zero_node, 1, nx);
        for (int k = 0; k < nz; ++k) {
            for (int j = 0; j < ny; ++j) {
                const std::size_t row = k * sz + j * sy;
                const bool clear = ay.zero_half[j] && az.zero_half[k];
                const double bc1 = ay.c1_half[j];
                const double bc2 = ay.c2_half[j] * dt;
                const double dc1 = az.c1_half[k];
                const double dc2 = az.c2_half[k] * inv_mu;
                const auto full = [&](int i) {
                    const std::size_t p = row + i;
                    const double curl = (ez[p + sy] - ez[p]) * idy - (ey[p + sz] - ey[p]) * idz;
                    const double b_old = bx[p];
                    const double b_new = bc1 * b_old - bc2 * curl;
                    bx[p] = b_new;
                    hx[p] = dc1 * hx[p] + dc2 * (ax.cp_node[i] * b_new - ax.cm_node[i] * b_old);
                };
                if (!clear) {
                    for (int i = 1; i < nx; ++i) full(i);
                    continue;
                }
                for (int i = 1; i < lo; ++i) full(i);
                for (int i = lo; i < hi; ++i) {
                    const std::size_t p = row + i;
                    hx[p] -= fast * ((ez[p + sy] - ez[p]) * idy - (ey[p + sz] - ey[p]) * idz);
                }
                for (int i = hi; i < nx; ++i) full(i);
            }
        }
    }

    // Hy(i+1/2, j, k+1/2): B along z(half), decay x(half), bracket y(node).
    {
        const auto [lo, hi] = clear_range(ax.zero_half, 0, nx);
        for (int k = 0; k < nz; ++k) {
            for (int j = 1; j < ny; ++j) {
                const std::size_t row = k * sz + j * sy;
                const bool clear = az.zero_half[k] && ay.zero_node[j];
                const double bc1 = az.c1_half[k];
                const double bc2 = az.c2_half[k] * dt;
                const double cp = ay.cp_node[j] * inv_mu;
                const double cm = ay.cm_node[j] * inv_mu;
                const auto full = [&](int i) {
                    const std::size_t p = row + i;
                    const double curl = (ex[p + sz] - ex[p]) * idz - (ez[p + 1] - ez[p]) * idx;
                    const double b_old = by[p];
                    const double b_new = bc1 * b_old - bc2 * curl;
                    by[p] = b_new;
                    hy[p] = ax.c1_half[i] * hy[p] + ax.c2_half[i] * (cp * b_new - cm * b_old);
                };
                if (!clear) {
                    for (int i = 0; i < nx; ++i) full(i);
                    continue;
                }
                for (int i = 0; i < lo; ++i) full(i);
                for (int i = lo; i < hi; ++i) {
                    const std::size_t p = row + i;
                    hy[p] -= fast * ((ex[p + sz] - ex[p]) * idz - (ez[p + 1] - ez[p]) * idx);
                }
                for (int i = hi; i < nx; ++i) full(i);
            }
        }
    }

    // Hz(i+1/2, j+1/2, k): B along x(half), decay y(half), bracket z(node).
    {
        const auto [lo, hi] = clear_range(ax.zero_half, 0, nx);
        for (int k = 1; k < nz; ++k) {
            for (int j = 0; j < ny; ++j) {
                const std::size_t row = k * sz + j * sy;
                const bool clear = ay.zero_half[j] && az.zero_node[k];
                const double dc1 = ay.c1_half[j];
                const double dc2 = ay.c2_half[j] * inv_mu;
                const double cp = az.cp_node[k];
                const double cm = az.cm_node[k];
                const auto full = [&](int i) {
                    const std::size_t p = row + i;
                    const double curl = (ey[p + 1] - ey[p]) * idx - (ex[p + sy] - ex[p]) * idy;
                    const double b_old = bz[p];
                    const double b_new = ax.c1_half[i] * b_old - ax.c2_half[i] * dt * curl;
                    bz[p] = b_new;
                    hz[p] = dc1 * hz[p] + dc2 * (cp * b_new - cm * b_old);
                };
                if (!clear) {
                    for (int i = 0; i < nx; ++i) full(i);
                    continue;
                }
                for (int i = 0; i < lo; ++i) full(i);
                for (int i = lo; i < hi; ++i) {
                    const std::size_t p = row + i;
                    hz[p] -= fast * ((ey[p + 1] - ey[p]) * idx - (ex[p + sy] - ex[p]) * idy);
                }
                for (int i = hi; i < nx; ++i) full(i);
            }
        }
    }
}

void Solver::update_e() {
    FieldState& s = state_;
    const int nx = s.nx;
    const int ny = s.ny;
    const int nz = s.nz;
    const std::size_t sy = static_cast<std::size_t>(nx + 1);
    const std::size_t sz = sy * (ny + 1);
    const double dt = grid_.dt;
    const double idx = 1.0 / grid_.dx;
    const double idy = 1.0 / grid_.dy;
    const double idz = 1.0 / grid_.dz;
    const AxisCoefficients& ax = axes_[0];
    const AxisCoefficients& ay = axes_[1];
    const AxisCoefficients& az = axes_[2];

    double* ex = s.ex.data();
    double* ey = s.ey.data();
    double* ez = s.ez.data();
    double* dx = s.dfx.data();
    double* dy = s.dfy.data();
    double* dz = s.dfz.data();
    const double* hx = s.hx.data();
    const double* hy = s.hy.data();
    const double* hz = s.hz.data();
    const double* iex = inv_eps_x_.data();
    const double* iey = inv_eps_y_.data();
    const double* iez = inv_eps_z_.data();

    // Ex(i+1/2, j, k): D along y(node), decay z(node), bracket x(half).
    {
        const auto [lo, hi] = clear_range(ax.zero_half, 0, nx);
        for (int k = 1; k < nz; ++k) {
            for (int j = 1; j < ny; ++j) {
                const std::size_t row = k * sz + j * sy;
                const bool clear = ay.zero_node[j] && az.zero_node[k];
                const double dc1 = ay.c1_node[j];
                const double dc2 = ay.c2_node[j] * dt;
                const double ec1 = az.c1_node[k];
                const double ec2 = az.c2_node[k];
                const auto full = [&](int i) {
                    const std::size_t p = row + i;
                    const double curl = (hz[p] - hz[p - sy]) * idy - (hy[p] - hy[p - sz]) * idz;
                    const double d_old = dx[p];
                    const double d_new = dc1 * d_old + dc2 * curl;
                    dx[p] = d_new;
                    ex[p] = ec1 * ex[p] + ec2 * (ax.cp_half[i] * d_new - ax.cm_half[i] * d_old) * iex[p];
                };
                if (!clear) {
                    for (int i = 0; i < nx; ++i) full(i);
                    continue;
                }
                for (int i = 0; i < lo; ++i) full(i);
                for (int i = lo; i < hi; ++i) {
                    const std::size_t p = row + i;
                    ex[p] += dt * iex[p] * ((hz[p] - hz[p - sy]) * idy - (hy[p] - hy[p - sz]) * idz);
                }
                for (int i = hi; i < nx; ++i) full(i);
            }
        }
    }

    // Ey(i, j+1/2, k): D along z(node), decay x(node), bracket y(half).
    {
        const auto [lo, hi] = clear_range(ax.zero_node, 1, nx);
        for (int k = 1; k < nz; ++k) {
            for (int j = 0; j < ny; ++j) {
                const std::size_t row = k * sz + j * sy;
                const bool clear = az.zero_node[k] && ay.zero_half[j];
                const double dc1 = az.c1_node[k];
                const double dc2 = az.c2_node[k] * dt;
                const double cp = ay.cp_half[j];
                const double cm = ay.cm_half[j];
                const auto full = [&](int i) {
                    const std::size_t p = row + i;
                    const double curl = (hx[p] - hx[p - sz]) * idz - (hz[p] - hz[p - 1]) * idx;
                    const double d_old = dy[p];
                    const double d_new = dc1 * d_old + dc2 * curl;
                    dy[p] = d_new;
                    ey[p] = ax.c1_node[i] * ey[p] + ax.c2_node[i] * (cp * d_new - cm * d_old) * iey[p];
                };
                if (!clear) {
                    for (int i = 1; i < nx; ++i) full(i);
                    continue;
                }
                for (int i = 1; i < lo; ++i) full(i);
                for (int i = lo; i < hi; ++i) {
                    const std::size_t p = row + i;
                    ey[p] += dt * iey[p] * ((hx[p] - hx[p - sz]) * idz - (hz[p] - hz[p - 1]) * idx);
                }
                for (int i = hi; i < nx; ++i) full(i);
            }
        }
    }

    // Ez(i, j, k+1/2): D along x(node), decay y(node), bracket z(half).
    {
        const auto [lo, hi] = clear_range(ax.zero_node, 1, nx);
        for (int k = 0; k < nz; ++k) {
            for (int j = 1; j < ny; ++j) {
                const std::size_t row = k * sz + j * sy;
                const bool clear = ay.zero_node[j] && az.zero_half[k];
                const double ec1 = ay.c1_node[j];
                const double ec2 = ay.c2_node[j];
                const double cp = az.cp_half[k];
                const double cm = az.cm_half[k];
                const auto full = [&](int i) {
                    const std::size_t p = row + i;
                    const double curl = (hy[p] - hy[p - 1]) * idx - (hx[p] - hx[p - sy]) * idy;
                    const double d_old = dz[p];
                    const double d_new = ax.c1_node[i] * d_old + ax.c2_node[i] * dt * curl;
                    dz[p] = d_new;
                    ez[p] = ec1 * ez[p] + ec2 * (cp * d_new - cm * d_old) * iez[p];
                };
                if (!clear) {
                    for (int i = 1; i < nx; ++i) full(i);
                    continue;
                }
                for (int i = 1; i < lo; ++i) full(i);
                for (int i = lo; i < hi; ++i) {
                    const std::size_t p = row + i;
                    ez[p] += dt * iez[p] * ((hy[p] - hy[p - 1]) * idx - (hx[p] - hx[p - sy]) * idy);
                }
                for (int i = hi; i < nx; ++i) full(i);
            }
        }
    }
}

void Solver::apply_pec() {
    for (std::size_t p : pec_ex_) {
        state_.ex[p] = 0.0;
    }
    for (std::size_t p : pec_ey_) {
        state_.ey[p] = 0.0;
    }
}

void Solver::inject(double t) {
    const double v = source_value(t, spec_);
    if (v == 0.0) {
        return;
    }
    for (std::size_t p : injection_) {
        state_.ez[p] += v;
    }
}

void Solver::check_finite() const {
    if (!state_.all_finite()) {
        throw DivergenceError(state_.step,
                              fmt::format("FDTD diverged: non-finite field at step {}", state_.step));
    }
}

void Solver::step() {
    const double t = static_cast<double>(state_.step) * grid_.dt;
    if (order_ == StepOrder::h_then_e) {
        update_h();
        update_e();
        apply_pec();
        inject(t);
    } else {
        update_e();
        apply_pec();
        inject(t);
        update_h();
    }
    ++state_.step;
    if (state_.step % kFiniteCheckInterval == 0) {
        check_finite();
    }
}

double Solver::sample(const Probe& probe) const {
    double sum = 0.0;
    for (int k = probe.k_begin; k < probe.k_end; ++k) {
        sum += state_.ez[state_.index(probe.i, probe.j, k)];
    }
    return probe.scale * sum;
}

std::vector<ProbeTrace> run(const SimulationGrid& grid, const SourceSpec& spec,
                            std::span<const Probe> probes, StepOrder order) {
    spec.validate();
    for (const Probe& p : probes) {
        if (p.i < 0 || p.i > grid.nx || p.j < 0 || p.j > grid.ny || p.k_begin < 0 ||
            p.k_end > grid.nz || p.k_begin >= p.k_end) {
            throw ValidationError(fmt::format("probe '{}' references cells outside the grid", p.id));
        }
    }
    std::vector<ProbeTrace> traces;
    for (const Probe& p : probes) {
        traces.push_back({p.id, std::vector<double>(static_cast<std::size_t>(spec.n_steps), 0.0), grid.dt});
    }
    if (spec.n_steps == 0) {
        return traces;
    }

    Solver solver(grid, spec, order);
    long first = 0;
    while (first < spec.n_steps && source_value(static_cast<double>(first) * grid.dt, spec) == 0.0) {
        ++first;
    }
    solver.state().step = first;
    for (long n = first; n < spec.n_steps; ++n) {
        solver.step();
        for (std::size_t q = 0; q < probes.size(); ++q) {
            traces[q].samples[static_cast<std::size_t>(n)] = solver.sample(probes[q]);
        }
    }
    if (!solver.state().all_finite()) {
        throw DivergenceError(spec.n_steps, fmt::format("FDTD diverged: non-finite field by step {}", spec.n_steps));
    }
    return traces;
}

void write_trace_csv(const ProbeTrace& trace, std::ostream& out) {
    out << "step,time_s,value\n";
    for (std::size_t n = 0; n < trace.samples.size(); ++n) {
        out << fmt::format("{},{:.17g},{:.17g}\n", n, static_cast<double>(n) * trace.dt, trace.samples[n]);
    }
}

} // namespace pixpatch
