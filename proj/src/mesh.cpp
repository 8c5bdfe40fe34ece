#include "pixpatch/mesh.hpp"

#include "pixpatch/constants.hpp"
#include "pixpatch/errors.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

namespace pixpatch {

namespace {

constexpr int kUpmlOrder = 3;
constexpr double kUpmlSigmaScale = 0.8;

void require(bool ok, const std::string& what) {
    if (!ok) {
        throw ValidationError(what);
    }
}

int cells_for(double length, double cell) {
    return static_cast<int>(std::lround(length / cell));
}

// sigma(d) = sigma_max (d / thickness)^m, sampled at nodes and half nodes.
UpmlProfile grade_axis(int n, double delta, int thickness, bool lower, bool upper) {
    const double sigma_max = kUpmlSigmaScale * (kUpmlOrder + 1) / (constants::eta0 * delta);
    const auto depth = [&](double pos) {
        double d = 0.0;
        if (lower && pos < thickness) {
            d = thickness - pos;
        }
        if (upper && pos > n - thickness) {
            d = pos - (n - thickness);
        }
        return d / thickness;
    };
    UpmlProfile profile;
    profile.sigma_node.resize(n + 1);
    profile.sigma_half.resize(n);
    for (int p = 0; p <= n; ++p) {
        profile.sigma_node[p] = sigma_max * std::pow(depth(p), kUpmlOrder);
    }
    for (int p = 0; p < n; ++p) {
        profile.sigma_half[p] = sigma_max * std::pow(depth(p + 0.5), kUpmlOrder);
    }
    return profile;
}

} // namespace

void SeedDimensions::validate() const {
    require(patch_width > 0, "patch_w: must be > 0");
    require(patch_length > 0, "patch_l: must be > 0");
    require(feed_width > 0, "feed_w: must be > 0");
    require(inset_gap > 0, "inset_gap: must be > 0");
    require(inset_depth > 0, "inset_depth: must be > 0");
    require(substrate_height > 0, "substrate_h: must be > 0");
    require(eps_r >= 1.0, "eps_r: must be >= 1");
    require(inset_depth < patch_length, "inset_depth: must be smaller than patch_l");
    require(feed_width + 2 * inset_gap < patch_width,
            "feed_w: feed_w + 2*inset_gap must be smaller than patch_w");
}

void MeshConfig::validate(const SeedDimensions& dims) const {
    require(cells_per_pixel_x >= 1, "cells_per_pixel_x: must be >= 1");
    require(cells_per_pixel_y >= 1, "cells_per_pixel_y: must be >= 1");
    require(dz > 0, "dz: must be > 0");
    require(upml_cells >= 4, "upml_cells: must be >= 4");
    require(air_margin_cells >= 1, "air_margin_cells: must be >= 1");
    require(courant > 0 && courant <= 1, "courant: must lie in (0, 1]");
    require(source_offset_cells >= 1, "source_offset_cells: must be >= 1");
    require(port_offset_cells > source_offset_cells,
            "port_offset_cells: reference plane must lie beyond the source plane");
    require(feed_length_cells > port_offset_cells + 1,
            "feed_length_cells: feed line must extend past the port reference plane");
    const double layers = dims.substrate_height / dz;
    require(std::abs(layers - std::round(layers)) < 1e-6 && std::round(layers) >= 1,
            fmt::format("dz: substrate height {:g} m is not an integer multiple of dz {:g} m",
                        dims.substrate_height, dz));
}

bool PixelMap::at(int row, int col) const {
    if (row < 0 || row >= kPixelRows || col < 0 || col >= kPixelCols) {
        throw ValidationError(fmt::format("pixel ({}, {}) out of range", row, col));
    }
    return bits_[static_cast<std::size_t>(row * kPixelCols + col)];
}

void PixelMap::set(int row, int col, bool value) {
    if (row < 0 || row >= kPixelRows || col < 0 || col >= kPixelCols) {
        throw ValidationError(fmt::format("pixel ({}, {}) out of range", row, col));
    }
    bits_[static_cast<std::size_t>(row * kPixelCols + col)] = value;
}

std::size_t PecMask::count() const {
    return static_cast<std::size_t>(std::count(faces_.begin(), faces_.end(), std::uint8_t{1}));
}

std::size_t PecMask::count_layer(int k) const {
    const auto begin = faces_.begin() + static_cast<std::ptrdiff_t>(index(0, 0, k));
    const auto end = begin + static_cast<std::ptrdiff_t>(nx_) * ny_;
    return static_cast<std::size_t>(std::count(begin, end, std::uint8_t{1}));
}

double cfl_timestep(double dx, double dy, double dz, double courant) {
    if (!(dx > 0) || !(dy > 0) || !(dz > 0)) {
        throw ValidationError("cfl_timestep: cell sizes must be > 0");
    }
    if (!(courant > 0) || courant > 1) {
        throw ValidationError("courant: must lie in (0, 1]");
    }
    return courant / (constants::c0 * std::sqrt(1.0 / (dx * dx) + 1.0 / (dy * dy) + 1.0 / (dz * dz)));
}

CellRect pixel_to_cells(int row, int col, const MeshConfig& cfg) {
    if (row < 0 || row >= kPixelRows || col < 0 || col >= kPixelCols) {
        throw ValidationError(fmt::format("pixel ({}, {}) out of range", row, col));
    }
    const int x0 = cfg.upml_cells + cfg.air_margin_cells + col * cfg.cells_per_pixel_x;
    const int y0 = cfg.upml_cells + cfg.feed_length_cells + row * cfg.cells_per_pixel_y;
    return {x0, x0 + cfg.cells_per_pixel_x, y0, y0 + cfg.cells_per_pixel_y};
}

Layout build_layout(const SeedDimensions& dims, const PixelMap& pixels, const MeshConfig& cfg,
                    FeedMode mode) {
    dims.validate();
    cfg.validate(dims);

    const int patch_nx = kPixelCols * cfg.cells_per_pixel_x;
    const int patch_ny = kPixelRows * cfg.cells_per_pixel_y;
    const double dx = dims.patch_width / patch_nx;
    const double dy = dims.patch_length / patch_ny;
    const double dz = cfg.dz;
    const int pml = cfg.upml_cells;
    const int sub = static_cast<int>(std::lround(dims.substrate_height / dz));

    Layout layout;
    layout.feed_cells = cells_for(dims.feed_width, dx);
    layout.gap_cells = cells_for(dims.inset_gap, dx);
    layout.notch_cells = cells_for(dims.inset_depth, dy);
    require(layout.feed_cells >= 2,
            fmt::format("feed_w: feed line resolves to {} cell(s), need >= 2", layout.feed_cells));
    require(layout.gap_cells >= 1, "inset_gap: gap resolves to 0 cells");
    require(layout.notch_cells >= 1, "inset_depth: inset resolves to 0 cells");
    require(layout.notch_cells < patch_ny, "inset_depth: inset spans the whole patch");
    require(layout.feed_cells + 2 * layout.gap_cells <= patch_nx,
            "feed_w: feed line and gaps do not fit across the patch");

    SimulationGrid& g = layout.grid;
    g.nx = pml + cfg.air_margin_cells + patch_nx + cfg.air_margin_cells + pml;
    g.ny = pml + cfg.feed_length_cells + patch_ny + cfg.air_margin_cells + pml;
    g.nz = sub + cfg.air_margin_cells + pml;
    g.dx = dx;
    g.dy = dy;
    g.dz = dz;
    g.courant = cfg.courant;
    g.dt = cfl_timestep(dx, dy, dz, cfg.courant);
    g.upml_cells = pml;
    g.substrate_cells = sub;

    g.eps.assign(static_cast<std::size_t>(g.nx) * g.ny * g.nz, constants::eps0);
    for (int k = 0; k < sub; ++k) {
        const auto begin = g.eps.begin() + static_cast<std::ptrdiff_t>(k) * g.nx * g.ny;
        std::fill(begin, begin + static_cast<std::ptrdiff_t>(g.nx) * g.ny, constants::eps0 * dims.eps_r);
    }

    g.upml[0] = grade_axis(g.nx, dx, pml, true, true);
    g.upml[1] = grade_axis(g.ny, dy, pml, true, true);
    g.upml[2] = grade_axis(g.nz, dz, pml, false, true);

    g.pec = PecMask(g.nx, g.ny, g.nz);
    for (int j = 0; j < g.ny; ++j) {
        for (int i = 0; i < g.nx; ++i) {
            g.pec.set_z_face(i, j, 0);
        }
    }

    const int px0 = pml + cfg.air_margin_cells;
    const int py0 = pml + cfg.feed_length_cells;
    layout.patch_region = {px0, px0 + patch_nx, py0, py0 + patch_ny};

    const int feed_x0 = px0 + (patch_nx - layout.feed_cells) / 2;
    const int feed_x1 = feed_x0 + layout.feed_cells;
    const int feed_y1 = mode == FeedMode::matched_line ? g.ny : py0;
    for (int j = 0; j < feed_y1; ++j) {
        for (int i = feed_x0; i < feed_x1; ++i) {
            g.pec.set_z_face(i, j, sub);
        }
    }

    // Pixels are clipped by the inset clearance on both sides of the feed.
    const auto in_gap = [&](int x, int y) {
        if (y >= py0 + layout.notch_cells) {
            return false;
        }
        return (x >= feed_x0 - layout.gap_cells && x < feed_x0) ||
               (x >= feed_x1 && x < feed_x1 + layout.gap_cells);
    };
    for (int row = 0; row < kPixelRows; ++row) {
        for (int col = 0; col < kPixelCols; ++col) {
            if (!pixels.at(row, col)) {
                continue;
            }
            const CellRect r = pixel_to_cells(row, col, cfg);
            for (int y = r.y_begin; y < r.y_end; ++y) {
                for (int x = r.x_begin; x < r.x_end; ++x) {
                    if (!in_gap(x, y)) {
                        g.pec.set_z_face(x, y, sub);
                    }
                }
            }
        }
    }

    PortDescriptor& port = layout.port;
    port.strip_x_begin = feed_x0;
    port.strip_x_end = feed_x1;
    port.center_x = feed_x0 + layout.feed_cells / 2;
    port.source_y = pml + cfg.source_offset_cells;
    port.probe_y = pml + cfg.port_offset_cells;
    port.substrate_cells = sub;
    port.dz = dz;
    for (int k = 0; k < sub; ++k) {
        for (int i = feed_x0; i <= feed_x1; ++i) {
            port.source_cells.push_back({i, port.source_y, k});
        }
    }
    return layout;
}

SimulationGrid vacuum_grid(int nx, int ny, int nz, double cell, int upml_cells, double courant) {
    require(upml_cells >= 1, "upml_cells: must be >= 1");
    require(nx > 2 * upml_cells && ny > 2 * upml_cells && nz > 2 * upml_cells,
            "vacuum_grid: box smaller than its absorbing layers");
    SimulationGrid g;
    g.nx = nx;
    g.ny = ny;
    g.nz = nz;
    g.dx = g.dy = g.dz = cell;
    g.courant = courant;
    g.dt = cfl_timestep(cell, cell, cell, courant);
    g.upml_cells = upml_cells;
    g.substrate_cells = 0;
    g.eps.assign(static_cast<std::size_t>(nx) * ny * nz, constants::eps0);
    g.pec = PecMask(nx, ny, nz);
    g.upml[0] = grade_axis(nx, cell, upml_cells, true, true);
    g.upml[1] = grade_axis(ny, cell, upml_cells, true, true);
    g.upml[2] = grade_axis(nz, cell, upml_cells, true, true);
    return g;
}

void dump_pec(const SimulationGrid& grid, std::ostream& out) {
    for (int k = 0; k <= grid.nz; ++k) {
        for (int j = 0; j < grid.ny; ++j) {
            for (int i = 0; i < grid.nx; ++i) {
                if (grid.pec.z_face(i, j, k)) {
                    out << i << ' ' << j << ' ' << k << " z\n";
                }
            }
        }
    }
}

} // namespace pixpatch
