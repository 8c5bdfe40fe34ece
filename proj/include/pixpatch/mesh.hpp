#pragma once

#include <array>
#include <bitset>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace pixpatch {

inline constexpr int kPixelRows = 17;
inline constexpr int kPixelCols = 17;
inline constexpr int kPixelCount = kPixelRows * kPixelCols;

/// Physical dimensions of the inset-fed rectangular patch (all lengths in metres).
struct SeedDimensions {
    double patch_width = 0.0;      // W
    double patch_length = 0.0;     // L
    double feed_width = 0.0;       // W1
    double inset_gap = 0.0;        // g
    double inset_depth = 0.0;      // Y0
    double eps_r = 1.0;
    double substrate_height = 0.0; // h

    /// Throws ValidationError naming the first violated constraint.
    void validate() const;

    bool operator==(const SeedDimensions&) const = default;
};

/// Discretisation controls. Lengths in metres, everything else in cells.
struct MeshConfig {
    int cells_per_pixel_x = 2;
    int cells_per_pixel_y = 2;
    double dz = 0.76e-3 / 3.0;
    int air_margin_cells = 10;
    int upml_cells = 8;
    double courant = 0.99;
    // Feed line length between the source-side UPML interface and the patch edge.
    int feed_length_cells = 20;
    // Source plane and port reference plane, counted from the source-side UPML interface.
    int source_offset_cells = 3;
    int port_offset_cells = 10;

    void validate(const SeedDimensions& dims) const;

    bool operator==(const MeshConfig&) const = default;
};

/// 17x17 copper map, row-major. Row 0 is the patch edge nearest the feed.
class PixelMap {
  public:
    using Bits = std::bitset<kPixelCount>;

    PixelMap() = default;
    explicit PixelMap(const Bits& bits) : bits_(bits) {}

    static PixelMap all_ones() { return PixelMap(Bits().set()); }
    static PixelMap all_zeros() { return PixelMap(); }

    bool at(int row, int col) const;
    void set(int row, int col, bool value = true);

    const Bits& bits() const noexcept { return bits_; }
    std::size_t count() const noexcept { return bits_.count(); }

    bool operator==(const PixelMap&) const = default;

  private:
    Bits bits_;
};

struct Index3 {
    int i = 0;
    int j = 0;
    int k = 0;

    bool operator==(const Index3&) const = default;
};

/// Half-open rectangle of cells in the x-y plane.
struct CellRect {
    int x_begin = 0;
    int x_end = 0;
    int y_begin = 0;
    int y_end = 0;

    int area() const noexcept { return (x_end - x_begin) * (y_end - y_begin); }
    bool contains(int x, int y) const noexcept {
        return x >= x_begin && x < x_end && y >= y_begin && y < y_end;
    }
    bool operator==(const CellRect&) const = default;
};

/// Electric conductivity profile of the UPML along one axis, sampled at integer
/// nodes (size n+1) and at half-integer positions (size n). Zero outside the layer.
struct UpmlProfile {
    std::vector<double> sigma_node;
    std::vector<double> sigma_half;
};

/// Flags for z-normal cell faces treated as infinitely thin perfect conductors.
/// Face (i, j, k) spans [i, i+1] x [j, j+1] at height z = k.
class PecMask {
  public:
    PecMask() = default;
    PecMask(int nx, int ny, int nz)
        : nx_(nx), ny_(ny), nz_(nz), faces_(static_cast<std::size_t>(nx) * ny * (nz + 1), 0) {}

    bool z_face(int i, int j, int k) const { return faces_[index(i, j, k)] != 0; }
    void set_z_face(int i, int j, int k, bool value = true) { faces_[index(i, j, k)] = value ? 1 : 0; }

    std::size_t count() const;
    std::size_t count_layer(int k) const;

    int nx() const noexcept { return nx_; }
    int ny() const noexcept { return ny_; }
    int nz() const noexcept { return nz_; }

  private:
    std::size_t index(int i, int j, int k) const {
        return (static_cast<std::size_t>(k) * ny_ + j) * nx_ + i;
    }

    int nx_ = 0;
    int ny_ = 0;
    int nz_ = 0;
    std::vector<std::uint8_t> faces_;
};

/// Yee grid with materials and absorbing-layer profiles. Immutable after build_layout.
///
/// Cell (i, j, k) spans [i dx, (i+1) dx] x [j dy, (j+1) dy] x [k dz, (k+1) dz].
/// The bottom face z = 0 is the ground plane; the substrate fills cells
/// k < substrate_cells over the whole lateral extent. UPML occupies
/// upml_cells on the four lateral sides and the top.
struct SimulationGrid {
    int nx = 0;
    int ny = 0;
    int nz = 0;
    double dx = 0.0;
    double dy = 0.0;
    double dz = 0.0;
    double dt = 0.0;
    double courant = 0.0;
    int upml_cells = 0;
    int substrate_cells = 0;
    std::vector<double> eps;  // per cell, F/m
    PecMask pec;
    std::array<UpmlProfile, 3> upml;

    double eps_cell(int i, int j, int k) const {
        return eps[(static_cast<std::size_t>(k) * ny + j) * nx + i];
    }
};

/// Where the excitation is injected and where the port voltage is observed.
struct PortDescriptor {
    int strip_x_begin = 0;  // feed strip cells [begin, end) in x
    int strip_x_end = 0;
    int center_x = 0;       // node index of the strip centreline
    int source_y = 0;       // node plane of the soft source
    int probe_y = 0;        // node plane of the reference port
    int substrate_cells = 0;
    double dz = 0.0;
    std::vector<Index3> source_cells;  // Ez nodes driven by the source
};

enum class FeedMode {
    antenna,       // feed line stops at the patch and pixels are applied
    matched_line,  // feed line runs straight through to the far UPML
};

struct Layout {
    SimulationGrid grid;
    PortDescriptor port;
    CellRect patch_region;
    int feed_cells = 0;
    int gap_cells = 0;
    int notch_cells = 0;
};

/// Largest stable time step scaled by the Courant factor.
double cfl_timestep(double dx, double dy, double dz, double courant);

/// Cells covered by one sub-patch, in absolute grid coordinates.
CellRect pixel_to_cells(int row, int col, const MeshConfig& cfg);

Layout build_layout(const SeedDimensions& dims, const PixelMap& pixels, const MeshConfig& cfg,
                    FeedMode mode = FeedMode::antenna);

/// Cubic-cell vacuum box with UPML on all six faces and no conductors.
SimulationGrid vacuum_grid(int nx, int ny, int nz, double cell, int upml_cells, double courant = 0.99);

/// Voxel listing for debugging: one "x y z orientation" line per PEC face.
void dump_pec(const SimulationGrid& grid, std::ostream& out);

} // namespace pixpatch
