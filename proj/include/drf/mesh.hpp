#pragma once

#include <Eigen/Dense>

#include <array>
#include <functional>
#include <string>
#include <vector>

#include "drf/field.hpp"
#include "drf/tensor.hpp"

namespace drf {

/// Density samples at cell centers of an axis-aligned grid.
struct VoxelGrid {
    std::array<int, 3> resolution{64, 64, 64};
    Eigen::Vector3d bounds_min{-1, -1, -1};
    Eigen::Vector3d bounds_max{1, 1, 1};
    std::vector<double> values;  // index (ix*ny + iy)*nz + iz

    void validate() const;
    std::size_t cell_count() const {
        return static_cast<std::size_t>(resolution[0]) * resolution[1] * resolution[2];
    }
    Eigen::Vector3d cell_center(int ix, int iy, int iz) const;
    double& at(int ix, int iy, int iz);
    double at(int ix, int iy, int iz) const;
    double voxel_diagonal() const;

    /// Fills values from a scalar field, e.g. a closed-form oracle.
    void fill(const std::function<double(const Eigen::Vector3d&)>& f);
};

struct Mesh {
    std::vector<Eigen::Vector3d> vertices;
    std::vector<std::array<int, 3>> faces;
    std::vector<Eigen::Vector3d> normals;  // unit, outward (density descent)
    std::vector<Eigen::Vector3d> colors;   // rgb in [0,1]

    bool empty() const { return vertices.empty(); }
};

/// Evaluates the field's density on every cell center (chunked, view
/// direction fixed; density ignores it in the disentangled variant).
VoxelGrid sample_grid(const FieldParams& params, const FieldConfig& cfg, const Tensor& z_s,
                      const Tensor& z_t, const std::array<int, 3>& resolution,
                      const Eigen::Vector3d& bounds_min, const Eigen::Vector3d& bounds_max,
                      std::size_t chunk = 4096);

/// Standard marching cubes with edge-interpolated vertices welded across
/// cubes. Faces are oriented outward (against the density gradient); vertex
/// normals are the normalized negative gradient. A grid that never crosses
/// iso yields an empty mesh.
Mesh marching_cubes(const VoxelGrid& grid, double iso);

/// Otsu threshold over the grid's value histogram; default iso for learned
/// fields where the density scale is unknown.
double otsu_iso(const VoxelGrid& grid);

/// Batched density/color query: positions and directions {N,3} in, (sigma
/// {N,1}, rgb {N,3}) out. Lets the coloring pass run against either a learned
/// field or a closed-form one.
using FieldSampleFn =
    std::function<std::pair<Tensor, Tensor>(const Tensor& x, const Tensor& d)>;

/// Colors each vertex by compositing one ray cast from outside the surface
/// along the inward normal (offset two voxel diagonals). Vertices the ray
/// passes through nearly unoccluded get the background color.
Mesh color_vertices(Mesh mesh, const FieldSampleFn& sample, double voxel_diagonal,
                    const Eigen::Vector3d& background = Eigen::Vector3d::Zero(),
                    int n_samples = 32);
Mesh color_vertices(Mesh mesh, const FieldParams& params, const FieldConfig& cfg,
                    const Tensor& z_s, const Tensor& z_t, double voxel_diagonal,
                    const Eigen::Vector3d& background = Eigen::Vector3d::Zero(),
                    int n_samples = 32);

/// ASCII PLY with 8-bit per-vertex color.
void write_ply(const std::string& path, const Mesh& mesh);
/// OBJ, geometry only.
void write_obj(const std::string& path, const Mesh& mesh);

}  // namespace drf
