#include "drf/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <unordered_map>

#include "drf/image.hpp"
#include "drf/render.hpp"

namespace drf {

namespace {
#include "detail/mc_tables.inc"
}  // namespace

void VoxelGrid::validate() const {
    for (int r : resolution)
        if (r < 2) throw Error("mesh: grid resolution must be >= 2 per axis");
    for (int i = 0; i < 3; ++i)
        if (!(bounds_min[i] < bounds_max[i])) throw Error("mesh: grid bounds min must be < max");
    if (!values.empty() && values.size() != cell_count())
        throw Error("mesh: grid value count does not match resolution");
}

Eigen::Vector3d VoxelGrid::cell_center(int ix, int iy, int iz) const {
    Eigen::Vector3d cell =
        (bounds_max - bounds_min).cwiseQuotient(Eigen::Vector3d(
            resolution[0], resolution[1], resolution[2]));
    return bounds_min + Eigen::Vector3d((ix + 0.5) * cell.x(), (iy + 0.5) * cell.y(),
                                        (iz + 0.5) * cell.z());
}

double& VoxelGrid::at(int ix, int iy, int iz) {
    return values[(static_cast<std::size_t>(ix) * resolution[1] + iy) * resolution[2] + iz];
}

double VoxelGrid::at(int ix, int iy, int iz) const {
    return values[(static_cast<std::size_t>(ix) * resolution[1] + iy) * resolution[2] + iz];
}

double VoxelGrid::voxel_diagonal() const {
    Eigen::Vector3d cell =
        (bounds_max - bounds_min).cwiseQuotient(Eigen::Vector3d(
            resolution[0], resolution[1], resolution[2]));
    return cell.norm();
}

void VoxelGrid::fill(const std::function<double(const Eigen::Vector3d&)>& f) {
    values.resize(cell_count());
    for (int ix = 0; ix < resolution[0]; ++ix)
        for (int iy = 0; iy < resolution[1]; ++iy)
            for (int iz = 0; iz < resolution[2]; ++iz) at(ix, iy, iz) = f(cell_center(ix, iy, iz));
}

VoxelGrid sample_grid(const FieldParams& params, const FieldConfig& cfg, const Tensor& z_s,
                      const Tensor& z_t, const std::array<int, 3>& resolution,
                      const Eigen::Vector3d& bounds_min, const Eigen::Vector3d& bounds_max,
                      std::size_t chunk) {
    VoxelGrid grid;
    grid.resolution = resolution;
    grid.bounds_min = bounds_min;
    grid.bounds_max = bounds_max;
    grid.validate();
    grid.values.resize(grid.cell_count());

    std::vector<Eigen::Vector3d> centers;
    centers.reserve(grid.cell_count());
    for (int ix = 0; ix < resolution[0]; ++ix)
        for (int iy = 0; iy < resolution[1]; ++iy)
            for (int iz = 0; iz < resolution[2]; ++iz)
                centers.push_back(grid.cell_center(ix, iy, iz));

    for (std::size_t start = 0; start < centers.size(); start += chunk) {
        const std::size_t n = std::min(chunk, centers.size() - start);
        std::vector<double> pos(n * 3), dir(n * 3, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            for (int k = 0; k < 3; ++k) pos[i * 3 + k] = centers[start + i][k];
            dir[i * 3 + 2] = -1.0;  // density is direction-independent (codenerf)
        }
        FieldOutput fo = eval_field(params, cfg, z_s, z_t, Tensor::constant({n, 3}, std::move(pos)),
                                    Tensor::constant({n, 3}, std::move(dir)));
        for (std::size_t i = 0; i < n; ++i) grid.values[start + i] = fo.sigma.value()[i];
    }
    return grid;
}

double otsu_iso(const VoxelGrid& grid) {
    grid.validate();
    const auto [mn, mx] = std::minmax_element(grid.values.begin(), grid.values.end());
    if (*mx - *mn <= 0) return *mn;
    constexpr int kBins = 256;
    std::vector<double> hist(kBins, 0.0);
    for (double v : grid.values) {
        int b = static_cast<int>((v - *mn) / (*mx - *mn) * (kBins - 1));
        hist[std::clamp(b, 0, kBins - 1)] += 1.0;
    }
    const double total = static_cast<double>(grid.values.size());
    double sum_all = 0;
    for (int i = 0; i < kBins; ++i) sum_all += i * hist[i];
    double w0 = 0, sum0 = 0, best = -1;
    int best_bin = 0;
    for (int i = 0; i < kBins; ++i) {
        w0 += hist[i];
        if (w0 == 0) continue;
        const double w1 = total - w0;
        if (w1 == 0) break;
        sum0 += i * hist[i];
        const double mu0 = sum0 / w0, mu1 = (sum_all - sum0) / w1;
        const double between = w0 * w1 * (mu0 - mu1) * (mu0 - mu1);
        if (between > best) {
            best = between;
            best_bin = i;
        }
    }
    return *mn + (best_bin + 0.5) / kBins * (*mx - *mn);
}

namespace {

constexpr int kCorner[8][3] = {{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0},
                               {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1}};
constexpr int kEdgeEnds[12][2] = {{0, 1}, {1, 2}, {2, 3}, {3, 0}, {4, 5}, {5, 6},
                                  {6, 7}, {7, 4}, {0, 4}, {1, 5}, {2, 6}, {3, 7}};

// Trilinear interpolation of grid values at an arbitrary point (clamped to
// the cell-center lattice).
double trilinear(const VoxelGrid& g, const Eigen::Vector3d& p) {
    Eigen::Vector3d cell = (g.bounds_max - g.bounds_min)
                               .cwiseQuotient(Eigen::Vector3d(g.resolution[0], g.resolution[1],
                                                              g.resolution[2]));
    double u[3];
    int i0[3];
    for (int k = 0; k < 3; ++k) {
        double x = (p[k] - g.bounds_min[k]) / cell[k] - 0.5;
        x = std::clamp(x, 0.0, static_cast<double>(g.resolution[k] - 1));
        i0[k] = std::min(static_cast<int>(x), g.resolution[k] - 2);
        u[k] = x - i0[k];
    }
    double acc = 0.0;
    for (int dx = 0; dx < 2; ++dx)
        for (int dy = 0; dy < 2; ++dy)
            for (int dz = 0; dz < 2; ++dz) {
                const double w = (dx ? u[0] : 1 - u[0]) * (dy ? u[1] : 1 - u[1]) *
                                 (dz ? u[2] : 1 - u[2]);
                acc += w * g.at(i0[0] + dx, i0[1] + dy, i0[2] + dz);
            }
    return acc;
}

Eigen::Vector3d field_gradient(const VoxelGrid& g, const Eigen::Vector3d& p) {
    Eigen::Vector3d cell = (g.bounds_max - g.bounds_min)
                               .cwiseQuotient(Eigen::Vector3d(g.resolution[0], g.resolution[1],
                                                              g.resolution[2]));
    Eigen::Vector3d grad;
    for (int k = 0; k < 3; ++k) {
        Eigen::Vector3d h = Eigen::Vector3d::Zero();
        h[k] = 0.5 * cell[k];
        grad[k] = (trilinear(g, p + h) - trilinear(g, p - h)) / (2.0 * h[k]);
    }
    return grad;
}

std::int64_t edge_key(int x, int y, int z, int axis) {
    return (((static_cast<std::int64_t>(x) * 2048 + y) * 2048 + z) * 4) + axis;
}

}  // namespace

Mesh marching_cubes(const VoxelGrid& grid, double iso) {
    grid.validate();
    if (grid.values.empty()) throw Error("mesh: marching cubes on an unfilled grid");
    Mesh mesh;
    std::unordered_map<std::int64_t, int> edge_vertices;

    const int nx = grid.resolution[0], ny = grid.resolution[1], nz = grid.resolution[2];
    for (int ix = 0; ix + 1 < nx; ++ix)
        for (int iy = 0; iy + 1 < ny; ++iy)
            for (int iz = 0; iz + 1 < nz; ++iz) {
                double val[8];
                Eigen::Vector3d pos[8];
                int cube = 0;
                for (int c = 0; c < 8; ++c) {
                    const int gx = ix + kCorner[c][0], gy = iy + kCorner[c][1],
                              gz = iz + kCorner[c][2];
                    val[c] = grid.at(gx, gy, gz);
                    pos[c] = grid.cell_center(gx, gy, gz);
                    if (val[c] < iso) cube |= 1 << c;
                }
                const int edges = kEdgeTable[cube];
                if (edges == 0) continue;

                int edge_index[12];
                for (int e = 0; e < 12; ++e) {
                    if (!(edges & (1 << e))) continue;
                    const int a = kEdgeEnds[e][0], b = kEdgeEnds[e][1];
                    const int ax = ix + kCorner[a][0], ay = iy + kCorner[a][1],
                              az = iz + kCorner[a][2];
                    const int bx = ix + kCorner[b][0], by = iy + kCorner[b][1],
                              bz = iz + kCorner[b][2];
                    const int axis = (ax != bx) ? 0 : (ay != by) ? 1 : 2;
                    const std::int64_t key =
                        edge_key(std::min(ax, bx), std::min(ay, by), std::min(az, bz), axis);
                    auto it = edge_vertices.find(key);
                    if (it == edge_vertices.end()) {
                        const double denom = val[b] - val[a];
                        const double t =
                            std::abs(denom) < 1e-12 ? 0.5 : std::clamp((iso - val[a]) / denom, 0.0, 1.0);
                        mesh.vertices.push_back(pos[a] + t * (pos[b] - pos[a]));
                        it = edge_vertices.emplace(key, static_cast<int>(mesh.vertices.size()) - 1)
                                 .first;
                    }
                    edge_index[e] = it->second;
                }

                for (int t = 0; kTriTable[cube][t] != -1; t += 3) {
                    std::array<int, 3> f{edge_index[kTriTable[cube][t]],
                                         edge_index[kTriTable[cube][t + 1]],
                                         edge_index[kTriTable[cube][t + 2]]};
                    if (f[0] == f[1] || f[1] == f[2] || f[0] == f[2]) continue;  // degenerate
                    mesh.faces.push_back(f);
                }
            }

    // outward orientation: faces agree with the descent direction of the
    // density (outside = lower density)
    for (auto& f : mesh.faces) {
        const Eigen::Vector3d centroid =
            (mesh.vertices[f[0]] + mesh.vertices[f[1]] + mesh.vertices[f[2]]) / 3.0;
        const Eigen::Vector3d outward = -field_gradient(grid, centroid);
        const Eigen::Vector3d n = (mesh.vertices[f[1]] - mesh.vertices[f[0]])
                                      .cross(mesh.vertices[f[2]] - mesh.vertices[f[0]]);
        if (n.dot(outward) < 0) std::swap(f[1], f[2]);
    }

    mesh.normals.resize(mesh.vertices.size());
    for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
        Eigen::Vector3d g = -field_gradient(grid, mesh.vertices[i]);
        mesh.normals[i] = g.norm() > 1e-12 ? g.normalized() : Eigen::Vector3d(0, 0, 1);
    }
    return mesh;
}

Mesh color_vertices(Mesh mesh, const FieldParams& params, const FieldConfig& cfg,
                    const Tensor& z_s, const Tensor& z_t, double voxel_diagonal,
                    const Eigen::Vector3d& background, int n_samples) {
    return color_vertices(
        std::move(mesh),
        [&](const Tensor& x, const Tensor& d) {
            FieldOutput fo = eval_field(params, cfg, z_s, z_t, x, d);
            return std::make_pair(fo.sigma, fo.rgb);
        },
        voxel_diagonal, background, n_samples);
}

Mesh color_vertices(Mesh mesh, const FieldSampleFn& sample, double voxel_diagonal,
                    const Eigen::Vector3d& background, int n_samples) {
    if (mesh.empty()) return mesh;
    if (mesh.normals.size() != mesh.vertices.size())
        throw Error("mesh: color_vertices requires vertex normals");
    mesh.colors.resize(mesh.vertices.size());

    const double offset = 2.0 * voxel_diagonal;
    RenderConfig rcfg;
    rcfg.n_samples = n_samples;
    rcfg.near = 0.05 * voxel_diagonal;
    rcfg.far = 4.0 * offset;  // reaches well past the surface so opaque
                              // vertices saturate

    constexpr std::size_t kChunk = 512;
    const std::size_t s = static_cast<std::size_t>(n_samples);
    for (std::size_t start = 0; start < mesh.vertices.size(); start += kChunk) {
        const std::size_t n = std::min(kChunk, mesh.vertices.size() - start);
        Tensor ts = sample_ts(n, rcfg, nullptr);
        std::vector<double> pos(n * s * 3), dir(n * s * 3);
        for (std::size_t i = 0; i < n; ++i) {
            const Eigen::Vector3d origin = mesh.vertices[start + i] + offset * mesh.normals[start + i];
            const Eigen::Vector3d d = -mesh.normals[start + i];
            for (std::size_t j = 0; j < s; ++j) {
                const Eigen::Vector3d x = origin + ts(i, j) * d;
                for (int k = 0; k < 3; ++k) {
                    pos[((i * s + j) * 3) + k] = x[k];
                    dir[((i * s + j) * 3) + k] = d[k];
                }
            }
        }
        auto [sigma, rgb] = sample(Tensor::constant({n * s, 3}, std::move(pos)),
                                   Tensor::constant({n * s, 3}, std::move(dir)));
        RenderResult res = composite(reshape(sigma, {n, s}), rgb, ts, rcfg);
        for (std::size_t i = 0; i < n; ++i) {
            const double T = res.transmittance.value()[i];
            Eigen::Vector3d c(res.rgb(i, 0), res.rgb(i, 1), res.rgb(i, 2));
            c += T * background;  // unoccluded rays fall back to background
            mesh.colors[start + i] = c.cwiseMin(1.0).cwiseMax(0.0);
        }
    }
    return mesh;
}

void write_ply(const std::string& path, const Mesh& mesh) {
    std::ofstream os(path);
    if (!os) throw Error("mesh: cannot open " + path + " for writing");
    os << "ply\nformat ascii 1.0\n";
    os << "element vertex " << mesh.vertices.size() << "\n";
    os << "property double x\nproperty double y\nproperty double z\n";
    os << "property uchar red\nproperty uchar green\nproperty uchar blue\n";
    os << "element face " << mesh.faces.size() << "\n";
    os << "property list uchar int vertex_indices\nend_header\n";
    os.precision(9);
    for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
        const Eigen::Vector3d c =
            i < mesh.colors.size() ? mesh.colors[i] : Eigen::Vector3d(0.5, 0.5, 0.5);
        os << mesh.vertices[i].x() << " " << mesh.vertices[i].y() << " " << mesh.vertices[i].z()
           << " " << int(quantize8(c.x())) << " " << int(quantize8(c.y())) << " "
           << int(quantize8(c.z())) << "\n";
    }
    for (const auto& f : mesh.faces) os << "3 " << f[0] << " " << f[1] << " " << f[2] << "\n";
    if (!os) throw Error("mesh: write failed for " + path);
}

void write_obj(const std::string& path, const Mesh& mesh) {
    std::ofstream os(path);
    if (!os) throw Error("mesh: cannot open " + path + " for writing");
    os.precision(9);
    for (const auto& v : mesh.vertices) os << "v " << v.x() << " " << v.y() << " " << v.z() << "\n";
    for (const auto& f : mesh.faces)
        os << "f " << f[0] + 1 << " " << f[1] + 1 << " " << f[2] + 1 << "\n";
    if (!os) throw Error("mesh: write failed for " + path);
}

}  // namespace drf
