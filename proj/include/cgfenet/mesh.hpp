#pragma once

// Parametric left-ventricle-like shell meshes. A shell is a stack of L
// concentric icospheres joined by radial edges, anisotropically scaled, with
// endocardial / epicardial / interior node labels and geometric descriptors.

#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <numbers>
#include <utility>
#include <vector>

#include "cgfenet/common.hpp"

namespace cgfenet {

struct ShellParams {
  double inner_radius_mm = 20.0;    // unloaded endocardial radius R_i0
  double wall_thickness_mm = 10.0;  // unloaded wall thickness h0
  Vec3 scale{1.0, 1.0, 1.0};        // anisotropic scaling, dimensionless
  int subdivision = 2;              // icosphere refinement level
  int layers = 3;                   // radial layer count L
  std::uint64_t seed = 0;
};

struct GlobalDescriptors {
  double cavity_volume_ml = 0.0;  // V_LV
  double wall_mean_mm = 0.0;
  double wall_min_mm = 0.0;
  double wall_max_mm = 0.0;
};

enum NodeLabel : int { kEndo = 0, kEpi = 1, kInterior = 2 };

struct MeshGraph {
  Matd nodes;                                  // N x 3, mm
  std::vector<int> labels;                     // N, values in {0,1,2}
  std::vector<std::array<int, 2>> edges;       // directed, both orientations
  std::vector<int> layer_index;                // N, radial layer of each node
  std::vector<std::array<int, 3>> endo_faces;  // closed endocardial surface
  GlobalDescriptors descriptors;
  ShellParams gen_params;
  int nodes_per_layer = 0;

  int num_nodes() const { return static_cast<int>(nodes.rows()); }
};

/// Analytic cavity volume of the unloaded shell (the continuum reference V0,
/// slightly above the inscribed-polyhedron volume of the discrete mesh).
inline double reference_volume_ml(const ShellParams& p) {
  const double r = p.inner_radius_mm;
  return 4.0 / 3.0 * std::numbers::pi * r * r * r * p.scale.x() * p.scale.y() *
         p.scale.z() / 1000.0;
}

namespace detail {

struct Icosphere {
  std::vector<Vec3> verts;                 // unit vectors
  std::vector<std::array<int, 3>> faces;   // outward-oriented
};

inline Icosphere make_icosphere(int subdivision) {
  const double t = (1.0 + std::sqrt(5.0)) / 2.0;
  Icosphere ico;
  const double raw[12][3] = {{-1, t, 0}, {1, t, 0},  {-1, -t, 0}, {1, -t, 0},
                             {0, -1, t}, {0, 1, t},  {0, -1, -t}, {0, 1, -t},
                             {t, 0, -1}, {t, 0, 1},  {-t, 0, -1}, {-t, 0, 1}};
  for (const auto& v : raw)
    ico.verts.push_back(Vec3(v[0], v[1], v[2]).normalized());
  ico.faces = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
               {1, 5, 9},  {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
               {3, 9, 4},  {3, 4, 2},  {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
               {4, 9, 5},  {2, 4, 11}, {6, 2, 10},  {8, 6, 7},  {9, 8, 1}};

  for (int level = 0; level < subdivision; ++level) {
    std::map<std::pair<int, int>, int> midpoint;
    auto mid = [&](int a, int b) {
      const auto key = std::minmax(a, b);
      auto it = midpoint.find(key);
      if (it != midpoint.end()) return it->second;
      ico.verts.push_back((ico.verts[a] + ico.verts[b]).normalized());
      const int idx = static_cast<int>(ico.verts.size()) - 1;
      midpoint.emplace(key, idx);
      return idx;
    };
    std::vector<std::array<int, 3>> refined;
    refined.reserve(ico.faces.size() * 4);
    for (const auto& [a, b, c] : ico.faces) {
      const int ab = mid(a, b), bc = mid(b, c), ca = mid(c, a);
      refined.push_back({a, ab, ca});
      refined.push_back({b, bc, ab});
      refined.push_back({c, ca, bc});
      refined.push_back({ab, bc, ca});
    }
    ico.faces = std::move(refined);
  }
  return ico;
}

inline std::vector<std::array<int, 2>> icosphere_edges(const Icosphere& ico) {
  std::map<std::pair<int, int>, bool> seen;
  std::vector<std::array<int, 2>> edges;
  for (const auto& [a, b, c] : ico.faces) {
    for (const auto& [u, v] :
         {std::pair{a, b}, std::pair{b, c}, std::pair{c, a}}) {
      const auto key = std::minmax(u, v);
      if (!seen.emplace(key, true).second) continue;
      edges.push_back({key.first, key.second});
      edges.push_back({key.second, key.first});
    }
  }
  return edges;
}

}  // namespace detail

/// Volume enclosed by the endocardial surface, via the divergence theorem,
/// in millilitres. Optionally evaluated on override coordinates sharing the
/// mesh's node ordering.
inline double cavity_volume(const MeshGraph& mesh, const Matd& coords) {
  check(!mesh.endo_faces.empty(),
        "cavity_volume: mesh carries no endocardial surface triangulation");
  check(coords.rows() == mesh.nodes.rows() && coords.cols() == 3,
        "cavity_volume: coordinate array shape mismatch");
  double six_v = 0.0;
  for (const auto& [a, b, c] : mesh.endo_faces) {
    const Vec3 p1 = coords.row(a), p2 = coords.row(b), p3 = coords.row(c);
    six_v += p1.dot(p2.cross(p3));
  }
  const double volume_mm3 = std::abs(six_v) / 6.0;
  check(volume_mm3 > 1e-6,
        "cavity_volume: endocardial surface is degenerate or open");
  return volume_mm3 / 1000.0;
}

inline double cavity_volume(const MeshGraph& mesh) {
  return cavity_volume(mesh, mesh.nodes);
}

struct WallThickness {
  double mean_mm = 0.0;
  double min_mm = 0.0;
  double max_mm = 0.0;
};

/// Per endocardial node, the minimum Euclidean distance to any epicardial
/// node; returns mean/min/max over endocardial nodes.
inline WallThickness wall_thickness_stats(const MeshGraph& mesh,
                                          const Matd& coords) {
  check(coords.rows() == mesh.nodes.rows() && coords.cols() == 3,
        "wall_thickness_stats: coordinate array shape mismatch");
  std::vector<int> endo, epi;
  for (int i = 0; i < mesh.num_nodes(); ++i) {
    if (mesh.labels[static_cast<std::size_t>(i)] == kEndo) endo.push_back(i);
    if (mesh.labels[static_cast<std::size_t>(i)] == kEpi) epi.push_back(i);
  }
  check(!endo.empty() && !epi.empty(),
        "wall_thickness_stats: mesh is missing endo or epi label class");

  Matd epi_pts(static_cast<Eigen::Index>(epi.size()), 3);
  for (std::size_t r = 0; r < epi.size(); ++r)
    epi_pts.row(static_cast<Eigen::Index>(r)) = coords.row(epi[r]);

  WallThickness w;
  w.min_mm = std::numeric_limits<double>::infinity();
  double sum = 0.0;
  for (const int i : endo) {
    const double d =
        std::sqrt((epi_pts.rowwise() - coords.row(i)).rowwise().squaredNorm().minCoeff());
    sum += d;
    w.min_mm = std::min(w.min_mm, d);
    w.max_mm = std::max(w.max_mm, d);
  }
  w.mean_mm = sum / static_cast<double>(endo.size());
  return w;
}

inline WallThickness wall_thickness_stats(const MeshGraph& mesh) {
  return wall_thickness_stats(mesh, mesh.nodes);
}

inline GlobalDescriptors compute_descriptors(const MeshGraph& mesh,
                                             const Matd& coords) {
  GlobalDescriptors d;
  d.cavity_volume_ml = cavity_volume(mesh, coords);
  const WallThickness w = wall_thickness_stats(mesh, coords);
  d.wall_mean_mm = w.mean_mm;
  d.wall_min_mm = w.min_mm;
  d.wall_max_mm = w.max_mm;
  return d;
}

/// Layered shell generator. L icospheres at evenly spaced sphere-frame radii
/// from R_i0 to R_i0 + h0, component-wise scaled; within-layer icosphere edges
/// plus radial edges joining node k of adjacent layers.
inline MeshGraph generate_shell(const ShellParams& params) {
  check(params.subdivision >= 1 && params.subdivision <= 4,
        "generate_shell: subdivision must be in {1,2,3,4}");
  check(params.layers >= 3, "generate_shell: layer count must be >= 3");
  check(params.inner_radius_mm > 0.0 && params.wall_thickness_mm > 0.0,
        "generate_shell: radius and thickness must be positive");
  for (int d = 0; d < 3; ++d)
    check(params.scale[d] >= 0.5 && params.scale[d] <= 2.0,
          "generate_shell: scale components must lie in [0.5, 2.0]");

  const detail::Icosphere ico = detail::make_icosphere(params.subdivision);
  const int per_layer = static_cast<int>(ico.verts.size());
  const int L = params.layers;
  const int n = per_layer * L;

  MeshGraph mesh;
  mesh.gen_params = params;
  mesh.nodes_per_layer = per_layer;
  mesh.nodes.resize(n, 3);
  mesh.labels.resize(static_cast<std::size_t>(n));
  mesh.layer_index.resize(static_cast<std::size_t>(n));

  for (int j = 0; j < L; ++j) {
    const double radius =
        params.inner_radius_mm +
        params.wall_thickness_mm * static_cast<double>(j) / (L - 1);
    for (int k = 0; k < per_layer; ++k) {
      const int idx = j * per_layer + k;
      const Vec3 p = ico.verts[static_cast<std::size_t>(k)] * radius;
      mesh.nodes.row(idx) = p.cwiseProduct(params.scale);
      mesh.layer_index[static_cast<std::size_t>(idx)] = j;
      mesh.labels[static_cast<std::size_t>(idx)] =
          j == 0 ? kEndo : (j == L - 1 ? kEpi : kInterior);
    }
  }

  const auto layer_edges = detail::icosphere_edges(ico);
  for (int j = 0; j < L; ++j)
    for (const auto& [u, v] : layer_edges)
      mesh.edges.push_back({j * per_layer + u, j * per_layer + v});
  for (int j = 0; j + 1 < L; ++j)
    for (int k = 0; k < per_layer; ++k) {
      mesh.edges.push_back({j * per_layer + k, (j + 1) * per_layer + k});
      mesh.edges.push_back({(j + 1) * per_layer + k, j * per_layer + k});
    }

  mesh.endo_faces = ico.faces;  // layer 0 occupies node ids [0, per_layer)
  mesh.descriptors = compute_descriptors(mesh, mesh.nodes);
  return mesh;
}

/// Node feature rows (x, y, z, label, V_LV, W_mean, W_min, W_max); global
/// descriptors broadcast identically to every row.
inline Matd node_features(const MeshGraph& mesh, const Matd& coords,
                          const GlobalDescriptors& desc) {
  const int n = mesh.num_nodes();
  Matd feat(n, 8);
  for (int i = 0; i < n; ++i) {
    feat(i, 0) = coords(i, 0);
    feat(i, 1) = coords(i, 1);
    feat(i, 2) = coords(i, 2);
    feat(i, 3) = static_cast<double>(mesh.labels[static_cast<std::size_t>(i)]);
    feat(i, 4) = desc.cavity_volume_ml;
    feat(i, 5) = desc.wall_mean_mm;
    feat(i, 6) = desc.wall_min_mm;
    feat(i, 7) = desc.wall_max_mm;
  }
  return feat;
}

inline Matd node_features(const MeshGraph& mesh) {
  return node_features(mesh, mesh.nodes, mesh.descriptors);
}

}  // namespace cgfenet
