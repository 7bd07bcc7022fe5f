#include <catch2/catch_amalgamated.hpp>

#include <numbers>
#include <set>

#include "cgfenet/mesh.hpp"

using namespace cgfenet;

namespace {

ShellParams base_params() {
  ShellParams p;
  p.inner_radius_mm = 20.0;
  p.wall_thickness_mm = 10.0;
  p.scale = Vec3(1, 1, 1);
  p.subdivision = 2;
  p.layers = 3;
  return p;
}

}  // namespace

TEST_CASE("generate_shell node counts and labels") {
  const MeshGraph mesh = generate_shell(base_params());
  CHECK(mesh.num_nodes() == 3 * 162);  // icosphere: 10*4^s + 2 per layer
  CHECK(mesh.nodes_per_layer == 162);

  for (int i = 0; i < mesh.num_nodes(); ++i) {
    const int layer = mesh.layer_index[static_cast<std::size_t>(i)];
    const int label = mesh.labels[static_cast<std::size_t>(i)];
    if (layer == 0) CHECK(label == kEndo);
    else if (layer == 2) CHECK(label == kEpi);
    else CHECK(label == kInterior);
  }
}

TEST_CASE("generate_shell rejects bad parameters") {
  ShellParams p = base_params();
  p.subdivision = 5;
  CHECK_THROWS_AS(generate_shell(p), Error);
  p = base_params();
  p.subdivision = 0;
  CHECK_THROWS_AS(generate_shell(p), Error);
  p = base_params();
  p.layers = 2;
  CHECK_THROWS_AS(generate_shell(p), Error);
  p = base_params();
  p.scale = Vec3(0.3, 1, 1);
  CHECK_THROWS_AS(generate_shell(p), Error);
}

TEST_CASE("generate_shell is deterministic and edge-symmetric") {
  const MeshGraph a = generate_shell(base_params());
  const MeshGraph b = generate_shell(base_params());
  REQUIRE(a.nodes.rows() == b.nodes.rows());
  CHECK((a.nodes - b.nodes).cwiseAbs().maxCoeff() == 0.0);
  REQUIRE(a.edges.size() == b.edges.size());

  std::set<std::pair<int, int>> edge_set;
  for (const auto& [u, v] : a.edges) {
    CHECK(u >= 0);
    CHECK(u < a.num_nodes());
    CHECK(v >= 0);
    CHECK(v < a.num_nodes());
    CHECK(edge_set.emplace(u, v).second);  // no duplicate directed edges
  }
  for (const auto& [u, v] : a.edges)
    CHECK(edge_set.count({v, u}) == 1);
}

TEST_CASE("generate_shell connectivity") {
  const MeshGraph mesh = generate_shell(base_params());
  std::vector<std::vector<int>> adj(static_cast<std::size_t>(mesh.num_nodes()));
  for (const auto& [u, v] : mesh.edges)
    adj[static_cast<std::size_t>(u)].push_back(v);
  std::vector<bool> seen(static_cast<std::size_t>(mesh.num_nodes()), false);
  std::vector<int> stack{0};
  seen[0] = true;
  int visited = 0;
  while (!stack.empty()) {
    const int u = stack.back();
    stack.pop_back();
    ++visited;
    for (const int v : adj[static_cast<std::size_t>(u)])
      if (!seen[static_cast<std::size_t>(v)]) {
        seen[static_cast<std::size_t>(v)] = true;
        stack.push_back(v);
      }
  }
  CHECK(visited == mesh.num_nodes());
}

TEST_CASE("endocardial nodes equidistant from origin under unit scale") {
  const MeshGraph mesh = generate_shell(base_params());
  for (int i = 0; i < mesh.nodes_per_layer; ++i)
    CHECK(std::abs(mesh.nodes.row(i).norm() - 20.0) < 1e-9);
}

TEST_CASE("cavity volume approaches the analytic sphere from below") {
  const double analytic = 4.0 / 3.0 * std::numbers::pi * 8000.0 / 1000.0;
  double prev = 0.0;
  for (int sub = 1; sub <= 3; ++sub) {
    ShellParams p = base_params();
    p.subdivision = sub;
    const double v = cavity_volume(generate_shell(p));
    CHECK(v > prev);       // monotone refinement
    CHECK(v < analytic);   // inscribed polyhedron
    prev = v;
  }
  // subdivision 3, radius 20 mm
  ShellParams p = base_params();
  p.subdivision = 3;
  const double v = cavity_volume(generate_shell(p));
  CHECK(v > 33.0);
  CHECK(v < 33.51);
  CHECK(analytic == Catch::Approx(33.510321638).epsilon(1e-9));
}

TEST_CASE("cavity volume scales with the anisotropic determinant") {
  const MeshGraph unit = generate_shell(base_params());
  ShellParams p = base_params();
  p.scale = Vec3(1.1, 0.9, 1.05);
  const MeshGraph scaled = generate_shell(p);
  const double expect = cavity_volume(unit) * 1.1 * 0.9 * 1.05;
  CHECK(cavity_volume(scaled) == Catch::Approx(expect).epsilon(1e-12));
}

TEST_CASE("cavity volume grows strictly with inner radius") {
  double prev = 0.0;
  for (const double r : {18.0, 20.0, 22.0, 24.0, 26.0}) {
    ShellParams p = base_params();
    p.inner_radius_mm = r;
    const double v = cavity_volume(generate_shell(p));
    CHECK(v > prev);
    prev = v;
  }
}

TEST_CASE("degenerate endocardial surface is rejected") {
  const MeshGraph mesh = generate_shell(base_params());
  Matd flat = mesh.nodes;
  flat.col(2).setZero();
  CHECK_THROWS_WITH(cavity_volume(mesh, flat),
                    Catch::Matchers::ContainsSubstring("degenerate"));
}

TEST_CASE("wall thickness of a uniform spherical shell") {
  const MeshGraph mesh = generate_shell(base_params());
  const WallThickness w = wall_thickness_stats(mesh);
  CHECK(std::abs(w.mean_mm - 10.0) < 1e-9);
  CHECK(std::abs(w.min_mm - 10.0) < 1e-9);
  CHECK(std::abs(w.max_mm - 10.0) < 1e-9);
}

TEST_CASE("wall thickness under squashed scale matches brute force") {
  ShellParams p = base_params();
  p.scale = Vec3(1.0, 1.0, 0.8);
  const MeshGraph mesh = generate_shell(p);
  const WallThickness w = wall_thickness_stats(mesh);
  CHECK(w.min_mm < w.mean_mm);
  CHECK(w.mean_mm < w.max_mm);

  // independent nearest-neighbour recomputation over all node pairs
  double mn = 1e300, mx = 0.0, sum = 0.0;
  int n_endo = 0;
  for (int i = 0; i < mesh.num_nodes(); ++i) {
    if (mesh.labels[static_cast<std::size_t>(i)] != kEndo) continue;
    double best = 1e300;
    for (int j = 0; j < mesh.num_nodes(); ++j) {
      if (mesh.labels[static_cast<std::size_t>(j)] != kEpi) continue;
      best = std::min(best, (mesh.nodes.row(i) - mesh.nodes.row(j)).norm());
    }
    mn = std::min(mn, best);
    mx = std::max(mx, best);
    sum += best;
    ++n_endo;
  }
  CHECK(w.min_mm == Catch::Approx(mn).epsilon(1e-12));
  CHECK(w.max_mm == Catch::Approx(mx).epsilon(1e-12));
  CHECK(w.mean_mm == Catch::Approx(sum / n_endo).epsilon(1e-12));
}

TEST_CASE("wall thickness edge cases") {
  const MeshGraph mesh = generate_shell(base_params());

  // collapse epi layer onto endo: thickness becomes zero
  Matd collapsed = mesh.nodes;
  const int per = mesh.nodes_per_layer;
  for (int k = 0; k < per; ++k)
    collapsed.row(2 * per + k) = collapsed.row(k);
  const WallThickness w = wall_thickness_stats(mesh, collapsed);
  CHECK(w.mean_mm == 0.0);
  CHECK(w.min_mm == 0.0);
  CHECK(w.max_mm == 0.0);

  // missing label class
  MeshGraph broken = mesh;
  for (auto& l : broken.labels)
    if (l == kEpi) l = kInterior;
  CHECK_THROWS_WITH(wall_thickness_stats(broken),
                    Catch::Matchers::ContainsSubstring("missing"));
}

TEST_CASE("node features broadcast the descriptors") {
  const MeshGraph mesh = generate_shell(base_params());
  const Matd f = node_features(mesh);
  REQUIRE(f.cols() == 8);
  REQUIRE(f.rows() == mesh.num_nodes());
  for (Eigen::Index i = 0; i < f.rows(); ++i) {
    for (int d = 4; d < 8; ++d) CHECK(f(i, d) == f(0, d));
    const double label = f(i, 3);
    CHECK((label == 0.0 || label == 1.0 || label == 2.0));
  }
  CHECK(f(0, 4) == Catch::Approx(mesh.descriptors.cavity_volume_ml));
  CHECK(f(0, 0) == mesh.nodes(0, 0));
}
