#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <set>

#include "cgfenet/oracle.hpp"

using namespace cgfenet;

namespace {

ShellParams sphere20() {
  ShellParams p;
  p.inner_radius_mm = 20.0;
  p.wall_thickness_mm = 10.0;
  p.subdivision = 2;
  p.layers = 3;
  return p;
}

}  // namespace

TEST_CASE("activation waveform") {
  const OracleParams p;
  CHECK(activation(0.0, p) == 0.0);
  CHECK(activation(p.systole_ms / 2.0, p) == Catch::Approx(1.0).margin(1e-12));
  CHECK(activation(p.systole_ms / 4.0, p) == Catch::Approx(0.5).margin(1e-12));
  CHECK(activation(p.systole_ms, p) == 0.0);           // diastole begins
  CHECK(activation(p.systole_ms - 1e-6, p) < 1e-9);    // continuous at t_sys
  CHECK(activation(p.cycle_ms - 1e-9, p) == 0.0);      // continuous at wrap
  CHECK_THROWS_AS(activation(-1.0, p), Error);
  CHECK_THROWS_AS(activation(p.cycle_ms, p), Error);
}

TEST_CASE("pressure law reference values") {
  const OracleParams p;
  const double v0 = 33.51;
  CHECK(pressure(v0, 0.0, v0, p) == 0.0);
  // passive branch at 1.6 V0: 0.25 (e^3.6 - 1)
  CHECK(pressure(1.6 * v0, 0.0, v0, p) ==
        Catch::Approx(8.899558610919494).epsilon(1e-12));
  // active contribution at peak activation, V = 100 mL: E_act (V - V_d) = 114
  const double passive = pressure(100.0, 0.0, v0, p);
  CHECK(pressure(100.0, p.systole_ms / 2.0, v0, p) ==
        Catch::Approx(passive + 114.0).epsilon(1e-12));
  CHECK_THROWS_AS(pressure(-1.0, 0.0, v0, p), Error);
}

TEST_CASE("pressure strictly increasing in volume") {
  const OracleParams p;
  const double v0 = 40.0;
  for (const double t : {0.0, 120.0, 290.0, 500.0}) {
    double prev = -1e300;
    for (int i = 0; i <= 50; ++i) {
      const double v = v0 * (1.05 + 0.85 * i / 50.0);
      const double pv = pressure(v, t, v0, p);
      CHECK(pv > prev);
      prev = pv;
    }
  }
}

TEST_CASE("inflate identity at the reference volume") {
  const MeshGraph mesh = generate_shell(sphere20());
  const double v0 = reference_volume_ml(mesh.gen_params);
  const Matd out = inflate(mesh, v0);
  CHECK((out - mesh.nodes).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("inflate endocardial radius at twice the reference volume") {
  const MeshGraph mesh = generate_shell(sphere20());
  const double v0 = reference_volume_ml(mesh.gen_params);
  const Matd out = inflate(mesh, 2.0 * v0);
  // node at sphere-frame radius 20 maps to 20 * 2^(1/3)
  CHECK(out.row(0).norm() ==
        Catch::Approx(20.0 * std::cbrt(2.0)).epsilon(1e-12));
}

TEST_CASE("inflated cavity volume matches the target within mesh error") {
  // The inflated endocardial vertices land exactly on the target-volume
  // ellipsoid, so the measured discrete volume equals the target times the
  // mesh's inscribed-polyhedron ratio; ~3.4% low at subdivision 2, ~0.9% at 3.
  for (const int sub : {2, 3}) {
    ShellParams p = sphere20();
    p.subdivision = sub;
    p.scale = Vec3(1.1, 0.95, 1.0);
    const MeshGraph mesh = generate_shell(p);
    const double v0 = reference_volume_ml(p);
    const double ratio = cavity_volume(mesh) / v0;
    for (const double f : {1.1, 1.5, 1.9}) {
      const double target = f * v0;
      const double measured = cavity_volume(mesh, inflate(mesh, target));
      CHECK(measured == Catch::Approx(target * ratio).epsilon(1e-9));
      CHECK(std::abs(measured - target) / target < (sub == 2 ? 0.04 : 0.02));
    }
  }
}

TEST_CASE("unload_exact inverts inflate") {
  const MeshGraph mesh = generate_shell(sphere20());
  const double v0 = reference_volume_ml(mesh.gen_params);
  const Matd loaded = inflate(mesh, 1.7 * v0);
  const Matd unloaded = unload_exact(loaded, mesh);
  CHECK((unloaded - inflate(mesh, v0)).cwiseAbs().maxCoeff() == 0.0);
  CHECK((unloaded - mesh.nodes).cwiseAbs().maxCoeff() < 1e-9);

  // identity when already unloaded
  const Matd same = unload_exact(mesh.nodes, mesh);
  CHECK((same - mesh.nodes).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("inflation map has unit Jacobian determinant in the wall") {
  ShellParams p = sphere20();
  p.scale = Vec3(1.05, 0.9, 1.1);
  const double v0 = reference_volume_ml(p);
  const double v_target = 1.6 * v0;
  Rng rng(7);
  const double h = 1e-3;
  for (int s = 0; s < 100; ++s) {
    const double radius = uniform(rng, p.inner_radius_mm + 0.5,
                                  p.inner_radius_mm + p.wall_thickness_mm - 0.5);
    Vec3 dir(normal(rng), normal(rng), normal(rng));
    dir.normalize();
    const Vec3 x = (dir * radius).cwiseProduct(p.scale);
    Eigen::Matrix3d jac;
    for (int d = 0; d < 3; ++d) {
      Vec3 hi = x, lo = x;
      hi[d] += h;
      lo[d] -= h;
      jac.col(d) = (inflate_point(hi, p, v_target) -
                    inflate_point(lo, p, v_target)) /
                   (2.0 * h);
    }
    CHECK(std::abs(jac.determinant() - 1.0) < 1e-5);
  }
}

TEST_CASE("dataset generation: grid product, split, determinism") {
  const OracleParams op;
  const Dataset ds = generate_dataset(16, 4, 6, 42, op);
  CHECK(ds.sample_count() == 16u * 4u * 6u);
  CHECK(ds.split_indices("train").size() == 13);
  CHECK(ds.split_indices("test").size() == 3);

  // every mesh has exactly one split; samples inherit it mesh-level
  for (const auto& m : ds.meshes)
    CHECK((m.split == "train" || m.split == "test"));

  // v grid convention
  for (const auto& m : ds.meshes) {
    const double v0 = reference_volume_ml(m.mesh.gen_params);
    CHECK(m.v_grid.front() == Catch::Approx(1.05 * v0));
    CHECK(m.v_grid.back() == Catch::Approx(1.9 * v0));
  }

  const Dataset ds2 = generate_dataset(16, 4, 6, 42, op);
  for (std::size_t i = 0; i < ds.meshes.size(); ++i) {
    CHECK(ds.meshes[i].split == ds2.meshes[i].split);
    CHECK((ds.meshes[i].p_star - ds2.meshes[i].p_star).cwiseAbs().maxCoeff() ==
          0.0f);
    CHECK((ds.meshes[i].mesh.nodes - ds2.meshes[i].mesh.nodes)
              .cwiseAbs()
              .maxCoeff() == 0.0);
  }

  const Dataset other = generate_dataset(16, 4, 6, 43, op);
  CHECK((other.meshes[0].mesh.nodes - ds.meshes[0].mesh.nodes)
            .cwiseAbs()
            .maxCoeff() > 0.0);

  CHECK_THROWS_AS(generate_dataset(3, 4, 6, 1, op), Error);
}

TEST_CASE("sample view is consistent with stored arrays") {
  const OracleParams op;
  const Dataset ds = generate_dataset(6, 3, 4, 5, op);
  const MechSample s = ds.sample(2, 1, 3);
  CHECK(s.mesh_id == ds.meshes[2].id);
  CHECK(s.v_target_ml == ds.meshes[2].v_grid[1]);
  CHECK(s.t_ms == ds.t_grid[3]);
  CHECK(s.p_star_mmhg == ds.meshes[2].p_star(1, 3));
  CHECK(s.x_load_star == &ds.meshes[2].x_load_star[1]);
  const double v0 = reference_volume_ml(ds.meshes[2].mesh.gen_params);
  CHECK(static_cast<double>(s.p_star_mmhg) ==
        Catch::Approx(pressure(s.v_target_ml, s.t_ms, v0, op)).epsilon(1e-6));
}
