#pragma once

// Synthetic ground-truth mechanics: incompressible shell inflation kinematics,
// an analytic pressure law with time-varying activation, exact unloading, and
// dataset generation with mesh-level train/test splits.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <string>
#include <vector>

#include "cgfenet/common.hpp"
#include "cgfenet/container.hpp"
#include "cgfenet/mesh.hpp"

namespace cgfenet {

struct OracleParams {
  double passive_scale_mmhg = 0.25;  // P_e
  double passive_exponent = 6.0;     // kappa
  double active_elastance = 1.2;     // E_act, mmHg/mL
  double dead_volume_ml = 5.0;       // V_d
  double systole_ms = 300.0;         // t_sys
  double cycle_ms = 800.0;           // t0
};

/// Activation waveform a(t) = sin^2(pi t / t_sys) for t < t_sys, else 0.
/// Continuous on [0, t0) and across the cycle wrap.
inline double activation(double t_ms, const OracleParams& p) {
  check(t_ms >= 0.0 && t_ms < p.cycle_ms,
        "activation: t outside [0, t0)");
  if (t_ms >= p.systole_ms) return 0.0;
  const double s = std::sin(std::numbers::pi * t_ms / p.systole_ms);
  return s * s;
}

/// Cavity pressure P(V,t) = P_e (exp(kappa (V-V0)/V0) - 1)
///                        + a(t) E_act max(V - V_d, 0), in mmHg.
inline double pressure(double v_ml, double t_ms, double v0_ml,
                       const OracleParams& p) {
  check(v_ml > 0.0 && v0_ml > 0.0, "pressure: volumes must be positive");
  const double passive =
      p.passive_scale_mmhg *
      (std::exp(p.passive_exponent * (v_ml - v0_ml) / v0_ml) - 1.0);
  const double active = activation(t_ms, p) * p.active_elastance *
                        std::max(v_ml - p.dead_volume_ml, 0.0);
  return passive + active;
}

/// The continuum inflation map at one material point (mm). Works in the
/// sphere frame (scale removed), maps radius R to
/// r = (R^3 - R_i0^3 + r_i^3)^(1/3) along the same ray, then rescales.
/// Volume-preserving in the wall: unit Jacobian determinant.
inline Vec3 inflate_point(const Vec3& x_mm, const ShellParams& g,
                          double v_target_ml) {
  check(v_target_ml > 0.0, "inflate: target volume must be positive");
  const double sprod = g.scale.x() * g.scale.y() * g.scale.z();
  const double v_hat_mm3 = v_target_ml * 1000.0 / sprod;
  const double ri3 = 3.0 * v_hat_mm3 / (4.0 * std::numbers::pi);
  const double R0_3 = std::pow(g.inner_radius_mm, 3);

  const Vec3 x_hat = x_mm.cwiseQuotient(g.scale);
  const double R = x_hat.norm();
  const double r3 = R * R * R - R0_3 + ri3;
  check(r3 > 0.0, "inflate: target volume too small for the innermost layer");
  const double r = std::cbrt(r3);
  return (x_hat * (r / R)).cwiseProduct(g.scale);
}

/// Incompressible inflation of a generated shell to the target cavity volume.
inline Matd inflate(const MeshGraph& mesh, double v_target_ml) {
  Matd out(mesh.nodes.rows(), 3);
  for (int i = 0; i < mesh.num_nodes(); ++i)
    out.row(i) =
        inflate_point(Vec3(mesh.nodes.row(i)), mesh.gen_params, v_target_ml);
  return out;
}

/// Exact inverse of `inflate`: the zero-pressure configuration, independent of
/// the phase at which the loaded state was produced.
inline Matd unload_exact(const Matd& loaded_coords, const MeshGraph& mesh) {
  check(loaded_coords.rows() == mesh.nodes.rows() && loaded_coords.cols() == 3,
        "unload_exact: coordinate array shape mismatch");
  return inflate(mesh, reference_volume_ml(mesh.gen_params));
}

// ---------------------------------------------------------------------------
// Dataset
// ---------------------------------------------------------------------------

/// One supervised state, viewing into per-mesh storage.
struct MechSample {
  std::string mesh_id;
  double v_target_ml = 0.0;
  double t_ms = 0.0;
  float p_star_mmhg = 0.0f;
  const Matf* x_load_star = nullptr;    // N x 3 (shared across phases)
  const Matf* x_unload_star = nullptr;  // N x 3
};

struct MeshRecord {
  std::string id;
  MeshGraph mesh;
  std::string split;             // "train" or "test"
  std::vector<double> v_grid;    // mL, mesh-relative
  std::vector<Matf> x_load_star; // per volume index: N x 3 loaded coordinates
  Matf p_star;                   // |v| x |t| pressures, mmHg
  Matf x_unload_star;            // N x 3 zero-pressure coordinates
};

struct Dataset {
  std::vector<MeshRecord> meshes;
  std::vector<double> t_grid;  // ms, shared across meshes
  OracleParams oracle_params;

  const MeshRecord& by_id(const std::string& id) const {
    for (const auto& m : meshes)
      if (m.id == id) return m;
    throw Error("dataset: unknown mesh id '" + id + "'");
  }

  MechSample sample(std::size_t mesh_idx, std::size_t vi, std::size_t ti) const {
    const MeshRecord& m = meshes.at(mesh_idx);
    MechSample s;
    s.mesh_id = m.id;
    s.v_target_ml = m.v_grid.at(vi);
    s.t_ms = t_grid.at(ti);
    s.p_star_mmhg = m.p_star(static_cast<Eigen::Index>(vi),
                             static_cast<Eigen::Index>(ti));
    s.x_load_star = &m.x_load_star.at(vi);
    s.x_unload_star = &m.x_unload_star;
    return s;
  }

  std::size_t sample_count() const {
    std::size_t n = 0;
    for (const auto& m : meshes) n += m.v_grid.size() * t_grid.size();
    return n;
  }

  std::vector<std::size_t> split_indices(const std::string& split) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < meshes.size(); ++i)
      if (meshes[i].split == split) out.push_back(i);
    return out;
  }
};

inline Matf to_f32(const Matd& m) { return m.cast<float>(); }

/// Samples shell parameters per mesh, evaluates the oracle on a mesh-relative
/// volume grid x shared phase grid, and splits meshes ~4:1 train/test.
inline Dataset generate_dataset(int n_meshes, int v_samples, int t_samples,
                                std::uint64_t seed, const OracleParams& params) {
  check(n_meshes >= 5, "generate_dataset: need at least 5 meshes for a 4:1 split");
  check(v_samples >= 2 && t_samples >= 2,
        "generate_dataset: grids need at least 2 samples per axis");

  Dataset ds;
  ds.oracle_params = params;
  for (int k = 0; k < t_samples; ++k)
    ds.t_grid.push_back(params.cycle_ms * static_cast<double>(k) / t_samples);

  Rng rng(derive_seed(seed, 0));
  for (int m = 0; m < n_meshes; ++m) {
    ShellParams sp;
    sp.inner_radius_mm = uniform(rng, 18.0, 26.0);
    sp.wall_thickness_mm = uniform(rng, 8.0, 14.0);
    sp.scale = Vec3(uniform(rng, 0.85, 1.15), uniform(rng, 0.85, 1.15),
                    uniform(rng, 0.85, 1.15));
    sp.subdivision = static_cast<int>(uniform_int(rng, 2, 3));
    sp.layers = static_cast<int>(uniform_int(rng, 3, 4));
    sp.seed = derive_seed(seed, 1000 + static_cast<std::uint64_t>(m));

    MeshRecord rec;
    char idbuf[16];
    std::snprintf(idbuf, sizeof idbuf, "mesh_%03d", m);
    rec.id = idbuf;
    rec.mesh = generate_shell(sp);

    const double v0 = reference_volume_ml(sp);
    rec.v_grid = linspace(1.05 * v0, 1.9 * v0, v_samples);
    rec.x_unload_star = to_f32(rec.mesh.nodes);
    rec.p_star.resize(v_samples, t_samples);
    for (int vi = 0; vi < v_samples; ++vi) {
      const double v = rec.v_grid[static_cast<std::size_t>(vi)];
      rec.x_load_star.push_back(to_f32(inflate(rec.mesh, v)));
      check(rec.x_load_star.back().allFinite(),
            "generate_dataset: non-finite oracle displacement");
      for (int ti = 0; ti < t_samples; ++ti) {
        const double p = pressure(v, ds.t_grid[static_cast<std::size_t>(ti)],
                                  v0, params);
        check(std::isfinite(p), "generate_dataset: non-finite oracle pressure");
        rec.p_star(vi, ti) = static_cast<float>(p);
      }
    }
    ds.meshes.push_back(std::move(rec));
  }

  // Mesh-level split by shuffled order, test count nearest to n/5.
  std::vector<std::size_t> order(static_cast<std::size_t>(n_meshes));
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  for (std::size_t i = order.size() - 1; i > 0; --i)
    std::swap(order[i], order[static_cast<std::size_t>(
                            uniform_int(rng, 0, static_cast<std::int64_t>(i)))]);
  const int n_test = std::max(
      1, static_cast<int>(std::llround(static_cast<double>(n_meshes) / 5.0)));
  for (std::size_t i = 0; i < order.size(); ++i)
    ds.meshes[order[i]].split =
        i < order.size() - static_cast<std::size_t>(n_test) ? "train" : "test";
  return ds;
}

// ---------------------------------------------------------------------------
// Dataset container IO
// ---------------------------------------------------------------------------

inline json oracle_params_to_json(const OracleParams& p) {
  return json{{"passive_scale_mmhg", p.passive_scale_mmhg},
              {"passive_exponent", p.passive_exponent},
              {"active_elastance", p.active_elastance},
              {"dead_volume_ml", p.dead_volume_ml},
              {"systole_ms", p.systole_ms},
              {"cycle_ms", p.cycle_ms}};
}

inline OracleParams oracle_params_from_json(const json& j) {
  OracleParams p;
  p.passive_scale_mmhg = j.at("passive_scale_mmhg").get<double>();
  p.passive_exponent = j.at("passive_exponent").get<double>();
  p.active_elastance = j.at("active_elastance").get<double>();
  p.dead_volume_ml = j.at("dead_volume_ml").get<double>();
  p.systole_ms = j.at("systole_ms").get<double>();
  p.cycle_ms = j.at("cycle_ms").get<double>();
  return p;
}

namespace detail {

inline std::vector<float> flatten_f32(const Matf& m) {
  return std::vector<float>(m.data(), m.data() + m.size());
}

inline std::vector<NamedArray> mesh_record_arrays(const Dataset& ds,
                                                  const MeshRecord& rec) {
  const int n = rec.mesh.num_nodes();
  const auto nv = static_cast<std::int64_t>(rec.v_grid.size());
  const auto nt = static_cast<std::int64_t>(ds.t_grid.size());

  std::vector<NamedArray> arrays;
  arrays.push_back(NamedArray::make_f32(
      "nodes", {n, 3}, flatten_f32(to_f32(rec.mesh.nodes))));
  {
    std::vector<std::int32_t> lab(rec.mesh.labels.begin(),
                                  rec.mesh.labels.end());
    arrays.push_back(NamedArray::make_i32("labels", {n}, std::move(lab)));
  }
  {
    std::vector<std::int32_t> e;
    e.reserve(rec.mesh.edges.size() * 2);
    for (const auto& [u, v] : rec.mesh.edges) {
      e.push_back(u);
      e.push_back(v);
    }
    arrays.push_back(NamedArray::make_i32(
        "edges", {static_cast<std::int64_t>(rec.mesh.edges.size()), 2},
        std::move(e)));
  }
  {
    std::vector<std::int32_t> li(rec.mesh.layer_index.begin(),
                                 rec.mesh.layer_index.end());
    arrays.push_back(NamedArray::make_i32("layer_index", {n}, std::move(li)));
  }
  {
    const GlobalDescriptors& d = rec.mesh.descriptors;
    arrays.push_back(NamedArray::make_f32(
        "descriptors", {4},
        {static_cast<float>(d.cavity_volume_ml),
         static_cast<float>(d.wall_mean_mm), static_cast<float>(d.wall_min_mm),
         static_cast<float>(d.wall_max_mm)}));
  }
  {
    std::vector<std::int32_t> ef;
    ef.reserve(rec.mesh.endo_faces.size() * 3);
    for (const auto& [a, b, c] : rec.mesh.endo_faces) {
      ef.push_back(a);
      ef.push_back(b);
      ef.push_back(c);
    }
    arrays.push_back(NamedArray::make_i32(
        "endo_faces", {static_cast<std::int64_t>(rec.mesh.endo_faces.size()), 3},
        std::move(ef)));
  }
  {
    // Loaded coordinates per (volume, phase) state; the phase axis repeats the
    // volume-indexed field to match the declared [v,t,N,3] layout.
    std::vector<float> x;
    x.reserve(static_cast<std::size_t>(nv * nt * n * 3));
    for (std::int64_t vi = 0; vi < nv; ++vi) {
      const auto slab = flatten_f32(rec.x_load_star[static_cast<std::size_t>(vi)]);
      for (std::int64_t ti = 0; ti < nt; ++ti)
        x.insert(x.end(), slab.begin(), slab.end());
    }
    arrays.push_back(
        NamedArray::make_f32("x_load_star", {nv, nt, n, 3}, std::move(x)));
  }
  arrays.push_back(
      NamedArray::make_f32("p_star", {nv, nt}, flatten_f32(rec.p_star)));
  arrays.push_back(NamedArray::make_f32("x_unload_star", {n, 3},
                                        flatten_f32(rec.x_unload_star)));
  return arrays;
}

}  // namespace detail

inline void write_dataset(const Dataset& ds, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  json manifest;
  manifest["format_version"] = 1;
  manifest["oracle_params"] = oracle_params_to_json(ds.oracle_params);
  manifest["t_grid"] = ds.t_grid;
  manifest["meshes"] = json::array();
  for (const auto& rec : ds.meshes) {
    const ShellParams& g = rec.mesh.gen_params;
    manifest["meshes"].push_back(
        {{"id", rec.id},
         {"record", rec.id + ".rec"},
         {"split", rec.split},
         {"v_grid", rec.v_grid},
         {"nodes_per_layer", rec.mesh.nodes_per_layer},
         {"gen_params",
          {{"inner_radius_mm", g.inner_radius_mm},
           {"wall_thickness_mm", g.wall_thickness_mm},
           {"scale", {g.scale.x(), g.scale.y(), g.scale.z()}},
           {"subdivision", g.subdivision},
           {"layers", g.layers},
           {"seed", g.seed}}}});
    write_record(dir / (rec.id + ".rec"), detail::mesh_record_arrays(ds, rec));
  }
  write_json_file(dir / "manifest.json", manifest);
}

inline Dataset read_dataset(const std::filesystem::path& dir) {
  const json manifest = read_json_file(dir / "manifest.json", "manifest");
  check(manifest.at("format_version").get<int>() == 1,
        "read_dataset: unsupported format version");

  Dataset ds;
  ds.oracle_params = oracle_params_from_json(manifest.at("oracle_params"));
  ds.t_grid = manifest.at("t_grid").get<std::vector<double>>();

  for (const auto& entry : manifest.at("meshes")) {
    MeshRecord rec;
    rec.id = entry.at("id").get<std::string>();
    rec.split = entry.at("split").get<std::string>();
    rec.v_grid = entry.at("v_grid").get<std::vector<double>>();

    const json& gp = entry.at("gen_params");
    ShellParams sp;
    sp.inner_radius_mm = gp.at("inner_radius_mm").get<double>();
    sp.wall_thickness_mm = gp.at("wall_thickness_mm").get<double>();
    const auto sc = gp.at("scale").get<std::vector<double>>();
    sp.scale = Vec3(sc.at(0), sc.at(1), sc.at(2));
    sp.subdivision = gp.at("subdivision").get<int>();
    sp.layers = gp.at("layers").get<int>();
    sp.seed = gp.at("seed").get<std::uint64_t>();

    const auto arrays =
        read_record(dir / entry.at("record").get<std::string>());

    const auto& nodes = find_array(arrays, "nodes", "f32");
    check(nodes.shape.size() == 2 && nodes.shape[1] == 3,
          "read_dataset: nodes shape mismatch");
    const auto n = static_cast<int>(nodes.shape[0]);

    MeshGraph mesh;
    mesh.gen_params = sp;
    mesh.nodes_per_layer = entry.at("nodes_per_layer").get<int>();
    mesh.nodes.resize(n, 3);
    for (int i = 0; i < n; ++i)
      for (int d = 0; d < 3; ++d)
        mesh.nodes(i, d) = nodes.f32[static_cast<std::size_t>(i * 3 + d)];

    const auto& labels = find_array(arrays, "labels", "i32");
    check(labels.shape == std::vector<std::int64_t>{n},
          "read_dataset: labels shape mismatch");
    mesh.labels.assign(labels.i32.begin(), labels.i32.end());

    const auto& edges = find_array(arrays, "edges", "i32");
    check(edges.shape.size() == 2 && edges.shape[1] == 2,
          "read_dataset: edges shape mismatch");
    for (std::int64_t e = 0; e < edges.shape[0]; ++e)
      mesh.edges.push_back({edges.i32[static_cast<std::size_t>(2 * e)],
                            edges.i32[static_cast<std::size_t>(2 * e + 1)]});

    const auto& li = find_array(arrays, "layer_index", "i32");
    check(li.shape == std::vector<std::int64_t>{n},
          "read_dataset: layer_index shape mismatch");
    mesh.layer_index.assign(li.i32.begin(), li.i32.end());

    const auto& desc = find_array(arrays, "descriptors", "f32");
    check(desc.shape == std::vector<std::int64_t>{4},
          "read_dataset: descriptors shape mismatch");
    mesh.descriptors.cavity_volume_ml = desc.f32[0];
    mesh.descriptors.wall_mean_mm = desc.f32[1];
    mesh.descriptors.wall_min_mm = desc.f32[2];
    mesh.descriptors.wall_max_mm = desc.f32[3];

    const auto& ef = find_array(arrays, "endo_faces", "i32");
    check(ef.shape.size() == 2 && ef.shape[1] == 3,
          "read_dataset: endo_faces shape mismatch");
    for (std::int64_t f = 0; f < ef.shape[0]; ++f)
      mesh.endo_faces.push_back({ef.i32[static_cast<std::size_t>(3 * f)],
                                 ef.i32[static_cast<std::size_t>(3 * f + 1)],
                                 ef.i32[static_cast<std::size_t>(3 * f + 2)]});
    rec.mesh = std::move(mesh);

    const auto nv = static_cast<std::int64_t>(rec.v_grid.size());
    const auto nt = static_cast<std::int64_t>(ds.t_grid.size());

    const auto& xl = find_array(arrays, "x_load_star", "f32");
    check(xl.shape == std::vector<std::int64_t>{nv, nt, n, 3},
          "read_dataset: x_load_star shape mismatch");
    const std::size_t slab = static_cast<std::size_t>(n) * 3;
    for (std::int64_t vi = 0; vi < nv; ++vi) {
      const float* base = xl.f32.data() +
                          static_cast<std::size_t>(vi * nt) * slab;
      for (std::int64_t ti = 1; ti < nt; ++ti)
        check(std::memcmp(base, base + static_cast<std::size_t>(ti) * slab,
                          slab * sizeof(float)) == 0,
              "read_dataset: x_load_star varies across phases");
      Matf x(n, 3);
      std::memcpy(x.data(), base, slab * sizeof(float));
      rec.x_load_star.push_back(std::move(x));
    }

    const auto& ps = find_array(arrays, "p_star", "f32");
    check(ps.shape == std::vector<std::int64_t>{nv, nt},
          "read_dataset: p_star shape mismatch");
    rec.p_star.resize(nv, nt);
    std::memcpy(rec.p_star.data(), ps.f32.data(),
                ps.f32.size() * sizeof(float));

    const auto& xu = find_array(arrays, "x_unload_star", "f32");
    check(xu.shape == std::vector<std::int64_t>{n, 3},
          "read_dataset: x_unload_star shape mismatch");
    rec.x_unload_star.resize(n, 3);
    std::memcpy(rec.x_unload_star.data(), xu.f32.data(),
                xu.f32.size() * sizeof(float));

    ds.meshes.push_back(std::move(rec));
  }
  return ds;
}

}  // namespace cgfenet
