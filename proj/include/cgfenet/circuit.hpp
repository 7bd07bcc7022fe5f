#pragma once

// Dense P-V-t lookup tables and the lumped-parameter closed loop: a two-valve
// circuit with constant atrial pressure and a two-element arterial Windkessel,
// integrated with explicit Euler until the cycle trajectory is periodic.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "cgfenet/common.hpp"
#include "cgfenet/container.hpp"
#include "cgfenet/oracle.hpp"
#include "cgfenet/surrogate.hpp"

namespace cgfenet {

struct PVTTable {
  std::vector<double> v_grid;  // mL, strictly ascending
  std::vector<double> t_grid;  // ms, strictly ascending in [0, cycle_ms)
  Matd p;                      // |v| x |t|, mmHg
  std::string mesh_id;
  std::string source;  // "surrogate" or "oracle"
  double cycle_ms = 800.0;

  void validate() const {
    check(v_grid.size() >= 2 && t_grid.size() >= 2,
          "PVTTable: grids need at least two samples");
    for (std::size_t i = 1; i < v_grid.size(); ++i)
      check(v_grid[i] > v_grid[i - 1], "PVTTable: v_grid not ascending");
    for (std::size_t i = 1; i < t_grid.size(); ++i)
      check(t_grid[i] > t_grid[i - 1], "PVTTable: t_grid not ascending");
    check(t_grid.front() >= 0.0 && t_grid.back() < cycle_ms,
          "PVTTable: t_grid outside [0, cycle_ms)");
    check(p.rows() == static_cast<Eigen::Index>(v_grid.size()) &&
              p.cols() == static_cast<Eigen::Index>(t_grid.size()),
          "PVTTable: matrix shape mismatch");
    check(p.allFinite(), "PVTTable: non-finite entries");
    if (source == "oracle")
      for (Eigen::Index c = 0; c < p.cols(); ++c)
        for (Eigen::Index r = 1; r < p.rows(); ++r)
          check(p(r, c) >= p(r - 1, c),
                "PVTTable: oracle pressure not monotone in volume");
  }
};

/// The dataset's grid convention for one mesh: volumes in
/// [1.05 V0, 1.9 V0], phases evenly spaced in [0, t0).
struct TableGrids {
  std::vector<double> v_grid;
  std::vector<double> t_grid;
};

inline TableGrids default_table_grids(const MeshGraph& mesh, int v_samples,
                                      int t_samples, double cycle_ms) {
  const double v0 = reference_volume_ml(mesh.gen_params);
  TableGrids g;
  g.v_grid = linspace(1.05 * v0, 1.9 * v0, v_samples);
  for (int k = 0; k < t_samples; ++k)
    g.t_grid.push_back(cycle_ms * static_cast<double>(k) / t_samples);
  return g;
}

inline PVTTable build_table_oracle(const MeshGraph& mesh,
                                   const OracleParams& params,
                                   const TableGrids& grids,
                                   const std::string& mesh_id = "") {
  const double v0 = reference_volume_ml(mesh.gen_params);
  PVTTable t;
  t.v_grid = grids.v_grid;
  t.t_grid = grids.t_grid;
  t.mesh_id = mesh_id;
  t.source = "oracle";
  t.cycle_ms = params.cycle_ms;
  t.p.resize(static_cast<Eigen::Index>(t.v_grid.size()),
             static_cast<Eigen::Index>(t.t_grid.size()));
  for (std::size_t vi = 0; vi < t.v_grid.size(); ++vi)
    for (std::size_t ti = 0; ti < t.t_grid.size(); ++ti)
      t.p(static_cast<Eigen::Index>(vi), static_cast<Eigen::Index>(ti)) =
          pressure(t.v_grid[vi], t.t_grid[ti], v0, params);
  t.validate();
  return t;
}

/// Surrogate table: first recovers the zero-pressure configuration from the
/// provided loaded (typically end-diastolic) state through the unloading
/// branch, then sweeps the loading branch over the grid.
template <typename T>
inline PVTTable build_table_surrogate(const SurrogateModel<T>& model,
                                      const MeshGraph& mesh,
                                      const Matd& ed_coords, double ed_phase_ms,
                                      const TableGrids& grids,
                                      const std::string& mesh_id = "") {
  const auto graph = ad::EdgeIndex::build(mesh.edges, mesh.num_nodes(), true);
  const Matd unloaded =
      forward_unload(model, mesh, ed_coords, ed_phase_ms, graph).x_unload;

  PVTTable t;
  t.v_grid = grids.v_grid;
  t.t_grid = grids.t_grid;
  t.mesh_id = mesh_id;
  t.source = "surrogate";
  t.cycle_ms = model.cfg.cycle_ms;
  t.p.resize(static_cast<Eigen::Index>(t.v_grid.size()),
             static_cast<Eigen::Index>(t.t_grid.size()));
  for (std::size_t vi = 0; vi < t.v_grid.size(); ++vi) {
    const auto pred =
        forward_load(model, mesh, unloaded, t.v_grid[vi], t.t_grid, graph);
    for (std::size_t ti = 0; ti < t.t_grid.size(); ++ti)
      t.p(static_cast<Eigen::Index>(vi), static_cast<Eigen::Index>(ti)) =
          pred.p_mmhg[ti];
  }
  t.validate();
  return t;
}

/// Bilinear interpolation in (V, t) with periodic wrap in t.
inline double lookup(const PVTTable& table, double v_ml, double t_ms) {
  check(v_ml >= table.v_grid.front() && v_ml <= table.v_grid.back(),
        "lookup: volume " + std::to_string(v_ml) +
            " mL outside table range [" +
            std::to_string(table.v_grid.front()) + ", " +
            std::to_string(table.v_grid.back()) + "]");
  double t = std::fmod(t_ms, table.cycle_ms);
  if (t < 0.0) t += table.cycle_ms;

  const auto& vg = table.v_grid;
  std::size_t vi = 0;
  while (vi + 2 < vg.size() && v_ml >= vg[vi + 1]) ++vi;
  const double fv = (v_ml - vg[vi]) / (vg[vi + 1] - vg[vi]);

  const auto& tg = table.t_grid;
  const std::size_t nt = tg.size();
  std::size_t ti;
  double ft;
  if (t < tg.front()) {
    // between the last grid phase (shifted back a cycle) and the first
    ti = nt - 1;
    const double span = tg.front() + table.cycle_ms - tg.back();
    ft = (t + table.cycle_ms - tg.back()) / span;
  } else if (t >= tg.back()) {
    ti = nt - 1;
    const double span = tg.front() + table.cycle_ms - tg.back();
    ft = (t - tg.back()) / span;
  } else {
    ti = 0;
    while (ti + 2 < nt && t >= tg[ti + 1]) ++ti;
    ft = (t - tg[ti]) / (tg[ti + 1] - tg[ti]);
  }
  const std::size_t tj = (ti + 1) % nt;

  const auto r0 = static_cast<Eigen::Index>(vi);
  const auto r1 = static_cast<Eigen::Index>(vi + 1);
  const auto c0 = static_cast<Eigen::Index>(ti);
  const auto c1 = static_cast<Eigen::Index>(tj);
  const double p00 = table.p(r0, c0), p01 = table.p(r0, c1);
  const double p10 = table.p(r1, c0), p11 = table.p(r1, c1);
  return (1 - fv) * ((1 - ft) * p00 + ft * p01) +
         fv * ((1 - ft) * p10 + ft * p11);
}

struct WindkesselParams {
  double p_la_mmhg = 8.0;     // constant left-atrial pressure
  double r_mv = 0.05;         // mitral valve resistance, mmHg s / mL
  double r_av = 0.01;         // aortic valve resistance, mmHg s / mL
  double c_ao = 1.2;          // arterial compliance, mL / mmHg
  double r_sys = 1.0;         // systemic resistance, mmHg s / mL
  double dt_ms = 1.0;
  int max_cycles = 20;
  double tol_v_ml = 0.5;
  double tol_p_mmhg = 0.5;

  void validate() const {
    check(p_la_mmhg > 0 && r_mv > 0 && r_av > 0 && c_ao > 0 && r_sys > 0 &&
              dt_ms > 0 && max_cycles > 0 && tol_v_ml > 0 && tol_p_mmhg > 0,
          "WindkesselParams: all parameters must be positive");
  }
};

struct LoopTrace {
  std::vector<double> t_ms, v_ml, p_lv_mmhg, p_ao_mmhg, q_mv_mlps, q_av_mlps;
  bool converged = false;
  int cycles_run = 0;
  double stroke_volume_ml = 0.0;
  double loop_area_mmhg_ml = 0.0;
};

/// Explicit-Euler integration of the two-valve circuit against the table,
/// repeated whole cycles until consecutive cycles agree within tolerance.
inline LoopTrace run_loop(const PVTTable& table, const WindkesselParams& wk,
                          double v_init_ml, double p_ao_init_mmhg) {
  wk.validate();
  check(v_init_ml >= table.v_grid.front() && v_init_ml <= table.v_grid.back(),
        "run_loop: initial volume outside table range");

  const int steps = static_cast<int>(std::llround(table.cycle_ms / wk.dt_ms));
  check(steps >= 2, "run_loop: time step too large for the cycle");
  const double dt_s = (table.cycle_ms / steps) / 1000.0;

  double v = v_init_ml;
  double p_ao = p_ao_init_mmhg;
  std::vector<double> prev_v, prev_pao;
  LoopTrace trace;

  for (int cycle = 0; cycle < wk.max_cycles; ++cycle) {
    LoopTrace cur;
    double max_dv = 0.0, max_dp = 0.0;
    for (int s = 0; s < steps; ++s) {
      const double t = table.cycle_ms * static_cast<double>(s) / steps;
      const double p_lv = lookup(table, v, t);
      const double q_mv = std::max(0.0, (wk.p_la_mmhg - p_lv) / wk.r_mv);
      const double q_av = std::max(0.0, (p_lv - p_ao) / wk.r_av);

      cur.t_ms.push_back(t);
      cur.v_ml.push_back(v);
      cur.p_lv_mmhg.push_back(p_lv);
      cur.p_ao_mmhg.push_back(p_ao);
      cur.q_mv_mlps.push_back(q_mv);
      cur.q_av_mlps.push_back(q_av);

      if (!prev_v.empty()) {
        max_dv = std::max(max_dv,
                          std::abs(v - prev_v[static_cast<std::size_t>(s)]));
        max_dp = std::max(
            max_dp, std::abs(p_ao - prev_pao[static_cast<std::size_t>(s)]));
      }

      v += (q_mv - q_av) * dt_s;
      p_ao += dt_s * (q_av - (p_ao - wk.p_la_mmhg) / wk.r_sys) / wk.c_ao;
      check(v >= table.v_grid.front() && v <= table.v_grid.back(),
            "run_loop: cavity volume left the table range (" +
                std::to_string(v) + " mL); build a wider table");
    }
    trace = std::move(cur);
    trace.cycles_run = cycle + 1;
    if (!prev_v.empty() && max_dv < wk.tol_v_ml && max_dp < wk.tol_p_mmhg) {
      trace.converged = true;
      break;
    }
    prev_v = trace.v_ml;
    prev_pao = trace.p_ao_mmhg;
  }

  double vmin = trace.v_ml[0], vmax = trace.v_ml[0];
  for (const double x : trace.v_ml) {
    vmin = std::min(vmin, x);
    vmax = std::max(vmax, x);
  }
  trace.stroke_volume_ml = vmax - vmin;

  double area2 = 0.0;
  const std::size_t n = trace.v_ml.size();
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j = (i + 1) % n;
    area2 += trace.v_ml[i] * trace.p_lv_mmhg[j] -
             trace.v_ml[j] * trace.p_lv_mmhg[i];
  }
  trace.loop_area_mmhg_ml = area2 / 2.0;
  return trace;
}

// ---------------------------------------------------------------------------
// Table and trace IO
// ---------------------------------------------------------------------------

inline void write_table(const PVTTable& table,
                        const std::filesystem::path& dir) {
  table.validate();
  std::filesystem::create_directories(dir);
  json manifest;
  manifest["format_version"] = 1;
  manifest["kind"] = "pvt_table";
  manifest["mesh_id"] = table.mesh_id;
  manifest["source"] = table.source;
  manifest["cycle_ms"] = table.cycle_ms;
  manifest["record"] = "table.rec";
  write_json_file(dir / "manifest.json", manifest);

  std::vector<NamedArray> arrays;
  arrays.push_back(NamedArray::make_f32(
      "v_grid", {static_cast<std::int64_t>(table.v_grid.size())},
      std::vector<float>(table.v_grid.begin(), table.v_grid.end())));
  arrays.push_back(NamedArray::make_f32(
      "t_grid", {static_cast<std::int64_t>(table.t_grid.size())},
      std::vector<float>(table.t_grid.begin(), table.t_grid.end())));
  std::vector<float> p(table.p.data(), table.p.data() + table.p.size());
  arrays.push_back(NamedArray::make_f32(
      "p", {static_cast<std::int64_t>(table.v_grid.size()),
            static_cast<std::int64_t>(table.t_grid.size())},
      std::move(p)));
  write_record(dir / "table.rec", arrays);
}

inline PVTTable read_table(const std::filesystem::path& dir) {
  const json manifest = read_json_file(dir / "manifest.json", "table manifest");
  check(manifest.at("kind").get<std::string>() == "pvt_table",
        "read_table: not a P-V-t table directory");
  check(manifest.at("format_version").get<int>() == 1,
        "read_table: unsupported format version");

  PVTTable t;
  t.mesh_id = manifest.at("mesh_id").get<std::string>();
  t.source = manifest.at("source").get<std::string>();
  t.cycle_ms = manifest.at("cycle_ms").get<double>();

  const auto arrays =
      read_record(dir / manifest.at("record").get<std::string>());
  const auto& vg = find_array(arrays, "v_grid", "f32");
  const auto& tg = find_array(arrays, "t_grid", "f32");
  const auto& p = find_array(arrays, "p", "f32");
  t.v_grid.assign(vg.f32.begin(), vg.f32.end());
  t.t_grid.assign(tg.f32.begin(), tg.f32.end());
  check(p.shape.size() == 2 &&
            p.shape[0] == static_cast<std::int64_t>(t.v_grid.size()) &&
            p.shape[1] == static_cast<std::int64_t>(t.t_grid.size()),
        "read_table: pressure matrix shape mismatch");
  t.p.resize(p.shape[0], p.shape[1]);
  for (Eigen::Index i = 0; i < t.p.size(); ++i)
    t.p.data()[i] = p.f32[static_cast<std::size_t>(i)];
  t.validate();
  return t;
}

inline void write_loop_csv(const LoopTrace& trace,
                           const std::filesystem::path& path) {
  std::ofstream out(path);
  check(out.good(), "write_loop_csv: cannot open " + path.string());
  out << "t_ms,V_mL,P_lv_mmHg,P_ao_mmHg,Q_mv_mLps,Q_av_mLps\n";
  for (std::size_t i = 0; i < trace.t_ms.size(); ++i)
    out << trace.t_ms[i] << ',' << trace.v_ml[i] << ',' << trace.p_lv_mmhg[i]
        << ',' << trace.p_ao_mmhg[i] << ',' << trace.q_mv_mlps[i] << ','
        << trace.q_av_mlps[i] << '\n';
  check(out.good(), "write_loop_csv: write failed");
}

inline LoopTrace read_loop_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  check(in.good(), "read_loop_csv: cannot open " + path.string());
  std::string line;
  check(static_cast<bool>(std::getline(in, line)),
        "read_loop_csv: empty file");
  check(line == "t_ms,V_mL,P_lv_mmHg,P_ao_mmHg,Q_mv_mLps,Q_av_mLps",
        "read_loop_csv: unexpected header");
  LoopTrace t;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    double c[6];
    if (std::sscanf(line.c_str(), "%lf,%lf,%lf,%lf,%lf,%lf", &c[0], &c[1],
                    &c[2], &c[3], &c[4], &c[5]) != 6)
      throw Error("read_loop_csv: malformed row '" + line + "'");
    t.t_ms.push_back(c[0]);
    t.v_ml.push_back(c[1]);
    t.p_lv_mmhg.push_back(c[2]);
    t.p_ao_mmhg.push_back(c[3]);
    t.q_mv_mlps.push_back(c[4]);
    t.q_av_mlps.push_back(c[5]);
  }
  return t;
}

}  // namespace cgfenet
