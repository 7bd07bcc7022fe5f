#pragma once

// Evaluation metrics and the mesh-level reporting protocol: displacement RMSE
// and vertex accuracies, symmetric Hausdorff distance, pressure R^2/RMSE,
// aggregated per test mesh as mean +/- std.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "cgfenet/common.hpp"
#include "cgfenet/container.hpp"
#include "cgfenet/feature_norm.hpp"
#include "cgfenet/oracle.hpp"
#include "cgfenet/surrogate.hpp"

namespace cgfenet {

struct DisplacementMetrics {
  double rmse_mm = 0.0;
  double acc_1mm = 0.0;
  double acc_2mm = 0.0;
};

inline DisplacementMetrics displacement_metrics(const Matd& pred,
                                                const Matd& truth) {
  check(pred.rows() == truth.rows() && pred.cols() == 3 && truth.cols() == 3,
        "displacement_metrics: shape mismatch");
  DisplacementMetrics m;
  double se = 0.0;
  const auto n = pred.rows();
  for (Eigen::Index i = 0; i < n; ++i) {
    const double e = (pred.row(i) - truth.row(i)).norm();
    se += e * e;
    if (e < 1.0) m.acc_1mm += 1.0;
    if (e < 2.0) m.acc_2mm += 1.0;
  }
  m.rmse_mm = std::sqrt(se / static_cast<double>(n));
  m.acc_1mm /= static_cast<double>(n);
  m.acc_2mm /= static_cast<double>(n);
  return m;
}

/// Symmetric Hausdorff distance between two vertex sets, brute force.
inline double hausdorff(const Matd& a, const Matd& b) {
  check(a.rows() > 0 && b.rows() > 0, "hausdorff: empty point set");
  check(a.cols() == b.cols(), "hausdorff: dimension mismatch");
  auto directed = [](const Matd& from, const Matd& to) {
    double worst = 0.0;
    for (Eigen::Index i = 0; i < from.rows(); ++i) {
      const double nearest =
          (to.rowwise() - from.row(i)).rowwise().squaredNorm().minCoeff();
      worst = std::max(worst, nearest);
    }
    return std::sqrt(worst);
  };
  return std::max(directed(a, b), directed(b, a));
}

struct PressureMetrics {
  double r2 = 0.0;
  double rmse_mmhg = 0.0;
};

inline PressureMetrics pressure_metrics(const std::vector<double>& pred,
                                        const std::vector<double>& truth) {
  check(pred.size() == truth.size() && pred.size() >= 2,
        "pressure_metrics: need at least two paired samples");
  double mean = 0.0;
  for (const double t : truth) mean += t;
  mean /= static_cast<double>(truth.size());
  double ss_res = 0.0, ss_tot = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    ss_res += (truth[i] - pred[i]) * (truth[i] - pred[i]);
    ss_tot += (truth[i] - mean) * (truth[i] - mean);
  }
  check(ss_tot > 0.0, "pressure_metrics: R^2 undefined for constant truth");
  return {1.0 - ss_res / ss_tot,
          std::sqrt(ss_res / static_cast<double>(truth.size()))};
}

// ---------------------------------------------------------------------------
// Mesh-level evaluation
// ---------------------------------------------------------------------------

/// Prediction interface so the oracle itself can stand in as a perfect model
/// in tests.
class Predictor {
 public:
  virtual ~Predictor() = default;
  virtual ForwardPrediction load(const MeshGraph& mesh, const Matd& coords,
                                 double v_target_ml,
                                 const std::vector<double>& t_ms) const = 0;
  virtual UnloadPrediction unload(const MeshGraph& mesh,
                                  const Matd& loaded_coords,
                                  double t_ms) const = 0;
};

template <typename T>
class ModelPredictor : public Predictor {
 public:
  explicit ModelPredictor(const SurrogateModel<T>& model) : model_(model) {}

  ForwardPrediction load(const MeshGraph& mesh, const Matd& coords,
                         double v_target_ml,
                         const std::vector<double>& t_ms) const override {
    return forward_load(model_, mesh, coords, v_target_ml, t_ms, graph(mesh));
  }

  UnloadPrediction unload(const MeshGraph& mesh, const Matd& loaded_coords,
                          double t_ms) const override {
    return forward_unload(model_, mesh, loaded_coords, t_ms, graph(mesh));
  }

  const SurrogateModel<T>& model() const { return model_; }

 private:
  const ad::EdgeIndex& graph(const MeshGraph& mesh) const {
    auto it = cache_.find(&mesh);
    if (it == cache_.end())
      it = cache_
               .emplace(&mesh, ad::EdgeIndex::build(mesh.edges,
                                                    mesh.num_nodes(), true))
               .first;
    return it->second;
  }

  const SurrogateModel<T>& model_;
  mutable std::unordered_map<const MeshGraph*, ad::EdgeIndex> cache_;
};

/// Exact predictor backed by the synthetic mechanics, for oracle-replay tests.
class OraclePredictor : public Predictor {
 public:
  explicit OraclePredictor(const OracleParams& params) : params_(params) {}

  ForwardPrediction load(const MeshGraph& mesh, const Matd& /*coords*/,
                         double v_target_ml,
                         const std::vector<double>& t_ms) const override {
    const double v0 = reference_volume_ml(mesh.gen_params);
    const Matd x = inflate(mesh, v_target_ml);
    ForwardPrediction out;
    const int k = static_cast<int>(t_ms.size());
    out.x_load.resize(mesh.num_nodes() * k, 3);
    for (int i = 0; i < mesh.num_nodes(); ++i)
      for (int kk = 0; kk < k; ++kk) out.x_load.row(i * k + kk) = x.row(i);
    for (const double t : t_ms)
      out.p_mmhg.push_back(pressure(v_target_ml, t, v0, params_));
    return out;
  }

  UnloadPrediction unload(const MeshGraph& mesh, const Matd& loaded_coords,
                          double /*t_ms*/) const override {
    return {unload_exact(loaded_coords, mesh)};
  }

 private:
  OracleParams params_;
};

struct MeshEval {
  std::string mesh_id;
  // forward loading
  double rmse_disp = 0.0;
  double acc_1mm = 0.0;
  double acc_2mm = 0.0;
  double hausdorff_mm = 0.0;  // mean over (V,t) states
  double r2_pressure = 0.0;
  double rmse_pressure = 0.0;
  // inverse unloading
  double un_rmse_disp = 0.0;
  double un_acc_1mm = 0.0;
  double un_acc_2mm = 0.0;
  double un_hausdorff_mm = 0.0;
};

struct EvalReport {
  std::vector<MeshEval> per_mesh;
  MeshEval mean;
  MeshEval stddev;
};

namespace detail {

inline void aggregate_report(EvalReport& rep) {
  const double n = static_cast<double>(rep.per_mesh.size());
  auto fields = [](MeshEval& e) {
    return std::array<double*, 10>{
        &e.rmse_disp,     &e.acc_1mm,       &e.acc_2mm,  &e.hausdorff_mm,
        &e.r2_pressure,   &e.rmse_pressure, &e.un_rmse_disp, &e.un_acc_1mm,
        &e.un_acc_2mm,    &e.un_hausdorff_mm};
  };
  auto mf = fields(rep.mean);
  for (auto& m : rep.per_mesh) {
    auto src = fields(m);
    for (std::size_t i = 0; i < mf.size(); ++i) *mf[i] += *src[i] / n;
  }
  if (rep.per_mesh.size() > 1) {
    auto sf = fields(rep.stddev);
    for (auto& m : rep.per_mesh) {
      auto src = fields(m);
      for (std::size_t i = 0; i < sf.size(); ++i) {
        const double d = *src[i] - *mf[i];
        *sf[i] += d * d / (n - 1.0);
      }
    }
    for (auto* p : sf) *p = std::sqrt(*p);
  }
}

}  // namespace detail

/// Evaluates a predictor over every stored (V, t) state of the chosen split:
/// loading from the ground-truth unloaded configuration, unloading from every
/// loaded state. `unload_t_stride` thins the unloading phase sweep (1 = all).
inline EvalReport evaluate(const Predictor& predictor, const Dataset& ds,
                           const std::string& split = "test",
                           int unload_t_stride = 1) {
  const auto idxs = ds.split_indices(split);
  check(!idxs.empty(), "evaluate: split '" + split + "' has no meshes");

  EvalReport rep;
  for (const auto mi : idxs) {
    const MeshRecord& rec = ds.meshes[mi];
    const Matd unloaded = rec.x_unload_star.cast<double>();
    const int n = rec.mesh.num_nodes();
    const int kt = static_cast<int>(ds.t_grid.size());

    MeshEval ev;
    ev.mesh_id = rec.id;
    double se = 0.0, c1 = 0.0, c2 = 0.0, cnt = 0.0, hd_sum = 0.0, hd_n = 0.0;
    std::vector<double> p_pred, p_truth;

    for (std::size_t vi = 0; vi < rec.v_grid.size(); ++vi) {
      const auto pred =
          predictor.load(rec.mesh, unloaded, rec.v_grid[vi], ds.t_grid);
      const Matd truth = rec.x_load_star[vi].cast<double>();
      for (int kk = 0; kk < kt; ++kk) {
        Matd slice(n, 3);
        for (int i = 0; i < n; ++i) slice.row(i) = pred.x_load.row(i * kt + kk);
        for (int i = 0; i < n; ++i) {
          const double e = (slice.row(i) - truth.row(i)).norm();
          se += e * e;
          if (e < 1.0) c1 += 1.0;
          if (e < 2.0) c2 += 1.0;
          cnt += 1.0;
        }
        hd_sum += hausdorff(slice, truth);
        hd_n += 1.0;
        p_pred.push_back(pred.p_mmhg[static_cast<std::size_t>(kk)]);
        p_truth.push_back(
            static_cast<double>(rec.p_star(static_cast<Eigen::Index>(vi), kk)));
      }
    }
    ev.rmse_disp = std::sqrt(se / cnt);
    ev.acc_1mm = c1 / cnt;
    ev.acc_2mm = c2 / cnt;
    ev.hausdorff_mm = hd_sum / hd_n;
    const auto pm = pressure_metrics(p_pred, p_truth);
    ev.r2_pressure = pm.r2;
    ev.rmse_pressure = pm.rmse_mmhg;

    se = c1 = c2 = cnt = hd_sum = hd_n = 0.0;
    for (std::size_t vi = 0; vi < rec.v_grid.size(); ++vi) {
      const Matd loaded = rec.x_load_star[vi].cast<double>();
      for (int kk = 0; kk < kt; kk += unload_t_stride) {
        const auto un = predictor.unload(
            rec.mesh, loaded, ds.t_grid[static_cast<std::size_t>(kk)]);
        for (int i = 0; i < n; ++i) {
          const double e = (un.x_unload.row(i) - unloaded.row(i)).norm();
          se += e * e;
          if (e < 1.0) c1 += 1.0;
          if (e < 2.0) c2 += 1.0;
          cnt += 1.0;
        }
        hd_sum += hausdorff(un.x_unload, unloaded);
        hd_n += 1.0;
      }
    }
    ev.un_rmse_disp = std::sqrt(se / cnt);
    ev.un_acc_1mm = c1 / cnt;
    ev.un_acc_2mm = c2 / cnt;
    ev.un_hausdorff_mm = hd_sum / hd_n;

    rep.per_mesh.push_back(ev);
  }
  detail::aggregate_report(rep);
  return rep;
}

/// Model-based evaluation with a feature-normalisation consistency check
/// against the dataset the model claims to match.
template <typename T>
inline EvalReport evaluate(const SurrogateModel<T>& model, const Dataset& ds,
                           const std::string& split = "test",
                           int unload_t_stride = 1) {
  if (!ds.split_indices("train").empty()) {
    const FeatureNorm expect = compute_feature_norm(ds);
    for (int d = 0; d < 8; ++d) {
      const auto i = static_cast<std::size_t>(d);
      const double scale = std::max(std::abs(expect.std[i]), 1e-9);
      check(std::abs(expect.mean[i] - model.cfg.feature_norm.mean[i]) <
                    1e-6 * scale + 1e-9 &&
                std::abs(expect.std[i] - model.cfg.feature_norm.std[i]) <
                    1e-6 * scale + 1e-9,
            "evaluate: model/dataset feature-norm mismatch");
    }
  }
  ModelPredictor<T> pred(model);
  return evaluate(static_cast<const Predictor&>(pred), ds, split,
                  unload_t_stride);
}

// ---------------------------------------------------------------------------
// Report serialisation
// ---------------------------------------------------------------------------

inline json mesh_eval_to_json(const MeshEval& e) {
  return json{{"mesh_id", e.mesh_id},
              {"loading",
               {{"rmse_disp_mm", e.rmse_disp},
                {"acc_1mm", e.acc_1mm},
                {"acc_2mm", e.acc_2mm},
                {"hausdorff_mm", e.hausdorff_mm},
                {"r2_pressure", e.r2_pressure},
                {"rmse_pressure_mmhg", e.rmse_pressure}}},
              {"unloading",
               {{"rmse_disp_mm", e.un_rmse_disp},
                {"acc_1mm", e.un_acc_1mm},
                {"acc_2mm", e.un_acc_2mm},
                {"hausdorff_mm", e.un_hausdorff_mm}}}};
}

inline void write_report(const EvalReport& rep,
                         const std::filesystem::path& json_path,
                         const std::filesystem::path& csv_path) {
  json j;
  j["per_mesh"] = json::array();
  for (const auto& e : rep.per_mesh) j["per_mesh"].push_back(mesh_eval_to_json(e));
  j["aggregate"] = {{"mean", mesh_eval_to_json(rep.mean)},
                    {"std", mesh_eval_to_json(rep.stddev)}};
  write_json_file(json_path, j);

  std::ofstream csv(csv_path);
  check(csv.good(), "write_report: cannot open " + csv_path.string());
  csv << "mesh_id,rmse_disp_mm,acc_1mm,acc_2mm,hausdorff_mm,r2_pressure,"
         "rmse_pressure_mmhg,un_rmse_disp_mm,un_acc_1mm,un_acc_2mm,"
         "un_hausdorff_mm\n";
  auto row = [&csv](const std::string& id, const MeshEval& e) {
    csv << id << ',' << e.rmse_disp << ',' << e.acc_1mm << ',' << e.acc_2mm
        << ',' << e.hausdorff_mm << ',' << e.r2_pressure << ','
        << e.rmse_pressure << ',' << e.un_rmse_disp << ',' << e.un_acc_1mm
        << ',' << e.un_acc_2mm << ',' << e.un_hausdorff_mm << '\n';
  };
  for (const auto& e : rep.per_mesh) row(e.mesh_id, e);
  row("mean", rep.mean);
  row("std", rep.stddev);
}

}  // namespace cgfenet
