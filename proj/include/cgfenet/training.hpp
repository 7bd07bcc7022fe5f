#pragma once

// Cycle-consistent training: supervised first-pass losses, the
// loading -> unloading -> re-loading cycle, supervision-ratio assignment,
// ablation switches, and the AdamW optimisation loop.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cgfenet/common.hpp"
#include "cgfenet/feature_norm.hpp"
#include "cgfenet/oracle.hpp"
#include "cgfenet/surrogate.hpp"
#include "cgfenet/tape.hpp"

namespace cgfenet {

struct TrainConfig {
  double lr = 1e-3;
  double weight_decay = 1e-3;
  double lambda_p = 1.0;
  double lambda_d = 1e4;
  double lambda_cyc = 1e4;
  int epochs = 150;
  int batch_meshes = 2;
  int k_time = 8;  // phase samples per item
  int k_cyc = 4;   // phases carried through the cycle per item
  double sr = 1.0; // supervision ratio over training meshes
  bool no_gru = false;
  bool no_global = false;
  bool no_cycle = false;
  std::uint64_t seed = 0;
  int val_every = 5;

  void validate() const {
    check(sr > 0.0 && sr <= 1.0, "TrainConfig: sr must lie in (0, 1]");
    check(k_cyc <= k_time, "TrainConfig: k_cyc must not exceed k_time");
    check(epochs >= 1 && batch_meshes >= 1 && k_time >= 1,
          "TrainConfig: bad loop sizes");
  }
};

struct LossReport {
  double sup_p = 0.0;
  double sup_d = 0.0;
  double sup_u = 0.0;
  double cyc_load = 0.0;
  double cyc_unload = 0.0;
  double total = 0.0;
};

struct EpochEntry {
  int epoch = 0;
  LossReport mean;
  double val_rmse_disp = -1.0;  // mm; negative when validation did not run
  double val_rmse_pressure = -1.0;
  bool is_best = false;
};

/// Marks exactly round(sr * n_train) training meshes as labelled, chosen by a
/// seeded shuffle; test meshes are unaffected.
inline std::map<std::string, bool> assign_supervision(const Dataset& ds,
                                                      double sr,
                                                      std::uint64_t seed) {
  check(sr > 0.0 && sr <= 1.0, "assign_supervision: sr must lie in (0, 1]");
  const auto train = ds.split_indices("train");
  std::vector<std::size_t> order(train);
  Rng rng(derive_seed(seed, 0xab5));
  for (std::size_t i = order.size(); i > 1; --i)
    std::swap(order[i - 1], order[static_cast<std::size_t>(uniform_int(
                                rng, 0, static_cast<std::int64_t>(i - 1)))]);
  const auto n_labelled = static_cast<std::size_t>(
      std::llround(sr * static_cast<double>(train.size())));
  check(n_labelled >= 1, "assign_supervision: zero labelled meshes");

  std::map<std::string, bool> out;
  for (std::size_t i = 0; i < order.size(); ++i)
    out[ds.meshes[order[i]].id] = i < n_labelled;
  return out;
}

struct TrainItem {
  std::size_t mesh_index = 0;
  int v_index = 0;
  std::vector<int> t_indices;      // ascending phase-grid indices, size k_time
  std::vector<int> cyc_positions;  // positions into t_indices, size k_cyc
  bool labelled = true;
};

/// One loading -> unloading -> re-loading pass over a training item.
/// Accumulates parameter gradients when `bind` is the trained model.
template <typename T>
inline LossReport cycle_step(SurrogateModel<T>& model, const Dataset& ds,
                             const TrainItem& item, const TrainConfig& cfg,
                             const ad::EdgeIndex& graph, Rng& dropout_rng,
                             bool accumulate = true) {
  using Var = typename ad::Tape<T>::Var;
  const MeshRecord& rec = ds.meshes[item.mesh_index];
  const int n = rec.mesh.num_nodes();
  const int k = static_cast<int>(item.t_indices.size());
  const double v_target = rec.v_grid[static_cast<std::size_t>(item.v_index)];
  const T cs2 = static_cast<T>(model.cfg.coord_scale * model.cfg.coord_scale);
  const T ps = static_cast<T>(model.cfg.pressure_scale);

  ad::Tape<T> tape(/*grad_enabled=*/accumulate);
  NetRunner<T> run(tape, model, graph, /*training=*/true, &dropout_rng,
                   accumulate ? &model : nullptr);

  // Cycle start: ground-truth unloaded coordinates when labelled, the mesh's
  // generated coordinates otherwise.
  Mat<T> start = item.labelled ? rec.x_unload_star.cast<T>()
                               : rec.mesh.nodes.cast<T>();
  Var coords0 = tape.constant(start);

  std::vector<double> ts;
  for (const int ti : item.t_indices)
    ts.push_back(ds.t_grid[static_cast<std::size_t>(ti)]);

  LoadBuild<T> load1 = run.build_load(coords0, rec.mesh, v_target, ts);

  Var zero = tape.constant(Mat<T>::Zero(1, 1));
  Var sup_p = zero, sup_d = zero, sup_u = zero;
  Var cyc_load = zero, cyc_unload = zero;

  if (item.labelled) {
    Mat<T> p_target(k, 1);
    for (int i = 0; i < k; ++i)
      p_target(i, 0) =
          static_cast<T>(rec.p_star(item.v_index, item.t_indices[static_cast<std::size_t>(i)])) / ps;
    sup_p = tape.mse(load1.p_norm, tape.constant(std::move(p_target)));

    const Matf& xl = rec.x_load_star[static_cast<std::size_t>(item.v_index)];
    Mat<T> x_target(n * k, 3);
    for (int i = 0; i < n; ++i)
      for (int kk = 0; kk < k; ++kk)
        x_target.row(i * k + kk) = xl.row(i).cast<T>();
    sup_d = tape.scale(tape.mse(load1.x, tape.constant(std::move(x_target))),
                       T(1) / cs2);
  }

  if (!cfg.no_cycle && !item.cyc_positions.empty()) {
    Var unload_target =
        tape.constant(Mat<T>(rec.x_unload_star.cast<T>()));
    Var start_target = coords0;
    std::vector<Var> sup_u_terms, cyc_l_terms, cyc_u_terms;
    for (const int pos : item.cyc_positions) {
      const double t_ms = ts[static_cast<std::size_t>(pos)];
      std::vector<int> rows(static_cast<std::size_t>(n));
      for (int i = 0; i < n; ++i)
        rows[static_cast<std::size_t>(i)] = i * k + pos;
      Var x1_k = tape.rows_gather(load1.x, std::move(rows));

      UnloadBuild<T> un = run.build_unload(x1_k, rec.mesh, t_ms);
      if (item.labelled)
        sup_u_terms.push_back(
            tape.scale(tape.mse(un.x, unload_target), T(1) / cs2));
      cyc_u_terms.push_back(
          tape.scale(tape.mse(un.x, start_target), T(1) / cs2));

      LoadBuild<T> load2 = run.build_load(un.x, rec.mesh, v_target, {t_ms});
      cyc_l_terms.push_back(
          tape.scale(tape.mse(load2.x, tape.detach(x1_k)), T(1) / cs2));
    }
    auto mean_of = [&](const std::vector<Var>& terms) {
      Var s = terms[0];
      for (std::size_t i = 1; i < terms.size(); ++i) s = tape.add(s, terms[i]);
      return tape.scale(s, T(1) / static_cast<T>(terms.size()));
    };
    if (!sup_u_terms.empty()) sup_u = mean_of(sup_u_terms);
    cyc_load = mean_of(cyc_l_terms);
    cyc_unload = mean_of(cyc_u_terms);
  }

  Var total = tape.add(
      tape.add(tape.scale(sup_p, static_cast<T>(cfg.lambda_p)),
               tape.scale(tape.add(sup_d, sup_u),
                          static_cast<T>(cfg.lambda_d))),
      tape.scale(tape.add(cyc_load, cyc_unload),
                 static_cast<T>(cfg.lambda_cyc)));

  LossReport rep;
  rep.sup_p = static_cast<double>(tape.val(sup_p)(0, 0));
  rep.sup_d = static_cast<double>(tape.val(sup_d)(0, 0));
  rep.sup_u = static_cast<double>(tape.val(sup_u)(0, 0));
  rep.cyc_load = static_cast<double>(tape.val(cyc_load)(0, 0));
  rep.cyc_unload = static_cast<double>(tape.val(cyc_unload)(0, 0));
  rep.total = static_cast<double>(tape.val(total)(0, 0));
  check(std::isfinite(rep.total),
        "cycle_step: non-finite loss (sup_p=" + std::to_string(rep.sup_p) +
            ", sup_d=" + std::to_string(rep.sup_d) +
            ", cyc_load=" + std::to_string(rep.cyc_load) + ")");

  if (accumulate) tape.backward(total);
  return rep;
}

/// Decoupled-weight-decay adaptive-moment optimiser.
template <typename T>
class AdamW {
 public:
  AdamW(SurrogateModel<T>& model, double lr, double weight_decay)
      : model_(model), lr_(lr), wd_(weight_decay) {
    for (const auto& p : model.params) {
      m_.push_back(Mat<T>::Zero(p.value.rows(), p.value.cols()));
      v_.push_back(Mat<T>::Zero(p.value.rows(), p.value.cols()));
    }
  }

  void step() {
    ++t_;
    const T b1 = T(0.9), b2 = T(0.999), eps = T(1e-8);
    const T bc1 = T(1) - std::pow(b1, static_cast<T>(t_));
    const T bc2 = T(1) - std::pow(b2, static_cast<T>(t_));
    for (std::size_t i = 0; i < model_.params.size(); ++i) {
      auto& p = model_.params[i];
      m_[i] = b1 * m_[i] + (T(1) - b1) * p.grad;
      v_[i] = b2 * v_[i] + (T(1) - b2) * p.grad.cwiseProduct(p.grad);
      const Mat<T> update =
          (m_[i].array() / bc1 / ((v_[i].array() / bc2).sqrt() + eps) +
           static_cast<T>(wd_) * p.value.array())
              .matrix();
      p.value -= static_cast<T>(lr_) * update;
    }
  }

 private:
  SurrogateModel<T>& model_;
  double lr_, wd_;
  long t_ = 0;
  std::vector<Mat<T>> m_, v_;
};

template <typename T>
struct TrainResult {
  SurrogateModel<T> model;  // best-validation parameters
  std::vector<EpochEntry> history;
  std::map<std::string, bool> labelled;
  int labelled_count = 0;
  int train_mesh_count = 0;
};

namespace detail {

inline std::vector<int> stratified_phases(int grid_size, int k, Rng& rng) {
  const int kk = std::min(k, grid_size);
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(kk));
  for (int s = 0; s < kk; ++s) {
    const int lo = s * grid_size / kk;
    const int hi = (s + 1) * grid_size / kk;
    out.push_back(static_cast<int>(uniform_int(rng, lo, hi - 1)));
  }
  return out;
}

inline std::vector<int> choose_positions(int k_time, int k_cyc, Rng& rng) {
  std::vector<int> pool(static_cast<std::size_t>(k_time));
  for (int i = 0; i < k_time; ++i) pool[static_cast<std::size_t>(i)] = i;
  for (std::size_t i = pool.size(); i > 1; --i)
    std::swap(pool[i - 1], pool[static_cast<std::size_t>(uniform_int(
                               rng, 0, static_cast<std::int64_t>(i - 1)))]);
  pool.resize(static_cast<std::size_t>(std::min(k_cyc, k_time)));
  std::sort(pool.begin(), pool.end());
  return pool;
}

}  // namespace detail

/// Full optimisation loop. Writes `history.jsonl` and the best checkpoint to
/// `out_dir` when provided.
template <typename T>
inline TrainResult<T> train(const Dataset& ds, const TrainConfig& cfg,
                            const std::optional<std::filesystem::path>&
                                out_dir = std::nullopt) {
  cfg.validate();
  const auto train_idx = ds.split_indices("train");
  check(!train_idx.empty(), "train: dataset has no training meshes");

  SurrogateConfig scfg;
  scfg.use_gru = !cfg.no_gru;
  scfg.use_global_fusion = !cfg.no_global;
  scfg.cycle_ms = ds.oracle_params.cycle_ms;
  scfg.feature_norm = compute_feature_norm(ds);
  SurrogateModel<T> model = SurrogateModel<T>::init(scfg, cfg.seed);

  const auto labelled = assign_supervision(ds, cfg.sr, cfg.seed);
  int n_labelled = 0;
  for (const auto& [id, lab] : labelled) n_labelled += lab ? 1 : 0;

  // Validation: reserved volume slices on up to two labelled training meshes.
  std::vector<std::size_t> val_meshes;
  for (const auto idx : train_idx)
    if (labelled.at(ds.meshes[idx].id) && val_meshes.size() < 2)
      val_meshes.push_back(idx);
  std::map<std::size_t, std::vector<int>> reserved_v;
  for (const auto idx : val_meshes) {
    const int nv = static_cast<int>(ds.meshes[idx].v_grid.size());
    reserved_v[idx] = {nv / 4, (3 * nv) / 4};
  }

  std::vector<ad::EdgeIndex> graphs(ds.meshes.size());
  for (std::size_t i = 0; i < ds.meshes.size(); ++i)
    graphs[i] = ad::EdgeIndex::build(ds.meshes[i].mesh.edges,
                                     ds.meshes[i].mesh.num_nodes(), true);

  Rng item_rng(derive_seed(cfg.seed, 1));
  Rng dropout_rng(derive_seed(cfg.seed, 2));
  AdamW<T> opt(model, cfg.lr, cfg.weight_decay);
  model.zero_grads();

  auto run_validation = [&](const SurrogateModel<T>& m) {
    double se_d = 0.0, n_d = 0.0, se_p = 0.0, n_p = 0.0;
    for (const auto idx : val_meshes) {
      const MeshRecord& rec = ds.meshes[idx];
      const Matd unloaded = rec.x_unload_star.cast<double>();
      for (const int vi : reserved_v[idx]) {
        const auto pred =
            forward_load(m, rec.mesh, unloaded,
                         rec.v_grid[static_cast<std::size_t>(vi)], ds.t_grid,
                         graphs[idx]);
        const Matd truth =
            rec.x_load_star[static_cast<std::size_t>(vi)].cast<double>();
        const int n = rec.mesh.num_nodes();
        const int k = static_cast<int>(ds.t_grid.size());
        for (int i = 0; i < n; ++i)
          for (int kk = 0; kk < k; ++kk) {
            se_d += (pred.x_load.row(i * k + kk) - truth.row(i)).squaredNorm();
            n_d += 1.0;
          }
        for (int kk = 0; kk < k; ++kk) {
          const double dp =
              pred.p_mmhg[static_cast<std::size_t>(kk)] -
              static_cast<double>(rec.p_star(vi, kk));
          se_p += dp * dp;
          n_p += 1.0;
        }
      }
    }
    return std::pair{std::sqrt(se_d / std::max(n_d, 1.0)),
                     std::sqrt(se_p / std::max(n_p, 1.0))};
  };

  TrainResult<T> result;
  result.labelled = labelled;
  result.labelled_count = n_labelled;
  result.train_mesh_count = static_cast<int>(train_idx.size());
  double best_val = std::numeric_limits<double>::infinity();
  SurrogateModel<T> best = model;

  const int t_grid_size = static_cast<int>(ds.t_grid.size());
  const int eff_k_time = std::min(cfg.k_time, t_grid_size);
  const int eff_k_cyc = std::min(cfg.k_cyc, eff_k_time);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<std::size_t> order(train_idx);
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1],
                order[static_cast<std::size_t>(
                    uniform_int(item_rng, 0, static_cast<std::int64_t>(i - 1)))]);

    LossReport sum;
    int n_items = 0, in_batch = 0;
    for (const auto mesh_idx : order) {
      const MeshRecord& rec = ds.meshes[mesh_idx];
      const bool lab = labelled.at(rec.id);
      if (!lab && cfg.no_cycle) continue;  // no signal without cycle terms

      TrainItem item;
      item.mesh_index = mesh_idx;
      item.labelled = lab;
      // volume choice, avoiding the validation meshes' reserved slices
      const int nv = static_cast<int>(rec.v_grid.size());
      const auto res_it = reserved_v.find(mesh_idx);
      do {
        item.v_index = static_cast<int>(uniform_int(item_rng, 0, nv - 1));
      } while (res_it != reserved_v.end() &&
               std::find(res_it->second.begin(), res_it->second.end(),
                         item.v_index) != res_it->second.end());
      item.t_indices =
          detail::stratified_phases(t_grid_size, eff_k_time, item_rng);
      item.cyc_positions = detail::choose_positions(
          static_cast<int>(item.t_indices.size()), eff_k_cyc, item_rng);

      const LossReport rep =
          cycle_step(model, ds, item, cfg, graphs[mesh_idx], dropout_rng);
      check(rep.total <= 1e6, "train: loss diverged at epoch " +
                                  std::to_string(epoch) +
                                  " (total=" + std::to_string(rep.total) + ")");
      sum.sup_p += rep.sup_p;
      sum.sup_d += rep.sup_d;
      sum.sup_u += rep.sup_u;
      sum.cyc_load += rep.cyc_load;
      sum.cyc_unload += rep.cyc_unload;
      sum.total += rep.total;
      ++n_items;
      ++in_batch;

      if (in_batch == cfg.batch_meshes) {
        for (auto& p : model.params)
          p.grad /= static_cast<T>(in_batch);
        opt.step();
        model.zero_grads();
        in_batch = 0;
      }
    }
    if (in_batch > 0) {
      for (auto& p : model.params) p.grad /= static_cast<T>(in_batch);
      opt.step();
      model.zero_grads();
    }

    EpochEntry entry;
    entry.epoch = epoch;
    if (n_items > 0) {
      entry.mean = {sum.sup_p / n_items,    sum.sup_d / n_items,
                    sum.sup_u / n_items,    sum.cyc_load / n_items,
                    sum.cyc_unload / n_items, sum.total / n_items};
    }
    if ((epoch + 1) % cfg.val_every == 0 || epoch + 1 == cfg.epochs) {
      const auto [vd, vp] = run_validation(model);
      entry.val_rmse_disp = vd;
      entry.val_rmse_pressure = vp;
      if (vd < best_val) {
        best_val = vd;
        best = model;
        entry.is_best = true;
      }
    }
    result.history.push_back(entry);
  }

  result.model = std::move(best);
  if (out_dir) {
    std::filesystem::create_directories(*out_dir);
    save_model(result.model, *out_dir / "checkpoint");
    std::ofstream hist(*out_dir / "history.jsonl");
    check(hist.good(), "train: cannot write history.jsonl");
    for (const auto& e : result.history) {
      json j{{"epoch", e.epoch},
             {"sup_p", e.mean.sup_p},
             {"sup_d", e.mean.sup_d},
             {"sup_u", e.mean.sup_u},
             {"cyc_load", e.mean.cyc_load},
             {"cyc_unload", e.mean.cyc_unload},
             {"total", e.mean.total}};
      if (e.val_rmse_disp >= 0.0) {
        j["val_rmse_disp"] = e.val_rmse_disp;
        j["val_rmse_pressure"] = e.val_rmse_pressure;
        j["is_best"] = e.is_best;
      }
      hist << j.dump() << "\n";
    }
  }
  return result;
}

}  // namespace cgfenet
