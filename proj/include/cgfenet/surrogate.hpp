#pragma once

// The graph surrogate network: residual GATv2 encoder with GraphNorm and a
// mean-pooled chamber token fused back through two-token cross-attention, a
// GRU temporal encoder over the volume-phase signal, broadcast-sum latent
// fusion, and three output heads (pressure, loading displacement, unloading
// displacement).

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <string>
#include <unordered_map>
#include <vector>

#include "cgfenet/common.hpp"
#include "cgfenet/container.hpp"
#include "cgfenet/mesh.hpp"
#include "cgfenet/tape.hpp"

namespace cgfenet {

struct FeatureNorm {
  std::array<double, 8> mean{};
  std::array<double, 8> std{1, 1, 1, 1, 1, 1, 1, 1};
};

struct SurrogateConfig {
  int hidden = 128;
  int heads = 4;
  int gat_blocks = 4;
  double dropout = 0.1;
  double cycle_ms = 800.0;       // t0 used for phase embedding
  double pressure_scale = 100.0; // mmHg, head output scaling
  double coord_scale = 10.0;     // mm, head output scaling
  bool use_gru = true;           // off under the non-recurrent ablation
  bool use_global_fusion = true; // off under the local-only ablation
  FeatureNorm feature_norm;

  void validate() const {
    check(hidden > 0 && heads > 0 && hidden % heads == 0,
          "SurrogateConfig: hidden must be divisible by heads");
    check(gat_blocks >= 1, "SurrogateConfig: need at least one block");
    check(pressure_scale > 0 && coord_scale > 0,
          "SurrogateConfig: scales must be positive");
    check(dropout >= 0.0 && dropout < 1.0, "SurrogateConfig: bad dropout");
  }
};

namespace detail {

struct ParamSpec {
  std::string name;
  int rows;
  int cols;
  enum Init { kGlorot, kZero, kOne } init;
};

inline std::vector<ParamSpec> parameter_registry(const SurrogateConfig& cfg) {
  const int H = cfg.hidden;
  const int dh = H / cfg.heads;
  const int Hh = H / 2;
  std::vector<ParamSpec> specs;
  auto add = [&](std::string n, int r, int c,
                 ParamSpec::Init i = ParamSpec::kGlorot) {
    specs.push_back({std::move(n), r, c, i});
  };

  add("enc.in.w", 8, H);
  add("enc.in.b", 1, H, ParamSpec::kZero);
  for (int b = 0; b < cfg.gat_blocks; ++b) {
    const std::string p = "enc.blk" + std::to_string(b) + ".";
    add(p + "ws", H, H);
    add(p + "wt", H, H);
    add(p + "wv", H, H);
    add(p + "att", cfg.heads, dh);
    add(p + "gn.gamma", 1, H, ParamSpec::kOne);
    add(p + "gn.beta", 1, H, ParamSpec::kZero);
    add(p + "gn.alpha", 1, H, ParamSpec::kOne);
  }
  add("fuse.wq", H, H);
  add("fuse.wk", H, H);
  add("fuse.wv", H, H);
  add("fuse.wo", H, H);
  add("fuse.bo", 1, H, ParamSpec::kZero);
  add("zg.w", H, H);
  add("zg.b", 1, H, ParamSpec::kZero);

  add("temb.w1", 4, H);
  add("temb.b1", 1, H, ParamSpec::kZero);
  add("temb.w2", H, H);
  add("temb.b2", 1, H, ParamSpec::kZero);
  for (const char* g : {"z", "r", "h"}) {
    add(std::string("gru.w") + g, H, H);
    add(std::string("gru.u") + g, H, H);
    add(std::string("gru.b") + g, 1, H, ParamSpec::kZero);
  }

  add("fuse_global.w", H, H);
  add("fuse_global.b", 1, H, ParamSpec::kZero);
  add("fuse_local.w", H, H);
  add("fuse_local.b", 1, H, ParamSpec::kZero);

  // Head output layers start at zero so an untrained model predicts zero
  // pressure and zero displacement (identity on coordinates).
  add("head_p.w1", H, Hh);
  add("head_p.b1", 1, Hh, ParamSpec::kZero);
  add("head_p.w2", Hh, 1, ParamSpec::kZero);
  add("head_p.b2", 1, 1, ParamSpec::kZero);
  add("head_d.w1", H, Hh);
  add("head_d.b1", 1, Hh, ParamSpec::kZero);
  add("head_d.w2", Hh, 3, ParamSpec::kZero);
  add("head_d.b2", 1, 3, ParamSpec::kZero);
  add("head_u.w1", H, Hh);
  add("head_u.b1", 1, Hh, ParamSpec::kZero);
  add("head_u.w2", Hh, 3, ParamSpec::kZero);
  add("head_u.b2", 1, 3, ParamSpec::kZero);
  return specs;
}

}  // namespace detail

template <typename T>
class SurrogateModel {
 public:
  SurrogateConfig cfg;
  std::vector<ad::Parameter<T>> params;

  static SurrogateModel init(const SurrogateConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    SurrogateModel m;
    m.cfg = cfg;
    Rng rng(derive_seed(seed, 0x5eed));
    for (const auto& spec : detail::parameter_registry(cfg)) {
      ad::Parameter<T> p;
      p.name = spec.name;
      p.value.resize(spec.rows, spec.cols);
      switch (spec.init) {
        case detail::ParamSpec::kZero:
          p.value.setZero();
          break;
        case detail::ParamSpec::kOne:
          p.value.setOnes();
          break;
        case detail::ParamSpec::kGlorot: {
          const double limit =
              std::sqrt(6.0 / static_cast<double>(spec.rows + spec.cols));
          for (Eigen::Index i = 0; i < p.value.size(); ++i)
            p.value.data()[i] =
                static_cast<T>(uniform(rng, -limit, limit));
          break;
        }
      }
      p.zero_grad();
      m.index_.emplace(p.name, m.params.size());
      m.params.push_back(std::move(p));
    }
    return m;
  }

  std::size_t index_of(const std::string& name) const {
    const auto it = index_.find(name);
    check(it != index_.end(), "unknown parameter '" + name + "'");
    return it->second;
  }

  ad::Parameter<T>& at(const std::string& name) {
    return params[index_of(name)];
  }
  const ad::Parameter<T>& at(const std::string& name) const {
    return params[index_of(name)];
  }

  void zero_grads() {
    for (auto& p : params) p.zero_grad();
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params) n += static_cast<std::size_t>(p.value.size());
    return n;
  }

  void rebuild_index() {
    index_.clear();
    for (std::size_t i = 0; i < params.size(); ++i)
      index_.emplace(params[i].name, i);
  }

 private:
  std::unordered_map<std::string, std::size_t> index_;
};

// ---------------------------------------------------------------------------
// Forward computation builders
// ---------------------------------------------------------------------------

template <typename T>
struct GraphLatents {
  typename ad::Tape<T>::Var z_local;   // N x hidden
  typename ad::Tape<T>::Var z_global;  // 1 x hidden
};

template <typename T>
struct FusedLatents {
  typename ad::Tape<T>::Var l_global;  // K x hidden
  typename ad::Tape<T>::Var l_local;   // (N*K) x hidden, node-major
};

template <typename T>
struct LoadBuild {
  typename ad::Tape<T>::Var x;       // (N*K) x 3, mm
  typename ad::Tape<T>::Var p;       // K x 1, mmHg
  typename ad::Tape<T>::Var p_norm;  // K x 1, pressure_scale units
  double v_ref_ml = 0.0;
};

template <typename T>
struct UnloadBuild {
  typename ad::Tape<T>::Var x;  // N x 3, mm
  double v_ref_ml = 0.0;
};

/// Builds the network's forward graph on a tape. When `bind` is null the
/// parameters enter as constants (inference); otherwise gradients accumulate
/// into the bound model.
template <typename T>
class NetRunner {
 public:
  using Tape = ad::Tape<T>;
  using Var = typename Tape::Var;

  NetRunner(Tape& tape, const SurrogateModel<T>& model,
            const ad::EdgeIndex& graph, bool training, Rng* dropout_rng,
            SurrogateModel<T>* bind = nullptr)
      : tape_(tape),
        model_(model),
        graph_(graph),
        training_(training),
        rng_(dropout_rng),
        bind_(bind) {}

  /// Attention weights of the last gat blocks / global fusion, for inspection.
  const std::vector<Mat<T>>& gat_alphas() const { return gat_alphas_; }
  const Mat<T>& fuse_weights() const { return fuse_weights_; }

  Var pvar(const std::string& name) {
    const auto idx = model_.index_of(name);
    if (bind_) return tape_.param(bind_->params[idx]);
    return tape_.constant(model_.params[idx].value);
  }

  Var linear(Var x, const std::string& prefix, const char* w = "w",
             const char* b = "b") {
    return tape_.add_rowvec(tape_.matmul(x, pvar(prefix + "." + w)),
                            pvar(prefix + "." + b));
  }

  /// Normalised N x 8 node features from a coordinate variable plus constant
  /// label / descriptor columns.
  Var features(Var coords_mm, const MeshGraph& mesh,
               const GlobalDescriptors& desc) {
    const FeatureNorm& fn = model_.cfg.feature_norm;
    Mat<T> mean3(1, 3), istd3(1, 3);
    for (int d = 0; d < 3; ++d) {
      mean3(0, d) = static_cast<T>(fn.mean[static_cast<std::size_t>(d)]);
      istd3(0, d) = static_cast<T>(1.0 / fn.std[static_cast<std::size_t>(d)]);
    }
    Var c = tape_.mul_rowvec(
        tape_.sub_rowvec(coords_mm, tape_.constant(mean3)),
        tape_.constant(istd3));

    const int n = mesh.num_nodes();
    Mat<T> rest(n, 5);
    const double vals[5] = {0.0, desc.cavity_volume_ml, desc.wall_mean_mm,
                            desc.wall_min_mm, desc.wall_max_mm};
    for (int i = 0; i < n; ++i) {
      rest(i, 0) = static_cast<T>(
          (static_cast<double>(mesh.labels[static_cast<std::size_t>(i)]) -
           fn.mean[3]) /
          fn.std[3]);
      for (int d = 1; d < 5; ++d)
        rest(i, d) = static_cast<T>(
            (vals[d] - fn.mean[static_cast<std::size_t>(3 + d)]) /
            fn.std[static_cast<std::size_t>(3 + d)]);
    }
    return tape_.hcat(c, tape_.constant(std::move(rest)));
  }

  Var graphnorm(Var x, const std::string& prefix) {
    Var alpha = pvar(prefix + ".gn.alpha");
    Var gamma = pvar(prefix + ".gn.gamma");
    Var beta = pvar(prefix + ".gn.beta");
    Var mu = tape_.mean_rows(x);
    Var shifted = tape_.sub_rowvec(x, tape_.mul(alpha, mu));
    Var var = tape_.mean_rows(tape_.square(shifted));
    Var inv = tape_.rsqrt_eps(var, T(1e-5));
    return tape_.add_rowvec(
        tape_.mul_rowvec(tape_.mul_rowvec(shifted, inv), gamma), beta);
  }

  Var gat_block(Var h, int block) {
    const std::string p = "enc.blk" + std::to_string(block);
    Var hs = tape_.matmul(h, pvar(p + ".ws"));
    Var ht = tape_.matmul(h, pvar(p + ".wt"));
    Var hv = tape_.matmul(h, pvar(p + ".wv"));
    gat_alphas_.emplace_back();
    Var agg = tape_.gat_attention(hs, ht, hv, pvar(p + ".att"), graph_,
                                  model_.cfg.heads, T(0.2),
                                  &gat_alphas_.back());
    Var act = tape_.relu(graphnorm(agg, p));
    Var drop = training_ && rng_
                   ? tape_.dropout(act, static_cast<T>(model_.cfg.dropout),
                                   *rng_, true)
                   : act;
    return tape_.add(h, drop);
  }

  /// Mean-pooled chamber token fused back via two-token cross-attention.
  std::pair<Var, Var> global_fuse(Var h) {
    const int heads = model_.cfg.heads;
    const int dh = model_.cfg.hidden / heads;
    const int n = static_cast<int>(tape_.val(h).rows());
    const T inv_sqrt_dh = T(1) / std::sqrt(static_cast<T>(dh));

    Var g = tape_.mean_rows(h);
    Var q = tape_.matmul(h, pvar("fuse.wq"));
    Var kg = tape_.broadcast_row(tape_.matmul(g, pvar("fuse.wk")), n);
    Var kh = tape_.matmul(h, pvar("fuse.wk"));
    Var vg = tape_.broadcast_row(tape_.matmul(g, pvar("fuse.wv")), n);
    Var vh = tape_.matmul(h, pvar("fuse.wv"));

    Var sg = tape_.scale(tape_.head_dot(q, kg, heads), inv_sqrt_dh);
    Var sh = tape_.scale(tape_.head_dot(q, kh, heads), inv_sqrt_dh);
    // two-token softmax: w_g = exp(sg) / (exp(sg) + exp(sh))
    Var wg = tape_.sigmoid(tape_.sub(sg, sh));
    Var wh = tape_.affine(wg, T(-1), T(1));
    fuse_weights_ = tape_.val(wg);

    Var attended = tape_.add(tape_.head_scale(vg, wg, heads),
                             tape_.head_scale(vh, wh, heads));
    Var out = tape_.add(
        h, tape_.add_rowvec(tape_.matmul(attended, pvar("fuse.wo")),
                            pvar("fuse.bo")));
    return {out, g};
  }

  GraphLatents<T> encode_graph(Var feat) {
    check(tape_.val(feat).allFinite(), "encode_graph: non-finite features");
    Var h = linear(feat, "enc.in");
    for (int b = 0; b < model_.cfg.gat_blocks; ++b) h = gat_block(h, b);
    if (model_.cfg.use_global_fusion) {
      auto [fused, token] = global_fuse(h);
      return {fused, linear(token, "zg")};
    }
    return {h, tape_.mean_rows(h)};
  }

  /// Temporal latent sequence from (V_target, dV, sin, cos) per phase sample.
  Var encode_time(double v_target_ml, double v_ref_ml,
                  const std::vector<double>& t_ms) {
    check(!t_ms.empty(), "encode_time: empty phase grid");
    const double t0 = model_.cfg.cycle_ms;
    const auto k = static_cast<Eigen::Index>(t_ms.size());
    Mat<T> in(k, 4);
    for (Eigen::Index i = 0; i < k; ++i) {
      const double t = t_ms[static_cast<std::size_t>(i)];
      check(t >= 0.0 && t < t0, "encode_time: phase outside [0, t0)");
      const double ang = 2.0 * std::numbers::pi * t / t0;
      in(i, 0) = static_cast<T>(v_target_ml * 0.01);
      in(i, 1) = static_cast<T>((v_target_ml - v_ref_ml) * 0.01);
      in(i, 2) = static_cast<T>(std::sin(ang));
      in(i, 3) = static_cast<T>(std::cos(ang));
    }
    Var e1 = tape_.relu(linear(tape_.constant(std::move(in)), "temb", "w1", "b1"));
    Var emb = linear(e1, "temb", "w2", "b2");
    if (!model_.cfg.use_gru) return emb;

    Var wz = pvar("gru.wz"), uz = pvar("gru.uz"), bz = pvar("gru.bz");
    Var wr = pvar("gru.wr"), ur = pvar("gru.ur"), br = pvar("gru.br");
    Var wh = pvar("gru.wh"), uh = pvar("gru.uh"), bh = pvar("gru.bh");
    Var h = tape_.constant(Mat<T>::Zero(1, model_.cfg.hidden));
    std::vector<Var> states;
    states.reserve(static_cast<std::size_t>(k));
    for (Eigen::Index i = 0; i < k; ++i) {
      Var x = tape_.row(emb, static_cast<int>(i));
      Var z = tape_.sigmoid(
          tape_.add(tape_.add(tape_.matmul(x, wz), tape_.matmul(h, uz)), bz));
      Var r = tape_.sigmoid(
          tape_.add(tape_.add(tape_.matmul(x, wr), tape_.matmul(h, ur)), br));
      Var cand = tape_.tanh_(tape_.add(
          tape_.add(tape_.matmul(x, wh), tape_.matmul(tape_.mul(r, h), uh)),
          bh));
      h = tape_.add(tape_.mul(tape_.affine(z, T(-1), T(1)), h),
                    tape_.mul(z, cand));
      states.push_back(h);
    }
    return tape_.vstack(states);
  }

  FusedLatents<T> fuse(Var z_local, Var z_global, Var t_seq) {
    const int n = static_cast<int>(tape_.val(z_local).rows());
    const int k = static_cast<int>(tape_.val(t_seq).rows());
    Var l_global = linear(tape_.add_rowvec(t_seq, z_global), "fuse_global");
    Var summed = tape_.add(tape_.rows_repeat_each(z_local, k),
                           tape_.rows_tile(l_global, n));
    Var l_local = linear(summed, "fuse_local");
    return {l_global, l_local};
  }

  Var head(Var x, const std::string& prefix) {
    Var h1 = tape_.relu(linear(x, prefix, "w1", "b1"));
    return linear(h1, prefix, "w2", "b2");
  }

  /// Forward loading from `coords_mm` (a tape variable) to pressures and
  /// loaded coordinates over the given phases at one target volume.
  /// Descriptor features are recomputed from the coordinate values.
  LoadBuild<T> build_load(Var coords_mm, const MeshGraph& mesh,
                          double v_target_ml,
                          const std::vector<double>& t_ms) {
    const Matd coords_d = tape_.val(coords_mm).template cast<double>();
    const GlobalDescriptors desc = compute_descriptors(mesh, coords_d);
    const int k = static_cast<int>(t_ms.size());

    GraphLatents<T> gl = encode_graph(features(coords_mm, mesh, desc));
    Var t_seq = encode_time(v_target_ml, desc.cavity_volume_ml, t_ms);
    FusedLatents<T> f = fuse(gl.z_local, gl.z_global, t_seq);

    LoadBuild<T> out;
    out.v_ref_ml = desc.cavity_volume_ml;
    out.p_norm = head(f.l_global, "head_p");
    out.p = tape_.scale(out.p_norm, static_cast<T>(model_.cfg.pressure_scale));
    Var u = tape_.scale(head(f.l_local, "head_d"),
                        static_cast<T>(model_.cfg.coord_scale));
    out.x = tape_.add(tape_.rows_repeat_each(coords_mm, k), u);
    check(tape_.val(out.x).allFinite() && tape_.val(out.p).allFinite(),
          "build_load: non-finite prediction");
    return out;
  }

  /// Inverse unloading of a loaded configuration at one phase. The temporal
  /// signal is evaluated at the loaded state's own cavity volume (dV = 0).
  UnloadBuild<T> build_unload(Var coords_mm, const MeshGraph& mesh,
                              double t_ms) {
    const Matd coords_d = tape_.val(coords_mm).template cast<double>();
    const GlobalDescriptors desc = compute_descriptors(mesh, coords_d);

    GraphLatents<T> gl = encode_graph(features(coords_mm, mesh, desc));
    Var t_seq = encode_time(desc.cavity_volume_ml, desc.cavity_volume_ml,
                            {t_ms});
    FusedLatents<T> f = fuse(gl.z_local, gl.z_global, t_seq);

    UnloadBuild<T> out;
    out.v_ref_ml = desc.cavity_volume_ml;
    Var u = tape_.scale(head(f.l_local, "head_u"),
                        static_cast<T>(model_.cfg.coord_scale));
    out.x = tape_.add(coords_mm, u);
    check(tape_.val(out.x).allFinite(), "build_unload: non-finite prediction");
    return out;
  }

 private:
  Tape& tape_;
  const SurrogateModel<T>& model_;
  const ad::EdgeIndex& graph_;
  bool training_;
  Rng* rng_;
  SurrogateModel<T>* bind_;
  std::vector<Mat<T>> gat_alphas_;
  Mat<T> fuse_weights_;
};

// ---------------------------------------------------------------------------
// Inference wrappers
// ---------------------------------------------------------------------------

struct ForwardPrediction {
  std::vector<double> p_mmhg;  // K
  Matd x_load;                 // (N*K) x 3, node-major

  Matd slice(int k, int n_nodes, int k_total) const {
    Matd out(n_nodes, 3);
    for (int i = 0; i < n_nodes; ++i) out.row(i) = x_load.row(i * k_total + k);
    return out;
  }
};

struct UnloadPrediction {
  Matd x_unload;  // N x 3
};

template <typename T>
inline ForwardPrediction forward_load(const SurrogateModel<T>& model,
                                      const MeshGraph& mesh,
                                      const Matd& coords,
                                      double v_target_ml,
                                      const std::vector<double>& t_ms,
                                      const ad::EdgeIndex& graph) {
  ad::Tape<T> tape(/*grad_enabled=*/false);
  NetRunner<T> run(tape, model, graph, /*training=*/false, nullptr);
  auto build = run.build_load(tape.constant(coords.cast<T>()), mesh,
                              v_target_ml, t_ms);
  ForwardPrediction out;
  const auto& p = tape.val(build.p);
  for (Eigen::Index i = 0; i < p.rows(); ++i)
    out.p_mmhg.push_back(static_cast<double>(p(i, 0)));
  out.x_load = tape.val(build.x).template cast<double>();
  return out;
}

template <typename T>
inline ForwardPrediction forward_load(const SurrogateModel<T>& model,
                                      const MeshGraph& mesh,
                                      const Matd& coords, double v_target_ml,
                                      const std::vector<double>& t_ms) {
  const auto graph =
      ad::EdgeIndex::build(mesh.edges, mesh.num_nodes(), true);
  return forward_load(model, mesh, coords, v_target_ml, t_ms, graph);
}

template <typename T>
inline UnloadPrediction forward_unload(const SurrogateModel<T>& model,
                                       const MeshGraph& mesh,
                                       const Matd& loaded_coords, double t_ms,
                                       const ad::EdgeIndex& graph) {
  ad::Tape<T> tape(/*grad_enabled=*/false);
  NetRunner<T> run(tape, model, graph, /*training=*/false, nullptr);
  auto build =
      run.build_unload(tape.constant(loaded_coords.cast<T>()), mesh, t_ms);
  return {tape.val(build.x).template cast<double>()};
}

template <typename T>
inline UnloadPrediction forward_unload(const SurrogateModel<T>& model,
                                       const MeshGraph& mesh,
                                       const Matd& loaded_coords,
                                       double t_ms) {
  const auto graph =
      ad::EdgeIndex::build(mesh.edges, mesh.num_nodes(), true);
  return forward_unload(model, mesh, loaded_coords, t_ms, graph);
}

// ---------------------------------------------------------------------------
// Checkpointing
// ---------------------------------------------------------------------------

inline json surrogate_config_to_json(const SurrogateConfig& cfg) {
  return json{{"hidden", cfg.hidden},
              {"heads", cfg.heads},
              {"gat_blocks", cfg.gat_blocks},
              {"dropout", cfg.dropout},
              {"cycle_ms", cfg.cycle_ms},
              {"pressure_scale", cfg.pressure_scale},
              {"coord_scale", cfg.coord_scale},
              {"use_gru", cfg.use_gru},
              {"use_global_fusion", cfg.use_global_fusion},
              {"feature_mean", cfg.feature_norm.mean},
              {"feature_std", cfg.feature_norm.std}};
}

inline SurrogateConfig surrogate_config_from_json(const json& j) {
  SurrogateConfig cfg;
  cfg.hidden = j.at("hidden").get<int>();
  cfg.heads = j.at("heads").get<int>();
  cfg.gat_blocks = j.at("gat_blocks").get<int>();
  cfg.dropout = j.at("dropout").get<double>();
  cfg.cycle_ms = j.at("cycle_ms").get<double>();
  cfg.pressure_scale = j.at("pressure_scale").get<double>();
  cfg.coord_scale = j.at("coord_scale").get<double>();
  cfg.use_gru = j.at("use_gru").get<bool>();
  cfg.use_global_fusion = j.at("use_global_fusion").get<bool>();
  cfg.feature_norm.mean = j.at("feature_mean").get<std::array<double, 8>>();
  cfg.feature_norm.std = j.at("feature_std").get<std::array<double, 8>>();
  cfg.validate();
  return cfg;
}

template <typename T>
inline void save_model(const SurrogateModel<T>& model,
                       const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  json index = json::array();
  std::vector<float> blob;
  for (const auto& p : model.params) {
    index.push_back({{"name", p.name},
                     {"rows", p.value.rows()},
                     {"cols", p.value.cols()},
                     {"offset", blob.size()}});
    for (Eigen::Index i = 0; i < p.value.size(); ++i)
      blob.push_back(static_cast<float>(p.value.data()[i]));
  }
  json manifest;
  manifest["format_version"] = 1;
  manifest["config"] = surrogate_config_to_json(model.cfg);
  manifest["params"] = std::move(index);
  write_json_file(dir / "model.json", manifest);

  std::ofstream out(dir / "params.bin", std::ios::binary);
  check(out.good(), "save_model: cannot write parameter blob");
  out.write(reinterpret_cast<const char*>(blob.data()),
            static_cast<std::streamsize>(blob.size() * sizeof(float)));
  check(out.good(), "save_model: parameter blob write failed");
}

template <typename T>
inline SurrogateModel<T> load_model(const std::filesystem::path& dir) {
  const json manifest = read_json_file(dir / "model.json", "checkpoint manifest");
  check(manifest.at("format_version").get<int>() == 1,
        "load_model: checkpoint version mismatch");
  const SurrogateConfig cfg = surrogate_config_from_json(manifest.at("config"));

  std::ifstream in(dir / "params.bin", std::ios::binary | std::ios::ate);
  check(in.good(), "load_model: parameter blob not found");
  const auto bytes = static_cast<std::size_t>(in.tellg());
  in.seekg(0);
  std::vector<float> blob(bytes / sizeof(float));
  in.read(reinterpret_cast<char*>(blob.data()),
          static_cast<std::streamsize>(bytes));
  check(in.good(), "load_model: corrupt parameter blob");

  SurrogateModel<T> model = SurrogateModel<T>::init(cfg, 0);
  const auto expected = detail::parameter_registry(cfg);
  const json& index = manifest.at("params");
  check(index.size() == expected.size(),
        "load_model: parameter index does not match configuration");
  for (std::size_t i = 0; i < expected.size(); ++i) {
    const json& e = index[i];
    check(e.at("name").get<std::string>() == expected[i].name,
          "load_model: parameter name mismatch at index " + std::to_string(i));
    const auto rows = e.at("rows").get<Eigen::Index>();
    const auto cols = e.at("cols").get<Eigen::Index>();
    check(rows == expected[i].rows && cols == expected[i].cols,
          "load_model: stored array shape conflicts with configuration for '" +
              expected[i].name + "'");
    const auto offset = e.at("offset").get<std::size_t>();
    const auto count = static_cast<std::size_t>(rows * cols);
    check(offset + count <= blob.size(),
          "load_model: corrupt payload (blob too short for '" +
              expected[i].name + "')");
    auto& p = model.params[i];
    for (Eigen::Index k = 0; k < p.value.size(); ++k)
      p.value.data()[k] =
          static_cast<T>(blob[offset + static_cast<std::size_t>(k)]);
  }
  return model;
}

}  // namespace cgfenet
