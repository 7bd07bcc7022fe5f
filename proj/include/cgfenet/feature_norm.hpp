#pragma once

#include "cgfenet/mesh.hpp"
#include "cgfenet/oracle.hpp"
#include "cgfenet/surrogate.hpp"

namespace cgfenet {

/// Per-feature mean/std over training meshes, pooled across the unloaded
/// configuration and the most inflated stored state of each mesh.
inline FeatureNorm compute_feature_norm(const Dataset& ds) {
  Eigen::Matrix<double, 1, 8> sum = Eigen::Matrix<double, 1, 8>::Zero();
  Eigen::Matrix<double, 1, 8> sumsq = Eigen::Matrix<double, 1, 8>::Zero();
  double count = 0.0;
  for (const auto idx : ds.split_indices("train")) {
    const MeshRecord& rec = ds.meshes[idx];
    for (const Matd& coords :
         {Matd(rec.mesh.nodes), Matd(rec.x_load_star.back().cast<double>())}) {
      const Matd f = node_features(rec.mesh, coords,
                                   compute_descriptors(rec.mesh, coords));
      sum += f.colwise().sum();
      sumsq += f.cwiseProduct(f).colwise().sum();
      count += static_cast<double>(f.rows());
    }
  }
  FeatureNorm fn;
  for (int d = 0; d < 8; ++d) {
    const double mu = sum(0, d) / count;
    const double var = std::max(sumsq(0, d) / count - mu * mu, 0.0);
    fn.mean[static_cast<std::size_t>(d)] = mu;
    fn.std[static_cast<std::size_t>(d)] = std::max(std::sqrt(var), 1e-6);
  }
  return fn;
}

}  // namespace cgfenet
