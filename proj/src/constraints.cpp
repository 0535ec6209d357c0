#include "dpf/constraints.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <iostream>

namespace dpf {

Tensor constrain_cholesky(const Tensor& raw, double floor, bool* floored) {
  if (raw.rank() != 2 || raw.shape[0] != raw.shape[1])
    throw ContractError("constrain_cholesky: expected square matrix, got " +
                        shape_str(raw.shape));
  const Index d = raw.shape[0];
  Tensor out = raw;
  out.tape = nullptr;
  out.node = -1;
  bool hit_floor = false;
  for (Index i = 0; i < d; ++i) {
    for (Index j = i + 1; j < d; ++j) out.data[i * d + j] = 0.0;
    double& diag = out.data[i * d + i];
    if (diag < 0.0) diag = -diag;
    if (diag == 0.0) {
      diag = floor;
      hit_floor = true;
    }
  }
  if (hit_floor) {
    if (floored != nullptr) *floored = true;
    else
      std::cerr << "warning: zero diagonal entry in Cholesky factor clamped to " << floor
                << "\n";
  } else if (floored != nullptr) {
    *floored = false;
  }
  return out;
}

double spectral_radius(const Tensor& m) {
  if (m.rank() != 2 || m.shape[0] != m.shape[1])
    throw ContractError("spectral_radius: expected square matrix, got " + shape_str(m.shape));
  const Index d = m.shape[0];
  Eigen::MatrixXd mat(d, d);
  for (Index i = 0; i < d; ++i)
    for (Index j = 0; j < d; ++j) mat(i, j) = m.data[i * d + j];
  Eigen::EigenSolver<Eigen::MatrixXd> solver(mat, /*computeEigenvectors=*/false);
  return solver.eigenvalues().cwiseAbs().maxCoeff();
}

Tensor constrain_spectral_radius(const Tensor& raw, double max_radius) {
  if (max_radius <= 0.0 || max_radius > 1.0)
    throw ContractError("constrain_spectral_radius: max_radius must be in (0,1]");
  const double rho = spectral_radius(raw);
  Tensor out = raw;
  out.tape = nullptr;
  out.node = -1;
  if (rho > max_radius) out.data /= rho;
  return out;
}

Tensor constrain_positive(const Tensor& raw, double floor) {
  Tensor out = raw;
  out.tape = nullptr;
  out.node = -1;
  for (Index i = 0; i < out.numel(); ++i) {
    double& v = out.data[i];
    if (v < 0.0) v = -v;
    if (v == 0.0) v = floor;
  }
  return out;
}

Tensor constrain_interval(const Tensor& raw, double lo, double hi) {
  Tensor out = raw;
  out.tape = nullptr;
  out.node = -1;
  out.data = out.data.cwiseMax(lo).cwiseMin(hi);
  return out;
}

}  // namespace dpf
