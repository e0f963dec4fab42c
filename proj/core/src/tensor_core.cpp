#include "stm/tensor_core.hpp"

#include <string>

#include "stm/error.hpp"

namespace stm {
namespace {

Eigen::VectorXd singular_values(const Eigen::MatrixXd& a) {
  if (a.size() == 0) return Eigen::VectorXd();
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a);
  return svd.singularValues();
}

}  // namespace

double projective_norm(const Tensor2& x) { return singular_values(x.entries).sum(); }

double injective_norm(const Tensor2& x) {
  const Eigen::VectorXd s = singular_values(x.entries);
  return s.size() == 0 ? 0.0 : s.maxCoeff();
}

double hilbert_norm(const Tensor2& x) { return x.entries.norm(); }

double spectral_norm(const Eigen::MatrixXd& a) {
  const Eigen::VectorXd s = singular_values(a);
  return s.size() == 0 ? 0.0 : s.maxCoeff();
}

Tensor2 operator_tensor_apply(const Eigen::MatrixXd& s, const Eigen::MatrixXd& t, const Tensor2& x) {
  if (s.cols() != x.rows() || t.cols() != x.cols()) {
    throw InvalidArgument("operator_tensor_apply: shapes (" + std::to_string(s.rows()) + "x" +
                          std::to_string(s.cols()) + ") (x) (" + std::to_string(t.rows()) + "x" +
                          std::to_string(t.cols()) + ") cannot act on a " +
                          std::to_string(x.rows()) + "x" + std::to_string(x.cols()) + " tensor");
  }
  return Tensor2(s * x.entries * t.transpose());
}

double dual_pair(const Tensor2& x, const Tensor2& y) {
  if (x.rows() != y.rows() || x.cols() != y.cols()) {
    throw InvalidArgument("dual_pair: tensors must have identical shape");
  }
  return x.entries.cwiseProduct(y.entries).sum();
}

Tensor2 duality_witness(const Tensor2& x) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(x.entries, Eigen::ComputeThinU | Eigen::ComputeThinV);
  return Tensor2(svd.matrixU() * svd.matrixV().transpose());
}

}  // namespace stm
