#pragma once

#include <Eigen/Dense>

#include <limits>
#include <stdexcept>
#include <string>

namespace sfs {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// Path-contiguous storage: one row per ensemble member.
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Violated precondition of a public operation (bad dimension, out-of-range
/// parameter, incompatible configuration). The CLI maps it to exit code 2.
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

/// Calls f with row k of a column-major block as an array of length cols().
/// A single-row block is passed as a contiguous map so that f vectorizes.
template <typename F>
decltype(auto) with_row(const Eigen::Ref<const Matrix>& block, Eigen::Index k, F&& f) {
  if (block.rows() == 1 && block.outerStride() == 1)
    return f(Eigen::Map<const Eigen::ArrayXd>(block.data(), block.cols()));
  return f(Eigen::Map<const Eigen::ArrayXd, 0, Eigen::InnerStride<>>(block.data() + k, block.cols(),
                                                                      Eigen::InnerStride<>(block.outerStride())));
}

/// |x_j|^2 for every column x_j of a d x M block.
inline void column_squared_norms(const Eigen::Ref<const Matrix>& block, Eigen::Ref<Vector> out) {
  out.setZero();
  for (Eigen::Index k = 0; k < block.rows(); ++k) with_row(block, k, [&](const auto& x) { out.array() += x.square(); });
}

}  // namespace sfs
