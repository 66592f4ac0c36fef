#pragma once

#include <Eigen/Core>

namespace ppm {

/// Dense row-major matrix of doubles; the storage type for every numeric array.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

}  // namespace ppm
