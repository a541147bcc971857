#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <vector>

namespace semsmooth {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

using TokenIds = std::vector<int>;

}  // namespace semsmooth
