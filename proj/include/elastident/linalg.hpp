#pragma once

#include <Eigen/Core>
#include <Eigen/Dense>

namespace elastident {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Vec3i = Eigen::Vector3i;

}  // namespace elastident
