#pragma once

#include <Eigen/Dense>

namespace eqtrend {

struct BoxQpResult {
  Eigen::VectorXd x;
  double objective = 0.0;  // ½x'Hx − g'x
  int iterations = 0;
};

// Minimizes ½x'Hx − g'x subject to lo ≤ x ≤ hi with a primal active-set
// method. H must be symmetric positive definite. Throws RankError when a
// reduced system is singular.
BoxQpResult solve_box_qp(const Eigen::MatrixXd& H, const Eigen::VectorXd& g, const Eigen::VectorXd& lo,
                         const Eigen::VectorXd& hi);

}  // namespace eqtrend
