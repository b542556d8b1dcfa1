#pragma once

#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "tubemav/errors.hpp"

namespace tubemav {

// Reference to one side of a two-sided row constraint lo <= c'z <= hi.
// side: -1 lower bound, +1 upper bound, 0 equality (lo == hi).
struct QpConstraintRef {
  int row = 0;
  int side = 0;
  friend bool operator==(const QpConstraintRef& a, const QpConstraintRef& b) {
    return a.row == b.row && a.side == b.side;
  }
};

struct QpSolution {
  Eigen::VectorXd z;
  Eigen::VectorXd lambda;  // signed per-row multipliers (lower > 0, upper < 0)
  std::vector<QpConstraintRef> active;
  int iterations = 0;
  double kkt_residual = 0.0;  // scaled stationarity residual
};

// Strictly convex QP
//     min 1/2 z'Hz + g'z   s.t.   lo <= C z <= hi
// solved with the Goldfarb-Idnani dual active-set method. The Hessian and
// constraint rows are fixed at construction so the factorization is reused
// across solves; g, lo, hi vary per call. Rows with lo == hi are equalities.
class DenseQp {
 public:
  DenseQp(Eigen::MatrixXd h, Eigen::MatrixXd c)
      : h_(std::move(h)), c_(std::move(c)), llt_(h_) {
    if (h_.rows() != h_.cols() || c_.cols() != h_.rows()) {
      throw DimensionMismatch("DenseQp: inconsistent H/C sizes");
    }
    if (llt_.info() != Eigen::Success) {
      throw Error("DenseQp: Hessian is not positive definite");
    }
  }

  int num_vars() const { return static_cast<int>(h_.rows()); }
  int num_rows() const { return static_cast<int>(c_.rows()); }

  QpSolution solve(const Eigen::VectorXd& g, const Eigen::VectorXd& lo,
                   const Eigen::VectorXd& hi,
                   const std::vector<QpConstraintRef>* hint = nullptr) const {
    const int n = num_vars();
    const int m = num_rows();
    if (g.size() != n || lo.size() != m || hi.size() != m) {
      throw DimensionMismatch("DenseQp::solve: inconsistent vector sizes");
    }

    QpSolution sol;
    sol.z = llt_.solve(-g);  // unconstrained optimum

    // Active-set bookkeeping. Columns of normals/hi_normals track `active`.
    std::vector<QpConstraintRef> active;
    std::vector<double> mult;
    Eigen::MatrixXd normals(n, 0);
    Eigen::MatrixXd hi_normals(n, 0);  // H^-1 * normals, cached per column

    auto normal_of = [&](const QpConstraintRef& ref) -> Eigen::VectorXd {
      // Equality and lower sides use +c_row (c'z >= b), upper uses -c_row.
      if (ref.side > 0) return -c_.row(ref.row).transpose();
      return c_.row(ref.row).transpose();
    };
    auto offset_of = [&](const QpConstraintRef& ref) {
      if (ref.side > 0) return -hi[ref.row];
      return lo[ref.row];
    };
    auto slack_of = [&](const QpConstraintRef& ref) {
      return normal_of(ref).dot(sol.z) - offset_of(ref);
    };
    auto is_active = [&](int row) {
      for (const auto& a : active) {
        if (a.row == row) return true;
      }
      return false;
    };
    auto push_active = [&](const QpConstraintRef& ref, double u,
                           const Eigen::VectorXd& nrm,
                           const Eigen::VectorXd& hi_nrm) {
      active.push_back(ref);
      mult.push_back(u);
      normals.conservativeResize(Eigen::NoChange, normals.cols() + 1);
      normals.col(normals.cols() - 1) = nrm;
      hi_normals.conservativeResize(Eigen::NoChange, hi_normals.cols() + 1);
      hi_normals.col(hi_normals.cols() - 1) = hi_nrm;
    };
    auto drop_active = [&](int idx) {
      const int na = static_cast<int>(active.size());
      for (int j = idx; j + 1 < na; ++j) {
        normals.col(j) = normals.col(j + 1);
        hi_normals.col(j) = hi_normals.col(j + 1);
      }
      normals.conservativeResize(Eigen::NoChange, na - 1);
      hi_normals.conservativeResize(Eigen::NoChange, na - 1);
      active.erase(active.begin() + idx);
      mult.erase(mult.begin() + idx);
    };

    // Brings constraint `ref` into the active set, taking dual partial steps
    // (dropping blocking constraints) as needed. Returns false on
    // infeasibility.
    auto enforce = [&](const QpConstraintRef& ref) {
      const Eigen::VectorXd nrm = normal_of(ref);
      const Eigen::VectorXd hi_nrm = llt_.solve(nrm);
      const double curvature = nrm.dot(hi_nrm);  // n' H^-1 n > 0
      double u_new = 0.0;
      for (;;) {
        ++sol.iterations;
        if (sol.iterations > max_iterations()) {
          throw MaxIter("DenseQp: iteration cap " +
                        std::to_string(max_iterations()) + " reached");
        }
        const int na = static_cast<int>(active.size());

        // Step directions: dz in primal space, r for active multipliers.
        Eigen::VectorXd r(na);
        Eigen::VectorXd dz;
        if (na == 0) {
          dz = hi_nrm;
        } else {
          const Eigen::MatrixXd s = normals.transpose() * hi_normals;
          r = s.ldlt().solve(normals.transpose() * hi_nrm);
          dz = hi_nrm - hi_normals * r;
        }
        const double denom = nrm.dot(dz);
        const bool dependent = !(denom > 1e-13 * curvature);
        const double slack = nrm.dot(sol.z) - offset_of(ref);
        if (dependent && ref.side == 0 &&
            std::abs(slack) <= 1e-9 * (1.0 + std::abs(offset_of(ref)))) {
          return true;  // redundant equality, already satisfied
        }

        // Dual step bound: first active inequality multiplier to hit zero.
        double t1 = std::numeric_limits<double>::infinity();
        int blocking = -1;
        for (int k = 0; k < na; ++k) {
          if (active[k].side != 0 && r[k] > 1e-14) {
            const double step = mult[k] / r[k];
            if (step < t1) {
              t1 = step;
              blocking = k;
            }
          }
        }

        // Primal step to satisfy `ref` exactly.
        double t2 = std::numeric_limits<double>::infinity();
        if (!dependent) t2 = -slack / denom;

        if (std::isinf(t1) && std::isinf(t2)) {
          return false;  // dual unbounded: primal infeasible
        }
        const double t = std::min(t1, t2);
        if (!dependent) sol.z += t * dz;
        for (int k = 0; k < na; ++k) mult[k] -= t * r[k];
        u_new += t;

        if (t == t2 && t2 <= t1) {
          push_active(ref, u_new, nrm, hi_nrm);
          return true;
        }
        drop_active(blocking);
      }
    };

    auto fail_infeasible = [&](const QpConstraintRef& ref) {
      const char* side_name = ref.side < 0   ? "lower"
                              : ref.side > 0 ? "upper"
                                             : "equality";
      throw Infeasible("DenseQp: infeasible at row " +
                       std::to_string(ref.row) + " (" + side_name +
                       " bound)");
    };

    // Equality rows first; they never leave the active set.
    for (int i = 0; i < m; ++i) {
      if (lo[i] > hi[i]) {
        throw Infeasible("DenseQp: empty bound interval at row " +
                         std::to_string(i));
      }
      if (lo[i] == hi[i]) {
        QpConstraintRef ref{i, 0};
        if (!enforce(ref)) fail_infeasible(ref);
      }
    }

    const double feas_tol = 1e-10;
    auto most_violated = [&]() {
      QpConstraintRef worst{-1, 0};
      double worst_slack = -feas_tol;
      for (int i = 0; i < m; ++i) {
        if (lo[i] == hi[i]) continue;
        const double v = c_.row(i).dot(sol.z);
        const double s_lo = v - lo[i];
        const double s_hi = hi[i] - v;
        if (s_lo < worst_slack) {
          worst_slack = s_lo;
          worst = {i, -1};
        }
        if (s_hi < worst_slack) {
          worst_slack = s_hi;
          worst = {i, +1};
        }
      }
      return worst;
    };

    // Warm-start hint: enforce previously active sides that are violated
    // now, before the global scan.
    if (hint != nullptr) {
      for (const auto& ref : *hint) {
        if (ref.side == 0 || ref.row < 0 || ref.row >= m) continue;
        if (lo[ref.row] == hi[ref.row] || is_active(ref.row)) continue;
        if (slack_of(ref) < -feas_tol) {
          if (!enforce(ref)) fail_infeasible(ref);
        }
      }
    }

    for (;;) {
      const QpConstraintRef worst = most_violated();
      if (worst.row < 0) break;
      if (!enforce(worst)) fail_infeasible(worst);
    }

    // Signed per-row multipliers and the stationarity residual.
    sol.lambda = Eigen::VectorXd::Zero(m);
    Eigen::VectorXd stat = h_ * sol.z + g;
    for (std::size_t k = 0; k < active.size(); ++k) {
      const double signed_mult =
          active[k].side > 0 ? -mult[k] : mult[k];
      sol.lambda[active[k].row] += signed_mult;
      stat -= mult[k] * normals.col(k);
    }
    sol.active = active;
    const double scale = std::max(1.0, g.lpNorm<Eigen::Infinity>());
    sol.kkt_residual = stat.lpNorm<Eigen::Infinity>() / scale;
    return sol;
  }

 private:
  int max_iterations() const { return 100 + 10 * num_rows(); }

  Eigen::MatrixXd h_;
  Eigen::MatrixXd c_;
  Eigen::LLT<Eigen::MatrixXd> llt_;
};

}  // namespace tubemav
