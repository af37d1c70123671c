#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "ctmdp/errors.hpp"

namespace ctmdp {

/// Linear program  min c'x  subject to  Aeq x = beq,  Aub x <= bub,  x >= 0,
/// in dense row-major form.
struct LpProblem {
    std::vector<double> objective;          // length nvars
    std::vector<std::vector<double>> eq;    // rows of length nvars
    std::vector<double> eq_rhs;
    std::vector<std::vector<double>> ub;    // rows of length nvars
    std::vector<double> ub_rhs;
};

struct LpSolution {
    enum class Status { Optimal, Infeasible, Unbounded };
    Status status = Status::Infeasible;
    double objective = 0.0;
    std::vector<double> x;
    int iterations = 0;
};

/// Two-phase dense simplex with Bland's rule (lowest eligible index enters,
/// lowest-index basic leaves on ratio ties), which rules out cycling. Sized
/// for desk-scale problems; the tableau is O(rows * columns).
class SimplexSolver {
  public:
    explicit SimplexSolver(const LpProblem& p) : nvars_(p.objective.size()) {
        const size_t m = p.eq.size() + p.ub.size();
        const size_t nslack = p.ub.size();
        ncols_ = nvars_ + nslack + m; // artificials last
        rows_.assign(m, std::vector<double>(ncols_ + 1, 0.0));
        basis_.assign(m, 0);

        size_t r = 0;
        for (size_t i = 0; i < p.eq.size(); ++i, ++r) {
            for (size_t j = 0; j < nvars_; ++j) rows_[r][j] = p.eq[i][j];
            rows_[r][ncols_] = p.eq_rhs[i];
        }
        for (size_t i = 0; i < p.ub.size(); ++i, ++r) {
            for (size_t j = 0; j < nvars_; ++j) rows_[r][j] = p.ub[i][j];
            rows_[r][nvars_ + i] = 1.0; // slack
            rows_[r][ncols_] = p.ub_rhs[i];
        }
        for (r = 0; r < m; ++r) {
            if (rows_[r][ncols_] < 0.0)
                for (double& v : rows_[r]) v = -v;
            rhs_scale_ = std::max(rhs_scale_, rows_[r][ncols_]);
            const size_t art = nvars_ + nslack + r;
            rows_[r][art] = 1.0;
            basis_[r] = art;
        }
        first_artificial_ = nvars_ + nslack;
        costs_ = p.objective;
    }

    LpSolution solve() {
        LpSolution sol;
        // Phase 1: minimize the sum of artificials.
        std::vector<double> phase1(ncols_, 0.0);
        for (size_t j = first_artificial_; j < ncols_; ++j) phase1[j] = 1.0;
        build_objective_row(phase1);
        sol.iterations += run(true);
        if (objective_value() > 1e-8 * rhs_scale_) {
            sol.status = LpSolution::Status::Infeasible;
            return sol;
        }
        drive_out_artificials();

        // Phase 2 on the original objective.
        std::vector<double> phase2(ncols_, 0.0);
        for (size_t j = 0; j < nvars_; ++j) phase2[j] = costs_[j];
        build_objective_row(phase2);
        try {
            sol.iterations += run(false);
        } catch (const Unbounded&) {
            sol.status = LpSolution::Status::Unbounded;
            return sol;
        }

        sol.status = LpSolution::Status::Optimal;
        sol.x.assign(nvars_, 0.0);
        for (size_t r = 0; r < rows_.size(); ++r)
            if (basis_[r] < nvars_) sol.x[basis_[r]] = rows_[r][ncols_];
        sol.objective = 0.0;
        for (size_t j = 0; j < nvars_; ++j) sol.objective += costs_[j] * sol.x[j];
        return sol;
    }

  private:
    static constexpr double kPivotTol = 1e-11;
    static constexpr double kCostTol = 1e-9;

    size_t nvars_, ncols_, first_artificial_;
    double rhs_scale_ = 1.0;
    std::vector<std::vector<double>> rows_;
    std::vector<double> obj_; // reduced-cost row, obj_[ncols_] = -objective value
    std::vector<size_t> basis_;
    std::vector<double> costs_;

    double objective_value() const { return -obj_[ncols_]; }

    void build_objective_row(const std::vector<double>& c) {
        obj_.assign(ncols_ + 1, 0.0);
        for (size_t j = 0; j < ncols_; ++j) obj_[j] = c[j];
        for (size_t r = 0; r < rows_.size(); ++r) {
            const double cb = c[basis_[r]];
            if (cb == 0.0) continue;
            for (size_t j = 0; j <= ncols_; ++j) obj_[j] -= cb * rows_[r][j];
        }
    }

    void pivot(size_t r, size_t j) {
        auto& prow = rows_[r];
        const double inv = 1.0 / prow[j];
        for (double& v : prow) v *= inv;
        prow[j] = 1.0;
        for (size_t i = 0; i < rows_.size(); ++i) {
            if (i == r) continue;
            const double f = rows_[i][j];
            if (f == 0.0) continue;
            for (size_t k = 0; k <= ncols_; ++k) rows_[i][k] -= f * prow[k];
            rows_[i][j] = 0.0;
        }
        const double f = obj_[j];
        if (f != 0.0) {
            for (size_t k = 0; k <= ncols_; ++k) obj_[k] -= f * prow[k];
            obj_[j] = 0.0;
        }
        basis_[r] = j;
    }

    int run(bool allow_artificials) {
        int iters = 0;
        for (;; ++iters) {
            // Bland: lowest-index column with a negative reduced cost.
            size_t enter = ncols_;
            const size_t limit = allow_artificials ? ncols_ : first_artificial_;
            for (size_t j = 0; j < limit; ++j)
                if (obj_[j] < -kCostTol) {
                    enter = j;
                    break;
                }
            if (enter == ncols_) return iters;

            size_t leave = rows_.size();
            double best = 0.0;
            for (size_t r = 0; r < rows_.size(); ++r) {
                const double a = rows_[r][enter];
                if (a <= kPivotTol) continue;
                const double ratio = rows_[r][ncols_] / a;
                if (leave == rows_.size() || ratio < best - kPivotTol ||
                    (std::abs(ratio - best) <= kPivotTol && basis_[r] < basis_[leave])) {
                    leave = r;
                    best = ratio;
                }
            }
            if (leave == rows_.size()) throw Unbounded("unbounded linear program");
            pivot(leave, enter);
        }
    }

    void drive_out_artificials() {
        for (size_t r = 0; r < rows_.size(); ++r) {
            if (basis_[r] < first_artificial_) continue;
            size_t j = first_artificial_;
            for (size_t cand = 0; cand < first_artificial_; ++cand)
                if (std::abs(rows_[r][cand]) > kPivotTol) {
                    j = cand;
                    break;
                }
            if (j < first_artificial_) pivot(r, j);
            // else: redundant row; the artificial stays basic at zero and is
            // barred from entering in phase 2.
        }
    }
};

inline LpSolution solve_lp(const LpProblem& p) { return SimplexSolver(p).solve(); }

} // namespace ctmdp
