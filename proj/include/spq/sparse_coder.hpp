#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "spq/codebook.hpp"
#include "spq/error.hpp"
#include "spq/kernels.hpp"

namespace spq {

// L (atom id, coefficient) pairs approximating one (sub)vector. Entries past
// `used` have id 0 and coefficient 0.
struct SparseCode {
  std::vector<std::uint16_t> ids;
  std::vector<float> coeffs;
  std::size_t used = 0;

  std::size_t level() const { return ids.size(); }

  friend bool operator==(const SparseCode&, const SparseCode&) = default;
};

// Residual norm below this fraction of ||x|| ends the pursuit.
inline constexpr double kOmpRelativeTolerance = 1e-7;
// Cholesky pivot below this fraction of the diagonal marks a singular support.
inline constexpr double kOmpSingularPivot = 1e-10;

// Orthogonal Matching Pursuit over a row-major k x d atom matrix.
//
// Holds its scratch buffers so a single instance can encode many vectors
// without allocating. Not thread-safe; use one solver per thread.
class OmpSolver {
 public:
  // Encodes x against `atoms` at sparse level `level`, writing `level` ids and
  // coefficients. Returns the number of atoms actually used.
  std::size_t encode(std::span<const float> x, std::span<const float> atoms, std::size_t k,
                     std::size_t level, std::uint16_t* ids, float* coeffs) {
    const std::size_t d = x.size();
    if (level < 1 || level > k) {
      throw RangeError("omp: sparse level " + std::to_string(level) + " outside [1, k=" +
                       std::to_string(k) + "]");
    }
    if (atoms.size() != k * d) throw DimensionMismatch("omp: atom matrix does not match input");
    for (std::size_t l = 0; l < level; ++l) {
      ids[l] = 0;
      coeffs[l] = 0.0f;
    }

    double x_norm2 = 0.0;
    for (float v : x) x_norm2 += static_cast<double>(v) * v;
    if (x_norm2 == 0.0) return 1;  // canonical zero code
    const double stop2 = kOmpRelativeTolerance * kOmpRelativeTolerance * x_norm2;

    residual_.assign(x.begin(), x.end());
    support_.clear();
    rhs_.clear();
    solution_.clear();

    for (std::size_t step = 0; step < level; ++step) {
      std::size_t best = k;
      double best_abs = 0.0;
      for (std::size_t j = 0; j < k; ++j) {
        const float* a = atoms.data() + j * d;
        double c = 0.0;
        for (std::size_t t = 0; t < d; ++t) c += residual_[t] * a[t];
        const double mag = std::abs(c);
        if (mag > best_abs && !in_support(j)) {
          best = j;
          best_abs = mag;
        }
      }
      if (best == k) break;  // residual orthogonal to every remaining atom

      support_.push_back(best);
      rhs_.push_back(kernels_dot(x.data(), atoms.data() + best * d, d));
      if (!solve_normal_equations(atoms, d)) {
        support_.pop_back();
        rhs_.pop_back();
        break;
      }
      double r2 = 0.0;
      for (std::size_t t = 0; t < d; ++t) {
        double approx = 0.0;
        for (std::size_t s = 0; s < support_.size(); ++s) {
          approx += solution_[s] * atoms[support_[s] * d + t];
        }
        residual_[t] = static_cast<double>(x[t]) - approx;
        r2 += residual_[t] * residual_[t];
      }
      committed_ = solution_;
      if (r2 < stop2) break;
    }
    // A singular first step cannot happen for a non-zero x and unit atoms,
    // but a degenerate atom matrix can still leave the support empty.
    if (support_.empty()) return 1;
    for (std::size_t s = 0; s < support_.size(); ++s) {
      ids[s] = static_cast<std::uint16_t>(support_[s]);
      coeffs[s] = static_cast<float>(committed_[s]);
    }
    return support_.size();
  }

  SparseCode encode(std::span<const float> x, std::span<const float> atoms, std::size_t k,
                    std::size_t level) {
    SparseCode code;
    code.ids.resize(level);
    code.coeffs.resize(level);
    code.used = encode(x, atoms, k, level, code.ids.data(), code.coeffs.data());
    return code;
  }

 private:
  static double kernels_dot(const float* a, const float* b, std::size_t d) {
    return kernels::dot_unchecked(a, b, d);
  }

  bool in_support(std::size_t j) const {
    for (std::size_t s : support_) {
      if (s == j) return true;
    }
    return false;
  }

  // Solves (A_S^T A_S) c = A_S^T x by Cholesky. Returns false when the
  // support Gram matrix is numerically singular.
  bool solve_normal_equations(std::span<const float> atoms, std::size_t d) {
    const std::size_t s = support_.size();
    chol_.assign(s * s, 0.0);
    for (std::size_t a = 0; a < s; ++a) {
      for (std::size_t b = 0; b <= a; ++b) {
        chol_[a * s + b] = kernels::dot_unchecked(atoms.data() + support_[a] * d,
                                                  atoms.data() + support_[b] * d, d);
      }
    }
    for (std::size_t a = 0; a < s; ++a) {
      const double diag_ref = chol_[a * s + a];
      for (std::size_t b = 0; b <= a; ++b) {
        double sum = chol_[a * s + b];
        for (std::size_t c = 0; c < b; ++c) sum -= chol_[a * s + c] * chol_[b * s + c];
        if (a == b) {
          if (!(sum > kOmpSingularPivot * diag_ref)) return false;
          chol_[a * s + a] = std::sqrt(sum);
        } else {
          chol_[a * s + b] = sum / chol_[b * s + b];
        }
      }
    }
    solution_.assign(s, 0.0);
    for (std::size_t a = 0; a < s; ++a) {
      double sum = rhs_[a];
      for (std::size_t c = 0; c < a; ++c) sum -= chol_[a * s + c] * solution_[c];
      solution_[a] = sum / chol_[a * s + a];
    }
    for (std::size_t a = s; a-- > 0;) {
      double sum = solution_[a];
      for (std::size_t c = a + 1; c < s; ++c) sum -= chol_[c * s + a] * solution_[c];
      solution_[a] = sum / chol_[a * s + a];
    }
    return true;
  }

  std::vector<double> residual_;
  std::vector<std::size_t> support_;
  std::vector<double> rhs_;
  std::vector<double> chol_;
  std::vector<double> solution_;
  std::vector<double> committed_;
};

// Greedy L-sparse approximation of x in the span of cb's atoms. Atom choice
// maximizes |<residual, atom>| with ties to the lower index; coefficients are
// the least-squares fit on the chosen support.
inline SparseCode omp_encode(std::span<const float> x, const Codebook& cb, std::size_t level) {
  detail::require_same_dim(x.size(), cb.d_sub(), "omp_encode");
  OmpSolver solver;
  return solver.encode(x, cb.atoms(), cb.k(), level);
}

inline std::vector<float> reconstruct(const SparseCode& code, const Codebook& cb) {
  std::vector<double> acc(cb.d_sub(), 0.0);
  for (std::size_t l = 0; l < code.level(); ++l) {
    if (code.ids[l] >= cb.k()) {
      throw RangeError("reconstruct: atom id " + std::to_string(code.ids[l]) +
                       " out of range for k=" + std::to_string(cb.k()));
    }
    const auto atom = cb.atom(code.ids[l]);
    for (std::size_t t = 0; t < acc.size(); ++t) acc[t] += static_cast<double>(code.coeffs[l]) * atom[t];
  }
  return {acc.begin(), acc.end()};
}

// Squared reconstruction error e(x).
inline float distortion(std::span<const float> x, const SparseCode& code, const Codebook& cb) {
  const auto approx = reconstruct(code, cb);
  return sq_l2(x, approx);
}

}  // namespace spq
