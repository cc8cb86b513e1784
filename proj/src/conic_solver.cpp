// Primal-dual interior-point method with Nesterov-Todd scaling for
//   minimize 0.5 x'Px + q'x  s.t.  Gx + s = h, Ax = b, s in K,
// where K is a product of nonnegative orthants, second-order cones and
// PSD cones in svec packing. Mehrotra predictor-corrector steps.

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/LU>
#include <Eigen/QR>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>

#include "rdeepc/conic.hpp"

namespace rdeepc {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Block {
  ConeKind kind;
  int offset;
  int dim;
  int side;  // PSD only
  SparseMatrix G;  // dim x n

  // Scaling data.
  Vector d;            // nonnegative: W = diag(d)
  double beta = 1.0;   // second-order: W = beta (2vv' - J)
  Vector v;
  Matrix R, Rinv;      // PSD: W(Z) = R'ZR
  Vector lam_diag;     // PSD: eigenvalues of the scaled point
};

struct Standard {
  int n = 0;
  Matrix P;
  Vector q;
  Matrix A;
  Vector b;
  SparseMatrix G;
  Vector h;
  std::vector<Block> blocks;
  int m = 0;
  int degree = 0;
};

// ---- cone helpers on packed vectors -------------------------------------

Vector identity_element(const Standard& st) {
  Vector e = Vector::Zero(st.m);
  for (const auto& b : st.blocks) {
    switch (b.kind) {
      case ConeKind::Nonnegative: e.segment(b.offset, b.dim).setOnes(); break;
      case ConeKind::SecondOrder: e(b.offset) = 1.0; break;
      case ConeKind::PositiveSemidefinite:
        for (int i = 0; i < b.side; ++i) e(b.offset + svec_index(b.side, i, i)) = 1.0;
        break;
      default: break;
    }
  }
  return e;
}

// Smallest "eigenvalue" of x relative to the identity element, per block minimum.
double min_eigenvalue(const Standard& st, const Vector& x) {
  double lo = kInf;
  for (const auto& b : st.blocks) {
    const auto seg = x.segment(b.offset, b.dim);
    switch (b.kind) {
      case ConeKind::Nonnegative: lo = std::min(lo, seg.minCoeff()); break;
      case ConeKind::SecondOrder: lo = std::min(lo, seg(0) - seg.tail(b.dim - 1).norm()); break;
      case ConeKind::PositiveSemidefinite: {
        Eigen::SelfAdjointEigenSolver<Matrix> eig(smat(seg), Eigen::EigenvaluesOnly);
        lo = std::min(lo, eig.eigenvalues()(0));
        break;
      }
      default: break;
    }
  }
  return lo;
}

Vector jordan_product(const Standard& st, const Vector& x, const Vector& y) {
  Vector out(st.m);
  for (const auto& b : st.blocks) {
    const auto xs = x.segment(b.offset, b.dim);
    const auto ys = y.segment(b.offset, b.dim);
    auto o = out.segment(b.offset, b.dim);
    switch (b.kind) {
      case ConeKind::Nonnegative: o = xs.cwiseProduct(ys); break;
      case ConeKind::SecondOrder:
        o(0) = xs.dot(ys);
        o.tail(b.dim - 1) = xs(0) * ys.tail(b.dim - 1) + ys(0) * xs.tail(b.dim - 1);
        break;
      case ConeKind::PositiveSemidefinite: {
        const Matrix X = smat(xs), Y = smat(ys);
        const Matrix XY = X * Y;
        o = svec(0.5 * (XY + XY.transpose()));
        break;
      }
      default: break;
    }
  }
  return out;
}

// Solve lambda o x = d for x, with lambda the current scaled point.
Vector lambda_divide(const Standard& st, const Vector& lam, const Vector& d) {
  Vector out(st.m);
  for (const auto& b : st.blocks) {
    const auto l = lam.segment(b.offset, b.dim);
    const auto ds = d.segment(b.offset, b.dim);
    auto o = out.segment(b.offset, b.dim);
    switch (b.kind) {
      case ConeKind::Nonnegative: o = ds.cwiseQuotient(l); break;
      case ConeKind::SecondOrder: {
        const double det = l(0) * l(0) - l.tail(b.dim - 1).squaredNorm();
        const double x0 = (l(0) * ds(0) - l.tail(b.dim - 1).dot(ds.tail(b.dim - 1))) / det;
        o(0) = x0;
        o.tail(b.dim - 1) = (ds.tail(b.dim - 1) - x0 * l.tail(b.dim - 1)) / l(0);
        break;
      }
      case ConeKind::PositiveSemidefinite: {
        int idx = 0;
        for (int c = 0; c < b.side; ++c)
          for (int r = c; r < b.side; ++r, ++idx) o(idx) = 2.0 * ds(idx) / (b.lam_diag(r) + b.lam_diag(c));
        break;
      }
      default: break;
    }
  }
  return out;
}

// Largest alpha with lam + alpha*dir in the cone (lam interior, scaled frame).
double max_step(const Standard& st, const Vector& lam, const Vector& dir) {
  double alpha = kInf;
  for (const auto& b : st.blocks) {
    const auto l = lam.segment(b.offset, b.dim);
    const auto dd = dir.segment(b.offset, b.dim);
    switch (b.kind) {
      case ConeKind::Nonnegative:
        for (int i = 0; i < b.dim; ++i)
          if (dd(i) < 0.0) alpha = std::min(alpha, -l(i) / dd(i));
        break;
      case ConeKind::SecondOrder: {
        const int k = b.dim - 1;
        const double qa = dd(0) * dd(0) - dd.tail(k).squaredNorm();
        const double qb = l(0) * dd(0) - l.tail(k).dot(dd.tail(k));
        const double qc = std::max(l(0) * l(0) - l.tail(k).squaredNorm(), 0.0);
        // f(a) = qa a^2 + 2 qb a + qc; first positive root.
        double root = kInf;
        const double scale = std::max({std::abs(qa), std::abs(qb), 1e-300});
        if (std::abs(qa) <= 1e-14 * scale) {
          if (qb < 0.0) root = -qc / (2.0 * qb);
        } else {
          const double disc = qb * qb - qa * qc;
          if (disc >= 0.0) {
            const double sq = std::sqrt(disc);
            const double qq = -(qb + (qb >= 0 ? sq : -sq));
            const double r1 = qq / qa;
            const double r2 = qq != 0.0 ? qc / qq : kInf;
            if (r1 > 0.0) root = std::min(root, r1);
            if (r2 > 0.0) root = std::min(root, r2);
          }
        }
        // Guard against the lower nappe: x0 must stay nonnegative.
        if (dd(0) < 0.0) root = std::min(root, -l(0) / dd(0));
        alpha = std::min(alpha, root);
        break;
      }
      case ConeKind::PositiveSemidefinite: {
        const Vector isq = b.lam_diag.cwiseSqrt().cwiseInverse();
        const Matrix M = isq.asDiagonal() * smat(dd) * isq.asDiagonal();
        Eigen::SelfAdjointEigenSolver<Matrix> eig(M, Eigen::EigenvaluesOnly);
        const double lo = eig.eigenvalues()(0);
        if (lo < 0.0) alpha = std::min(alpha, -1.0 / lo);
        break;
      }
      default: break;
    }
  }
  return alpha;
}

// ---- Nesterov-Todd scaling ------------------------------------------------

bool compute_scaling(Standard& st, const Vector& s, const Vector& z, Vector& lam) {
  lam.resize(st.m);
  for (auto& b : st.blocks) {
    const auto ss = s.segment(b.offset, b.dim);
    const auto zs = z.segment(b.offset, b.dim);
    switch (b.kind) {
      case ConeKind::Nonnegative:
        if (ss.minCoeff() <= 0.0 || zs.minCoeff() <= 0.0) return false;
        b.d = ss.cwiseQuotient(zs).cwiseSqrt();
        lam.segment(b.offset, b.dim) = ss.cwiseProduct(zs).cwiseSqrt();
        break;
      case ConeKind::SecondOrder: {
        const int k = b.dim - 1;
        const double sdet = ss(0) * ss(0) - ss.tail(k).squaredNorm();
        const double zdet = zs(0) * zs(0) - zs.tail(k).squaredNorm();
        if (ss(0) <= 0.0 || zs(0) <= 0.0 || sdet <= 0.0 || zdet <= 0.0) return false;
        const double sn = std::sqrt(sdet), zn = std::sqrt(zdet);
        const Vector sb = ss / sn, zb = zs / zn;
        const double gamma = std::sqrt(0.5 * (1.0 + sb.dot(zb)));
        Vector wb(b.dim);
        wb(0) = (sb(0) + zb(0)) / (2.0 * gamma);
        wb.tail(k) = (sb.tail(k) - zb.tail(k)) / (2.0 * gamma);
        b.beta = std::sqrt(sn / zn);
        b.v = wb;
        b.v(0) += 1.0;
        b.v /= std::sqrt(2.0 * (wb(0) + 1.0));
        // lambda = W z = beta (2 v (v'z) - J z)
        Vector Jz = zs;
        Jz.tail(k) = -Jz.tail(k);
        lam.segment(b.offset, b.dim) = b.beta * (2.0 * b.v * b.v.dot(zs) - Jz);
        break;
      }
      case ConeKind::PositiveSemidefinite: {
        const Matrix S = smat(ss), Z = smat(zs);
        Eigen::LLT<Matrix> ls(S), lz(Z);
        if (ls.info() != Eigen::Success || lz.info() != Eigen::Success) return false;
        const Matrix Ls = ls.matrixL(), Lz = lz.matrixL();
        // Right singular pairs of Lz'Ls from the symmetric eigenproblem Ls'Z Ls = V Lambda^2 V',
        // several times cheaper than a general SVD at the same accuracy near the central path.
        const Matrix LzLs = Lz.transpose() * Ls;
        Eigen::SelfAdjointEigenSolver<Matrix> eig(LzLs.transpose() * LzLs);
        if (eig.info() != Eigen::Success || eig.eigenvalues()(0) <= 0.0) return false;
        const Vector sig = eig.eigenvalues().cwiseSqrt();
        const Matrix& V = eig.eigenvectors();
        const Vector isq = sig.cwiseSqrt().cwiseInverse();
        b.R = Ls * V * isq.asDiagonal();
        // R^{-1} = Lambda^{1/2} V' Ls^{-1}
        const Matrix LsInv = Ls.triangularView<Eigen::Lower>().solve(Matrix::Identity(b.side, b.side));
        b.Rinv = sig.cwiseSqrt().asDiagonal() * V.transpose() * LsInv;
        b.lam_diag = sig;
        Vector l = Vector::Zero(b.dim);
        for (int i = 0; i < b.side; ++i) l(svec_index(b.side, i, i)) = sig(i);
        lam.segment(b.offset, b.dim) = l;
        break;
      }
      default: break;
    }
  }
  return true;
}

// x -> W^{-T} x
Vector apply_winv_t(const Standard& st, const Vector& x) {
  Vector out(st.m);
  for (const auto& b : st.blocks) {
    const auto xs = x.segment(b.offset, b.dim);
    auto o = out.segment(b.offset, b.dim);
    switch (b.kind) {
      case ConeKind::Nonnegative: o = xs.cwiseQuotient(b.d); break;
      case ConeKind::SecondOrder: {
        // W^{-1} = (1/beta)(2 Jv (Jv)' - J), symmetric.
        Vector Jv = b.v;
        Jv.tail(b.dim - 1) = -Jv.tail(b.dim - 1);
        Vector Jx = xs;
        Jx.tail(b.dim - 1) = -Jx.tail(b.dim - 1);
        o = (2.0 * Jv * Jv.dot(xs) - Jx) / b.beta;
        break;
      }
      case ConeKind::PositiveSemidefinite: o = svec(b.Rinv * smat(xs) * b.Rinv.transpose()); break;
      default: break;
    }
  }
  return out;
}

// x -> W^T x
Vector apply_w_t(const Standard& st, const Vector& x) {
  Vector out(st.m);
  for (const auto& b : st.blocks) {
    const auto xs = x.segment(b.offset, b.dim);
    auto o = out.segment(b.offset, b.dim);
    switch (b.kind) {
      case ConeKind::Nonnegative: o = xs.cwiseProduct(b.d); break;
      case ConeKind::SecondOrder: {
        Vector Jx = xs;
        Jx.tail(b.dim - 1) = -Jx.tail(b.dim - 1);
        o = b.beta * (2.0 * b.v * b.v.dot(xs) - Jx);
        break;
      }
      case ConeKind::PositiveSemidefinite: o = svec(b.R * smat(xs) * b.R.transpose()); break;
      default: break;
    }
  }
  return out;
}

// x -> W^{-1} x
Vector apply_winv(const Standard& st, const Vector& x) {
  Vector out(st.m);
  for (const auto& b : st.blocks) {
    const auto xs = x.segment(b.offset, b.dim);
    auto o = out.segment(b.offset, b.dim);
    switch (b.kind) {
      case ConeKind::Nonnegative: o = xs.cwiseQuotient(b.d); break;
      case ConeKind::SecondOrder: {
        Vector Jv = b.v;
        Jv.tail(b.dim - 1) = -Jv.tail(b.dim - 1);
        Vector Jx = xs;
        Jx.tail(b.dim - 1) = -Jx.tail(b.dim - 1);
        o = (2.0 * Jv * Jv.dot(xs) - Jx) / b.beta;
        break;
      }
      case ConeKind::PositiveSemidefinite: o = svec(b.Rinv.transpose() * smat(xs) * b.Rinv); break;
      default: break;
    }
  }
  return out;
}

// Ghat = W^{-T} G, dense m x n.
Matrix scaled_constraint_matrix(const Standard& st) {
  Matrix Gh(st.m, st.n);
  for (const auto& b : st.blocks) {
    switch (b.kind) {
      case ConeKind::Nonnegative:
        Gh.middleRows(b.offset, b.dim) = b.d.cwiseInverse().asDiagonal() * Matrix(b.G);
        break;
      case ConeKind::SecondOrder: {
        Matrix Gd(b.G);
        Vector Jv = b.v;
        Jv.tail(b.dim - 1) = -Jv.tail(b.dim - 1);
        Matrix JG = Gd;
        JG.bottomRows(b.dim - 1) = -JG.bottomRows(b.dim - 1);
        Gh.middleRows(b.offset, b.dim) = (2.0 * Jv * (Jv.transpose() * Gd) - JG) / b.beta;
        break;
      }
      case ConeKind::PositiveSemidefinite: {
        const int k = b.side;
        // Row/column index of every svec entry.
        std::vector<int> rows_of(b.dim), cols_of(b.dim);
        for (int c = 0, idx = 0; c < k; ++c)
          for (int r = c; r < k; ++r, ++idx) {
            rows_of[idx] = r;
            cols_of[idx] = c;
          }
        Matrix M(k, k), S(k, k);
        std::vector<std::vector<std::pair<int, double>>> groups(k);
        std::vector<int> keys;
        for (int j = 0; j < st.n; ++j) {
          for (auto& g : groups) g.clear();
          // Entries of smat(G_j) below the diagonal (halved on the diagonal):
          // G_j = M + M' with M = sum_{r>=c} w_rc e_r e_c'.
          int used_rows = 0, used_cols = 0;
          std::vector<char> rmark(k, 0), cmark(k, 0);
          for (SparseMatrix::InnerIterator it(b.G, j); it; ++it) {
            const int r = rows_of[it.row()], c = cols_of[it.row()];
            if (!rmark[r]) { rmark[r] = 1; ++used_rows; }
            if (!cmark[c]) { cmark[c] = 1; ++used_cols; }
          }
          if (used_rows == 0) {
            Gh.block(b.offset, j, b.dim, 1).setZero();
            continue;
          }
          const bool by_col = used_cols <= used_rows;
          for (SparseMatrix::InnerIterator it(b.G, j); it; ++it) {
            const int r = rows_of[it.row()], c = cols_of[it.row()];
            const double w = r == c ? 0.5 * it.value() : it.value() / std::sqrt(2.0);
            if (by_col)
              groups[c].push_back({r, w});
            else
              groups[r].push_back({c, w});
          }
          keys.clear();
          for (int key = 0; key < k; ++key)
            if (!groups[key].empty()) keys.push_back(key);
          // One product over all groups: M = Acc Keys' (by_col) or Keys Acc'.
          const int ng = static_cast<int>(keys.size());
          Matrix acc = Matrix::Zero(k, ng), kc(k, ng);
          for (int g = 0; g < ng; ++g) {
            for (const auto& [idx, w] : groups[keys[g]]) acc.col(g) += w * b.Rinv.col(idx);
            kc.col(g) = b.Rinv.col(keys[g]);
          }
          if (by_col)
            M.noalias() = acc * kc.transpose();
          else
            M.noalias() = kc * acc.transpose();
          S = M + M.transpose();
          Gh.block(b.offset, j, b.dim, 1) = svec(S);
        }
        break;
      }
      default: break;
    }
  }
  return Gh;
}

// ---- KKT solves -------------------------------------------------------------

class KktSolver {
 public:
  // Symmetric Jacobi scaling of the x-block keeps the regularization meaningful when
  // the scaled constraint rows span many orders of magnitude near the boundary.
  KktSolver(const Matrix& H, const Matrix& A) {
    const int n = static_cast<int>(H.rows()), p = static_cast<int>(A.rows());
    scale_ = Vector::Ones(n + p);
    for (int i = 0; i < n; ++i)
      if (H(i, i) > 0.0) scale_(i) = 1.0 / std::sqrt(H(i, i));
    const Vector sx = scale_.head(n);
    Kexact_ = Matrix::Zero(n + p, n + p);
    Kexact_.topLeftCorner(n, n) = sx.asDiagonal() * H * sx.asDiagonal();
    if (p > 0) {
      const Matrix As = A * sx.asDiagonal();
      Kexact_.topRightCorner(n, p) = As.transpose();
      Kexact_.bottomLeftCorner(p, n) = As;
    }
    Matrix K = Kexact_;
    K.topLeftCorner(n, n).diagonal().array() += 1e-13;
    if (p > 0) K.bottomRightCorner(p, p).diagonal().setConstant(-1e-13);
    lu_.compute(K);
  }

  bool ok() const { return std::isfinite(lu_.rcond()) && lu_.rcond() > 1e-300; }

  void solve(const Vector& rx, const Vector& ry, Vector& dx, Vector& dy) const {
    const int n = static_cast<int>(rx.size()), p = static_cast<int>(ry.size());
    Vector rhs(n + p);
    rhs << rx, ry;
    rhs.array() *= scale_.array();
    Vector sol = lu_.solve(rhs);
    for (int it = 0; it < 3; ++it) {
      const Vector res = rhs - Kexact_ * sol;
      if (res.norm() <= 1e-15 * (1.0 + rhs.norm())) break;
      sol += lu_.solve(res);
    }
    sol.array() *= scale_.array();
    dx = sol.head(n);
    dy = sol.tail(p);
  }

 private:
  Matrix Kexact_;
  Vector scale_;
  Eigen::PartialPivLU<Matrix> lu_;
};

// ---- problem conversion -------------------------------------------------------

Standard to_standard(const ConicProgram& prog) {
  Standard st;
  st.n = prog.num_vars();
  st.P = prog.P();
  st.q = prog.q();
  std::vector<Triplet> eq, ineq;
  std::vector<double> bvals, hvals;
  int peq = 0;
  for (const auto& c : prog.constraints()) {
    const int dim = c.cone.dimension();
    if (c.cone.kind == ConeKind::Zero) {
      for (int k = 0; k < c.F.outerSize(); ++k)
        for (SparseMatrix::InnerIterator it(c.F, k); it; ++it) eq.emplace_back(peq + it.row(), it.col(), it.value());
      for (int i = 0; i < dim; ++i) bvals.push_back(-c.f(i));
      peq += dim;
      continue;
    }
    if (dim == 0) continue;
    Block b;
    b.kind = c.cone.kind;
    b.offset = st.m;
    b.dim = dim;
    b.side = c.cone.kind == ConeKind::PositiveSemidefinite ? c.cone.size : 0;
    b.G = -c.F;
    b.G.makeCompressed();
    for (int k = 0; k < c.F.outerSize(); ++k)
      for (SparseMatrix::InnerIterator it(c.F, k); it; ++it) ineq.emplace_back(st.m + it.row(), it.col(), -it.value());
    for (int i = 0; i < dim; ++i) hvals.push_back(c.f(i));
    st.m += dim;
    st.degree += c.cone.kind == ConeKind::Nonnegative ? dim : (c.cone.kind == ConeKind::SecondOrder ? 1 : b.side);
    st.blocks.push_back(std::move(b));
  }
  SparseMatrix Aeq(peq, st.n);
  Aeq.setFromTriplets(eq.begin(), eq.end());
  st.A = Matrix(Aeq);
  st.b = Eigen::Map<Vector>(bvals.data(), static_cast<Eigen::Index>(bvals.size()));
  st.G.resize(st.m, st.n);
  st.G.setFromTriplets(ineq.begin(), ineq.end());
  st.h = Eigen::Map<Vector>(hvals.data(), static_cast<Eigen::Index>(hvals.size()));
  return st;
}

// Drop linearly dependent equality rows. Returns false if they are inconsistent.
bool presolve_equalities(Standard& st) {
  if (st.A.rows() == 0) return true;
  Eigen::ColPivHouseholderQR<Matrix> qr(st.A.transpose());
  qr.setThreshold(1e-11);
  const int r = static_cast<int>(qr.rank());
  const Vector x0 = st.A.completeOrthogonalDecomposition().solve(st.b);
  const double res = (st.A * x0 - st.b).norm();
  if (res > 1e-8 * std::max(1.0, st.b.norm())) return false;
  if (r == st.A.rows()) return true;
  Matrix A2(r, st.n);
  Vector b2(r);
  const auto& perm = qr.colsPermutation().indices();
  std::vector<int> keep(perm.data(), perm.data() + r);
  std::sort(keep.begin(), keep.end());
  for (int i = 0; i < r; ++i) {
    A2.row(i) = st.A.row(keep[i]);
    b2(i) = st.b(keep[i]);
  }
  st.A = A2;
  st.b = b2;
  return true;
}

}  // namespace

SolveResult solve(const ConicProgram& program, const SolverSettings& settings) {
  const auto t_start = std::chrono::steady_clock::now();
  SolveResult result;
  auto finish = [&](SolveStatus status, const std::string& msg) {
    result.status = status;
    result.message = msg;
    if (status != SolveStatus::Optimal) result.solution.reset();
    result.stats.solve_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return result;
  };

  Standard st = to_standard(program);
  bool has_psd = false;
  for (const auto& b : st.blocks) has_psd |= b.kind == ConeKind::PositiveSemidefinite;
  const double tol = has_psd ? std::max(settings.tolerance, settings.psd_tolerance) : settings.tolerance;

  if (!presolve_equalities(st)) return finish(SolveStatus::Infeasible, "inconsistent equality constraints");
  const int n = st.n, p = static_cast<int>(st.A.rows()), m = st.m;

  if (m == 0) {
    // Equality-constrained QP: one KKT solve.
    KktSolver kkt(st.P, st.A);
    Vector x, y;
    kkt.solve(-st.q, st.b, x, y);
    const Vector rx = st.P * x + st.q + st.A.transpose() * y;
    if (!x.allFinite() || rx.norm() > 1e-6 * std::max(1.0, st.q.norm()))
      return finish(SolveStatus::Unbounded, "objective unbounded below on the affine set");
    result.solution = x;
    result.objective_value = program.objective_at(x);
    return finish(SolveStatus::Optimal, "");
  }

  const Vector e = identity_element(st);
  const double resx0 = std::max(1.0, st.q.norm());
  const double resy0 = std::max(1.0, st.b.norm());
  const double resz0 = std::max(1.0, st.h.norm());

  // Initial point: scaling W = I.
  Vector x(n), y(p), s(m), z(m);
  {
    const Matrix Gd(st.G);
    KktSolver kkt(st.P + Gd.transpose() * Gd, st.A);
    if (!kkt.ok()) return finish(SolveStatus::NumericalLimit, "singular initial KKT system");
    kkt.solve(-st.q + Gd.transpose() * st.h, st.b, x, y);
    z = Gd * x - st.h;
    s = -z;
    const double nrms = s.norm(), nrmz = z.norm();
    const double ts = -min_eigenvalue(st, s);
    const double tz = -min_eigenvalue(st, z);
    if (ts >= -1e-8 * std::max(nrms, 1.0)) s += (1.0 + ts) * e;
    if (tz >= -1e-8 * std::max(nrmz, 1.0)) z += (1.0 + tz) * e;
  }

  Vector lam;
  double pres = kInf, dres = kInf, gap = kInf;
  // Best iterate so far, returned with reduced accuracy if the method breaks down
  // within a factor of the tolerance (ill-conditioned scalings near the optimum).
  constexpr double kReducedFactor = 10.0;
  Vector best_x;
  double best_score = kInf;
  SolverStats best_stats;
  auto breakdown = [&](const std::string& msg) {
    if (best_score <= kReducedFactor * tol) {
      result.solution = best_x;
      result.objective_value = program.objective_at(best_x);
      result.stats = best_stats;
      return finish(SolveStatus::Optimal, "reduced accuracy after breakdown: " + msg);
    }
    return finish(SolveStatus::NumericalLimit, msg);
  };
  for (int iter = 0; iter <= settings.max_iterations; ++iter) {
    result.stats.iterations = iter;
    const Vector Gx = st.G * x;
    const Vector GTz = st.G.transpose() * z;
    const Vector ATy = st.A.transpose() * y;
    const Vector Px = st.P * x;
    const Vector rx = Px + st.q + ATy + GTz;
    const Vector ry = st.A * x - st.b;
    const Vector rz = Gx + s - st.h;
    gap = s.dot(z);
    const double pcost = 0.5 * x.dot(Px) + st.q.dot(x);
    const double dcost = pcost + y.dot(ry) + z.dot(rz) - gap;
    double relgap = kInf;
    if (pcost < 0.0)
      relgap = gap / -pcost;
    else if (dcost > 0.0)
      relgap = gap / dcost;
    // Residuals relative to the size of the terms that cancel in them.
    pres = std::max(ry.size() ? ry.norm() / std::max(resy0, (ry + st.b).norm()) : 0.0,
                    rz.norm() / std::max({resz0, Gx.norm(), s.norm()}));
    dres = rx.norm() / std::max({resx0, Px.norm(), ATy.norm(), GTz.norm()});
    result.stats.primal_residual = pres;
    result.stats.dual_residual = dres;
    result.stats.gap = gap;
    if (settings.verbose)
      std::fprintf(stderr, "%3d pcost % .10e dcost % .10e gap %.2e pres %.2e dres %.2e\n", iter, pcost, dcost,
                   gap, pres, dres);
    if (!std::isfinite(pcost) || !std::isfinite(gap))
      return breakdown("non-finite iterate");

    const double score = std::max({pres, dres, std::min(gap, relgap)});
    if (score < best_score) {
      best_score = score;
      best_x = x;
      best_stats = result.stats;
    }
    if (pres <= tol && dres <= tol && (gap <= tol || relgap <= tol)) {
      result.solution = x;
      result.objective_value = program.objective_at(x);
      return finish(SolveStatus::Optimal, "");
    }

    // Certificates of infeasibility.
    {
      const double hz = -(st.h.dot(z) + st.b.dot(y));
      if (hz > 0.0 && (GTz + ATy).norm() <= 1e-9 * hz && z.norm() > 1e6)
        return finish(SolveStatus::Infeasible, "primal infeasibility certificate");
      const double qx = -st.q.dot(x);
      if (qx > 0.0 && x.norm() > 1e6 && Px.norm() <= 1e-9 * qx && (st.A * x).norm() <= 1e-9 * qx &&
          (Gx + s).norm() <= 1e-9 * qx)
        return finish(SolveStatus::Unbounded, "dual infeasibility certificate");
    }
    if (iter == settings.max_iterations) break;

    if (!compute_scaling(st, s, z, lam)) return breakdown("iterate left the cone");
    const Matrix Gh = scaled_constraint_matrix(st);
    Matrix H = st.P;
    H.noalias() += Gh.transpose() * Gh;
    KktSolver kkt(H, st.A);
    if (!kkt.ok()) return breakdown("singular KKT system");

    const Vector wrz = apply_winv_t(st, rz);
    // Reduced solve of P dx + A'dy + Gh'dzt = -rx, A dx = -ry, Gh dx - dzt = -u, refined
    // against the unreduced equations so that Gh'Gh is never trusted beyond its conditioning.
    auto newton = [&](const Vector& ds, Vector& dx, Vector& dy, Vector& dzt, Vector& dst) {
      const Vector ld = lambda_divide(st, lam, ds);
      const Vector u = wrz - ld;
      kkt.solve(-rx - Gh.transpose() * u, -ry, dx, dy);
      dzt = Gh * dx + u;
      // Refinement stops once a pass fails to shrink the residual; the best iterate is kept,
      // since late in the solve the reduced system can push the correction away.
      double best_err = kInf;
      Vector bx, by, bz;
      for (int it = 0; it <= 10; ++it) {
        // G'W^{-1} dzt = Gh' dzt, the same operator that will move z.
        const Vector e1 = -rx - st.P * dx - st.A.transpose() * dy - Gh.transpose() * dzt;
        const Vector e2 = -ry - st.A * dx;
        const Vector e3 = -u - Gh * dx + dzt;
        const double err = std::max({e1.norm(), e2.size() ? e2.norm() : 0.0, e3.norm()});
        if (err >= 0.5 * best_err) {
          if (err > best_err) dx = bx, dy = by, dzt = bz;
          break;
        }
        best_err = err;
        bx = dx, by = dy, bz = dzt;
        if (it == 10 || err <= 1e-14 * (1.0 + rx.norm() + u.norm())) break;
        Vector cx, cy;
        kkt.solve(e1 - Gh.transpose() * e3, e2, cx, cy);
        dx += cx;
        dy += cy;
        dzt += Gh * cx + e3;
      }
      dst = -ld - dzt;
    };

    const Vector lamsq = jordan_product(st, lam, lam);
    Vector dx, dy, dzt, dst;
    newton(lamsq, dx, dy, dzt, dst);
    double alpha = std::min(max_step(st, lam, dst), max_step(st, lam, dzt));
    alpha = std::min(1.0, alpha);
    const double mu = gap / st.degree;
    const double dsdz = dst.dot(dzt);
    const double sigma =
        std::pow(std::clamp(1.0 - alpha + alpha * alpha * dsdz / std::max(gap, 1e-300), 0.0, 1.0), 3.0);

    Vector ds = lamsq + jordan_product(st, dst, dzt) - sigma * mu * e;
    newton(ds, dx, dy, dzt, dst);
    alpha = std::min(max_step(st, lam, dst), max_step(st, lam, dzt));
    alpha = std::min(1.0, settings.step_fraction * alpha);
    if (!std::isfinite(alpha) || alpha < 1e-14) break;

    x += alpha * dx;
    y += alpha * dy;
    s += alpha * apply_w_t(st, dst);
    z += alpha * apply_winv(st, dzt);
  }
  return breakdown("residual targets not met within the iteration cap");
}

}  // namespace rdeepc
