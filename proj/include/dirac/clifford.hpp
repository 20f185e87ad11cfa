#ifndef DIRAC_CLIFFORD_HPP
#define DIRAC_CLIFFORD_HPP

#include <algorithm>
#include <bit>
#include <map>

#include "common.hpp"

namespace dirac {

/**
 * Graded Clifford module E0 + E1 over R^n.
 *
 * Only the E0 -> E1 blocks of the generators are stored; the E1 -> E0 block of c(u)
 * is -(block)^T because c(u) is skew. For the exterior-algebra model the commuting
 * action chat(w) = w^ + i_w is kept as well (symmetric, so its E1 -> E0 block is the
 * plain transpose).
 */
struct CliffordModule {
    int n = 0;
    std::vector<Mat> gens;
    std::vector<Mat> hat_gens;
    std::vector<unsigned> even_basis, odd_basis;  // form masks, exterior model only

    int dim0() const { return gens.empty() ? 0 : static_cast<int>(gens[0].cols()); }
    int dim1() const { return gens.empty() ? 0 : static_cast<int>(gens[0].rows()); }
    bool has_hat() const { return !hat_gens.empty(); }

    Mat c10(const Vec& u) const {
        Mat r = Mat::Zero(dim1(), dim0());
        for (int j = 0; j < n; ++j)
            if (u(j) != 0.0) r += u(j) * gens[j];
        return r;
    }
    Mat c01(const Vec& u) const { return -c10(u).transpose(); }

    Mat chat10(const Vec& w) const {
        if (!has_hat()) throw InputError("module has no commuting action");
        Mat r = Mat::Zero(dim1(), dim0());
        for (int j = 0; j < n; ++j)
            if (w(j) != 0.0) r += w(j) * hat_gens[j];
        return r;
    }

    /** Full (dim0+dim1)-square matrix of c(u) on E0 + E1. */
    Mat full_c(const Vec& u) const {
        int a = dim0(), b = dim1();
        Mat f = Mat::Zero(a + b, a + b);
        Mat g = c10(u);
        f.block(a, 0, b, a) = g;
        f.block(0, a, a, b) = -g.transpose();
        return f;
    }
    Mat full_chat(const Vec& w) const {
        int a = dim0(), b = dim1();
        Mat f = Mat::Zero(a + b, a + b);
        Mat g = chat10(w);
        f.block(a, 0, b, a) = g;
        f.block(0, a, a, b) = g.transpose();
        return f;
    }
    Vec axis(int j) const {
        Vec e = Vec::Zero(n);
        e(j) = 1.0;
        return e;
    }
};

namespace detail {
inline int sign_below(unsigned mask, int j) { return (std::popcount(mask & ((1u << j) - 1u)) % 2) ? -1 : 1; }
}  // namespace detail

/** Exterior-algebra model: E0 = even forms, E1 = odd forms, c = e^ - i, chat = e^ + i. */
inline CliffordModule build_witten_module(int n) {
    if (n < 1 || n > 8) throw InputError("build_witten_module: n must be in [1, 8], got " + std::to_string(n));
    CliffordModule m;
    m.n = n;
    std::vector<int> pos(1u << n);
    for (unsigned mask = 0; mask < (1u << n); ++mask) {
        auto& list = (std::popcount(mask) % 2 == 0) ? m.even_basis : m.odd_basis;
        pos[mask] = static_cast<int>(list.size());
        list.push_back(mask);
    }
    int d = 1 << (n - 1);
    for (int j = 0; j < n; ++j) {
        Mat c = Mat::Zero(d, d), h = Mat::Zero(d, d);
        unsigned bit = 1u << j;
        for (int col = 0; col < d; ++col) {
            unsigned mask = m.even_basis[col];
            int sg = detail::sign_below(mask, j);
            if (mask & bit) {  // interior product
                c(pos[mask ^ bit], col) -= sg;
                h(pos[mask ^ bit], col) += sg;
            } else {  // wedge
                c(pos[mask | bit], col) += sg;
                h(pos[mask | bit], col) += sg;
            }
        }
        m.gens.push_back(c);
        m.hat_gens.push_back(h);
    }
    return m;
}

/** Max-norm defect of c_i c_j + c_j c_i = -2 delta_ij (and the chat relations when present). */
inline double clifford_relation_residual(const CliffordModule& m) {
    double worst = 0.0;
    int D = m.dim0() + m.dim1();
    Mat I = Mat::Identity(D, D);
    for (int i = 0; i < m.n; ++i)
        for (int j = 0; j < m.n; ++j) {
            double delta = (i == j) ? 2.0 : 0.0;
            Mat ci = m.full_c(m.axis(i)), cj = m.full_c(m.axis(j));
            worst = std::max(worst, (ci * cj + cj * ci + delta * I).cwiseAbs().maxCoeff());
            if (m.has_hat()) {
                Mat hi = m.full_chat(m.axis(i)), hj = m.full_chat(m.axis(j));
                worst = std::max(worst, (hi * hj + hj * hi - delta * I).cwiseAbs().maxCoeff());
                worst = std::max(worst, (ci * hj + hj * ci).cwiseAbs().maxCoeff());
            }
        }
    return worst;
}

struct PairCheck {
    bool ok = false;
    double violation = 0.0;
};

/** Concentrating-pair test A^T c(u) = c(u)^T A over the coordinate covectors u. */
inline PairCheck check_concentrating_pair(const CliffordModule& m, const Mat& A, double tol = 1e-12) {
    if (A.rows() != m.dim1() || A.cols() != m.dim0())
        throw InputError("check_concentrating_pair: A must be dim1 x dim0");
    PairCheck r;
    for (int j = 0; j < m.n; ++j) {
        const Mat& g = m.gens[j];
        r.violation = std::max(r.violation, (A.transpose() * g - g.transpose() * A).cwiseAbs().maxCoeff());
    }
    r.ok = r.violation <= tol;
    return r;
}

/**
 * Symbol-level check that D*A + A*D has no first-order part, for a 1D field
 * A(x) = sum_k x^k coeffs[k] sampled on `points` nodes of [-1, 1]. The first-order
 * symbol at covector u is c(u)^T A - A^T c(u); it is tested on the axes and on
 * eight seeded random directions.
 */
inline PairCheck check_bundle_cross_term(const CliffordModule& m, const std::vector<Mat>& coeffs, int points = 9,
                                         double tol = 1e-12, std::uint64_t seed = 7) {
    if (coeffs.empty()) throw InputError("check_bundle_cross_term: empty field");
    for (const auto& a : coeffs)
        if (a.rows() != m.dim1() || a.cols() != m.dim0()) throw InputError("check_bundle_cross_term: shape mismatch");
    Rng rng(seed);
    std::vector<Vec> dirs;
    for (int j = 0; j < m.n; ++j) dirs.push_back(m.axis(j));
    for (int t = 0; t < 8; ++t) dirs.push_back(unit_vector(rng, m.n));
    PairCheck r;
    for (int p = 0; p < points; ++p) {
        double x = points == 1 ? 0.0 : -1.0 + 2.0 * p / (points - 1);
        Mat A = Mat::Zero(m.dim1(), m.dim0());
        double xp = 1.0;
        for (const auto& a : coeffs) {
            A += xp * a;
            xp *= x;
        }
        for (const auto& u : dirs) {
            Mat s = m.c10(u);
            r.violation = std::max(r.violation, (s.transpose() * A - A.transpose() * s).cwiseAbs().maxCoeff());
        }
    }
    r.ok = r.violation <= tol;
    return r;
}

/**
 * 2-jet of A along a singular submanifold: A0 on Z, first normal derivatives A1[a],
 * second normal derivatives A2[a][b]. `normals` are orthonormal covectors of R^n.
 */
struct PerturbationJet {
    CliffordModule module;
    std::vector<Vec> normals;
    Mat A0;
    std::vector<Mat> A1;
    std::vector<std::vector<Mat>> A2;

    int codim() const { return static_cast<int>(normals.size()); }

    Mat A1_along(const Vec& v) const {
        Mat r = Mat::Zero(A0.rows(), A0.cols());
        for (int a = 0; a < codim(); ++a) r += v(a) * A1[a];
        return r;
    }
    Vec covector(const Vec& v) const {
        Vec r = Vec::Zero(module.n);
        for (int a = 0; a < codim(); ++a) r += v(a) * normals[a];
        return r;
    }
};

/**
 * Witten jet A = chat(df) from derivative data at a point of Z.
 * third[j](a, b) = d_j d_a d_b f. Pass an empty `third` for a quadratic jet.
 */
inline PerturbationJet witten_jet(const CliffordModule& m, const Vec& grad, const Mat& hess, const std::vector<Mat>& third,
                                  const std::vector<Vec>& normals) {
    PerturbationJet j;
    j.module = m;
    j.normals = normals;
    j.A0 = m.chat10(grad);
    int c = static_cast<int>(normals.size());
    for (int a = 0; a < c; ++a) j.A1.push_back(m.chat10(hess * normals[a]));
    j.A2.assign(c, std::vector<Mat>(c, Mat::Zero(m.dim1(), m.dim0())));
    if (!third.empty())
        for (int a = 0; a < c; ++a)
            for (int b = 0; b < c; ++b) {
                Vec w(m.n);
                for (int k = 0; k < m.n; ++k) w(k) = normals[a].dot(third[k] * normals[b]);
                j.A2[a][b] = m.chat10(w);
            }
    return j;
}

/** Jet of f = sum_a eta_a lambda_a x_a^2 / 2 with the first `eta.size()` axes normal. */
inline PerturbationJet witten_quadratic_jet(int n, const std::vector<int>& eta, const std::vector<double>& lambda) {
    if (eta.size() != lambda.size() || eta.empty() || static_cast<int>(eta.size()) > n)
        throw InputError("witten_quadratic_jet: need 1 <= codim <= n signs and rates");
    CliffordModule m = build_witten_module(n);
    Mat H = Mat::Zero(n, n);
    std::vector<Vec> normals;
    for (size_t a = 0; a < eta.size(); ++a) {
        H(a, a) = eta[a] * lambda[a];
        normals.push_back(m.axis(static_cast<int>(a)));
    }
    return witten_jet(m, Vec::Zero(n), H, {}, normals);
}

struct LadderEntry {
    double lambda = 0;
    int k = 0;
    double eigenvalue = 0;
    int mult0 = 0, mult1 = 0;
    int expected = 0;
};

/** Structure theory at one point of Z: kernels, M_a, Q, C and the C-ladder. */
struct StructureReport {
    PerturbationJet jet;
    int kernel_dim = 0;
    Mat S0, S1;                  // orthonormal bases of ker A0, ker A0^T
    std::vector<Mat> G;          // c(e^a) : S0 -> S1 in kernel coordinates
    std::vector<Mat> Abar;       // A1[a] : S0 -> S1 in kernel coordinates
    std::vector<Mat> M0, M1;
    Mat Q0, Q1, C0, C1;
    std::vector<double> lambdas;                 // distinct normal rates
    std::vector<Mat> S0plus, S1plus, S0minus, S1minus;  // per rate, columns in E coordinates
    std::vector<LadderEntry> ladder;
    std::map<std::string, double> violations;
    bool ladder_consistent = false;

    int codim() const { return jet.codim(); }
    int s0plus_dim() const {
        int d = 0;
        for (const auto& b : S0plus) d += static_cast<int>(b.cols());
        return d;
    }
    int s1plus_dim() const {
        int d = 0;
        for (const auto& b : S1plus) d += static_cast<int>(b.cols());
        return d;
    }
    /** Orthogonal projector onto S^{0+} (all rates) in E0 coordinates. */
    Mat P0plus() const {
        int d0 = jet.module.dim0();
        Mat P = Mat::Zero(d0, d0);
        for (const auto& b : S0plus) P += b * b.transpose();
        return P;
    }
    Mat P1plus() const {
        int d1 = jet.module.dim1();
        Mat P = Mat::Zero(d1, d1);
        for (const auto& b : S1plus) P += b * b.transpose();
        return P;
    }

    Json to_json() const {
        Json j;
        j["kernel_dim"] = kernel_dim;
        j["codim"] = codim();
        j["lambdas"] = lambdas;
        j["s0_plus_dim"] = s0plus_dim();
        j["s1_plus_dim"] = s1plus_dim();
        j["ladder_consistent"] = ladder_consistent;
        Json lad = Json::array();
        for (const auto& e : ladder)
            lad.push_back({{"lambda", e.lambda},
                           {"k", e.k},
                           {"eigenvalue", e.eigenvalue},
                           {"mult_s0", e.mult0},
                           {"mult_s1", e.mult1},
                           {"multiplicity", e.mult0 + e.mult1},
                           {"expected", e.expected}});
        j["ladder"] = lad;
        Json v = Json::object();
        for (const auto& [k, x] : violations) v[k] = x;
        j["violations"] = v;
        return j;
    }
};

namespace detail {

inline double max_abs(const Mat& m) { return m.size() ? m.cwiseAbs().maxCoeff() : 0.0; }

struct Cluster {
    double value;
    Mat basis;
};

/** Groups the spectrum of a symmetric matrix into clusters of relative width `rel`. */
inline std::vector<Cluster> eigen_clusters(const Mat& S, double rel) {
    Eigen::SelfAdjointEigenSolver<Mat> es(S);
    const Vec& ev = es.eigenvalues();
    double scale = std::max(1.0, ev.cwiseAbs().maxCoeff());
    std::vector<Cluster> out;
    Eigen::Index i = 0;
    while (i < ev.size()) {
        Eigen::Index j = i + 1;
        while (j < ev.size() && ev(j) - ev(j - 1) <= rel * scale) ++j;
        out.push_back({ev.segment(i, j - i).mean(), es.eigenvectors().middleCols(i, j - i)});
        i = j;
    }
    return out;
}

}  // namespace detail

/**
 * Kernels by SVD with cutoff tol_kernel * sigma_max, then M_a, Q, C and the ladder.
 * Compatibility is spot-checked on the axes and 16 seeded random unit normals.
 */
inline StructureReport analyze_jet(const PerturbationJet& jet, double tol_kernel = 1e-9, std::uint64_t seed = 11,
                                   double tol_struct = 1e-8) {
    const CliffordModule& m = jet.module;
    const int c = jet.codim();
    if (c < 1 || c > m.n) throw InputError("analyze_jet: codim out of range");
    if (static_cast<int>(jet.A1.size()) != c) throw InputError("analyze_jet: need one first derivative per normal");
    StructureReport R;
    R.jet = jet;
    const int d0 = m.dim0(), d1 = m.dim1();

    double scale = 0.0;
    for (const auto& a : jet.A1) scale = std::max(scale, detail::max_abs(a));

    // the cutoff is relative to the whole jet, so a roundoff-sized A0 counts as zero
    Eigen::JacobiSVD<Mat> svd(jet.A0, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const Vec& sv = svd.singularValues();
    double cut = tol_kernel * std::max(sv.size() ? sv(0) : 0.0, scale);
    int rank = 0;
    for (Eigen::Index i = 0; i < sv.size(); ++i)
        if (sv(i) > cut) ++rank;
    int k0 = d0 - rank, k1 = d1 - rank;
    if (k0 != k1)
        throw StructureError("analyze_jet: dim ker A (" + std::to_string(k0) + ") != dim ker A^T (" +
                             std::to_string(k1) + ")");
    if (k0 == 0) throw StructureError("analyze_jet: A is invertible at this point, no singular set");
    R.kernel_dim = k0;
    R.S0 = svd.matrixV().rightCols(k0);
    R.S1 = svd.matrixU().rightCols(k1);

    if (scale == 0.0) throw StructureError("analyze_jet: vanishing first derivative, Q is singular");

    R.violations["concentration"] = check_concentrating_pair(m, jet.A0).violation;
    double deriv = 0.0;
    for (const auto& a : jet.A1) deriv = std::max(deriv, check_concentrating_pair(m, a).violation);
    for (const auto& row : jet.A2)
        for (const auto& a : row) deriv = std::max(deriv, check_concentrating_pair(m, a).violation);
    R.violations["derivative_identity"] = deriv;

    Mat P1perp = Mat::Identity(d1, d1) - R.S1 * R.S1.transpose();
    double leak = 0.0;
    for (int a = 0; a < c; ++a) {
        const Mat& A1 = jet.A1[a];
        Mat ca = m.c10(jet.normals[a]);
        R.G.push_back(R.S1.transpose() * ca * R.S0);
        R.Abar.push_back(R.S1.transpose() * A1 * R.S0);
        R.M0.push_back(R.S0.transpose() * ca.transpose() * A1 * R.S0);
        R.M1.push_back(-R.S1.transpose() * ca * A1.transpose() * R.S1);
        leak = std::max(leak, detail::max_abs(P1perp * A1 * R.S0));
    }
    R.violations["transversality"] = leak / scale;

    auto Mv0 = [&](const Vec& v) {
        return Mat(R.S0.transpose() * m.c10(jet.covector(v)).transpose() * jet.A1_along(v) * R.S0);
    };
    auto Mv1 = [&](const Vec& v) {
        return Mat(-R.S1.transpose() * m.c10(jet.covector(v)) * jet.A1_along(v).transpose() * R.S1);
    };
    auto Mvw0 = [&](const Vec& v, const Vec& w) {
        Mat Av = jet.A1_along(v), Aw = jet.A1_along(w);
        return Mat(0.5 * R.S0.transpose() * (Av.transpose() * Aw + Aw.transpose() * Av) * R.S0);
    };
    auto Mvw1 = [&](const Vec& v, const Vec& w) {
        Mat Av = jet.A1_along(v), Aw = jet.A1_along(w);
        return Mat(0.5 * R.S1.transpose() * (Av * Aw.transpose() + Aw * Av.transpose()) * R.S1);
    };

    double sym = 0.0;
    for (int a = 0; a < c; ++a) {
        sym = std::max(sym, detail::max_abs(R.M0[a] - R.M0[a].transpose()));
        sym = std::max(sym, detail::max_abs(R.M1[a] - R.M1[a].transpose()));
    }
    R.violations["m_symmetry"] = sym / scale;

    R.Q0 = R.M0[0] * R.M0[0];
    R.Q1 = R.M1[0] * R.M1[0];
    double qscale = std::max(detail::max_abs(R.Q0), 1e-300);
    double msq = 0.0;
    for (int a = 0; a < c; ++a) {
        msq = std::max(msq, detail::max_abs(R.M0[a] * R.M0[a] - R.Q0));
        msq = std::max(msq, detail::max_abs(R.M1[a] * R.M1[a] - R.Q1));
    }
    R.violations["m_squared"] = msq / qscale;

    Rng rng(seed);
    std::vector<Vec> dirs;
    for (int a = 0; a < c; ++a) {
        Vec e = Vec::Zero(c);
        e(a) = 1.0;
        dirs.push_back(e);
    }
    for (int t = 0; t < 16; ++t) dirs.push_back(unit_vector(rng, c));
    double compat = 0.0, comm = 0.0;
    for (size_t i = 0; i < dirs.size(); ++i) {
        const Vec& v = dirs[i];
        const Vec& w = dirs[(i * 7 + 3) % dirs.size()];
        double g = v.dot(w);
        compat = std::max(compat, detail::max_abs(Mvw0(v, w) - g * R.Q0));
        compat = std::max(compat, detail::max_abs(Mvw1(v, w) - g * R.Q1));
        Mat Mv = Mv0(v);
        compat = std::max(compat, detail::max_abs(Mv * Mv - R.Q0));
        if (c >= 2) {
            Vec p = w - g * v;
            if (p.norm() > 1e-6) {
                p /= p.norm();
                Mat Mp = Mv0(p), Mv1v = Mv1(v), Mp1 = Mv1(p);
                comm = std::max(comm, detail::max_abs(Mv * Mp - Mp * Mv));
                comm = std::max(comm, detail::max_abs(Mv1v * Mp1 - Mp1 * Mv1v));
            }
        }
    }
    R.violations["compatibility"] = compat / qscale;
    R.violations["commutator"] = comm / qscale;
    if (std::max(msq, compat) > tol_struct * qscale)
        throw StructureError("analyze_jet: M_a^2 is not constant over the normal sphere (defect " +
                             std::to_string(std::max(msq, compat) / qscale) + ")");

    Eigen::SelfAdjointEigenSolver<Mat> qes(R.Q0);
    if (qes.eigenvalues().minCoeff() <= 1e-10 * qscale) throw StructureError("analyze_jet: Q is singular");

    double inter = 0.0;
    for (int j = 0; j < m.n; ++j) {
        Mat g = R.S1.transpose() * m.gens[j] * R.S0;
        inter = std::max(inter, detail::max_abs(g * R.Q0 - R.Q1 * g));
    }
    R.violations["q_intertwine"] = inter / qscale;

    R.C0 = Mat::Zero(k0, k0);
    R.C1 = Mat::Zero(k1, k1);
    for (int a = 0; a < c; ++a) {
        R.C0 += R.M0[a];
        R.C1 += R.M1[a];
    }

    auto blocks0 = detail::eigen_clusters(R.Q0, 1e-6);
    auto blocks1 = detail::eigen_clusters(R.Q1, 1e-6);
    if (blocks0.size() != blocks1.size()) throw StructureError("analyze_jet: Q0 and Q1 spectra differ");
    double label_err = 0.0;
    for (size_t l = 0; l < blocks0.size(); ++l) {
        double lam = std::sqrt(blocks0[l].value);
        if (std::abs(std::sqrt(blocks1[l].value) - lam) > 1e-6 * lam)
            throw StructureError("analyze_jet: Q0 and Q1 spectra differ");
        R.lambdas.push_back(lam);
        std::vector<int> mult0(c + 1, 0), mult1(c + 1, 0);
        auto label = [&](const Mat& C, const Mat& basis, const Mat& S, std::vector<int>& mult, Mat& plus, Mat& minus) {
            Mat Cl = basis.transpose() * C * basis;
            Eigen::SelfAdjointEigenSolver<Mat> ces(Cl);
            std::vector<int> plus_cols, minus_cols;
            for (Eigen::Index i = 0; i < Cl.rows(); ++i) {
                double mu = ces.eigenvalues()(i);
                int best = 0;
                double bd = std::abs(mu - c * lam);
                for (int k = 1; k <= c; ++k) {
                    double dd = std::abs(mu - (c - 2 * k) * lam);
                    if (dd < bd) {
                        bd = dd;
                        best = k;
                    }
                }
                label_err = std::max(label_err, bd / lam);
                ++mult[best];
                if (best == 0) plus_cols.push_back(static_cast<int>(i));
                if (best == c) minus_cols.push_back(static_cast<int>(i));
            }
            Mat full = S * basis * ces.eigenvectors();
            plus.resize(S.rows(), plus_cols.size());
            for (size_t i = 0; i < plus_cols.size(); ++i) plus.col(i) = full.col(plus_cols[i]);
            minus.resize(S.rows(), minus_cols.size());
            for (size_t i = 0; i < minus_cols.size(); ++i) minus.col(i) = full.col(minus_cols[i]);
        };
        Mat p0, m0, p1, m1;
        label(R.C0, blocks0[l].basis, R.S0, mult0, p0, m0);
        label(R.C1, blocks1[l].basis, R.S1, mult1, p1, m1);
        R.S0plus.push_back(p0);
        R.S0minus.push_back(m0);
        R.S1plus.push_back(p1);
        R.S1minus.push_back(m1);
        int top = mult0[0] + mult1[0];
        for (int k = 0; k <= c; ++k)
            R.ladder.push_back({lam, k, (c - 2 * k) * lam, mult0[k], mult1[k],
                                static_cast<int>(binomial(c, k)) * top});
    }
    R.violations["ladder_label"] = label_err;
    R.ladder_consistent = label_err <= 1e-8;
    for (const auto& e : R.ladder)
        if (e.mult0 + e.mult1 != e.expected) R.ladder_consistent = false;
    return R;
}

}  // namespace dirac

#endif
