#ifndef DIRAC_EIGENSOLVE_HPP
#define DIRAC_EIGENSOLVE_HPP

#include <fstream>
#include <functional>
#include <optional>

#include "common.hpp"

namespace dirac {

/** Symmetric operator given by a block matvec, with an optional diagonal for preconditioning. */
struct LinearOperator {
    Eigen::Index dim = 0;
    std::function<void(const Mat&, Mat&)> apply;
    Vec diagonal;

    Mat operator*(const Mat& X) const {
        Mat Y(X.rows(), X.cols());
        apply(X, Y);
        return Y;
    }
};

inline LinearOperator sparse_operator(const SpMat& A) {
    auto a = std::make_shared<SpMat>(A);
    LinearOperator op;
    op.dim = A.rows();
    op.apply = [a](const Mat& X, Mat& Y) { Y = (*a) * X; };
    op.diagonal = A.diagonal();
    return op;
}

/** D^T D without forming the product. */
inline LinearOperator normal_operator(const SpMat& D) {
    auto d = std::make_shared<SpMat>(D);
    auto dt = std::make_shared<SpMat>(D.transpose());
    LinearOperator op;
    op.dim = D.cols();
    op.apply = [d, dt](const Mat& X, Mat& Y) {
        Mat T = (*d) * X;
        Y = (*dt) * T;
    };
    op.diagonal = Vec::Zero(D.cols());
    for (Eigen::Index r = 0; r < D.outerSize(); ++r)
        for (SpMat::InnerIterator it(D, r); it; ++it) op.diagonal(it.col()) += it.value() * it.value();
    return op;
}

/** D D^T without forming the product. */
inline LinearOperator conormal_operator(const SpMat& D) { return normal_operator(SpMat(D.transpose())); }

inline LinearOperator dense_operator(const Mat& A) {
    auto a = std::make_shared<Mat>(A);
    LinearOperator op;
    op.dim = A.rows();
    op.apply = [a](const Mat& X, Mat& Y) { Y = (*a) * X; };
    op.diagonal = A.diagonal();
    return op;
}

enum class EigenMethod { Lobpcg, Lanczos, DenseOracle };

inline std::string method_name(EigenMethod m) {
    switch (m) {
        case EigenMethod::Lobpcg: return "lobpcg";
        case EigenMethod::Lanczos: return "lanczos";
        case EigenMethod::DenseOracle: return "dense_oracle";
    }
    return "?";
}

inline EigenMethod parse_method(const std::string& s) {
    if (s == "lobpcg") return EigenMethod::Lobpcg;
    if (s == "lanczos") return EigenMethod::Lanczos;
    if (s == "dense_oracle" || s == "dense") return EigenMethod::DenseOracle;
    throw InputError("unknown eigensolver method '" + s + "'");
}

struct EigenRequest {
    LinearOperator op;
    int k = 1;
    double tol = 1e-10;
    int max_iter = 3000;
    std::uint64_t seed = 0;
    EigenMethod method = EigenMethod::Lobpcg;
};

struct EigenResult {
    Vec values;
    Mat vectors;
    Vec residuals;  // |Mx - lambda x| / max(lambda, |M|_est)
    std::vector<bool> converged;
    int iterations = 0;
    double norm_estimate = 0;
    std::string method;

    bool all_converged() const { return std::all_of(converged.begin(), converged.end(), [](bool b) { return b; }); }
    std::vector<double> value_list() const { return std::vector<double>(values.data(), values.data() + values.size()); }
    Json to_json() const {
        return {{"method", method},
                {"eigenvalues", value_list()},
                {"residuals", std::vector<double>(residuals.data(), residuals.data() + residuals.size())},
                {"converged", converged},
                {"iterations", iterations},
                {"norm_estimate", norm_estimate}};
    }
};

namespace detail {

inline double estimate_norm(const LinearOperator& op, std::uint64_t seed) {
    Rng rng(seed ^ 0x9e3779b97f4a7c15ULL);
    Mat x = gaussian_matrix(rng, op.dim, 1);
    x /= x.norm();
    double est = 0;
    for (int i = 0; i < 40; ++i) {
        Mat y = op * x;
        double ny = y.norm();
        if (!(ny > 0)) break;
        est = ny;
        x = y / ny;
    }
    return est;
}

/** Orthonormal basis of the column span of S, orthogonal to the orthonormal Xo. */
inline Mat orth_against(const Mat& Xo, Mat S) {
    for (int pass = 0; pass < 2; ++pass)
        if (Xo.cols()) S -= Xo * (Xo.transpose() * S);
    if (S.cols() == 0) return S;
    Eigen::ColPivHouseholderQR<Mat> qr(S);
    double top = qr.matrixQR().diagonal().cwiseAbs().maxCoeff();
    qr.setThreshold(1e-10);
    Eigen::Index r = 0;
    for (Eigen::Index i = 0; i < std::min(S.rows(), S.cols()); ++i)
        if (std::abs(qr.matrixQR()(i, i)) > 1e-10 * top) ++r;
    if (r == 0 || !(top > 0)) return Mat(S.rows(), 0);
    Mat Q = qr.householderQ() * Mat::Identity(S.rows(), r);
    if (Xo.cols()) Q -= Xo * (Xo.transpose() * Q);
    Eigen::HouseholderQR<Mat> q2(Q);
    return q2.householderQ() * Mat::Identity(S.rows(), r);
}

inline void finish(EigenResult& res, const LinearOperator& op, const Mat& X, const Vec& lam, int k, double tol) {
    Mat AX = op * X;
    res.values = lam.head(k);
    res.vectors = X.leftCols(k);
    res.residuals.resize(k);
    res.converged.assign(k, false);
    for (int i = 0; i < k; ++i) {
        double r = (AX.col(i) - lam(i) * X.col(i)).norm() / std::max(std::abs(lam(i)), res.norm_estimate);
        res.residuals(i) = r;
        res.converged[i] = r <= tol;
    }
}

}  // namespace detail

/** Dense eigensolve of the whole operator; limited to dim <= 4096. */
inline EigenResult dense_oracle(const EigenRequest& req) {
    const auto& op = req.op;
    if (op.dim > 4096) throw InputError("dense_oracle: dimension " + std::to_string(op.dim) + " exceeds 4096");
    Mat A(op.dim, op.dim);
    for (Eigen::Index c0 = 0; c0 < op.dim; c0 += 256) {
        Eigen::Index w = std::min<Eigen::Index>(256, op.dim - c0);
        Mat E = Mat::Zero(op.dim, w);
        for (Eigen::Index j = 0; j < w; ++j) E(c0 + j, j) = 1.0;
        A.middleCols(c0, w) = op * E;
    }
    Mat S = 0.5 * (A + A.transpose());
    Eigen::SelfAdjointEigenSolver<Mat> es(S);
    EigenResult res;
    res.method = "dense_oracle";
    int k = static_cast<int>(std::min<Eigen::Index>(req.k, op.dim));
    res.norm_estimate = es.eigenvalues().cwiseAbs().maxCoeff();
    res.values = es.eigenvalues().head(k);
    res.vectors = es.eigenvectors().leftCols(k);
    res.residuals = Vec::Zero(k);
    for (int i = 0; i < k; ++i)
        res.residuals(i) = (A * res.vectors.col(i) - res.values(i) * res.vectors.col(i)).norm() /
                           std::max(std::abs(res.values(i)), res.norm_estimate);
    res.converged.assign(k, true);
    res.iterations = 1;
    return res;
}

/**
 * LOBPCG for the k smallest eigenpairs: block size k + 4, inverse-diagonal
 * preconditioner clipped below at 1e-8 * max, and soft locking (converged vectors
 * stay in the Rayleigh-Ritz basis but contribute no new search directions).
 */
inline EigenResult lobpcg(const EigenRequest& req) {
    const auto& op = req.op;
    const Eigen::Index N = op.dim;
    const int k = static_cast<int>(std::min<Eigen::Index>(req.k, N));
    const int m = static_cast<int>(std::min<Eigen::Index>(k + 4, N));
    EigenResult res;
    res.method = "lobpcg";
    if (N <= 4 * m) {  // the search space would cover the whole space anyway
        EigenRequest dreq = req;
        EigenResult d = dense_oracle(dreq);
        d.method = "lobpcg";
        return d;
    }
    res.norm_estimate = detail::estimate_norm(op, req.seed);

    Vec T = Vec::Ones(N);
    if (op.diagonal.size() == N) {
        double dmax = op.diagonal.maxCoeff();
        for (Eigen::Index i = 0; i < N; ++i) T(i) = 1.0 / std::max(op.diagonal(i), 1e-8 * dmax);
    }

    Rng rng(req.seed);
    Mat X = detail::orth_against(Mat(N, 0), gaussian_matrix(rng, N, m));
    Mat AX = op * X;
    Vec lam;
    auto rayleigh_ritz = [&]() {
        Mat H = X.transpose() * AX;
        H = 0.5 * (H + H.transpose()).eval();
        Eigen::SelfAdjointEigenSolver<Mat> es(H);
        X = X * es.eigenvectors();
        AX = AX * es.eigenvectors();
        lam = es.eigenvalues();
    };
    rayleigh_ritz();

    Mat P(N, 0), AP(N, 0);
    int it = 0;
    for (; it < req.max_iter; ++it) {
        Mat R = AX - X * lam.asDiagonal();
        if (!R.allFinite()) throw StructureError("lobpcg: NaN breakdown");
        std::vector<int> active;
        bool done = true;
        for (int i = 0; i < m; ++i) {
            double r = R.col(i).norm() / std::max(std::abs(lam(i)), res.norm_estimate);
            bool conv = r <= req.tol;
            if (i < k && !conv) done = false;
            if (!(i < k && conv)) active.push_back(i);
        }
        if (done) break;

        Mat S(N, static_cast<Eigen::Index>(active.size()) + P.cols());
        for (size_t a = 0; a < active.size(); ++a) S.col(a) = T.cwiseProduct(R.col(active[a]));
        if (P.cols()) S.rightCols(P.cols()) = P;
        Mat Q = detail::orth_against(X, S);
        Mat AQ = op * Q;

        Mat B(N, m + Q.cols()), AB(N, m + Q.cols());
        B << X, Q;
        AB << AX, AQ;
        Mat H = B.transpose() * AB;
        H = 0.5 * (H + H.transpose()).eval();
        Eigen::SelfAdjointEigenSolver<Mat> es(H);
        Mat Y = es.eigenvectors().leftCols(m);
        lam = es.eigenvalues().head(m);
        X = B * Y;
        AX = AB * Y;
        // new search direction: the component of the update outside the old X
        P = Q * Y.bottomRows(Q.cols());
        AP = AQ * Y.bottomRows(Q.cols());
        if (P.cols()) {
            // keep only the directions of vectors that are still active
            Mat Pa(N, static_cast<Eigen::Index>(active.size()));
            for (size_t a = 0; a < active.size(); ++a) Pa.col(a) = P.col(active[a]);
            P = Pa;
        }

        if ((it + 1) % 20 == 0) {  // limit drift of X and AX
            X = detail::orth_against(Mat(N, 0), X);
            AX = op * X;
            rayleigh_ritz();
        }
    }
    res.iterations = it;
    X = detail::orth_against(Mat(N, 0), X);
    AX = op * X;
    rayleigh_ritz();
    detail::finish(res, op, X, lam, k, req.tol);
    return res;
}

/**
 * Lanczos with full reorthogonalization. Memory is dim x (Krylov size), so the Krylov
 * size is capped at min(max_iter, 2.5e7 / dim). Exactly repeated eigenvalues are found
 * only up to roundoff; use LOBPCG for degenerate clusters.
 */
inline EigenResult lanczos(const EigenRequest& req) {
    const auto& op = req.op;
    const Eigen::Index N = op.dim;
    const int k = static_cast<int>(std::min<Eigen::Index>(req.k, N));
    EigenResult res;
    res.method = "lanczos";
    res.norm_estimate = detail::estimate_norm(op, req.seed);
    Eigen::Index mmax = std::min<Eigen::Index>({N, static_cast<Eigen::Index>(req.max_iter),
                                                std::max<Eigen::Index>(k + 1, static_cast<Eigen::Index>(2.5e7 / N))});
    Rng rng(req.seed);
    Mat V(N, mmax);
    Vec v0 = gaussian_matrix(rng, N, 1);
    V.col(0) = v0 / v0.norm();
    std::vector<double> alpha, beta;
    Eigen::Index j = 0;
    Vec ritz;
    Mat Yk;
    bool done = false;
    for (; j < mmax && !done; ++j) {
        Mat w = op * Mat(V.col(j));
        double a = V.col(j).dot(w.col(0));
        alpha.push_back(a);
        for (int pass = 0; pass < 2; ++pass) w -= V.leftCols(j + 1) * (V.leftCols(j + 1).transpose() * w);
        double b = w.norm();
        beta.push_back(b);
        bool breakdown = b < 1e-14 * std::max(res.norm_estimate, 1e-300);
        bool check = breakdown || j + 1 == mmax || ((j + 1) >= k && (j + 1) % 5 == 0);
        if (check) {
            Eigen::Index dim = j + 1;
            Vec d = Eigen::Map<Vec>(alpha.data(), dim);
            Vec e = dim > 1 ? Vec(Eigen::Map<Vec>(beta.data(), dim - 1)) : Vec(0);
            Eigen::SelfAdjointEigenSolver<Mat> es;
            es.computeFromTridiagonal(d, e, Eigen::ComputeEigenvectors);
            ritz = es.eigenvalues();
            Yk = es.eigenvectors();
            if (dim >= k) {
                done = true;
                for (int i = 0; i < k; ++i)
                    if (std::abs(b * Yk(dim - 1, i)) > req.tol * std::max(std::abs(ritz(i)), res.norm_estimate))
                        done = false;
            }
            if (breakdown) done = true;
        }
        if (!done && j + 1 < mmax) V.col(j + 1) = w / b;
    }
    res.iterations = static_cast<int>(j);
    Eigen::Index kk = std::min<Eigen::Index>(k, ritz.size());
    Mat X = V.leftCols(Yk.rows()) * Yk.leftCols(kk);
    detail::finish(res, op, X, ritz, static_cast<int>(kk), req.tol);
    return res;
}

inline EigenResult lowest_eigenpairs(const EigenRequest& req) {
    if (req.k < 1) throw InputError("eigensolve: k must be >= 1");
    if (!(req.tol > 0)) throw InputError("eigensolve: tol must be positive");
    switch (req.method) {
        case EigenMethod::Lobpcg: return lobpcg(req);
        case EigenMethod::Lanczos: return lanczos(req);
        case EigenMethod::DenseOracle: return dense_oracle(req);
    }
    return {};
}

struct GapSplit {
    int cluster_size = 0;
    double ratio = 0;
};

/** Split maximizing lambda_{i+1} / max(lambda_i, 1e-12 lambda_max); none when the best ratio is below min_ratio. */
inline std::optional<GapSplit> gap_split(const std::vector<double>& values, double min_ratio = 10.0) {
    if (values.empty()) throw InputError("gap_split: empty spectrum");
    if (!(min_ratio > 1)) throw InputError("gap_split: min_ratio must exceed 1");
    if (values.size() < 2) return std::nullopt;
    double vmax = *std::max_element(values.begin(), values.end());
    double floor = 1e-12 * std::abs(vmax);
    GapSplit best;
    for (size_t i = 0; i + 1 < values.size(); ++i) {
        double r = values[i + 1] / std::max(values[i], floor);
        if (r > best.ratio) {
            best.ratio = r;
            best.cluster_size = static_cast<int>(i + 1);
        }
    }
    if (best.ratio >= min_ratio) return best;
    return std::nullopt;
}

/** CSV columns s, index, eigenvalue, residual. */
inline void append_spectrum_csv(std::ostream& out, double s, const EigenResult& r) {
    for (Eigen::Index i = 0; i < r.values.size(); ++i)
        out << s << "," << i << "," << r.values(i) << "," << r.residuals(i) << "\n";
}

}  // namespace dirac

#endif
