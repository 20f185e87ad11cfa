#include "catch_amalgamated.hpp"
#include "dirac/eigensolve.hpp"

using namespace dirac;
using Catch::Approx;

namespace {

SpMat dirichlet_laplacian(int N) {
    std::vector<Triplet> t;
    for (int i = 0; i < N; ++i) {
        t.emplace_back(i, i, 2.0);
        if (i + 1 < N) {
            t.emplace_back(i, i + 1, -1.0);
            t.emplace_back(i + 1, i, -1.0);
        }
    }
    SpMat A(N, N);
    A.setFromTriplets(t.begin(), t.end());
    return A;
}

EigenResult solve(const LinearOperator& op, int k, EigenMethod m, std::uint64_t seed = 0, double tol = 1e-10) {
    EigenRequest req;
    req.op = op;
    req.k = k;
    req.method = m;
    req.seed = seed;
    req.tol = tol;
    return lowest_eigenpairs(req);
}

}  // namespace

TEST_CASE("diagonal operator", "[eigen]") {
    Vec d(100);
    for (int i = 0; i < 100; ++i) d(i) = 99 - i;
    for (auto m : {EigenMethod::Lobpcg, EigenMethod::Lanczos, EigenMethod::DenseOracle}) {
        EigenResult r = solve(dense_operator(Mat(d.asDiagonal())), 3, m);
        INFO(method_name(m));
        CHECK(r.all_converged());
        for (int i = 0; i < 3; ++i) CHECK(r.values(i) == Approx(i).margin(1e-9));
    }
}

TEST_CASE("Dirichlet Laplacian against the closed form", "[eigen]") {
    const int N = 128;
    for (auto m : {EigenMethod::Lobpcg, EigenMethod::Lanczos}) {
        EigenResult r = solve(sparse_operator(dirichlet_laplacian(N)), 4, m);
        INFO(method_name(m));
        REQUIRE(r.all_converged());
        for (int j = 1; j <= 4; ++j) {
            double exact = 2 - 2 * std::cos(j * M_PI / (N + 1));
            CHECK(std::abs(r.values(j - 1) - exact) < 1e-10 * 4);
        }
    }
}

TEST_CASE("LOBPCG agrees with the dense oracle on random B^T B", "[eigen][property]") {
    Rng rng(2);
    for (int trial = 0; trial < 5; ++trial) {
        Mat B = gaussian_matrix(rng, 300, 200);
        Mat A = B.transpose() * B;
        EigenResult ref = solve(dense_operator(A), 6, EigenMethod::DenseOracle);
        EigenResult it = solve(dense_operator(A), 6, EigenMethod::Lobpcg, trial);
        REQUIRE(it.all_converged());
        double scale = ref.values.maxCoeff();
        CHECK((it.values - ref.values).cwiseAbs().maxCoeff() < 1e-8 * scale);
        // orthonormal vectors with small residuals
        CHECK((it.vectors.transpose() * it.vectors - Mat::Identity(6, 6)).cwiseAbs().maxCoeff() < 1e-10);
        for (int i = 0; i < 6; ++i) CHECK(it.residuals(i) <= 1e-10);
    }
}

TEST_CASE("normal operators give the squared singular values", "[eigen]") {
    Rng rng(4);
    Mat B = gaussian_matrix(rng, 80, 60);
    SpMat S = B.sparseView();
    Eigen::JacobiSVD<Mat> svd(B);
    Vec sv = svd.singularValues().reverse();
    EigenResult r = solve(normal_operator(S), 3, EigenMethod::Lobpcg);
    for (int i = 0; i < 3; ++i) CHECK(r.values(i) == Approx(sv(i) * sv(i)).epsilon(1e-9));
    EigenResult c = solve(conormal_operator(S), 21, EigenMethod::DenseOracle);
    for (int i = 0; i < 20; ++i) CHECK(c.values(i) == Approx(0).margin(1e-9));
    CHECK(c.values(20) == Approx(sv(0) * sv(0)).epsilon(1e-9));
}

TEST_CASE("runs are reproducible for a fixed seed", "[eigen]") {
    SpMat A = dirichlet_laplacian(400);
    EigenResult a = solve(sparse_operator(A), 3, EigenMethod::Lobpcg, 9);
    EigenResult b = solve(sparse_operator(A), 3, EigenMethod::Lobpcg, 9);
    CHECK(a.values == b.values);
    CHECK(a.iterations == b.iterations);
}

TEST_CASE("request validation", "[eigen]") {
    Mat A = Mat::Identity(10, 10);
    CHECK_THROWS_AS(solve(dense_operator(A), 0, EigenMethod::Lobpcg), InputError);
    CHECK_THROWS_AS(solve(dense_operator(A), 1, EigenMethod::Lobpcg, 0, -1.0), InputError);
    CHECK_THROWS_AS(parse_method("arpack"), InputError);
    CHECK(parse_method("lanczos") == EigenMethod::Lanczos);
    LinearOperator big;
    big.dim = 5000;
    big.apply = [](const Mat& X, Mat& Y) { Y = X; };
    big.diagonal = Vec::Ones(5000);
    CHECK_THROWS_AS(solve(big, 1, EigenMethod::DenseOracle), InputError);
}

TEST_CASE("gap split", "[eigen]") {
    auto a = gap_split({1e-9, 1e-9, 60, 62});
    REQUIRE(a.has_value());
    CHECK(a->cluster_size == 2);
    CHECK(a->ratio == Approx(6e10));
    CHECK_FALSE(gap_split({1, 2, 3, 4}).has_value());
    auto z = gap_split({0, 0, 0, 5});
    REQUIRE(z.has_value());
    CHECK(z->cluster_size == 3);
    CHECK_THROWS_AS(gap_split({}), InputError);
}
