#include "catch_amalgamated.hpp"
#include "dirac/eigensolve.hpp"
#include "dirac/torus.hpp"

using namespace dirac;
using Catch::Approx;

TEST_CASE("d squares to zero", "[torus]") {
    for (int n = 1; n <= 3; ++n) {
        TorusGrid g(std::vector<int>(n, 16));
        SpMat d = assemble_d(g);
        SpMat dd = d * d;
        CHECK(dd.norm() < 1e-10 * d.norm());
        SpMat ds = assemble_dstar(g);
        CHECK(SpMat(ds - SpMat(d.transpose())).norm() == 0.0);
    }
}

TEST_CASE("d of a function is its forward difference", "[torus]") {
    TorusGrid g({32, 16});
    FormField u(g);
    auto u0 = u.component(0);
    for (Eigen::Index p = 0; p < g.points(); ++p) u0(p) = std::sin(g.position(p, 0)[0]) + 2 * std::cos(g.position(p, 0)[1]);
    Vec du = assemble_d(g) * u.data;
    FormField D(g);
    D.data = du;
    for (Eigen::Index p = 0; p < g.points(); ++p) {
        double fx = (u0(g.shift(p, 0, 1)) - u0(p)) / g.h(0);
        double fy = (u0(g.shift(p, 1, 1)) - u0(p)) / g.h(1);
        CHECK(D.component(1u)(p) == Approx(fx).margin(1e-12));
        CHECK(D.component(2u)(p) == Approx(fy).margin(1e-12));
    }
}

TEST_CASE("harmonic forms on T^2 at s = 0", "[torus]") {
    TorusGrid g({16, 16});
    ScalarFunction f = ScalarFunction::lookup("cos_x_plus_cos_y");
    DiracOperator D = assemble_Ds(g, f, 0.0);
    Mat A = Mat(D.Ds);
    Eigen::SelfAdjointEigenSolver<Mat> ev(A.transpose() * A), od(A * A.transpose());
    int k0 = 0, k1 = 0;
    for (Eigen::Index i = 0; i < ev.eigenvalues().size(); ++i) k0 += ev.eigenvalues()(i) < 1e-9;
    for (Eigen::Index i = 0; i < od.eigenvalues().size(); ++i) k1 += od.eigenvalues()(i) < 1e-9;
    CHECK(k0 == 2);  // constants and dx^dy
    CHECK(k1 == 2);  // dx, dy
}

TEST_CASE("chat(df) for cos theta is multiplication by -sin at edge midpoints", "[torus]") {
    TorusGrid g({64});
    ScalarFunction f = ScalarFunction::lookup("cos_theta");
    SpMat c = assemble_witten(g, f);
    Vec out = c * Vec::Ones(g.points());
    for (Eigen::Index p = 0; p < g.points(); ++p) CHECK(out(p) == Approx(-std::sin(g.position(p, 1u)[0])).margin(1e-12));
}

TEST_CASE("D_s is invariant under f -> f + const", "[torus][property]") {
    TorusGrid g({16, 20});
    auto a = assemble_Ds(g, ScalarFunction::lookup("cos(x) + cos(y)"), 3.0);
    auto b = assemble_Ds(g, ScalarFunction::lookup("cos(x) + cos(y) + 7"), 3.0);
    CHECK(Mat(a.Ds - b.Ds).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("WittenFamily reproduces assemble_Ds", "[torus]") {
    TorusGrid g({16, 20});
    ScalarFunction f = ScalarFunction::lookup("bott_mixed");
    WittenFamily fam(g, f);
    for (double s : {0.0, 2.5, 40.0})
        CHECK(Mat(fam.at(s).Ds - assemble_Ds(g, f, s).Ds).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("even storage order is ascending masks", "[torus]") {
    TorusGrid g({16, 16, 16});
    auto m = g.masks();
    std::vector<unsigned> expect{0, 3, 5, 6, 1, 2, 4, 7};
    CHECK(m == expect);
    CHECK(g.stride(0) == 256);
    CHECK(g.stride(2) == 1);
}

TEST_CASE("expression derivatives match calculus", "[expr]") {
    ScalarFunction f = ScalarFunction::lookup("x^2 * sin(y) + exp(z / 2) - 3 * cos(x * y)");
    std::array<double, 3> x{0.4, -1.1, 0.7};
    double X = x[0], Y = x[1], Z = x[2];
    CHECK(f.value(x) == Approx(X * X * std::sin(Y) + std::exp(Z / 2) - 3 * std::cos(X * Y)));
    Vec gr = f.grad(x, 3);
    CHECK(gr(0) == Approx(2 * X * std::sin(Y) + 3 * Y * std::sin(X * Y)));
    CHECK(gr(1) == Approx(X * X * std::cos(Y) + 3 * X * std::sin(X * Y)));
    CHECK(gr(2) == Approx(0.5 * std::exp(Z / 2)));
    Mat H = f.hess(x, 3);
    CHECK(H(0, 1) == Approx(2 * X * std::cos(Y) + 3 * std::sin(X * Y) + 3 * X * Y * std::cos(X * Y)));
    CHECK(H(1, 0) == Approx(H(0, 1)));
    CHECK(H(2, 2) == Approx(0.25 * std::exp(Z / 2)));
    CHECK(f.dimension() == 3);
    CHECK(f.derivative_defect(3) < 1e-6);
}

TEST_CASE("third derivatives of bott_mixed", "[expr]") {
    ScalarFunction f = ScalarFunction::lookup("bott_mixed");
    std::array<double, 3> x{0.3, 1.2, 0};
    auto T = f.third(x, 2);
    // f_xxx = -(2 + sin y) sin x, f_xxy = cos y cos x
    CHECK(T[0](0, 0) == Approx(-(2 + std::sin(1.2)) * std::sin(0.3)).epsilon(1e-7));
    CHECK(T[1](0, 0) == Approx(std::cos(1.2) * std::cos(0.3)).epsilon(1e-7));
}

TEST_CASE("expression errors name the column", "[expr]") {
    CHECK_THROWS_AS(ScalarFunction::lookup("x +"), InputError);
    CHECK_THROWS_AS(ScalarFunction::lookup("sin(x"), InputError);
    CHECK_THROWS_AS(ScalarFunction::lookup("x ^ y"), InputError);
    CHECK_THROWS_AS(ScalarFunction::lookup("tan(x)"), InputError);
    CHECK_THROWS_AS(ScalarFunction::lookup("w"), InputError);
    CHECK_THROWS_WITH(ScalarFunction::lookup("x + )"), Catch::Matchers::ContainsSubstring("column"));
}

TEST_CASE("non-periodic functions are refused on the torus", "[expr]") {
    TorusGrid g({16, 16});
    CHECK_THROWS_AS(assemble_Ds(g, ScalarFunction::lookup("x^2"), 1.0), InputError);
}
