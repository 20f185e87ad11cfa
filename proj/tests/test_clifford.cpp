#include "catch_amalgamated.hpp"
#include "dirac/clifford.hpp"

using namespace dirac;
using Catch::Approx;

namespace {

std::vector<int> eta_for(int c, int q) {
    std::vector<int> e(c, 1);
    for (int a = 0; a < q; ++a) e[a] = -1;
    return e;
}

}  // namespace

TEST_CASE("exterior model satisfies the Clifford relations exactly", "[clifford]") {
    for (int n = 1; n <= 3; ++n) {
        CliffordModule m = build_witten_module(n);
        CHECK(m.dim0() == (1 << (n - 1)));
        CHECK(m.dim1() == (1 << (n - 1)));
        CHECK(clifford_relation_residual(m) == 0.0);
    }
}

TEST_CASE("c(u) maps the 0-form to the 1-form u with the expected sign", "[clifford]") {
    CliffordModule m = build_witten_module(2);
    // even basis {1, dx^dy}, odd basis {dx, dy}
    Mat c = m.c10(m.axis(0));
    Mat ch = m.chat10(m.axis(0));
    CHECK(c(0, 0) == 1.0);   // eps(dx) 1 = dx
    CHECK(ch(0, 0) == 1.0);
    CHECK(c(1, 1) == -1.0);  // -iota(dx) dx^dy = -dy
    CHECK(ch(1, 1) == 1.0);  // +iota(dx) dx^dy = dy
}

TEST_CASE("hand-computed ladder for x^2/2 + y^2/2 on R^2", "[clifford]") {
    // A0 = 0 so S0 = E0 = {1, dx^dy}. C acts by +2 lambda on 1 and -2 lambda on dx^dy.
    const double lam = 1.5;
    StructureReport R = analyze_jet(witten_quadratic_jet(2, {1, 1}, {lam, lam}));
    CHECK(R.kernel_dim == 2);
    CHECK(R.ladder_consistent);
    CHECK((R.Q0 - lam * lam * Mat::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-12);
    Eigen::SelfAdjointEigenSolver<Mat> es(R.C0);
    CHECK(es.eigenvalues()(0) == Approx(-2 * lam));
    CHECK(es.eigenvalues()(1) == Approx(2 * lam));
    CHECK(R.s0plus_dim() == 1);
    CHECK(R.s1plus_dim() == 0);
    // the top rung is the constant function
    Vec e0 = R.S0plus[0].col(0);
    CHECK(std::abs(e0(0)) == Approx(1.0));
}

TEST_CASE("S+ ranks follow the Morse index", "[clifford][property]") {
    for (int n = 1; n <= 3; ++n)
        for (int c = 1; c <= n; ++c)
            for (int q = 0; q <= c; ++q) {
                StructureReport R = analyze_jet(witten_quadratic_jet(n, eta_for(c, q), std::vector<double>(c, 0.7)));
                INFO("n " << n << " codim " << c << " q " << q);
                CHECK(R.ladder_consistent);
                // S+ = dx_1..dx_q tensor tangential forms, split by total parity
                int tangential = 1 << (n - c);
                CHECK(R.s0plus_dim() + R.s1plus_dim() == tangential);
                int expected_diff = n == c ? (q % 2 ? -1 : 1) : 0;
                CHECK(R.s0plus_dim() - R.s1plus_dim() == expected_diff);
            }
}

TEST_CASE("random bundle maps are rarely concentrating pairs", "[clifford][property]") {
    Rng rng(7);
    for (int n = 2; n <= 3; ++n) {
        CliffordModule m = build_witten_module(n);
        int rejected = 0;
        for (int t = 0; t < 50; ++t)
            if (!check_concentrating_pair(m, gaussian_matrix(rng, m.dim1(), m.dim0())).ok) ++rejected;
        CHECK(rejected >= 45);
    }
}

TEST_CASE("chat(w) is always a concentrating pair", "[clifford][property]") {
    Rng rng(8);
    for (int n = 1; n <= 3; ++n) {
        CliffordModule m = build_witten_module(n);
        for (int t = 0; t < 10; ++t) CHECK(check_concentrating_pair(m, m.chat10(unit_vector(rng, n))).ok);
    }
}

TEST_CASE("nonzero gradient leaves no kernel", "[clifford]") {
    CliffordModule m = build_witten_module(2);
    Vec g(2);
    g << 0.3, -1.0;
    PerturbationJet j = witten_jet(m, g, Mat::Identity(2, 2), {}, {m.axis(0)});
    Eigen::JacobiSVD<Mat> svd(j.A0);
    CHECK(svd.singularValues().minCoeff() == Approx(g.norm()));
}

TEST_CASE("roundoff-sized A0 still counts as zero", "[clifford]") {
    CliffordModule m = build_witten_module(2);
    Vec g(2);
    g << 1e-17, -3e-17;
    Mat H = Mat::Identity(2, 2);
    StructureReport R = analyze_jet(witten_jet(m, g, H, {}, {m.axis(0), m.axis(1)}));
    CHECK(R.kernel_dim == 2);
}

TEST_CASE("malformed jets are rejected", "[clifford]") {
    CHECK_THROWS_AS(witten_quadratic_jet(2, {1, 1, 1}, {1, 1, 1}), InputError);
    CHECK_THROWS_AS(witten_quadratic_jet(2, {1}, {1, 2}), InputError);
    CliffordModule m = build_witten_module(2);
    CHECK_THROWS_AS(check_concentrating_pair(m, Mat::Zero(3, 2)), InputError);
}
