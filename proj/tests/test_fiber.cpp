#include "catch_amalgamated.hpp"
#include "dirac/eigensolve.hpp"
#include "dirac/fiber.hpp"
#include "dirac/lab.hpp"

using namespace dirac;
using Catch::Approx;

namespace {

StructureReport model(int n, int codim, int q, double lam) {
    std::vector<int> eta(codim, 1);
    for (int a = 0; a < q; ++a) eta[a] = -1;
    return analyze_jet(witten_quadratic_jet(n, eta, std::vector<double>(codim, lam)));
}

}  // namespace

TEST_CASE("at s = 0 the vertical operator squares to the Dirichlet Laplacian", "[fiber]") {
    StructureReport R = model(2, 1, 0, 1.0);
    FiberGrid g(1, 32, 3.0);
    SpMat D = assemble_vertical(R, g, 0.0);
    Mat DtD = Mat(SpMat(D.transpose() * D));
    const int k = R.kernel_dim;
    const double ih2 = 1.0 / (g.h() * g.h());
    Mat L = Mat::Zero(g.Nf, g.Nf);
    for (int i = 0; i < g.Nf; ++i) {
        L(i, i) = 2 * ih2;
        if (i + 1 < g.Nf) L(i, i + 1) = L(i + 1, i) = -ih2;
    }
    Mat expect = Mat::Zero(g.Nf * k, g.Nf * k);
    for (int i = 0; i < g.Nf; ++i)
        for (int j = 0; j < g.Nf; ++j) expect.block(i * k, j * k, k, k) = L(i, j) * Mat::Identity(k, k);
    CHECK((DtD - expect).cwiseAbs().maxCoeff() < 1e-9 * ih2);
}

TEST_CASE("codim 1 vertical spectrum matches the oscillator ladder", "[fiber]") {
    for (int q = 0; q <= 1; ++q) {
        StructureReport R = model(1, 1, q, 1.0);
        const double s = 16;
        FiberGrid g(1, 512, 8.0 / std::sqrt(s));
        EigenRequest req;
        req.op = normal_operator(assemble_vertical(R, g, s));
        req.k = 4;
        req.method = EigenMethod::DenseOracle;
        EigenResult r = lowest_eigenpairs(req);
        auto exact = oscillator_eigenvalues(R, s, 4);
        INFO("q " << q);
        for (int i = 0; i < 4; ++i) {
            if (exact[i] == 0)
                CHECK(r.values(i) < 1e-3 * 2 * s);
            else
                CHECK(r.values(i) == Approx(exact[i]).epsilon(0.01));
        }
        // q = 1 has no even kernel: the ladder starts at 2 s lambda
        CHECK((exact[0] == 0.0) == (q == 0));
    }
}

TEST_CASE("analytic ladder multiplicities", "[fiber]") {
    auto rung = oscillator_spectrum(1.0, 2.0, 2, 0, 3);
    REQUIRE(rung.size() == 3);
    CHECK(rung[0].value == 0.0);
    CHECK(rung[1].value == 4.0);
    CHECK(rung[1].multiplicity == 2);
    CHECK(rung[2].multiplicity == 3);
    CHECK_THROWS_AS(oscillator_spectrum(1.0, 2.0, 2, 3, 3), InputError);
}

TEST_CASE("the Gaussian section is an approximate kernel with the right mass", "[fiber]") {
    StructureReport R = model(2, 2, 0, 1.0);
    FiberGrid g(2, 128, 4.0);
    GaussianResidual res = gaussian_residual(R, g, 4.0, R.S0plus[0].col(0));
    CHECK(res.residual < 0.05);
    CHECK(res.norm_ratio == Approx(res.expected_ratio).epsilon(1e-3));
    CHECK(res.tail_bound < 1e-6);
    Vec bad = Vec::Zero(R.jet.module.dim0());
    bad(1) = 1;  // dx^dy is the bottom rung, not S0+
    CHECK_THROWS_AS(gaussian_section(R, g, 4.0, bad), StructureError);
}

TEST_CASE("Weitzenbock residual shrinks under refinement", "[fiber]") {
    StructureReport R = model(1, 1, 0, 1.0);
    double a = weitzenbock_residual(R, FiberGrid(1, 128, 4.0), 4.0);
    double b = weitzenbock_residual(R, FiberGrid(1, 256, 4.0), 4.0);
    CHECK(a / b > 1.7);
}

TEST_CASE("fiber grid limits", "[fiber]") {
    CHECK_THROWS_AS(FiberGrid(4, 32, 1.0), InputError);
    CHECK_THROWS_AS(FiberGrid(1, 8, 1.0), InputError);
    CHECK_THROWS_AS(FiberGrid(3, 256, 1.0), InputError);
    CHECK(FiberGrid(2, 16, 1.0).edges() == 16 * 17);
}

TEST_CASE("the log-derivative term of the Gaussian is orthogonal to it", "[fiber][balancing]") {
    // (c/4 - s lambda r^2 / 2) phi against phi on the line, c = 1
    const double s = 20, lam = 1.3;
    FiberGrid g(1, 4096, 3.0);
    double inner = 0, norm = 0;
    for (int i = 0; i < g.Nf; ++i) {
        double r = g.node_x(i), sl = s * lam;
        double phi = std::pow(sl, 0.25) * std::exp(-0.5 * sl * r * r);
        inner += (0.25 - 0.5 * sl * r * r) * phi * phi * g.h();
        norm += phi * phi * g.h();
    }
    CHECK(std::abs(inner) < 1e-10 * norm);
    CHECK(norm == Approx(std::sqrt(M_PI)).epsilon(1e-10));
}

TEST_CASE("balancing solutions scale like s^{-1/2}", "[fiber][balancing]") {
    // Circle-type jet on T^2: normal x, tangent y, lambda varying along the circle.
    const double lam = 1.0, dlam = 0.5;
    StructureReport R = model(2, 1, 0, lam);
    CliffordModule m = build_witten_module(2);
    Mat ct = m.c10(m.axis(1));
    Vec e0 = R.S0plus[0].col(0);
    Vec e1 = ct * e0;
    std::vector<double> gain;
    for (double s : {16.0, 64.0}) {
        FiberGrid g(1, 1024, 2.0);
        const int k = R.kernel_dim;
        Vec rhs(g.edges() * k);
        for (Eigen::Index e = 0; e < g.edges(); ++e)
            rhs.segment(e * k, k) = R.S1.transpose() *
                detail::balancing_term(R, ct, e0, e1, lam, dlam, s, g.edge_x(static_cast<int>(e)), false);
        SpMat D = assemble_vertical(R, g, s);
        Vec u = balance_fiber(D, rhs);
        // solvable up to discretization: the discrete cokernel is only approximately the Gaussian
        CHECK((D * u + rhs).norm() < 1e-3 * rhs.norm());
        gain.push_back(u.norm() / rhs.norm());
    }
    CHECK(gain[0] / gain[1] == Approx(2.0).epsilon(0.05));
}
