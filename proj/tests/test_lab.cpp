#include "catch_amalgamated.hpp"
#include "dirac/lab.hpp"

using namespace dirac;
using Catch::Approx;

TEST_CASE("gap lemma on a diagonal example", "[gap]") {
    Vec d(4);
    d << 0.1, 0.2, 3.0, 4.0;
    Mat L = d.asDiagonal();
    Mat V = Mat::Identity(4, 2);
    GapLemmaReport r = gap_lemma_check(L, V, 0.04, 9.0);
    CHECK(r.status == "certified");
    CHECK(r.defect_sq < 1e-24);
    CHECK(r.sigma_min_p == Approx(1.0));

    // tilt V toward e3: still certified, defect bounded by 4 C1 / C2
    Mat Vt = V;
    Vt(2, 0) = 0.05;
    Vt.col(0).normalize();
    Mat G = L.transpose() * L;
    Mat Vp(4, 2);
    Vp.setZero();
    Vp.col(0) = Vec::Unit(4, 2) - Vt.col(0).dot(Vec::Unit(4, 2)) * Vt.col(0);
    Vp.col(0).normalize();
    Vp(3, 1) = 1;
    double c1 = Eigen::SelfAdjointEigenSolver<Mat>(Vt.transpose() * G * Vt).eigenvalues().maxCoeff();
    double c2 = Eigen::SelfAdjointEigenSolver<Mat>(Vp.transpose() * G * Vp).eigenvalues().minCoeff();
    GapLemmaReport t = gap_lemma_check(L, Vt, c1, c2);
    CHECK(t.status == "certified");
    CHECK(t.defect_sq > 0);
    CHECK(t.defect_sq <= t.bound);
}

TEST_CASE("gap lemma outcomes when the hypotheses are weak or wrong", "[gap]") {
    Vec d(4);
    d << 1.0, 1.0, 1.5, 1.5;
    Mat L = d.asDiagonal();
    Mat V = Mat::Identity(4, 2);
    CHECK(gap_lemma_check(L, V, 1.0, 2.25).status == "bound inconclusive");
    CHECK(gap_lemma_check(L, V, 0.5, 2.25).status.rfind("hypotheses fail", 0) == 0);
    CHECK(gap_lemma_check(L, V, 1.0, 3.0).status.rfind("hypotheses fail", 0) == 0);
    CHECK_THROWS_AS(gap_lemma_check(L, 2 * V, 1.0, 3.0), InputError);
    CHECK_THROWS_AS(gap_lemma_check(L, Mat::Identity(4, 4), 1.0, 3.0), InputError);
}

TEST_CASE("random gap instances are certified", "[gap][property]") {
    Rng rng(5);
    for (int i = 0; i < 10; ++i) {
        GapInstance inst = random_gap_instance(rng, 60);
        GapLemmaReport r = gap_lemma_check(inst.L, inst.V, inst.C1, inst.C2);
        CHECK(r.status == "certified");
        CHECK(r.defect_sq <= r.bound);
    }
}

TEST_CASE("est1 slope needs three ascending values", "[est1]") {
    CHECK_THROWS_AS(est1_check({8, 16}, {1, 0.7}), InputError);
    CHECK_THROWS_AS(est1_check({8, 32, 16}, {1, 0.7, 0.5}), InputError);
    CHECK_THROWS_AS(est1_check({8, 16, 32}, {1, 0.7}), InputError);
    CHECK(est1_check({4, 16, 64}, {1, 0.5, 0.25}) == Approx(-0.5));
}

TEST_CASE("cutoff", "[est1]") {
    CHECK(bump(0.3, 0.5) == 1.0);
    CHECK(bump(1.2, 0.5) == 0.0);
    CHECK(bump(0.75, 0.5) == Approx(0.5));
    double prev = 1;
    for (double r = 0; r < 1.1; r += 0.01) {
        CHECK(bump(r, 0.5) <= prev + 1e-15);
        prev = bump(r, 0.5);
    }
}

TEST_CASE("cos x: constant rate means nothing to balance", "[est1]") {
    TorusGrid g({1024, 32});
    ScalarFunction f = ScalarFunction::lookup("cos_x");
    CriticalReport cr = find_critical_set(g, f);
    size_t which = cr.components.size();
    for (size_t i = 0; i < cr.components.size(); ++i)
        if (cr.components[i].morse_index == 0) which = i;
    REQUIRE(which < cr.components.size());
    WittenFamily fam(g, f);
    const double eps = 0.8;
    ApproxOptions off;
    off.corrected = false;
    std::vector<double> S{16, 32, 64}, res;
    for (double s : S) {
        auto a = build_approx_eigensection(g, f, cr, which, s, eps);
        auto b = build_approx_eigensection(g, f, cr, which, s, eps, off);
        CHECK(a.balance_rhs <= 1e-9);
        CHECK(a.xi1_ratio == 0.0);
        double ra = section_residual(fam, s, a.eta), rb = section_residual(fam, s, b.eta);
        CHECK(ra == Approx(rb).epsilon(1e-6));
        res.push_back(ra);
    }
    // what remains is the cubic Taylor remainder s (sin r - r) phi, about 0.23 / sqrt(s)
    CHECK(est1_check(S, res) <= -0.45);
    CHECK(res.back() == Approx(0.23 / 8).epsilon(0.3));
    CHECK_THROWS_AS(build_approx_eigensection(g, f, cr, which, 64, 2.0), InputError);
}

TEST_CASE("induced operator on the bott_mixed circle", "[induced]") {
    TorusGrid g({64, 64});
    ScalarFunction f = ScalarFunction::lookup("bott_mixed");
    CriticalReport cr = find_critical_set(g, f);
    InducedCircle ic = build_induced_circle(g, f, cr.components[0]);
    CHECK_FALSE(ic.normalized);  // one normal rate per point, so compatibility holds
    CHECK(ic.ker_dim == 1);
    CHECK(ic.coker_dim == 1);
    CHECK(ic.kernel.size() == 64);
    CHECK(std::sqrt(ic.kernel.squaredNorm() / 64) == Approx(1.0));
    CHECK(ic.lambda_mid.size() == 64);
    // the rate 2 + sin y is recovered at the nodes
    for (int i = 0; i < ic.Nz; i += 8) CHECK(ic.lambda[i] == Approx(2 + std::sin(ic.z(i))).epsilon(1e-6));
}

TEST_CASE("component counts from the local model", "[index]") {
    TorusGrid g({32, 32});
    ScalarFunction f = ScalarFunction::lookup("cos_x_plus_cos_y");
    CriticalReport cr = find_critical_set(g, f);
    int n0 = 0, n1 = 0;
    for (const auto& c : cr.components) {
        ComponentCount cc = component_count(g, f, c);
        CHECK(cc.n0 == (c.morse_index % 2 ? 0 : 1));
        CHECK(cc.n1 == (c.morse_index % 2 ? 1 : 0));
        n0 += cc.n0;
        n1 += cc.n1;
    }
    CHECK(n0 == 2);
    CHECK(n1 == 2);
}

TEST_CASE("index experiment on a small grid", "[index]") {
    TorusGrid g({32, 32});
    SolverOptions o;
    IndexExperiment ie = index_experiment(g, ScalarFunction::lookup("cos_x_plus_cos_y"), 16, 6, o);
    CHECK(ie.spectrum.N0() == 2);
    CHECK(ie.spectrum.N1() == 2);
    CHECK(ie.match);
    CHECK(ie.counts_match);
}

TEST_CASE("concentration profile on synthetic fields", "[concentration]") {
    TorusGrid g({64, 64});
    CriticalReport cr = find_critical_set(g, ScalarFunction::lookup("cos_x_plus_cos_y"));
    Vec uniform = Vec::Ones(g.half() * g.points());
    auto prof = concentration_profile(even_field(g, uniform), cr, {0.5});
    // four discs of radius 0.5 on a (2 pi)^2 torus
    double inside = 4 * M_PI * 0.25 / (4 * M_PI * M_PI);
    CHECK(prof[0].second == Approx(1 - inside).margin(0.02));
    Vec spike = Vec::Zero(g.half() * g.points());
    spike(0) = 1;  // the 0-form at (0, 0), a critical point
    CHECK(concentration_profile(even_field(g, spike), cr, {0.1})[0].second == 0.0);
    CHECK_THROWS_AS(concentration_profile(even_field(g, Vec::Zero(uniform.size())), cr, {0.5}), InputError);
}

TEST_CASE("spectral flow input checks", "[flow]") {
    TorusGrid g({16, 16});
    ScalarFunction f = ScalarFunction::lookup("cos_x_plus_cos_y");
    SolverOptions o;
    CHECK_THROWS_AS(spectral_flow(g, f, {}, 4, o), InputError);
    CHECK_THROWS_AS(spectral_flow(g, f, {8, 4}, 4, o), InputError);
    CHECK_THROWS_AS(spectral_flow(g, f, {-1}, 4, o), InputError);
}

TEST_CASE("small s without a gap is inconclusive, not failed", "[flow]") {
    TorusGrid g({32, 32});
    SolverOptions o;
    o.min_ratio = 1e30;  // no split can qualify
    SpectralFlow sf = spectral_flow(g, ScalarFunction::lookup("cos_x_plus_cos_y"), {2, 16}, 6, o, 8.0);
    CHECK(sf.status[0] == "inconclusive");
    CHECK(sf.status[1] == "failed");
    CHECK(sf.verdict == "failed");
}
