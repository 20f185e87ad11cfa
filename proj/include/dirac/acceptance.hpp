#ifndef DIRAC_ACCEPTANCE_HPP
#define DIRAC_ACCEPTANCE_HPP

#include <chrono>
#include <functional>
#include <sstream>

#include "lab.hpp"

namespace dirac::acceptance {

struct Result {
    int id = 0;
    std::string name;
    bool passed = false;
    std::string detail;
    Json measured;
    double seconds = 0;
    double budget = 0;

    Json to_json() const {
        return {{"id", id}, {"name", name}, {"passed", passed}, {"detail", detail}, {"measured", measured},
                {"seconds", seconds}, {"budget_seconds", budget}};
    }
};

namespace detail {

inline std::string fmt(double v) {
    std::ostringstream o;
    o.precision(4);
    o << v;
    return o.str();
}

/** Runs body, stamps the runtime and folds the time budget into the verdict. */
inline Result timed(int id, const std::string& name, double budget, const std::function<void(Result&)>& body) {
    Result r;
    r.id = id;
    r.name = name;
    r.budget = budget;
    auto t0 = std::chrono::steady_clock::now();
    try {
        body(r);
    } catch (const std::exception& e) {
        r.passed = false;
        r.detail = std::string("error: ") + e.what();
    }
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (r.seconds > budget) {
        r.passed = false;
        r.detail += " (over time budget " + fmt(budget) + " s)";
    }
    return r;
}

inline SolverOptions default_solver() {
    SolverOptions o;
    o.tol = 1e-10;
    o.max_iter = 5000;
    o.seed = 1;
    return o;
}

}  // namespace detail

/** C-ladder for Witten point jets of every Morse index in dimensions 2 and 3. */
inline Result clifford_ladder() {
    return detail::timed(1, "clifford_ladder", 1.0, [](Result& r) {
        bool ok = true;
        Json rows = Json::array();
        for (int n : {2, 3})
            for (int q = 0; q <= n; ++q)
                for (double lam : {1.0, 2.5}) {
                    std::vector<int> eta(n, 1);
                    for (int a = 0; a < q; ++a) eta[a] = -1;
                    StructureReport R = analyze_jet(witten_quadratic_jet(n, eta, std::vector<double>(n, lam)));
                    bool row_ok = R.ladder_consistent && R.s0plus_dim() + R.s1plus_dim() == 1;
                    for (const auto& e : R.ladder) {
                        double rounded = std::round(e.eigenvalue / lam * 1e8) / 1e8;
                        row_ok = row_ok && rounded == n - 2 * e.k && e.mult0 + e.mult1 == e.expected;
                    }
                    ok = ok && row_ok;
                    rows.push_back({{"n", n}, {"q", q}, {"lambda", lam}, {"ok", row_ok}, {"ladder", R.to_json()["ladder"]}});
                }
        r.passed = ok;
        r.measured = rows;
        r.detail = ok ? "ladder {(n-2k) lambda} with multiplicities binom(n,k) in all 14 jets" : "ladder mismatch";
    });
}

/** Five lowest eigenvalues of the vertical operator against 2 s lambda (|a| + k). */
inline Result oscillator_spectrum_check() {
    return detail::timed(2, "oscillator_spectrum", 30.0, [](Result& r) {
        StructureReport R = analyze_jet(witten_quadratic_jet(1, {1}, {1.0}));
        bool ok = true;
        Json rows = Json::array();
        std::string worst;
        for (double s : {4.0, 16.0, 64.0}) {
            FiberGrid g(1, 512, 8.0 / std::sqrt(s));
            SpMat D = assemble_vertical(R, g, s);
            EigenRequest req;
            req.op = normal_operator(D);
            req.k = 5;
            req.seed = 1;
            EigenResult e = lowest_eigenpairs(req);
            auto exact = oscillator_eigenvalues(R, s, 5);
            double worst_rel = 0;
            bool row_ok = e.all_converged();
            for (int i = 0; i < 5; ++i) {
                double err = exact[i] == 0.0 ? std::abs(e.values(i)) / (1e-3 * 2 * s) : std::abs(e.values(i) - exact[i]) / (0.01 * exact[i]);
                worst_rel = std::max(worst_rel, err);
                row_ok = row_ok && err <= 1.0;
            }
            ok = ok && row_ok;
            rows.push_back({{"s", s}, {"computed", e.value_list()}, {"analytic", exact}, {"worst_error_over_tolerance", worst_rel}});
            worst += " s=" + detail::fmt(s) + ":" + detail::fmt(worst_rel);
        }
        r.passed = ok;
        r.measured = rows;
        r.detail = "worst error / tolerance" + worst;
    });
}

/** Weitzenbock residual ratio under fiber refinement. */
inline Result weitzenbock_ratio() {
    return detail::timed(3, "weitzenbock_ratio", 60.0, [](Result& r) {
        const double s = 4.0, L = 4.0;
        bool ok = true;
        Json rows = Json::array();
        std::string det;
        for (int c : {1, 2}) {
            StructureReport R = analyze_jet(witten_quadratic_jet(c, std::vector<int>(c, 1), std::vector<double>(c, 1.0)));
            int coarse = c == 1 ? 256 : 64;
            double a = weitzenbock_residual(R, FiberGrid(c, coarse, L), s);
            double b = weitzenbock_residual(R, FiberGrid(c, 2 * coarse, L), s);
            double ratio = a / b;
            bool row_ok = ratio >= 1.7 && ratio <= 2.3;
            ok = ok && row_ok;
            rows.push_back({{"codim", c}, {"Nf", {coarse, 2 * coarse}}, {"residuals", {a, b}}, {"ratio", ratio}});
            det += " codim " + std::to_string(c) + ": ratio " + detail::fmt(ratio);
        }
        r.passed = ok;
        r.measured = rows;
        r.detail = "window [1.7, 2.3];" + det;
    });
}

/** Witten spectrum of cos(theta) on the circle. */
inline Result circle_witten() {
    return detail::timed(4, "circle_witten", 10.0, [](Result& r) {
        const double s = 32;
        TorusGrid g({256});
        IndexExperiment ie = index_experiment(g, ScalarFunction::lookup("cos_theta"), s, 4, detail::default_solver());
        const Vec& ev = ie.spectrum.even.eig.values;
        bool ok = ev(0) <= 1e-6 * 2 * s && ev(1) >= 1.8 * s && ie.spectrum.N0() == 1 && ie.spectrum.N1() == 1 &&
                  ie.index_numeric == 0 && ie.match;
        r.passed = ok;
        r.measured = ie.to_json();
        r.detail = "lambda_min " + detail::fmt(ev(0)) + ", lambda_2 / s " + detail::fmt(ev(1) / s) + ", N0 " +
                   std::to_string(ie.spectrum.N0()) + ", N1 " + std::to_string(ie.spectrum.N1()) + ", index " +
                   std::to_string(ie.index_numeric);
    });
}

/** Morse function cos x + cos y on T^2. */
inline Result torus_morse() {
    return detail::timed(5, "torus_morse", 300.0, [](Result& r) {
        TorusGrid g({64, 64});
        IndexExperiment ie = index_experiment(g, ScalarFunction::lookup("cos_x_plus_cos_y"), 32, 8, detail::default_solver());
        auto counts = ie.critical.point_counts();
        bool ok = ie.spectrum.N0() == 2 && ie.spectrum.N1() == 2 && ie.spectrum.gap_ratio() >= 10 && ie.index_numeric == 0 &&
                  ie.index_topological == 0 && counts == std::vector<int>{1, 2, 1};
        r.passed = ok;
        r.measured = ie.to_json();
        r.detail = "N0 " + std::to_string(ie.spectrum.N0()) + ", N1 " + std::to_string(ie.spectrum.N1()) + ", gap ratio " +
                   detail::fmt(ie.spectrum.gap_ratio()) + ", index " + std::to_string(ie.index_numeric) + " = " +
                   std::to_string(ie.index_topological) + ", counts (" + std::to_string(counts[0]) + "," +
                   std::to_string(counts[1]) + "," + std::to_string(counts[2]) + ")";
    });
}

/** Morse-Bott function cos x on T^2: low clusters against the induced circle kernels. */
inline Result torus_morse_bott() {
    return detail::timed(6, "torus_morse_bott", 300.0, [](Result& r) {
        TorusGrid g({64, 64});
        IndexExperiment ie = index_experiment(g, ScalarFunction::lookup("cos_x"), 32, 8, detail::default_solver());
        bool ok = ie.spectrum.N0() == 2 && ie.spectrum.N1() == 2 && ie.counts_match && ie.index_numeric == 0 && ie.match;
        r.passed = ok;
        r.measured = ie.to_json();
        r.detail = "N0 " + std::to_string(ie.spectrum.N0()) + ", N1 " + std::to_string(ie.spectrum.N1()) +
                   ", induced kernels " + std::to_string(ie.predicted_n0) + "/" + std::to_string(ie.predicted_n1) +
                   ", index " + std::to_string(ie.index_numeric);
    });
}

/** Outside mass of the lowest even eigenvector of cos x + cos y at delta = 0.5. */
inline Result concentration() {
    return detail::timed(7, "concentration", 600.0, [](Result& r) {
        TorusGrid g({256, 256});
        ScalarFunction f = ScalarFunction::lookup("cos_x_plus_cos_y");
        CriticalReport cr = find_critical_set(g, f);
        WittenFamily fam(g, f);
        std::vector<double> S{16, 32, 64}, mass, logm;
        SolverOptions o = detail::default_solver();
        o.tol = 1e-9;
        Json rows = Json::array();
        for (double s : S) {
            DiracOperator D = fam.at(s);
            SideSpectrum side = solve_side(normal_operator(D.Ds), 3, o);
            FormField v = even_field(g, side.eig.vectors.col(0));
            double m = concentration_profile(v, cr, {0.5})[0].second;
            mass.push_back(m);
            logm.push_back(std::log(m));
            rows.push_back({{"s", s}, {"outside_mass", m}, {"log_mass", std::log(m)}, {"eigenvalues", side.eig.value_list()},
                            {"converged", side.eig.all_converged()}});
        }
        double sl1 = (logm[1] - logm[0]) / (S[1] - S[0]), sl2 = (logm[2] - logm[1]) / (S[2] - S[1]);
        bool ok = mass[2] <= mass[0] / 4 && logm[1] < logm[0] && logm[2] < logm[1] && sl2 <= sl1 && mass[2] < 0.02;
        r.passed = ok;
        r.measured = {{"rows", rows}, {"slopes", {sl1, sl2}}};
        r.detail = "log mass " + detail::fmt(logm[0]) + ", " + detail::fmt(logm[1]) + ", " + detail::fmt(logm[2]) +
                   "; slopes " + detail::fmt(sl1) + ", " + detail::fmt(sl2);
    });
}

/** Residual decay of spliced approximate eigensections on the circle of the mixed function. */
inline Result est1_slope() {
    return detail::timed(8, "est1_slope", 600.0, [](Result& r) {
        TorusGrid g({4096, 128});
        ScalarFunction f = ScalarFunction::lookup("bott_mixed");
        CriticalReport cr = find_critical_set(g, f);
        size_t which = cr.components.size();
        for (size_t i = 0; i < cr.components.size(); ++i)
            if (cr.components[i].type == "circle") which = i;
        if (which == cr.components.size()) throw StructureError("no circle component found");
        WittenFamily fam(g, f);
        std::vector<double> S{8, 16, 32, 64}, corr, unc;
        Json rows = Json::array();
        bool below = true;
        for (double s : S) {
            ApproxOptions on, off;
            off.corrected = false;
            ApproxEigensection a = build_approx_eigensection(g, f, cr, which, s, 0.8, on);
            ApproxEigensection b = build_approx_eigensection(g, f, cr, which, s, 0.8, off);
            a.residual = section_residual(fam, s, a.eta);
            b.residual = section_residual(fam, s, b.eta);
            corr.push_back(a.residual);
            unc.push_back(b.residual);
            below = below && a.residual < b.residual;
            rows.push_back({{"s", s}, {"corrected", a.to_json()}, {"uncorrected", b.to_json()}});
        }
        double slope = est1_check(S, corr);
        r.passed = slope <= -0.45 && below;
        r.measured = {{"rows", rows}, {"slope", slope}, {"corrected", corr}, {"uncorrected", unc}};
        std::string c, u;
        for (size_t i = 0; i < S.size(); ++i) {
            c += (i ? ", " : "") + detail::fmt(corr[i]);
            u += (i ? ", " : "") + detail::fmt(unc[i]);
        }
        r.detail = "slope " + detail::fmt(slope) + "; corrected " + c + "; uncorrected " + u;
    });
}

/** Gap lemma on 50 seeded random instances. */
inline Result gap_lemma() {
    return detail::timed(9, "gap_lemma", 5.0, [](Result& r) {
        Rng rng(2024);
        int good = 0;
        double worst = 0;
        for (int i = 0; i < 50; ++i) {
            GapInstance inst = random_gap_instance(rng, 100);
            GapLemmaReport rep = gap_lemma_check(inst.L, inst.V, inst.C1, inst.C2);
            if (rep.status == "certified") ++good;
            worst = std::max(worst, rep.defect_sq / rep.bound);
        }
        r.passed = good == 50;
        r.measured = {{"certified", good}, {"instances", 50}, {"worst_defect_over_bound", worst}};
        r.detail = std::to_string(good) + "/50 certified, worst |1-P|^2 / (4 C1/C2) = " + detail::fmt(worst);
    });
}

/** LOBPCG against the dense oracle on the operators of the oscillator and circle checks. */
inline Result solver_oracle() {
    return detail::timed(10, "solver_oracle", 60.0, [](Result& r) {
        std::vector<std::pair<std::string, LinearOperator>> ops;
        StructureReport R = analyze_jet(witten_quadratic_jet(1, {1}, {1.0}));
        for (double s : {4.0, 16.0, 64.0}) {
            FiberGrid g(1, 512, 8.0 / std::sqrt(s));
            ops.emplace_back("fiber s=" + detail::fmt(s), normal_operator(assemble_vertical(R, g, s)));
        }
        DiracOperator D = assemble_Ds(TorusGrid({256}), ScalarFunction::lookup("cos_theta"), 32);
        ops.emplace_back("circle even", normal_operator(D.Ds));
        ops.emplace_back("circle odd", conormal_operator(D.Ds));
        bool ok = true;
        double worst = 0;
        Json rows = Json::array();
        for (auto& [name, op] : ops) {
            EigenRequest req;
            req.op = op;
            req.k = 6;
            req.seed = 3;
            EigenResult a = lowest_eigenpairs(req);
            req.method = EigenMethod::DenseOracle;
            EigenResult b = lowest_eigenpairs(req);
            double scale = std::abs(b.values(req.k - 1));
            double err = 0;
            for (int i = 0; i < req.k; ++i)
                err = std::max(err, std::abs(a.values(i) - b.values(i)) / std::max(std::abs(b.values(i)), scale));
            worst = std::max(worst, err);
            ok = ok && err <= 1e-7;
            rows.push_back({{"operator", name}, {"dim", op.dim}, {"lobpcg", a.value_list()}, {"dense", b.value_list()},
                            {"relative_error", err}});
        }
        r.passed = ok;
        r.measured = rows;
        r.detail = "worst relative eigenvalue difference " + detail::fmt(worst);
    });
}

inline const std::vector<std::pair<std::string, std::function<Result()>>>& registry() {
    static const std::vector<std::pair<std::string, std::function<Result()>>> reg{
        {"clifford_ladder", clifford_ladder},     {"oscillator_spectrum", oscillator_spectrum_check},
        {"weitzenbock_ratio", weitzenbock_ratio}, {"circle_witten", circle_witten},
        {"torus_morse", torus_morse},             {"torus_morse_bott", torus_morse_bott},
        {"concentration", concentration},         {"est1_slope", est1_slope},
        {"gap_lemma", gap_lemma},                 {"solver_oracle", solver_oracle},
    };
    return reg;
}

inline std::string line(const Result& r) {
    return std::string(r.passed ? "PASS" : "FAIL") + " [" + std::to_string(r.id) + "] " + r.name + " (" +
           detail::fmt(r.seconds) + " s): " + r.detail;
}

}  // namespace dirac::acceptance

#endif
