#ifndef DIRAC_LAB_HPP
#define DIRAC_LAB_HPP

#include <Eigen/IterativeLinearSolvers>

#include "critical.hpp"
#include "eigensolve.hpp"
#include "fiber.hpp"

namespace dirac {

struct SolverOptions {
    EigenMethod method = EigenMethod::Lobpcg;
    double tol = 1e-10;
    int max_iter = 3000;
    std::uint64_t seed = 0;
    double min_ratio = 10.0;

    Json to_json() const {
        return {{"method", method_name(method)}, {"tol", tol}, {"max_iter", max_iter}, {"seed", seed}, {"min_ratio", min_ratio}};
    }
};

// ---------------------------------------------------------------------------------------
// Spectra of D_s^T D_s (even forms) and D_s D_s^T (odd forms)

struct SideSpectrum {
    EigenResult eig;
    std::optional<GapSplit> gap;
    int cluster() const { return gap ? gap->cluster_size : -1; }
    Json to_json() const {
        Json j = eig.to_json();
        j["cluster_size"] = cluster();
        j["gap_ratio"] = gap ? gap->ratio : 0.0;
        return j;
    }
};

struct WittenSpectrum {
    double s = 0;
    int k = 0;
    SideSpectrum even, odd;

    bool gap_found() const { return even.gap.has_value() && odd.gap.has_value(); }
    int N0() const { return even.cluster(); }
    int N1() const { return odd.cluster(); }
    double gap_ratio() const { return gap_found() ? std::min(even.gap->ratio, odd.gap->ratio) : 0.0; }
    Json to_json() const {
        return {{"s", s}, {"k", k}, {"even", even.to_json()}, {"odd", odd.to_json()}, {"N0", N0()}, {"N1", N1()},
                {"gap_found", gap_found()}, {"gap_ratio", gap_ratio()}};
    }
};

inline SideSpectrum solve_side(LinearOperator op, int k, const SolverOptions& o) {
    EigenRequest req;
    req.op = std::move(op);
    req.k = k;
    req.tol = o.tol;
    req.max_iter = o.max_iter;
    req.seed = o.seed;
    req.method = o.method;
    SideSpectrum side;
    side.eig = lowest_eigenpairs(req);
    side.gap = gap_split(side.eig.value_list(), o.min_ratio);
    return side;
}

inline WittenSpectrum witten_spectrum(const DiracOperator& D, int k, const SolverOptions& o) {
    WittenSpectrum w;
    w.s = D.s;
    w.k = k;
    w.even = solve_side(normal_operator(D.Ds), k, o);
    w.odd = solve_side(conormal_operator(D.Ds), k, o);
    return w;
}

inline WittenSpectrum witten_spectrum(const TorusGrid& g, const ScalarFunction& f, double s, int k, const SolverOptions& o) {
    return witten_spectrum(assemble_Ds(g, f, s), k, o);
}

// ---------------------------------------------------------------------------------------
// Local structure along critical components

namespace detail {

inline void align_sign(Vec& v, const Vec& ref) {
    if (v.dot(ref) < 0) v = -v;
}

inline void canonical_sign(Vec& v) {
    Eigen::Index i;
    v.cwiseAbs().maxCoeff(&i);
    if (v(i) < 0) v = -v;
}

/**
 * Witten jet at x with the listed normal axes. When the normal rates differ the
 * compatibility condition fails; the counting data (S^{i+} and their dimensions) is
 * invariant under positive rescaling of the rates, so the jet is then rebuilt with
 * the normal Hessian replaced by its sign and `normalized` is set.
 */
inline StructureReport witten_report(const ScalarFunction& f, const std::array<double, 3>& x, int n,
                                     const std::vector<int>& normal_axes, bool& normalized) {
    CliffordModule m = build_witten_module(n);
    std::vector<Vec> normals;
    for (int a : normal_axes) normals.push_back(m.axis(a));
    Vec g = f.grad(x, n);
    Mat H = f.hess(x, n);
    auto third = f.third(x, n);
    normalized = false;
    try {
        return analyze_jet(witten_jet(m, g, H, third, normals));
    } catch (const StructureError&) {
        Mat Hn(normal_axes.size(), normal_axes.size());
        for (size_t a = 0; a < normal_axes.size(); ++a)
            for (size_t b = 0; b < normal_axes.size(); ++b) Hn(a, b) = H(normal_axes[a], normal_axes[b]);
        Eigen::SelfAdjointEigenSolver<Mat> es(Hn);
        Vec sg = es.eigenvalues().unaryExpr([](double v) { return v < 0 ? -1.0 : 1.0; });
        Mat Hs = es.eigenvectors() * sg.asDiagonal() * es.eigenvectors().transpose();
        Mat H2 = H;
        for (size_t a = 0; a < normal_axes.size(); ++a)
            for (size_t b = 0; b < normal_axes.size(); ++b) H2(normal_axes[a], normal_axes[b]) = Hs(a, b);
        normalized = true;
        return analyze_jet(witten_jet(m, g, H2, {}, normals));
    }
}

inline std::vector<int> normal_axes_of(const TorusGrid& g, const CriticalComponent& c) {
    std::vector<int> ax;
    for (int j = 0; j < g.n; ++j)
        if (!(c.type == "circle" && j == c.axis)) ax.push_back(j);
    return ax;
}

inline Vec single_column(const std::vector<Mat>& blocks, const char* what) {
    int cols = 0;
    for (const auto& b : blocks) cols += static_cast<int>(b.cols());
    if (cols != 1) throw StructureError(std::string("expected a line bundle for ") + what + ", got rank " + std::to_string(cols));
    for (const auto& b : blocks)
        if (b.cols() == 1) return b.col(0);
    return {};
}

}  // namespace detail

/**
 * Discrete induced operator on a critical circle: sections xi of S^{0+} at the nodes
 * z_i, image in S^{1+} at the midpoints,
 *   (D xi)_{i+1/2} = e1^T c(dt) (e0_{i+1} xi_{i+1} - e0_i xi_i) / h + b avg(xi),
 * with b = e1^T (sum_a Abar_aa) e0 / (4 lambda) the second-jet correction. The frames
 * e0, e1 are sign-aligned along the walk around the circle.
 */
struct InducedCircle {
    int axis = 0;
    int Nz = 0;
    double h = 0;
    std::vector<double> lambda, dlambda, lambda_mid, b_mid;
    std::vector<Vec> e0, e1, e0_mid, e1_mid;
    std::vector<StructureReport> reports;  // at the nodes
    bool b_term = true;
    bool normalized = false;
    Mat op;
    Vec sigma;       // singular values, ascending
    int ker_dim = 0, coker_dim = 0;
    Vec kernel;      // smallest right singular vector, RMS 1, positive mean

    double z(int i) const { return i * h; }
    /** Periodic linear interpolation of node data. */
    template <class T>
    T interp(const std::vector<T>& data, double zz) const {
        double u = zz / h;
        double fl = std::floor(u);
        double w = u - fl;
        int i = static_cast<int>(((static_cast<long>(fl) % Nz) + Nz) % Nz);
        int j = (i + 1) % Nz;
        return (1 - w) * data[i] + w * data[j];
    }
    double xi_bar(double zz) const {
        double u = zz / h;
        double fl = std::floor(u);
        int i = static_cast<int>(((static_cast<long>(fl) % Nz) + Nz) % Nz);
        return (1 - (u - fl)) * kernel(i) + (u - fl) * kernel((i + 1) % Nz);
    }
    Json to_json() const {
        double lmin = *std::min_element(lambda.begin(), lambda.end());
        double lmax = *std::max_element(lambda.begin(), lambda.end());
        std::vector<double> sv(sigma.data(), sigma.data() + std::min<Eigen::Index>(sigma.size(), 6));
        return {{"nodes", Nz}, {"kernel_dim", ker_dim}, {"cokernel_dim", coker_dim}, {"b_term", b_term},
                {"rates_normalized", normalized}, {"lambda_min", lmin}, {"lambda_max", lmax},
                {"smallest_singular_values", sv}};
    }
};

inline InducedCircle build_induced_circle(const TorusGrid& g, const ScalarFunction& f, const CriticalComponent& c,
                                          bool with_b = true) {
    if (c.type != "circle") throw InputError("build_induced_circle: component is not a circle");
    InducedCircle ic;
    ic.axis = c.axis;
    ic.Nz = g.sizes[c.axis];
    ic.h = g.h(c.axis);
    const int n = g.n, t = c.axis;
    auto normals = detail::normal_axes_of(g, c);
    CliffordModule m = build_witten_module(n);
    Mat ct = m.c10(m.axis(t));

    auto probe = [&](double z, double& lam, double& dlam, Vec& e0, Vec& e1) {
        std::array<double, 3> x = c.location;
        x[t] = z;
        x = detail::newton_polish(f, n, x, normals);
        bool norm = false;
        StructureReport R = detail::witten_report(f, x, n, normals, norm);
        ic.normalized = ic.normalized || norm;
        e0 = detail::single_column(R.S0plus, "S0+");
        e1 = detail::single_column(R.S1plus, "S1+");
        Vec ev = detail::normal_eigenvalues(f, x, n, normals);
        lam = ev.cwiseAbs().mean();
        // d lambda / dt from the third jet (codim 1: lambda = |f_rr|)
        dlam = 0.0;
        if (normals.size() == 1) {
            auto third = f.third(x, n);
            dlam = (f.hess(x, n)(normals[0], normals[0]) < 0 ? -1.0 : 1.0) * third[t](normals[0], normals[0]);
        }
        return R;
    };

    ic.lambda.resize(ic.Nz);
    ic.dlambda.resize(ic.Nz);
    ic.lambda_mid.resize(ic.Nz);
    ic.b_mid.assign(ic.Nz, 0.0);
    ic.e0.resize(ic.Nz);
    ic.e1.resize(ic.Nz);
    ic.e0_mid.resize(ic.Nz);
    ic.e1_mid.resize(ic.Nz);
    ic.reports.reserve(ic.Nz);
    std::vector<StructureReport> mid;
    mid.reserve(ic.Nz);
    for (int i = 0; i < ic.Nz; ++i) {
        double dl;
        ic.reports.push_back(probe(ic.z(i), ic.lambda[i], ic.dlambda[i], ic.e0[i], ic.e1[i]));
        if (i == 0) {
            detail::canonical_sign(ic.e0[0]);
            detail::canonical_sign(ic.e1[0]);
        } else {
            detail::align_sign(ic.e0[i], ic.e0_mid[i - 1]);
            detail::align_sign(ic.e1[i], ic.e1_mid[i - 1]);
        }
        mid.push_back(probe(ic.z(i) + 0.5 * ic.h, ic.lambda_mid[i], dl, ic.e0_mid[i], ic.e1_mid[i]));
        detail::align_sign(ic.e0_mid[i], ic.e0[i]);
        detail::align_sign(ic.e1_mid[i], ic.e1[i]);
    }
    if (ic.e0_mid.back().dot(ic.e0[0]) < 0 || ic.e1_mid.back().dot(ic.e1[0]) < 0)
        throw StructureError("build_induced_circle: S^{i+} is not orientable along the circle");
    ic.b_term = with_b && !ic.normalized;
    if (ic.b_term)
        for (int i = 0; i < ic.Nz; ++i) {
            const StructureReport& R = mid[i];
            Mat Asum = Mat::Zero(m.dim1(), m.dim0());
            for (int a = 0; a < R.codim(); ++a) Asum += R.jet.A2[a][a];
            ic.b_mid[i] = ic.e1_mid[i].dot(Asum * ic.e0_mid[i]) / (4.0 * R.lambdas[0]);
        }

    ic.op = Mat::Zero(ic.Nz, ic.Nz);
    for (int i = 0; i < ic.Nz; ++i) {
        int j = (i + 1) % ic.Nz;
        double bb = ic.b_term ? ic.b_mid[i] : 0.0;
        ic.op(i, i) += -ic.e1_mid[i].dot(ct * ic.e0[i]) / ic.h + 0.5 * bb;
        ic.op(i, j) += ic.e1_mid[i].dot(ct * ic.e0[j]) / ic.h + 0.5 * bb;
    }
    Eigen::BDCSVD<Mat> svd(ic.op, Eigen::ComputeFullV);
    ic.sigma = svd.singularValues().reverse();
    std::vector<double> sq(ic.sigma.size());
    for (Eigen::Index i = 0; i < ic.sigma.size(); ++i) sq[i] = ic.sigma(i) * ic.sigma(i);
    // a discrete twisted kernel is only O(h^2)-small, so demand a wide gap
    auto split = gap_split(sq, 100.0);
    ic.ker_dim = split ? split->cluster_size : 0;
    ic.coker_dim = ic.ker_dim;  // square operator
    ic.kernel = svd.matrixV().col(ic.Nz - 1);
    ic.kernel *= std::sqrt(static_cast<double>(ic.Nz)) / ic.kernel.norm();
    if (ic.kernel.sum() < 0) ic.kernel = -ic.kernel;
    return ic;
}

/** Kernel counts (even, odd) contributed by one component: S^{i+} ranks for points, induced kernels for circles. */
struct ComponentCount {
    int n0 = 0, n1 = 0;
    std::string source;
    Json detail;
};

inline ComponentCount component_count(const TorusGrid& g, const ScalarFunction& f, const CriticalComponent& c) {
    ComponentCount cc;
    if (c.type == "point") {
        bool norm = false;
        std::vector<int> ax;
        for (int j = 0; j < g.n; ++j) ax.push_back(j);
        StructureReport R = detail::witten_report(f, c.location, g.n, ax, norm);
        cc.n0 = R.s0plus_dim();
        cc.n1 = R.s1plus_dim();
        cc.source = "point S+ ranks";
        cc.detail = {{"rates_normalized", norm}, {"ladder_consistent", R.ladder_consistent}};
    } else {
        InducedCircle ic = build_induced_circle(g, f, c);
        cc.n0 = ic.ker_dim;
        cc.n1 = ic.coker_dim;
        cc.source = "induced circle operator";
        cc.detail = ic.to_json();
    }
    return cc;
}

// ---------------------------------------------------------------------------------------
// Concentration

/** Fraction of |v|^2 at staggered positions farther than delta (wrapped) from every component. */
inline std::vector<std::pair<double, double>> concentration_profile(const FormField& v, const CriticalReport& cr,
                                                                    const std::vector<double>& deltas) {
    const auto& g = v.grid;
    double total = v.data.squaredNorm();
    if (!(total > 0)) throw InputError("concentration_profile: zero field");
    std::vector<double> outside(deltas.size(), 0.0);
    for (unsigned mask : g.masks()) {
        auto comp = v.component(mask);
        for (Eigen::Index p = 0; p < g.points(); ++p) {
            double val = comp(p) * comp(p);
            if (val == 0.0) continue;
            auto x = g.position(p, mask);
            double dmin = std::numeric_limits<double>::infinity();
            for (const auto& c : cr.components) dmin = std::min(dmin, distance_to(g, c, x));
            for (size_t i = 0; i < deltas.size(); ++i)
                if (dmin > deltas[i]) outside[i] += val;
        }
    }
    std::vector<std::pair<double, double>> out;
    for (size_t i = 0; i < deltas.size(); ++i) out.emplace_back(deltas[i], outside[i] / total);
    return out;
}

inline FormField even_field(const TorusGrid& g, const Vec& even) {
    FormField F(g);
    F.even() = even;
    return F;
}

// ---------------------------------------------------------------------------------------
// Spectral flow and index

struct SpectralFlow {
    std::vector<WittenSpectrum> rows;  // sorted by s
    std::vector<std::string> status;   // per row: ok | inconclusive | failed
    double above_gap_slope = 0;        // log-log slope of the first even eigenvalue above the gap
    bool counts_stable = false;
    std::string verdict;               // ok | inconclusive | failed

    Json to_json() const {
        Json r = Json::array();
        for (size_t i = 0; i < rows.size(); ++i) {
            Json j = rows[i].to_json();
            j["status"] = status[i];
            const auto& ev = rows[i].even;
            if (ev.gap && ev.gap->cluster_size < ev.eig.values.size()) {
                double above = ev.eig.values(ev.gap->cluster_size);
                j["cluster_max_over_first_above"] = ev.eig.values(ev.gap->cluster_size - 1) / above;
                j["first_above_gap"] = above;
            }
            r.push_back(j);
        }
        return {{"rows", r}, {"above_gap_slope", above_gap_slope}, {"counts_stable", counts_stable}, {"verdict", verdict}};
    }
};

/** Spectra over s_list (independent values in parallel); a missing gap below s_threshold is inconclusive. */
inline SpectralFlow spectral_flow(const TorusGrid& g, const ScalarFunction& f, std::vector<double> s_list, int k,
                                  const SolverOptions& o, double s_threshold = 8.0) {
    if (s_list.empty()) throw InputError("spectral_flow: empty s list");
    for (size_t i = 0; i < s_list.size(); ++i) {
        if (!(s_list[i] > 0)) throw InputError("spectral_flow: s values must be positive");
        if (i && !(s_list[i] > s_list[i - 1])) throw InputError("spectral_flow: s list must be ascending");
    }
    WittenFamily fam(g, f);
    SpectralFlow sf;
    sf.rows.resize(s_list.size());
    parallel_for(static_cast<int>(s_list.size()), [&](int i) { sf.rows[i] = witten_spectrum(fam.at(s_list[i]), k, o); });
    bool any_fail = false, any_inc = false;
    std::vector<double> xs, ys;
    for (const auto& r : sf.rows) {
        std::string st = "ok";
        if (!r.gap_found()) {
            st = r.s < s_threshold ? "inconclusive" : "failed";
        } else if (r.even.gap->cluster_size < r.even.eig.values.size()) {
            xs.push_back(r.s);
            ys.push_back(r.even.eig.values(r.even.gap->cluster_size));
        }
        any_fail |= st == "failed";
        any_inc |= st == "inconclusive";
        sf.status.push_back(st);
    }
    if (xs.size() >= 2) sf.above_gap_slope = loglog_slope(xs, ys);
    size_t half = sf.rows.size() / 2;
    sf.counts_stable = true;
    for (size_t i = half; i < sf.rows.size(); ++i)
        if (sf.rows[i].N0() != sf.rows[half].N0() || sf.rows[i].N1() != sf.rows[half].N1()) sf.counts_stable = false;
    bool slope_ok = xs.size() < 2 || sf.above_gap_slope >= 0.8;
    sf.verdict = any_fail || !sf.counts_stable || !slope_ok ? "failed" : any_inc ? "inconclusive" : "ok";
    return sf;
}

struct IndexExperiment {
    CriticalReport critical;
    std::vector<ComponentCount> counts;
    WittenSpectrum spectrum;
    int predicted_n0 = 0, predicted_n1 = 0;
    int index_numeric = 0, index_topological = 0;
    bool match = false, counts_match = false;

    Json to_json() const {
        Json comps = Json::array();
        for (size_t i = 0; i < counts.size(); ++i) {
            Json c = critical.components[i].to_json();
            c["kernel_even"] = counts[i].n0;
            c["kernel_odd"] = counts[i].n1;
            c["count_source"] = counts[i].source;
            c["count_detail"] = counts[i].detail;
            comps.push_back(c);
        }
        return {{"components", comps},
                {"point_counts_by_index", critical.point_counts()},
                {"spectrum", spectrum.to_json()},
                {"predicted_N0", predicted_n0},
                {"predicted_N1", predicted_n1},
                {"index_numeric", index_numeric},
                {"index_topological", index_topological},
                {"match", match},
                {"counts_match", counts_match}};
    }
};

/** Index N0 - N1 from the low clusters against sum (-1)^q chi, plus the per-component kernel counts. */
inline IndexExperiment index_experiment(const TorusGrid& g, const ScalarFunction& f, double s, int k, const SolverOptions& o) {
    IndexExperiment ie;
    ie.critical = find_critical_set(g, f);
    for (const auto& c : ie.critical.components) {
        ie.counts.push_back(component_count(g, f, c));
        ie.predicted_n0 += ie.counts.back().n0;
        ie.predicted_n1 += ie.counts.back().n1;
    }
    ie.spectrum = witten_spectrum(g, f, s, k, o);
    if (!ie.spectrum.gap_found()) throw StructureError("index_experiment: no spectral gap at s = " + std::to_string(s));
    ie.index_numeric = ie.spectrum.N0() - ie.spectrum.N1();
    ie.index_topological = ie.critical.index_sum();
    ie.match = ie.index_numeric == ie.index_topological;
    ie.counts_match = ie.spectrum.N0() == ie.predicted_n0 && ie.spectrum.N1() == ie.predicted_n1;
    return ie;
}

// ---------------------------------------------------------------------------------------
// Approximate eigensections

/** Quintic cutoff: 1 on [0, eps], 0 beyond 2 eps, C^2 in between. */
inline double bump(double r, double eps) {
    double t = std::clamp((std::abs(r) - eps) / eps, 0.0, 1.0);
    return 1.0 - t * t * t * (10.0 - 15.0 * t + 6.0 * t * t);
}

/**
 * Minimum-norm least-squares solution of D u = -rhs on one fiber. Starting CG on the
 * normal equations from zero keeps u in range(D^T), i.e. orthogonal to ker D.
 */
inline Vec balance_fiber(const SpMat& D, const Vec& rhs, double tol = 1e-12, int max_iter = 20000) {
    Eigen::LeastSquaresConjugateGradient<SpMat> lscg;
    lscg.setTolerance(tol);
    lscg.setMaxIterations(max_iter);
    lscg.compute(D);
    Vec u = lscg.solve(Vec(-rhs));
    return u;
}

struct ApproxOptions {
    bool corrected = true;
    int fiber_refine = 2;  // fiber spacing = torus normal spacing / fiber_refine
};

struct ApproxEigensection {
    CriticalComponent component;
    double s = 0, eps = 0;
    bool corrected = true;
    Vec xi_bar;          // at the circle nodes (length 1 for a point)
    Vec xi0, xi1, xi2;   // even-form fields on the torus, uncut
    Vec eta;             // rho_eps (xi0 + xi1 + xi2)
    double balance_rhs = 0;   // max over the fibers of |P_s xi0| / |xi0|
    double xi1_ratio = 0, xi2_ratio = 0;
    double kernel_angle = 0;  // max |<xi1, phi>| / (|xi1| |phi|) over the fibers
    double condition = 0;     // estimate of sigma_max / sigma_min on (ker)^perp
    bool ill_conditioned = false;
    double residual = 0;      // |D_s eta| / |eta|

    Json to_json() const {
        return {{"component", component.to_json()}, {"s", s}, {"eps", eps}, {"corrected", corrected},
                {"balance_rhs", balance_rhs}, {"xi1_over_xi0", xi1_ratio}, {"xi2_over_xi0", xi2_ratio},
                {"xi1_kernel_angle", kernel_angle}, {"fiber_condition", condition},
                {"ill_conditioned", ill_conditioned}, {"residual", residual}};
    }
};

namespace detail {

/** Balancing right-hand side P_s xi0 at normal offset r for unit xi_bar, in E1 coordinates (codim 1). */
inline Vec balancing_term(const StructureReport& R, const Mat& ct, const Vec& e0, const Vec& e1, double lam,
                          double dlam, double s, double r, bool with_b) {
    const int c = R.codim();
    double sl = s * lam;
    double phi = std::pow(sl, c / 4.0) * std::exp(-0.5 * sl * r * r);
    Vec xi0 = phi * e0;
    // c_Z(d_Z ln phi) xi0
    Vec t1 = (dlam / lam) * (c / 4.0 - 0.5 * sl * r * r) * (ct * xi0);
    // P^1 (s r^2 Abar_rr / 2) xi0
    Mat P1 = R.S1 * R.S1.transpose();
    Vec t2 = 0.5 * s * r * r * (P1 * (R.jet.A2[0][0] * xi0));
    // - B^Z_{0+} xi0
    Vec t3 = Vec::Zero(e1.size());
    if (with_b) t3 = -e1 * (e1.dot(R.jet.A2[0][0] * e0) / (4.0 * lam)) * phi;
    return t1 + t2 + t3;
}

}  // namespace detail

/**
 * Spliced approximate eigensection on one component. Circles: xi_bar is the kernel of
 * the induced operator (with the second-jet term when corrected, constant when not);
 * xi1 solves the codim-1 fiber balancing equation; xi2 = -A0^+ (1 - P^1)(r^2 Abar_rr / 2) xi0.
 * Points: xi0 only, after checking that the balancing right-hand side vanishes.
 */
inline ApproxEigensection build_approx_eigensection(const TorusGrid& g, const ScalarFunction& f, const CriticalReport& cr,
                                                    size_t which, double s, double eps, const ApproxOptions& opt = {}) {
    if (which >= cr.components.size()) throw InputError("build_approx_eigensection: component index out of range");
    if (!(s > 0)) throw InputError("build_approx_eigensection: s must be positive");
    if (!(eps > 0) || !(eps < cr.injectivity_bound()))
        throw InputError("build_approx_eigensection: eps must be in (0, " + std::to_string(cr.injectivity_bound()) + ")");
    const CriticalComponent& c = cr.components[which];
    const int n = g.n;
    const Eigen::Index P = g.points();
    const int half = g.half();
    std::vector<unsigned> even_masks;
    for (unsigned m : g.masks())
        if (std::popcount(m) % 2 == 0) even_masks.push_back(m);

    ApproxEigensection A;
    A.component = c;
    A.s = s;
    A.eps = eps;
    A.corrected = opt.corrected;
    A.xi0 = Vec::Zero(half * P);
    A.xi1 = Vec::Zero(half * P);
    A.xi2 = Vec::Zero(half * P);
    CliffordModule mod = build_witten_module(n);

    if (c.type == "circle") {
        if (n != 2) throw InputError("build_approx_eigensection: circles are supported on T^2 (codim 1)");
        const int t = c.axis, nr = 1 - t;
        InducedCircle ic = build_induced_circle(g, f, c, opt.corrected);
        A.xi_bar = opt.corrected ? ic.kernel : Vec::Ones(ic.Nz);
        Mat ct = mod.c10(mod.axis(t));

        // balancing solves at the circle nodes (codim 1 fibers)
        std::vector<Vec> u_nodes(ic.Nz);  // E0 coordinates, Nf * dim0, node-major
        FiberGrid fg;
        bool any_fiber = false;
        if (opt.corrected) {
            double Lf = 2 * eps;
            int Nf = std::max(16, static_cast<int>(std::ceil(2 * Lf / (g.h(nr) / opt.fiber_refine))));
            fg = FiberGrid(1, Nf, Lf);
            for (int i = 0; i < ic.Nz; ++i) {
                const StructureReport& R = ic.reports[i];
                double lam = R.lambdas[0];
                double dlam = ic.dlambda[i];
                const int k = R.kernel_dim;
                Vec rhs(fg.edges() * k), rhs0(fg.nodes() * k), g0(fg.nodes() * k);
                for (Eigen::Index e = 0; e < fg.edges(); ++e) {
                    Vec term = detail::balancing_term(R, ct, ic.e0[i], ic.e1[i], lam, dlam, s, fg.edge_x(static_cast<int>(e)),
                                                      opt.corrected && ic.b_term);
                    rhs.segment(e * k, k) = R.S1.transpose() * term;
                }
                for (Eigen::Index p = 0; p < fg.nodes(); ++p) {
                    double r = fg.node_x(static_cast<int>(p));
                    g0.segment(p * k, k) = std::pow(s * lam, 0.25) * std::exp(-0.5 * s * lam * r * r) * (R.S0.transpose() * ic.e0[i]);
                }
                double ratio = rhs.norm() / g0.norm();
                A.balance_rhs = std::max(A.balance_rhs, ratio);
                u_nodes[i] = Vec::Zero(fg.nodes() * mod.dim0());
                if (ratio <= 1e-9) continue;  // right-hand side vanishes to roundoff
                any_fiber = true;
                SpMat D = assemble_vertical(R, fg, s);
                Vec u = balance_fiber(D, rhs);
                double un = u.norm();
                if (un > 0) A.kernel_angle = std::max(A.kernel_angle, std::abs(u.dot(g0)) / (un * g0.norm()));
                for (Eigen::Index p = 0; p < fg.nodes(); ++p) u_nodes[i].segment(p * mod.dim0(), mod.dim0()) = R.S0 * u.segment(p * k, k);
                if (A.condition == 0.0) {
                    double smax = std::sqrt(detail::estimate_norm(normal_operator(D), 1));
                    A.condition = smax / std::sqrt(2 * s * lam);
                    A.ill_conditioned = A.condition > 1e10;
                }
            }
        }

        for (size_t mi = 0; mi < even_masks.size(); ++mi) {
            unsigned mask = even_masks[mi];
            int slot = static_cast<int>(mi);  // even masks ascending = module even basis order
            for (Eigen::Index p = 0; p < P; ++p) {
                auto x = g.position(p, mask);
                double r = wrap_offset(x[nr] - c.location[nr], g.lengths[nr]);
                if (std::abs(r) >= 2 * eps) continue;
                double z = x[t];
                double lam = ic.interp(ic.lambda, z);
                Vec e0 = ic.interp(ic.e0, z);
                double sl = s * lam;
                double phi = std::pow(sl, 0.25) * std::exp(-0.5 * sl * r * r);
                double xb = opt.corrected ? ic.xi_bar(z) : 1.0;
                Eigen::Index idx = mi * P + p;
                A.xi0(idx) = phi * xb * e0(slot);
                if (any_fiber) {
                    // linear interpolation in z between nodes and in r on the fiber nodes
                    double u = z / ic.h;
                    int i0 = static_cast<int>(std::floor(u)) % ic.Nz, i1 = (i0 + 1) % ic.Nz;
                    double wz = u - std::floor(u);
                    double fr = (r + fg.L) / fg.h() - 0.5;
                    int j0 = static_cast<int>(std::floor(fr));
                    double wr = fr - j0;
                    auto sample = [&](int i, int j) {
                        if (j < 0 || j >= fg.Nf) return 0.0;
                        return u_nodes[i](j * mod.dim0() + slot);
                    };
                    double v0 = (1 - wr) * sample(i0, j0) + wr * sample(i0, j0 + 1);
                    double v1 = (1 - wr) * sample(i1, j0) + wr * sample(i1, j0 + 1);
                    A.xi1(idx) = ((1 - wz) * v0 + wz * v1) * ic.xi_bar(z);
                }
                if (opt.corrected) {
                    // xi2 vanishes whenever A0 = 0 on Z; computed from the jet for generality
                    const StructureReport& R = ic.reports[static_cast<int>(std::lround(z / ic.h)) % ic.Nz];
                    Mat P1c = Mat::Identity(mod.dim1(), mod.dim1()) - R.S1 * R.S1.transpose();
                    Vec src = P1c * (0.5 * r * r * (R.jet.A2[0][0] * (phi * xb * e0)));
                    if (src.norm() > 0) {
                        Eigen::CompleteOrthogonalDecomposition<Mat> cod(R.jet.A0);
                        A.xi2(idx) = -(cod.solve(src))(slot);
                    }
                }
            }
        }
    } else {
        std::vector<int> ax;
        for (int j = 0; j < n; ++j) ax.push_back(j);
        bool norm = false;
        StructureReport R = detail::witten_report(f, c.location, n, ax, norm);
        if (R.s0plus_dim() == 0)
            throw InputError("build_approx_eigensection: this point carries no even kernel (odd Morse index)");
        Vec e0 = detail::single_column(R.S0plus, "S0+");
        A.xi_bar = Vec::Ones(1);
        Mat H = f.hess(c.location, n);
        Eigen::SelfAdjointEigenSolver<Mat> es(H);
        Vec rates = es.eigenvalues().cwiseAbs();
        // the balancing term reduces to P^1 (s/2) x^T Abar x, which needs the third jet
        auto third = f.third(c.location, n);
        double third_max = 0;
        for (const auto& T : third) third_max = std::max(third_max, T.cwiseAbs().maxCoeff());
        A.balance_rhs = third_max;
        if (opt.corrected && third_max > 1e-6)
            throw StructureError("build_approx_eigensection: balancing at points with a nonzero third jet is not implemented");
        for (size_t mi = 0; mi < even_masks.size(); ++mi) {
            for (Eigen::Index p = 0; p < P; ++p) {
                auto x = g.position(p, even_masks[mi]);
                Vec r(n);
                for (int j = 0; j < n; ++j) r(j) = wrap_offset(x[j] - c.location[j], g.lengths[j]);
                if (r.norm() >= 2 * eps) continue;
                Vec y = es.eigenvectors().transpose() * r;
                double phi = 1;
                for (int a = 0; a < n; ++a) phi *= std::pow(s * rates(a), 0.25) * std::exp(-0.5 * s * rates(a) * y(a) * y(a));
                A.xi0(mi * P + p) = phi * e0(static_cast<Eigen::Index>(mi));
            }
        }
    }

    // splice with the cutoff
    A.eta = Vec::Zero(half * P);
    for (size_t mi = 0; mi < even_masks.size(); ++mi)
        for (Eigen::Index p = 0; p < P; ++p) {
            auto x = g.position(p, even_masks[mi]);
            double r = distance_to(g, c, x);
            Eigen::Index idx = mi * P + p;
            A.eta(idx) = bump(r, eps) * (A.xi0(idx) + A.xi1(idx) + A.xi2(idx));
        }
    double n0 = A.xi0.norm();
    A.xi1_ratio = A.xi1.norm() / n0;
    A.xi2_ratio = A.xi2.norm() / n0;
    return A;
}

/** |D_s eta| / |eta| for a spliced section, with D_s from a prebuilt family. */
inline double section_residual(const WittenFamily& fam, double s, const Vec& eta) {
    DiracOperator D = fam.at(s);
    return (D.Ds * eta).norm() / eta.norm();
}

/** Least-squares slope of log residual against log s; at least three ascending s values. */
inline double est1_check(const std::vector<double>& s_list, const std::vector<double>& residuals) {
    if (s_list.size() < 3) throw InputError("est1_check: need at least three values of s");
    if (s_list.size() != residuals.size()) throw InputError("est1_check: one residual per s");
    for (size_t i = 1; i < s_list.size(); ++i)
        if (!(s_list[i] > s_list[i - 1])) throw InputError("est1_check: s values must be ascending");
    return loglog_slope(s_list, residuals);
}

// ---------------------------------------------------------------------------------------
// Finite-dimensional gap lemma

struct GapLemmaReport {
    bool hypotheses_ok = false;
    std::string violation;
    double rq_v_max = 0;     // max Rayleigh quotient of L^T L on V
    double rq_perp_min = 0;  // min Rayleigh quotient of L^T L on V^perp
    std::vector<double> mu;  // eigenvalues of L^T L, ascending
    bool bracket_ok = false;
    bool bound_applicable = false;
    bool invertible = false;
    double sigma_min_p = 0;
    double defect_sq = 0;    // |1_W - P|^2
    double bound = 0;        // 4 C1 / C2
    bool bound_holds = false;
    std::string status;

    Json to_json() const {
        return {{"hypotheses_ok", hypotheses_ok}, {"violation", violation}, {"rq_v_max", rq_v_max},
                {"rq_perp_min", rq_perp_min}, {"bracket_ok", bracket_ok}, {"bound_applicable", bound_applicable},
                {"invertible", invertible}, {"sigma_min_P", sigma_min_p}, {"defect_sq", defect_sq},
                {"bound", bound}, {"bound_holds", bound_holds}, {"status", status}};
    }
};

/**
 * Certifies |Lv|^2 <= C1 |v|^2 on V and |Lw|^2 >= C2 |w|^2 on V^perp from the extremal
 * Rayleigh quotients, then (when 4 C1 < C2) checks that the orthogonal projection from
 * the low eigenspace W of L^T L onto V is invertible with |1_W - P|^2 <= 4 C1 / C2.
 */
inline GapLemmaReport gap_lemma_check(const Mat& L, const Mat& V, double C1, double C2) {
    const Eigen::Index N = L.cols();
    const Eigen::Index k = V.cols();
    if (V.rows() != N || k < 1 || k >= N) throw InputError("gap_lemma_check: V must be N x k with 1 <= k < N");
    if (!(C1 >= 0) || !(C2 > 0)) throw InputError("gap_lemma_check: need C1 >= 0 and C2 > 0");
    if ((V.transpose() * V - Mat::Identity(k, k)).cwiseAbs().maxCoeff() > 1e-10)
        throw InputError("gap_lemma_check: columns of V are not orthonormal");
    GapLemmaReport rep;
    Mat G = L.transpose() * L;
    G = 0.5 * (G + G.transpose()).eval();
    Eigen::HouseholderQR<Mat> qr(V);
    Mat full = qr.householderQ();
    Mat Vp = full.rightCols(N - k);
    Mat Gv = V.transpose() * G * V, Gp = Vp.transpose() * G * Vp;
    rep.rq_v_max = Eigen::SelfAdjointEigenSolver<Mat>(0.5 * (Gv + Gv.transpose())).eigenvalues().maxCoeff();
    rep.rq_perp_min = Eigen::SelfAdjointEigenSolver<Mat>(0.5 * (Gp + Gp.transpose())).eigenvalues().minCoeff();
    const double slack = 1e-10 * std::max(1.0, G.cwiseAbs().maxCoeff());
    rep.hypotheses_ok = true;
    if (rep.rq_v_max > C1 + slack) {
        rep.hypotheses_ok = false;
        rep.violation = "max Rayleigh quotient on V is " + std::to_string(rep.rq_v_max) + " > C1";
    } else if (rep.rq_perp_min < C2 - slack) {
        rep.hypotheses_ok = false;
        rep.violation = "min Rayleigh quotient on V^perp is " + std::to_string(rep.rq_perp_min) + " < C2";
    }
    Eigen::SelfAdjointEigenSolver<Mat> es(G);
    rep.mu.assign(es.eigenvalues().data(), es.eigenvalues().data() + N);
    rep.bound = 4 * C1 / C2;
    if (!rep.hypotheses_ok) {
        rep.status = "hypotheses fail: " + rep.violation;
        return rep;
    }
    rep.bracket_ok = rep.mu[k - 1] <= C1 + slack && C1 < C2 && C2 <= rep.mu[k] + slack;
    rep.bound_applicable = 4 * C1 < C2;
    if (!rep.bound_applicable) {
        rep.status = "bound inconclusive";
        return rep;
    }
    Mat W = es.eigenvectors().leftCols(k);
    Mat PW = V.transpose() * W;  // P : W -> V in orthonormal coordinates
    Eigen::JacobiSVD<Mat> svd(PW);
    rep.sigma_min_p = svd.singularValues().minCoeff();
    rep.invertible = rep.sigma_min_p > 1e-12;
    Mat D = W - V * PW;
    double nd = Eigen::JacobiSVD<Mat>(D).singularValues()(0);
    rep.defect_sq = nd * nd;
    rep.bound_holds = rep.defect_sq <= rep.bound * (1 + 1e-12) + 1e-15;
    rep.status = rep.invertible && rep.bound_holds && rep.bracket_ok ? "certified" : "violated";
    return rep;
}

struct GapInstance {
    Mat L, V;
    double C1 = 0, C2 = 0;
};

/**
 * Random instance with 4 C1 < C2: L = U diag(sigma) Q^T with a small low block, V a
 * tilted copy of the low right-singular space; C1 and C2 are the exact extremal
 * Rayleigh quotients. The tilt is halved until the side condition holds.
 */
inline GapInstance random_gap_instance(Rng& rng, int dim = 100) {
    if (dim < 4) throw InputError("random_gap_instance: dim must be >= 4");
    std::uniform_int_distribution<int> kd(1, std::max(1, dim / 10));
    std::uniform_real_distribution<double> ud(0.0, 1.0);
    int k = kd(rng);
    Mat Q = Eigen::HouseholderQR<Mat>(gaussian_matrix(rng, dim, dim)).householderQ();
    Mat U = Eigen::HouseholderQR<Mat>(gaussian_matrix(rng, dim, dim)).householderQ();
    Vec sig(dim);
    for (int i = 0; i < dim; ++i) sig(i) = i < k ? 0.1 * ud(rng) : 1.0 + 9.0 * ud(rng);
    GapInstance inst;
    inst.L = U * sig.asDiagonal() * Q.transpose();
    Mat G = inst.L.transpose() * inst.L;
    Mat T = gaussian_matrix(rng, dim - k, k);
    T /= T.norm();
    double tilt = 0.1 + 0.3 * ud(rng);
    for (int attempt = 0; attempt < 60; ++attempt, tilt *= 0.5) {
        Mat Vr = Q.leftCols(k) + tilt * Q.rightCols(dim - k) * T;
        Mat V = Eigen::HouseholderQR<Mat>(Vr).householderQ() * Mat::Identity(dim, k);
        Mat full = Eigen::HouseholderQR<Mat>(V).householderQ();
        Mat Vp = full.rightCols(dim - k);
        Mat Gv = V.transpose() * G * V, Gp = Vp.transpose() * G * Vp;
        double c1 = Eigen::SelfAdjointEigenSolver<Mat>(0.5 * (Gv + Gv.transpose())).eigenvalues().maxCoeff();
        double c2 = Eigen::SelfAdjointEigenSolver<Mat>(0.5 * (Gp + Gp.transpose())).eigenvalues().minCoeff();
        if (4 * c1 < c2) {
            inst.V = V;
            inst.C1 = c1;
            inst.C2 = c2;
            return inst;
        }
    }
    throw StructureError("random_gap_instance: could not satisfy 4 C1 < C2");
}

}  // namespace dirac

#endif
