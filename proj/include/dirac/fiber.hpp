#ifndef DIRAC_FIBER_HPP
#define DIRAC_FIBER_HPP

#include <fstream>
#include <functional>

#include "clifford.hpp"

namespace dirac {

/**
 * Box [-L, L]^codim with Nf cells per axis and zero values outside. Nodes sit at cell
 * centres; the alpha-edges (Nf + 1 per line, boundary edges included) carry the
 * forward differences along alpha.
 */
struct FiberGrid {
    int codim = 1;
    int Nf = 0;
    double L = 0;

    FiberGrid() = default;
    FiberGrid(int c, int nf, double half_width) : codim(c), Nf(nf), L(half_width) {
        if (c < 1 || c > 3) throw InputError("FiberGrid: codim must be 1..3");
        if (nf < 16) throw InputError("FiberGrid: Nf must be >= 16");
        if (!(half_width > 0)) throw InputError("FiberGrid: L must be positive");
        if (std::pow(static_cast<double>(nf), c) > static_cast<double>(1 << 22))
            throw InputError("FiberGrid: Nf^codim exceeds 2^22");
    }

    double h() const { return 2 * L / Nf; }
    Eigen::Index nodes() const { return static_cast<Eigen::Index>(std::pow(Nf, codim) + 0.5); }
    Eigen::Index edges() const { return nodes() / Nf * (Nf + 1); }
    double node_x(int i) const { return -L + (i + 0.5) * h(); }
    double edge_x(int e) const { return -L + e * h(); }
    Eigen::Index stride(int a) const { return static_cast<Eigen::Index>(std::pow(Nf, codim - 1 - a) + 0.5); }
    int coord(Eigen::Index p, int a) const { return static_cast<int>((p / stride(a)) % Nf); }
    double r2(Eigen::Index p) const {
        double s = 0;
        for (int a = 0; a < codim; ++a) s += node_x(coord(p, a)) * node_x(coord(p, a));
        return s;
    }
    /** Grid measure h^codim. */
    double measure() const { return std::pow(h(), codim); }
};

namespace detail {

/** Scalar forward difference and two-point average from nodes to alpha-edges. */
struct EdgeOps {
    SpMat diff, avg;
    std::vector<double> x;  // alpha coordinate of each edge
};

inline EdgeOps edge_ops(const FiberGrid& g, int a) {
    const Eigen::Index N = g.nodes(), E = g.edges();
    std::vector<Triplet> td, ta;
    std::vector<double> xs(E);
    // Edge multi-index: alpha slot ranges over Nf+1, the others over Nf.
    Eigen::Index outer = N / (g.stride(a) * g.Nf);
    Eigen::Index inner = g.stride(a);
    const double ih = 1.0 / g.h();
    for (Eigen::Index o = 0; o < outer; ++o)
        for (int e = 0; e <= g.Nf; ++e)
            for (Eigen::Index in = 0; in < inner; ++in) {
                Eigen::Index row = (o * (g.Nf + 1) + e) * inner + in;
                xs[row] = g.edge_x(e);
                if (e - 1 >= 0) {
                    Eigen::Index col = (o * g.Nf + e - 1) * inner + in;
                    td.emplace_back(row, col, -ih);
                    ta.emplace_back(row, col, 0.5);
                }
                if (e < g.Nf) {
                    Eigen::Index col = (o * g.Nf + e) * inner + in;
                    td.emplace_back(row, col, ih);
                    ta.emplace_back(row, col, 0.5);
                }
            }
    EdgeOps ops;
    ops.diff.resize(E, N);
    ops.avg.resize(E, N);
    ops.diff.setFromTriplets(td.begin(), td.end());
    ops.avg.setFromTriplets(ta.begin(), ta.end());
    ops.x = std::move(xs);
    return ops;
}

/** Kronecker product of a scalar sparse operator with a small dense block. */
inline void kron_into(std::vector<Triplet>& t, const SpMat& S, const Mat& B, Eigen::Index row0,
                      const std::vector<double>* scale = nullptr) {
    for (Eigen::Index r = 0; r < S.outerSize(); ++r)
        for (SpMat::InnerIterator it(S, r); it; ++it) {
            double v = it.value() * (scale ? (*scale)[it.row()] : 1.0);
            for (Eigen::Index i = 0; i < B.rows(); ++i)
                for (Eigen::Index j = 0; j < B.cols(); ++j)
                    if (B(i, j) != 0.0)
                        t.emplace_back(row0 + it.row() * B.rows() + i, it.col() * B.cols() + j, v * B(i, j));
        }
}

}  // namespace detail

/**
 * Vertical model operator sum_a c^a (delta_a + s x_a M_a^0) on S0-valued node fields.
 * The a-th term lands on the a-edge grid, so the image is the direct sum over a of
 * S1-valued edge fields; x_a M_a acts through the midpoint average.
 */
inline SpMat assemble_vertical(const StructureReport& R, const FiberGrid& g, double s) {
    if (s < 0) throw InputError("assemble_vertical: s must be nonnegative");
    if (R.codim() != g.codim) throw InputError("assemble_vertical: grid codim differs from the jet");
    const int k = R.kernel_dim;
    if (static_cast<double>(g.nodes()) * k > static_cast<double>(1 << 22))
        throw InputError("assemble_vertical: grid too large");
    std::vector<Triplet> t;
    Eigen::Index row0 = 0;
    for (int a = 0; a < g.codim; ++a) {
        auto ops = detail::edge_ops(g, a);
        detail::kron_into(t, ops.diff, R.G[a], row0);
        if (s != 0.0) {
            std::vector<double> sx(ops.x.size());
            for (size_t i = 0; i < sx.size(); ++i) sx[i] = s * ops.x[i];
            detail::kron_into(t, ops.avg, Mat(R.G[a] * R.M0[a]), row0, &sx);
        }
        row0 += g.edges() * k;
    }
    SpMat D(row0, g.nodes() * k);
    D.setFromTriplets(t.begin(), t.end());
    return D;
}

/** -Delta_h + s^2 r^2 Q0 - s C0 on S0-valued node fields (right-hand side of the Weitzenbock identity). */
inline SpMat assemble_weitzenbock_model(const StructureReport& R, const FiberGrid& g, double s) {
    const int k = R.kernel_dim;
    const Eigen::Index N = g.nodes();
    SpMat lap(N, N);
    for (int a = 0; a < g.codim; ++a) {
        auto ops = detail::edge_ops(g, a);
        lap += SpMat(ops.diff.transpose() * ops.diff);
    }
    std::vector<Triplet> t;
    detail::kron_into(t, lap, Mat::Identity(k, k), 0);
    for (Eigen::Index p = 0; p < N; ++p) {
        Mat B = s * s * g.r2(p) * R.Q0 - s * R.C0;
        for (int i = 0; i < k; ++i)
            for (int j = 0; j < k; ++j)
                if (B(i, j) != 0.0) t.emplace_back(p * k + i, p * k + j, B(i, j));
    }
    SpMat W(N * k, N * k);
    W.setFromTriplets(t.begin(), t.end());
    return W;
}

/**
 * Estimate of the operator norm of D^T D - (-Delta_h + s^2 r^2 Q0 - s C0) from 20 seeded
 * probes. Probes are smooth (random cubic polynomials under a Gaussian window of width
 * L/4), fixed in physical space so that refinements compare like with like.
 */
inline double weitzenbock_residual(const StructureReport& R, const FiberGrid& g, double s, int probes = 20,
                                   std::uint64_t seed = 17) {
    SpMat D = assemble_vertical(R, g, s);
    SpMat W = assemble_weitzenbock_model(R, g, s);
    const int k = R.kernel_dim;
    const Eigen::Index N = g.nodes();
    Rng rng(seed);
    std::normal_distribution<double> nd(0.0, 1.0);
    double worst = 0.0;
    for (int t = 0; t < probes; ++t) {
        // coefficients of prod_a (x_a / L)^{p_a}, total degree <= 3, per S0 component
        std::vector<std::vector<int>> exps;
        std::vector<int> e(g.codim, 0);
        std::function<void(int, int)> gen = [&](int a, int left) {
            if (a == g.codim) {
                exps.push_back(e);
                return;
            }
            for (int p = 0; p <= left; ++p) {
                e[a] = p;
                gen(a + 1, left - p);
            }
        };
        gen(0, 3);
        Mat coef(exps.size(), k);
        for (Eigen::Index i = 0; i < coef.rows(); ++i)
            for (int j = 0; j < k; ++j) coef(i, j) = nd(rng);
        Vec v(N * k);
        for (Eigen::Index p = 0; p < N; ++p) {
            double w = std::exp(-16.0 * g.r2(p) / (g.L * g.L));
            for (int j = 0; j < k; ++j) {
                double acc = 0;
                for (size_t i = 0; i < exps.size(); ++i) {
                    double mono = 1;
                    for (int a = 0; a < g.codim; ++a) mono *= std::pow(g.node_x(g.coord(p, a)) / g.L, exps[i][a]);
                    acc += coef(i, j) * mono;
                }
                v(p * k + j) = w * acc;
            }
        }
        Vec r = D.transpose() * (D * v) - W * v;
        worst = std::max(worst, r.norm() / v.norm());
    }
    return worst;
}

struct SpectrumEntry {
    double value;
    int multiplicity;
};

/** Analytic {2 s lambda (|a| + k)} for one rung, multiplicities binom(j + codim - 1, codim - 1). */
inline std::vector<SpectrumEntry> oscillator_spectrum(double lambda, double s, int codim, int k, int count) {
    if (!(lambda > 0) || !(s > 0)) throw InputError("oscillator_spectrum: lambda and s must be positive");
    if (k < 0 || k > codim) throw InputError("oscillator_spectrum: rung out of range");
    std::vector<SpectrumEntry> out;
    for (int j = 0; static_cast<int>(out.size()) < count; ++j)
        out.push_back({2 * s * lambda * (j + k), static_cast<int>(binomial(j + codim - 1, codim - 1))});
    return out;
}

/**
 * Analytic spectrum of D_s^T D_s on S0 for a whole jet, expanded with multiplicity
 * and truncated to the `count` smallest values.
 */
inline std::vector<double> oscillator_eigenvalues(const StructureReport& R, double s, int count) {
    std::vector<double> vals;
    const int c = R.codim();
    for (const auto& e : R.ladder) {
        if (e.mult0 == 0) continue;
        for (const auto& se : oscillator_spectrum(e.lambda, s, c, e.k, count))
            for (int m = 0; m < se.multiplicity * e.mult0; ++m) vals.push_back(se.value);
    }
    std::sort(vals.begin(), vals.end());
    if (static_cast<int>(vals.size()) > count) vals.resize(count);
    return vals;
}

/** Samples (s lambda)^{c/4} exp(-s lambda r^2 / 2) xi_plus on the nodes, in S0 coordinates. */
inline Vec gaussian_section(const StructureReport& R, const FiberGrid& g, double s, const Vec& xi_plus) {
    if (xi_plus.size() != R.jet.module.dim0()) throw InputError("gaussian_section: xi_plus must live in E0");
    double nrm = xi_plus.norm();
    if (nrm == 0.0) throw InputError("gaussian_section: xi_plus is zero");
    Vec rest = xi_plus;
    std::vector<Vec> parts;
    for (const auto& B : R.S0plus) {
        Vec part = B * (B.transpose() * xi_plus);
        parts.push_back(R.S0.transpose() * part);
        rest -= part;
    }
    if (rest.norm() > 1e-8 * nrm) throw StructureError("gaussian_section: xi_plus is not in S^{0+}");
    const int k = R.kernel_dim, c = g.codim;
    Vec u = Vec::Zero(g.nodes() * k);
    for (Eigen::Index p = 0; p < g.nodes(); ++p) {
        double r2 = g.r2(p);
        for (size_t l = 0; l < parts.size(); ++l) {
            double sl = s * R.lambdas[l];
            u.segment(p * k, k) += std::pow(sl, c / 4.0) * std::exp(-0.5 * sl * r2) * parts[l];
        }
    }
    return u;
}

struct GaussianResidual {
    double residual = 0;       // |D_s(phi xi)| / |phi xi| in the grid norm
    double norm_ratio = 0;     // |phi xi|^2 / |xi|^2 in the grid norm
    double expected_ratio = 0; // pi^{codim/2}
    double tail_bound = 0;     // L^2 mass fraction of the Gaussian outside the box
    Json to_json() const {
        return {{"residual", residual},
                {"norm_ratio", norm_ratio},
                {"expected_ratio", expected_ratio},
                {"tail_bound", tail_bound}};
    }
};

inline GaussianResidual gaussian_residual(const StructureReport& R, const FiberGrid& g, double s, const Vec& xi_plus) {
    Vec u = gaussian_section(R, g, s, xi_plus);
    SpMat D = assemble_vertical(R, g, s);
    GaussianResidual out;
    out.residual = (D * u).norm() / u.norm();
    out.norm_ratio = g.measure() * u.squaredNorm() / xi_plus.squaredNorm();
    out.expected_ratio = std::pow(M_PI, g.codim / 2.0);
    double lmin = *std::min_element(R.lambdas.begin(), R.lambdas.end());
    out.tail_bound = g.codim * std::erfc(std::sqrt(s * lmin) * g.L);
    return out;
}

/** CSV columns index, eigenvalue, analytic_value, rel_error (absolute error where the analytic value is 0). */
inline void write_spectrum_csv(const std::string& path, const std::vector<double>& computed,
                               const std::vector<double>& analytic) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write " + path);
    out.precision(12);
    out << "index,eigenvalue,analytic_value,rel_error\n";
    for (size_t i = 0; i < computed.size() && i < analytic.size(); ++i) {
        double a = analytic[i];
        double err = a == 0.0 ? std::abs(computed[i]) : std::abs(computed[i] - a) / std::abs(a);
        out << i << "," << computed[i] << "," << a << "," << err << "\n";
    }
}

}  // namespace dirac

#endif
