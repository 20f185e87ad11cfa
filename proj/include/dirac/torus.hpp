#ifndef DIRAC_TORUS_HPP
#define DIRAC_TORUS_HPP

#include <bit>
#include <fstream>
#include <map>
#include <memory>

#include "clifford.hpp"
#include "expr.hpp"

namespace dirac {

/**
 * Periodic cubical grid on T^n. Form component omega_I lives at the points
 * p + h/2 * (indicator of I), so d is a forward difference and d* = d^T.
 */
struct TorusGrid {
    int n = 0;
    std::vector<int> sizes;
    std::vector<double> lengths;

    TorusGrid() = default;
    TorusGrid(std::vector<int> sz, std::vector<double> len = {}) : n(static_cast<int>(sz.size())), sizes(std::move(sz)) {
        if (n < 1 || n > 3) throw InputError("TorusGrid: dimension must be 1..3");
        lengths = len.empty() ? std::vector<double>(n, 2.0 * M_PI) : std::move(len);
        if (static_cast<int>(lengths.size()) != n) throw InputError("TorusGrid: one period per axis");
        for (int j = 0; j < n; ++j) {
            if (sizes[j] < 16) throw InputError("TorusGrid: sizes must be >= 16");
            if (!(lengths[j] > 0)) throw InputError("TorusGrid: periods must be positive");
        }
        if (static_cast<double>(unknowns()) > static_cast<double>(1 << 22))
            throw InputError("TorusGrid: 2^n * prod(sizes) exceeds 2^22");
    }

    double h(int j) const { return lengths[j] / sizes[j]; }
    Eigen::Index points() const {
        Eigen::Index p = 1;
        for (int s : sizes) p *= s;
        return p;
    }
    Eigen::Index unknowns() const { return points() << n; }
    int components() const { return 1 << n; }
    int half() const { return 1 << (n - 1); }
    Eigen::Index stride(int j) const {
        Eigen::Index s = 1;
        for (int k = j + 1; k < n; ++k) s *= sizes[k];
        return s;
    }
    int coord(Eigen::Index p, int j) const { return static_cast<int>((p / stride(j)) % sizes[j]); }
    Eigen::Index shift(Eigen::Index p, int j, int by) const {
        int c = coord(p, j);
        int nc = ((c + by) % sizes[j] + sizes[j]) % sizes[j];
        return p + (static_cast<Eigen::Index>(nc) - c) * stride(j);
    }
    /** Physical position of component `mask` at point index p. */
    std::array<double, 3> position(Eigen::Index p, unsigned mask) const {
        std::array<double, 3> x{};
        for (int j = 0; j < n; ++j) x[j] = (coord(p, j) + ((mask >> j) & 1u ? 0.5 : 0.0)) * h(j);
        return x;
    }
    /** Masks in storage order: even masks ascending, then odd masks ascending. */
    std::vector<unsigned> masks() const {
        std::vector<unsigned> ev, od;
        for (unsigned m = 0; m < (1u << n); ++m) (std::popcount(m) % 2 ? od : ev).push_back(m);
        ev.insert(ev.end(), od.begin(), od.end());
        return ev;
    }
    int slot(unsigned mask) const {
        auto ms = masks();
        return static_cast<int>(std::find(ms.begin(), ms.end(), mask) - ms.begin());
    }
    double cell_volume() const {
        double v = 1;
        for (int j = 0; j < n; ++j) v *= h(j);
        return v;
    }
    Json to_json() const { return {{"n", n}, {"sizes", sizes}, {"lengths", lengths}}; }
};

/** Named registry of scalar functions; each is an expression in x, y, z. */
inline const std::map<std::string, std::string>& function_registry() {
    static const std::map<std::string, std::string> reg{
        {"cos_x", "cos(x)"},
        {"cos_x_plus_cos_y", "cos(x) + cos(y)"},
        {"bott_mixed", "(2 + sin(y)) * (1 - cos(x))"},
        {"cos_theta", "cos(x)"},
    };
    return reg;
}

/** f with exact first and second derivatives; third derivatives by central differences of the Hessian. */
class ScalarFunction {
public:
    ScalarFunction() = default;
    ScalarFunction(std::string name, const std::string& expr)
        : name_(std::move(name)), expr_(std::make_shared<Expression>(expr)) {}

    /** Registry name or a literal expression. */
    static ScalarFunction lookup(const std::string& spec) {
        auto it = function_registry().find(spec);
        if (it != function_registry().end()) return ScalarFunction(spec, it->second);
        return ScalarFunction("expr", spec);
    }

    const std::string& name() const { return name_; }
    const std::string& expression() const { return expr_->text(); }
    int dimension() const { return expr_->dimension(); }
    bool valid() const { return static_cast<bool>(expr_); }

    double value(const std::array<double, 3>& x) const { return expr_->eval<double>(x); }
    Jet2 jet(const std::array<double, 3>& x) const {
        return expr_->eval<Jet2>({Jet2::variable(x[0], 0), Jet2::variable(x[1], 1), Jet2::variable(x[2], 2)});
    }
    Vec grad(const std::array<double, 3>& x, int n) const {
        Jet2 j = jet(x);
        Vec g(n);
        for (int i = 0; i < n; ++i) g(i) = j.g[i];
        return g;
    }
    Mat hess(const std::array<double, 3>& x, int n) const {
        Jet2 j = jet(x);
        Mat H(n, n);
        for (int a = 0; a < n; ++a)
            for (int b = 0; b < n; ++b) H(a, b) = j.H[3 * a + b];
        return H;
    }
    /** third[k](a, b) = d_k d_a d_b f, central differences of the exact Hessian with one Richardson step. */
    std::vector<Mat> third(const std::array<double, 3>& x, int n, double step = 1e-3) const {
        std::vector<Mat> t;
        auto central = [&](int k, double e) {
            auto xp = x, xm = x;
            xp[k] += e;
            xm[k] -= e;
            return Mat((hess(xp, n) - hess(xm, n)) / (2 * e));
        };
        for (int k = 0; k < n; ++k) t.push_back((4.0 * central(k, 0.5 * step) - central(k, step)) / 3.0);
        return t;
    }

    /** Largest deviation of f(x + L e_j) from f(x) over seeded samples. */
    double periodicity_defect(const TorusGrid& g, std::uint64_t seed = 3) const {
        Rng rng(seed);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        double worst = 0;
        for (int t = 0; t < 32; ++t) {
            std::array<double, 3> x{};
            for (int j = 0; j < g.n; ++j) x[j] = u(rng) * g.lengths[j];
            for (int j = 0; j < g.n; ++j) {
                auto y = x;
                y[j] += g.lengths[j];
                worst = std::max(worst, std::abs(value(y) - value(x)));
            }
        }
        return worst;
    }

    /** Largest mismatch between analytic and central-difference first and second derivatives. */
    double derivative_defect(int n, std::uint64_t seed = 5) const {
        Rng rng(seed);
        std::uniform_real_distribution<double> u(0.0, 2 * M_PI);
        const double e = 1e-5;
        double worst = 0;
        for (int t = 0; t < 16; ++t) {
            std::array<double, 3> x{};
            for (int j = 0; j < n; ++j) x[j] = u(rng);
            Vec g = grad(x, n);
            Mat H = hess(x, n);
            for (int j = 0; j < n; ++j) {
                auto xp = x, xm = x;
                xp[j] += e;
                xm[j] -= e;
                double fd = (value(xp) - value(xm)) / (2 * e);
                worst = std::max(worst, std::abs(fd - g(j)));
                Vec gd = (grad(xp, n) - grad(xm, n)) / (2 * e);
                worst = std::max(worst, (gd - H.col(j)).cwiseAbs().maxCoeff());
            }
        }
        return worst;
    }

    /** Rejects functions that use more variables than the grid has or are not periodic. */
    void validate_on(const TorusGrid& g) const {
        if (!valid()) throw InputError("scalar function not set");
        if (dimension() > g.n)
            throw InputError("function '" + expression() + "' uses more variables than the torus dimension");
        if (periodicity_defect(g) > 1e-9) throw InputError("function '" + expression() + "' is not periodic on the grid");
    }

private:
    std::string name_;
    std::shared_ptr<Expression> expr_;
};

/** All 2^n staggered components of a differential form, stored [even masks | odd masks]. */
struct FormField {
    TorusGrid grid;
    Vec data;

    FormField() = default;
    explicit FormField(const TorusGrid& g) : grid(g), data(Vec::Zero(g.unknowns())) {}

    Eigen::Index offset(unsigned mask) const { return grid.slot(mask) * grid.points(); }
    auto component(unsigned mask) { return data.segment(offset(mask), grid.points()); }
    auto component(unsigned mask) const { return data.segment(offset(mask), grid.points()); }
    auto even() { return data.head(grid.half() * grid.points()); }
    auto even() const { return data.head(grid.half() * grid.points()); }
    auto odd() { return data.tail(grid.half() * grid.points()); }
    auto odd() const { return data.tail(grid.half() * grid.points()); }

    /** Grid norm squared prod(h) * sum |omega_I|^2. */
    double norm_sq() const { return grid.cell_volume() * data.squaredNorm(); }
};

/** Coboundary on all form degrees; d * d = 0 exactly. */
inline SpMat assemble_d(const TorusGrid& g) {
    const Eigen::Index P = g.points();
    std::vector<Triplet> t;
    t.reserve(static_cast<size_t>(g.n) * g.half() * P * 2);
    for (unsigned I = 0; I < (1u << g.n); ++I)
        for (int j = 0; j < g.n; ++j) {
            unsigned bit = 1u << j;
            if (I & bit) continue;
            unsigned J = I | bit;
            double sg = detail::sign_below(I, j) / g.h(j);
            Eigen::Index ro = g.slot(J) * P, co = g.slot(I) * P;
            for (Eigen::Index p = 0; p < P; ++p) {
                t.emplace_back(ro + p, co + g.shift(p, j, 1), sg);
                t.emplace_back(ro + p, co + p, -sg);
            }
        }
    SpMat d(g.unknowns(), g.unknowns());
    d.setFromTriplets(t.begin(), t.end());
    return d;
}

inline SpMat assemble_dstar(const TorusGrid& g) { return SpMat(assemble_d(g).transpose()); }

/**
 * chat(df) from even to odd forms. omega_I feeds omega_{I+j} (wedge) and omega_{I-j}
 * (interior) through the two-point average along j; d_j f is sampled at the target
 * component's staggered location.
 */
inline SpMat assemble_witten(const TorusGrid& g, const ScalarFunction& f) {
    f.validate_on(g);
    const Eigen::Index P = g.points();
    const Eigen::Index half = g.half() * P;
    std::vector<Triplet> t;
    for (unsigned I = 0; I < (1u << g.n); ++I) {
        if (std::popcount(I) % 2) continue;
        Eigen::Index co = g.slot(I) * P;
        for (int j = 0; j < g.n; ++j) {
            unsigned bit = 1u << j;
            unsigned J = I ^ bit;
            double sg = detail::sign_below(I, j);
            Eigen::Index ro = g.slot(J) * P - half;
            int dir = (I & bit) ? -1 : 1;  // interior pulls from p - e_j, wedge from p + e_j
            for (Eigen::Index p = 0; p < P; ++p) {
                double fj = f.jet(g.position(p, J)).g[j];
                if (fj == 0.0) continue;
                double w = 0.5 * sg * fj;
                t.emplace_back(ro + p, co + p, w);
                t.emplace_back(ro + p, co + g.shift(p, j, dir), w);
            }
        }
    }
    SpMat c(half, half);
    c.setFromTriplets(t.begin(), t.end());
    return c;
}

/** D_s : even -> odd with D_s^T D_s and D_s D_s^T applied as compositions. */
struct DiracOperator {
    TorusGrid grid;
    double s = 0;
    SpMat Ds;

    Eigen::Index dim() const { return Ds.cols(); }
    Vec normal_even(const Vec& x) const { return Ds.transpose() * (Ds * x); }
    Vec normal_odd(const Vec& y) const { return Ds * (Ds.transpose() * y); }
    /** Diagonals of D^T D and D D^T (column and row squared norms). */
    Vec diag_even() const {
        Vec d = Vec::Zero(Ds.cols());
        for (Eigen::Index r = 0; r < Ds.outerSize(); ++r)
            for (SpMat::InnerIterator it(Ds, r); it; ++it) d(it.col()) += it.value() * it.value();
        return d;
    }
    Vec diag_odd() const {
        Vec d = Vec::Zero(Ds.rows());
        for (Eigen::Index r = 0; r < Ds.outerSize(); ++r)
            for (SpMat::InnerIterator it(Ds, r); it; ++it) d(r) += it.value() * it.value();
        return d;
    }
};

/** (d + d*) + s chat(df) restricted to even -> odd forms. */
inline DiracOperator assemble_Ds(const TorusGrid& g, const ScalarFunction& f, double s) {
    const Eigen::Index half = g.half() * g.points();
    SpMat d = assemble_d(g);
    SpMat D = d + SpMat(d.transpose());
    SpMat block = D.block(half, 0, half, half);
    DiracOperator op;
    op.grid = g;
    op.s = s;
    op.Ds = s == 0.0 ? block : SpMat(block + s * assemble_witten(g, f));
    op.Ds.makeCompressed();
    return op;
}

/** D_0 and chat(df) assembled once, so D_s for several s costs one sparse add each. */
struct WittenFamily {
    TorusGrid grid;
    SpMat D0, W;

    WittenFamily(const TorusGrid& g, const ScalarFunction& f) : grid(g) {
        const Eigen::Index half = g.half() * g.points();
        SpMat d = assemble_d(g);
        SpMat D = d + SpMat(d.transpose());
        D0 = D.block(half, 0, half, half);
        W = assemble_witten(g, f);
    }
    DiracOperator at(double s) const {
        DiracOperator op;
        op.grid = grid;
        op.s = s;
        op.Ds = SpMat(D0 + s * W);
        op.Ds.makeCompressed();
        return op;
    }
};

/** Coordinate-format dump: one "row col value" line per stored entry. */
inline void write_coo(const SpMat& m, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write " + path);
    out.precision(17);
    out << "# rows " << m.rows() << " cols " << m.cols() << " nnz " << m.nonZeros() << "\n";
    for (Eigen::Index r = 0; r < m.outerSize(); ++r)
        for (SpMat::InnerIterator it(m, r); it; ++it) out << it.row() << " " << it.col() << " " << it.value() << "\n";
}

}  // namespace dirac

#endif
