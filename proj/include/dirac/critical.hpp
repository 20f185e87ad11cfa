#ifndef DIRAC_CRITICAL_HPP
#define DIRAC_CRITICAL_HPP

#include <fstream>
#include <set>

#include "torus.hpp"

namespace dirac {

/** One connected piece of the critical set: a point, or a circle along one coordinate axis. */
struct CriticalComponent {
    std::string type;              // "point" or "circle"
    int axis = -1;                 // tangent axis of a circle
    std::array<double, 3> location{};  // point coordinates; for a circle the tangent entry is unused
    int morse_index = 0;
    std::vector<double> rates;     // |normal Hessian eigenvalues| at the reference point
    double rate_min = 0, rate_max = 0;  // over the circle (equal to the rates range for points)
    int euler = 0;
    int cells = 0;                 // grid nodes in the scanned cluster

    int dim() const { return type == "circle" ? 1 : 0; }
    Json to_json() const {
        Json j{{"type", type},
               {"morse_index", morse_index},
               {"normal_rates", rates},
               {"rate_min", rate_min},
               {"rate_max", rate_max},
               {"euler_characteristic", euler},
               {"cells", cells}};
        std::vector<double> loc(location.begin(), location.end());
        if (type == "circle") j["axis"] = axis;
        j["location"] = loc;
        return j;
    }
};

struct CriticalReport {
    TorusGrid grid;
    std::vector<CriticalComponent> components;

    /** Sum of (-1)^q chi(Z). */
    int index_sum() const {
        int s = 0;
        for (const auto& c : components) s += (c.morse_index % 2 ? -1 : 1) * c.euler;
        return s;
    }
    /** Point counts per Morse index 0..n. */
    std::vector<int> point_counts() const {
        std::vector<int> cnt(grid.n + 1, 0);
        for (const auto& c : components)
            if (c.type == "point") ++cnt[c.morse_index];
        return cnt;
    }
    /** Half the smallest wrapped distance between two components (infinite for a single one). */
    double injectivity_bound() const;

    Json to_json() const {
        Json comps = Json::array();
        for (const auto& c : components) comps.push_back(c.to_json());
        return {{"components", comps}, {"index_sum", index_sum()}, {"point_counts_by_index", point_counts()}};
    }
};

/** Wrapped distance from x to a component, measured in the normal directions for circles. */
inline double distance_to(const TorusGrid& g, const CriticalComponent& c, const std::array<double, 3>& x) {
    double d2 = 0;
    for (int j = 0; j < g.n; ++j) {
        if (c.type == "circle" && j == c.axis) continue;
        double d = wrap_offset(x[j] - c.location[j], g.lengths[j]);
        d2 += d * d;
    }
    return std::sqrt(d2);
}

inline double CriticalReport::injectivity_bound() const {
    double best = std::numeric_limits<double>::infinity();
    for (size_t a = 0; a < components.size(); ++a)
        for (size_t b = 0; b < components.size(); ++b) {
            if (a == b) continue;
            // distance from a's reference point to b; for circle-circle pairs along the same axis this is exact
            best = std::min(best, distance_to(grid, components[b], components[a].location));
        }
    return 0.5 * best;
}

namespace detail {

/** Newton iteration on the coordinates listed in `free`, others held fixed. */
inline std::array<double, 3> newton_polish(const ScalarFunction& f, int n, std::array<double, 3> x,
                                           const std::vector<int>& free) {
    const int m = static_cast<int>(free.size());
    for (int it = 0; it < 60; ++it) {
        Jet2 j = f.jet(x);
        Vec g(m);
        Mat H(m, m);
        for (int a = 0; a < m; ++a) {
            g(a) = j.g[free[a]];
            for (int b = 0; b < m; ++b) H(a, b) = j.H[3 * free[a] + free[b]];
        }
        if (g.norm() < 1e-14) break;
        Eigen::FullPivLU<Mat> lu(H);
        if (!lu.isInvertible()) throw StructureError("find_critical_set: degenerate normal Hessian at a critical component");
        Vec step = lu.solve(g);
        for (int a = 0; a < m; ++a) x[free[a]] -= step(a);
        if (step.norm() < 1e-15) break;
    }
    (void)n;
    return x;
}

inline Vec normal_eigenvalues(const ScalarFunction& f, const std::array<double, 3>& x, int n, const std::vector<int>& free) {
    Mat H = f.hess(x, n);
    Mat Hn(free.size(), free.size());
    for (size_t a = 0; a < free.size(); ++a)
        for (size_t b = 0; b < free.size(); ++b) Hn(a, b) = H(free[a], free[b]);
    return Eigen::SelfAdjointEigenSolver<Mat>(Hn).eigenvalues();
}

}  // namespace detail

/**
 * Grid scan plus Newton polish. A node is flagged when |df| <= tol * max|df| or when
 * |df| <= 0.75 h |Hess| (a nondegenerate critical point between nodes always flags a
 * neighbour this way). Flagged nodes are grouped by periodic 3^n-neighbour adjacency.
 * A group that covers every coordinate of exactly one axis is a circle along it; one
 * that wraps no axis is a point; anything else is rejected as unclassified.
 */
inline CriticalReport find_critical_set(const TorusGrid& g, const ScalarFunction& f, double tol = 1e-3) {
    if (!(tol > 0)) throw InputError("find_critical_set: tol must be positive");
    f.validate_on(g);
    const Eigen::Index P = g.points();
    const int n = g.n;
    double hmax = *std::max_element(g.lengths.begin(), g.lengths.end()) / *std::min_element(g.sizes.begin(), g.sizes.end());
    for (int j = 0; j < n; ++j) hmax = std::max(hmax, g.h(j));
    std::vector<double> gn(P), hn(P);
    double gmax = 0;
    for (Eigen::Index p = 0; p < P; ++p) {
        auto x = g.position(p, 0);
        Jet2 jt = f.jet(x);
        double s = 0;
        for (int j = 0; j < n; ++j) s += jt.g[j] * jt.g[j];
        gn[p] = std::sqrt(s);
        Mat H(n, n);
        for (int a = 0; a < n; ++a)
            for (int b = 0; b < n; ++b) H(a, b) = jt.H[3 * a + b];
        hn[p] = Eigen::SelfAdjointEigenSolver<Mat>(H).eigenvalues().cwiseAbs().maxCoeff();
        gmax = std::max(gmax, gn[p]);
    }
    if (gmax == 0.0) throw StructureError("find_critical_set: f is constant, the critical set is the whole torus (unclassified)");
    std::vector<char> flag(P, 0);
    for (Eigen::Index p = 0; p < P; ++p) flag[p] = gn[p] <= tol * gmax || gn[p] <= 0.75 * hmax * hn[p];

    // neighbour offsets in {-1,0,1}^n minus the origin
    std::vector<std::array<int, 3>> offs;
    for (int a = -1; a <= 1; ++a)
        for (int b = (n > 1 ? -1 : 0); b <= (n > 1 ? 1 : 0); ++b)
            for (int c = (n > 2 ? -1 : 0); c <= (n > 2 ? 1 : 0); ++c)
                if (a || b || c) offs.push_back({a, b, c});

    CriticalReport rep;
    rep.grid = g;
    std::vector<int> label(P, -1);
    int next = 0;
    for (Eigen::Index seed = 0; seed < P; ++seed) {
        if (!flag[seed] || label[seed] >= 0) continue;
        std::vector<Eigen::Index> members{seed}, stack{seed};
        label[seed] = next;
        while (!stack.empty()) {
            Eigen::Index p = stack.back();
            stack.pop_back();
            for (const auto& o : offs) {
                Eigen::Index q = p;
                for (int j = 0; j < n; ++j)
                    if (o[j]) q = g.shift(q, j, o[j]);
                if (flag[q] && label[q] < 0) {
                    label[q] = next;
                    members.push_back(q);
                    stack.push_back(q);
                }
            }
        }
        ++next;

        std::vector<std::set<int>> covered(n);
        for (auto p : members)
            for (int j = 0; j < n; ++j) covered[j].insert(g.coord(p, j));
        std::vector<int> full;
        for (int j = 0; j < n; ++j)
            if (static_cast<int>(covered[j].size()) == g.sizes[j]) full.push_back(j);
        if (full.size() > 1)
            throw StructureError("find_critical_set: component wraps " + std::to_string(full.size()) +
                                 " axes (unclassified)");
        Eigen::Index best = *std::min_element(members.begin(), members.end(),
                                              [&](Eigen::Index a, Eigen::Index b) { return gn[a] < gn[b]; });

        CriticalComponent comp;
        comp.cells = static_cast<int>(members.size());
        if (full.empty()) {
            std::vector<int> freev;
            for (int j = 0; j < n; ++j) freev.push_back(j);
            auto x = detail::newton_polish(f, n, g.position(best, 0), freev);
            for (int j = 0; j < n; ++j) {
                double period = g.lengths[j];
                x[j] = std::fmod(std::fmod(x[j], period) + period, period);
                if (x[j] > period - 1e-12) x[j] = 0.0;
            }
            Vec ev = detail::normal_eigenvalues(f, x, n, freev);
            comp.type = "point";
            comp.location = x;
            comp.euler = 1;
            for (int a = 0; a < n; ++a) {
                if (ev(a) < 0) ++comp.morse_index;
                comp.rates.push_back(std::abs(ev(a)));
            }
        } else {
            const int t = full[0];
            // the cluster must be thin across the circle
            for (int j = 0; j < n; ++j)
                if (j != t && static_cast<int>(covered[j].size()) > g.sizes[j] / 4)
                    throw StructureError("find_critical_set: wide cluster, not an axis-aligned circle (unclassified)");
            std::vector<int> freev;
            for (int j = 0; j < n; ++j)
                if (j != t) freev.push_back(j);
            auto x0 = g.position(best, 0);
            x0[t] = 0.0;
            auto x = detail::newton_polish(f, n, x0, freev);
            comp.type = "circle";
            comp.axis = t;
            comp.euler = 0;
            for (int j : freev) {
                double period = g.lengths[j];
                x[j] = std::fmod(std::fmod(x[j], period) + period, period);
                if (x[j] > period - 1e-12) x[j] = 0.0;
            }
            x[t] = 0.0;
            comp.location = x;
            Vec ev0 = detail::normal_eigenvalues(f, x, n, freev);
            for (Eigen::Index a = 0; a < ev0.size(); ++a) {
                if (ev0(a) < 0) ++comp.morse_index;
                comp.rates.push_back(std::abs(ev0(a)));
            }
            // walk the circle: the normal position must stay put and the index must not change
            comp.rate_min = std::numeric_limits<double>::infinity();
            comp.rate_max = 0;
            for (int i = 0; i < g.sizes[t]; ++i) {
                auto y = x;
                y[t] = i * g.h(t);
                auto z = detail::newton_polish(f, n, y, freev);
                for (int j : freev)
                    if (std::abs(wrap_offset(z[j] - x[j], g.lengths[j])) > 0.5 * g.h(j))
                        throw StructureError("find_critical_set: critical curve is not axis-aligned (unclassified)");
                Vec ev = detail::normal_eigenvalues(f, z, n, freev);
                int q = 0;
                for (Eigen::Index a = 0; a < ev.size(); ++a) {
                    if (ev(a) < 0) ++q;
                    comp.rate_min = std::min(comp.rate_min, std::abs(ev(a)));
                    comp.rate_max = std::max(comp.rate_max, std::abs(ev(a)));
                }
                if (q != comp.morse_index) throw StructureError("find_critical_set: Morse index changes along a circle");
            }
        }
        if (comp.type == "point") {
            comp.rate_min = *std::min_element(comp.rates.begin(), comp.rates.end());
            comp.rate_max = *std::max_element(comp.rates.begin(), comp.rates.end());
        }
        rep.components.push_back(comp);
    }
    // deterministic order: circles first, then by location
    std::sort(rep.components.begin(), rep.components.end(), [](const CriticalComponent& a, const CriticalComponent& b) {
        if (a.type != b.type) return a.type == "circle";
        return a.location < b.location;
    });
    return rep;
}

/** CSV columns type, axis, x, y, z, morse_index, rate_min, rate_max, euler. */
inline void write_critical_csv(const CriticalReport& r, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write " + path);
    out.precision(12);
    out << "type,axis,x,y,z,morse_index,rate_min,rate_max,euler\n";
    for (const auto& c : r.components)
        out << c.type << "," << c.axis << "," << c.location[0] << "," << c.location[1] << "," << c.location[2] << ","
            << c.morse_index << "," << c.rate_min << "," << c.rate_max << "," << c.euler << "\n";
}

}  // namespace dirac

#endif
