#ifndef DIRAC_COMMON_HPP
#define DIRAC_COMMON_HPP

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"

namespace dirac {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using SpMat = Eigen::SparseMatrix<double, Eigen::RowMajor>;
using Triplet = Eigen::Triplet<double>;
using Json = nlohmann::json;

/** Bad user input: out-of-range sizes, unknown names, malformed expressions. */
struct InputError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/** A mathematical precondition of an operation does not hold for the given data. */
struct StructureError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline double binomial(int n, int k) {
    if (k < 0 || k > n) return 0.0;
    double r = 1.0;
    for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
    return std::round(r);
}

/** Deterministic generator; every seeded routine goes through this. */
using Rng = std::mt19937_64;

inline Mat gaussian_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols) {
    std::normal_distribution<double> nd(0.0, 1.0);
    Mat m(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j)
        for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = nd(rng);
    return m;
}

inline Vec unit_vector(Rng& rng, Eigen::Index n) {
    Vec v = gaussian_matrix(rng, n, 1);
    return v / v.norm();
}

/** Wrapped signed offset in (-L/2, L/2] for a period L. */
inline double wrap_offset(double d, double period) {
    double r = std::fmod(d, period);
    if (r > 0.5 * period) r -= period;
    if (r <= -0.5 * period) r += period;
    return r;
}

/** Worker count: DIRAC_LOCALIZE_THREADS caps the hardware count. */
inline int worker_count() {
    int hw = static_cast<int>(std::thread::hardware_concurrency());
    if (hw <= 0) hw = 1;
    if (const char* env = std::getenv("DIRAC_LOCALIZE_THREADS")) {
        int cap = std::atoi(env);
        if (cap >= 1 && cap < hw) hw = cap;
    }
    return hw;
}

/** Runs fn(i) for i in [0, count) on up to worker_count() threads. fn must only touch slot i. */
template <class Fn>
void parallel_for(int count, Fn fn) {
    int workers = std::min(worker_count(), count);
    if (workers <= 1) {
        for (int i = 0; i < count; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(workers);
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            try {
                for (int i = w; i < count; i += workers) fn(i);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

/** Least-squares slope of log(y) against log(x). */
inline double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2) throw InputError("loglog_slope: need at least two points");
    double n = static_cast<double>(x.size()), sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (size_t i = 0; i < x.size(); ++i) {
        if (x[i] <= 0 || y[i] <= 0) throw InputError("loglog_slope: nonpositive data");
        double lx = std::log(x[i]), ly = std::log(y[i]);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    double den = n * sxx - sx * sx;
    if (std::abs(den) < 1e-300) throw InputError("loglog_slope: degenerate abscissae");
    return (n * sxy - sx * sy) / den;
}

inline Json to_json(const Vec& v) { return Json(std::vector<double>(v.data(), v.data() + v.size())); }

inline Json to_json(const Mat& m) {
    Json rows = Json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        std::vector<double> r(m.cols());
        for (Eigen::Index j = 0; j < m.cols(); ++j) r[j] = m(i, j);
        rows.push_back(r);
    }
    return rows;
}

}  // namespace dirac

#endif
