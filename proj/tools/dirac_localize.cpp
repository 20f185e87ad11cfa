// Batch driver. Exit codes: 0 all contracts hold, 1 a contract failed, 2 configuration error,
// 3 inconclusive (no spectral gap below the configured s threshold).
#include <chrono>
#include <ctime>
#include <filesystem>
#include <iomanip>
#include <iostream>

#include "CLI11.hpp"
#include "dirac/dirac.hpp"

namespace fs = std::filesystem;
using namespace dirac;

namespace {

struct Outcome {
    Json results = Json::object();
    std::map<std::string, bool> contracts;
    bool inconclusive = false;
    std::vector<std::string> summary;
};

using Handler = std::function<Outcome(const RunConfig&, const fs::path&)>;

struct Subcommand {
    std::string name, help;
    std::vector<std::pair<std::string, std::string>> defaults;
    Handler run;
};

std::string num(double v) {
    std::ostringstream o;
    o.precision(6);
    o << v;
    return o.str();
}

std::ofstream open_out(const fs::path& p) {
    std::ofstream out(p);
    if (!out) throw InputError("cannot write " + p.string());
    out.precision(12);
    return out;
}

/** Gnuplot-style data: header comments, then whitespace-separated columns. */
void write_gp(const fs::path& p, const std::string& title, const std::vector<std::string>& cols,
              const std::vector<std::vector<double>>& rows) {
    auto out = open_out(p);
    out << "# " << title << "\n# columns:";
    for (const auto& c : cols) out << " " << c;
    out << "\n";
    for (const auto& r : rows) {
        for (size_t i = 0; i < r.size(); ++i) out << (i ? " " : "") << r[i];
        out << "\n";
    }
}

TorusGrid torus_from(const RunConfig& cfg, const ScalarFunction& f) {
    auto sizes = cfg.sizes("problem.grid");
    int n;
    if (sizes.size() > 1)
        n = static_cast<int>(sizes.size());
    else if (cfg.has("problem.n"))
        n = cfg.integer("problem.n");
    else if (f.name() == "cos_theta")
        n = 1;
    else if (f.name() != "expr")
        n = 2;
    else
        n = std::max(1, f.dimension());
    if (sizes.size() == 1) sizes.assign(n, sizes[0]);
    if (cfg.has("problem.n") && cfg.integer("problem.n") != n)
        throw InputError("problem.n disagrees with the number of grid sizes");
    return TorusGrid(sizes);
}

SolverOptions solver_from(const RunConfig& cfg) {
    SolverOptions o;
    o.method = parse_method(cfg.str("solver.method"));
    o.tol = cfg.num("solver.tol");
    o.max_iter = cfg.integer("solver.max_iter");
    o.seed = static_cast<std::uint64_t>(cfg.integer("run.seed"));
    o.min_ratio = cfg.num("solver.min_ratio");
    return o;
}

std::vector<int> eta_for(int codim, int q) {
    if (q < 0 || q > codim) throw InputError("problem.q must be in [0, codim]");
    std::vector<int> eta(codim, 1);
    for (int a = 0; a < q; ++a) eta[a] = -1;
    return eta;
}

// ---------------------------------------------------------------------------------------

Outcome verify_clifford(const RunConfig& cfg, const fs::path&) {
    Outcome o;
    int n = cfg.integer("problem.n");
    double lam = cfg.num("problem.lambda");
    CliffordModule m = build_witten_module(n);
    double res = clifford_relation_residual(m);
    o.results["n"] = n;
    o.results["relation_residual"] = res;
    bool ladders = true;
    Json jets = Json::array();
    for (int q = 0; q <= n; ++q) {
        StructureReport R = analyze_jet(witten_quadratic_jet(n, eta_for(n, q), std::vector<double>(n, lam)));
        ladders = ladders && R.ladder_consistent;
        Json j = R.to_json();
        j["morse_index"] = q;
        jets.push_back(j);
    }
    o.results["jets"] = jets;
    Rng rng(static_cast<std::uint64_t>(cfg.integer("run.seed")));
    int rejected = 0;
    for (int t = 0; t < 50; ++t)
        if (!check_concentrating_pair(m, gaussian_matrix(rng, m.dim1(), m.dim0())).ok) ++rejected;
    o.results["random_pairs_rejected"] = rejected;
    o.contracts["clifford_relations"] = res <= 1e-14;
    o.contracts["ladders_consistent"] = ladders;
    o.summary.push_back("Clifford relation residual " + num(res) + " (n = " + std::to_string(n) + ")");
    o.summary.push_back(std::string("C-ladders for every Morse index: ") + (ladders ? "consistent" : "INCONSISTENT"));
    o.summary.push_back("random bundle maps rejected as concentrating pairs: " + std::to_string(rejected) + "/50");
    return o;
}

Outcome oscillator(const RunConfig& cfg, const fs::path& out) {
    Outcome o;
    auto codims = cfg.list("problem.codim");
    double lam = cfg.num("problem.lambda");
    int q = cfg.integer("problem.q");
    int nf = cfg.integer("problem.nf");
    int k = cfg.integer("solver.k");
    auto S = cfg.list("experiment.s");
    SolverOptions so = solver_from(cfg);
    Json rows = Json::array();
    std::vector<std::vector<double>> gp;
    auto csv = open_out(out / "spectra.csv");
    csv << "s,index,eigenvalue,residual\n";
    bool within = true, converged = true;
    for (double cd : codims) {
        int c = static_cast<int>(cd);
        StructureReport R = analyze_jet(witten_quadratic_jet(c, eta_for(c, q), std::vector<double>(c, lam)));
        for (double s : S) {
            double L = cfg.str("problem.L") == "auto" ? 8.0 / std::sqrt(s * lam) : cfg.num("problem.L");
            FiberGrid g(c, nf, L);
            SpMat D = assemble_vertical(R, g, s);
            SideSpectrum side = solve_side(normal_operator(D), k, so);
            auto exact = oscillator_eigenvalues(R, s, k);
            double worst = 0;
            for (int i = 0; i < k && i < static_cast<int>(exact.size()); ++i) {
                double e = exact[i] == 0.0 ? std::abs(side.eig.values(i)) / (1e-3 * 2 * s * lam)
                                           : std::abs(side.eig.values(i) - exact[i]) / (0.01 * exact[i]);
                worst = std::max(worst, e);
                gp.push_back({static_cast<double>(c), s, static_cast<double>(i), side.eig.values(i), exact[i]});
            }
            within = within && worst <= 1.0;
            converged = converged && side.eig.all_converged();
            append_spectrum_csv(csv, s, side.eig);
            Json row{{"codim", c}, {"s", s}, {"L", L}, {"Nf", nf}, {"computed", side.eig.to_json()}, {"analytic", exact},
                     {"worst_error_over_tolerance", worst}};
            if (R.s0plus_dim() > 0) row["gaussian"] = gaussian_residual(R, g, s, R.S0plus[0].col(0)).to_json();
            rows.push_back(row);
            o.summary.push_back("codim " + std::to_string(c) + " s " + num(s) + ": worst error / tolerance " + num(worst));
        }
    }
    write_gp(out / "oscillator.gp", "vertical operator spectrum against 2 s lambda (|a| + k)",
             {"codim", "s", "index", "computed", "analytic"}, gp);
    o.results["rows"] = rows;
    o.contracts["spectrum_within_tolerance"] = within;
    o.contracts["converged"] = converged;
    return o;
}

Outcome weitzenbock(const RunConfig& cfg, const fs::path& out) {
    Outcome o;
    auto codims = cfg.list("problem.codim");
    double s = cfg.list("experiment.s").front();
    double L = cfg.str("problem.L") == "auto" ? 4.0 : cfg.num("problem.L");
    int probes = cfg.integer("experiment.probes");
    Json rows = Json::array();
    std::vector<std::vector<double>> gp;
    bool ok = true;
    for (double cd : codims) {
        int c = static_cast<int>(cd);
        int nf = cfg.has("problem.nf") ? cfg.integer("problem.nf") : (c == 1 ? 256 : 64);
        StructureReport R = analyze_jet(witten_quadratic_jet(c, std::vector<int>(c, 1), std::vector<double>(c, cfg.num("problem.lambda"))));
        double a = weitzenbock_residual(R, FiberGrid(c, nf, L), s, probes, cfg.integer("run.seed"));
        double b = weitzenbock_residual(R, FiberGrid(c, 2 * nf, L), s, probes, cfg.integer("run.seed"));
        double ratio = a / b;
        ok = ok && ratio >= 1.7 && ratio <= 2.3;
        rows.push_back({{"codim", c}, {"Nf", {nf, 2 * nf}}, {"residual", {a, b}}, {"ratio", ratio}});
        gp.push_back({static_cast<double>(c), static_cast<double>(nf), a});
        gp.push_back({static_cast<double>(c), static_cast<double>(2 * nf), b});
        o.summary.push_back("codim " + std::to_string(c) + ": residual " + num(a) + " -> " + num(b) + ", ratio " + num(ratio));
    }
    write_gp(out / "weitzenbock.gp", "Weitzenbock residual under refinement", {"codim", "Nf", "residual"}, gp);
    o.results["s"] = s;
    o.results["L"] = L;
    o.results["rows"] = rows;
    o.contracts["ratio_in_window_1.7_2.3"] = ok;
    return o;
}

Outcome witten_spectrum_cmd(const RunConfig& cfg, const fs::path& out) {
    Outcome o;
    ScalarFunction f = ScalarFunction::lookup(cfg.str("problem.f"));
    TorusGrid g = torus_from(cfg, f);
    auto S = cfg.list("experiment.s");
    int k = cfg.integer("solver.k");
    SolverOptions so = solver_from(cfg);
    SpectralFlow sf = spectral_flow(g, f, S, k, so, cfg.num("experiment.s_threshold"));
    o.results["grid"] = g.to_json();
    o.results["f"] = f.expression();
    o.results["flow"] = sf.to_json();
    auto ev = open_out(out / "spectra.csv"), od = open_out(out / "spectra_odd.csv");
    ev << "s,index,eigenvalue,residual\n";
    od << "s,index,eigenvalue,residual\n";
    std::vector<std::vector<double>> gp;
    for (const auto& r : sf.rows) {
        append_spectrum_csv(ev, r.s, r.even.eig);
        append_spectrum_csv(od, r.s, r.odd.eig);
        for (int i = 0; i < r.k; ++i) gp.push_back({r.s, static_cast<double>(i), r.even.eig.values(i), r.odd.eig.values(i)});
        o.summary.push_back("s " + num(r.s) + ": N0 " + std::to_string(r.N0()) + ", N1 " + std::to_string(r.N1()) +
                            ", gap ratio " + num(r.gap_ratio()));
    }
    write_gp(out / "spectrum.gp", "lowest eigenvalues of D_s^T D_s (even) and D_s D_s^T (odd)", {"s", "index", "even", "odd"}, gp);
    if (cfg.flag("output.coo")) {
        WittenFamily fam(g, f);
        for (double s : S) write_coo(fam.at(s).Ds, (out / ("Ds_s" + num(s) + ".coo")).string());
    }
    o.contracts["gap_found"] = std::none_of(sf.status.begin(), sf.status.end(), [](const std::string& s) { return s == "failed"; });
    o.inconclusive = sf.verdict == "inconclusive";
    if (S.size() > 1) o.contracts["counts_stable"] = sf.counts_stable;
    if (S.size() > 1 && sf.above_gap_slope != 0.0) o.contracts["above_gap_growth_slope_ge_0.8"] = sf.above_gap_slope >= 0.8;
    try {
        CriticalReport cr = find_critical_set(g, f);
        const auto& last = sf.rows.back();
        o.results["critical"] = cr.to_json();
        if (last.gap_found()) {
            int numeric = last.N0() - last.N1();
            o.results["index_numeric"] = numeric;
            o.results["index_topological"] = cr.index_sum();
            o.contracts["index_match"] = numeric == cr.index_sum();
            o.summary.push_back("index " + std::to_string(numeric) + " vs sum (-1)^q chi = " + std::to_string(cr.index_sum()));
        }
    } catch (const StructureError& e) {
        o.results["critical_error"] = e.what();
        o.summary.push_back(std::string("critical set not classified: ") + e.what());
    }
    return o;
}

Outcome concentration_cmd(const RunConfig& cfg, const fs::path& out) {
    Outcome o;
    ScalarFunction f = ScalarFunction::lookup(cfg.str("problem.f"));
    TorusGrid g = torus_from(cfg, f);
    auto S = cfg.list("experiment.s");
    auto deltas = cfg.list("experiment.delta");
    int k = cfg.integer("solver.k");
    SolverOptions so = solver_from(cfg);
    CriticalReport cr = find_critical_set(g, f);
    WittenFamily fam(g, f);
    std::vector<std::vector<std::pair<double, double>>> prof(S.size());
    std::vector<EigenResult> eig(S.size());
    parallel_for(static_cast<int>(S.size()), [&](int i) {
        SideSpectrum side = solve_side(normal_operator(fam.at(S[i]).Ds), k, so);
        eig[i] = side.eig;
        prof[i] = concentration_profile(even_field(g, side.eig.vectors.col(0)), cr, deltas);
    });
    auto csv = open_out(out / "concentration.csv");
    csv << "s,delta,outside_mass\n";
    std::vector<std::vector<double>> gp;
    Json rows = Json::array();
    for (size_t i = 0; i < S.size(); ++i) {
        Json pr = Json::array();
        for (const auto& [d, m] : prof[i]) {
            csv << S[i] << "," << d << "," << m << "\n";
            gp.push_back({S[i], d, m, std::log(m)});
            pr.push_back({{"delta", d}, {"outside_mass", m}});
        }
        rows.push_back({{"s", S[i]}, {"profile", pr}, {"eigenvalues", eig[i].value_list()}, {"converged", eig[i].all_converged()}});
    }
    write_gp(out / "concentration.gp", "outside mass of the lowest even eigenvector", {"s", "delta", "mass", "log_mass"}, gp);
    o.results["rows"] = rows;
    o.results["critical"] = cr.to_json();
    size_t di = std::find(deltas.begin(), deltas.end(), 0.5) - deltas.begin();
    if (di == deltas.size()) di = 0;
    std::vector<double> lm;
    for (size_t i = 0; i < S.size(); ++i) lm.push_back(std::log(prof[i][di].second));
    bool decreasing = true, concave = true;
    for (size_t i = 1; i < lm.size(); ++i) decreasing = decreasing && lm[i] < lm[i - 1];
    for (size_t i = 2; i < lm.size(); ++i)
        concave = concave && (lm[i] - lm[i - 1]) / (S[i] - S[i - 1]) <= (lm[i - 1] - lm[i - 2]) / (S[i - 1] - S[i - 2]);
    double first = prof.front()[di].second, last = prof.back()[di].second;
    o.contracts["log_mass_decreasing"] = decreasing;
    if (S.size() >= 3) o.contracts["log_mass_concave"] = concave;
    if (S.size() >= 2) o.contracts["inverse_s_scaling"] = last <= first * S.front() / S.back();
    o.contracts["concentrated_at_max_s"] = last < 0.02;
    for (size_t i = 0; i < S.size(); ++i)
        o.summary.push_back("s " + num(S[i]) + ": outside mass at delta " + num(deltas[di]) + " = " + num(prof[i][di].second));
    return o;
}

Outcome index_cmd(const RunConfig& cfg, const fs::path& out) {
    Outcome o;
    ScalarFunction f = ScalarFunction::lookup(cfg.str("problem.f"));
    TorusGrid g = torus_from(cfg, f);
    double s = cfg.list("experiment.s").back();
    IndexExperiment ie;
    try {
        ie = index_experiment(g, f, s, cfg.integer("solver.k"), solver_from(cfg));
    } catch (const StructureError& e) {
        if (std::string(e.what()).find("no spectral gap") != std::string::npos && s < cfg.num("experiment.s_threshold")) {
            o.inconclusive = true;
            o.results["error"] = e.what();
            o.summary.push_back(e.what());
            return o;
        }
        throw;
    }
    write_critical_csv(ie.critical, (out / "critical.csv").string());
    auto csv = open_out(out / "spectra.csv");
    csv << "s,index,eigenvalue,residual\n";
    append_spectrum_csv(csv, s, ie.spectrum.even.eig);
    o.results = ie.to_json();
    o.results["grid"] = g.to_json();
    o.contracts["index_match"] = ie.match;
    o.contracts["counts_match_induced_kernels"] = ie.counts_match;
    auto pc = ie.critical.point_counts();
    std::string counts;
    for (size_t i = 0; i < pc.size(); ++i) counts += (i ? "," : "") + std::to_string(pc[i]);
    o.summary.push_back("N0 " + std::to_string(ie.spectrum.N0()) + ", N1 " + std::to_string(ie.spectrum.N1()) +
                        " (predicted " + std::to_string(ie.predicted_n0) + ", " + std::to_string(ie.predicted_n1) + ")");
    o.summary.push_back("index " + std::to_string(ie.index_numeric) + " vs sum (-1)^q chi = " + std::to_string(ie.index_topological) +
                        "; points by index (" + counts + ")");
    return o;
}

Outcome approx_section_cmd(const RunConfig& cfg, const fs::path& out) {
    Outcome o;
    ScalarFunction f = ScalarFunction::lookup(cfg.str("problem.f"));
    TorusGrid g = torus_from(cfg, f);
    auto S = cfg.list("experiment.s");
    double eps = cfg.num("experiment.eps");
    CriticalReport cr = find_critical_set(g, f);
    size_t which = 0;
    if (cfg.str("experiment.component") == "auto") {
        which = cr.components.size();
        for (size_t i = 0; i < cr.components.size() && which == cr.components.size(); ++i)
            if (cr.components[i].type == "circle") which = i;
        if (which == cr.components.size()) which = 0;
    } else {
        which = static_cast<size_t>(cfg.integer("experiment.component"));
    }
    WittenFamily fam(g, f);
    std::vector<double> corr, unc;
    Json rows = Json::array();
    auto csv = open_out(out / "est1.csv");
    csv << "s,corrected,uncorrected\n";
    std::vector<std::vector<double>> gp;
    bool below = true;
    for (double s : S) {
        ApproxOptions on, off;
        off.corrected = false;
        auto a = build_approx_eigensection(g, f, cr, which, s, eps, on);
        auto b = build_approx_eigensection(g, f, cr, which, s, eps, off);
        a.residual = section_residual(fam, s, a.eta);
        b.residual = section_residual(fam, s, b.eta);
        corr.push_back(a.residual);
        unc.push_back(b.residual);
        below = below && a.residual < b.residual;
        csv << s << "," << a.residual << "," << b.residual << "\n";
        gp.push_back({s, a.residual, b.residual});
        rows.push_back({{"s", s}, {"corrected", a.to_json()}, {"uncorrected", b.to_json()}});
        o.summary.push_back("s " + num(s) + ": residual " + num(a.residual) + " (uncorrected " + num(b.residual) + ")");
    }
    write_gp(out / "est1.gp", "|D_s eta| / |eta| for spliced sections", {"s", "corrected", "uncorrected"}, gp);
    o.results["component"] = cr.components[which].to_json();
    o.results["rows"] = rows;
    o.contracts["corrected_below_uncorrected"] = below;
    if (S.size() >= 3) {
        double slope = est1_check(S, corr);
        o.results["slope"] = slope;
        o.contracts["est1_slope_le_-0.45"] = slope <= -0.45;
        o.summary.push_back("fitted slope " + num(slope));
    }
    return o;
}

Outcome gap_lemma_cmd(const RunConfig& cfg, const fs::path&) {
    Outcome o;
    int count = cfg.integer("experiment.instances"), dim = cfg.integer("experiment.dim");
    Rng rng(static_cast<std::uint64_t>(cfg.integer("run.seed")));
    int certified = 0;
    Json rows = Json::array();
    for (int i = 0; i < count; ++i) {
        GapInstance inst = random_gap_instance(rng, dim);
        GapLemmaReport rep = gap_lemma_check(inst.L, inst.V, inst.C1, inst.C2);
        certified += rep.status == "certified";
        Json j = rep.to_json();
        j["C1"] = inst.C1;
        j["C2"] = inst.C2;
        j["k"] = inst.V.cols();
        rows.push_back(j);
    }
    o.results["instances"] = rows;
    o.results["certified"] = certified;
    o.contracts["all_certified"] = certified == count;
    o.summary.push_back(std::to_string(certified) + "/" + std::to_string(count) + " instances certified");
    return o;
}

Outcome all_acceptance(const RunConfig&, const fs::path&) {
    Outcome o;
    Json rows = Json::array();
    for (const auto& [name, fn] : acceptance::registry()) {
        acceptance::Result r = fn();
        rows.push_back(r.to_json());
        o.contracts[std::to_string(r.id) + "_" + name] = r.passed;
        o.summary.push_back(acceptance::line(r));
        std::cout << o.summary.back() << std::endl;
    }
    o.results["criteria"] = rows;
    return o;
}

const std::vector<Subcommand>& subcommands() {
    static const std::vector<std::pair<std::string, std::string>> solver{
        {"solver.method", "lobpcg"}, {"solver.tol", "1e-10"}, {"solver.max_iter", "5000"}, {"solver.min_ratio", "10"}};
    auto with = [&](std::vector<std::pair<std::string, std::string>> d) {
        d.insert(d.end(), solver.begin(), solver.end());
        return d;
    };
    static const std::vector<Subcommand> subs{
        {"verify-clifford", "Clifford relations and C-ladders of Witten model jets", {{"problem.n", "2"}, {"problem.lambda", "1"}},
         verify_clifford},
        {"oscillator", "vertical model operator spectrum against the oscillator ladder",
         with({{"problem.codim", "1"}, {"problem.lambda", "1"}, {"problem.q", "0"}, {"problem.nf", "512"}, {"problem.L", "auto"},
               {"experiment.s", "4,16,64"}, {"solver.k", "5"}}),
         oscillator},
        {"weitzenbock", "Weitzenbock residual under fiber refinement",
         {{"problem.codim", "1,2"}, {"problem.lambda", "1"}, {"problem.L", "auto"}, {"experiment.s", "4"}, {"experiment.probes", "20"}},
         weitzenbock},
        {"witten-spectrum", "low spectrum, cluster counts and gap of the Witten operator",
         with({{"problem.f", "cos_x_plus_cos_y"}, {"problem.grid", "64"}, {"experiment.s", "32"}, {"solver.k", "8"},
               {"experiment.s_threshold", "8"}, {"output.coo", "false"}}),
         witten_spectrum_cmd},
        {"concentration", "outside-tube mass of the lowest even eigenvector",
         with({{"problem.f", "cos_x_plus_cos_y"}, {"problem.grid", "256"}, {"experiment.s", "16,32,64"},
               {"experiment.delta", "0.25,0.5,1.0"}, {"solver.k", "3"}}),
         concentration_cmd},
        {"index", "numeric index against the critical-set count",
         with({{"problem.f", "bott_mixed"}, {"problem.grid", "64"}, {"experiment.s", "48"}, {"solver.k", "8"},
               {"experiment.s_threshold", "8"}}),
         index_cmd},
        {"approx-section", "spliced approximate eigensections and their residual decay",
         {{"problem.f", "bott_mixed"}, {"problem.grid", "4096x128"}, {"experiment.s", "8,16,32,64"}, {"experiment.eps", "0.8"},
          {"experiment.component", "auto"}},
         approx_section_cmd},
        {"gap-lemma", "finite-dimensional gap lemma on seeded random instances",
         {{"experiment.instances", "50"}, {"experiment.dim", "100"}}, gap_lemma_cmd},
        {"all-acceptance", "run every acceptance criterion", {}, all_acceptance},
    };
    return subs;
}

std::string timestamp() {
    auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::ostringstream o;
    o << std::put_time(std::gmtime(&now), "%Y-%m-%dT%H:%M:%SZ");
    return o.str();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Localization experiments for Witten-deformed Dirac operators on flat tori"};
    app.require_subcommand(1, 1);
    std::string config_path, f, grid, s_values, out_dir, method;
    int n = 0, k = 0;
    long seed = -1;
    std::vector<std::string> overrides;
    int verbosity = 1;
    app.add_option("--config", config_path, "key=value config file with [section] headers");
    app.add_option("--set", overrides, "override, e.g. --set solver.tol=1e-9 (repeatable)")->allow_extra_args(false);
    app.add_option("--f", f, "function: registry name or expression");
    app.add_option("--grid", grid, "grid sizes, e.g. 64 or 4096x128");
    app.add_option("--n", n, "dimension");
    app.add_option("--s", s_values, "s value or comma list");
    app.add_option("--k", k, "eigenpairs per side");
    app.add_option("--method", method, "lobpcg | lanczos | dense_oracle");
    app.add_option("--out", out_dir, "output directory");
    app.add_option("--seed", seed, "seed");
    app.add_option("-v,--verbosity", verbosity, "0 quiet, 1 summary, 2 config echo");
    std::map<std::string, const Subcommand*> by_cli;
    for (const auto& sc : subcommands()) {
        auto* c = app.add_subcommand(sc.name, sc.help);
        c->fallthrough();
        by_cli[sc.name] = &sc;
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }
    const Subcommand* sub = by_cli.at(app.get_subcommands().front()->get_name());

    RunConfig cfg;
    fs::path out;
    try {
        if (!config_path.empty()) cfg.load_file(config_path);
        if (!f.empty()) cfg.set("problem.f", f);
        if (!grid.empty()) cfg.set("problem.grid", grid);
        if (n > 0) cfg.set("problem.n", std::to_string(n));
        if (!s_values.empty()) cfg.set("experiment.s", s_values);
        if (k > 0) cfg.set("solver.k", std::to_string(k));
        if (!method.empty()) cfg.set("solver.method", method);
        if (!out_dir.empty()) cfg.set("output.dir", out_dir);
        if (seed >= 0) cfg.set("run.seed", std::to_string(seed));
        cfg.set("run.verbosity", std::to_string(verbosity));
        for (const auto& kv : overrides) cfg.set_assignment(kv);
        for (const auto& [key, val] : sub->defaults) cfg.set_default(key, val);
        cfg.set_default("run.seed", "1");
        cfg.set_default("output.dir", "dirac_out/" + sub->name);
        verbosity = cfg.integer("run.verbosity");
        out = cfg.str("output.dir");
        fs::create_directories(out);
    } catch (const std::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    }

    Outcome o;
    std::string status;
    int code = 0;
    try {
        o = sub->run(cfg, out);
        bool all = std::all_of(o.contracts.begin(), o.contracts.end(), [](const auto& kv) { return kv.second; });
        status = !all ? "fail" : o.inconclusive ? "inconclusive" : "pass";
        code = !all ? 1 : o.inconclusive ? 3 : 0;
    } catch (const InputError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const StructureError& e) {
        o.results["error"] = e.what();
        o.summary.push_back(std::string("refused: ") + e.what());
        status = "fail";
        code = 1;
    }

    Json report{{"subcommand", sub->name}, {"config", cfg.echo()}, {"results", o.results},
                {"contracts", o.contracts}, {"status", status}, {"timestamp", timestamp()}};
    {
        std::ofstream rj(out / "report.json");
        rj << report.dump(2) << "\n";
    }
    if (verbosity >= 2) std::cout << "config " << cfg.echo().dump() << "\n";
    if (verbosity >= 1) {
        if (sub->name != "all-acceptance")
            for (const auto& line : o.summary) std::cout << line << "\n";
        for (const auto& [name, ok] : o.contracts) std::cout << (ok ? "PASS " : "FAIL ") << name << "\n";
        std::cout << "status " << status << " (report " << (out / "report.json").string() << ")\n";
    }
    return code;
}
