#ifndef DIRAC_CONFIG_HPP
#define DIRAC_CONFIG_HPP

#include <fstream>
#include <map>
#include <sstream>

#include "common.hpp"

namespace dirac {

/**
 * Flat run configuration. Files use [section] headers and key = value lines ('#' and
 * ';' start comments); every key is stored as section.key. Unknown keys are rejected.
 */
class RunConfig {
public:
    static const std::map<std::string, std::string>& known_keys() {
        static const std::map<std::string, std::string> keys{
            {"problem.f", "registry name or expression in x, y, z"},
            {"problem.grid", "torus sizes, e.g. 64 or 64x64 or 4096,128"},
            {"problem.n", "torus or module dimension"},
            {"problem.codim", "fiber codimension list"},
            {"problem.lambda", "normal rate of model jets"},
            {"problem.q", "Morse index of model jets"},
            {"problem.nf", "fiber cells per axis"},
            {"problem.L", "fiber half-width, or auto for 8/sqrt(s)"},
            {"experiment.s", "s value or ascending list"},
            {"experiment.delta", "tube radii"},
            {"experiment.eps", "splice radius"},
            {"experiment.component", "critical component index, or auto"},
            {"experiment.s_threshold", "below this s a missing gap is inconclusive"},
            {"experiment.probes", "probe count for the Weitzenbock residual"},
            {"experiment.instances", "gap lemma instance count"},
            {"experiment.dim", "gap lemma dimension"},
            {"solver.k", "eigenpairs per side"},
            {"solver.method", "lobpcg, lanczos or dense_oracle"},
            {"solver.tol", "relative residual tolerance"},
            {"solver.max_iter", "iteration cap"},
            {"solver.min_ratio", "gap ratio threshold"},
            {"output.dir", "directory for report.json and data files"},
            {"output.coo", "also write D_s in coordinate format (true/false)"},
            {"run.seed", "seed for every randomized routine"},
            {"run.verbosity", "0 quiet, 1 summary, 2 config echo"},
        };
        return keys;
    }

    void set(const std::string& key, const std::string& value) {
        if (!known_keys().count(key)) throw InputError("unknown config key '" + key + "'");
        values_[key] = value;
    }

    /** key=value as given on the command line. */
    void set_assignment(const std::string& kv) {
        auto eq = kv.find('=');
        if (eq == std::string::npos) throw InputError("override '" + kv + "' is not key=value");
        set(trim(kv.substr(0, eq)), trim(kv.substr(eq + 1)));
    }

    void load_file(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw InputError("cannot read config file " + path);
        std::stringstream ss;
        ss << in.rdbuf();
        load_string(ss.str(), path);
    }

    void load_string(const std::string& text, const std::string& origin = "<string>") {
        std::istringstream in(text);
        std::string raw, section;
        int lineno = 0;
        while (std::getline(in, raw)) {
            ++lineno;
            std::string line = raw;
            auto hash = line.find_first_of("#;");
            if (hash != std::string::npos) line = line.substr(0, hash);
            line = trim(line);
            if (line.empty()) continue;
            auto where = origin + ":" + std::to_string(lineno);
            if (line.front() == '[') {
                if (line.back() != ']') throw InputError(where + ": malformed section header");
                section = trim(line.substr(1, line.size() - 2));
                continue;
            }
            auto eq = line.find('=');
            if (eq == std::string::npos) throw InputError(where + ": expected key = value");
            std::string key = trim(line.substr(0, eq));
            if (!section.empty()) key = section + "." + key;
            try {
                set(key, trim(line.substr(eq + 1)));
            } catch (const InputError& e) {
                throw InputError(where + ": " + e.what());
            }
        }
    }

    void set_default(const std::string& key, const std::string& value) {
        if (!known_keys().count(key)) throw InputError("unknown default key '" + key + "'");
        if (!values_.count(key)) values_[key] = value;
    }

    bool has(const std::string& key) const { return values_.count(key) > 0; }

    std::string str(const std::string& key) const {
        auto it = values_.find(key);
        if (it == values_.end()) throw InputError("missing config key '" + key + "'");
        return it->second;
    }

    double num(const std::string& key) const {
        std::string v = str(key);
        try {
            size_t used = 0;
            double d = std::stod(v, &used);
            if (used != v.size()) throw std::invalid_argument("trailing");
            return d;
        } catch (const std::exception&) {
            throw InputError("config key '" + key + "': '" + v + "' is not a number");
        }
    }

    int integer(const std::string& key) const {
        double d = num(key);
        if (d != std::round(d)) throw InputError("config key '" + key + "' must be an integer");
        return static_cast<int>(d);
    }

    bool flag(const std::string& key) const {
        std::string v = str(key);
        if (v == "true" || v == "1" || v == "yes") return true;
        if (v == "false" || v == "0" || v == "no") return false;
        throw InputError("config key '" + key + "': '" + v + "' is not a boolean");
    }

    /** Comma- or space-separated numbers. */
    std::vector<double> list(const std::string& key) const {
        std::string v = str(key);
        for (char& ch : v)
            if (ch == ',') ch = ' ';
        std::istringstream in(v);
        std::vector<double> out;
        std::string tok;
        while (in >> tok) {
            try {
                size_t used = 0;
                out.push_back(std::stod(tok, &used));
                if (used != tok.size()) throw std::invalid_argument("trailing");
            } catch (const std::exception&) {
                throw InputError("config key '" + key + "': '" + tok + "' is not a number");
            }
        }
        if (out.empty()) throw InputError("config key '" + key + "' is empty");
        return out;
    }

    /** Grid sizes separated by x, comma or space. */
    std::vector<int> sizes(const std::string& key) const {
        std::string v = str(key);
        for (char& ch : v)
            if (ch == 'x' || ch == 'X' || ch == ',') ch = ' ';
        std::istringstream in(v);
        std::vector<int> out;
        std::string tok;
        while (in >> tok) {
            try {
                size_t used = 0;
                int n = std::stoi(tok, &used);
                if (used != tok.size()) throw std::invalid_argument("trailing");
                out.push_back(n);
            } catch (const std::exception&) {
                throw InputError("config key '" + key + "': '" + tok + "' is not a grid size");
            }
        }
        if (out.empty()) throw InputError("config key '" + key + "' is empty");
        return out;
    }

    Json echo() const {
        Json j = Json::object();
        for (const auto& [k, v] : values_) j[k] = v;
        return j;
    }

private:
    std::map<std::string, std::string> values_;

    static std::string trim(const std::string& s) {
        size_t a = s.find_first_not_of(" \t\r\n");
        if (a == std::string::npos) return "";
        size_t b = s.find_last_not_of(" \t\r\n");
        return s.substr(a, b - a + 1);
    }
};

}  // namespace dirac

#endif
