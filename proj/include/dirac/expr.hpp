#ifndef DIRAC_EXPR_HPP
#define DIRAC_EXPR_HPP

#include <array>
#include <cctype>
#include <map>
#include <memory>

#include "common.hpp"

namespace dirac {

/** Value, gradient and Hessian in up to three variables (second-order forward mode). */
struct Jet2 {
    double v = 0;
    std::array<double, 3> g{};
    std::array<double, 9> H{};

    static Jet2 constant(double c) {
        Jet2 r;
        r.v = c;
        return r;
    }
    static Jet2 variable(double x, int i) {
        Jet2 r;
        r.v = x;
        r.g[i] = 1.0;
        return r;
    }
};

namespace detail {
/** Chain rule for a scalar function with derivatives f0, f1, f2 at a.v. */
inline Jet2 chain(const Jet2& a, double f0, double f1, double f2) {
    Jet2 r;
    r.v = f0;
    for (int i = 0; i < 3; ++i) r.g[i] = f1 * a.g[i];
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) r.H[3 * i + j] = f1 * a.H[3 * i + j] + f2 * a.g[i] * a.g[j];
    return r;
}
}  // namespace detail

inline Jet2 operator+(const Jet2& a, const Jet2& b) {
    Jet2 r;
    r.v = a.v + b.v;
    for (int i = 0; i < 3; ++i) r.g[i] = a.g[i] + b.g[i];
    for (int i = 0; i < 9; ++i) r.H[i] = a.H[i] + b.H[i];
    return r;
}
inline Jet2 operator-(const Jet2& a) {
    Jet2 r;
    r.v = -a.v;
    for (int i = 0; i < 3; ++i) r.g[i] = -a.g[i];
    for (int i = 0; i < 9; ++i) r.H[i] = -a.H[i];
    return r;
}
inline Jet2 operator-(const Jet2& a, const Jet2& b) { return a + (-b); }
inline Jet2 operator*(const Jet2& a, const Jet2& b) {
    Jet2 r;
    r.v = a.v * b.v;
    for (int i = 0; i < 3; ++i) r.g[i] = a.g[i] * b.v + a.v * b.g[i];
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            r.H[3 * i + j] = a.H[3 * i + j] * b.v + a.v * b.H[3 * i + j] + a.g[i] * b.g[j] + a.g[j] * b.g[i];
    return r;
}
inline Jet2 reciprocal(const Jet2& a) {
    double x = a.v;
    return detail::chain(a, 1.0 / x, -1.0 / (x * x), 2.0 / (x * x * x));
}
inline Jet2 operator/(const Jet2& a, const Jet2& b) { return a * reciprocal(b); }
inline Jet2 sin(const Jet2& a) { return detail::chain(a, std::sin(a.v), std::cos(a.v), -std::sin(a.v)); }
inline Jet2 cos(const Jet2& a) { return detail::chain(a, std::cos(a.v), -std::sin(a.v), -std::cos(a.v)); }
inline Jet2 exp(const Jet2& a) {
    double e = std::exp(a.v);
    return detail::chain(a, e, e, e);
}
inline Jet2 pow_real(const Jet2& a, double p) {
    double x = a.v;
    return detail::chain(a, std::pow(x, p), p * std::pow(x, p - 1), p * (p - 1) * std::pow(x, p - 2));
}

inline double pow_real(double a, double p) { return std::pow(a, p); }

/**
 * Arithmetic expressions in x, y, z.
 *
 *   expr    := term { ("+" | "-") term }
 *   term    := unary { ("*" | "/") unary }
 *   unary   := ("+" | "-") unary | power
 *   power   := primary [ "^" unary ]
 *   primary := number | "pi" | "x" | "y" | "z" | func "(" expr ")" | "(" expr ")"
 *   func    := "sin" | "cos" | "exp"
 *
 * Exponents must be constant (no variables); integer exponents are evaluated by
 * repeated multiplication so negative bases are allowed.
 */
class Expression {
public:
    explicit Expression(const std::string& text) : src_(text) {
        pos_ = 0;
        root_ = parse_expr();
        skip_ws();
        if (pos_ != src_.size()) fail("unexpected '" + std::string(1, src_[pos_]) + "'");
    }

    int dimension() const { return root_ ? root_->max_var + 1 : 0; }
    const std::string& text() const { return src_; }

    template <class T>
    T eval(const std::array<T, 3>& vars) const {
        return eval_node<T>(*root_, vars);
    }

private:
    enum class Op { Num, Var, Neg, Add, Sub, Mul, Div, Pow, Sin, Cos, Exp };
    struct Node {
        Op op;
        double num = 0;
        int var = 0;
        int max_var = -1;
        bool constant = true;
        std::unique_ptr<Node> a, b;
    };
    using P = std::unique_ptr<Node>;

    std::string src_;
    size_t pos_ = 0;
    P root_;

    [[noreturn]] void fail(const std::string& why) const {
        throw InputError("expression '" + src_ + "' at column " + std::to_string(pos_ + 1) + ": " + why);
    }
    void skip_ws() {
        while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_]))) ++pos_;
    }
    bool accept(char c) {
        skip_ws();
        if (pos_ < src_.size() && src_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }
    static P make(Op op, P a = nullptr, P b = nullptr) {
        auto n = std::make_unique<Node>();
        n->op = op;
        n->max_var = std::max(a ? a->max_var : -1, b ? b->max_var : -1);
        n->constant = (!a || a->constant) && (!b || b->constant);
        n->a = std::move(a);
        n->b = std::move(b);
        return n;
    }
    P parse_expr() {
        P lhs = parse_term();
        for (;;) {
            if (accept('+'))
                lhs = make(Op::Add, std::move(lhs), parse_term());
            else if (accept('-'))
                lhs = make(Op::Sub, std::move(lhs), parse_term());
            else
                return lhs;
        }
    }
    P parse_term() {
        P lhs = parse_unary();
        for (;;) {
            if (accept('*'))
                lhs = make(Op::Mul, std::move(lhs), parse_unary());
            else if (accept('/'))
                lhs = make(Op::Div, std::move(lhs), parse_unary());
            else
                return lhs;
        }
    }
    P parse_unary() {
        if (accept('-')) return make(Op::Neg, parse_unary());
        if (accept('+')) return parse_unary();
        return parse_power();
    }
    P parse_power() {
        P base = parse_primary();
        if (accept('^')) {
            P ex = parse_unary();
            if (!ex->constant) fail("exponent must be constant");
            return make(Op::Pow, std::move(base), std::move(ex));
        }
        return base;
    }
    P parse_primary() {
        skip_ws();
        if (pos_ >= src_.size()) fail("unexpected end of input");
        char ch = src_[pos_];
        if (accept('(')) {
            P e = parse_expr();
            if (!accept(')')) fail("expected ')'");
            return e;
        }
        if (std::isdigit(static_cast<unsigned char>(ch)) || ch == '.') {
            size_t used = 0;
            double v = 0;
            try {
                v = std::stod(src_.substr(pos_), &used);
            } catch (const std::exception&) {
                fail("bad number");
            }
            pos_ += used;
            auto n = make(Op::Num);
            n->num = v;
            return n;
        }
        if (std::isalpha(static_cast<unsigned char>(ch))) {
            size_t start = pos_;
            while (pos_ < src_.size() && std::isalnum(static_cast<unsigned char>(src_[pos_]))) ++pos_;
            std::string id = src_.substr(start, pos_ - start);
            if (id == "pi") {
                auto n = make(Op::Num);
                n->num = M_PI;
                return n;
            }
            if (id == "x" || id == "y" || id == "z") {
                auto n = make(Op::Var);
                n->var = id[0] - 'x';
                n->max_var = n->var;
                n->constant = false;
                return n;
            }
            static const std::map<std::string, Op> funcs{{"sin", Op::Sin}, {"cos", Op::Cos}, {"exp", Op::Exp}};
            auto it = funcs.find(id);
            if (it == funcs.end()) {
                pos_ = start;
                fail("unknown identifier '" + id + "'");
            }
            if (!accept('(')) fail("expected '(' after " + id);
            P arg = parse_expr();
            if (!accept(')')) fail("expected ')'");
            return make(it->second, std::move(arg));
        }
        fail("unexpected '" + std::string(1, ch) + "'");
    }

    template <class T>
    static T lift(double c) {
        if constexpr (std::is_same_v<T, double>)
            return c;
        else
            return T::constant(c);
    }

    template <class T>
    static T eval_node(const Node& n, const std::array<T, 3>& vars) {
        using std::cos;
        using std::exp;
        using std::sin;
        switch (n.op) {
            case Op::Num: return lift<T>(n.num);
            case Op::Var: return vars[n.var];
            case Op::Neg: return -eval_node<T>(*n.a, vars);
            case Op::Add: return eval_node<T>(*n.a, vars) + eval_node<T>(*n.b, vars);
            case Op::Sub: return eval_node<T>(*n.a, vars) - eval_node<T>(*n.b, vars);
            case Op::Mul: return eval_node<T>(*n.a, vars) * eval_node<T>(*n.b, vars);
            case Op::Div: return eval_node<T>(*n.a, vars) / eval_node<T>(*n.b, vars);
            case Op::Sin: return sin(eval_node<T>(*n.a, vars));
            case Op::Cos: return cos(eval_node<T>(*n.a, vars));
            case Op::Exp: return exp(eval_node<T>(*n.a, vars));
            case Op::Pow: {
                T base = eval_node<T>(*n.a, vars);
                double p = eval_node<double>(*n.b, std::array<double, 3>{});
                double ip = std::round(p);
                if (ip == p && std::abs(ip) <= 64) {
                    T r = lift<T>(1.0);
                    for (int i = 0; i < static_cast<int>(std::abs(ip)); ++i) r = r * base;
                    return ip < 0 ? lift<T>(1.0) / r : r;
                }
                return pow_real(base, p);
            }
        }
        return lift<T>(0.0);
    }
};

}  // namespace dirac

#endif
