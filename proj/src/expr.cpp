#include "qgfbsde/expr.hpp"

#include "qgfbsde/error.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <functional>

namespace qgfbsde {

using detail::Node;
using detail::NodeKind;
using NodePtr = std::shared_ptr<const Node>;

std::string Variable::name() const {
    switch (kind) {
    case VarKind::t: return "t";
    case VarKind::x: return "x";
    case VarKind::y: return "y";
    case VarKind::z: return "z" + std::to_string(index);
    }
    return "?";
}

std::string format_number(double v) {
    std::array<char, 64> buf{};
    auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    if (ec != std::errc{}) return "nan";
    return std::string(buf.data(), end);
}

namespace {

const char* unary_name(UnaryOp op) {
    switch (op) {
    case UnaryOp::neg: return "neg";
    case UnaryOp::exp: return "exp";
    case UnaryOp::log: return "log";
    case UnaryOp::sqrt: return "sqrt";
    case UnaryOp::sin: return "sin";
    case UnaryOp::cos: return "cos";
    case UnaryOp::tanh: return "tanh";
    }
    return "?";
}

char binary_symbol(BinaryOp op) {
    switch (op) {
    case BinaryOp::add: return '+';
    case BinaryOp::sub: return '-';
    case BinaryOp::mul: return '*';
    case BinaryOp::div: return '/';
    case BinaryOp::pow: return '^';
    }
    return '?';
}

NodePtr make_const(double v) {
    auto n = std::make_shared<Node>();
    n->kind = NodeKind::constant;
    n->value = v;
    return n;
}

NodePtr make_var(Variable v) {
    auto n = std::make_shared<Node>();
    n->kind = NodeKind::variable;
    n->var = v;
    return n;
}

NodePtr make_unary(UnaryOp op, NodePtr arg) {
    auto n = std::make_shared<Node>();
    n->kind = NodeKind::unary;
    n->uop = op;
    n->lhs = std::move(arg);
    return n;
}

NodePtr make_binary(BinaryOp op, NodePtr lhs, NodePtr rhs) {
    auto n = std::make_shared<Node>();
    n->kind = NodeKind::binary;
    n->bop = op;
    n->lhs = std::move(lhs);
    n->rhs = std::move(rhs);
    return n;
}

// ---------------------------------------------------------------------------
// Compiled postfix program

enum class OpCode : std::uint8_t {
    constant, var_t, var_x, var_y, var_z,
    neg, exp, log, sqrt, sin, cos, tanh,
    add, sub, mul, div, pow
};

struct Instr {
    OpCode op;
    int index = 0;
    double value = 0.0;
    const Node* source = nullptr;
};

} // namespace

namespace detail {
struct Program {
    std::vector<Instr> code;
    std::size_t max_depth = 0;
};
} // namespace detail

namespace {

OpCode opcode_of(UnaryOp op) {
    switch (op) {
    case UnaryOp::neg: return OpCode::neg;
    case UnaryOp::exp: return OpCode::exp;
    case UnaryOp::log: return OpCode::log;
    case UnaryOp::sqrt: return OpCode::sqrt;
    case UnaryOp::sin: return OpCode::sin;
    case UnaryOp::cos: return OpCode::cos;
    case UnaryOp::tanh: return OpCode::tanh;
    }
    return OpCode::neg;
}

OpCode opcode_of(BinaryOp op) {
    switch (op) {
    case BinaryOp::add: return OpCode::add;
    case BinaryOp::sub: return OpCode::sub;
    case BinaryOp::mul: return OpCode::mul;
    case BinaryOp::div: return OpCode::div;
    case BinaryOp::pow: return OpCode::pow;
    }
    return OpCode::add;
}

std::size_t emit(const Node& n, std::vector<Instr>& code) {
    switch (n.kind) {
    case NodeKind::constant:
        code.push_back({OpCode::constant, 0, n.value, &n});
        return 1;
    case NodeKind::variable: {
        OpCode op = OpCode::var_x;
        switch (n.var.kind) {
        case VarKind::t: op = OpCode::var_t; break;
        case VarKind::x: op = OpCode::var_x; break;
        case VarKind::y: op = OpCode::var_y; break;
        case VarKind::z: op = OpCode::var_z; break;
        }
        code.push_back({op, n.var.index, 0.0, &n});
        return 1;
    }
    case NodeKind::unary: {
        std::size_t depth = emit(*n.lhs, code);
        code.push_back({opcode_of(n.uop), 0, 0.0, &n});
        return depth;
    }
    case NodeKind::binary: {
        if (n.bop == BinaryOp::pow) {
            // exponent is always a constant node
            std::size_t depth = emit(*n.lhs, code);
            code.push_back({OpCode::pow, 0, n.rhs->value, &n});
            return depth;
        }
        std::size_t dl = emit(*n.lhs, code);
        std::size_t dr = emit(*n.rhs, code);
        code.push_back({opcode_of(n.bop), 0, 0.0, &n});
        return std::max(dl, dr + 1);
    }
    }
    return 0;
}

std::shared_ptr<const detail::Program> compile(const Node& root) {
    auto p = std::make_shared<detail::Program>();
    p->max_depth = emit(root, p->code);
    return p;
}

std::string print_node(const Node& n);

[[noreturn]] void domain_error(const Instr& ins, const std::string& what, double arg) {
    throw EvalError(what + " (argument " + format_number(arg) + ") in '" +
                    print_node(*ins.source) + "'");
}

double run(const detail::Program& prog, const Bindings& b, double* stack) {
    std::size_t sp = 0;
    for (const Instr& ins : prog.code) {
        switch (ins.op) {
        case OpCode::constant: stack[sp++] = ins.value; break;
        case OpCode::var_t: stack[sp++] = b.t; break;
        case OpCode::var_x: stack[sp++] = b.x; break;
        case OpCode::var_y: stack[sp++] = b.y; break;
        case OpCode::var_z:
            if (static_cast<std::size_t>(ins.index) > b.z.size())
                throw EvalError("unbound variable z" + std::to_string(ins.index));
            stack[sp++] = b.z[static_cast<std::size_t>(ins.index - 1)];
            break;
        case OpCode::neg: stack[sp - 1] = -stack[sp - 1]; break;
        case OpCode::exp: stack[sp - 1] = std::exp(stack[sp - 1]); break;
        case OpCode::log:
            if (!(stack[sp - 1] > 0.0)) domain_error(ins, "log of non-positive value", stack[sp - 1]);
            stack[sp - 1] = std::log(stack[sp - 1]);
            break;
        case OpCode::sqrt:
            if (!(stack[sp - 1] >= 0.0)) domain_error(ins, "sqrt of negative value", stack[sp - 1]);
            stack[sp - 1] = std::sqrt(stack[sp - 1]);
            break;
        case OpCode::sin: stack[sp - 1] = std::sin(stack[sp - 1]); break;
        case OpCode::cos: stack[sp - 1] = std::cos(stack[sp - 1]); break;
        case OpCode::tanh: stack[sp - 1] = std::tanh(stack[sp - 1]); break;
        case OpCode::add: --sp; stack[sp - 1] += stack[sp]; break;
        case OpCode::sub: --sp; stack[sp - 1] -= stack[sp]; break;
        case OpCode::mul: --sp; stack[sp - 1] *= stack[sp]; break;
        case OpCode::div:
            --sp;
            if (stack[sp] == 0.0) domain_error(ins, "division by zero", stack[sp]);
            stack[sp - 1] /= stack[sp];
            break;
        case OpCode::pow: {
            const double base = stack[sp - 1];
            const double e = ins.value;
            if (base < 0.0 && e != std::floor(e))
                domain_error(ins, "negative base with non-integer exponent", base);
            if (base == 0.0 && e < 0.0) domain_error(ins, "zero base with negative exponent", base);
            stack[sp - 1] = (e == 2.0) ? base * base : std::pow(base, e);
            break;
        }
        }
    }
    return stack[0];
}

// ---------------------------------------------------------------------------
// Printing

enum Prec : int { p_add = 1, p_mul = 2, p_unary = 3, p_pow = 4, p_atom = 5 };

int precedence(const Node& n) {
    switch (n.kind) {
    case NodeKind::constant: return n.value < 0.0 || std::signbit(n.value) ? p_unary : p_atom;
    case NodeKind::variable: return p_atom;
    case NodeKind::unary: return n.uop == UnaryOp::neg ? p_unary : p_atom;
    case NodeKind::binary:
        switch (n.bop) {
        case BinaryOp::add:
        case BinaryOp::sub: return p_add;
        case BinaryOp::mul:
        case BinaryOp::div: return p_mul;
        case BinaryOp::pow: return p_pow;
        }
    }
    return p_atom;
}

std::string wrap(const Node& child, bool paren) {
    std::string s = print_node(child);
    return paren ? "(" + s + ")" : s;
}

std::string print_node(const Node& n) {
    switch (n.kind) {
    case NodeKind::constant: return format_number(n.value);
    case NodeKind::variable: return n.var.name();
    case NodeKind::unary:
        if (n.uop == UnaryOp::neg) return "-" + wrap(*n.lhs, precedence(*n.lhs) < p_unary);
        return std::string(unary_name(n.uop)) + "(" + print_node(*n.lhs) + ")";
    case NodeKind::binary: {
        const int p = precedence(n);
        if (n.bop == BinaryOp::pow) {
            return wrap(*n.lhs, precedence(*n.lhs) <= p_pow) + "^" + print_node(*n.rhs);
        }
        return wrap(*n.lhs, precedence(*n.lhs) < p) + std::string(1, binary_symbol(n.bop)) +
               wrap(*n.rhs, precedence(*n.rhs) <= p);
    }
    }
    return {};
}

std::string sexpr_node(const Node& n) {
    switch (n.kind) {
    case NodeKind::constant: return format_number(n.value);
    case NodeKind::variable: return n.var.name();
    case NodeKind::unary: return "(" + std::string(unary_name(n.uop)) + " " + sexpr_node(*n.lhs) + ")";
    case NodeKind::binary:
        return "(" + std::string(1, binary_symbol(n.bop)) + " " + sexpr_node(*n.lhs) + " " +
               sexpr_node(*n.rhs) + ")";
    }
    return {};
}

bool any_node(const Node& n, const std::function<bool(const Node&)>& pred) {
    if (pred(n)) return true;
    if (n.lhs && any_node(*n.lhs, pred)) return true;
    if (n.rhs && any_node(*n.rhs, pred)) return true;
    return false;
}

bool equal_nodes(const Node& a, const Node& b) {
    if (a.kind != b.kind) return false;
    switch (a.kind) {
    case NodeKind::constant: return a.value == b.value;
    case NodeKind::variable: return a.var == b.var;
    case NodeKind::unary: return a.uop == b.uop && equal_nodes(*a.lhs, *b.lhs);
    case NodeKind::binary:
        return a.bop == b.bop && equal_nodes(*a.lhs, *b.lhs) && equal_nodes(*a.rhs, *b.rhs);
    }
    return false;
}

std::optional<double> fold_constant(const Node& n) {
    if (any_node(n, [](const Node& m) { return m.kind == NodeKind::variable; })) return std::nullopt;
    try {
        auto prog = compile(n);
        std::vector<double> stack(prog->max_depth);
        const double v = run(*prog, Bindings{}, stack.data());
        if (std::isfinite(v)) return v;
    } catch (const EvalError&) {
    }
    return std::nullopt;
}

// ---------------------------------------------------------------------------
// Parser

class Parser {
public:
    explicit Parser(std::string_view src) : src_(src) {}

    NodePtr parse() {
        skip_ws();
        if (pos_ >= src_.size()) throw ParseError(pos_, "expected expression, found end of input");
        NodePtr e = parse_expr();
        skip_ws();
        if (pos_ < src_.size()) {
            if (src_[pos_] == ')') throw ParseError(pos_, "unmatched ')'");
            throw ParseError(pos_, "expected operator or end of input, found '" +
                                       std::string(1, src_[pos_]) + "'");
        }
        return e;
    }

private:
    std::string_view src_;
    std::size_t pos_ = 0;
    std::vector<std::size_t> open_parens_;

    void skip_ws() {
        while (pos_ < src_.size() && (src_[pos_] == ' ' || src_[pos_] == '\t' || src_[pos_] == '\n' ||
                                      src_[pos_] == '\r'))
            ++pos_;
    }

    bool peek(char c) {
        skip_ws();
        return pos_ < src_.size() && src_[pos_] == c;
    }

    [[noreturn]] void fail(const std::string& expected) {
        if (pos_ >= src_.size()) {
            if (!open_parens_.empty())
                throw ParseError(open_parens_.back(), "unclosed '(': " + expected + " before end of input");
            throw ParseError(pos_, expected + ", found end of input");
        }
        throw ParseError(pos_, expected + ", found '" + std::string(1, src_[pos_]) + "'");
    }

    NodePtr parse_expr() {
        NodePtr lhs = parse_term();
        while (true) {
            if (peek('+')) {
                ++pos_;
                lhs = make_binary(BinaryOp::add, lhs, parse_term());
            } else if (peek('-')) {
                ++pos_;
                lhs = make_binary(BinaryOp::sub, lhs, parse_term());
            } else {
                return lhs;
            }
        }
    }

    NodePtr parse_term() {
        NodePtr lhs = parse_unary();
        while (true) {
            if (peek('*')) {
                ++pos_;
                lhs = make_binary(BinaryOp::mul, lhs, parse_unary());
            } else if (peek('/')) {
                ++pos_;
                lhs = make_binary(BinaryOp::div, lhs, parse_unary());
            } else {
                return lhs;
            }
        }
    }

    NodePtr parse_unary() {
        if (peek('-')) {
            ++pos_;
            NodePtr arg = parse_unary();
            if (arg->kind == NodeKind::constant) return make_const(-arg->value);
            return make_unary(UnaryOp::neg, arg);
        }
        if (peek('+')) {
            ++pos_;
            return parse_unary();
        }
        return parse_power();
    }

    NodePtr parse_power() {
        NodePtr base = parse_primary();
        if (!peek('^')) return base;
        ++pos_;
        skip_ws();
        const std::size_t exp_pos = pos_;
        NodePtr exponent = parse_unary();
        std::optional<double> value = fold_constant(*exponent);
        if (!value) throw ParseError(exp_pos, "exponent of '^' must be a constant");
        return make_binary(BinaryOp::pow, base, make_const(*value));
    }

    NodePtr parse_primary() {
        skip_ws();
        if (pos_ >= src_.size()) fail("expected expression");
        const char c = src_[pos_];
        if (c == '(') {
            open_parens_.push_back(pos_);
            ++pos_;
            NodePtr inner = parse_expr();
            if (!peek(')')) fail("expected ')'");
            ++pos_;
            open_parens_.pop_back();
            return inner;
        }
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return parse_number();
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') return parse_identifier();
        fail("expected expression");
    }

    NodePtr parse_number() {
        const std::size_t start = pos_;
        auto digits = [&] {
            std::size_t n = 0;
            while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) {
                ++pos_;
                ++n;
            }
            return n;
        };
        std::size_t n = digits();
        if (pos_ < src_.size() && src_[pos_] == '.') {
            ++pos_;
            n += digits();
        }
        if (n == 0) throw ParseError(start, "malformed number");
        if (pos_ < src_.size() && (src_[pos_] == 'e' || src_[pos_] == 'E')) {
            std::size_t save = pos_;
            ++pos_;
            if (pos_ < src_.size() && (src_[pos_] == '+' || src_[pos_] == '-')) ++pos_;
            if (digits() == 0) pos_ = save; // 'e' belongs to something else
        }
        double v = 0.0;
        auto [ptr, ec] = std::from_chars(src_.data() + start, src_.data() + pos_, v);
        if (ec != std::errc{} || ptr != src_.data() + pos_) throw ParseError(start, "malformed number");
        return make_const(v);
    }

    NodePtr parse_identifier() {
        const std::size_t start = pos_;
        while (pos_ < src_.size() &&
               (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_'))
            ++pos_;
        const std::string_view id = src_.substr(start, pos_ - start);

        static constexpr std::pair<std::string_view, UnaryOp> functions[] = {
            {"exp", UnaryOp::exp}, {"log", UnaryOp::log}, {"sqrt", UnaryOp::sqrt},
            {"sin", UnaryOp::sin}, {"cos", UnaryOp::cos}, {"tanh", UnaryOp::tanh}};
        for (const auto& [name, op] : functions) {
            if (id != name) continue;
            if (!peek('(')) fail("expected '(' after function name '" + std::string(name) + "'");
            open_parens_.push_back(pos_);
            ++pos_;
            NodePtr arg = parse_expr();
            if (!peek(')')) fail("expected ')'");
            ++pos_;
            open_parens_.pop_back();
            return make_unary(op, arg);
        }
        if (id == "t") return make_var(Variable::t());
        if (id == "x") return make_var(Variable::x());
        if (id == "y") return make_var(Variable::y());
        if (id.size() >= 2 && id[0] == 'z' && id[1] != '0') {
            int k = 0;
            auto [ptr, ec] = std::from_chars(id.data() + 1, id.data() + id.size(), k);
            if (ec == std::errc{} && ptr == id.data() + id.size() && k >= 1) return make_var(Variable::z(k));
        }
        throw ParseError(start, "unknown identifier '" + std::string(id) + "'");
    }
};

// ---------------------------------------------------------------------------
// Simplifying constructors

std::optional<double> const_of(const NodePtr& n) {
    if (n->kind == NodeKind::constant) return n->value;
    return std::nullopt;
}

double apply_unary(UnaryOp op, double v) {
    switch (op) {
    case UnaryOp::neg: return -v;
    case UnaryOp::exp: return std::exp(v);
    case UnaryOp::log: return v > 0.0 ? std::log(v) : std::nan("");
    case UnaryOp::sqrt: return v >= 0.0 ? std::sqrt(v) : std::nan("");
    case UnaryOp::sin: return std::sin(v);
    case UnaryOp::cos: return std::cos(v);
    case UnaryOp::tanh: return std::tanh(v);
    }
    return std::nan("");
}

double apply_binary(BinaryOp op, double a, double b) {
    switch (op) {
    case BinaryOp::add: return a + b;
    case BinaryOp::sub: return a - b;
    case BinaryOp::mul: return a * b;
    case BinaryOp::div: return b != 0.0 ? a / b : std::nan("");
    case BinaryOp::pow:
        if ((a < 0.0 && b != std::floor(b)) || (a == 0.0 && b < 0.0)) return std::nan("");
        return std::pow(a, b);
    }
    return std::nan("");
}

NodePtr simplify_unary(UnaryOp op, const NodePtr& arg) {
    if (auto c = const_of(arg)) {
        const double v = apply_unary(op, *c);
        if (std::isfinite(v)) return make_const(v);
    }
    if (op == UnaryOp::neg && arg->kind == NodeKind::unary && arg->uop == UnaryOp::neg) return arg->lhs;
    return make_unary(op, arg);
}

NodePtr simplify_binary(BinaryOp op, const NodePtr& a, const NodePtr& b) {
    const auto ca = const_of(a);
    const auto cb = const_of(b);
    if (ca && cb) {
        const double v = apply_binary(op, *ca, *cb);
        if (std::isfinite(v)) return make_const(v);
    }
    switch (op) {
    case BinaryOp::add:
        if (ca && *ca == 0.0) return b;
        if (cb && *cb == 0.0) return a;
        break;
    case BinaryOp::sub:
        if (cb && *cb == 0.0) return a;
        if (ca && *ca == 0.0) return simplify_unary(UnaryOp::neg, b);
        break;
    case BinaryOp::mul:
        if ((ca && *ca == 0.0) || (cb && *cb == 0.0)) return make_const(0.0);
        if (ca && *ca == 1.0) return b;
        if (cb && *cb == 1.0) return a;
        if (ca && *ca == -1.0) return simplify_unary(UnaryOp::neg, b);
        if (cb && *cb == -1.0) return simplify_unary(UnaryOp::neg, a);
        break;
    case BinaryOp::div:
        if (ca && *ca == 0.0) return make_const(0.0);
        if (cb && *cb == 1.0) return a;
        break;
    case BinaryOp::pow:
        if (cb && *cb == 1.0) return a;
        if (cb && *cb == 0.0) return make_const(1.0);
        break;
    }
    return make_binary(op, a, b);
}

} // namespace

// ---------------------------------------------------------------------------
// Expression

Expression::Expression() : Expression(make_const(0.0)) {}

Expression::Expression(std::shared_ptr<const detail::Node> root)
    : root_(std::move(root)), program_(compile(*root_)) {}

Expression Expression::parse(std::string_view source) { return Expression(Parser(source).parse()); }

Expression Expression::from_node(std::shared_ptr<const detail::Node> root) { return Expression(std::move(root)); }

Expression Expression::constant(double value) { return Expression(make_const(value)); }

Expression Expression::variable(Variable v) {
    if (v.kind == VarKind::z && v.index < 1) throw ConfigError("z variable index must be >= 1");
    return Expression(make_var(v));
}

Expression Expression::unary(UnaryOp op, const Expression& arg) {
    return Expression(simplify_unary(op, arg.root_));
}

Expression Expression::binary(BinaryOp op, const Expression& lhs, const Expression& rhs) {
    if (op == BinaryOp::pow && !rhs.is_constant()) throw ConfigError("exponent of '^' must be a constant");
    NodePtr r = rhs.root_;
    if (op == BinaryOp::pow) r = make_const(*rhs.constant_value());
    return Expression(simplify_binary(op, lhs.root_, r));
}

double Expression::eval(const Bindings& b) const {
    const auto& prog = *program_;
    if (prog.max_depth <= 32) {
        std::array<double, 32> stack;
        return run(prog, b, stack.data());
    }
    std::vector<double> stack(prog.max_depth);
    return run(prog, b, stack.data());
}

std::string Expression::to_string() const { return print_node(*root_); }

std::string Expression::to_sexpr() const { return sexpr_node(*root_); }

bool Expression::depends_on(VarKind kind) const {
    return any_node(*root_, [kind](const Node& n) { return n.kind == NodeKind::variable && n.var.kind == kind; });
}

bool Expression::depends_on(Variable v) const {
    return any_node(*root_, [v](const Node& n) { return n.kind == NodeKind::variable && n.var == v; });
}

int Expression::max_z_index() const {
    int k = 0;
    any_node(*root_, [&k](const Node& n) {
        if (n.kind == NodeKind::variable && n.var.kind == VarKind::z) k = std::max(k, n.var.index);
        return false;
    });
    return k;
}

std::optional<double> Expression::constant_value() const {
    if (root_->kind == NodeKind::constant) return root_->value;
    return fold_constant(*root_);
}

bool Expression::structurally_equal(const Expression& other) const { return equal_nodes(*root_, *other.root_); }

Expression operator+(const Expression& a, const Expression& b) { return Expression::binary(BinaryOp::add, a, b); }
Expression operator-(const Expression& a, const Expression& b) { return Expression::binary(BinaryOp::sub, a, b); }
Expression operator*(const Expression& a, const Expression& b) { return Expression::binary(BinaryOp::mul, a, b); }
Expression operator/(const Expression& a, const Expression& b) { return Expression::binary(BinaryOp::div, a, b); }
Expression operator-(const Expression& a) { return Expression::unary(UnaryOp::neg, a); }

} // namespace qgfbsde
