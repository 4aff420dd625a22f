#pragma once

// Scalar expression language for model data: parse, evaluate, differentiate.
//
// Grammar (precedence high to low):
//   primary := number | t | x | y | z<k> | func '(' expr ')' | '(' expr ')'
//   power   := primary ['^' unary]          (right associative, constant exponent)
//   unary   := '-' unary | '+' unary | power
//   term    := unary (('*' | '/') unary)*
//   expr    := term (('+' | '-') term)*
// with func in {exp, log, sqrt, sin, cos, tanh}.

#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace qgfbsde {

enum class VarKind { t, x, y, z };

struct Variable {
    VarKind kind = VarKind::x;
    int index = 0; // 1-based component for z, 0 otherwise

    static constexpr Variable t() { return {VarKind::t, 0}; }
    static constexpr Variable x() { return {VarKind::x, 0}; }
    static constexpr Variable y() { return {VarKind::y, 0}; }
    static constexpr Variable z(int k) { return {VarKind::z, k}; }

    std::string name() const;
    friend bool operator==(const Variable&, const Variable&) = default;
};

/// Values for the free variables. `z` must cover every zk referenced.
struct Bindings {
    double t = 0.0;
    double x = 0.0;
    double y = 0.0;
    std::span<const double> z{};
};

enum class UnaryOp { neg, exp, log, sqrt, sin, cos, tanh };
enum class BinaryOp { add, sub, mul, div, pow };

namespace detail {
struct Node;
struct Program;
} // namespace detail

/// Immutable expression tree with a compiled evaluation program.
/// Copies share the tree; evaluation is reentrant.
class Expression {
public:
    /// The constant 0.
    Expression();

    static Expression parse(std::string_view source);
    static Expression constant(double value);
    static Expression variable(Variable v);
    static Expression unary(UnaryOp op, const Expression& arg);
    static Expression binary(BinaryOp op, const Expression& lhs, const Expression& rhs);

    double eval(const Bindings& b) const;

    /// Symbolic derivative with constant folding and 0/1 identities.
    Expression differentiate(Variable v) const;

    /// Replace every occurrence of `v` with `replacement`.
    Expression substitute(Variable v, const Expression& replacement) const;

    /// Infix form that parses back to the same tree.
    std::string to_string() const;
    /// Prefix form, e.g. "(+ (^ x 2) (* 2 x))".
    std::string to_sexpr() const;

    bool depends_on(VarKind kind) const;
    bool depends_on(Variable v) const;
    /// Largest k such that zk appears, 0 if none.
    int max_z_index() const;

    std::optional<double> constant_value() const;
    bool is_constant() const { return constant_value().has_value(); }

    bool structurally_equal(const Expression& other) const;

    const std::shared_ptr<const detail::Node>& root() const { return root_; }
    static Expression from_node(std::shared_ptr<const detail::Node> root);

private:
    explicit Expression(std::shared_ptr<const detail::Node> root);

    std::shared_ptr<const detail::Node> root_;
    std::shared_ptr<const detail::Program> program_;
};

Expression operator+(const Expression& a, const Expression& b);
Expression operator-(const Expression& a, const Expression& b);
Expression operator*(const Expression& a, const Expression& b);
Expression operator/(const Expression& a, const Expression& b);
Expression operator-(const Expression& a);

/// Shortest decimal text that reads back to exactly `v`.
std::string format_number(double v);

namespace detail {

enum class NodeKind { constant, variable, unary, binary };

struct Node {
    NodeKind kind = NodeKind::constant;
    double value = 0.0;
    Variable var{};
    UnaryOp uop = UnaryOp::neg;
    BinaryOp bop = BinaryOp::add;
    std::shared_ptr<const Node> lhs; // unary argument or binary left operand
    std::shared_ptr<const Node> rhs;
};

} // namespace detail

} // namespace qgfbsde
