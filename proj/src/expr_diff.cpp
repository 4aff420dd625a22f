#include "qgfbsde/expr.hpp"

namespace qgfbsde {

using detail::Node;
using detail::NodeKind;

namespace {

Expression wrap(const std::shared_ptr<const Node>& n) { return Expression::from_node(n); }

Expression derive(const std::shared_ptr<const Node>& node, Variable v) {
    const Node& n = *node;
    switch (n.kind) {
    case NodeKind::constant:
        return Expression::constant(0.0);
    case NodeKind::variable:
        return Expression::constant(n.var == v ? 1.0 : 0.0);
    case NodeKind::unary: {
        const Expression u = wrap(n.lhs);
        const Expression du = derive(n.lhs, v);
        if (du.constant_value() == 0.0) return Expression::constant(0.0);
        switch (n.uop) {
        case UnaryOp::neg: return -du;
        case UnaryOp::exp: return Expression::unary(UnaryOp::exp, u) * du;
        case UnaryOp::log: return du / u;
        case UnaryOp::sqrt:
            return du / (Expression::constant(2.0) * Expression::unary(UnaryOp::sqrt, u));
        case UnaryOp::sin: return Expression::unary(UnaryOp::cos, u) * du;
        case UnaryOp::cos: return -(Expression::unary(UnaryOp::sin, u) * du);
        case UnaryOp::tanh: {
            const Expression th = Expression::unary(UnaryOp::tanh, u);
            return (Expression::constant(1.0) - Expression::binary(BinaryOp::pow, th, Expression::constant(2.0))) * du;
        }
        }
        break;
    }
    case NodeKind::binary: {
        const Expression a = wrap(n.lhs);
        const Expression da = derive(n.lhs, v);
        if (n.bop == BinaryOp::pow) {
            const double c = n.rhs->value;
            if (da.constant_value() == 0.0) return Expression::constant(0.0);
            return Expression::constant(c) *
                   Expression::binary(BinaryOp::pow, a, Expression::constant(c - 1.0)) * da;
        }
        const Expression b = wrap(n.rhs);
        const Expression db = derive(n.rhs, v);
        switch (n.bop) {
        case BinaryOp::add: return da + db;
        case BinaryOp::sub: return da - db;
        case BinaryOp::mul: return da * b + a * db;
        case BinaryOp::div:
            if (db.constant_value() == 0.0) return da / b;
            return (da * b - a * db) / Expression::binary(BinaryOp::pow, b, Expression::constant(2.0));
        case BinaryOp::pow: break;
        }
        break;
    }
    }
    return Expression::constant(0.0);
}

Expression replace(const std::shared_ptr<const Node>& node, Variable v, const Expression& with) {
    const Node& n = *node;
    switch (n.kind) {
    case NodeKind::constant: return wrap(node);
    case NodeKind::variable: return n.var == v ? with : wrap(node);
    case NodeKind::unary: return Expression::unary(n.uop, replace(n.lhs, v, with));
    case NodeKind::binary:
        return Expression::binary(n.bop, replace(n.lhs, v, with), replace(n.rhs, v, with));
    }
    return wrap(node);
}

} // namespace

Expression Expression::differentiate(Variable v) const { return derive(root_, v); }

Expression Expression::substitute(Variable v, const Expression& replacement) const {
    return replace(root_, v, replacement);
}

} // namespace qgfbsde
