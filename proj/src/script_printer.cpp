#include <sstream>

#include "cheyette/script/ast.hpp"
#include "cheyette/support.hpp"

namespace cheyette::script {

namespace {

// Precedence: additive 1, multiplicative 2, unary 3, postfix/primary 4.
int precedence(const Expr& e) {
    return std::visit(
        [](const auto& n) -> int {
            using T = std::decay_t<decltype(n)>;
            if constexpr (std::is_same_v<T, Binary>) {
                return (n.op == BinOp::Add || n.op == BinOp::Sub) ? 1 : 2;
            } else if constexpr (std::is_same_v<T, Neg>) {
                return 3;
            } else if constexpr (std::is_same_v<T, Select>) {
                return 0;
            } else {
                return 4;
            }
        },
        e.node);
}

void print_expr(std::ostream& out, const Expr& e, int parent_prec);

void print_cond(std::ostream& out, const Cond& c) {
    if (const auto* cmp = std::get_if<Compare>(&c.node)) {
        print_expr(out, *cmp->lhs, 0);
        switch (cmp->op) {
            case CmpOp::Lt: out << " < "; break;
            case CmpOp::Le: out << " <= "; break;
            case CmpOp::Gt: out << " > "; break;
            case CmpOp::Ge: out << " >= "; break;
            case CmpOp::Eq: out << " == "; break;
            case CmpOp::Ne: out << " != "; break;
        }
        print_expr(out, *cmp->rhs, 0);
        return;
    }
    const auto& b = std::get<BoolBin>(c.node);
    print_cond(out, *b.lhs);
    out << (b.conjunction ? " and " : " or ");
    print_cond(out, *b.rhs);
}

void print_expr(std::ostream& out, const Expr& e, int parent_prec) {
    const int prec = precedence(e);
    const bool parens = prec < parent_prec;
    if (parens) out << "(";
    std::visit(
        [&](const auto& n) {
            using T = std::decay_t<decltype(n)>;
            if constexpr (std::is_same_v<T, Number>) {
                out << num17(n.value);
            } else if constexpr (std::is_same_v<T, StringLit>) {
                out << '"' << n.value << '"';
            } else if constexpr (std::is_same_v<T, Name>) {
                out << n.id;
            } else if constexpr (std::is_same_v<T, Neg>) {
                out << "-";
                print_expr(out, *n.operand, 3);
            } else if constexpr (std::is_same_v<T, Binary>) {
                print_expr(out, *n.lhs, prec);
                switch (n.op) {
                    case BinOp::Add: out << " + "; break;
                    case BinOp::Sub: out << " - "; break;
                    case BinOp::Mul: out << "*"; break;
                    case BinOp::Div: out << "/"; break;
                    case BinOp::Mod: out << " % "; break;
                }
                print_expr(out, *n.rhs, prec + 1);
            } else if constexpr (std::is_same_v<T, Call>) {
                out << n.fn << "(";
                for (std::size_t i = 0; i < n.args.size(); ++i) {
                    if (i) out << ", ";
                    print_expr(out, *n.args[i], 0);
                }
                out << ")";
            } else if constexpr (std::is_same_v<T, Observe>) {
                out << n.var << "[";
                print_expr(out, *n.time, 0);
                out << "]";
            } else if constexpr (std::is_same_v<T, ListLit>) {
                out << "[";
                for (std::size_t i = 0; i < n.items.size(); ++i) {
                    if (i) out << ", ";
                    print_expr(out, *n.items[i], 0);
                }
                out << "]";
            } else if constexpr (std::is_same_v<T, Select>) {
                print_expr(out, *n.then_value, 1);
                out << " if ";
                print_cond(out, *n.cond);
                out << " else ";
                print_expr(out, *n.else_value, 0);
            }
        },
        e.node);
    if (parens) out << ")";
}

void print_payoff(std::ostream& out, const PayoffDecl& p) {
    if (p.is_loop) {
        out << "for (";
        for (std::size_t i = 0; i < p.loop_vars.size(); ++i) {
            if (i) out << ", ";
            out << p.loop_vars[i];
        }
        out << ") in (";
        for (std::size_t i = 0; i < p.loop_lists.size(); ++i) {
            if (i) out << ", ";
            print_expr(out, *p.loop_lists[i], 0);
        }
        out << "): ";
    } else {
        print_expr(out, *p.pay_time, 0);
        out << ": ";
    }
    print_expr(out, *p.name_expr, 2);
    out << " pays ";
    print_expr(out, *p.expr, 0);
    switch (p.mode) {
        case DiscountMode::NoDiscount: out << " nodiscount"; break;
        case DiscountMode::DiscountBy:
            out << " discount ";
            print_expr(out, *p.mode_expr, 0);
            break;
        case DiscountMode::NumeraireBy:
            out << " numeraire ";
            print_expr(out, *p.mode_expr, 0);
            break;
    }
}

}  // namespace

std::string print(const Expr& e) {
    std::ostringstream out;
    print_expr(out, e, 0);
    return out.str();
}

std::string print(const Cond& c) {
    std::ostringstream out;
    print_cond(out, c);
    return out.str();
}

std::string print(const Script& s) {
    std::ostringstream out;
    for (const auto& def : s.function_defs) {
        out << def.name << "(";
        for (std::size_t i = 0; i < def.params.size(); ++i) {
            if (i) out << ", ";
            out << def.params[i];
        }
        out << ") = ";
        for (const auto& [value, cond] : def.branches) {
            print_expr(out, *value, 1);
            out << " if ";
            print_cond(out, *cond);
            out << " else ";
        }
        print_expr(out, *def.otherwise, 0);
        out << "\n";
    }
    for (const auto& line : s.system_lines) {
        out << (line.kind == LineKind::Increment ? "d_" : "") << line.var << " = ";
        print_expr(out, *line.rhs, 0);
        out << "\n";
    }
    for (const auto& corr : s.correlations) {
        out << "d_" << corr.brownian_a << "*d_" << corr.brownian_b << " = ";
        print_expr(out, *corr.rho, 0);
        out << "\n";
    }
    for (const auto& init : s.inits) {
        out << "init: " << init.var << " = ";
        print_expr(out, *init.value, 0);
        out << "\n";
    }
    for (const auto& payoff : s.payoffs) {
        print_payoff(out, payoff);
        out << "\n";
    }
    return out.str();
}

}  // namespace cheyette::script
