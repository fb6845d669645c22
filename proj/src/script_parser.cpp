#include <set>
#include <sstream>

#include "cheyette/errors.hpp"
#include "cheyette/script/ast.hpp"
#include "cheyette/script/lexer.hpp"

namespace cheyette::script {

namespace {

const std::set<std::string>& keywords() {
    static const std::set<std::string> kw = {"if",   "else",       "and",      "or",
                                             "for",  "in",         "pays",     "nodiscount",
                                             "discount", "numeraire", "init"};
    return kw;
}

[[noreturn]] void fail(int line, int col, const std::string& msg) {
    std::ostringstream out;
    out << "script:" << line << ":" << col << ": " << msg;
    throw ValidationError(out.str());
}

bool references_name(const Expr& e, const std::string& id, const std::string& id_new);

bool references_name(const Cond& c, const std::string& id, const std::string& id_new) {
    if (const auto* cmp = std::get_if<Compare>(&c.node))
        return references_name(*cmp->lhs, id, id_new) ||
               references_name(*cmp->rhs, id, id_new);
    const auto& b = std::get<BoolBin>(c.node);
    return references_name(*b.lhs, id, id_new) || references_name(*b.rhs, id, id_new);
}

bool references_name(const Expr& e, const std::string& id, const std::string& id_new) {
    return std::visit(
        [&](const auto& n) -> bool {
            using T = std::decay_t<decltype(n)>;
            if constexpr (std::is_same_v<T, Name>) {
                return n.id == id || n.id == id_new;
            } else if constexpr (std::is_same_v<T, Neg>) {
                return references_name(*n.operand, id, id_new);
            } else if constexpr (std::is_same_v<T, Binary>) {
                return references_name(*n.lhs, id, id_new) ||
                       references_name(*n.rhs, id, id_new);
            } else if constexpr (std::is_same_v<T, Call>) {
                for (const auto& a : n.args)
                    if (references_name(*a, id, id_new)) return true;
                return false;
            } else if constexpr (std::is_same_v<T, Observe>) {
                return n.var == id || references_name(*n.time, id, id_new);
            } else if constexpr (std::is_same_v<T, ListLit>) {
                for (const auto& a : n.items)
                    if (references_name(*a, id, id_new)) return true;
                return false;
            } else if constexpr (std::is_same_v<T, Select>) {
                return references_name(*n.cond, id, id_new) ||
                       references_name(*n.then_value, id, id_new) ||
                       references_name(*n.else_value, id, id_new);
            } else {
                return false;
            }
        },
        e.node);
}

class LineParser {
public:
    explicit LineParser(const LogicalLine& ll) : toks_(ll.toks) {}

    const Token& peek(std::size_t ahead = 0) const {
        const std::size_t i = pos_ + ahead;
        return i < toks_.size() ? toks_[i] : toks_.back();
    }
    const Token& next() { return toks_[pos_ < toks_.size() - 1 ? pos_++ : pos_]; }
    bool at_end() const { return peek().kind == TokKind::End; }

    bool is_sym(const std::string& s, std::size_t ahead = 0) const {
        return peek(ahead).kind == TokKind::Sym && peek(ahead).text == s;
    }
    bool is_kw(const std::string& s, std::size_t ahead = 0) const {
        return peek(ahead).kind == TokKind::Ident && peek(ahead).text == s;
    }
    void expect_sym(const std::string& s) {
        if (!is_sym(s)) fail(peek().line, peek().col, "expected '" + s + "'");
        next();
    }
    void expect_kw(const std::string& s) {
        if (!is_kw(s)) fail(peek().line, peek().col, "expected '" + s + "'");
        next();
    }
    std::string expect_ident() {
        if (peek().kind != TokKind::Ident || keywords().count(peek().text))
            fail(peek().line, peek().col, "expected identifier");
        return next().text;
    }
    void expect_end() {
        if (!at_end()) fail(peek().line, peek().col, "unexpected trailing tokens");
    }

    ExprPtr parse_expr() {
        ExprPtr lhs = parse_mul();
        while (is_sym("+") || is_sym("-")) {
            const Token op = next();
            ExprPtr rhs = parse_mul();
            lhs = make_expr(op.line, op.col,
                            Binary{op.text == "+" ? BinOp::Add : BinOp::Sub, lhs, rhs});
        }
        return lhs;
    }

    CondPtr parse_cond() {
        CondPtr lhs = parse_cond_and();
        while (is_kw("or")) {
            next();
            CondPtr rhs = parse_cond_and();
            lhs = std::make_shared<Cond>(Cond{BoolBin{false, lhs, rhs}});
        }
        return lhs;
    }

private:
    ExprPtr parse_mul() {
        ExprPtr lhs = parse_unary();
        while (is_sym("*") || is_sym("/") || is_sym("%")) {
            const Token op = next();
            ExprPtr rhs = parse_unary();
            const BinOp bop = op.text == "*"   ? BinOp::Mul
                              : op.text == "/" ? BinOp::Div
                                               : BinOp::Mod;
            lhs = make_expr(op.line, op.col, Binary{bop, lhs, rhs});
        }
        return lhs;
    }

    ExprPtr parse_unary() {
        if (is_sym("-")) {
            const Token op = next();
            return make_expr(op.line, op.col, Neg{parse_unary()});
        }
        if (is_sym("+")) {
            next();
            return parse_unary();
        }
        return parse_postfix();
    }

    ExprPtr parse_postfix() {
        ExprPtr e = parse_primary();
        while (is_sym("[")) {
            const Token op = next();
            ExprPtr idx = parse_expr();
            expect_sym("]");
            const auto* name = std::get_if<Name>(&e->node);
            if (!name)
                fail(op.line, op.col, "observation brackets require a variable name");
            e = make_expr(op.line, op.col, Observe{name->id, idx});
        }
        return e;
    }

    ExprPtr parse_primary() {
        const Token& t = peek();
        if (t.kind == TokKind::Number) {
            next();
            return make_expr(t.line, t.col, Number{t.num});
        }
        if (t.kind == TokKind::String) {
            next();
            return make_expr(t.line, t.col, StringLit{t.text});
        }
        if (t.kind == TokKind::Ident && !keywords().count(t.text)) {
            next();
            if (is_sym("(")) {
                next();
                std::vector<ExprPtr> args;
                if (!is_sym(")")) {
                    args.push_back(parse_expr());
                    while (is_sym(",")) {
                        next();
                        args.push_back(parse_expr());
                    }
                }
                expect_sym(")");
                return make_expr(t.line, t.col, Call{t.text, std::move(args)});
            }
            return make_expr(t.line, t.col, Name{t.text});
        }
        if (is_sym("(")) {
            next();
            ExprPtr e = parse_expr();
            expect_sym(")");
            return e;
        }
        if (is_sym("[")) {
            next();
            std::vector<ExprPtr> items;
            if (!is_sym("]")) {
                items.push_back(parse_expr());
                while (is_sym(",")) {
                    next();
                    items.push_back(parse_expr());
                }
            }
            expect_sym("]");
            return make_expr(t.line, t.col, ListLit{std::move(items)});
        }
        fail(t.line, t.col, "expected expression");
    }

    CondPtr parse_cond_and() {
        CondPtr lhs = parse_cond_cmp();
        while (is_kw("and")) {
            next();
            CondPtr rhs = parse_cond_cmp();
            lhs = std::make_shared<Cond>(Cond{BoolBin{true, lhs, rhs}});
        }
        return lhs;
    }

    CondPtr parse_cond_cmp() {
        ExprPtr lhs = parse_expr();
        const Token& t = peek();
        CmpOp op;
        if (is_sym("<")) op = CmpOp::Lt;
        else if (is_sym("<=")) op = CmpOp::Le;
        else if (is_sym(">")) op = CmpOp::Gt;
        else if (is_sym(">=")) op = CmpOp::Ge;
        else if (is_sym("==")) op = CmpOp::Eq;
        else if (is_sym("!=")) op = CmpOp::Ne;
        else fail(t.line, t.col, "expected comparison operator");
        next();
        ExprPtr rhs = parse_expr();
        return std::make_shared<Cond>(Cond{Compare{op, lhs, rhs}});
    }

    const std::vector<Token>& toks_;
    std::size_t pos_ = 0;
};

bool contains_pays(const LogicalLine& ll) {
    for (const auto& t : ll.toks)
        if (t.kind == TokKind::Ident && t.text == "pays") return true;
    return false;
}

bool is_function_def(const LogicalLine& ll) {
    const auto& t = ll.toks;
    if (t.size() < 4 || t[0].kind != TokKind::Ident || keywords().count(t[0].text) ||
        !(t[1].kind == TokKind::Sym && t[1].text == "("))
        return false;
    int depth = 0;
    for (std::size_t i = 1; i < t.size(); ++i) {
        if (t[i].kind != TokKind::Sym) continue;
        if (t[i].text == "(") ++depth;
        if (t[i].text == ")" && --depth == 0)
            return i + 1 < t.size() && t[i + 1].kind == TokKind::Sym && t[i + 1].text == "=";
    }
    return false;
}

bool is_correlation(const LogicalLine& ll) {
    const auto& t = ll.toks;
    return t.size() >= 5 && t[0].kind == TokKind::Ident && t[0].text.starts_with("d_") &&
           t[1].kind == TokKind::Sym && t[1].text == "*" && t[2].kind == TokKind::Ident &&
           t[2].text.starts_with("d_") && t[3].kind == TokKind::Sym && t[3].text == "=";
}

void parse_payoff_mode(LineParser& p, PayoffDecl* decl) {
    if (p.is_kw("nodiscount")) {
        p.next();
        decl->mode = DiscountMode::NoDiscount;
    } else if (p.is_kw("discount")) {
        p.next();
        decl->mode = DiscountMode::DiscountBy;
        decl->mode_expr = p.parse_expr();
    } else if (p.is_kw("numeraire")) {
        p.next();
        decl->mode = DiscountMode::NumeraireBy;
        decl->mode_expr = p.parse_expr();
    } else {
        fail(p.peek().line, p.peek().col,
             "expected payoff mode: nodiscount, discount <expr> or numeraire <expr>");
    }
    p.expect_end();
}

void collect_brownians(const Expr& e, std::vector<std::string>* order) {
    std::visit(
        [&](const auto& n) {
            using T = std::decay_t<decltype(n)>;
            if constexpr (std::is_same_v<T, Name>) {
                if (n.id.starts_with("d_") && n.id != "d_t") {
                    const std::string b = n.id.substr(2);
                    for (const auto& have : *order)
                        if (have == b) return;
                    order->push_back(b);
                }
            } else if constexpr (std::is_same_v<T, Neg>) {
                collect_brownians(*n.operand, order);
            } else if constexpr (std::is_same_v<T, Binary>) {
                collect_brownians(*n.lhs, order);
                collect_brownians(*n.rhs, order);
            } else if constexpr (std::is_same_v<T, Call>) {
                for (const auto& a : n.args) collect_brownians(*a, order);
            } else if constexpr (std::is_same_v<T, Observe>) {
                collect_brownians(*n.time, order);
            } else if constexpr (std::is_same_v<T, ListLit>) {
                for (const auto& a : n.items) collect_brownians(*a, order);
            } else if constexpr (std::is_same_v<T, Select>) {
                collect_brownians(*n.then_value, order);
                collect_brownians(*n.else_value, order);
            }
        },
        e.node);
}

}  // namespace

Script parse(const std::string& text) {
    Script script;
    for (const LogicalLine& ll : lex(text)) {
        LineParser p(ll);
        const Token& first = ll.toks.front();

        if (p.is_kw("init") && p.is_sym(":", 1)) {
            p.next();
            p.next();
            InitDecl init;
            init.line = first.line;
            init.var = p.expect_ident();
            p.expect_sym("=");
            init.value = p.parse_expr();
            p.expect_end();
            for (const auto& other : script.inits)
                if (other.var == init.var)
                    fail(init.line, first.col, "duplicate init for '" + init.var + "'");
            script.inits.push_back(std::move(init));
            continue;
        }

        if (p.is_kw("for")) {
            PayoffDecl decl;
            decl.line = first.line;
            decl.is_loop = true;
            p.next();
            p.expect_sym("(");
            decl.loop_vars.push_back(p.expect_ident());
            while (p.is_sym(",")) {
                p.next();
                decl.loop_vars.push_back(p.expect_ident());
            }
            p.expect_sym(")");
            p.expect_kw("in");
            p.expect_sym("(");
            decl.loop_lists.push_back(p.parse_expr());
            while (p.is_sym(",")) {
                p.next();
                decl.loop_lists.push_back(p.parse_expr());
            }
            p.expect_sym(")");
            p.expect_sym(":");
            decl.name_expr = p.parse_expr();
            p.expect_kw("pays");
            decl.expr = p.parse_expr();
            parse_payoff_mode(p, &decl);
            if (decl.loop_vars.size() != decl.loop_lists.size())
                fail(first.line, first.col,
                     "loop payoff needs one binding list per loop variable");
            script.payoffs.push_back(std::move(decl));
            continue;
        }

        if (contains_pays(ll)) {
            PayoffDecl decl;
            decl.line = first.line;
            decl.pay_time = p.parse_expr();
            p.expect_sym(":");
            decl.name_expr = p.parse_expr();
            p.expect_kw("pays");
            decl.expr = p.parse_expr();
            parse_payoff_mode(p, &decl);
            script.payoffs.push_back(std::move(decl));
            continue;
        }

        if (is_correlation(ll)) {
            CorrelationDecl corr;
            corr.line = first.line;
            corr.brownian_a = p.next().text.substr(2);
            p.next();
            corr.brownian_b = p.next().text.substr(2);
            p.next();
            corr.rho = p.parse_expr();
            p.expect_end();
            if (corr.brownian_a == "t" || corr.brownian_b == "t")
                fail(first.line, first.col, "d_t cannot carry a correlation");
            if (corr.brownian_a == corr.brownian_b)
                fail(first.line, first.col, "correlation of a Brownian with itself");
            script.correlations.push_back(std::move(corr));
            continue;
        }

        if (is_function_def(ll)) {
            FunctionDef def;
            def.line = first.line;
            def.name = p.expect_ident();
            p.expect_sym("(");
            if (!p.is_sym(")")) {
                def.params.push_back(p.expect_ident());
                while (p.is_sym(",")) {
                    p.next();
                    def.params.push_back(p.expect_ident());
                }
            }
            p.expect_sym(")");
            p.expect_sym("=");
            // value [if cond else value ...] chains into select branches.
            while (true) {
                ExprPtr value = p.parse_expr();
                if (p.is_kw("if")) {
                    p.next();
                    CondPtr cond = p.parse_cond();
                    p.expect_kw("else");
                    def.branches.emplace_back(value, cond);
                } else {
                    def.otherwise = value;
                    break;
                }
            }
            p.expect_end();
            for (const auto& other : script.function_defs)
                if (other.name == def.name)
                    fail(def.line, first.col, "duplicate function '" + def.name + "'");
            script.function_defs.push_back(std::move(def));
            continue;
        }

        if (first.kind == TokKind::Ident && !keywords().count(first.text) &&
            p.is_sym("=", 1)) {
            SystemLine sys;
            sys.line = first.line;
            std::string lhs = p.next().text;
            p.next();
            sys.rhs = p.parse_expr();
            p.expect_end();
            if (lhs.starts_with("d_")) {
                sys.kind = LineKind::Increment;
                sys.var = lhs.substr(2);
                if (sys.var.empty() || sys.var == "t" || sys.var.starts_with("d_"))
                    fail(first.line, first.col, "bad increment target '" + lhs + "'");
            } else {
                sys.kind = LineKind::Assignment;
                sys.var = lhs;
                if (sys.var == "t")
                    fail(first.line, first.col, "'t' is the reserved time variable");
                sys.markovian = references_name(*sys.rhs, sys.var, sys.var + "_new");
            }
            script.system_lines.push_back(std::move(sys));
            continue;
        }

        fail(first.line, first.col, "unrecognized statement");
    }

    for (const auto& line : script.system_lines)
        if (line.kind == LineKind::Increment)
            collect_brownians(*line.rhs, &script.brownians);
    for (const auto& b : script.brownians)
        for (const auto& line : script.system_lines)
            if (line.var == b)
                fail(line.line, 1, "'d_" + b + "' refers to a state variable, not a Brownian");
    for (const auto& corr : script.correlations) {
        for (const std::string& b : {corr.brownian_a, corr.brownian_b}) {
            bool have = false;
            for (const auto& known : script.brownians) have = have || known == b;
            if (!have) script.brownians.push_back(b);
        }
    }
    return script;
}

bool structurally_equal(const Script& a, const Script& b) { return print(a) == print(b); }

}  // namespace cheyette::script
