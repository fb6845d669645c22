#pragma once

#include <memory>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace cheyette::script {

struct Expr;
using ExprPtr = std::shared_ptr<const Expr>;
struct Cond;
using CondPtr = std::shared_ptr<const Cond>;

enum class BinOp { Add, Sub, Mul, Div, Mod };
enum class CmpOp { Lt, Le, Gt, Ge, Eq, Ne };

struct Number {
    double value;
};
struct StringLit {
    std::string value;
};
struct Name {
    std::string id;
};
struct Neg {
    ExprPtr operand;
};
struct Binary {
    BinOp op;
    ExprPtr lhs;
    ExprPtr rhs;
};
struct Call {
    std::string fn;
    std::vector<ExprPtr> args;
};
// var[time]: value of var observed at a simulation time.
struct Observe {
    std::string var;
    ExprPtr time;
};
struct ListLit {
    std::vector<ExprPtr> items;
};
// Elementwise conditional; produced by inlining conditional function defs.
struct Select {
    CondPtr cond;
    ExprPtr then_value;
    ExprPtr else_value;
};

struct Expr {
    std::variant<Number, StringLit, Name, Neg, Binary, Call, Observe, ListLit, Select> node;
    int line = 0;
    int col = 0;
};

struct Compare {
    CmpOp op;
    ExprPtr lhs;
    ExprPtr rhs;
};
struct BoolBin {
    bool conjunction;  // true: and, false: or
    CondPtr lhs;
    CondPtr rhs;
};
struct Cond {
    std::variant<Compare, BoolBin> node;
};

template <class... Args>
ExprPtr make_expr(int line, int col, Args&&... args) {
    return std::make_shared<Expr>(Expr{{std::forward<Args>(args)...}, line, col});
}

/// name(params) = value [if cond else value ...]; branches evaluate with
/// select/where semantics over the path batch.
struct FunctionDef {
    std::string name;
    std::vector<std::string> params;
    std::vector<std::pair<ExprPtr, CondPtr>> branches;  // (value, condition)
    ExprPtr otherwise;
    int line = 0;
};

enum class LineKind { Increment, Assignment };

struct SystemLine {
    LineKind kind;
    std::string var;  // increment lines store the name without the d_ prefix
    ExprPtr rhs;
    bool markovian = false;  // assignment whose rhs reads the variable itself
    int line = 0;
};

struct CorrelationDecl {
    std::string brownian_a;  // names without the d_ prefix
    std::string brownian_b;
    ExprPtr rho;
    int line = 0;
};

struct InitDecl {
    std::string var;
    ExprPtr value;
    int line = 0;
};

enum class DiscountMode { NoDiscount, DiscountBy, NumeraireBy };

struct PayoffDecl {
    ExprPtr pay_time;   // single form only; loop form pays at the binding t
    ExprPtr name_expr;  // string literal, possibly templated with %
    ExprPtr expr;
    DiscountMode mode = DiscountMode::NoDiscount;
    ExprPtr mode_expr;  // discount/numeraire argument
    bool is_loop = false;
    std::vector<std::string> loop_vars;
    std::vector<ExprPtr> loop_lists;
    int line = 0;
};

struct Script {
    std::vector<FunctionDef> function_defs;
    std::vector<SystemLine> system_lines;
    std::vector<CorrelationDecl> correlations;
    std::vector<InitDecl> inits;
    std::vector<PayoffDecl> payoffs;
    std::vector<std::string> brownians;  // first-appearance order, without d_
};

/// Parses script text (comments, continuations, the line forms of the
/// scripting language). Throws ValidationError with line:col diagnostics.
Script parse(const std::string& text);

/// Canonical pretty-print; parse(print(parse(s))) is a fixed point.
std::string print(const Script& script);
std::string print(const Expr& expr);
std::string print(const Cond& cond);

/// Structural AST equality (layout and comment independent).
bool structurally_equal(const Script& a, const Script& b);

}  // namespace cheyette::script
