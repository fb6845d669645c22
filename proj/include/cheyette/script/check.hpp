#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "cheyette/script/ast.hpp"
#include "cheyette/script/consteval.hpp"

namespace cheyette::script {

enum class VarClass { Brownian, Time, Stepped, Assigned, Markovian, FreeParam };
std::string to_string(VarClass c);

// Names and constants the host supplies at check time. parse_values feed the
// constant contexts (loop lists, payoff names, observation times);
// external_fns are engine-provided scalar functions of one argument.
struct CheckEnv {
    ConstEnv parse_values;
    std::set<std::string> external_fns = {"initfwd", "discfwd"};
};

struct StepOp {
    std::string var;
    ExprPtr rhs;  // inlined; _new and start-of-step references resolved
    int line = 0;
};

struct ConcretePayoff {
    std::string name;
    double pay_time = 0.0;
    ExprPtr expr;       // inlined; observation times folded to constants
    DiscountMode mode = DiscountMode::NoDiscount;
    ExprPtr mode_expr;  // evaluated on pay-time state (and t=0 for numeraire)
    int line = 0;
};

struct CorrelationEntry {
    std::string a;
    std::string b;
    ExprPtr rho;  // may reference t and free parameters, never state
    int line = 0;
};

struct CheckedProgram {
    Script script;
    std::vector<std::string> brownians;  // draw order
    std::vector<StepOp> increments;      // executed first each step, source order
    std::vector<StepOp> assignments;     // then re-derived, source order
    std::set<std::string> stepped;
    std::set<std::string> assigned;
    std::set<std::string> markovian;     // assigned vars that carry state
    std::vector<std::pair<std::string, ExprPtr>> explicit_inits;  // decl order
    std::vector<std::pair<std::string, ExprPtr>> derived_inits;   // topo order
    std::set<std::string> shadow_vars;   // need start-of-step copies
    std::vector<CorrelationEntry> correlations;
    std::vector<ConcretePayoff> payoffs;
    std::vector<double> observation_times;  // sorted unique, includes pay times
    std::vector<std::string> free_params;   // first-reference order
    std::map<std::string, VarClass> classes;
    std::set<std::string> external_fns;
};

// Semantic analysis: classifies variables, inlines function definitions,
// expands payoff loops, folds observation times and reports free parameters.
// Throws ValidationError naming the offending symbol and position.
CheckedProgram check(const Script& script, const CheckEnv& env);

// Correlation matrix in brownian order for given parameter values at time t.
// Validates entries lie in [-1, 1]; positive semidefiniteness is checked by
// cholesky_psd.
std::vector<std::vector<double>> correlation_matrix(
    const CheckedProgram& prog, const std::map<std::string, double>& values, double t);

// Lower Cholesky factor allowing semidefinite pivots (tolerance 1e-10).
// Throws ValidationError when the matrix is not positive semidefinite.
std::vector<std::vector<double>> cholesky_psd(const std::vector<std::vector<double>>& corr);

}  // namespace cheyette::script
