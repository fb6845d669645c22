#pragma once

#include <map>
#include <string>
#include <variant>
#include <vector>

#include "cheyette/script/ast.hpp"

namespace cheyette::script {

// Value domain for compile-time evaluation: scalars, strings and flat lists.
struct ConstValue {
    std::variant<double, std::string, std::vector<ConstValue>> v;

    ConstValue() : v(0.0) {}
    ConstValue(double x) : v(x) {}
    ConstValue(std::string s) : v(std::move(s)) {}
    ConstValue(std::vector<ConstValue> xs) : v(std::move(xs)) {}

    bool is_number() const { return std::holds_alternative<double>(v); }
    bool is_string() const { return std::holds_alternative<std::string>(v); }
    bool is_list() const { return std::holds_alternative<std::vector<ConstValue>>(v); }
};

using ConstEnv = std::map<std::string, ConstValue>;

// Evaluates an expression over ConstEnv. Throws ValidationError (with the
// expression's source position) on unknown names, bad arity or type misuse.
ConstValue const_eval(const Expr& expr, const ConstEnv& env);

double const_eval_number(const Expr& expr, const ConstEnv& env);
std::string const_eval_string(const Expr& expr, const ConstEnv& env);
std::vector<double> const_eval_number_list(const Expr& expr, const ConstEnv& env);

}  // namespace cheyette::script
