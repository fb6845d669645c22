#include <cmath>
#include <cstdio>
#include <sstream>

#include "cheyette/errors.hpp"
#include "cheyette/script/consteval.hpp"
#include "cheyette/support.hpp"

namespace cheyette::script {

namespace {

[[noreturn]] void fail(const Expr& at, const std::string& msg) {
    std::ostringstream out;
    out << "script:" << at.line << ":" << at.col << ": " << msg;
    throw ValidationError(out.str());
}

double want_number(const Expr& at, const ConstValue& v, const char* what) {
    if (!v.is_number()) fail(at, std::string(what) + " must be a number");
    return std::get<double>(v.v);
}

// Implements the string templating operator: the first %-directive in the
// template is replaced by the formatted value, %% prints a literal %.
std::string format_template(const Expr& at, const std::string& tmpl, const ConstValue& value) {
    std::string out;
    bool used = false;
    for (std::size_t i = 0; i < tmpl.size(); ++i) {
        if (tmpl[i] != '%') {
            out += tmpl[i];
            continue;
        }
        if (i + 1 >= tmpl.size()) fail(at, "dangling % in format string");
        const char spec = tmpl[++i];
        if (spec == '%') {
            out += '%';
            continue;
        }
        if (used) fail(at, "format string has more than one directive");
        used = true;
        char buf[64];
        switch (spec) {
            case 'f':
                std::snprintf(buf, sizeof buf, "%f", want_number(at, value, "%f argument"));
                break;
            case 'g':
                std::snprintf(buf, sizeof buf, "%g", want_number(at, value, "%g argument"));
                break;
            case 'e':
                std::snprintf(buf, sizeof buf, "%e", want_number(at, value, "%e argument"));
                break;
            case 'd':
                std::snprintf(buf, sizeof buf, "%lld",
                              static_cast<long long>(want_number(at, value, "%d argument")));
                break;
            case 's':
                if (value.is_string()) {
                    out += std::get<std::string>(value.v);
                    continue;
                }
                std::snprintf(buf, sizeof buf, "%g", want_number(at, value, "%s argument"));
                break;
            default:
                fail(at, std::string("unsupported format directive %") + spec);
        }
        out += buf;
    }
    if (!used) fail(at, "format string has no directive for its argument");
    return out;
}

ConstValue repeat_list(const Expr& at, const std::vector<ConstValue>& items, double count) {
    const double rounded = std::nearbyint(count);
    if (!(count >= 0.0) || std::abs(count - rounded) > 1e-9)
        fail(at, "list repetition count must be a nonnegative integer");
    std::vector<ConstValue> out;
    out.reserve(items.size() * static_cast<std::size_t>(rounded));
    for (long long r = 0; r < static_cast<long long>(rounded); ++r)
        for (const auto& item : items) out.push_back(item);
    return ConstValue(std::move(out));
}

ConstValue eval_call(const Expr& at, const Call& call, const ConstEnv& env) {
    std::vector<ConstValue> args;
    args.reserve(call.args.size());
    for (const auto& a : call.args) args.push_back(const_eval(*a, env));

    auto unary = [&](double (*fn)(double)) {
        if (args.size() != 1) fail(at, call.fn + " expects one argument");
        return ConstValue(fn(want_number(at, args[0], "argument")));
    };
    if (call.fn == "len") {
        if (args.size() != 1 || !args[0].is_list()) fail(at, "len expects one list");
        return ConstValue(static_cast<double>(std::get<std::vector<ConstValue>>(args[0].v).size()));
    }
    if (call.fn == "exp") return unary(std::exp);
    if (call.fn == "ln" || call.fn == "log") return unary(std::log);
    if (call.fn == "sqrt") return unary(std::sqrt);
    if (call.fn == "abs") return unary(std::fabs);
    if (call.fn == "floor") return unary(std::floor);
    if (call.fn == "positivepart")
        return unary(+[](double x) { return x > 0.0 ? x : 0.0; });
    if (call.fn == "max" || call.fn == "min") {
        if (args.size() != 2) fail(at, call.fn + " expects two arguments");
        const double a = want_number(at, args[0], "argument");
        const double b = want_number(at, args[1], "argument");
        return ConstValue(call.fn == "max" ? (a > b ? a : b) : (a < b ? a : b));
    }
    fail(at, "function '" + call.fn + "' is not usable in a constant context");
}

}  // namespace

ConstValue const_eval(const Expr& expr, const ConstEnv& env) {
    return std::visit(
        [&](const auto& n) -> ConstValue {
            using T = std::decay_t<decltype(n)>;
            if constexpr (std::is_same_v<T, Number>) {
                return ConstValue(n.value);
            } else if constexpr (std::is_same_v<T, StringLit>) {
                return ConstValue(n.value);
            } else if constexpr (std::is_same_v<T, Name>) {
                const auto it = env.find(n.id);
                if (it == env.end())
                    fail(expr, "unknown name '" + n.id + "' in constant context");
                return it->second;
            } else if constexpr (std::is_same_v<T, Neg>) {
                const ConstValue v = const_eval(*n.operand, env);
                return ConstValue(-want_number(expr, v, "negation operand"));
            } else if constexpr (std::is_same_v<T, Binary>) {
                const ConstValue a = const_eval(*n.lhs, env);
                const ConstValue b = const_eval(*n.rhs, env);
                if (n.op == BinOp::Mod && a.is_string())
                    return ConstValue(
                        format_template(expr, std::get<std::string>(a.v), b));
                if (n.op == BinOp::Mul && a.is_list() && b.is_number())
                    return repeat_list(expr, std::get<std::vector<ConstValue>>(a.v),
                                       std::get<double>(b.v));
                if (n.op == BinOp::Mul && a.is_number() && b.is_list())
                    return repeat_list(expr, std::get<std::vector<ConstValue>>(b.v),
                                       std::get<double>(a.v));
                const double x = want_number(expr, a, "operand");
                const double y = want_number(expr, b, "operand");
                switch (n.op) {
                    case BinOp::Add: return ConstValue(x + y);
                    case BinOp::Sub: return ConstValue(x - y);
                    case BinOp::Mul: return ConstValue(x * y);
                    case BinOp::Div: return ConstValue(x / y);
                    case BinOp::Mod: return ConstValue(std::fmod(x, y));
                }
                fail(expr, "unreachable");
            } else if constexpr (std::is_same_v<T, Call>) {
                return eval_call(expr, n, env);
            } else if constexpr (std::is_same_v<T, Observe>) {
                fail(expr, "observations are not usable in a constant context");
            } else if constexpr (std::is_same_v<T, ListLit>) {
                std::vector<ConstValue> items;
                items.reserve(n.items.size());
                for (const auto& item : n.items) items.push_back(const_eval(*item, env));
                return ConstValue(std::move(items));
            } else {
                fail(expr, "conditional expressions are not usable in a constant context");
            }
        },
        expr.node);
}

double const_eval_number(const Expr& expr, const ConstEnv& env) {
    const ConstValue v = const_eval(expr, env);
    if (!v.is_number()) fail(expr, "expected a numeric constant");
    return std::get<double>(v.v);
}

std::string const_eval_string(const Expr& expr, const ConstEnv& env) {
    const ConstValue v = const_eval(expr, env);
    if (v.is_string()) return std::get<std::string>(v.v);
    if (v.is_number()) return num17(std::get<double>(v.v));
    fail(expr, "expected a name or string");
}

std::vector<double> const_eval_number_list(const Expr& expr, const ConstEnv& env) {
    const ConstValue v = const_eval(expr, env);
    if (!v.is_list()) fail(expr, "expected a list");
    std::vector<double> out;
    for (const auto& item : std::get<std::vector<ConstValue>>(v.v)) {
        if (!item.is_number()) fail(expr, "expected a list of numbers");
        out.push_back(std::get<double>(item.v));
    }
    return out;
}

}  // namespace cheyette::script
