#include <dlfcn.h>

#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "cheyette/errors.hpp"
#include "cheyette/sim/codegen.hpp"
#include "cheyette/support.hpp"
#include "json.hpp"

namespace cheyette::sim {

namespace {

using script::CheckedProgram;
using script::ConcretePayoff;
using script::Expr;

// Numeric literal that reparses to the same double and is unambiguously a
// double in C++ source ("-5" would be an int and poison division).
std::string lit(double v) {
    std::string s = num17(v);
    if (s.find_first_of(".eEni") == std::string::npos) s += ".0";
    return s;
}

std::string cstring(const std::string& s) {
    std::string out = "\"";
    for (const char c : s) {
        if (c == '"' || c == '\\') out += '\\';
        out += c;
    }
    return out + "\"";
}

[[noreturn]] void bug(const Expr& at, const std::string& msg) {
    std::ostringstream out;
    out << "codegen: script:" << at.line << ":" << at.col << ": " << msg;
    throw RuntimeError(out.str());
}

// Emission context. Expressions are emitted fully parenthesised with the
// same operation shapes the interpreter evaluates, so both backends perform
// identical double arithmetic under -ffp-contract=off.
struct EmitCtx {
    const CheckedProgram* prog = nullptr;
    const TimeGrid* grid = nullptr;
    std::string t_sym;            // what bare `t` means here: "t0", "t1", "0.0"
    bool steps_live = false;      // DB_i / dt in scope
};

std::string emit_expr(const Expr& e, const EmitCtx& ctx);

std::string emit_name(const Expr& at, const std::string& id, const EmitCtx& ctx) {
    const CheckedProgram& prog = *ctx.prog;
    if (id == "t") return ctx.t_sym;
    if (id == "batchsize") return "(double)batch";
    if (id == "d_t") {
        if (!ctx.steps_live) bug(at, "'d_t' outside step loop");
        return "dt";
    }
    if (id.rfind("d_", 0) == 0) {
        const std::string br = id.substr(2);
        for (std::size_t i = 0; i < prog.brownians.size(); ++i)
            if (prog.brownians[i] == br) {
                if (!ctx.steps_live) bug(at, "'" + id + "' outside step loop");
                return "DB_" + std::to_string(i);
            }
        bug(at, "unknown Brownian '" + id + "'");
    }
    const std::string suffix = "__prestep";
    if (id.size() > suffix.size() && id.compare(id.size() - suffix.size(), suffix.size(), suffix) == 0)
        return "PS_" + id.substr(0, id.size() - suffix.size());
    if (prog.stepped.count(id) || prog.assigned.count(id)) return "S_" + id;
    for (const auto& name : prog.free_params)
        if (name == id) return "P_" + id;
    bug(at, "unbound name '" + id + "'");
}

std::string emit_cond(const script::Cond& c, const EmitCtx& ctx) {
    if (const auto* cmp = std::get_if<script::Compare>(&c.node)) {
        const char* op = nullptr;
        switch (cmp->op) {
            case script::CmpOp::Lt: op = "<"; break;
            case script::CmpOp::Le: op = "<="; break;
            case script::CmpOp::Gt: op = ">"; break;
            case script::CmpOp::Ge: op = ">="; break;
            case script::CmpOp::Eq: op = "=="; break;
            case script::CmpOp::Ne: op = "!="; break;
        }
        return "(" + emit_expr(*cmp->lhs, ctx) + " " + op + " " + emit_expr(*cmp->rhs, ctx) +
               ")";
    }
    const auto& b = std::get<script::BoolBin>(c.node);
    return "(" + emit_cond(*b.lhs, ctx) + (b.conjunction ? " && " : " || ") +
           emit_cond(*b.rhs, ctx) + ")";
}

std::string emit_call(const Expr& e, const script::Call& call, const EmitCtx& ctx) {
    // zeros/ones reach expression position only inside init right-hand
    // sides; their batch-shape guard is emitted separately by the init block.
    if (call.fn == "oneslike" || call.fn == "ones") return "1.0";
    if (call.fn == "zeroslike" || call.fn == "zeros") return "0.0";
    if (ctx.prog->external_fns.count(call.fn))
        return "EXT_" + call.fn + "(" + emit_expr(*call.args[0], ctx) + ")";
    if (call.fn == "max" || call.fn == "min")
        return "chey_" + call.fn + "(" + emit_expr(*call.args[0], ctx) + ", " +
               emit_expr(*call.args[1], ctx) + ")";
    const std::string a = emit_expr(*call.args[0], ctx);
    if (call.fn == "exp") return "std::exp(" + a + ")";
    if (call.fn == "ln" || call.fn == "log") return "std::log(" + a + ")";
    if (call.fn == "sqrt") return "std::sqrt(" + a + ")";
    if (call.fn == "positivepart") return "chey_pos(" + a + ")";
    if (call.fn == "abs") return "std::fabs(" + a + ")";
    if (call.fn == "floor") return "std::floor(" + a + ")";
    bug(e, "unknown function '" + call.fn + "'");
}

std::string emit_expr(const Expr& e, const EmitCtx& ctx) {
    return std::visit(
        [&](const auto& n) -> std::string {
            using T = std::decay_t<decltype(n)>;
            if constexpr (std::is_same_v<T, script::Number>) {
                return lit(n.value);
            } else if constexpr (std::is_same_v<T, script::Name>) {
                return emit_name(e, n.id, ctx);
            } else if constexpr (std::is_same_v<T, script::Neg>) {
                return "(-" + emit_expr(*n.operand, ctx) + ")";
            } else if constexpr (std::is_same_v<T, script::Binary>) {
                const std::string a = emit_expr(*n.lhs, ctx);
                const std::string b = emit_expr(*n.rhs, ctx);
                switch (n.op) {
                    case script::BinOp::Add: return "(" + a + " + " + b + ")";
                    case script::BinOp::Sub: return "(" + a + " - " + b + ")";
                    case script::BinOp::Mul: return "(" + a + " * " + b + ")";
                    case script::BinOp::Div: return "(" + a + " / " + b + ")";
                    case script::BinOp::Mod: return "std::fmod(" + a + ", " + b + ")";
                }
                bug(e, "unreachable");
            } else if constexpr (std::is_same_v<T, script::Call>) {
                return emit_call(e, n, ctx);
            } else if constexpr (std::is_same_v<T, script::Observe>) {
                const double when = std::get<script::Number>(n.time->node).value;
                return "OBS_" + n.var + "_" + std::to_string(ctx.grid->index_of(when));
            } else if constexpr (std::is_same_v<T, script::Select>) {
                return "(" + emit_cond(*n.cond, ctx) + " ? " +
                       emit_expr(*n.then_value, ctx) + " : " +
                       emit_expr(*n.else_value, ctx) + ")";
            } else {
                bug(e, "expression not representable in generated code");
            }
        },
        e.node);
}

// Emits a batch-shape guard for every zeros/ones call nested in an init
// expression (the interpreter enforces shape == batchsize at eval time).
void emit_shape_checks(const Expr& e, const EmitCtx& ctx, std::ostream& out);

void emit_shape_checks(const script::Cond& c, const EmitCtx& ctx, std::ostream& out) {
    if (const auto* cmp = std::get_if<script::Compare>(&c.node)) {
        emit_shape_checks(*cmp->lhs, ctx, out);
        emit_shape_checks(*cmp->rhs, ctx, out);
        return;
    }
    const auto& b = std::get<script::BoolBin>(c.node);
    emit_shape_checks(*b.lhs, ctx, out);
    emit_shape_checks(*b.rhs, ctx, out);
}

void emit_shape_checks(const Expr& e, const EmitCtx& ctx, std::ostream& out) {
    std::visit(
        [&](const auto& n) {
            using T = std::decay_t<decltype(n)>;
            if constexpr (std::is_same_v<T, script::Neg>) {
                emit_shape_checks(*n.operand, ctx, out);
            } else if constexpr (std::is_same_v<T, script::Binary>) {
                emit_shape_checks(*n.lhs, ctx, out);
                emit_shape_checks(*n.rhs, ctx, out);
            } else if constexpr (std::is_same_v<T, script::Call>) {
                if ((n.fn == "zeros" || n.fn == "ones") && !n.args.empty()) {
                    const auto& shape = std::get<script::ListLit>(n.args[0]->node);
                    out << "        if (!((" << emit_expr(*shape.items[0], ctx)
                        << ") == (double)batch)) {\n"
                        << "            chey_err(errbuf, errlen, \"'" << n.fn
                        << "' shape must equal batchsize\");\n"
                        << "            return 2;\n        }\n";
                } else {
                    for (const auto& a : n.args) emit_shape_checks(*a, ctx, out);
                }
            } else if constexpr (std::is_same_v<T, script::Observe>) {
                emit_shape_checks(*n.time, ctx, out);
            } else if constexpr (std::is_same_v<T, script::ListLit>) {
                for (const auto& a : n.items) emit_shape_checks(*a, ctx, out);
            } else if constexpr (std::is_same_v<T, script::Select>) {
                emit_shape_checks(*n.cond, ctx, out);
                emit_shape_checks(*n.then_value, ctx, out);
                emit_shape_checks(*n.else_value, ctx, out);
            }
        },
        e.node);
}

void emit_name_table(std::ostream& out, const std::string& what,
                     const std::vector<std::string>& names) {
    out << "unsigned long long chey_n_" << what << "(void) { return " << names.size()
        << "ull; }\n";
    out << "const char* chey_" << what << "_name(unsigned long long i) {\n";
    if (names.empty()) {
        out << "    (void)i;\n    return \"\";\n}\n\n";
        return;
    }
    out << "    static const char* const names[] = {";
    for (std::size_t i = 0; i < names.size(); ++i)
        out << (i ? ", " : "") << cstring(names[i]);
    out << "};\n    return names[i];\n}\n\n";
}

// RNG identical to the host implementation: Philox4x32-10 keyed by the seed
// with counter (path, step, brownian, 0), uniform from the top 53 bits, and
// the AS241 rational approximation of the normal inverse CDF.
const char* kRngSource = R"RNG(inline void chey_mul_hi_lo(uint32_t a, uint32_t b, uint32_t* lo, uint32_t* hi) {
    const uint64_t p = (uint64_t)a * b;
    *lo = (uint32_t)p;
    *hi = (uint32_t)(p >> 32);
}

inline void chey_philox(uint32_t c0, uint32_t c1, uint32_t c2, uint32_t c3, uint32_t k0,
                        uint32_t k1, uint32_t out[4]) {
    for (int round = 0; round < 10; ++round) {
        uint32_t lo0, hi0, lo1, hi1;
        chey_mul_hi_lo(0xD2511F53u, c0, &lo0, &hi0);
        chey_mul_hi_lo(0xCD9E8D57u, c2, &lo1, &hi1);
        const uint32_t n0 = hi1 ^ c1 ^ k0;
        const uint32_t n1 = lo1;
        const uint32_t n2 = hi0 ^ c3 ^ k1;
        const uint32_t n3 = lo0;
        c0 = n0;
        c1 = n1;
        c2 = n2;
        c3 = n3;
        k0 += 0x9E3779B9u;
        k1 += 0xBB67AE85u;
    }
    out[0] = c0;
    out[1] = c1;
    out[2] = c2;
    out[3] = c3;
}

inline double chey_uniform(uint32_t hi, uint32_t lo) {
    const uint64_t bits = ((uint64_t)hi << 32) | lo;
    return (double)(bits >> 11) * 0x1.0p-53 + 0x1.0p-54;
}

double chey_ppnd16(double u) {
    if (!(u > 0.0 && u < 1.0)) return 0.0 / 0.0;
    const double q = u - 0.5;
    if (std::fabs(q) <= 0.425) {
        const double r = 0.180625 - q * q;
        return q *
               (((((((2.5090809287301226727e+3 * r + 3.3430575583588128105e+4) * r +
                     6.7265770927008700853e+4) * r + 4.5921953931549871457e+4) * r +
                   1.3731693765509461125e+4) * r + 1.9715909503065514427e+3) * r +
                 1.3314166789178437745e+2) * r + 3.3871328727963666080e+0) /
               (((((((5.2264952788528545610e+3 * r + 2.8729085735721942674e+4) * r +
                     3.9307895800092710610e+4) * r + 2.1213794301586595867e+4) * r +
                   5.3941960214247511077e+3) * r + 6.8718700749205790830e+2) * r +
                 4.2313330701600911252e+1) * r + 1.0);
    }
    double r = q < 0.0 ? u : 1.0 - u;
    r = std::sqrt(-std::log(r));
    double value;
    if (r <= 5.0) {
        r -= 1.6;
        value = (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r +
                      2.41780725177450611770e-1) * r + 1.27045825245236838258e+0) * r +
                    3.64784832476320460504e+0) * r + 5.76949722146069140550e+0) * r +
                  4.63033784615654529590e+0) * r + 1.42343711074968357734e+0) /
                (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r +
                      1.51986665636164571966e-2) * r + 1.48103976427480074590e-1) * r +
                    6.89767334985100004550e-1) * r + 1.67638483018380384940e+0) * r +
                  2.05319162663775882187e+0) * r + 1.0);
    } else {
        r -= 5.0;
        value = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r +
                      1.24266094738807843860e-3) * r + 2.65321895265761230930e-2) * r +
                    2.96560571828504891230e-1) * r + 1.78482653991729133580e+0) * r +
                  5.46378491116411436990e+0) * r + 6.65790464350110377720e+0) /
                (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r +
                      1.84631831751005468180e-5) * r + 7.86869131145613259100e-4) * r +
                    1.48753612908506148525e-2) * r + 1.36929880922735805310e-1) * r +
                  5.99832206555887937690e-1) * r + 1.0);
    }
    return q < 0.0 ? -value : value;
}

inline double chey_normal(uint64_t seed, uint32_t a, uint32_t b, uint32_t c) {
    uint32_t w[4];
    chey_philox(a, b, c, 0u, (uint32_t)seed, (uint32_t)(seed >> 32), w);
    return chey_ppnd16(chey_uniform(w[0], w[1]));
}

inline double chey_pos(double x) { return x > 0.0 ? x : 0.0; }
inline double chey_max(double x, double y) { return x > y ? x : y; }
inline double chey_min(double x, double y) { return x < y ? x : y; }

void chey_err(char* errbuf, unsigned long long errlen, const char* msg) {
    if (errbuf && errlen > 0) snprintf(errbuf, (size_t)errlen, "%s", msg);
}
)RNG";

}  // namespace

std::string generate_code(const CheckedProgram& program, const std::string& profile,
                          const GridHints& hints) {
    if (profile != "cpp")
        throw ValidationError("unknown codegen profile '" + profile + "'");
    const SimulationPlan plan = compile(program, hints);
    const CheckedProgram& prog = plan.program;
    const TimeGrid& grid = plan.grid;
    const std::size_t n_br = prog.brownians.size();
    const std::size_t n_steps = grid.n_steps();

    // Sorted state set mirrors the interpreter's std::map iteration so the
    // non-finite scan reports the same variable first.
    std::vector<std::string> state(prog.stepped.begin(), prog.stepped.end());
    state.insert(state.end(), prog.assigned.begin(), prog.assigned.end());
    std::sort(state.begin(), state.end());

    const std::vector<std::string> externals(plan.used_externals.begin(),
                                             plan.used_externals.end());
    std::vector<std::string> payoff_names;
    for (const auto& payoff : prog.payoffs) payoff_names.push_back(payoff.name);

    EmitCtx at0{&prog, &grid, "0.0", false};
    EmitCtx inc{&prog, &grid, "t0", true};
    EmitCtx asn{&prog, &grid, "t1", true};

    std::ostringstream out;
    out << "// generated simulation kernel (cpp backend)\n"
        << "// self-contained: embeds the time grid, the counter-based RNG and the\n"
        << "// step recursion; compile with -ffp-contract=off for bit parity.\n"
        << "#include <cmath>\n"
        << "#include <cstdint>\n"
        << "#include <cstdio>\n\n"
        << "namespace {\n\n"
        << "using std::uint32_t;\nusing std::uint64_t;\nusing std::size_t;\nusing std::snprintf;\n\n"
        << kRngSource << "\n";

    out << "const double k_times[" << grid.times.size() << "] = {";
    for (std::size_t i = 0; i < grid.times.size(); ++i)
        out << (i ? ", " : "") << lit(grid.times[i]);
    out << "};\n\n";

    // Constant correlation structure is factored once, as in compile().
    if (plan.constant_correlation && !prog.correlations.empty()) {
        for (std::size_t i = 0; i < n_br; ++i)
            for (std::size_t j = 0; j <= i; ++j)
                out << "const double k_lower_" << i << "_" << j << " = "
                    << lit(plan.constant_lower[i][j]) << ";\n";
        out << "\n";
    }

    out << "}  // namespace\n\n"
        << "extern \"C\" {\n\n"
        << "typedef double (*chey_ext_fn)(void* ctx, double x);\n"
        << "typedef struct { chey_ext_fn fn; void* ctx; } chey_ext;\n\n";

    emit_name_table(out, "payoffs", payoff_names);
    emit_name_table(out, "params", prog.free_params);
    emit_name_table(out, "externals", externals);
    out << "unsigned long long chey_n_steps(void) { return " << n_steps << "ull; }\n"
        << "unsigned long long chey_n_brownians(void) { return " << n_br << "ull; }\n\n";

    for (std::size_t i = 0; i < externals.size(); ++i)
        out << "#define EXT_" << externals[i] << "(x) (externals[" << i
            << "].fn(externals[" << i << "].ctx, (x)))\n";
    if (!externals.empty()) out << "\n";

    out << "int chey_simulate(unsigned long long seed, unsigned long long batch, int antithetic,\n"
        << "                  const double* params, const double* const* param_vectors,\n"
        << "                  const double* injected, const chey_ext* externals,\n"
        << "                  double* samples, char* errbuf, unsigned long long errlen) {\n"
        << "    (void)params; (void)param_vectors; (void)injected; (void)externals;\n"
        << "    if (batch < 1) {\n"
        << "        chey_err(errbuf, errlen, \"batch size must be positive\");\n"
        << "        return 2;\n    }\n"
        << "    if (antithetic && batch % 2 != 0) {\n"
        << "        chey_err(errbuf, errlen, \"antithetic batches must have even size\");\n"
        << "        return 2;\n    }\n"
        << "    const unsigned long long base = antithetic ? batch / 2 : batch;\n"
        << "    (void)base;\n"
        << "    for (unsigned long long p = 0; p < batch; ++p) {\n";

    for (std::size_t i = 0; i < prog.free_params.size(); ++i)
        out << "        const double P_" << prog.free_params[i]
            << " = (param_vectors && param_vectors[" << i << "]) ? param_vectors[" << i
            << "][p] : params[" << i << "];\n";
    for (const auto& v : state) out << "        double S_" << v << " = 0.0;\n";
    for (const auto& v : prog.shadow_vars) out << "        double PS_" << v << " = 0.0;\n";

    // Observation capture slots, one per (variable, grid index).
    std::vector<std::pair<std::string, std::size_t>> obs_slots;
    for (const auto& [var, when] : plan.needed_obs)
        obs_slots.emplace_back(var, grid.index_of(when));
    for (const auto& [var, idx] : obs_slots)
        out << "        double OBS_" << var << "_" << idx << " = 0.0;\n";
    for (std::size_t i = 0; i < prog.payoffs.size(); ++i) {
        if (prog.payoffs[i].mode_expr) out << "        double MODE_" << i << " = 0.0;\n";
        if (prog.payoffs[i].mode == script::DiscountMode::NumeraireBy)
            out << "        double NUM0_" << i << " = 0.0;\n";
    }

    out << "\n        // t = 0 state\n";
    for (const auto& [var, expr] : prog.explicit_inits) {
        emit_shape_checks(*expr, at0, out);
        out << "        S_" << var << " = " << emit_expr(*expr, at0) << ";\n";
    }
    for (const auto& [var, expr] : prog.derived_inits) {
        emit_shape_checks(*expr, at0, out);
        out << "        S_" << var << " = " << emit_expr(*expr, at0) << ";\n";
    }
    for (const auto& v : state)
        out << "        if (!(std::isfinite(S_" << v << "))) {\n"
            << "            chey_err(errbuf, errlen, \"non-finite value in '" << v
            << "' at step 0 (t=0)\");\n            return 1;\n        }\n";

    for (const auto& [var, idx] : obs_slots)
        if (idx == 0)
            out << "        OBS_" << var << "_0 = S_" << var << ";\n";
    for (std::size_t i = 0; i < prog.payoffs.size(); ++i) {
        const ConcretePayoff& payoff = prog.payoffs[i];
        if (payoff.mode == script::DiscountMode::NumeraireBy)
            out << "        NUM0_" << i << " = " << emit_expr(*payoff.mode_expr, at0)
                << ";\n";
        if (payoff.mode_expr && grid.index_of(payoff.pay_time) == 0)
            out << "        MODE_" << i << " = " << emit_expr(*payoff.mode_expr, at0)
                << ";\n";
    }

    if (n_steps > 0) {
        out << "\n        for (unsigned long long k = 0; k < " << n_steps << "ull; ++k) {\n"
            << "            const double t0 = k_times[k];\n"
            << "            const double t1 = k_times[k + 1];\n"
            << "            const double dt = t1 - t0;\n"
            << "            const double sqrtdt = std::sqrt(dt);\n"
            << "            (void)t0; (void)sqrtdt;\n";

        for (const auto& v : prog.shadow_vars)
            out << "            PS_" << v << " = S_" << v << ";\n";

        if (n_br > 0) {
            out << "            const unsigned long long bp = (p < base) ? p : (p - base);\n";
            for (std::size_t b = 0; b < n_br; ++b) {
                out << "            double XI_" << b << " = injected ? injected[(k * "
                    << n_br << "ull + " << b << "ull) * base + bp]\n"
                    << "                                     : chey_normal(seed, (uint32_t)bp, (uint32_t)k, "
                    << b << "u);\n"
                    << "            if (p >= base) XI_" << b << " = -XI_" << b << ";\n";
            }
        }

        const bool correlated = !prog.correlations.empty();
        if (correlated && !plan.constant_correlation) {
            // Per-step correlation matrix and PSD Cholesky, mirroring the
            // interpreter's factorisation step for step.
            out << "            double CR[" << n_br << "][" << n_br << "];\n"
                << "            for (int ci = 0; ci < " << (int)n_br << "; ++ci)\n"
                << "                for (int cj = 0; cj < " << (int)n_br << "; ++cj)\n"
                << "                    CR[ci][cj] = ci == cj ? 1.0 : 0.0;\n";
            const auto br_index = [&](const std::string& name) {
                for (std::size_t i = 0; i < n_br; ++i)
                    if (prog.brownians[i] == name) return i;
                throw RuntimeError("codegen: unknown Brownian d_" + name);
            };
            for (std::size_t c = 0; c < prog.correlations.size(); ++c) {
                const auto& entry = prog.correlations[c];
                const std::size_t i = br_index(entry.a);
                const std::size_t j = br_index(entry.b);
                out << "            const double RHO_" << c << " = "
                    << emit_expr(*entry.rho, inc) << ";\n"
                    << "            if (!(RHO_" << c << " >= -1.0 && RHO_" << c
                    << " <= 1.0)) {\n"
                    << "                chey_err(errbuf, errlen, \"correlation of d_"
                    << entry.a << " and d_" << entry.b << " is outside [-1, 1]\");\n"
                    << "                return 2;\n            }\n"
                    << "            CR[" << i << "][" << j << "] = RHO_" << c << ";\n"
                    << "            CR[" << j << "][" << i << "] = RHO_" << c << ";\n";
            }
            out << "            double L[" << n_br << "][" << n_br << "];\n"
                << "            for (int ci = 0; ci < " << (int)n_br << "; ++ci)\n"
                << "                for (int cj = 0; cj < " << (int)n_br << "; ++cj)\n"
                << "                    L[ci][cj] = 0.0;\n"
                << "            for (int ci = 0; ci < " << (int)n_br << "; ++ci) {\n"
                << "                for (int cj = 0; cj <= ci; ++cj) {\n"
                << "                    double sum = CR[ci][cj];\n"
                << "                    for (int ck = 0; ck < cj; ++ck) sum -= L[ci][ck] * L[cj][ck];\n"
                << "                    if (ci == cj) {\n"
                << "                        if (sum < -1e-10) {\n"
                << "                            chey_err(errbuf, errlen, \"correlation matrix is not positive semidefinite\");\n"
                << "                            return 2;\n                        }\n"
                << "                        L[ci][ci] = std::sqrt(sum > 0.0 ? sum : 0.0);\n"
                << "                    } else if (L[cj][cj] > 0.0) {\n"
                << "                        L[ci][cj] = sum / L[cj][cj];\n"
                << "                    } else if (std::fabs(sum) > 1e-10) {\n"
                << "                        chey_err(errbuf, errlen, \"correlation matrix is not positive semidefinite\");\n"
                << "                        return 2;\n                    }\n"
                << "                }\n            }\n";
        }

        for (std::size_t b = 0; b < n_br; ++b) {
            if (!correlated) {
                out << "            const double DB_" << b << " = sqrtdt * XI_" << b
                    << ";\n";
            } else if (plan.constant_correlation) {
                out << "            double ACC_" << b << " = k_lower_" << b << "_0 * XI_0;\n";
                for (std::size_t j = 1; j <= b; ++j)
                    out << "            ACC_" << b << " += k_lower_" << b << "_" << j
                        << " * XI_" << j << ";\n";
                out << "            const double DB_" << b << " = sqrtdt * ACC_" << b
                    << ";\n";
            } else {
                out << "            double ACC_" << b << " = L[" << b << "][0] * XI_0;\n";
                for (std::size_t j = 1; j <= b; ++j)
                    out << "            ACC_" << b << " += L[" << b << "][" << j
                        << "] * XI_" << j << ";\n";
                out << "            const double DB_" << b << " = sqrtdt * ACC_" << b
                    << ";\n";
            }
        }

        out << "\n";
        for (const auto& op : prog.increments)
            out << "            S_" << op.var << " = S_" << op.var << " + ("
                << emit_expr(*op.rhs, inc) << ");\n";
        for (const auto& op : prog.assignments)
            out << "            S_" << op.var << " = " << emit_expr(*op.rhs, asn) << ";\n";

        for (const auto& v : state)
            out << "            if (!(std::isfinite(S_" << v << "))) {\n"
                << "                char msg[160];\n"
                << "                snprintf(msg, sizeof msg, \"non-finite value in '" << v
                << "' at step %llu (t=%.17g)\", k + 1, t1);\n"
                << "                chey_err(errbuf, errlen, msg);\n"
                << "                return 1;\n            }\n";

        for (const auto& [var, idx] : obs_slots)
            if (idx > 0)
                out << "            if (k + 1 == " << idx << "ull) OBS_" << var << "_"
                    << idx << " = S_" << var << ";\n";
        for (std::size_t i = 0; i < prog.payoffs.size(); ++i) {
            const ConcretePayoff& payoff = prog.payoffs[i];
            if (!payoff.mode_expr) continue;
            const std::size_t idx = grid.index_of(payoff.pay_time);
            if (idx > 0)
                out << "            if (k + 1 == " << idx << "ull) MODE_" << i << " = "
                    << emit_expr(*payoff.mode_expr, asn) << ";\n";
        }
        out << "        }\n";
    }

    out << "\n        // payoffs\n";
    EmitCtx pay{&prog, &grid, "0.0", false};
    for (std::size_t i = 0; i < prog.payoffs.size(); ++i) {
        const ConcretePayoff& payoff = prog.payoffs[i];
        out << "        {\n            const double PV = " << emit_expr(*payoff.expr, pay)
            << ";\n";
        switch (payoff.mode) {
            case script::DiscountMode::NoDiscount:
                out << "            samples[" << i << "ull * batch + p] = PV;\n";
                break;
            case script::DiscountMode::DiscountBy:
                out << "            samples[" << i << "ull * batch + p] = PV * MODE_" << i
                    << ";\n";
                break;
            case script::DiscountMode::NumeraireBy:
                out << "            samples[" << i << "ull * batch + p] = NUM0_" << i
                    << " * (PV / MODE_" << i << ");\n";
                break;
        }
        out << "        }\n";
    }

    out << "    }\n    return 0;\n}\n\n}  // extern \"C\"\n";
    return out.str();
}

std::string source_hash(const std::string& source) {
    std::uint64_t h = 1469598103934665603ull;
    for (const unsigned char c : source) {
        h ^= c;
        h *= 1099511628211ull;
    }
    char buf[32];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string codegen_manifest(const std::string& source, const std::string& profile) {
    std::time_t now = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&now, &tm);
    char stamp[32];
    std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", &tm);
    nlohmann::ordered_json doc;
    doc["program_hash"] = "fnv1a64:" + source_hash(source);
    doc["backend_profile"] = profile;
    doc["generated_at"] = stamp;
    return doc.dump(2) + "\n";
}

GeneratedModule::GeneratedModule(const std::string& source, const std::string& workdir) {
    namespace fs = std::filesystem;
    fs::create_directories(workdir);
    const fs::path src = fs::path(workdir) / "kernel.cpp";
    const fs::path lib = fs::path(workdir) / "kernel.so";
    const fs::path log = fs::path(workdir) / "compile.log";
    {
        std::ofstream file(src);
        if (!file) throw RuntimeError("cannot write " + src.string());
        file << source;
    }
    const char* cxx = std::getenv("CHEY_CXX");
    const std::string compiler = cxx && *cxx ? cxx : "c++";
    const std::string cmd = compiler + " -O2 -std=c++20 -ffp-contract=off -fPIC -shared -o '" +
                            lib.string() + "' '" + src.string() + "' 2> '" + log.string() +
                            "'";
    if (std::system(cmd.c_str()) != 0) {
        std::ifstream file(log);
        std::stringstream tail;
        tail << file.rdbuf();
        std::string text = tail.str();
        if (text.size() > 2000) text = "..." + text.substr(text.size() - 2000);
        throw RuntimeError("generated code failed to compile:\n" + text);
    }
    handle_ = dlopen(lib.c_str(), RTLD_NOW | RTLD_LOCAL);
    if (!handle_) throw RuntimeError(std::string("dlopen failed: ") + dlerror());
    const auto resolve = [&](const char* name) {
        void* sym = dlsym(handle_, name);
        if (!sym) throw RuntimeError(std::string("missing symbol '") + name + "'");
        return sym;
    };
    n_payoffs_ = reinterpret_cast<std::uint64_t (*)()>(resolve("chey_n_payoffs"));
    payoff_name_ =
        reinterpret_cast<const char* (*)(std::uint64_t)>(resolve("chey_payoffs_name"));
    n_params_ = reinterpret_cast<std::uint64_t (*)()>(resolve("chey_n_params"));
    param_name_ =
        reinterpret_cast<const char* (*)(std::uint64_t)>(resolve("chey_params_name"));
    n_externals_ = reinterpret_cast<std::uint64_t (*)()>(resolve("chey_n_externals"));
    external_name_ =
        reinterpret_cast<const char* (*)(std::uint64_t)>(resolve("chey_externals_name"));
    n_steps_ = reinterpret_cast<std::uint64_t (*)()>(resolve("chey_n_steps"));
    n_brownians_ = reinterpret_cast<std::uint64_t (*)()>(resolve("chey_n_brownians"));
    simulate_ = reinterpret_cast<int (*)(std::uint64_t, std::uint64_t, int, const double*,
                                         const double* const*, const double*, const void*,
                                         double*, char*, std::uint64_t)>(
        resolve("chey_simulate"));
}

GeneratedModule::~GeneratedModule() {
    if (handle_) dlclose(handle_);
}

namespace {
std::vector<std::string> name_list(std::uint64_t (*count)(),
                                   const char* (*name)(std::uint64_t)) {
    std::vector<std::string> out;
    for (std::uint64_t i = 0; i < count(); ++i) out.emplace_back(name(i));
    return out;
}
}  // namespace

std::vector<std::string> GeneratedModule::payoff_names() const {
    return name_list(n_payoffs_, payoff_name_);
}
std::vector<std::string> GeneratedModule::param_names() const {
    return name_list(n_params_, param_name_);
}
std::vector<std::string> GeneratedModule::external_names() const {
    return name_list(n_externals_, external_name_);
}
std::size_t GeneratedModule::n_steps() const { return n_steps_(); }
std::size_t GeneratedModule::n_brownians() const { return n_brownians_(); }

std::vector<std::vector<double>> GeneratedModule::run(
    std::uint64_t seed, std::size_t batch, bool antithetic, const std::vector<double>& params,
    const std::vector<const double*>& param_vectors, const std::vector<double>* injected,
    const std::vector<Ext>& externals) const {
    const std::size_t n_pay = n_payoffs_();
    if (params.size() != n_params_())
        throw ValidationError("generated module expects " + std::to_string(n_params_()) +
                              " parameters");
    if (!param_vectors.empty() && param_vectors.size() != params.size())
        throw ValidationError("param_vectors must match parameter count");
    if (externals.size() != n_externals_())
        throw ValidationError("generated module expects " + std::to_string(n_externals_()) +
                              " external functions");
    const std::size_t base = antithetic ? batch / 2 : batch;
    if (injected && injected->size() != n_steps_() * n_brownians_() * base)
        throw ValidationError("injected draws must have steps*brownians*base size");

    std::vector<double> samples(n_pay * batch);
    char errbuf[256] = {0};
    const int rc = simulate_(seed, batch, antithetic ? 1 : 0, params.data(),
                             param_vectors.empty() ? nullptr : param_vectors.data(),
                             injected ? injected->data() : nullptr,
                             externals.empty() ? nullptr
                                               : static_cast<const void*>(externals.data()),
                             samples.data(), errbuf, sizeof errbuf);
    if (rc == 2) throw ValidationError(errbuf);
    if (rc != 0) throw RuntimeError(errbuf);
    std::vector<std::vector<double>> out(n_pay);
    for (std::size_t i = 0; i < n_pay; ++i)
        out[i].assign(samples.begin() + i * batch, samples.begin() + (i + 1) * batch);
    return out;
}

}  // namespace cheyette::sim
