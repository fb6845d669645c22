#include <algorithm>
#include <cmath>
#include <cstdint>
#include <sstream>

#include "cheyette/errors.hpp"
#include "cheyette/sim/engine.hpp"
#include "cheyette/sim/rng.hpp"
#include "cheyette/support.hpp"

namespace cheyette::sim {

namespace {

using script::BinOp;
using script::CheckedProgram;
using script::CmpOp;
using script::ConcretePayoff;
using script::Expr;
using script::ExprPtr;

// Expression value over the path batch: a broadcast scalar, a borrowed state
// vector, or an owned result vector.
struct Value {
    enum class Kind { Scalar, Ref, Own } kind = Kind::Scalar;
    double s = 0.0;
    const std::vector<double>* ref = nullptr;
    std::vector<double> own;

    static Value scalar(double x) { return {Kind::Scalar, x, nullptr, {}}; }
    static Value borrow(const std::vector<double>& v) { return {Kind::Ref, 0.0, &v, {}}; }
    static Value take(std::vector<double>&& v) {
        return {Kind::Own, 0.0, nullptr, std::move(v)};
    }
    bool is_scalar() const { return kind == Kind::Scalar; }
    double at(std::size_t p) const {
        return kind == Kind::Scalar ? s : (kind == Kind::Ref ? (*ref)[p] : own[p]);
    }
};

struct Mask {
    bool scalar = true;
    bool b = false;
    std::vector<char> vec;
    bool at(std::size_t p) const { return scalar ? b : vec[p] != 0; }
};

struct Env {
    std::map<std::string, std::vector<double>>* state = nullptr;
    const std::map<std::string, Value>* locals = nullptr;
    const std::map<std::string, Value>* bindings = nullptr;
    const std::map<std::string, std::function<double(double)>>* externals = nullptr;
    const std::map<std::pair<std::string, double>, std::vector<double>>* obs = nullptr;
    double t = 0.0;
    std::size_t batch = 0;
    bool init_context = false;  // zeros/ones usable
};

[[noreturn]] void fail(const Expr& at, const std::string& msg) {
    std::ostringstream out;
    out << "script:" << at.line << ":" << at.col << ": " << msg;
    throw RuntimeError(out.str());
}

template <class F>
Value map1(const Value& a, std::size_t batch, F f) {
    if (a.is_scalar()) return Value::scalar(f(a.s));
    std::vector<double> out(batch);
    for (std::size_t p = 0; p < batch; ++p) out[p] = f(a.at(p));
    return Value::take(std::move(out));
}

template <class F>
Value map2(const Value& a, const Value& b, std::size_t batch, F f) {
    if (a.is_scalar() && b.is_scalar()) return Value::scalar(f(a.s, b.s));
    std::vector<double> out(batch);
    for (std::size_t p = 0; p < batch; ++p) out[p] = f(a.at(p), b.at(p));
    return Value::take(std::move(out));
}

Value eval(const Expr& e, const Env& env);

Mask eval_cond(const script::Cond& c, const Env& env) {
    if (const auto* cmp = std::get_if<script::Compare>(&c.node)) {
        const Value a = eval(*cmp->lhs, env);
        const Value b = eval(*cmp->rhs, env);
        const auto test = [op = cmp->op](double x, double y) {
            switch (op) {
                case CmpOp::Lt: return x < y;
                case CmpOp::Le: return x <= y;
                case CmpOp::Gt: return x > y;
                case CmpOp::Ge: return x >= y;
                case CmpOp::Eq: return x == y;
                case CmpOp::Ne: return x != y;
            }
            return false;
        };
        if (a.is_scalar() && b.is_scalar()) return Mask{true, test(a.s, b.s), {}};
        Mask out{false, false, std::vector<char>(env.batch)};
        for (std::size_t p = 0; p < env.batch; ++p) out.vec[p] = test(a.at(p), b.at(p));
        return out;
    }
    const auto& bb = std::get<script::BoolBin>(c.node);
    const Mask a = eval_cond(*bb.lhs, env);
    const Mask b = eval_cond(*bb.rhs, env);
    const auto combine = [conj = bb.conjunction](bool x, bool y) {
        return conj ? (x && y) : (x || y);
    };
    if (a.scalar && b.scalar) return Mask{true, combine(a.b, b.b), {}};
    Mask out{false, false, std::vector<char>(env.batch)};
    for (std::size_t p = 0; p < env.batch; ++p) out.vec[p] = combine(a.at(p), b.at(p));
    return out;
}

Value eval_call(const Expr& e, const script::Call& call, const Env& env) {
    if (call.fn == "oneslike") return Value::scalar(1.0);
    if (call.fn == "zeroslike") return Value::scalar(0.0);
    if (call.fn == "zeros" || call.fn == "ones") {
        if (!env.init_context) fail(e, "'" + call.fn + "' outside init");
        const auto& shape = std::get<script::ListLit>(call.args[0]->node);
        const Value n = eval(*shape.items[0], env);
        if (!n.is_scalar() || !(n.s == static_cast<double>(env.batch)))
            fail(e, "'" + call.fn + "' shape must equal batchsize");
        return Value::take(
            std::vector<double>(env.batch, call.fn == "ones" ? 1.0 : 0.0));
    }
    if (const auto ext = env.externals->find(call.fn); ext != env.externals->end()) {
        const Value a = eval(*call.args[0], env);
        return map1(a, env.batch, [&](double x) { return ext->second(x); });
    }
    if (call.fn == "max" || call.fn == "min") {
        const Value a = eval(*call.args[0], env);
        const Value b = eval(*call.args[1], env);
        if (call.fn == "max")
            return map2(a, b, env.batch, [](double x, double y) { return x > y ? x : y; });
        return map2(a, b, env.batch, [](double x, double y) { return x < y ? x : y; });
    }
    const Value a = eval(*call.args[0], env);
    if (call.fn == "exp") return map1(a, env.batch, [](double x) { return std::exp(x); });
    if (call.fn == "ln" || call.fn == "log")
        return map1(a, env.batch, [](double x) { return std::log(x); });
    if (call.fn == "sqrt") return map1(a, env.batch, [](double x) { return std::sqrt(x); });
    if (call.fn == "positivepart")
        return map1(a, env.batch, [](double x) { return x > 0.0 ? x : 0.0; });
    if (call.fn == "abs") return map1(a, env.batch, [](double x) { return std::fabs(x); });
    if (call.fn == "floor") return map1(a, env.batch, [](double x) { return std::floor(x); });
    fail(e, "unknown function '" + call.fn + "'");
}

Value eval(const Expr& e, const Env& env) {
    return std::visit(
        [&](const auto& n) -> Value {
            using T = std::decay_t<decltype(n)>;
            if constexpr (std::is_same_v<T, script::Number>) {
                return Value::scalar(n.value);
            } else if constexpr (std::is_same_v<T, script::Name>) {
                if (env.locals) {
                    const auto it = env.locals->find(n.id);
                    if (it != env.locals->end()) {
                        const Value& v = it->second;
                        return v.is_scalar()
                                   ? Value::scalar(v.s)
                                   : Value::borrow(v.kind == Value::Kind::Own ? v.own
                                                                              : *v.ref);
                    }
                }
                if (n.id == "t") return Value::scalar(env.t);
                if (n.id == "batchsize")
                    return Value::scalar(static_cast<double>(env.batch));
                if (env.state) {
                    const auto it = env.state->find(n.id);
                    if (it != env.state->end()) return Value::borrow(it->second);
                }
                const auto it = env.bindings->find(n.id);
                if (it != env.bindings->end()) {
                    const Value& v = it->second;
                    return v.is_scalar() ? Value::scalar(v.s) : Value::borrow(v.own);
                }
                fail(e, "unbound name '" + n.id + "'");
            } else if constexpr (std::is_same_v<T, script::Neg>) {
                return map1(eval(*n.operand, env), env.batch,
                            [](double x) { return -x; });
            } else if constexpr (std::is_same_v<T, script::Binary>) {
                const Value a = eval(*n.lhs, env);
                const Value b = eval(*n.rhs, env);
                switch (n.op) {
                    case BinOp::Add:
                        return map2(a, b, env.batch, [](double x, double y) { return x + y; });
                    case BinOp::Sub:
                        return map2(a, b, env.batch, [](double x, double y) { return x - y; });
                    case BinOp::Mul:
                        return map2(a, b, env.batch, [](double x, double y) { return x * y; });
                    case BinOp::Div:
                        return map2(a, b, env.batch, [](double x, double y) { return x / y; });
                    case BinOp::Mod:
                        return map2(a, b, env.batch,
                                    [](double x, double y) { return std::fmod(x, y); });
                }
                fail(e, "unreachable");
            } else if constexpr (std::is_same_v<T, script::Call>) {
                return eval_call(e, n, env);
            } else if constexpr (std::is_same_v<T, script::Observe>) {
                const double when = std::get<script::Number>(n.time->node).value;
                if (!env.obs) fail(e, "observations unavailable in this context");
                const auto it = env.obs->find({n.var, when});
                if (it == env.obs->end())
                    fail(e, "missing observation " + n.var + "@" + num17(when));
                return Value::borrow(it->second);
            } else if constexpr (std::is_same_v<T, script::Select>) {
                const Mask m = eval_cond(*n.cond, env);
                const Value a = eval(*n.then_value, env);
                const Value b = eval(*n.else_value, env);
                if (m.scalar && a.is_scalar() && b.is_scalar())
                    return Value::scalar(m.b ? a.s : b.s);
                std::vector<double> out(env.batch);
                for (std::size_t p = 0; p < env.batch; ++p)
                    out[p] = m.at(p) ? a.at(p) : b.at(p);
                return Value::take(std::move(out));
            } else {
                fail(e, "expression not usable at runtime");
            }
        },
        e.node);
}

void collect_externals(const ExprPtr& e, const std::set<std::string>& known,
                       std::set<std::string>* out);

void collect_externals(const script::CondPtr& c, const std::set<std::string>& known,
                       std::set<std::string>* out) {
    if (const auto* cmp = std::get_if<script::Compare>(&c->node)) {
        collect_externals(cmp->lhs, known, out);
        collect_externals(cmp->rhs, known, out);
        return;
    }
    const auto& b = std::get<script::BoolBin>(c->node);
    collect_externals(b.lhs, known, out);
    collect_externals(b.rhs, known, out);
}

void collect_externals(const ExprPtr& e, const std::set<std::string>& known,
                       std::set<std::string>* out) {
    std::visit(
        [&](const auto& n) {
            using T = std::decay_t<decltype(n)>;
            if constexpr (std::is_same_v<T, script::Neg>) {
                collect_externals(n.operand, known, out);
            } else if constexpr (std::is_same_v<T, script::Binary>) {
                collect_externals(n.lhs, known, out);
                collect_externals(n.rhs, known, out);
            } else if constexpr (std::is_same_v<T, script::Call>) {
                if (known.count(n.fn)) out->insert(n.fn);
                for (const auto& a : n.args) collect_externals(a, known, out);
            } else if constexpr (std::is_same_v<T, script::Observe>) {
                collect_externals(n.time, known, out);
            } else if constexpr (std::is_same_v<T, script::ListLit>) {
                for (const auto& a : n.items) collect_externals(a, known, out);
            } else if constexpr (std::is_same_v<T, script::Select>) {
                collect_externals(n.cond, known, out);
                collect_externals(n.then_value, known, out);
                collect_externals(n.else_value, known, out);
            }
        },
        e->node);
}

void collect_observes(const ExprPtr& e, std::vector<std::pair<std::string, double>>* out);

void collect_observes(const script::CondPtr& c,
                      std::vector<std::pair<std::string, double>>* out) {
    if (const auto* cmp = std::get_if<script::Compare>(&c->node)) {
        collect_observes(cmp->lhs, out);
        collect_observes(cmp->rhs, out);
        return;
    }
    const auto& b = std::get<script::BoolBin>(c->node);
    collect_observes(b.lhs, out);
    collect_observes(b.rhs, out);
}

void collect_observes(const ExprPtr& e, std::vector<std::pair<std::string, double>>* out) {
    std::visit(
        [&](const auto& n) {
            using T = std::decay_t<decltype(n)>;
            if constexpr (std::is_same_v<T, script::Neg>) {
                collect_observes(n.operand, out);
            } else if constexpr (std::is_same_v<T, script::Binary>) {
                collect_observes(n.lhs, out);
                collect_observes(n.rhs, out);
            } else if constexpr (std::is_same_v<T, script::Call>) {
                for (const auto& a : n.args) collect_observes(a, out);
            } else if constexpr (std::is_same_v<T, script::Observe>) {
                const double when = std::get<script::Number>(n.time->node).value;
                const std::pair<std::string, double> key{n.var, when};
                if (std::find(out->begin(), out->end(), key) == out->end())
                    out->push_back(key);
            } else if constexpr (std::is_same_v<T, script::ListLit>) {
                for (const auto& a : n.items) collect_observes(a, out);
            } else if constexpr (std::is_same_v<T, script::Select>) {
                collect_observes(n.cond, out);
                collect_observes(n.then_value, out);
                collect_observes(n.else_value, out);
            }
        },
        e->node);
}

bool constant_correlations(const CheckedProgram& program) {
    for (const auto& c : program.correlations)
        if (!std::holds_alternative<script::Number>(c.rho->node)) return false;
    return true;
}

}  // namespace

SimulationPlan compile(const script::CheckedProgram& program, const GridHints& hints) {
    if (program.payoffs.empty()) throw ValidationError("program has no payoffs");
    SimulationPlan plan;
    plan.program = program;
    plan.grid = TimeGrid::build(program.observation_times, hints.dt_max);
    for (const auto& payoff : program.payoffs) {
        collect_observes(payoff.expr, &plan.needed_obs);
        if (payoff.mode_expr) collect_observes(payoff.mode_expr, &plan.needed_obs);
    }
    const auto scan_ext = [&](const ExprPtr& e) {
        collect_externals(e, program.external_fns, &plan.used_externals);
    };
    for (const auto& op : program.increments) scan_ext(op.rhs);
    for (const auto& op : program.assignments) scan_ext(op.rhs);
    for (const auto& [var, expr] : program.explicit_inits) scan_ext(expr);
    for (const auto& entry : program.correlations) scan_ext(entry.rho);
    for (const auto& payoff : program.payoffs) {
        scan_ext(payoff.expr);
        if (payoff.mode_expr) scan_ext(payoff.mode_expr);
    }
    plan.constant_correlation = constant_correlations(program);
    if (plan.constant_correlation && !program.correlations.empty()) {
        const auto corr = script::correlation_matrix(program, {}, 0.0);
        plan.constant_lower = script::cholesky_psd(corr);
    }
    return plan;
}

SimOutput simulate(const SimulationPlan& plan, const SimConfig& config) {
    const CheckedProgram& prog = plan.program;
    const std::size_t batch = config.batch;
    if (batch < 1) throw ValidationError("batch size must be positive");
    if (config.antithetic && batch % 2 != 0)
        throw ValidationError("antithetic batches must have even size");
    const std::size_t base = config.antithetic ? batch / 2 : batch;
    const std::size_t n_br = prog.brownians.size();
    const std::size_t n_steps = plan.grid.n_steps();

    std::map<std::string, Value> bindings;
    for (const auto& name : prog.free_params) {
        const auto it = config.bindings.find(name);
        if (it == config.bindings.end())
            throw ValidationError("missing binding for free parameter '" + name + "'");
        if (const auto* x = std::get_if<double>(&it->second)) {
            bindings[name] = Value::scalar(*x);
        } else {
            const auto& v = std::get<std::vector<double>>(it->second);
            if (v.size() != batch)
                throw ValidationError("binding for '" + name +
                                      "' must have one value per path");
            bindings[name] = Value::take(std::vector<double>(v));
        }
    }
    for (const auto& fn : plan.used_externals)
        if (!config.externals.count(fn))
            throw ValidationError("missing external function '" + fn + "'");
    if (config.injected_normals &&
        config.injected_normals->size() != n_steps * n_br * base)
        throw ValidationError("injected draws must have steps*brownians*base size");

    std::map<std::string, std::vector<double>> state;
    for (const auto& v : prog.stepped) state[v] = std::vector<double>(batch, 0.0);
    for (const auto& v : prog.assigned) state[v] = std::vector<double>(batch, 0.0);

    std::map<std::string, Value> locals;
    Env env;
    env.state = &state;
    env.locals = &locals;
    env.bindings = &bindings;
    env.externals = &config.externals;
    env.batch = batch;
    env.t = 0.0;

    const auto store = [&](const std::string& var, Value&& val) {
        std::vector<double>& slot = state[var];
        switch (val.kind) {
            case Value::Kind::Scalar: slot.assign(batch, val.s); break;
            case Value::Kind::Ref: slot = *val.ref; break;
            case Value::Kind::Own: slot = std::move(val.own); break;
        }
    };
    const auto scan_state = [&](std::size_t step, double at) {
        for (const auto& [var, vec] : state)
            for (std::size_t p = 0; p < batch; ++p)
                if (!std::isfinite(vec[p])) {
                    std::ostringstream msg;
                    msg << "non-finite value in '" << var << "' at step " << step
                        << " (t=" << num17(at) << ")";
                    throw RuntimeError(msg.str());
                }
    };

    env.init_context = true;
    for (const auto& [var, expr] : prog.explicit_inits) store(var, eval(*expr, env));
    for (const auto& [var, expr] : prog.derived_inits) store(var, eval(*expr, env));
    env.init_context = false;
    scan_state(0, 0.0);

    // Observation bookkeeping: per grid index, which (var, time) to record.
    std::map<std::pair<std::string, double>, std::vector<double>> recorded;
    std::vector<std::vector<const std::pair<std::string, double>*>> record_at(
        plan.grid.times.size());
    for (const auto& key : plan.needed_obs)
        record_at[plan.grid.index_of(key.second)].push_back(&key);
    std::vector<std::vector<const ConcretePayoff*>> modes_at(plan.grid.times.size());
    for (const auto& payoff : prog.payoffs)
        if (payoff.mode_expr) modes_at[plan.grid.index_of(payoff.pay_time)].push_back(&payoff);

    std::map<const ConcretePayoff*, std::vector<double>> mode_at_pay;
    std::map<const ConcretePayoff*, std::vector<double>> num0;
    const auto materialize = [&](Value&& v) {
        std::vector<double> out(batch);
        for (std::size_t p = 0; p < batch; ++p) out[p] = v.at(p);
        return out;
    };
    for (const auto& payoff : prog.payoffs)
        if (payoff.mode == script::DiscountMode::NumeraireBy)
            num0[&payoff] = materialize(eval(*payoff.mode_expr, env));

    const auto record_index = [&](std::size_t idx) {
        for (const auto* key : record_at[idx]) recorded[*key] = state[key->first];
        for (const auto* payoff : modes_at[idx]) {
            env.t = plan.grid.times[idx];
            mode_at_pay[payoff] = materialize(eval(*payoff->mode_expr, env));
        }
    };
    record_index(0);

    // Correlated draw factors; identity correlation skips the factor entirely.
    const bool correlated = !prog.correlations.empty();
    std::vector<std::vector<double>> lower = plan.constant_lower;
    std::map<std::string, double> rho_env;
    if (correlated && !plan.constant_correlation)
        for (const auto& [name, value] : bindings)
            if (value.is_scalar()) rho_env[name] = value.s;

    std::vector<std::vector<double>> xi(n_br, std::vector<double>(batch));
    for (std::size_t k = 0; k < n_steps; ++k) {
        const double t0 = plan.grid.times[k];
        const double t1 = plan.grid.times[k + 1];
        const double dt = t1 - t0;
        const double sqrtdt = std::sqrt(dt);

        for (const auto& var : prog.shadow_vars)
            locals[var + "__prestep"] = Value::take(std::vector<double>(state[var]));

        for (std::size_t b = 0; b < n_br; ++b) {
            std::vector<double>& row = xi[b];
            if (config.injected_normals) {
                const double* src = config.injected_normals->data() + (k * n_br + b) * base;
                std::copy(src, src + base, row.begin());
            } else {
                for (std::size_t p = 0; p < base; ++p)
                    row[p] = keyed_normal(config.seed, static_cast<std::uint32_t>(p),
                                          static_cast<std::uint32_t>(k),
                                          static_cast<std::uint32_t>(b));
            }
            if (config.antithetic)
                for (std::size_t p = base; p < batch; ++p) row[p] = -row[p - base];
        }
        if (correlated && !plan.constant_correlation) {
            const auto corr = script::correlation_matrix(prog, rho_env, t0);
            lower = script::cholesky_psd(corr);
        }
        locals["d_t"] = Value::scalar(dt);
        for (std::size_t b = 0; b < n_br; ++b) {
            std::vector<double> d(batch);
            if (!correlated) {
                for (std::size_t p = 0; p < batch; ++p) d[p] = sqrtdt * xi[b][p];
            } else {
                for (std::size_t p = 0; p < batch; ++p) {
                    double acc = lower[b][0] * xi[0][p];
                    for (std::size_t j = 1; j <= b; ++j) acc += lower[b][j] * xi[j][p];
                    d[p] = sqrtdt * acc;
                }
            }
            locals["d_" + prog.brownians[b]] = Value::take(std::move(d));
        }

        env.t = t0;
        for (const auto& op : prog.increments) {
            const Value val = eval(*op.rhs, env);
            std::vector<double>& slot = state[op.var];
            for (std::size_t p = 0; p < batch; ++p) slot[p] = slot[p] + val.at(p);
        }
        env.t = t1;
        for (const auto& op : prog.assignments) store(op.var, eval(*op.rhs, env));
        scan_state(k + 1, t1);
        record_index(k + 1);
    }

    SimOutput out;
    env.obs = &recorded;
    env.locals = nullptr;
    for (const auto& payoff : prog.payoffs) {
        Value x = eval(*payoff.expr, env);
        std::vector<double> sample(batch);
        switch (payoff.mode) {
            case script::DiscountMode::NoDiscount:
                for (std::size_t p = 0; p < batch; ++p) sample[p] = x.at(p);
                break;
            case script::DiscountMode::DiscountBy: {
                const auto& disc = mode_at_pay.at(&payoff);
                for (std::size_t p = 0; p < batch; ++p) sample[p] = x.at(p) * disc[p];
                break;
            }
            case script::DiscountMode::NumeraireBy: {
                const auto& numer = mode_at_pay.at(&payoff);
                const auto& n0 = num0.at(&payoff);
                for (std::size_t p = 0; p < batch; ++p)
                    sample[p] = n0[p] * (x.at(p) / numer[p]);
                break;
            }
        }
        out.payoff_names.push_back(payoff.name);
        out.payoff_samples.push_back(std::move(sample));
    }
    for (const auto& [key, vec] : recorded)
        out.observations[key.first + "@" + num17(key.second)] = vec;
    return out;
}

}  // namespace cheyette::sim
