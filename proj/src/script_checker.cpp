#include <algorithm>
#include <cmath>
#include <functional>
#include <sstream>

#include "cheyette/errors.hpp"
#include "cheyette/script/check.hpp"

namespace cheyette::script {

namespace {

[[noreturn]] void fail(int line, int col, const std::string& msg) {
    std::ostringstream out;
    out << "script:" << line << ":" << col << ": " << msg;
    throw ValidationError(out.str());
}
[[noreturn]] void fail(const Expr& at, const std::string& msg) { fail(at.line, at.col, msg); }

bool is_unary_builtin(const std::string& fn) {
    return fn == "exp" || fn == "ln" || fn == "log" || fn == "sqrt" ||
           fn == "positivepart" || fn == "abs" || fn == "floor" || fn == "oneslike" ||
           fn == "zeroslike";
}
bool is_builtin(const std::string& fn) {
    return is_unary_builtin(fn) || fn == "max" || fn == "min" || fn == "zeros" ||
           fn == "ones" || fn == "len";
}

struct InlinedFn {
    std::vector<std::string> params;
    ExprPtr body;  // script-function calls already expanded
    int line = 0;
};

ExprPtr subst(const ExprPtr& e, const std::map<std::string, ExprPtr>& values);

CondPtr subst(const CondPtr& c, const std::map<std::string, ExprPtr>& values) {
    if (const auto* cmp = std::get_if<Compare>(&c->node))
        return std::make_shared<Cond>(
            Cond{Compare{cmp->op, subst(cmp->lhs, values), subst(cmp->rhs, values)}});
    const auto& b = std::get<BoolBin>(c->node);
    return std::make_shared<Cond>(
        Cond{BoolBin{b.conjunction, subst(b.lhs, values), subst(b.rhs, values)}});
}

ExprPtr subst(const ExprPtr& e, const std::map<std::string, ExprPtr>& values) {
    return std::visit(
        [&](const auto& n) -> ExprPtr {
            using T = std::decay_t<decltype(n)>;
            if constexpr (std::is_same_v<T, Name>) {
                const auto it = values.find(n.id);
                return it != values.end() ? it->second : e;
            } else if constexpr (std::is_same_v<T, Neg>) {
                return make_expr(e->line, e->col, Neg{subst(n.operand, values)});
            } else if constexpr (std::is_same_v<T, Binary>) {
                return make_expr(e->line, e->col,
                                 Binary{n.op, subst(n.lhs, values), subst(n.rhs, values)});
            } else if constexpr (std::is_same_v<T, Call>) {
                std::vector<ExprPtr> args;
                args.reserve(n.args.size());
                for (const auto& a : n.args) args.push_back(subst(a, values));
                return make_expr(e->line, e->col, Call{n.fn, std::move(args)});
            } else if constexpr (std::is_same_v<T, Observe>) {
                if (values.count(n.var))
                    fail(*e, "cannot observe a function parameter '" + n.var + "'");
                return make_expr(e->line, e->col, Observe{n.var, subst(n.time, values)});
            } else if constexpr (std::is_same_v<T, ListLit>) {
                std::vector<ExprPtr> items;
                items.reserve(n.items.size());
                for (const auto& a : n.items) items.push_back(subst(a, values));
                return make_expr(e->line, e->col, ListLit{std::move(items)});
            } else if constexpr (std::is_same_v<T, Select>) {
                return make_expr(e->line, e->col,
                                 Select{subst(n.cond, values), subst(n.then_value, values),
                                        subst(n.else_value, values)});
            } else {
                return e;
            }
        },
        e->node);
}

class Checker {
public:
    Checker(const Script& script, const CheckEnv& env) : script_(script), env_(env) {}

    CheckedProgram run() {
        if (script_.system_lines.empty())
            throw ValidationError("script has no system lines");
        classify_state();
        build_functions();
        resolve_system_lines();
        resolve_inits();
        resolve_correlations();
        expand_payoffs();

        CheckedProgram out;
        out.script = script_;
        out.brownians = script_.brownians;
        out.increments = std::move(increments_);
        out.assignments = std::move(assignments_);
        out.stepped = stepped_;
        out.assigned = assigned_;
        out.markovian = markovian_;
        out.explicit_inits = std::move(explicit_inits_);
        out.derived_inits = derive_inits(out.assignments);
        out.shadow_vars = shadow_vars_;
        out.correlations = std::move(correlations_);
        out.payoffs = std::move(payoffs_);
        out.observation_times.assign(obs_times_.begin(), obs_times_.end());
        out.free_params = free_params_;
        out.external_fns = env_.external_fns;

        for (const auto& b : script_.brownians) out.classes[b] = VarClass::Brownian;
        out.classes["t"] = VarClass::Time;
        for (const auto& v : stepped_) out.classes[v] = VarClass::Stepped;
        for (const auto& v : assigned_)
            out.classes[v] = markovian_.count(v) ? VarClass::Markovian : VarClass::Assigned;
        for (const auto& p : free_params_) out.classes[p] = VarClass::FreeParam;
        return out;
    }

private:
    enum class Ctx { IncrementRhs, AssignmentRhs, InitExpr, CorrelationExpr, PayoffExpr, ModeExpr };

    void classify_state() {
        for (const auto& line : script_.system_lines) {
            const bool fresh = line.kind == LineKind::Increment
                                   ? stepped_.insert(line.var).second && !assigned_.count(line.var)
                                   : assigned_.insert(line.var).second && !stepped_.count(line.var);
            if (!fresh)
                fail(line.line, 1, "variable '" + line.var + "' is updated by two lines");
            if (line.kind == LineKind::Assignment && line.markovian)
                markovian_.insert(line.var);
            for (const auto& b : script_.brownians)
                if (b == line.var)
                    fail(line.line, 1,
                         "'" + line.var + "' is used both as state and as a Brownian");
        }
    }

    void build_functions() {
        std::map<std::string, const FunctionDef*> defs;
        for (const auto& def : script_.function_defs) {
            if (is_builtin(def.name) || env_.external_fns.count(def.name))
                fail(def.line, 1, "function '" + def.name + "' shadows a builtin");
            if (stepped_.count(def.name) || assigned_.count(def.name))
                fail(def.line, 1,
                     "name '" + def.name + "' is used for both a function and a variable");
            defs[def.name] = &def;
            std::set<std::string> params(def.params.begin(), def.params.end());
            if (params.size() != def.params.size())
                fail(def.line, 1, "duplicate parameter in function '" + def.name + "'");
        }
        std::set<std::string> in_progress;
        std::function<const InlinedFn&(const std::string&, int, int)> get =
            [&](const std::string& name, int line, int col) -> const InlinedFn& {
            const auto done = fns_.find(name);
            if (done != fns_.end()) return done->second;
            if (in_progress.count(name))
                fail(line, col, "recursive function definition '" + name + "'");
            const auto it = defs.find(name);
            if (it == defs.end()) fail(line, col, "unknown function '" + name + "'");
            in_progress.insert(name);
            const FunctionDef& def = *it->second;
            ExprPtr body = expand_calls(def.otherwise, get);
            for (auto branch = def.branches.rbegin(); branch != def.branches.rend(); ++branch) {
                ExprPtr value = expand_calls(branch->first, get);
                CondPtr cond = expand_calls_cond(branch->second, get);
                body = make_expr(def.line, 1, Select{cond, value, body});
            }
            in_progress.erase(name);
            return fns_.emplace(name, InlinedFn{def.params, body, def.line}).first->second;
        };
        for (const auto& def : script_.function_defs) get(def.name, def.line, 1);
    }

    using GetFn = std::function<const InlinedFn&(const std::string&, int, int)>;

    CondPtr expand_calls_cond(const CondPtr& c, const GetFn& get) {
        if (const auto* cmp = std::get_if<Compare>(&c->node))
            return std::make_shared<Cond>(Cond{
                Compare{cmp->op, expand_calls(cmp->lhs, get), expand_calls(cmp->rhs, get)}});
        const auto& b = std::get<BoolBin>(c->node);
        return std::make_shared<Cond>(Cond{BoolBin{
            b.conjunction, expand_calls_cond(b.lhs, get), expand_calls_cond(b.rhs, get)}});
    }

    // Replaces calls to script-defined functions by their bodies with the
    // (already expanded) arguments substituted for the parameters.
    ExprPtr expand_calls(const ExprPtr& e, const GetFn& get) {
        return std::visit(
            [&](const auto& n) -> ExprPtr {
                using T = std::decay_t<decltype(n)>;
                if constexpr (std::is_same_v<T, Neg>) {
                    return make_expr(e->line, e->col, Neg{expand_calls(n.operand, get)});
                } else if constexpr (std::is_same_v<T, Binary>) {
                    return make_expr(
                        e->line, e->col,
                        Binary{n.op, expand_calls(n.lhs, get), expand_calls(n.rhs, get)});
                } else if constexpr (std::is_same_v<T, Call>) {
                    std::vector<ExprPtr> args;
                    args.reserve(n.args.size());
                    for (const auto& a : n.args) args.push_back(expand_calls(a, get));
                    if (is_builtin(n.fn) || env_.external_fns.count(n.fn))
                        return make_expr(e->line, e->col, Call{n.fn, std::move(args)});
                    const InlinedFn& fn = get(n.fn, e->line, e->col);
                    if (fn.params.size() != args.size())
                        fail(*e, "function '" + n.fn + "' expects " +
                                     std::to_string(fn.params.size()) + " argument(s)");
                    std::map<std::string, ExprPtr> values;
                    for (std::size_t i = 0; i < args.size(); ++i)
                        values[fn.params[i]] = args[i];
                    return subst(fn.body, values);
                } else if constexpr (std::is_same_v<T, Observe>) {
                    return make_expr(e->line, e->col,
                                     Observe{n.var, expand_calls(n.time, get)});
                } else if constexpr (std::is_same_v<T, ListLit>) {
                    std::vector<ExprPtr> items;
                    items.reserve(n.items.size());
                    for (const auto& a : n.items) items.push_back(expand_calls(a, get));
                    return make_expr(e->line, e->col, ListLit{std::move(items)});
                } else if constexpr (std::is_same_v<T, Select>) {
                    return make_expr(e->line, e->col,
                                     Select{expand_calls_cond(n.cond, get),
                                            expand_calls(n.then_value, get),
                                            expand_calls(n.else_value, get)});
                } else {
                    return e;
                }
            },
            e->node);
    }

    ExprPtr inline_fns(const ExprPtr& e) {
        GetFn get = [&](const std::string& name, int line, int col) -> const InlinedFn& {
            const auto it = fns_.find(name);
            if (it == fns_.end()) fail(line, col, "unknown function '" + name + "'");
            return it->second;
        };
        return expand_calls(e, get);
    }

    void add_free(const std::string& id) {
        for (const auto& have : free_params_)
            if (have == id) return;
        free_params_.push_back(id);
    }

    bool is_state(const std::string& id) const {
        return stepped_.count(id) || assigned_.count(id);
    }

    // Strips a trailing _new naming a state variable; returns the base name.
    static std::string new_base(const std::string& id) {
        if (id.size() > 4 && id.ends_with("_new")) return id.substr(0, id.size() - 4);
        return {};
    }

    struct ResolveCtx {
        Ctx kind;
        const std::set<std::string>* updated = nullptr;  // increments run so far
        const std::set<std::string>* inited = nullptr;   // explicit inits so far
        const ConstEnv* fold_env = nullptr;              // payoff fold environment
    };

    CondPtr resolve_cond(const CondPtr& c, const ResolveCtx& ctx) {
        if (const auto* cmp = std::get_if<Compare>(&c->node))
            return std::make_shared<Cond>(Cond{
                Compare{cmp->op, resolve(cmp->lhs, ctx), resolve(cmp->rhs, ctx)}});
        const auto& b = std::get<BoolBin>(c->node);
        return std::make_shared<Cond>(Cond{
            BoolBin{b.conjunction, resolve_cond(b.lhs, ctx), resolve_cond(b.rhs, ctx)}});
    }

    ExprPtr resolve_name(const ExprPtr& e, const Name& n, const ResolveCtx& ctx) {
        const std::string& id = n.id;
        if (id == "t") {
            if (ctx.kind == Ctx::PayoffExpr)
                fail(*e, "payoffs read observations; use var[time] instead of live state");
            return e;
        }
        if (id == "batchsize") return e;
        if (id == "d_t" || id.starts_with("d_")) {
            if (ctx.kind != Ctx::IncrementRhs)
                fail(*e, "'" + id + "' is only available in increment lines");
            return e;
        }
        if (const std::string base = new_base(id); !base.empty() && is_state(base)) {
            if (ctx.kind == Ctx::IncrementRhs) {
                if (!ctx.updated->count(base))
                    fail(*e, "'" + id + "' referenced before '" + base + "' is updated");
                return make_expr(e->line, e->col, Name{base});
            }
            if (ctx.kind == Ctx::AssignmentRhs) {
                if (!stepped_.count(base) && !ctx.updated->count(base))
                    fail(*e, "'" + id + "' referenced before '" + base + "' is updated");
                return make_expr(e->line, e->col, Name{base});
            }
            fail(*e, "'" + id + "' is only meaningful in system lines");
        }
        if (is_state(id)) {
            switch (ctx.kind) {
                case Ctx::IncrementRhs:
                    if (ctx.updated->count(id)) {
                        shadow_vars_.insert(id);
                        return make_expr(e->line, e->col, Name{id + "__prestep"});
                    }
                    return e;
                case Ctx::AssignmentRhs:
                case Ctx::ModeExpr:
                    return e;
                case Ctx::InitExpr:
                    if (!ctx.inited->count(id))
                        fail(*e, "init expression references uninitialized '" + id + "'");
                    return e;
                case Ctx::CorrelationExpr:
                    fail(*e, "correlations must not depend on state variable '" + id + "'");
                case Ctx::PayoffExpr:
                    fail(*e, "payoffs must observe '" + id + "' as " + id + "[time]");
            }
        }
        if (fns_.count(id)) fail(*e, "function '" + id + "' used as a value");
        if (is_builtin(id) || env_.external_fns.count(id))
            fail(*e, "function '" + id + "' used as a value");
        add_free(id);
        return e;
    }

    ExprPtr resolve(const ExprPtr& e, const ResolveCtx& ctx) {
        return std::visit(
            [&](const auto& n) -> ExprPtr {
                using T = std::decay_t<decltype(n)>;
                if constexpr (std::is_same_v<T, Number>) {
                    return e;
                } else if constexpr (std::is_same_v<T, StringLit>) {
                    fail(*e, "strings are only usable in payoff names");
                } else if constexpr (std::is_same_v<T, Name>) {
                    return resolve_name(e, n, ctx);
                } else if constexpr (std::is_same_v<T, Neg>) {
                    return make_expr(e->line, e->col, Neg{resolve(n.operand, ctx)});
                } else if constexpr (std::is_same_v<T, Binary>) {
                    return make_expr(e->line, e->col,
                                     Binary{n.op, resolve(n.lhs, ctx), resolve(n.rhs, ctx)});
                } else if constexpr (std::is_same_v<T, Call>) {
                    return resolve_call(e, n, ctx);
                } else if constexpr (std::is_same_v<T, Observe>) {
                    if (ctx.kind != Ctx::PayoffExpr && ctx.kind != Ctx::ModeExpr)
                        fail(*e, "observations are only available in payoffs");
                    if (!is_state(n.var))
                        fail(*e, "cannot observe '" + n.var + "': not a state variable");
                    const double when = const_eval_number(*n.time, *ctx.fold_env);
                    if (!std::isfinite(when) || when < 0.0)
                        fail(*e, "observation time not representable");
                    obs_times_.insert(when);
                    return make_expr(e->line, e->col,
                                     Observe{n.var, make_expr(e->line, e->col, Number{when})});
                } else if constexpr (std::is_same_v<T, ListLit>) {
                    fail(*e, "lists are only usable in constant context");
                } else {
                    const auto& sel = std::get<Select>(e->node);
                    return make_expr(e->line, e->col,
                                     Select{resolve_cond(sel.cond, ctx),
                                            resolve(sel.then_value, ctx),
                                            resolve(sel.else_value, ctx)});
                }
            },
            e->node);
    }

    ExprPtr resolve_call(const ExprPtr& e, const Call& call, const ResolveCtx& ctx) {
        if (call.fn == "zeros" || call.fn == "ones") {
            if (ctx.kind != Ctx::InitExpr)
                fail(*e, "'" + call.fn + "' is only usable in init expressions");
            const ListLit* shape =
                call.args.size() == 1 ? std::get_if<ListLit>(&call.args[0]->node) : nullptr;
            if (!shape || shape->items.size() != 1)
                fail(*e, "'" + call.fn + "' expects a one-element shape list");
            std::vector<ExprPtr> args = {make_expr(
                e->line, e->col, ListLit{{resolve(shape->items[0], ctx)}})};
            return make_expr(e->line, e->col, Call{call.fn, std::move(args)});
        }
        if (call.fn == "len") fail(*e, "'len' is only usable in constant context");
        std::size_t arity = 0;
        if (is_unary_builtin(call.fn)) arity = 1;
        else if (call.fn == "max" || call.fn == "min") arity = 2;
        else if (env_.external_fns.count(call.fn)) arity = 1;
        else fail(*e, "unknown function '" + call.fn + "'");
        if (call.args.size() != arity)
            fail(*e, "function '" + call.fn + "' expects " + std::to_string(arity) +
                         " argument(s)");
        std::vector<ExprPtr> args;
        args.reserve(call.args.size());
        for (const auto& a : call.args) args.push_back(resolve(a, ctx));
        return make_expr(e->line, e->col, Call{call.fn, std::move(args)});
    }

    void resolve_system_lines() {
        std::set<std::string> updated;
        std::set<std::string> assigned_so_far;
        for (const auto& line : script_.system_lines) {
            if (line.kind != LineKind::Increment) continue;
            ResolveCtx ctx{Ctx::IncrementRhs, &updated, nullptr, nullptr};
            increments_.push_back({line.var, resolve(inline_fns(line.rhs), ctx), line.line});
            updated.insert(line.var);
        }
        for (const auto& line : script_.system_lines) {
            if (line.kind != LineKind::Assignment) continue;
            ResolveCtx ctx{Ctx::AssignmentRhs, &assigned_so_far, nullptr, nullptr};
            assignments_.push_back({line.var, resolve(inline_fns(line.rhs), ctx), line.line});
            assigned_so_far.insert(line.var);
            std::set<std::string> refs;
            collect_names(assignments_.back().rhs, &refs);
            if (refs.count(line.var)) markovian_.insert(line.var);
        }
    }

    void resolve_inits() {
        std::set<std::string> inited;
        for (const auto& init : script_.inits) {
            if (!is_state(init.var))
                fail(init.line, 1, "init for unknown variable '" + init.var + "'");
            if (assigned_.count(init.var) && !markovian_.count(init.var))
                fail(init.line, 1,
                     "assigned variable '" + init.var + "' derives its initial value");
            ResolveCtx ctx{Ctx::InitExpr, nullptr, &inited, nullptr};
            explicit_inits_.emplace_back(init.var, resolve(inline_fns(init.value), ctx));
            inited.insert(init.var);
        }
        for (const auto& v : stepped_)
            if (!inited.count(v)) fail(1, 1, "missing init for stepped variable '" + v + "'");
        for (const auto& v : markovian_)
            if (!inited.count(v)) fail(1, 1, "missing init for markovian variable '" + v + "'");
    }

    void resolve_correlations() {
        for (const auto& corr : script_.correlations) {
            for (const auto& have : correlations_) {
                const bool same = (have.a == corr.brownian_a && have.b == corr.brownian_b) ||
                                  (have.a == corr.brownian_b && have.b == corr.brownian_a);
                if (same)
                    fail(corr.line, 1, "duplicate correlation for d_" + corr.brownian_a +
                                           " and d_" + corr.brownian_b);
            }
            ResolveCtx ctx{Ctx::CorrelationExpr, nullptr, nullptr, nullptr};
            correlations_.push_back({corr.brownian_a, corr.brownian_b,
                                     resolve(inline_fns(corr.rho), ctx), corr.line});
        }
    }

    std::string payoff_name(const ExprPtr& name_expr, const ConstEnv& env) {
        if (const auto* name = std::get_if<Name>(&name_expr->node))
            if (!env.count(name->id)) return name->id;
        return const_eval_string(*name_expr, env);
    }

    void add_payoff(ConcretePayoff p) {
        for (const auto& have : payoffs_)
            if (have.name == p.name)
                fail(p.line, 1, "duplicate payoff name '" + p.name + "'");
        obs_times_.insert(p.pay_time);
        payoffs_.push_back(std::move(p));
    }

    void expand_one(const PayoffDecl& decl, const ConstEnv& fold_env,
                    const std::map<std::string, ExprPtr>& loop_values, double pay_time) {
        ConcretePayoff p;
        p.line = decl.line;
        p.mode = decl.mode;
        p.pay_time = pay_time;
        if (!std::isfinite(pay_time) || pay_time < 0.0)
            fail(decl.line, 1, "pay time not representable");
        p.name = payoff_name(decl.name_expr, fold_env);
        ResolveCtx ctx{Ctx::PayoffExpr, nullptr, nullptr, &fold_env};
        p.expr = resolve(subst(inline_fns(decl.expr), loop_values), ctx);
        if (decl.mode_expr) {
            ResolveCtx mode_ctx{Ctx::ModeExpr, nullptr, nullptr, &fold_env};
            p.mode_expr = resolve(subst(inline_fns(decl.mode_expr), loop_values), mode_ctx);
        }
        add_payoff(std::move(p));
    }

    void expand_payoffs() {
        for (const auto& decl : script_.payoffs) {
            if (!decl.is_loop) {
                const double pay_time = const_eval_number(*decl.pay_time, env_.parse_values);
                expand_one(decl, env_.parse_values, {}, pay_time);
                continue;
            }
            const auto t_slot = std::find(decl.loop_vars.begin(), decl.loop_vars.end(), "t");
            if (t_slot == decl.loop_vars.end())
                fail(decl.line, 1, "loop payoffs must bind t as the pay time");
            std::vector<std::vector<ConstValue>> lists;
            std::size_t length = 0;
            for (std::size_t i = 0; i < decl.loop_lists.size(); ++i) {
                const ConstValue v = const_eval(*decl.loop_lists[i], env_.parse_values);
                if (!v.is_list()) fail(*decl.loop_lists[i], "expected a list");
                lists.push_back(std::get<std::vector<ConstValue>>(v.v));
                if (i == 0) length = lists[0].size();
                if (lists[i].size() != length)
                    fail(*decl.loop_lists[i], "loop lists must have equal length");
            }
            for (std::size_t i = 0; i < length; ++i) {
                ConstEnv fold_env = env_.parse_values;
                std::map<std::string, ExprPtr> loop_values;
                double pay_time = 0.0;
                for (std::size_t j = 0; j < decl.loop_vars.size(); ++j) {
                    const ConstValue& v = lists[j][i];
                    fold_env[decl.loop_vars[j]] = v;
                    if (v.is_number())
                        loop_values[decl.loop_vars[j]] =
                            make_expr(decl.line, 1, Number{std::get<double>(v.v)});
                    if (decl.loop_vars[j] == "t") {
                        if (!v.is_number()) fail(decl.line, 1, "pay time must be numeric");
                        pay_time = std::get<double>(v.v);
                    }
                }
                expand_one(decl, fold_env, loop_values, pay_time);
            }
        }
    }

    // Assigned (non-markovian) variables get their t=0 value from their own
    // right side, ordered so dependencies are computed first.
    std::vector<std::pair<std::string, ExprPtr>> derive_inits(
        const std::vector<StepOp>& assignments) {
        std::vector<const StepOp*> todo;
        for (const auto& op : assignments)
            if (!markovian_.count(op.var)) todo.push_back(&op);
        std::set<std::string> ready;
        std::vector<std::pair<std::string, ExprPtr>> out;
        while (!todo.empty()) {
            bool progressed = false;
            for (auto it = todo.begin(); it != todo.end();) {
                std::set<std::string> deps;
                collect_names((*it)->rhs, &deps);
                bool ok = true;
                for (const auto& dep : deps)
                    if (assigned_.count(dep) && !markovian_.count(dep) && !ready.count(dep) &&
                        dep != (*it)->var)
                        ok = false;
                if (ok) {
                    ready.insert((*it)->var);
                    out.emplace_back((*it)->var, (*it)->rhs);
                    it = todo.erase(it);
                    progressed = true;
                } else {
                    ++it;
                }
            }
            if (!progressed) fail((*todo.front()).line, 1, "cyclic assignment dependencies");
        }
        return out;
    }

    static void collect_names(const ExprPtr& e, std::set<std::string>* out) {
        std::visit(
            [&](const auto& n) {
                using T = std::decay_t<decltype(n)>;
                if constexpr (std::is_same_v<T, Name>) {
                    out->insert(n.id);
                } else if constexpr (std::is_same_v<T, Neg>) {
                    collect_names(n.operand, out);
                } else if constexpr (std::is_same_v<T, Binary>) {
                    collect_names(n.lhs, out);
                    collect_names(n.rhs, out);
                } else if constexpr (std::is_same_v<T, Call>) {
                    for (const auto& a : n.args) collect_names(a, out);
                } else if constexpr (std::is_same_v<T, Observe>) {
                    collect_names(n.time, out);
                } else if constexpr (std::is_same_v<T, ListLit>) {
                    for (const auto& a : n.items) collect_names(a, out);
                } else if constexpr (std::is_same_v<T, Select>) {
                    collect_cond_names(n.cond, out);
                    collect_names(n.then_value, out);
                    collect_names(n.else_value, out);
                }
            },
            e->node);
    }
    static void collect_cond_names(const CondPtr& c, std::set<std::string>* out) {
        if (const auto* cmp = std::get_if<Compare>(&c->node)) {
            collect_names(cmp->lhs, out);
            collect_names(cmp->rhs, out);
            return;
        }
        const auto& b = std::get<BoolBin>(c->node);
        collect_cond_names(b.lhs, out);
        collect_cond_names(b.rhs, out);
    }

    const Script& script_;
    const CheckEnv& env_;
    std::map<std::string, InlinedFn> fns_;
    std::set<std::string> stepped_, assigned_, markovian_, shadow_vars_;
    std::vector<StepOp> increments_, assignments_;
    std::vector<std::pair<std::string, ExprPtr>> explicit_inits_;
    std::vector<CorrelationEntry> correlations_;
    std::vector<ConcretePayoff> payoffs_;
    std::set<double> obs_times_;
    std::vector<std::string> free_params_;
};

}  // namespace

std::string to_string(VarClass c) {
    switch (c) {
        case VarClass::Brownian: return "brownian";
        case VarClass::Time: return "time";
        case VarClass::Stepped: return "stepped";
        case VarClass::Assigned: return "assigned";
        case VarClass::Markovian: return "markovian";
        case VarClass::FreeParam: return "free-parameter";
    }
    return "?";
}

CheckedProgram check(const Script& script, const CheckEnv& env) {
    return Checker(script, env).run();
}

std::vector<std::vector<double>> correlation_matrix(
    const CheckedProgram& prog, const std::map<std::string, double>& values, double t) {
    const std::size_t n = prog.brownians.size();
    std::vector<std::vector<double>> corr(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i) corr[i][i] = 1.0;
    ConstEnv env;
    for (const auto& [k, v] : values) env[k] = ConstValue(v);
    env["t"] = ConstValue(t);
    const auto index = [&](const std::string& name) {
        for (std::size_t i = 0; i < n; ++i)
            if (prog.brownians[i] == name) return i;
        throw ValidationError("unknown Brownian d_" + name);
    };
    for (const auto& entry : prog.correlations) {
        const double rho = const_eval_number(*entry.rho, env);
        if (!(rho >= -1.0 && rho <= 1.0))
            throw ValidationError("correlation of d_" + entry.a + " and d_" + entry.b +
                                  " is outside [-1, 1]");
        const std::size_t i = index(entry.a);
        const std::size_t j = index(entry.b);
        corr[i][j] = corr[j][i] = rho;
    }
    return corr;
}

std::vector<std::vector<double>> cholesky_psd(const std::vector<std::vector<double>>& corr) {
    const std::size_t n = corr.size();
    constexpr double tol = 1e-10;
    std::vector<std::vector<double>> lower(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j <= i; ++j) {
            double sum = corr[i][j];
            for (std::size_t k = 0; k < j; ++k) sum -= lower[i][k] * lower[j][k];
            if (i == j) {
                if (sum < -tol)
                    throw ValidationError("correlation matrix is not positive semidefinite");
                lower[i][i] = std::sqrt(sum > 0.0 ? sum : 0.0);
            } else if (lower[j][j] > 0.0) {
                lower[i][j] = sum / lower[j][j];
            } else if (std::abs(sum) > tol) {
                throw ValidationError("correlation matrix is not positive semidefinite");
            }
        }
    }
    return lower;
}

}  // namespace cheyette::script
