#include <string>
#include <vector>

#include <doctest.h>

#include "cheyette/errors.hpp"
#include "cheyette/models.hpp"
#include "cheyette/script/ast.hpp"
#include "cheyette/script/check.hpp"
#include "cheyette/script/consteval.hpp"

using namespace cheyette;
using namespace cheyette::script;

namespace {

CheckEnv caplet_env() {
    CheckEnv env;
    env.parse_values["strikes"] = ConstValue(std::vector<ConstValue>{0.02, 0.03});
    env.parse_values["maturity"] = ConstValue(1.0);
    env.parse_values["fixingtime"] = ConstValue(1.0);
    env.parse_values["paytime"] = ConstValue(1.25);
    env.parse_values["measT"] = ConstValue(1.25);
    return env;
}

const char* kMinimal = R"(#system
d_x = mu*d_t + s*d_W

#initial values
init: x = zeros([batchsize])

#payoffs
1.0: "xT" pays x[1.0] nodiscount
)";

}  // namespace

TEST_SUITE("script") {

TEST_CASE("print(parse(s)) is a fixed point for every builtin script") {
    for (const auto& setting : settings_catalog()) {
        for (const auto m : {MeasureKind::TForward, MeasureKind::RiskNeutral}) {
            const std::string text = builtin_script(setting, m);
            const std::string once = print(parse(text));
            const std::string twice = print(parse(once));
            CHECK(once == twice);
        }
    }
}

TEST_CASE("every builtin script checks cleanly under the caplet environment") {
    const CheckEnv env = caplet_env();
    for (const auto& setting : settings_catalog()) {
        for (const auto m : {MeasureKind::TForward, MeasureKind::RiskNeutral}) {
            const CheckedProgram prog = check(parse(builtin_script(setting, m)), env);
            CHECK(!prog.payoffs.empty());
            CHECK(prog.stepped.count("ratex") == 1);
            CHECK(prog.stepped.count("ratey") == 1);
        }
    }
}

TEST_CASE("classification of the CIR benchmark-rate script") {
    const ModelSetting s{LocalVolForm::LinBRLV, SVForm::CIRSV};
    const CheckedProgram prog =
        check(parse(builtin_script(s, MeasureKind::TForward)), caplet_env());
    CHECK(prog.brownians == std::vector<std::string>{"W", "Z"});
    CHECK(prog.stepped == std::set<std::string>{"ratevariance", "ratex", "ratey"});
    CHECK(prog.assigned == std::set<std::string>{"deltafwd", "ratevolatility", "volterm"});
    CHECK(prog.markovian.empty());
    // First-reference order of free parameters.
    CHECK(prog.free_params ==
          std::vector<std::string>{"mr", "measT", "theta", "volofvar", "delta", "a", "b",
                                   "poa"});
    CHECK(prog.observation_times == std::vector<double>{1.0});
    REQUIRE(prog.payoffs.size() == 2);
    CHECK(prog.payoffs[0].name == "calloption_strike_0.020000");
    CHECK(prog.payoffs[1].name == "calloption_strike_0.030000");
    CHECK(prog.payoffs[0].mode == DiscountMode::NoDiscount);
    CHECK(prog.classes.at("ratex") == VarClass::Stepped);
    CHECK(prog.classes.at("volterm") == VarClass::Assigned);
    CHECK(prog.classes.at("W") == VarClass::Brownian);
    CHECK(prog.classes.at("t") == VarClass::Time);
    CHECK(prog.classes.at("mr") == VarClass::FreeParam);
}

TEST_CASE("risk-neutral scripts observe fixing and payment times") {
    const ModelSetting s{LocalVolForm::LinBRLV, SVForm::NoSV};
    const CheckedProgram prog =
        check(parse(builtin_script(s, MeasureKind::RiskNeutral)), caplet_env());
    CHECK(prog.observation_times == std::vector<double>{1.0, 1.25});
    CHECK(prog.stepped.count("logmma") == 1);
    CHECK(prog.assigned.count("mma") == 1);
    REQUIRE(!prog.payoffs.empty());
    CHECK(prog.payoffs[0].mode == DiscountMode::NumeraireBy);
    CHECK(prog.payoffs[0].pay_time == 1.25);
}

TEST_CASE("a self-referencing assignment is markovian and needs an init") {
    const char* text = R"(#system
d_x = s*d_W
acc = acc + x

#initial values
init: x = zeros([batchsize])
init: acc = zeros([batchsize])

#payoffs
1.0: "accT" pays acc[1.0] nodiscount
)";
    const CheckedProgram prog = check(parse(text), CheckEnv{});
    CHECK(prog.markovian == std::set<std::string>{"acc"});
    CHECK(prog.classes.at("acc") == VarClass::Markovian);

    const char* no_init = R"(#system
d_x = s*d_W
acc = acc + x

#initial values
init: x = zeros([batchsize])

#payoffs
1.0: "accT" pays acc[1.0] nodiscount
)";
    CHECK_THROWS_WITH_AS(check(parse(no_init), CheckEnv{}),
                         doctest::Contains("acc"), ValidationError);
}

TEST_CASE("check diagnostics name the offending symbol") {
    // Empty program.
    CHECK_THROWS_WITH_AS(check(parse(""), CheckEnv{}),
                         doctest::Contains("no system lines"), ValidationError);

    // Two updates of one variable.
    const char* dup = R"(#system
d_x = 1.0*d_t
d_x = 2.0*d_t

#initial values
init: x = zeros([batchsize])

#payoffs
1.0: "p" pays x[1.0] nodiscount
)";
    CHECK_THROWS_WITH_AS(check(parse(dup), CheckEnv{}), doctest::Contains("x"),
                         ValidationError);

    //

    // Missing init for a stepped variable.
    const char* no_init = R"(#system
d_x = 1.0*d_t

#payoffs
1.0: "p" pays x[1.0] nodiscount
)";
    CHECK_THROWS_WITH_AS(check(parse(no_init), CheckEnv{}),
                         doctest::Contains("missing init"), ValidationError);

    // Assigned variables derive their initial value.
    const char* assigned_init = R"(#system
d_x = 1.0*d_t
y = 2.0*x

#initial values
init: x = zeros([batchsize])
init: y = zeros([batchsize])

#payoffs
1.0: "p" pays y[1.0] nodiscount
)";
    CHECK_THROWS_WITH_AS(check(parse(assigned_init), CheckEnv{}),
                         doctest::Contains("derives"), ValidationError);

    // Unknown symbol in a payoff observation time: named in the message.
    const char* bad_obs = R"(#system
d_x = 1.0*d_t

#initial values
init: x = zeros([batchsize])

#payoffs
1.0: "p" pays x[volofvar] nodiscount
)";
    CHECK_THROWS_WITH_AS(check(parse(bad_obs), CheckEnv{}),
                         doctest::Contains("volofvar"), ValidationError);

    // Shadowing a builtin function.
    const char* shadow = R"(# function definition
exp(x) = x

#system
d_x = 1.0*d_t

#initial values
init: x = zeros([batchsize])

#payoffs
1.0: "p" pays x[1.0] nodiscount
)";
    CHECK_THROWS_WITH_AS(check(parse(shadow), CheckEnv{}), doctest::Contains("exp"),
                         ValidationError);
}

TEST_CASE("free parameters are reported in first-reference order") {
    const CheckedProgram prog = check(parse(kMinimal), CheckEnv{});
    CHECK(prog.free_params == std::vector<std::string>{"mu", "s"});
    CHECK(prog.brownians == std::vector<std::string>{"W"});
    CHECK(prog.observation_times == std::vector<double>{1.0});
}

TEST_CASE("const_eval: numbers, strings, lists and % formatting") {
    // Pull raw expressions out of a parsed payoff declaration.
    const char* text = R"(#system
d_x = 1.0*d_t

#initial values
init: x = zeros([batchsize])

#payoffs
for (t,k) in ([maturity]*len(strikes),strikes): "cap_%f"%k pays x[t] nodiscount
2*maturity + 1: "single" pays x[maturity] nodiscount
)";
    const Script s = parse(text);
    REQUIRE(s.payoffs.size() == 2);

    ConstEnv env;
    env["strikes"] = ConstValue(std::vector<ConstValue>{0.02, 0.03, 0.04});
    env["maturity"] = ConstValue(1.0);

    const auto& loop = s.payoffs[0];
    REQUIRE(loop.is_loop);
    REQUIRE(loop.loop_lists.size() == 2);
    CHECK(const_eval_number_list(*loop.loop_lists[0], env) ==
          std::vector<double>{1.0, 1.0, 1.0});
    CHECK(const_eval_number_list(*loop.loop_lists[1], env) ==
          std::vector<double>{0.02, 0.03, 0.04});
    env["k"] = ConstValue(0.02);
    CHECK(const_eval_string(*loop.name_expr, env) == "cap_0.020000");

    const auto& single = s.payoffs[1];
    CHECK(const_eval_number(*single.pay_time, env) == 3.0);
    CHECK(const_eval_string(*single.name_expr, env) == "single");

    // Unknown name reports itself.
    ConstEnv empty;
    CHECK_THROWS_WITH_AS((void)const_eval_number(*single.pay_time, empty),
                         doctest::Contains("maturity"), ValidationError);

    ConstValue v(2.5);
    CHECK(v.is_number());
    CHECK(!v.is_list());
}

TEST_CASE("correlation matrix and PSD Cholesky") {
    const char* text = R"(#system
d_u = a*d_W
d_v = a*d_Z

#correlations
d_W*d_Z = rho

#initial values
init: u = zeros([batchsize])
init: v = zeros([batchsize])

#payoffs
1.0: "uv" pays u[1.0]*v[1.0] nodiscount
)";
    const CheckedProgram prog = check(parse(text), CheckEnv{});
    REQUIRE(prog.correlations.size() == 1);
    const auto corr = correlation_matrix(prog, {{"rho", 0.5}, {"a", 0.01}}, 0.0);
    REQUIRE(corr.size() == 2);
    CHECK(corr[0][0] == 1.0);
    CHECK(corr[0][1] == 0.5);
    CHECK(corr[1][0] == 0.5);
    // Entries outside [-1, 1] are rejected.
    CHECK_THROWS_AS((void)correlation_matrix(prog, {{"rho", 1.2}, {"a", 0.01}}, 0.0),
                    ValidationError);

    const auto L = cholesky_psd({{1.0, 0.5}, {0.5, 1.0}});
    CHECK(L[0][0] == 1.0);
    CHECK(L[1][0] == 0.5);
    CHECK(L[1][1] == doctest::Approx(std::sqrt(0.75)).epsilon(1e-15));
    // Perfect correlation is semidefinite, not an error.
    const auto L1 = cholesky_psd({{1.0, 1.0}, {1.0, 1.0}});
    CHECK(L1[1][0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(L1[1][1] == doctest::Approx(0.0).epsilon(1e-6));
    // Valid entries, not a PSD matrix.
    CHECK_THROWS_AS((void)cholesky_psd({{1.0, 0.9, 0.9}, {0.9, 1.0, -0.9},
                                        {0.9, -0.9, 1.0}}),
                    ValidationError);
}

TEST_CASE("duplicate correlation entries are rejected") {
    const char* text = R"(#system
d_u = a*d_W
d_v = a*d_Z

#correlations
d_W*d_Z = 0.5
d_Z*d_W = 0.25

#initial values
init: u = zeros([batchsize])
init: v = zeros([batchsize])

#payoffs
1.0: "uv" pays u[1.0] nodiscount
)";
    CHECK_THROWS_AS(check(parse(text), CheckEnv{}), ValidationError);
}

TEST_CASE("parse errors carry line positions") {
    CHECK_THROWS_AS(parse("#system\nd_x = (1.0*d_t\n"), ValidationError);
    CHECK_THROWS_AS(parse("#system\nd_x = 1.0*d_t\n#payoffs\n1.0: 42 pays x nodiscount\n"),
                    ValidationError);
}

}  // TEST_SUITE
