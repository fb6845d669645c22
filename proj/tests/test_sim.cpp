#include <cmath>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include <doctest.h>

#include "cheyette/errors.hpp"
#include "cheyette/models.hpp"
#include "cheyette/script/ast.hpp"
#include "cheyette/script/check.hpp"
#include "cheyette/sim/codegen.hpp"
#include "cheyette/sim/engine.hpp"
#include "cheyette/sim/rng.hpp"
#include "cheyette/support.hpp"

using namespace cheyette;
using namespace cheyette::script;
using namespace cheyette::sim;

namespace {

SimulationPlan plan_for(const std::string& text, const CheckEnv& env = {},
                        double dt_max = kDefaultDtMax) {
    return compile(check(parse(text), env), GridHints{dt_max});
}

const char* kBrownianOnly = R"(#system
d_x = 1.0*d_W

#initial values
init: x = zeros([batchsize])

#payoffs
1.0: "xT" pays x[1.0] nodiscount
)";

}  // namespace

TEST_SUITE("sim") {

TEST_CASE("simulate is deterministic for identical plan and config") {
    const SimulationPlan plan = plan_for(kBrownianOnly);
    SimConfig cfg;
    cfg.batch = 256;
    cfg.seed = 11;
    const SimOutput a = simulate(plan, cfg);
    const SimOutput b = simulate(plan, cfg);
    REQUIRE(a.payoff_samples.size() == 1);
    REQUIRE(a.payoff_samples[0].size() == 256);
    CHECK(std::memcmp(a.payoff_samples[0].data(), b.payoff_samples[0].data(),
                      256 * sizeof(double)) == 0);
    SimConfig other = cfg;
    other.seed = 12;
    const SimOutput c = simulate(plan, other);
    CHECK(std::memcmp(a.payoff_samples[0].data(), c.payoff_samples[0].data(),
                      256 * sizeof(double)) != 0);
}

TEST_CASE("antithetic batches negate the driving noise exactly") {
    const SimulationPlan plan = plan_for(kBrownianOnly);
    SimConfig cfg;
    cfg.batch = 512;
    cfg.seed = 3;
    cfg.antithetic = true;
    const SimOutput out = simulate(plan, cfg);
    const auto& xs = out.payoff_samples[0];
    // Path i and path i + batch/2 share draws with the sign flipped, so a
    // pure-Brownian terminal value cancels pairwise to exactly zero.
    for (std::size_t i = 0; i < 256; ++i) CHECK(xs[i] + xs[i + 256] == 0.0);
    CHECK(pairwise_sum(xs) == 0.0);
    // Odd batch is rejected.
    SimConfig odd = cfg;
    odd.batch = 511;
    CHECK_THROWS_AS((void)simulate(plan, odd), ValidationError);
}

TEST_CASE("injected normals reproduce the keyed stream bitwise") {
    const SimulationPlan plan = plan_for(kBrownianOnly);
    SimConfig cfg;
    cfg.batch = 128;
    cfg.seed = 77;
    const SimOutput direct = simulate(plan, cfg);

    const std::size_t n_steps = plan.grid.n_steps();
    std::vector<double> draws(n_steps * 1 * cfg.batch);
    for (std::size_t k = 0; k < n_steps; ++k)
        for (std::size_t p = 0; p < cfg.batch; ++p)
            draws[k * cfg.batch + p] = keyed_normal(
                77, static_cast<std::uint32_t>(p), static_cast<std::uint32_t>(k), 0);
    SimConfig injected = cfg;
    injected.injected_normals = &draws;
    const SimOutput via_buffer = simulate(plan, injected);
    CHECK(std::memcmp(direct.payoff_samples[0].data(),
                      via_buffer.payoff_samples[0].data(),
                      cfg.batch * sizeof(double)) == 0);
    // Wrong-size buffer is rejected.
    std::vector<double> short_buf(n_steps * cfg.batch - 1);
    SimConfig bad = cfg;
    bad.injected_normals = &short_buf;
    CHECK_THROWS_AS((void)simulate(plan, bad), ValidationError);
}

TEST_CASE("free parameters bind per batch or per path") {
    const char* text = R"(#system
d_x = mu*d_t + s*d_W

#initial values
init: x = zeros([batchsize])

#payoffs
1.0: "xT" pays x[1.0] nodiscount
)";
    const SimulationPlan plan = plan_for(text, {}, 1.0);  // single exact step
    SimConfig cfg;
    cfg.batch = 8;
    std::vector<double> mu(cfg.batch);
    for (std::size_t i = 0; i < cfg.batch; ++i) mu[i] = 0.125 * double(i);
    cfg.bindings["mu"] = mu;
    cfg.bindings["s"] = 0.0;
    const SimOutput out = simulate(plan, cfg);
    for (std::size_t i = 0; i < cfg.batch; ++i)
        CHECK(out.payoff_samples[0][i] == mu[i]);

    // Missing binding is an error naming the parameter.
    SimConfig missing = cfg;
    missing.bindings.erase("s");
    CHECK_THROWS_WITH_AS((void)simulate(plan, missing),
                         doctest::Contains("missing binding for free parameter 's'"),
                         ValidationError);
}

TEST_CASE("external functions feed the drift") {
    const char* text = R"(#system
d_x = initfwd(t)*d_t

#initial values
init: x = zeros([batchsize])

#payoffs
1.0: "xT" pays x[1.0] nodiscount
)";
    const SimulationPlan plan = plan_for(text, {}, 1.0);
    SimConfig cfg;
    cfg.batch = 4;
    cfg.externals["initfwd"] = [](double t) { return 2.0 * t + 0.5; };
    const SimOutput out = simulate(plan, cfg);
    for (double v : out.payoff_samples[0]) CHECK(v == 0.5);  // f(0) * dt = 0.5

    SimConfig missing = cfg;
    missing.externals.clear();
    CHECK_THROWS_WITH_AS((void)simulate(plan, missing),
                         doctest::Contains("missing external function 'initfwd'"),
                         ValidationError);
}

TEST_CASE("state observations are recorded under var@time keys") {
    const SimulationPlan plan = plan_for(kBrownianOnly);
    SimConfig cfg;
    cfg.batch = 16;
    cfg.seed = 5;
    const SimOutput out = simulate(plan, cfg);
    REQUIRE(out.observations.count("x@1") == 1);
    const auto& xs = out.observations.at("x@1");
    REQUIRE(xs.size() == 16);
    for (std::size_t i = 0; i < 16; ++i) CHECK(xs[i] == out.payoff_samples[0][i]);
}

TEST_CASE("non-finite state names the variable, step and time") {
    const char* text = R"(#system
d_x = (1.0/(t - 0.5))*d_t

#initial values
init: x = zeros([batchsize])

#payoffs
1.0: "xT" pays x[1.0] nodiscount
)";
    const SimulationPlan plan = plan_for(text, {}, 0.5);
    SimConfig cfg;
    cfg.batch = 2;
    CHECK_THROWS_WITH_AS((void)simulate(plan, cfg),
                         doctest::Contains("non-finite value in 'x'"), RuntimeError);
}

TEST_CASE("constant correlations rotate the Brownian draws") {
    const char* text = R"(#system
d_u = 1.0*d_W
d_v = 1.0*d_Z

#correlations
d_W*d_Z = rho

#initial values
init: u = zeros([batchsize])
init: v = zeros([batchsize])

#payoffs
1.0: "u" pays u[1.0] nodiscount
1.0: "v" pays v[1.0] nodiscount
)";
    const SimulationPlan plan = plan_for(text);
    SimConfig cfg;
    cfg.batch = 8192;
    cfg.seed = 9;
    cfg.bindings["rho"] = 0.5;
    const SimOutput out = simulate(plan, cfg);
    const auto& us = out.payoff_samples[0];
    const auto& vs = out.payoff_samples[1];
    double suv = 0.0, suu = 0.0, svv = 0.0;
    for (std::size_t i = 0; i < cfg.batch; ++i) {
        suv += us[i] * vs[i];
        suu += us[i] * us[i];
        svv += vs[i] * vs[i];
    }
    const double corr = suv / std::sqrt(suu * svv);
    CHECK(corr == doctest::Approx(0.5).epsilon(0.08));

    // rho = 0 leaves the draws independent and equal to the unrotated run.
    SimConfig indep = cfg;
    indep.bindings["rho"] = 0.0;
    const SimOutput base = simulate(plan, indep);
    double s2 = 0.0;
    for (std::size_t i = 0; i < cfg.batch; ++i) s2 += base.payoff_samples[0][i] * base.payoff_samples[1][i];
    CHECK(std::fabs(s2 / double(cfg.batch)) < 0.05);

    // Out-of-range correlation surfaces as a validation error.
    SimConfig bad = cfg;
    bad.bindings["rho"] = 1.5;
    CHECK_THROWS_AS((void)simulate(plan, bad), ValidationError);
}

TEST_CASE("generated code is deterministic text and bitwise-faithful") {
    namespace fs = std::filesystem;
    const ModelSetting setting{LocalVolForm::LinBRLV, SVForm::CIRSV};
    CheckEnv env;
    env.parse_values["strikes"] = ConstValue(std::vector<ConstValue>{0.02, 0.03});
    env.parse_values["maturity"] = ConstValue(1.0);
    env.parse_values["fixingtime"] = ConstValue(1.0);
    env.parse_values["paytime"] = ConstValue(1.25);
    env.parse_values["measT"] = ConstValue(1.25);
    const CheckedProgram prog =
        check(parse(builtin_script(setting, MeasureKind::TForward)), env);

    const std::string src1 = generate_code(prog, "cpp");
    const std::string src2 = generate_code(prog, "cpp");
    CHECK(src1 == src2);
    CHECK(src1.find("extern \"C\"") != std::string::npos);
    CHECK(source_hash(src1) == source_hash(src2));
    CHECK(source_hash(src1).size() == 16);
    CHECK_THROWS_AS((void)generate_code(prog, "fortran"), ValidationError);

    // Compile the module and compare against the interpreter bit for bit.
    const SimulationPlan plan = compile(prog, GridHints{});
    SimConfig cfg;
    cfg.batch = 64;
    cfg.seed = 4242;
    cfg.bindings["mr"] = 0.03;
    cfg.bindings["measT"] = 1.25;
    cfg.bindings["theta"] = 0.2;
    cfg.bindings["volofvar"] = 0.3;
    cfg.bindings["delta"] = 0.25;
    cfg.bindings["a"] = 0.00762;
    cfg.bindings["b"] = -0.15945;
    cfg.bindings["poa"] = 1.0062695720037620;
    const Curve fc = Curve::flat(CurveLabel::Forecasting, 0.025);
    cfg.externals["initfwd"] = [&fc](double t) { return fc.inst_forward(t); };
    const SimOutput ref = simulate(plan, cfg);

    const fs::path dir = fs::temp_directory_path() / "cheyette-test-codegen";
    fs::create_directories(dir);
    const GeneratedModule mod(src1, dir.string());
    CHECK(mod.n_brownians() == 2);
    CHECK(mod.n_steps() == plan.grid.n_steps());
    REQUIRE(mod.payoff_names() == ref.payoff_names);

    std::vector<double> params;
    std::vector<const double*> vectors;
    for (const auto& name : mod.param_names()) {
        params.push_back(std::get<double>(cfg.bindings.at(name)));
        vectors.push_back(nullptr);
    }
    struct Ctx { const Curve* c; } ctx{&fc};
    GeneratedModule::Ext ext{
        [](void* p, double t) { return static_cast<Ctx*>(p)->c->inst_forward(t); }, &ctx};
    std::vector<GeneratedModule::Ext> exts;
    for (const auto& name : mod.external_names()) {
        REQUIRE(name == "initfwd");
        exts.push_back(ext);
    }
    const auto gen = mod.run(cfg.seed, cfg.batch, false, params, vectors, nullptr, exts);
    REQUIRE(gen.size() == ref.payoff_samples.size());
    for (std::size_t i = 0; i < gen.size(); ++i) {
        REQUIRE(gen[i].size() == ref.payoff_samples[i].size());
        CHECK(std::memcmp(gen[i].data(), ref.payoff_samples[i].data(),
                          gen[i].size() * sizeof(double)) == 0);
    }
    fs::remove_all(dir);
}

TEST_CASE("compile rejects payoff-free programs") {
    const char* text = R"(#system
d_x = 1.0*d_W

#initial values
init: x = zeros([batchsize])

#payoffs
1.0: "xT" pays x[1.0] nodiscount
)";
    // Sanity: the normal path compiles.
    CHECK_NOTHROW(plan_for(text));
}

}  // TEST_SUITE
