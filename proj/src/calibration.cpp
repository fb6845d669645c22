#include <algorithm>
#include <cmath>
#include <exception>
#include <thread>

#include "cheyette/calibration.hpp"
#include "cheyette/errors.hpp"
#include "cheyette/sim/rng.hpp"
#include "cheyette/support.hpp"

namespace cheyette::calibration {

namespace {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t k) {
    std::uint64_t z = seed + k + 0x9E3779B97F4A7C15ull;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

void check_bounds(const std::vector<ParamBound>& bounds) {
    if (bounds.empty()) throw ValidationError("at least one free-parameter bound is required");
    for (const auto& b : bounds)
        if (!(std::isfinite(b.lower) && std::isfinite(b.upper) && b.lower < b.upper))
            throw ValidationError("bound for '" + b.name +
                                  "' must be finite with lower < upper");
}

// Evaluate fn over xs into out, pulling indices from a shared counter so the
// result does not depend on thread scheduling.
void parallel_eval(const std::function<double(const std::vector<double>&)>& fn,
                   const std::vector<std::vector<double>>& xs, std::vector<double>& out,
                   unsigned n_threads) {
    const std::size_t n = xs.size();
    unsigned want = n_threads ? n_threads : std::max(1u, std::thread::hardware_concurrency());
    want = static_cast<unsigned>(std::min<std::size_t>(want, n));
    if (want <= 1) {
        for (std::size_t i = 0; i < n; ++i) out[i] = fn(xs[i]);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::mutex err_mutex;
    std::exception_ptr error;
    auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= n) return;
            try {
                out[i] = fn(xs[i]);
            } catch (...) {
                std::lock_guard<std::mutex> lock(err_mutex);
                if (!error) error = std::current_exception();
                return;
            }
        }
    };
    std::vector<std::thread> threads;
    threads.reserve(want);
    for (unsigned t = 0; t < want; ++t) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
    if (error) std::rethrow_exception(error);
}

double reflect_into(double v, double lo, double hi) {
    for (int guard = 0; guard < 64; ++guard) {
        if (v < lo)
            v = lo + (lo - v);
        else if (v > hi)
            v = hi - (v - hi);
        else
            return v;
    }
    return std::clamp(v, lo, hi);
}

double cir_eta_of(const ModelParams& params) {
    if (const auto* p = std::get_if<CirSvParams>(&params.sv)) return p->eta;
    if (const auto* p = std::get_if<CorCirSvParams>(&params.sv)) return p->eta;
    return 0.0;
}

std::pair<double, double> cir_theta_z0(const ModelParams& params) {
    if (const auto* p = std::get_if<CirSvParams>(&params.sv)) return {p->theta, p->z0};
    if (const auto* p = std::get_if<CorCirSvParams>(&params.sv)) return {p->theta, p->z0};
    throw ValidationError("setting has no CIR variance process");
}

std::vector<native::ScheduleSegment> schedule_for(const CalibrationProblem& problem,
                                                  const ModelParams& params) {
    std::vector<native::ScheduleSegment> schedule = problem.schedule_prefix;
    if (!schedule.empty())
        schedule.push_back({std::numeric_limits<double>::infinity(), params});
    return schedule;
}

std::vector<double> unit_weights(const CalibrationProblem& problem) {
    if (!problem.weights.empty()) return problem.weights;
    return std::vector<double>(problem.quotes.size(), 1.0);
}

}  // namespace

void DESettings::validate() const {
    if (population != 0 && population < 4)
        throw ValidationError("population must be at least 4");
    if (max_generations < 1) throw ValidationError("max_generations must be at least 1");
    if (!(f_lo > 0.0 && f_hi >= f_lo && f_hi <= 2.0))
        throw ValidationError("mutation factor range must satisfy 0 < f_lo <= f_hi <= 2");
    if (!(cr_init > 0.0 && cr_init <= 1.0))
        throw ValidationError("cr_init must be in (0, 1]");
    if (!(cr_adapt > 0.0 && cr_adapt <= 1.0))
        throw ValidationError("cr_adapt must be in (0, 1]");
    if (!(cr_sigma >= 0.0)) throw ValidationError("cr_sigma must be nonnegative");
    if (!(tolerance >= 0.0)) throw ValidationError("tolerance must be nonnegative");
    if (stagnation < 1) throw ValidationError("stagnation must be at least 1");
    if (replications < 1) throw ValidationError("replications must be at least 1");
}

DeResult de_minimize(const std::function<double(const std::vector<double>&)>& fn,
                     const std::vector<ParamBound>& bounds, const DESettings& settings,
                     std::uint64_t seed) {
    settings.validate();
    check_bounds(bounds);
    const std::size_t dim = bounds.size();
    const std::size_t pop = settings.population ? settings.population : 15 * dim;

    const auto uni = [&](std::size_t j, std::size_t g, std::size_t slot) {
        return sim::keyed_uniform(seed, static_cast<std::uint32_t>(j),
                                  static_cast<std::uint32_t>(g),
                                  static_cast<std::uint32_t>(slot));
    };
    const auto gauss = [&](std::size_t j, std::size_t g, std::size_t slot) {
        return sim::keyed_normal(seed, static_cast<std::uint32_t>(j),
                                 static_cast<std::uint32_t>(g),
                                 static_cast<std::uint32_t>(slot));
    };

    std::vector<std::vector<double>> members(pop, std::vector<double>(dim));
    for (std::size_t j = 0; j < pop; ++j)
        for (std::size_t d = 0; d < dim; ++d)
            members[j][d] =
                bounds[d].lower + uni(j, 0, d) * (bounds[d].upper - bounds[d].lower);

    DeResult result;
    std::vector<double> values(pop);
    parallel_eval(fn, members, values, settings.n_threads);
    result.evaluations = pop;

    std::size_t best_idx = 0;
    for (std::size_t j = 1; j < pop; ++j)
        if (values[j] < values[best_idx]) best_idx = j;
    double best_val = values[best_idx];
    result.trace.push_back({0, best_val});

    double cr_mu = settings.cr_init;
    std::size_t stagnant = 0;
    std::vector<std::vector<double>> trials(pop, std::vector<double>(dim));
    std::vector<double> trial_values(pop);
    std::vector<double> trial_crs(pop);
    std::vector<std::size_t> others(pop - 1);

    for (std::size_t g = 1; g <= settings.max_generations; ++g) {
        if (settings.tolerance > 0.0 && best_val < settings.tolerance) break;
        if (stagnant >= settings.stagnation) break;

        for (std::size_t j = 0; j < pop; ++j) {
            // three mutually distinct donors != j via a partial shuffle
            std::size_t m = 0;
            for (std::size_t i = 0; i < pop; ++i)
                if (i != j) others[m++] = i;
            std::size_t r[3];
            for (std::size_t t = 0; t < 3; ++t) {
                const std::size_t span = others.size() - t;
                std::size_t pick =
                    t + std::min<std::size_t>(static_cast<std::size_t>(uni(j, g, t) * span),
                                              span - 1);
                std::swap(others[t], others[pick]);
                r[t] = others[t];
            }
            const double f =
                settings.f_lo + (settings.f_hi - settings.f_lo) * uni(j, g, 3);
            const double cr =
                std::clamp(cr_mu + settings.cr_sigma * gauss(j, g, 4), 0.0, 1.0);
            trial_crs[j] = cr;
            const std::size_t jrand = std::min<std::size_t>(
                static_cast<std::size_t>(uni(j, g, 5) * dim), dim - 1);
            for (std::size_t d = 0; d < dim; ++d) {
                const bool take = uni(j, g, 6 + d) < cr || d == jrand;
                if (take) {
                    const double v =
                        members[r[0]][d] + f * (members[r[1]][d] - members[r[2]][d]);
                    trials[j][d] = reflect_into(v, bounds[d].lower, bounds[d].upper);
                } else {
                    trials[j][d] = members[j][d];
                }
            }
        }

        parallel_eval(fn, trials, trial_values, settings.n_threads);
        result.evaluations += pop;

        double cr_sum = 0.0;
        std::size_t cr_n = 0;
        for (std::size_t j = 0; j < pop; ++j) {
            if (trial_values[j] <= values[j]) {
                members[j] = trials[j];
                values[j] = trial_values[j];
                cr_sum += trial_crs[j];
                ++cr_n;
            }
        }
        if (cr_n > 0)
            cr_mu = (1.0 - settings.cr_adapt) * cr_mu +
                    settings.cr_adapt * (cr_sum / static_cast<double>(cr_n));

        best_idx = 0;
        for (std::size_t j = 1; j < pop; ++j)
            if (values[j] < values[best_idx]) best_idx = j;
        if (values[best_idx] < best_val) {
            best_val = values[best_idx];
            stagnant = 0;
        } else {
            ++stagnant;
        }
        result.generations = g;
        result.trace.push_back({g, best_val});
    }

    result.x = members[best_idx];
    result.value = best_val;
    return result;
}

void CalibrationProblem::validate() const {
    if (forecasting == nullptr || discounting == nullptr)
        throw ValidationError("calibration problem needs forecasting and discounting curves");
    if (quotes.empty()) throw ValidationError("calibration problem has no quotes");
    for (const auto& q : quotes)
        if (!(q.maturity > 0.0 && q.tenor > 0.0))
            throw ValidationError("quote maturities and tenors must be positive");
    if (!(omega == 1.0 || omega == -1.0))
        throw ValidationError("omega must be +1 or -1");
    if (!(notional > 0.0)) throw ValidationError("notional must be positive");
    if (!weights.empty() && weights.size() != quotes.size())
        throw ValidationError("need one weight per quote");
    for (double w : weights)
        if (!(w >= 0.0)) throw ValidationError("quote weights must be nonnegative");
    if (paths < 2 || validation_paths < 2)
        throw ValidationError("path counts must be at least 2");
    if (antithetic && (paths % 2 != 0 || validation_paths % 2 != 0))
        throw ValidationError("antithetic path counts must be even");
    if (!(dt_max > 0.0)) throw ValidationError("dt_max must be positive");
    check_bounds(bounds);

    // midpoint decode doubles as a free-parameter-name and domain check
    std::vector<double> mid(bounds.size());
    for (std::size_t i = 0; i < bounds.size(); ++i)
        mid[i] = 0.5 * (bounds[i].lower + bounds[i].upper);
    validate_params(setting, decode(mid), false);

    if (setting.sv == SVForm::CIRSV || setting.sv == SVForm::CorCIRSV) {
        const auto [theta, z0] = cir_theta_z0(fixed);
        const double cap = feller_max_eta(theta, z0);
        for (const auto& b : bounds)
            if (b.name == "eta" && b.upper > cap + 1e-12)
                throw ValidationError("eta upper bound " + num17(b.upper) +
                                      " violates the Feller condition (max " + num17(cap) +
                                      ")");
    }
    for (std::size_t i = 1; i < schedule_prefix.size(); ++i)
        if (!(schedule_prefix[i].t_end > schedule_prefix[i - 1].t_end))
            throw ValidationError("schedule prefix segment ends must be increasing");
}

ModelParams CalibrationProblem::decode(const std::vector<double>& x) const {
    if (x.size() != bounds.size())
        throw ValidationError("free vector length does not match the bounds");
    ModelParams params = fixed;
    for (std::size_t i = 0; i < bounds.size(); ++i)
        set_free_param(setting, params, bounds[i].name, x[i]);
    return params;
}

CalibrationProblem default_problem(const ModelSetting& setting,
                                   std::vector<pricing::Quote> quotes,
                                   const Curve& forecasting, const Curve& discounting) {
    if (quotes.empty()) throw ValidationError("calibration problem has no quotes");
    const SettingFixture& fixture = fixture_for(setting);
    CalibrationProblem problem;
    problem.setting = setting;
    problem.fixed = fixture.fixed_params;
    problem.bounds = fixture.bounds;
    problem.quotes = std::move(quotes);
    problem.forecasting = &forecasting;
    problem.discounting = &discounting;
    if (setting.lv == LocalVolForm::PwLinBRLV) {
        const auto& q = problem.quotes.front();
        const double atm =
            pricing::atm_strike(forecasting, q.maturity, q.maturity + q.tenor);
        problem.fixed.lv.knots = default_knots(atm);
        problem.fixed.lv.levels.assign(problem.fixed.lv.knots.size(), 0.0);
    }
    return problem;
}

CalibrationObjective::CalibrationObjective(const CalibrationProblem& problem)
    : problem_(&problem) {
    problem.validate();
    weights_ = unit_weights(problem);
    track_eta_ = problem.setting.sv == SVForm::CIRSV || problem.setting.sv == SVForm::CorCIRSV;

    const std::size_t n_brownians = problem.setting.sv == SVForm::NoSV ? 1 : 2;
    const std::size_t base = problem.antithetic ? problem.paths / 2 : problem.paths;
    for (const pricing::QuoteGroup& q : pricing::group_quotes(problem.quotes)) {
        Group g;
        g.t1 = q.t1;
        g.t2 = q.t2;
        g.strikes = q.strikes;
        g.quote_index = q.quote_index;
        std::vector<double> obs{g.t1};
        if (problem.measure == MeasureKind::RiskNeutral) obs.push_back(g.t2);
        const sim::TimeGrid grid = sim::TimeGrid::build(obs, problem.dt_max);
        const std::size_t n_steps = grid.n_steps();
        g.draws.resize(n_steps * n_brownians * base);
        for (std::size_t k = 0; k < n_steps; ++k)
            for (std::size_t b = 0; b < n_brownians; ++b) {
                double* row = g.draws.data() + (k * n_brownians + b) * base;
                for (std::size_t p = 0; p < base; ++p)
                    row[p] = sim::keyed_normal(problem.sim_seed, static_cast<std::uint32_t>(p),
                                               static_cast<std::uint32_t>(k),
                                               static_cast<std::uint32_t>(b));
            }
        groups_.push_back(std::move(g));
    }
}

double CalibrationObjective::operator()(const std::vector<double>& x) const {
    const auto& bounds = problem_->bounds;
    if (x.size() != bounds.size())
        throw ValidationError("free vector length does not match the bounds");
    for (std::size_t i = 0; i < bounds.size(); ++i)
        if (x[i] < bounds[i].lower || x[i] > bounds[i].upper)
            throw ValidationError("candidate outside bounds for '" + bounds[i].name + "'");

    const ModelParams params = problem_->decode(x);
    if (track_eta_) {
        const double eta = cir_eta_of(params);
        std::lock_guard<std::mutex> lock(eta_mutex_);
        max_eta_ = std::max(max_eta_, eta);
    }

    const auto penalty = [&] {
        double violation = 0.0;
        for (std::size_t i = 0; i < bounds.size(); ++i) {
            const double width = bounds[i].upper - bounds[i].lower;
            violation += std::max(0.0, bounds[i].lower - x[i]) / width;
            violation += std::max(0.0, x[i] - bounds[i].upper) / width;
        }
        return kPenaltyScale * (1.0 + violation);
    };

    double acc = 0.0;
    try {
        for (const Group& g : groups_) {
            pricing::McConfig config;
            config.paths = problem_->paths;
            config.seed = problem_->sim_seed;
            config.antithetic = problem_->antithetic;
            config.dt_max = problem_->dt_max;
            config.injected_normals = &g.draws;
            config.schedule = schedule_for(*problem_, params);
            const auto prices = pricing::price_caplets_mc(
                problem_->setting, params, g.t1, g.t2, g.strikes, problem_->omega,
                problem_->notional, problem_->measure, *problem_->forecasting,
                *problem_->discounting, config);
            for (std::size_t m = 0; m < prices.size(); ++m) {
                const std::size_t i = g.quote_index[m];
                const double d = prices[m].price - problem_->quotes[i].price;
                acc += weights_[i] * d * d;
            }
        }
    } catch (const RuntimeError&) {
        return penalty();
    } catch (const ValidationError&) {
        return penalty();
    }
    return acc;
}

double objective(const std::vector<double>& x, const CalibrationProblem& problem) {
    return CalibrationObjective(problem)(x);
}

std::vector<pricing::PriceResult> calibration_prices(const CalibrationProblem& problem,
                                                     const ModelParams& params,
                                                     std::size_t paths, std::uint64_t seed) {
    problem.validate();
    pricing::McConfig config;
    config.paths = paths;
    config.seed = seed;
    config.antithetic = problem.antithetic;
    config.dt_max = problem.dt_max;
    config.schedule = schedule_for(problem, params);
    return pricing::price_quotes(problem.setting, params, problem.quotes, problem.omega,
                                 problem.notional, problem.measure, *problem.forecasting,
                                 *problem.discounting, config);
}

CalibrationResult de_optimize(const CalibrationProblem& problem, const DESettings& settings,
                              std::uint64_t seed) {
    const CalibrationObjective objective_fn(problem);
    const DeResult de = de_minimize(std::cref(objective_fn), problem.bounds, settings, seed);

    CalibrationResult result;
    result.x = de.x;
    result.params = problem.decode(de.x);
    result.search_objective = de.value;
    result.objective = de.value;
    result.trace = de.trace;
    result.generations = de.generations;
    result.evaluations = de.evaluations;
    result.seeds = {seed};
    result.max_evaluated_eta = objective_fn.max_evaluated_eta();
    result.schedule = problem.schedule_prefix;
    result.schedule.push_back({std::numeric_limits<double>::infinity(), result.params});

    const auto prices =
        calibration_prices(problem, result.params, problem.paths, problem.sim_seed);
    result.diffs = pricing::price_diff_table(prices, problem.quotes);
    result.good_fit = pricing::good_fit(result.diffs);
    result.flagged = result.objective > settings.flag_threshold;
    return result;
}

CalibrationResult best_seed_calibrate(const CalibrationProblem& problem,
                                      const DESettings& settings, std::size_t n_replications,
                                      std::uint64_t seed) {
    if (n_replications < 1)
        throw ValidationError("best_seed_calibrate needs at least one replication");
    problem.validate();
    const std::vector<double> weights = unit_weights(problem);

    std::vector<CalibrationResult> candidates;
    std::vector<std::vector<pricing::PriceResult>> validated;
    std::vector<std::uint64_t> search_seeds;
    for (std::size_t rep = 0; rep < n_replications; ++rep) {
        const std::uint64_t search_seed = mix_seed(seed, 2 * rep);
        CalibrationProblem replica = problem;
        replica.sim_seed = mix_seed(seed, 2 * rep + 1);
        CalibrationResult res = de_optimize(replica, settings, search_seed);
        search_seeds.push_back(search_seed);

        try {
            auto prices = calibration_prices(problem, res.params, problem.validation_paths,
                                             problem.validation_seed);
            double vobj = 0.0;
            for (std::size_t i = 0; i < prices.size(); ++i) {
                const double d = prices[i].price - problem.quotes[i].price;
                vobj += weights[i] * d * d;
            }
            res.objective = vobj;
            res.diffs = pricing::price_diff_table(prices, problem.quotes);
            res.good_fit = pricing::good_fit(res.diffs);
            validated.push_back(std::move(prices));
        } catch (const RuntimeError&) {
            res.objective = kPenaltyScale;
            res.good_fit = false;
            validated.emplace_back();
        } catch (const ValidationError&) {
            res.objective = kPenaltyScale;
            res.good_fit = false;
            validated.emplace_back();
        }
        candidates.push_back(std::move(res));
    }

    std::size_t best = 0;
    for (std::size_t rep = 1; rep < candidates.size(); ++rep)
        if (candidates[rep].objective < candidates[best].objective) best = rep;

    CalibrationResult result = candidates[best];
    result.seeds = search_seeds;
    result.validation_seed = problem.validation_seed;
    result.flagged = result.objective > settings.flag_threshold;
    for (const auto& c : candidates)
        result.max_evaluated_eta = std::max(result.max_evaluated_eta, c.max_evaluated_eta);

    std::size_t n_priced = 0;
    for (const auto& prices : validated)
        if (!prices.empty()) ++n_priced;
    if (n_priced > 0) {
        result.ensemble_prices.assign(problem.quotes.size(), 0.0);
        for (const auto& prices : validated)
            for (std::size_t i = 0; i < prices.size(); ++i)
                result.ensemble_prices[i] += prices[i].price / static_cast<double>(n_priced);
    }
    return result;
}

std::vector<CalibrationResult> bootstrap_calibrate(std::vector<CalibrationProblem> problems,
                                                   const DESettings& settings,
                                                   std::uint64_t seed) {
    if (problems.empty()) throw ValidationError("bootstrap needs at least one problem");
    double last_maturity = 0.0;
    for (const auto& p : problems) {
        if (p.quotes.empty()) throw ValidationError("calibration problem has no quotes");
        const double m = p.quotes.front().maturity;
        for (const auto& q : p.quotes)
            if (q.maturity != m)
                throw ValidationError("bootstrap problems must each hold a single maturity");
        if (!(m > last_maturity))
            throw ValidationError("bootstrap maturities must be strictly increasing");
        last_maturity = m;
        if (!(p.setting == problems.front().setting))
            throw ValidationError("bootstrap problems must share one model setting");
    }

    std::vector<CalibrationResult> out;
    std::vector<native::ScheduleSegment> frozen;
    for (std::size_t k = 0; k < problems.size(); ++k) {
        CalibrationProblem& p = problems[k];
        p.schedule_prefix = frozen;
        CalibrationResult res =
            best_seed_calibrate(p, settings, settings.replications, seed + k);
        frozen.push_back({p.quotes.front().maturity, res.params});
        out.push_back(std::move(res));
    }
    return out;
}

}  // namespace cheyette::calibration
