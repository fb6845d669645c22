#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <limits>
#include <mutex>
#include <string>
#include <vector>

#include "cheyette/curves.hpp"
#include "cheyette/models.hpp"
#include "cheyette/native.hpp"
#include "cheyette/pricing.hpp"
#include "cheyette/sim/grid.hpp"

namespace cheyette::calibration {

/// Differential-evolution knobs: DE/rand/1/bin with per-mutant F drawn
/// uniformly from [f_lo, f_hi] and a crossover rate adapted per generation
/// from the success history (mean cr_mu, sampled N(cr_mu, cr_sigma)).
struct DESettings {
    std::size_t population = 0;  // 0: 15 per free dimension
    std::size_t max_generations = 500;
    double f_lo = 0.4;
    double f_hi = 0.9;
    double cr_init = 0.5;
    double cr_sigma = 0.1;
    double cr_adapt = 0.1;   // blend weight of the per-generation success mean
    double tolerance = 0.0;  // stop once best < tolerance (0 disables)
    std::size_t stagnation = 60;  // stop after this many generations without improvement
    std::size_t replications = 3;  // best-seed replication count
    double flag_threshold = std::numeric_limits<double>::infinity();
    unsigned n_threads = 0;  // 0: hardware concurrency

    void validate() const;
};

struct TracePoint {
    std::size_t generation;
    double best;
};

struct DeResult {
    std::vector<double> x;
    double value = std::numeric_limits<double>::infinity();
    std::vector<TracePoint> trace;
    std::size_t generations = 0;
    std::size_t evaluations = 0;
};

/// Minimize fn over the box. fn must be pure and thread-safe: population
/// members are evaluated concurrently, and all optimizer randomness is keyed
/// by (seed, candidate, generation) so the result is independent of
/// scheduling. Bound violations are repaired by reflection into the box;
/// selection is elitist, so the best objective is non-increasing.
DeResult de_minimize(const std::function<double(const std::vector<double>&)>& fn,
                     const std::vector<ParamBound>& bounds, const DESettings& settings,
                     std::uint64_t seed);

/// Objective value returned when a candidate's simulation fails.
inline constexpr double kPenaltyScale = 1e10;

struct CalibrationProblem {
    ModelSetting setting;
    ModelParams fixed;                // free entries are overwritten by the search
    std::vector<ParamBound> bounds;   // ordered free-parameter boxes
    std::vector<pricing::Quote> quotes;
    std::vector<double> weights;      // empty: unit weights
    double notional = 1.0;
    double omega = 1.0;               // +1 caplets, -1 floorlets
    MeasureKind measure = MeasureKind::TForward;
    const Curve* forecasting = nullptr;
    const Curve* discounting = nullptr;
    std::size_t paths = std::size_t{1} << 16;
    std::size_t validation_paths = std::size_t{1} << 18;
    bool antithetic = true;
    double dt_max = sim::kDefaultDtMax;
    std::uint64_t sim_seed = 104729;         // CRN seed shared by all objective evaluations
    std::uint64_t validation_seed = 224737;  // fresh seed for the validation repricing
    std::vector<native::ScheduleSegment> schedule_prefix;  // bootstrap: frozen segments

    /// Bounds finite with lower < upper; for CIR settings the eta upper bound
    /// must respect feller_max_eta(theta, z0); curves and quotes present.
    void validate() const;

    /// fixed params with the free vector written in bounds order.
    ModelParams decode(const std::vector<double>& x) const;
};

/// Problem preloaded with the shipped fixed parameters and bounds for the
/// setting. PwLinBRLV knots are resolved around the ATM strike of the first
/// quote. Curves must outlive the problem.
CalibrationProblem default_problem(const ModelSetting& setting,
                                   std::vector<pricing::Quote> quotes,
                                   const Curve& forecasting, const Curve& discounting);

struct CalibrationResult {
    ModelParams params;
    std::vector<double> x;  // free vector in bounds order
    double objective = std::numeric_limits<double>::infinity();  // validated when available
    double search_objective = std::numeric_limits<double>::infinity();
    std::vector<pricing::DiffRow> diffs;
    bool good_fit = false;
    std::vector<TracePoint> trace;
    std::vector<std::uint64_t> seeds;  // search seed per replication
    std::uint64_t validation_seed = 0;
    std::size_t generations = 0;
    std::size_t evaluations = 0;
    double max_evaluated_eta = 0.0;  // CIR settings: largest eta ever evaluated
    std::vector<double> ensemble_prices;  // validated prices averaged over replications
    std::vector<native::ScheduleSegment> schedule;  // frozen prefix + this segment
    bool flagged = false;  // objective stayed above DESettings::flag_threshold
};

/// Deterministic shared-path objective with common random numbers: the
/// normal draws for every (maturity, tenor) group are materialized once from
/// problem.sim_seed and injected into each evaluation, so re-evaluating a
/// candidate returns bitwise the same value. Thread-safe.
class CalibrationObjective {
  public:
    explicit CalibrationObjective(const CalibrationProblem& problem);

    /// Sum_i w_i (model_i - market_i)^2; candidates outside the box are
    /// rejected; simulation failure yields the documented penalty.
    double operator()(const std::vector<double>& x) const;

    double max_evaluated_eta() const { return max_eta_; }

  private:
    struct Group {
        double t1 = 0.0;
        double t2 = 0.0;
        std::vector<double> strikes;
        std::vector<std::size_t> quote_index;
        std::vector<double> draws;  // engine layout (step, brownian, path)
    };

    const CalibrationProblem* problem_;
    std::vector<Group> groups_;
    std::vector<double> weights_;
    bool track_eta_ = false;
    mutable std::mutex eta_mutex_;
    mutable double max_eta_ = 0.0;
};

/// One-shot objective evaluation (builds the CRN draw buffers each call).
double objective(const std::vector<double>& x, const CalibrationProblem& problem);

/// Model prices aligned with problem.quotes: one shared-path simulation per
/// (maturity, tenor) group at the given path count and seed. Also the
/// synthetic-market generator: quotes priced this way at the problem's own
/// sim seed and path count make the CRN objective exactly zero at params.
std::vector<pricing::PriceResult> calibration_prices(const CalibrationProblem& problem,
                                                     const ModelParams& params,
                                                     std::size_t paths, std::uint64_t seed);

/// Single DE run at one search seed; result carries the search objective and
/// a diff table repriced with the search-side CRN paths.
CalibrationResult de_optimize(const CalibrationProblem& problem, const DESettings& settings,
                              std::uint64_t seed);

/// Best-seed approach: n_replications DE runs at distinct (search, CRN)
/// seeds, each winner repriced with a high-path validation simulation at the
/// problem's fresh validation seed; the best validated candidate is returned
/// and ensemble_prices carries the replication-averaged validated prices.
CalibrationResult best_seed_calibrate(const CalibrationProblem& problem,
                                      const DESettings& settings, std::size_t n_replications,
                                      std::uint64_t seed = 20260814);

/// Sequential multi-maturity bootstrap: problem k is calibrated with
/// segments 1..k-1 frozen at their calibrated values, simulating the
/// piecewise-constant schedule. A segment whose validated objective stays
/// above flag_threshold is flagged but does not abort later segments.
std::vector<CalibrationResult> bootstrap_calibrate(std::vector<CalibrationProblem> problems,
                                                   const DESettings& settings,
                                                   std::uint64_t seed = 20260814);

}  // namespace cheyette::calibration
