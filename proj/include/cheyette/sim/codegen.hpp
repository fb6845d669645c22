#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cheyette/script/check.hpp"
#include "cheyette/sim/engine.hpp"

namespace cheyette::sim {

// Emits a self-contained C++ source module implementing the same plan as
// compile+simulate: one straight-line path loop, embedded RNG, embedded time
// grid. Deterministic: identical inputs give byte-identical text.
// Only the "cpp" backend profile is supported.
std::string generate_code(const script::CheckedProgram& program, const std::string& profile,
                          const GridHints& hints = {});

// FNV-1a 64-bit hash of a source text, as fixed-width hex.
std::string source_hash(const std::string& source);

// Manifest JSON: program hash, backend profile, generation timestamp.
std::string codegen_manifest(const std::string& source, const std::string& profile);

// Compiles generated source to a shared object and loads its entry points.
// Compiler from CHEY_CXX (default "c++"), flags -O2 -std=c++20
// -ffp-contract=off -fPIC -shared. Used by the verification path and tests.
class GeneratedModule {
public:
    GeneratedModule(const std::string& source, const std::string& workdir);
    ~GeneratedModule();
    GeneratedModule(const GeneratedModule&) = delete;
    GeneratedModule& operator=(const GeneratedModule&) = delete;

    struct Ext {
        double (*fn)(void* ctx, double x);
        void* ctx;
    };

    std::vector<std::string> payoff_names() const;
    std::vector<std::string> param_names() const;
    std::vector<std::string> external_names() const;
    std::size_t n_steps() const;
    std::size_t n_brownians() const;

    // params in param_names() order; param_vectors entries may be null
    // (scalar binding) or point at batch doubles; externals in
    // external_names() order. Returns samples payoff-major.
    std::vector<std::vector<double>> run(std::uint64_t seed, std::size_t batch,
                                         bool antithetic, const std::vector<double>& params,
                                         const std::vector<const double*>& param_vectors,
                                         const std::vector<double>* injected,
                                         const std::vector<Ext>& externals) const;

private:
    void* handle_ = nullptr;
    std::uint64_t (*n_payoffs_)() = nullptr;
    const char* (*payoff_name_)(std::uint64_t) = nullptr;
    std::uint64_t (*n_params_)() = nullptr;
    const char* (*param_name_)(std::uint64_t) = nullptr;
    std::uint64_t (*n_externals_)() = nullptr;
    const char* (*external_name_)(std::uint64_t) = nullptr;
    std::uint64_t (*n_steps_)() = nullptr;
    std::uint64_t (*n_brownians_)() = nullptr;
    int (*simulate_)(std::uint64_t, std::uint64_t, int, const double*, const double* const*,
                     const double*, const void*, double*, char*, std::uint64_t) = nullptr;
};

}  // namespace cheyette::sim
