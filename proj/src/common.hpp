#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace projpost {

// Error taxonomy. The CLI maps Config/Shape/Io/Budget to exit code 2 and
// Numeric to exit code 3.
class Error : public std::runtime_error {
public:
    enum class Kind { Config, Shape, Numeric, Io, Budget };

    Error(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    Kind kind() const { return kind_; }

private:
    Kind kind_;
};

struct ConfigError : Error {
    explicit ConfigError(const std::string& w) : Error(Kind::Config, w) {}
};
struct ShapeError : Error {
    explicit ShapeError(const std::string& w) : Error(Kind::Shape, w) {}
};
struct NumericError : Error {
    explicit NumericError(const std::string& w) : Error(Kind::Numeric, w) {}
};
struct IoError : Error {
    explicit IoError(const std::string& w) : Error(Kind::Io, w) {}
};
struct BudgetError : Error {
    explicit BudgetError(const std::string& w) : Error(Kind::Budget, w) {}
};

// Deterministic RNG. mt19937_64 is fully specified by the standard; the
// distributions below are hand-rolled so that a given seed yields the same
// stream on every standard library.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1), 53-bit resolution.
    double uniform() { return double(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Standard normal via Box-Muller; draws come in deterministic pairs.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = 1.0 - uniform();  // (0, 1]
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 2.0 * M_PI * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

    double rademacher() { return (engine_() & 1u) ? 1.0 : -1.0; }

    // Uniform integer in [0, n), rejection-sampled to avoid modulo bias.
    std::uint64_t below(std::uint64_t n) {
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t x;
        do {
            x = engine_();
        } while (x >= limit);
        return x % n;
    }

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

// Compensated (Kahan) summation; keeps reductions order-stable to ~1e-12
// even when the inputs span many magnitudes.
class KahanSum {
public:
    void add(double x) {
        double y = x - c_;
        double t = sum_ + y;
        c_ = (t - sum_) - y;
        sum_ = t;
    }
    double value() const { return sum_; }

private:
    double sum_ = 0.0;
    double c_ = 0.0;
};

}  // namespace projpost
