#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace qhjb {

/// N equally weighted return particles, kept sorted ascending.
class QuantileDistribution {
public:
    QuantileDistribution() = default;

    /// Sorts a copy of `locations`. Throws on empty or non-finite input.
    static QuantileDistribution make(std::vector<double> locations);

    /// N copies of `value`.
    static QuantileDistribution constant(std::size_t n, double value);

    /// Midpoint-level quantiles mean + stddev * z(tau_k) of a Gaussian.
    static QuantileDistribution gaussian(std::size_t n, double mean, double stddev);

    std::size_t size() const { return particles_.size(); }
    double operator[](std::size_t k) const { return particles_[k]; }
    std::span<const double> particles() const { return particles_; }

    double cdf_at(double z) const;
    double mean() const;

    /// z -> delta * r + gamma^delta * z applied to every particle.
    QuantileDistribution pushforward_affine(double delta, double r, double gamma) const;

    friend bool operator==(const QuantileDistribution&, const QuantileDistribution&) = default;

private:
    explicit QuantileDistribution(std::vector<double> sorted) : particles_(std::move(sorted)) {}

    std::vector<double> particles_;
};

struct WeightedParticle {
    double weight = 0.0;
    double location = 0.0;
};

/// Finite mixture of Dirac masses with weights summing to one.
class WeightedParticleSet {
public:
    WeightedParticleSet() = default;
    /// Validates weights (non-negative, sum 1 within 1e-9).
    explicit WeightedParticleSet(std::vector<WeightedParticle> entries);

    /// Equal weights 1/N at each particle of `q`.
    static WeightedParticleSet uniform(const QuantileDistribution& q);

    std::span<const WeightedParticle> entries() const { return entries_; }
    std::size_t size() const { return entries_.size(); }
    bool empty() const { return entries_.empty(); }
    double total_mass() const;
    double mean() const;

private:
    std::vector<WeightedParticle> entries_;
};

struct MixtureComponent {
    double weight = 0.0;
    QuantileDistribution dist;
};

/// Mass p_y / N at each particle of each component.
WeightedParticleSet mixture(std::span<const MixtureComponent> components);

/// Generalized inverse CDF inf{z : F(z) >= tau_k} at midpoint levels.
QuantileDistribution extract_quantiles(const WeightedParticleSet& set, std::size_t n);

/// tau_k = (2k - 1) / (2N), k = 1..N.
std::vector<double> quantile_levels(std::size_t n);

/// Standard normal quantile function.
double normal_quantile(double p);

/// Weight tolerance shared by every probability-vector check.
inline constexpr double kMassTolerance = 1e-9;

}  // namespace qhjb
