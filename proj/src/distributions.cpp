#include "qhjb/distributions.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include <boost/math/distributions/normal.hpp>

namespace qhjb {

QuantileDistribution QuantileDistribution::make(std::vector<double> locations) {
    if (locations.empty()) throw std::invalid_argument("quantile distribution needs at least one particle");
    for (double v : locations)
        if (!std::isfinite(v)) throw std::invalid_argument("quantile distribution particles must be finite");
    std::sort(locations.begin(), locations.end());
    return QuantileDistribution(std::move(locations));
}

QuantileDistribution QuantileDistribution::constant(std::size_t n, double value) {
    return make(std::vector<double>(n, value));
}

QuantileDistribution QuantileDistribution::gaussian(std::size_t n, double mean, double stddev) {
    std::vector<double> out;
    out.reserve(n);
    for (double tau : quantile_levels(n)) out.push_back(mean + stddev * normal_quantile(tau));
    return make(std::move(out));
}

double QuantileDistribution::cdf_at(double z) const {
    const auto count = std::upper_bound(particles_.begin(), particles_.end(), z) - particles_.begin();
    return static_cast<double>(count) / static_cast<double>(particles_.size());
}

double QuantileDistribution::mean() const {
    return std::accumulate(particles_.begin(), particles_.end(), 0.0) /
           static_cast<double>(particles_.size());
}

QuantileDistribution QuantileDistribution::pushforward_affine(double delta, double r, double gamma) const {
    // Slope gamma^delta > 0 keeps the order.
    const double slope = std::pow(gamma, delta);
    const double shift = delta * r;
    std::vector<double> out(particles_.size());
    std::transform(particles_.begin(), particles_.end(), out.begin(),
                   [&](double z) { return shift + slope * z; });
    return QuantileDistribution(std::move(out));
}

WeightedParticleSet::WeightedParticleSet(std::vector<WeightedParticle> entries)
    : entries_(std::move(entries)) {
    double total = 0.0;
    for (const auto& e : entries_) {
        if (!(e.weight >= 0.0)) throw std::invalid_argument("particle weights must be non-negative");
        if (!std::isfinite(e.location)) throw std::invalid_argument("particle locations must be finite");
        total += e.weight;
    }
    if (!entries_.empty() && std::abs(total - 1.0) > kMassTolerance)
        throw std::invalid_argument("particle weights must sum to one");
}

WeightedParticleSet WeightedParticleSet::uniform(const QuantileDistribution& q) {
    const double w = 1.0 / static_cast<double>(q.size());
    std::vector<WeightedParticle> entries;
    entries.reserve(q.size());
    for (double z : q.particles()) entries.push_back({w, z});
    return WeightedParticleSet(std::move(entries));
}

double WeightedParticleSet::total_mass() const {
    double total = 0.0;
    for (const auto& e : entries_) total += e.weight;
    return total;
}

double WeightedParticleSet::mean() const {
    double m = 0.0;
    for (const auto& e : entries_) m += e.weight * e.location;
    return m;
}

WeightedParticleSet mixture(std::span<const MixtureComponent> components) {
    double total = 0.0;
    std::size_t count = 0;
    for (const auto& c : components) {
        if (!(c.weight >= 0.0)) throw std::invalid_argument("mixture weights must be non-negative");
        total += c.weight;
        count += c.dist.size();
    }
    if (std::abs(total - 1.0) > kMassTolerance) throw std::invalid_argument("mixture weights must sum to one");

    std::vector<WeightedParticle> entries;
    entries.reserve(count);
    for (const auto& c : components) {
        const double w = c.weight / static_cast<double>(c.dist.size());
        for (double z : c.dist.particles()) entries.push_back({w, z});
    }
    return WeightedParticleSet(std::move(entries));
}

QuantileDistribution extract_quantiles(const WeightedParticleSet& set, std::size_t n) {
    if (set.empty()) throw std::invalid_argument("cannot extract quantiles of an empty particle set");
    if (n == 0) throw std::invalid_argument("quantile count must be positive");

    std::vector<WeightedParticle> sorted(set.entries().begin(), set.entries().end());
    std::stable_sort(sorted.begin(), sorted.end(),
                     [](const WeightedParticle& a, const WeightedParticle& b) { return a.location < b.location; });

    // Absorbs summation round-off so a level sitting exactly on a CDF step is
    // assigned to that step.
    constexpr double kLevelSlack = 1e-12;
    std::vector<double> out;
    out.reserve(n);
    double cumulative = 0.0;
    std::size_t idx = 0;
    for (double tau : quantile_levels(n)) {
        while (idx < sorted.size() && cumulative + sorted[idx].weight < tau - kLevelSlack) {
            cumulative += sorted[idx].weight;
            ++idx;
        }
        out.push_back(sorted[std::min(idx, sorted.size() - 1)].location);
    }
    return QuantileDistribution::make(std::move(out));
}

std::vector<double> quantile_levels(std::size_t n) {
    std::vector<double> levels(n);
    for (std::size_t k = 0; k < n; ++k)
        levels[k] = (2.0 * static_cast<double>(k) + 1.0) / (2.0 * static_cast<double>(n));
    return levels;
}

double normal_quantile(double p) {
    static const boost::math::normal_distribution<double> standard;
    return boost::math::quantile(standard, p);
}

}  // namespace qhjb
